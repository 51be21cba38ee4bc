"""Adversarial training: regenerating attacks against the live model.

Every minibatch is replaced by adversarial examples generated against the
current parameters before the gradient step. The run below uses small
budgets so it finishes in a few minutes; robustness gains scale with
training size.
"""

import numpy as np

from advfilter import (
    AttackConfig,
    TinyCNN,
    TrainConfig,
    accuracy,
    adversarial_train,
    attack_summary,
    ensure_corpus,
    epsilon_k_sweep,
    load_cifar10,
    robust_accuracy,
    train,
)

train_set, val_set, test_set = load_cifar10(ensure_corpus())
subset = train_set.subset(np.arange(4000))
hyper = TrainConfig(epochs=5, seed=0)

# a fast inner attack: few steps, bigger step size
inner = AttackConfig(iterations=5, step_size=1.0, pieces=64, epsilon=8.0,
                     quantize_output=False)
print("inner attack:", attack_summary(inner))

print("\ntraining a plain model ...")
plain = TinyCNN(class_count=10, input_shape=(32, 32), seed=0)
train(plain, subset, val_set, hyper)

print("adversarially training a second model (minutes) ...")
robust = TinyCNN(class_count=10, input_shape=(32, 32), seed=0)
ckpt = adversarial_train(robust, subset, val_set, inner, hyper)
print("checkpoint notes:", ckpt.meta["adversarial_training"])

eval_attack = AttackConfig(iterations=25, step_size=0.2, pieces=64, epsilon=8.0)
for name, model in (("plain", plain), ("adv-trained", robust)):
    clean = accuracy(model, test_set, limit=1000)
    rob = robust_accuracy(model, test_set, eval_attack, limit=200)
    print(f"{name:12s} clean={clean:.3f}  robust(filter)={rob:.3f}")

print("\nrobustness across attack strength (rows: epsilon, cols: pieces)")
grid = epsilon_k_sweep(robust, test_set, epsilons=[2.0, 8.0],
                       pieces_list=[16, 64],
                       base_config=eval_attack, limit=100)
print(np.round(grid, 3))
