"""Experiment reports: canonical, reproducible, verifiable.

Reports serialize to canonical JSON (byte-identical round trips), carry
aggregates recomputed from their own rows, and hash to a digest that skips
wall-time fields, so two runs with the same seed compare equal.
"""

import numpy as np

from advfilter import (
    Config,
    LinearColorProbe,
    ensure_corpus,
    from_json_text,
    load_cifar10,
    report_digest,
    verify_aggregates,
)
from advfilter.harness import run_attack_eval

# a tiny analytic model keeps this demo fast: logits are linear in the
# image's mean color, and class prototypes make it usefully accurate
train_set, _, test_set = load_cifar10(ensure_corpus())
protos = np.stack([
    train_set.float_images(np.flatnonzero(train_set.labels == c)[:50])
    .mean(axis=(0, 1, 2)) for c in range(10)
])
centered = protos - protos.mean(axis=0)
centered -= centered.mean(axis=1, keepdims=True)  # ignore gray background shifts
model = LinearColorProbe(class_count=10, input_shape=(32, 32),
                         weight=centered * 40.0, bias=np.zeros(10))
config = Config({"attack.kind": "filter", "attack.iterations": 20,
                 "attack.epsilon": 8.0, "attack.pieces": 16,
                 "eval.limit": 40})

report = run_attack_eval(model, test_set, config, seed=11)
print("kind:", report.kind)
print("columns:", report.columns)
print("rows:", len(report.rows))
for key, agg in report.aggregates.items():
    print(f"aggregate[{key}]: {agg}")

print("\naggregates recomputed from rows match:", verify_aggregates(report))

text = report.to_json_text()
print("canonical JSON round trip is byte-identical:",
      from_json_text(text).to_json_text() == text)

again = run_attack_eval(model, test_set, config, seed=11)
print("same seed, same digest:",
      report_digest(report) == report_digest(again))
print("digest:", report_digest(report)[:16], "...")
