"""Differentiable classifiers: forward logits, exact input gradients, SGD
training, and checkpoint persistence.

Two architectures are provided. TinyCNN is a small conv net for 32x32 RGB
images (two conv/ReLU/max-pool blocks, then a fully connected head), with
forward and reverse passes written directly in numpy (float32 arithmetic,
im2col convolutions). LinearColorProbe is an analytically tractable model
whose logits are an affine map of the per-channel mean intensity; its
closed forms anchor the gradient tests.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "DifferentiableClassifier",
    "TinyCNN",
    "LinearColorProbe",
    "forward",
    "input_gradient",
    "accuracy",
    "TrainConfig",
    "train",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "build_model",
    "params_digest",
]

CKPT_MAGIC = b"AFCKPT1\n"


# ---------------------------------------------------------------------------
# layer primitives (batch, channel, height, width layout)
# ---------------------------------------------------------------------------

def _conv3x3_forward(x, weight, bias):
    """3x3 same-padding convolution. Returns (out, cols) with cols kept for
    the backward pass."""
    b, c, h, w = x.shape
    f = weight.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * 9)
    cols = np.ascontiguousarray(cols)
    out = cols @ weight.reshape(f, -1).T + bias
    return out.reshape(b, h, w, f).transpose(0, 3, 1, 2), cols


def _conv3x3_backward(dout, cols, weight, x_shape, need_input_grad):
    b, c, h, w = x_shape
    f = weight.shape[0]
    dmat = dout.transpose(0, 2, 3, 1).reshape(b * h * w, f)
    dweight = (dmat.T @ cols).reshape(weight.shape)
    dbias = dmat.sum(axis=0)
    dx = None
    if need_input_grad:
        dcols = dmat @ weight.reshape(f, -1)  # (B*H*W, C*9)
        dcols = dcols.reshape(b, h, w, c, 3, 3).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((b, c, h + 2, w + 2), dtype=dout.dtype)
        for i in range(3):
            for j in range(3):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j]
        dx = dxp[:, :, 1 : 1 + h, 1 : 1 + w]
    return dx, dweight, dbias


def _pool2_forward(x):
    """2x2 max pool, stride 2. Ties route to the first window element."""
    b, f, h, w = x.shape
    v = x.reshape(b, f, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    v = np.ascontiguousarray(v).reshape(b, f, h // 2, w // 2, 4)
    idx = v.argmax(axis=4)
    out = np.take_along_axis(v, idx[..., None], axis=4)[..., 0]
    return out, idx


def _pool2_backward(dout, idx, h, w):
    b, f, hh, ww = dout.shape
    dv = np.zeros((b, f, hh, ww, 4), dtype=dout.dtype)
    np.put_along_axis(dv, idx[..., None], dout[..., None], axis=4)
    dv = dv.reshape(b, f, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dv).reshape(b, f, h, w)


# ---------------------------------------------------------------------------
# classifiers
# ---------------------------------------------------------------------------

class DifferentiableClassifier:
    """Interface: deterministic forward logits plus exact reverse-mode
    gradients with respect to the input and the parameters."""

    arch: str
    class_count: int
    input_shape: tuple  # (H, W)

    def params(self) -> dict:
        raise NotImplementedError

    def set_params(self, values: dict) -> None:
        own = self.params()
        for name, arr in values.items():
            own[name][...] = arr

    def forward_batch(self, images: np.ndarray) -> np.ndarray:
        """Logits (B, C) for a (B, H, W, 3) float batch in [0, 1]."""
        logits, _ = self._forward_cache(images)
        return logits

    def _forward_cache(self, images: np.ndarray):
        raise NotImplementedError

    def backward_batch(self, cache, grad_logits, need_input_grad=True,
                       need_param_grads=False):
        """VJP through the network. Returns (input_grads, param_grads); the
        input gradient is (B, H, W, 3) float64 in image layout."""
        raise NotImplementedError


class TinyCNN(DifferentiableClassifier):
    """conv3x3(16) - ReLU - pool2 - conv3x3(32) - ReLU - pool2 - fc."""

    arch = "tiny_cnn"

    def __init__(self, class_count=10, input_shape=(32, 32), seed=0,
                 dtype=np.float32):
        # float32 is the working precision; float64 exists so gradient tests
        # can check the backward math without float32 staircase noise
        self.class_count = class_count
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        h, w = self.input_shape
        if h % 4 or w % 4:
            raise ValueError("input sides must be multiples of 4 (two 2x2 pools)")
        self.flat_dim = 32 * (h // 4) * (w // 4)
        rng = np.random.default_rng(seed)
        self.w1 = (rng.standard_normal((16, 3, 3, 3)) * np.sqrt(2.0 / 27)).astype(self.dtype)
        self.b1 = np.zeros(16, dtype=self.dtype)
        self.w2 = (rng.standard_normal((32, 16, 3, 3)) * np.sqrt(2.0 / 144)).astype(self.dtype)
        self.b2 = np.zeros(32, dtype=self.dtype)
        self.wf = (rng.standard_normal((self.flat_dim, class_count))
                   * np.sqrt(1.0 / self.flat_dim)).astype(self.dtype)
        self.bf = np.zeros(class_count, dtype=self.dtype)

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "wf": self.wf, "bf": self.bf}

    def _forward_cache(self, images):
        x = np.asarray(images, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:3] != self.input_shape or x.shape[3] != 3:
            raise ValueError(f"expected (B, {self.input_shape[0]}, "
                             f"{self.input_shape[1]}, 3) input, got {x.shape}")
        # center [0,1] input to [-1,1]; un-centered input destabilizes SGD at
        # the default learning rate
        x = np.ascontiguousarray((x * 2 - 1).transpose(0, 3, 1, 2))

        z1, cols1 = _conv3x3_forward(x, self.w1, self.b1)
        a1 = np.maximum(z1, 0)
        p1, idx1 = _pool2_forward(a1)
        z2, cols2 = _conv3x3_forward(p1, self.w2, self.b2)
        a2 = np.maximum(z2, 0)
        p2, idx2 = _pool2_forward(a2)
        flat = p2.reshape(p2.shape[0], -1)
        logits = flat @ self.wf + self.bf
        cache = (x.shape, cols1, z1, idx1, p1.shape, cols2, z2, idx2, p2.shape, flat)
        return logits, cache

    def backward_batch(self, cache, grad_logits, need_input_grad=True,
                       need_param_grads=False):
        (x_shape, cols1, z1, idx1, p1_shape, cols2, z2, idx2, p2_shape, flat) = cache
        g = np.asarray(grad_logits, dtype=self.dtype)

        dwf = flat.T @ g if need_param_grads else None
        dbf = g.sum(axis=0) if need_param_grads else None
        dflat = g @ self.wf.T
        dp2 = dflat.reshape(p2_shape)

        da2 = _pool2_backward(dp2, idx2, z2.shape[2], z2.shape[3])
        dz2 = da2 * (z2 > 0)
        dp1, dw2, db2 = _conv3x3_backward(dz2, cols2, self.w2, p1_shape, True)

        da1 = _pool2_backward(dp1, idx1, z1.shape[2], z1.shape[3])
        dz1 = da1 * (z1 > 0)
        dx, dw1, db1 = _conv3x3_backward(dz1, cols1, self.w1, x_shape, need_input_grad)

        input_grads = None
        if need_input_grad:
            # chain rule through the 2x-1 input centering
            input_grads = dx.transpose(0, 2, 3, 1).astype(np.float64) * 2.0
        param_grads = None
        if need_param_grads:
            param_grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2,
                           "wf": dwf, "bf": dbf}
        return input_grads, param_grads


class LinearColorProbe(DifferentiableClassifier):
    """logits = W @ mean_rgb(x) + b, exactly; float64 throughout."""

    arch = "linear_color_probe"

    def __init__(self, class_count=3, input_shape=(32, 32), weight=None, bias=None):
        self.class_count = class_count
        self.input_shape = tuple(input_shape)
        self.weight = (np.zeros((class_count, 3)) if weight is None
                       else np.asarray(weight, dtype=np.float64).copy())
        self.bias = (np.zeros(class_count) if bias is None
                     else np.asarray(bias, dtype=np.float64).copy())
        if self.weight.shape != (class_count, 3) or self.bias.shape != (class_count,):
            raise ValueError("weight must be (C, 3) and bias (C,)")

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def _forward_cache(self, images):
        x = np.asarray(images, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:3] != self.input_shape or x.shape[3] != 3:
            raise ValueError(f"expected (B, {self.input_shape[0]}, "
                             f"{self.input_shape[1]}, 3) input, got {x.shape}")
        means = x.mean(axis=(1, 2))  # (B, 3)
        logits = means @ self.weight.T + self.bias
        return logits, means

    def backward_batch(self, cache, grad_logits, need_input_grad=True,
                       need_param_grads=False):
        means = cache
        g = np.asarray(grad_logits, dtype=np.float64)
        param_grads = None
        if need_param_grads:
            param_grads = {"weight": g.T @ means, "bias": g.sum(axis=0)}
        input_grads = None
        if need_input_grad:
            h, w = self.input_shape
            per_channel = g @ self.weight / (h * w)  # (B, 3)
            input_grads = np.broadcast_to(
                per_channel[:, None, None, :], (g.shape[0], h, w, 3)
            ).copy()
        return input_grads, param_grads


# ---------------------------------------------------------------------------
# spec-level operations
# ---------------------------------------------------------------------------

def forward(model: DifferentiableClassifier, image: np.ndarray) -> np.ndarray:
    """Logits (C,) for a single (H, W, 3) image."""
    return np.asarray(model.forward_batch(np.asarray(image)[None])[0])


def input_gradient(model, image, loss_fn, label):
    """Exact gradient of loss_fn(forward(x), label) with respect to x.

    loss_fn maps (logits, label) -> (value, dvalue/dlogits). Returns
    (value, gradient) with the gradient in (H, W, 3) float64 layout.
    """
    logits, cache = model._forward_cache(np.asarray(image)[None])
    value, grad_logits = loss_fn(np.asarray(logits[0], dtype=np.float64), label)
    input_grads, _ = model.backward_batch(cache, np.asarray(grad_logits)[None])
    return value, input_grads[0]


def accuracy(model, dataset, batch_size=500, limit=None) -> float:
    n = len(dataset) if limit is None else min(limit, len(dataset))
    if n == 0:
        raise ValueError("empty dataset")
    hits = 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        logits = model.forward_batch(dataset.float_images(idx))
        hits += int((logits.argmax(axis=1) == dataset.labels[idx]).sum())
    return hits / n


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 30
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 2.0 ** -4
    seed: int = 0


def softmax_ce_batch(logits, labels):
    """Mean cross-entropy over a batch and its logit gradient."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=1, keepdims=True)
    n = z.shape[0]
    rows = np.arange(n)
    value = float(-np.log(np.maximum(p[rows, labels], 1e-300)).mean())
    grad = p
    grad[rows, labels] -= 1.0
    return value, grad / n


def train(model, train_set, val_set, hyper: TrainConfig = None,
          batch_fn=None, epoch_hook=None) -> "Checkpoint":
    """SGD with momentum, weight decay, and a constant learning rate.

    Keeps the parameters of the epoch with the best clean validation
    accuracy. ``batch_fn``, when given, maps (model, images, labels, epoch)
    to the images actually trained on; adversarial training passes the
    per-batch attack here so examples are regenerated against the current
    parameters.
    """
    hyper = hyper or TrainConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(hyper.seed)
    params = model.params()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    best = {"val_accuracy": -1.0, "epoch": -1, "params": None}
    history = []

    n = len(train_set)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            images = train_set.float_images(idx)
            labels = train_set.labels[idx]
            if batch_fn is not None:
                images = batch_fn(model, images, labels, epoch)
            logits, cache = model._forward_cache(images)
            loss, grad_logits = softmax_ce_batch(logits, labels)
            _, grads = model.backward_batch(cache, grad_logits,
                                            need_input_grad=False,
                                            need_param_grads=True)
            for name, p in params.items():
                g = grads[name] + hyper.weight_decay * p
                v = velocity[name]
                v *= hyper.momentum
                v -= hyper.learning_rate * g
                p += v
            epoch_loss += loss
            batches += 1

        val_acc = accuracy(model, val_set)
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(batches, 1),
                        "val_accuracy": val_acc})
        if val_acc > best["val_accuracy"]:
            best = {"val_accuracy": val_acc, "epoch": epoch,
                    "params": {k: v.copy() for k, v in params.items()}}
        if epoch_hook is not None:
            epoch_hook(epoch, history[-1])

    model.set_params(best["params"])
    meta = {
        "epochs": hyper.epochs,
        "seed": hyper.seed,
        "best_epoch": best["epoch"],
        "val_accuracy": best["val_accuracy"],
        "hyper": {
            "batch_size": hyper.batch_size,
            "learning_rate": hyper.learning_rate,
            "momentum": hyper.momentum,
            "weight_decay": hyper.weight_decay,
        },
        "history": history,
    }
    return Checkpoint(arch=model.arch, params={k: v.copy() for k, v in params.items()},
                      meta=meta, class_count=model.class_count,
                      input_shape=list(model.input_shape))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    arch: str
    params: dict
    meta: dict = field(default_factory=dict)
    class_count: int = 10
    input_shape: list = field(default_factory=lambda: [32, 32])


_DTYPE_TAGS = {"<f4": "<f4", "<f8": "<f8"}


def save_checkpoint(ckpt, path) -> None:
    """Binary layout: magic, u32 header length, JSON header (architecture
    tag, shapes, dtypes, metadata), then raw little-endian payloads."""
    if isinstance(ckpt, DifferentiableClassifier):
        ckpt = Checkpoint(arch=ckpt.arch,
                          params={k: v.copy() for k, v in ckpt.params().items()},
                          class_count=ckpt.class_count,
                          input_shape=list(ckpt.input_shape))
    tensors = []
    payloads = []
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name])
        tag = "<f8" if arr.dtype == np.float64 else "<f4"
        arr = arr.astype(tag, copy=False)
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": tag})
        payloads.append(arr.tobytes())
    header = json.dumps({
        "arch": ckpt.arch,
        "class_count": ckpt.class_count,
        "input_shape": list(ckpt.input_shape),
        "meta": ckpt.meta,
        "tensors": tensors,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path, expect_arch=None) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CKPT_MAGIC) + 4 or not raw.startswith(CKPT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack_from("<I", raw, len(CKPT_MAGIC))
    start = len(CKPT_MAGIC) + 4
    try:
        header = json.loads(raw[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint header") from exc
    if expect_arch is not None and header["arch"] != expect_arch:
        raise ValueError(f"{path}: architecture tag {header['arch']!r} != "
                         f"expected {expect_arch!r}")
    pos = start + hlen
    params = {}
    for spec in header["tensors"]:
        dtype = np.dtype(_DTYPE_TAGS[spec["dtype"]])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dtype.itemsize
        blob = raw[pos : pos + nbytes]
        if len(blob) != nbytes:
            raise ValueError(f"{path}: truncated tensor payload for {spec['name']}")
        params[spec["name"]] = np.frombuffer(blob, dtype=dtype).reshape(spec["shape"]).copy()
        pos += nbytes
    return Checkpoint(arch=header["arch"], params=params, meta=header.get("meta", {}),
                      class_count=header.get("class_count", 10),
                      input_shape=header.get("input_shape", [32, 32]))


def build_model(ckpt: Checkpoint) -> DifferentiableClassifier:
    """Instantiate the architecture named by the checkpoint and load its
    parameters bit-exactly."""
    if ckpt.arch == TinyCNN.arch:
        dtype = ckpt.params["w1"].dtype if "w1" in ckpt.params else np.float32
        model = TinyCNN(class_count=ckpt.class_count,
                        input_shape=tuple(ckpt.input_shape), dtype=dtype)
    elif ckpt.arch == LinearColorProbe.arch:
        model = LinearColorProbe(class_count=ckpt.class_count,
                                 input_shape=tuple(ckpt.input_shape))
    else:
        raise ValueError(f"unknown architecture tag {ckpt.arch!r}")
    model.set_params(ckpt.params)
    return model


def params_digest(model_or_ckpt) -> str:
    """Stable short id of the parameter bytes (reports reference this)."""
    params = (model_or_ckpt.params() if isinstance(model_or_ckpt, DifferentiableClassifier)
              else model_or_ckpt.params)
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name]).tobytes())
    return h.hexdigest()[:16]
