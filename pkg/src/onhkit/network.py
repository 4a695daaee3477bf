"""Minimal differentiable classifier: conv/dense layers with softmax
cross-entropy backprop, a per-layer freeze mask, and a flat view of the
free parameters for optimizers to climb.

Everything is float64; image batches are (N, H, W, C) with values already
scaled to [0, 1].
"""

from __future__ import annotations

import struct

import numpy as np

CHECKPOINT_MAGIC = b"ONHK"
CHECKPOINT_VERSION = 1


class _Dense:
    has_params = True

    def __init__(self, n_in, n_out):
        self.n_in, self.n_out = n_in, n_out
        self.w = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)

    def spec(self):
        return f"dense:{self.n_in}:{self.n_out}"

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.n_in:
            raise ValueError(f"dense expects flat input of size {self.n_in}, got {in_shape}")
        return (self.n_out,)

    def init_params(self, rng):
        limit = np.sqrt(6.0 / (self.n_in + self.n_out))
        self.w = rng.uniform(-limit, limit, size=self.w.shape)
        self.b = np.zeros(self.n_out)

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.dw = self._x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.w.T


class _Conv:
    """k x k convolution, stride 1, zero padding preserving spatial dims."""

    has_params = True

    def __init__(self, k, c_in, c_out):
        if k < 1 or k % 2 == 0:
            raise ValueError("conv kernel must be odd")
        self.k, self.c_in, self.c_out = k, c_in, c_out
        self.w = np.zeros((k, k, c_in, c_out))
        self.b = np.zeros(c_out)

    def spec(self):
        return f"conv:{self.k}:{self.c_in}:{self.c_out}"

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.c_in:
            raise ValueError(f"conv expects (H, W, {self.c_in}) input, got {in_shape}")
        return (in_shape[0], in_shape[1], self.c_out)

    def init_params(self, rng):
        fan_in = self.k * self.k * self.c_in
        fan_out = self.k * self.k * self.c_out
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.w = rng.uniform(-limit, limit, size=self.w.shape)
        self.b = np.zeros(self.c_out)

    def _im2col(self, x):
        n, h, w, c = x.shape
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        cols = np.empty((n, h, w, self.k * self.k, c))
        i = 0
        for ky in range(self.k):
            for kx in range(self.k):
                cols[:, :, :, i, :] = xp[:, ky : ky + h, kx : kx + w, :]
                i += 1
        return cols.reshape(n * h * w, self.k * self.k * c)

    def forward(self, x):
        self._x_shape = x.shape
        self._cols = self._im2col(x)
        n, h, w, _ = x.shape
        out = self._cols @ self.w.reshape(-1, self.c_out) + self.b
        return out.reshape(n, h, w, self.c_out)

    def backward(self, dy):
        n, h, w, c = self._x_shape
        dyf = dy.reshape(-1, self.c_out)
        self.dw = (self._cols.T @ dyf).reshape(self.w.shape)
        self.db = dyf.sum(axis=0)
        dcols = (dyf @ self.w.reshape(-1, self.c_out).T).reshape(n, h, w, self.k * self.k, c)
        p = self.k // 2
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c))
        i = 0
        for ky in range(self.k):
            for kx in range(self.k):
                dxp[:, ky : ky + h, kx : kx + w, :] += dcols[:, :, :, i, :]
                i += 1
        return dxp[:, p : p + h, p : p + w, :]


class _Relu:
    has_params = False

    def spec(self):
        return "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class _MaxPool2:
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""

    has_params = False

    def spec(self):
        return "maxpool2"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ValueError(f"maxpool2 expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        if h < 2 or w < 2:
            raise ValueError("maxpool2 needs at least 2x2 input")
        return (h // 2, w // 2, c)

    def forward(self, x):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        win = x[:, : h2 * 2, : w2 * 2, :].reshape(n, h2, 2, w2, 2, c)
        flat = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
        self._x_shape = x.shape
        self._argmax = flat.argmax(axis=-1)
        return flat.max(axis=-1)

    def backward(self, dy):
        n, h, w, c = self._x_shape
        h2, w2 = h // 2, w // 2
        onehot = self._argmax[..., None] == np.arange(4)
        dflat = dy[..., None] * onehot
        dwin = dflat.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros((n, h, w, c))
        dx[:, : h2 * 2, : w2 * 2, :] = dwin.reshape(n, h2 * 2, w2 * 2, c)
        return dx


class _Flatten:
    has_params = False

    def spec(self):
        return "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._x_shape)


class _Softmax:
    has_params = False

    def spec(self):
        return "softmax"

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError("softmax expects flat input")
        return in_shape

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def _parse_layer(spec: str):
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "conv":
            return _Conv(int(parts[1]), int(parts[2]), int(parts[3]))
        if kind == "dense":
            return _Dense(int(parts[1]), int(parts[2]))
        if kind == "relu" and len(parts) == 1:
            return _Relu()
        if kind == "maxpool2" and len(parts) == 1:
            return _MaxPool2()
        if kind == "flatten" and len(parts) == 1:
            return _Flatten()
        if kind == "softmax" and len(parts) == 1:
            return _Softmax()
    except (IndexError, ValueError):
        pass
    raise ValueError(f"unknown layer spec {spec!r}")


class Network:
    """Ordered layers plus a freeze mask over the parameterized ones."""

    def __init__(self, arch):
        arch = list(arch)
        if not arch or not arch[0].startswith("input:"):
            raise ValueError("architecture must start with an input:... entry")
        self.arch = arch
        self.input_shape = tuple(int(p) for p in arch[0].split(":")[1:])
        if not self.input_shape or any(d < 1 for d in self.input_shape):
            raise ValueError(f"bad input shape in {arch[0]!r}")
        self.layers = [_parse_layer(s) for s in arch[1:]]
        if not self.layers or not isinstance(self.layers[-1], _Softmax):
            raise ValueError("architecture must end with softmax")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_classes = shape[0]
        self.param_layers = [l for l in self.layers if l.has_params]
        self.freeze_mask = [False] * len(self.param_layers)

    def free_layers(self):
        return [l for l, frozen in zip(self.param_layers, self.freeze_mask) if not frozen]

    @property
    def n_free(self) -> int:
        return sum(l.w.size + l.b.size for l in self.free_layers())


def tiny_cnn_arch(input_side: int = 32) -> list[str]:
    """Small reference architecture: two conv/pool stages and a dense head."""
    if input_side % 4 != 0 or input_side < 8:
        raise ValueError("input_side must be a multiple of 4 and at least 8")
    flat = (input_side // 4) ** 2 * 16
    return [
        f"input:{input_side}:{input_side}:3",
        "conv:3:3:8",
        "relu",
        "maxpool2",
        "conv:3:8:16",
        "relu",
        "maxpool2",
        "flatten",
        f"dense:{flat}:32",
        "relu",
        "dense:32:2",
        "softmax",
    ]


def init_network(arch, seed: int) -> Network:
    """Build a network with Glorot-uniform weights and zero biases."""
    net = Network(arch)
    rng = np.random.default_rng(seed)
    for layer in net.param_layers:
        layer.init_params(rng)
    return net


def _check_batch(net, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != net.input_shape:
        raise ValueError(
            f"batch shape {batch.shape[1:]} does not match input {net.input_shape}"
        )
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    return batch


def forward(net: Network, batch) -> np.ndarray:
    """Class probabilities, one row per sample."""
    x = _check_batch(net, batch)
    for layer in net.layers:
        x = layer.forward(x)
    return x


def _logits(net, batch):
    x = _check_batch(net, batch)
    for layer in net.layers[:-1]:
        x = layer.forward(x)
    return x


def _cross_entropy(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(labels.size), labels]))


def _check_labels(net, labels, n):
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (n,):
        raise ValueError("labels must be one class id per sample")
    if labels.min() < 0 or labels.max() >= net.output_classes:
        raise ValueError(f"labels must lie in [0, {net.output_classes})")
    return labels


def evaluate_loss(net: Network, batch, labels) -> float:
    """Mean softmax cross-entropy without a backward pass."""
    logits = _logits(net, batch)
    labels = _check_labels(net, labels, logits.shape[0])
    return _cross_entropy(logits, labels)


def loss_and_grad(net: Network, batch, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient over the free parameters."""
    logits = _logits(net, batch)
    labels = _check_labels(net, labels, logits.shape[0])
    loss = _cross_entropy(logits, labels)

    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    dy = probs
    dy[np.arange(labels.size), labels] -= 1.0
    dy /= labels.size
    for layer in reversed(net.layers[:-1]):
        dy = layer.backward(dy)

    pieces = []
    for layer in net.free_layers():
        pieces.append(layer.dw.ravel())
        pieces.append(layer.db.ravel())
    grad = np.concatenate(pieces) if pieces else np.zeros(0)
    return loss, grad


def get_free_params(net: Network) -> np.ndarray:
    """Flat copy of the unfrozen parameters, layer order then row-major."""
    pieces = []
    for layer in net.free_layers():
        pieces.append(layer.w.ravel())
        pieces.append(layer.b.ravel())
    return np.concatenate(pieces) if pieces else np.zeros(0)


def set_free_params(net: Network, vector) -> None:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (net.n_free,):
        raise ValueError(f"expected vector of length {net.n_free}, got {vector.shape}")
    pos = 0
    for layer in net.free_layers():
        for name in ("w", "b"):
            tensor = getattr(layer, name)
            setattr(layer, name, vector[pos : pos + tensor.size].reshape(tensor.shape).copy())
            pos += tensor.size


def freeze_first(net: Network, k: int) -> None:
    """Freeze the first k parameterized layers (conv/dense), in order."""
    if not 0 <= k <= len(net.param_layers):
        raise ValueError(f"k must lie in [0, {len(net.param_layers)}]")
    net.freeze_mask = [i < k for i in range(len(net.param_layers))]


def save_network(net: Network, path) -> None:
    """Versioned little-endian binary checkpoint; load(save(net)) == net."""
    arch_text = ";".join(net.arch).encode("utf-8")
    blob = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    blob.append(struct.pack("<I", len(arch_text)))
    blob.append(arch_text)
    blob.append(struct.pack("<I", len(net.freeze_mask)))
    blob.append(bytes(int(f) for f in net.freeze_mask))
    tensors = []
    for layer in net.param_layers:
        tensors.extend([layer.w, layer.b])
    blob.append(struct.pack("<I", len(tensors)))
    for t in tensors:
        blob.append(struct.pack("<I", t.ndim))
        blob.append(struct.pack(f"<{t.ndim}I", *t.shape))
        blob.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return _parse_checkpoint(data)
    except struct.error:
        raise ValueError("truncated checkpoint") from None


def _parse_checkpoint(data: bytes) -> Network:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a network checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 8
    (n_text,) = struct.unpack_from("<I", data, pos)
    pos += 4
    arch = data[pos : pos + n_text].decode("utf-8").split(";")
    pos += n_text
    net = Network(arch)
    (n_mask,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if n_mask != len(net.param_layers):
        raise ValueError("freeze mask does not match architecture")
    net.freeze_mask = [bool(b) for b in data[pos : pos + n_mask]]
    pos += n_mask
    (n_tensors,) = struct.unpack_from("<I", data, pos)
    pos += 4
    targets = []
    for layer in net.param_layers:
        targets.extend([(layer, "w"), (layer, "b")])
    if n_tensors != len(targets):
        raise ValueError("tensor count does not match architecture")
    for layer, name in targets:
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        want = getattr(layer, name).shape
        if tuple(shape) != want:
            raise ValueError(f"tensor shape {shape} does not match {want}")
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        setattr(layer, name, arr.reshape(shape).astype(np.float64))
    if pos != len(data):
        raise ValueError("trailing data in checkpoint")
    return net
