"""Small numpy neural-network core with hand-written backward passes.

Layers act on the trailing axis (dense) or on the node axis ``-2`` with
channels last (conv1d), so any number of leading batch axes is allowed.
Everything is float64.
"""

from __future__ import annotations

import json
import struct
from typing import Iterator

import numpy as np

MASK_LOGIT = -1e9
CKPT_MAGIC = b"ACNP"
CKPT_VERSION = 1


class ProtocolError(RuntimeError):
    """A layer was asked for gradients without a recorded forward pass."""


def _finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(x).all():
        raise FloatingPointError(f"non-finite values after {where}")
    return x


def glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def zero_grad(self) -> None:
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _take_cache(self):
        if self._cache is None:
            raise ProtocolError(f"{type(self).__name__}.backward called without forward")
        c, self._cache = self._cache, None
        return c


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.params = {"W": glorot(rng, (n_in, n_out), n_in, n_out), "b": np.zeros(n_out)}
        self.zero_grad()

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ValueError(f"dense expects last dim {self.params['W'].shape[0]}, got {x.shape[-1]}")
        if record:
            self._cache = x
        return _finite(x @ self.params["W"] + self.params["b"], "dense")

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._take_cache()
        x2 = x.reshape(-1, x.shape[-1])
        d2 = dy.reshape(-1, dy.shape[-1])
        self.grads["W"] += x2.T @ d2
        self.grads["b"] += d2.sum(axis=0)
        return dy @ self.params["W"].T


class Conv1d(Layer):
    """Zero-padded 'same' convolution along the node axis, channels last."""

    def __init__(self, c_in: int, c_out: int, width: int, rng: np.random.Generator):
        super().__init__()
        if width < 1 or width % 2 == 0:
            raise ValueError("kernel width must be a positive odd number")
        self.width = width
        self.params = {"W": glorot(rng, (width, c_in, c_out), width * c_in, width * c_out),
                       "b": np.zeros(c_out)}
        self.zero_grad()

    def _windows(self, x: np.ndarray) -> np.ndarray:
        # (..., n, c_in) -> (..., n, width, c_in)
        h = self.width // 2
        if h == 0:
            return x[..., :, None, :]
        pad = [(0, 0)] * (x.ndim - 2) + [(h, h), (0, 0)]
        xp = np.pad(x, pad)
        n = x.shape[-2]
        return np.stack([xp[..., j:j + n, :] for j in range(self.width)], axis=-2)

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        if x.shape[-1] != self.params["W"].shape[1]:
            raise ValueError(f"conv1d expects {self.params['W'].shape[1]} channels, got {x.shape[-1]}")
        win = self._windows(x)
        if record:
            self._cache = (win, x.shape)
        y = np.einsum("...nwc,wco->...no", win, self.params["W"]) + self.params["b"]
        return _finite(y, "conv1d")

    def backward(self, dy: np.ndarray) -> np.ndarray:
        win, xshape = self._take_cache()
        w, c = win.shape[-2:]
        self.grads["W"] += np.einsum("mwc,mo->wco", win.reshape(-1, w, c), dy.reshape(-1, dy.shape[-1]))
        self.grads["b"] += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        dwin = np.einsum("...no,wco->...nwc", dy, self.params["W"])
        h = self.width // 2
        n = xshape[-2]
        dx = np.zeros(xshape[:-2] + (n + 2 * h, xshape[-1]))
        for j in range(self.width):
            dx[..., j:j + n, :] += dwin[..., :, j, :]
        return dx[..., h:h + n, :]


class ReLU(Layer):
    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        if record:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._take_cache()


def masked_logits(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return logits
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ValueError(f"mask shape {mask.shape} does not match logits {logits.shape}")
    if not mask.any(axis=-1).all():
        raise ValueError("no valid action: every entry is masked")
    return np.where(mask, logits, MASK_LOGIT)


def log_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    z = masked_logits(logits, mask)
    z = z - z.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    if mask is not None:
        out = np.where(mask, out, -np.inf)
    return out


def masked_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax with masked entries at probability exactly 0."""
    z = masked_logits(logits, mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


class MaskedSoftmax(Layer):
    def forward(self, logits: np.ndarray, mask: np.ndarray | None = None, record: bool = True) -> np.ndarray:
        p = masked_softmax(logits, mask)
        if record:
            self._cache = p
        return p

    def backward(self, dp: np.ndarray) -> np.ndarray:
        p = self._take_cache()
        return p * (dp - (p * dp).sum(axis=-1, keepdims=True))


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; entries with probability 0 are never returned."""
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, probs.size - 1)


# ---------------------------------------------------------------------------
# networks


class Network:
    """Named-layer container; subclasses define ``forward``/``backward``."""

    layers: dict[str, Layer]

    def named_params(self) -> Iterator[tuple[str, np.ndarray]]:
        for lname, layer in self.layers.items():
            for pname, arr in layer.params.items():
                yield f"{lname}.{pname}", arr

    def named_grads(self) -> Iterator[tuple[str, np.ndarray]]:
        for lname, layer in self.layers.items():
            for pname in layer.params:
                yield f"{lname}.{pname}", layer.grads[pname]

    def params(self) -> list[np.ndarray]:
        return [a for _, a in self.named_params()]

    def grads(self) -> list[np.ndarray]:
        return [g for _, g in self.named_grads()]

    def zero_grad(self) -> None:
        for layer in self.layers.values():
            layer.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in self.named_params():
            src = state[name]
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src


class MLP(Network):
    """Dense/ReLU stack with a linear output layer."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.sizes = list(sizes)
        self.layers = {}
        self._order: list[Layer] = []
        for i in range(len(sizes) - 1):
            d = Dense(sizes[i], sizes[i + 1], rng)
            self.layers[f"dense{i}"] = d
            self._order.append(d)
            if i < len(sizes) - 2:
                self._order.append(ReLU())

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        for layer in self._order:
            x = layer.forward(x, record=record)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self._order):
            dy = layer.backward(dy)
        return dy


class NodeNet(Network):
    """Per-node scorer over a variable-size node set.

    Node features ``(B, n, c_in)`` go through two width-``kernel`` conv layers
    (shared across nodes); the activity snapshot ``(B, s)`` goes through a
    two-layer dense trunk and is broadcast-added to every node. The result is
    either a per-node logit (``head="policy"``) or, after a mean over real
    nodes, a scalar value (``head="value"``).
    """

    def __init__(self, c_in: int, snap_dim: int, rng: np.random.Generator,
                 channels: tuple[int, int] = (32, 16), trunk: int = 64,
                 kernel: int = 1, head: str = "policy"):
        if head not in ("policy", "value"):
            raise ValueError("head must be 'policy' or 'value'")
        self.head = head
        c1, c2 = channels
        self.layers = {
            "conv0": Conv1d(c_in, c1, kernel, rng),
            "conv1": Conv1d(c1, c2, kernel, rng),
            "snap0": Dense(snap_dim, trunk, rng),
            "snap1": Dense(trunk, c2, rng),
            "out": Conv1d(c2, 1, 1, rng) if head == "policy" else Dense(c2, 1, rng),
        }
        self._relu = [ReLU() for _ in range(4)]
        self._cache = None

    def forward(self, nodes: np.ndarray, snap: np.ndarray, node_valid: np.ndarray | None = None,
                record: bool = True) -> np.ndarray:
        L, r = self.layers, self._relu
        if nodes.ndim == 2:
            raise ValueError("NodeNet expects a leading batch axis")
        h = r[0].forward(L["conv0"].forward(nodes, record), record)
        h = r[1].forward(L["conv1"].forward(h, record), record)
        s = r[2].forward(L["snap0"].forward(snap, record), record)
        s = L["snap1"].forward(s, record)
        z = r[3].forward(h + s[..., None, :], record)
        if self.head == "policy":
            return L["out"].forward(z, record)[..., 0]
        if node_valid is None:
            node_valid = np.ones(z.shape[:-1], dtype=bool)
        w = node_valid / np.maximum(node_valid.sum(axis=-1, keepdims=True), 1)
        pooled = (z * w[..., None]).sum(axis=-2)
        if record:
            self._cache = w
        return L["out"].forward(pooled, record)

    def backward(self, dout: np.ndarray) -> None:
        L, r = self.layers, self._relu
        if self.head == "policy":
            dz = L["out"].backward(dout[..., None])
        else:
            if self._cache is None:
                raise ProtocolError("NodeNet.backward called without forward")
            w, self._cache = self._cache, None
            dpool = L["out"].backward(dout)
            dz = dpool[..., None, :] * w[..., None]
        dz = r[3].backward(dz)
        ds = dz.sum(axis=-2)
        ds = L["snap1"].backward(ds)
        L["snap0"].backward(r[2].backward(ds))
        dh = r[1].backward(dz)
        dh = L["conv1"].backward(dh)
        L["conv0"].backward(r[0].backward(dh))


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimizer_step(params: list[np.ndarray], grads: list[np.ndarray], state: Adam | None = None,
                   lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> Adam:
    """Functional wrapper: creates the Adam state on first use, updates in place."""
    if state is None:
        state = Adam(params, lr, beta1, beta2, eps)
    state.step(grads)
    return state


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(prefix, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write ``prefix.bin`` (shape table + little-endian float64) and ``prefix.json``."""
    names = list(tensors)
    with open(f"{prefix}.bin", "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(names)))
        for name in names:
            shape = tensors[name].shape
            fh.write(struct.pack("<I", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}q", *shape))
        for name in names:
            fh.write(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes())
    manifest = {"version": CKPT_VERSION, "tensors": [
        {"name": n, "shape": list(tensors[n].shape)} for n in names], "meta": meta or {}}
    with open(f"{prefix}.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_checkpoint(prefix) -> tuple[dict[str, np.ndarray], dict]:
    with open(f"{prefix}.json") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
    with open(f"{prefix}.bin", "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValueError("not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CKPT_VERSION or count != len(manifest["tensors"]):
            raise ValueError("checkpoint header disagrees with manifest")
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shapes.append(struct.unpack(f"<{ndim}q", fh.read(8 * ndim)) if ndim else ())
        out = {}
        for entry, shape in zip(manifest["tensors"], shapes):
            if list(shape) != entry["shape"]:
                raise ValueError(f"shape table mismatch for {entry['name']}")
            size = int(np.prod(shape)) if shape else 1
            out[entry["name"]] = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape).copy()
    return out, manifest.get("meta", {})
