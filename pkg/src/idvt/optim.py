"""Named parameter collections, Adam updates, and binary checkpoints."""

import struct

import numpy as np

from .engine import Tensor
from .errors import ContractError, TrainingDivergenceError

_MAGIC = b"IDVTPRM\x00"
_VERSION = 1


class ParameterSet:
    """Ordered mapping of names to trainable tensors."""

    def __init__(self, tensors):
        self._tensors = {}
        for name, tensor in dict(tensors).items():
            if not isinstance(tensor, Tensor):
                tensor = Tensor(tensor)
            tensor.requires_grad = True
            self._tensors[name] = tensor

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.grad = None

    def assert_finite(self):
        for name, tensor in self._tensors.items():
            if not np.all(np.isfinite(tensor.data)):
                raise TrainingDivergenceError(f"parameter '{name}' has non-finite entries")

    def snapshot(self):
        """Deep copies of all parameter arrays, keyed by name."""
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def restore(self, snapshot):
        for name, tensor in self._tensors.items():
            tensor.data = snapshot[name].copy()
            tensor.grad = None


class Adam:
    """Adam with bias correction over a :class:`ParameterSet`.

    After each step gradients are cleared and all parameters are checked
    to be finite; a non-finite gradient or parameter aborts training.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for name, param in self.params.items():
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            if not np.all(np.isfinite(grad)):
                raise TrainingDivergenceError(f"gradient of '{name}' has non-finite entries")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            param.grad = None
        self.params.assert_finite()


def save_params(path, params):
    """Serialize a ParameterSet to a flat binary file.

    Layout: magic, version, entry count; per entry a length-prefixed name
    and (rows, cols); then all value blocks as row-major little-endian
    float64.  Round-trips bit-exactly.
    """
    blobs = []
    header = [_MAGIC, struct.pack("<II", _VERSION, len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        rows, cols = tensor.data.shape
        header.append(struct.pack("<H", len(encoded)))
        header.append(encoded)
        header.append(struct.pack("<QQ", rows, cols))
        blobs.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        for chunk in header:
            fh.write(chunk)
        for blob in blobs:
            fh.write(blob)


def load_params(path):
    """Read a checkpoint written by :func:`save_params`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ContractError(f"{path}: not a parameter checkpoint")
    offset = len(_MAGIC)
    version, count = struct.unpack_from("<II", raw, offset)
    if version != _VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {version}")
    offset += 8
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        rows, cols = struct.unpack_from("<QQ", raw, offset)
        offset += 16
        entries.append((name, rows, cols))
    tensors = {}
    for name, rows, cols in entries:
        n_bytes = rows * cols * 8
        values = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset)
        offset += n_bytes
        tensors[name] = Tensor(values.reshape(rows, cols).copy(), requires_grad=True)
    return ParameterSet(tensors)
