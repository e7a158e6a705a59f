"""Tape-based reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D ``numpy`` array wrapped in a :class:`Tensor`.  Each op
computes its forward result and, when any input requires gradients, records
a closure that accumulates exact adjoints into those inputs.  Calling
``backward()`` on a scalar result walks the recorded graph once in reverse
topological order and then frees it, so one graph serves one step.

The op set is exactly what the model needs: dense and sparse-dense matmul,
elementwise arithmetic, the pointwise nonlinearities, row-wise L2
normalization, row gather/scale, segment softmax/sum over variable-length
neighbor groups, and reductions.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError, DomainError


def _as_matrix(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected <=2 dimensions, got shape {arr.shape}")
    return arr


class Tensor:
    """A 2-D float64 matrix with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_matrix(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        """A view of the same values outside any gradient graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable gradient tensor.

        ``self`` must be a scalar.  The recorded graph is freed afterward.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones((1, 1))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            node._parents = ()
            node._backward = None

    # convenience operators; all dispatch to the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _accum(tensor, contribution):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.array(contribution, dtype=np.float64, copy=True)
    else:
        tensor.grad += contribution


def _result(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_tensor(x, op):
    if not isinstance(x, Tensor):
        raise TypeError(f"{op} expects Tensor operands, got {type(x).__name__}")
    return x


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    _check_tensor(a, "matmul")
    _check_tensor(b, "matmul")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _result(out_data, (a, b), backward)


def spmm(matrix, x, matrix_t=None):
    """Multiply a constant scipy CSR matrix by a dense tensor.

    ``matrix_t`` may supply a precomputed transpose for the backward pass.
    The sparse operand is treated as a constant: no gradient flows into it.
    """
    _check_tensor(x, "spmm")
    if matrix.shape[1] != x.data.shape[0]:
        raise DimensionError(f"spmm: {matrix.shape} @ {x.data.shape}")
    if matrix_t is None:
        matrix_t = matrix.T.tocsr()
    out_data = matrix @ x.data

    def backward(g):
        _accum(x, matrix_t @ g)

    return _result(out_data, (x,), backward)


def transpose(a):
    _check_tensor(a, "transpose")

    def backward(g):
        _accum(a, g.T)

    return _result(a.data.T, (a,), backward)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    _check_tensor(a, "add")
    _check_tensor(b, "add")
    _check_same_shape(a, b, "add")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    _check_tensor(a, "sub")
    _check_tensor(b, "sub")
    _check_same_shape(a, b, "sub")

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    _check_tensor(a, "mul")
    _check_tensor(b, "mul")
    _check_same_shape(a, b, "mul")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def affine(a, alpha, beta=0.0):
    """Elementwise ``alpha * a + beta`` with scalar constants."""
    _check_tensor(a, "affine")
    alpha = float(alpha)

    def backward(g):
        _accum(a, alpha * g)

    return _result(alpha * a.data + float(beta), (a,), backward)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def _expit(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    _check_tensor(a, "sigmoid")
    y = _expit(a.data)

    def backward(g):
        _accum(a, g * y * (1.0 - y))

    return _result(y, (a,), backward)


def exp(a):
    _check_tensor(a, "exp")
    y = np.exp(a.data)

    def backward(g):
        _accum(a, g * y)

    return _result(y, (a,), backward)


def log(a):
    _check_tensor(a, "log")
    if np.any(a.data <= 0.0):
        raise DomainError("log: operand has non-positive entries")
    y = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _result(y, (a,), backward)


def softplus(a):
    """Numerically stable ``log(1 + exp(a))``; note -log(sigmoid(x)) == softplus(-x)."""
    _check_tensor(a, "softplus")
    x = a.data
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        _accum(a, g * _expit(x))

    return _result(y, (a,), backward)


def leaky_relu(a, negative_slope=0.2):
    _check_tensor(a, "leaky_relu")
    slope = float(negative_slope)
    factor = np.where(a.data >= 0.0, 1.0, slope)

    def backward(g):
        _accum(a, g * factor)

    return _result(a.data * factor, (a,), backward)


# ---------------------------------------------------------------------------
# row-structured ops


def normalize_rows(a, eps=1e-12):
    """Scale each row to unit L2 norm; rows with norm < eps divide by eps."""
    _check_tensor(a, "normalize_rows")
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    denom = np.maximum(norms, eps)
    y = a.data / denom
    small = norms < eps

    def backward(g):
        inner = np.sum(g * y, axis=1, keepdims=True)
        correction = np.where(small, 0.0, inner)
        _accum(a, (g - y * correction) / denom)

    return _result(y, (a,), backward)


def gather_rows(a, indices):
    _check_tensor(a, "gather_rows")
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise DimensionError("gather_rows: index out of range")

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    return _result(a.data[idx], (a,), backward)


def scale_rows(a, s):
    """Multiply row i of ``a`` by the scalar in row i of the (n, 1) tensor ``s``."""
    _check_tensor(a, "scale_rows")
    _check_tensor(s, "scale_rows")
    if s.data.shape != (a.data.shape[0], 1):
        raise DimensionError(f"scale_rows: scale shape {s.data.shape} for matrix {a.data.shape}")

    def backward(g):
        _accum(a, g * s.data)
        _accum(s, np.sum(g * a.data, axis=1, keepdims=True))

    return _result(a.data * s.data, (a, s), backward)


def segment_softmax(logits, segments, n_segments):
    """Softmax over groups of rows of an (E, 1) tensor sharing a segment id.

    Shift-invariant within each segment (max-subtracted), so weights per
    segment sum to exactly 1 up to rounding.
    """
    _check_tensor(logits, "segment_softmax")
    if logits.data.shape[1] != 1:
        raise DimensionError("segment_softmax: logits must have shape (E, 1)")
    seg = np.asarray(segments, dtype=np.intp).reshape(-1)
    if seg.shape[0] != logits.data.shape[0]:
        raise DimensionError("segment_softmax: one segment id per row required")
    x = logits.data[:, 0]
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, seg, x)
    z = np.exp(x - seg_max[seg])
    seg_sum = np.zeros(n_segments)
    np.add.at(seg_sum, seg, z)
    y = (z / seg_sum[seg]).reshape(-1, 1)

    def backward(g):
        weighted = y * g
        seg_dot = np.zeros(n_segments)
        np.add.at(seg_dot, seg, weighted[:, 0])
        _accum(logits, weighted - y * seg_dot[seg].reshape(-1, 1))

    return _result(y, (logits,), backward)


def segment_sum(a, segments, n_segments):
    """Sum rows of ``a`` into ``n_segments`` buckets given per-row segment ids."""
    _check_tensor(a, "segment_sum")
    seg = np.asarray(segments, dtype=np.intp).reshape(-1)
    if seg.shape[0] != a.data.shape[0]:
        raise DimensionError("segment_sum: one segment id per row required")
    out_data = np.zeros((n_segments, a.data.shape[1]))
    np.add.at(out_data, seg, a.data)

    def backward(g):
        _accum(a, g[seg])

    return _result(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions


def row_sum(a):
    _check_tensor(a, "row_sum")

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _result(a.data.sum(axis=1, keepdims=True), (a,), backward)


def row_logsumexp(a):
    """Per-row log(sum(exp(x))) with max-shift stabilization."""
    _check_tensor(a, "row_logsumexp")
    m = a.data.max(axis=1, keepdims=True)
    y = m + np.log(np.sum(np.exp(a.data - m), axis=1, keepdims=True))

    def backward(g):
        _accum(a, g * np.exp(a.data - y))

    return _result(y, (a,), backward)


def sum_all(a):
    _check_tensor(a, "sum_all")

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _result(np.array([[a.data.sum()]]), (a,), backward)


def mean_all(a):
    _check_tensor(a, "mean_all")
    size = a.data.size

    def backward(g):
        _accum(a, np.broadcast_to(g / size, a.data.shape))

    return _result(np.array([[a.data.mean()]]), (a,), backward)


def as_csr(matrix):
    """Coerce to scipy CSR float64 (convenience for spmm callers)."""
    return sp.csr_matrix(matrix, dtype=np.float64)
