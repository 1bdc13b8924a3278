"""Dense tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a ``Tensor`` wraps a numpy array and
records, per operation, the parent tensors plus a vector-Jacobian-product
closure. ``Tensor.backward`` walks the recorded graph once in reverse
topological order and accumulates gradients into the leaves.

Conventions:
  * float32 is the default dtype; float64 is used by the gradient-check
    tooling (finite differences need the extra headroom).
  * convolution means cross-correlation (no kernel flip).
  * the graph is rebuilt on every forward pass (define-by-run).
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)

# When enabled, every op verifies its output is finite and raises instead of
# silently propagating NaN/Inf through training.
_nan_checks = False


def set_nan_checks(enabled: bool) -> bool:
    """Toggle post-op NaN/Inf detection. Returns the previous setting."""
    global _nan_checks
    previous = _nan_checks
    _nan_checks = bool(enabled)
    return previous


class no_grad:
    """Context manager that suppresses graph recording inside the block."""

    _depth = 0

    def __enter__(self):
        no_grad._depth += 1
        return self

    def __exit__(self, *exc):
        no_grad._depth -= 1
        return False


def _grad_enabled() -> bool:
    return no_grad._depth == 0


_seq_counter = 0


def _next_seq() -> int:
    global _seq_counter
    _seq_counter += 1
    return _seq_counter


class Tensor:
    """N-dimensional float array with optional gradient tracking.

    Attributes:
        data: the underlying numpy array (row-major).
        requires_grad: whether gradients flow to/through this tensor.
        grad: accumulated gradient for leaf tensors, or None.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_seq")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None
        self._seq = _next_seq()

    # ------------------------------------------------------------------
    # basic protocol
    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # autodiff core
    # ------------------------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        ``self`` must be a scalar. Calling backward repeatedly without
        clearing the leaf grads accumulates additively.

        Nodes are processed in decreasing creation order (a canonical
        reverse topological order), so gradient accumulation for a tensor
        with several consumers happens in a fixed sequence regardless of
        which downstream branches exist in the graph.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        topo = _toposort(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # ------------------------------------------------------------------
    # arithmetic operators
    # ------------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def abs(self):
        return absolute(self)


def _toposort(root: Tensor):
    """Reachable ancestors of root, ordered by increasing creation index."""
    seen = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen[id(node)] = node
        stack.extend(node._parents)
    return sorted(seen.values(), key=lambda t: t._seq)


def _coerce(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents, vjp, opname: str) -> Tensor:
    if _nan_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {opname}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._seq = _next_seq()
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ----------------------------------------------------------------------
# elementwise ops
# ----------------------------------------------------------------------
def add(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _make(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    out = a.data / b.data
    a_data, b_data = a.data, b.data

    def vjp(g):
        ga = _unbroadcast(g / b_data, a.shape)
        gb = _unbroadcast(-g * a_data / (b_data * b_data), b.shape)
        return ga, gb

    return _make(out, (a, b), vjp, "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, p) -> Tensor:
    p = float(p)
    out = a.data**p
    a_data = a.data

    def vjp(g):
        return (g * p * a_data ** (p - 1.0),)

    return _make(out, (a,), vjp, "power")


def absolute(a: Tensor) -> Tensor:
    out = np.abs(a.data)
    sign = np.sign(a.data)

    def vjp(g):
        return (g * sign,)

    return _make(out, (a,), vjp, "abs")


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    """Elementwise max(x, slope*x) for slope in [0, 1)."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    mask = a.data >= 0
    out = np.where(mask, a.data, slope * a.data)
    factor = np.where(mask, a.data.dtype.type(1.0), a.data.dtype.type(slope))

    def vjp(g):
        return (g * factor,)

    return _make(out, (a,), vjp, "leaky_relu")


# ----------------------------------------------------------------------
# reductions and shape ops
# ----------------------------------------------------------------------
def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.shape

    def vjp(g):
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy() if g.shape != in_shape else g,)
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % len(in_shape) for ax in axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, in_shape).copy(),)

    return _make(np.asarray(out), (a,), vjp, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    in_shape = a.shape
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(in_shape),)

    return _make(out, (a,), vjp, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = a.data.transpose(axes)

    def vjp(g):
        return (g.transpose(inverse),)

    return _make(out, (a,), vjp, "transpose")


def take(a: Tensor, idx) -> Tensor:
    out = a.data[idx]
    in_shape = a.shape

    def vjp(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[idx] += g
        return (full,)

    return _make(np.ascontiguousarray(out), (a,), vjp, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), vjp, "concat")


# ----------------------------------------------------------------------
# softmax / matmul
# ----------------------------------------------------------------------
def softmax_lastdim(a: Tensor) -> Tensor:
    """Softmax along the last axis, stabilized by max subtraction."""
    # contiguous layout pins the reduction order, keeping results
    # bit-identical whether the input is a transposed view or not
    x = np.ascontiguousarray(a.data)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return _make(y, (a,), vjp, "softmax_lastdim")


def batch_matmul(a: Tensor, b: Tensor) -> Tensor:
    """Independent matrix product per batch index: [B,M,K] x [B,K,N] -> [B,M,N]."""
    if a.ndim != 3 or b.ndim != 3:
        raise ValueError(
            f"batch_matmul expects rank-3 operands, got {a.shape} and {b.shape}"
        )
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"batch_matmul batch dims differ: {a.shape[0]} vs {b.shape[0]}"
        )
    if a.shape[2] != b.shape[1]:
        raise ValueError(
            f"batch_matmul inner dims differ: K={a.shape[2]} vs K={b.shape[1]}"
        )
    out = np.matmul(a.data, b.data)
    a_data, b_data = a.data, b.data

    def vjp(g):
        ga = np.matmul(g, b_data.transpose(0, 2, 1))
        gb = np.matmul(a_data.transpose(0, 2, 1), g)
        return ga, gb

    return _make(out, (a, b), vjp, "batch_matmul")


# ----------------------------------------------------------------------
# convolution
# ----------------------------------------------------------------------
def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """2-D cross-correlation over [N,C,H,W] with an [O,C,kH,kW] kernel."""
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be [N,C,H,W], got shape {x.shape}")
    if weight.ndim != 4:
        raise ValueError(f"conv2d weight must be [O,C,kH,kW], got shape {weight.shape}")
    N, C, H, W = x.shape
    O, Cw, kH, kW = weight.shape
    if C != Cw:
        raise ValueError(
            f"conv2d channel mismatch: input has C={C} but weight expects C={Cw}"
        )
    if bias.shape != (O,):
        raise ValueError(f"conv2d bias must have shape ({O},), got {bias.shape}")
    if dilation < 1 or stride < 1:
        raise ValueError("conv2d stride and dilation must be >= 1")

    span_h = H + 2 * padding - dilation * (kH - 1) - 1
    span_w = W + 2 * padding - dilation * (kW - 1) - 1
    if span_h < 0 or span_h % stride or span_w < 0 or span_w % stride:
        raise ValueError(
            f"conv2d geometry invalid: input {H}x{W}, kernel {kH}x{kW}, "
            f"padding {padding}, dilation {dilation}, stride {stride} "
            "does not yield integer positive output extents"
        )
    Ho = span_h // stride + 1
    Wo = span_w // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data

    cols = np.empty((N, C, kH, kW, Ho, Wo), dtype=xp.dtype)
    for ki in range(kH):
        i0 = ki * dilation
        for kj in range(kW):
            j0 = kj * dilation
            cols[:, :, ki, kj] = xp[
                :, :, i0 : i0 + (Ho - 1) * stride + 1 : stride,
                j0 : j0 + (Wo - 1) * stride + 1 : stride,
            ]
    cols_mat = cols.reshape(N, C * kH * kW, Ho * Wo)
    w_mat = weight.data.reshape(O, C * kH * kW)
    out = np.matmul(w_mat, cols_mat).reshape(N, O, Ho, Wo)
    out = out + bias.data.reshape(1, O, 1, 1)

    pad_shape = xp.shape

    def vjp(g):
        g_mat = g.reshape(N, O, Ho * Wo)
        gb = g.sum(axis=(0, 2, 3))
        gw = np.tensordot(g_mat, cols_mat, axes=([0, 2], [0, 2])).reshape(weight.shape)
        dcols = np.matmul(w_mat.T, g_mat).reshape(N, C, kH, kW, Ho, Wo)
        dxp = np.zeros(pad_shape, dtype=g.dtype)
        for ki in range(kH):
            i0 = ki * dilation
            for kj in range(kW):
                j0 = kj * dilation
                dxp[
                    :, :, i0 : i0 + (Ho - 1) * stride + 1 : stride,
                    j0 : j0 + (Wo - 1) * stride + 1 : stride,
                ] += dcols[:, :, ki, kj]
        if padding:
            gx = dxp[:, :, padding : padding + H, padding : padding + W]
        else:
            gx = dxp
        return np.ascontiguousarray(gx), gw, gb

    return _make(out, (x, weight, bias), vjp, "conv2d")


# ----------------------------------------------------------------------
# resampling ops
# ----------------------------------------------------------------------
def _linear_interp_matrix(n: int, factor: int, dtype) -> np.ndarray:
    """Weights of 1-D linear upsampling by an integer factor (align_corners=False)."""
    n_out = n * factor
    A = np.zeros((n_out, n), dtype=dtype)
    for o in range(n_out):
        src = (o + 0.5) / factor - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        lo = min(max(i0, 0), n - 1)
        hi = min(max(i0 + 1, 0), n - 1)
        A[o, lo] += 1.0 - t
        A[o, hi] += t
    return A


def _apply_matrix_along_axis(M: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(x, axis, -1)
    out = np.matmul(moved, M.T)
    return np.moveaxis(out, -1, axis)


def trilinear_upsample(volume: Tensor, factors) -> Tensor:
    """Trilinear upsampling of the last three axes by integer factors.

    Uses align_corners=False coordinates with edge clamping, applied
    separably one axis at a time. Leading axes are treated as batch.
    """
    fd, fh, fw = (int(f) for f in factors)
    if min(fd, fh, fw) < 1:
        raise ValueError(f"upsample factors must be >= 1, got {factors}")
    if volume.ndim < 3:
        raise ValueError(f"trilinear_upsample needs >= 3 axes, got shape {volume.shape}")
    dtype = volume.dtype
    mats = []
    for ax_offset, f in zip((-3, -2, -1), (fd, fh, fw)):
        n = volume.shape[ax_offset]
        mats.append(None if f == 1 else _linear_interp_matrix(n, f, dtype))

    out = volume.data
    for ax_offset, M in zip((-3, -2, -1), mats):
        if M is not None:
            out = _apply_matrix_along_axis(M, out, ax_offset)

    def vjp(g):
        gx = g
        for ax_offset, M in zip((-3, -2, -1), mats):
            if M is not None:
                gx = _apply_matrix_along_axis(M.T, gx, ax_offset)
        return (gx,)

    return _make(np.ascontiguousarray(out), (volume,), vjp, "trilinear_upsample")


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """Rearrange [N, C*s^2, H, W] into [N, C, s*H, s*W] (sub-pixel upscale)."""
    if x.ndim != 4:
        raise ValueError(f"pixel_shuffle input must be [N,C,H,W], got {x.shape}")
    N, Cs2, H, W = x.shape
    if Cs2 % (s * s):
        raise ValueError(
            f"pixel_shuffle channel count {Cs2} not divisible by s^2={s * s}"
        )
    C = Cs2 // (s * s)
    out = (
        x.data.reshape(N, C, s, s, H, W)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(N, C, H * s, W * s)
    )

    def vjp(g):
        gx = (
            g.reshape(N, C, H, s, W, s)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(N, Cs2, H, W)
        )
        return (np.ascontiguousarray(gx),)

    return _make(np.ascontiguousarray(out), (x,), vjp, "pixel_shuffle")


def pixel_unshuffle(x: Tensor, s: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`: [N,C,s*H,s*W] -> [N,C*s^2,H,W]."""
    if x.ndim != 4:
        raise ValueError(f"pixel_unshuffle input must be [N,C,H,W], got {x.shape}")
    N, C, Hs, Ws = x.shape
    if Hs % s or Ws % s:
        raise ValueError(
            f"pixel_unshuffle spatial extents {Hs}x{Ws} not divisible by s={s}"
        )
    H, W = Hs // s, Ws // s
    out = (
        x.data.reshape(N, C, H, s, W, s)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(N, C * s * s, H, W)
    )

    def vjp(g):
        gx = (
            g.reshape(N, C, s, s, H, W)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(N, C, Hs, Ws)
        )
        return (np.ascontiguousarray(gx),)

    return _make(np.ascontiguousarray(out), (x,), vjp, "pixel_unshuffle")
