"""Reverse-mode automatic differentiation on dense float64 arrays.

A ``Tensor`` wraps a numpy array and remembers how it was produced.  Calling
``backward()`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates ``d loss / d x`` into ``x.grad`` for every
tensor that participates with ``requires_grad=True``.  The module also ships
the handful of neural-net operations the rest of the package needs (dense,
conv2d, separable conv, pooling, softmax, l2 normalization), the Adam
optimizer, and a central-finite-difference gradient for checking all of the
above against an implementation-free oracle.

Everything is float64 end to end; there is no broadcasting except for python
scalars, which keeps gradient rules short and shape bugs loud.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have shapes the operation does not accept."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class DegenerateVectorError(ValueError):
    """A vector with (near-)zero norm reached an operation that must divide by it."""


# Norms at or below this are considered degenerate in l2_normalize.
EPS_NORM = 1e-12


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    """A float64 array plus the closure that backpropagates through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    @classmethod
    def _from_op(cls, data, parents: tuple["Tensor", ...], backward, op: str) -> "Tensor":
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            out._op = op
        # else: constant w.r.t. every leaf, so record nothing and let the
        # graph stay pruned (evaluation passes build no graph at all).
        return out

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- graph traversal --------------------------------------------------

    def _topo_order(self) -> list["Tensor"]:
        """Parents-before-children ordering of every node reachable from self."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad across the recorded graph.

        Only defined for scalar outputs.  Interior nodes get fresh gradient
        buffers; leaf tensors accumulate into any gradient already present,
        so callers that reuse parameters across steps should zero them first.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        order = self._topo_order()
        for node in order:
            if node._parents:
                node.grad = np.zeros_like(node.data)
            elif node.grad is None:
                node.grad = np.zeros_like(node.data)
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- scalar / elementwise arithmetic ----------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Tensor(np.float64(other))
        raise TypeError(f"cannot combine Tensor with {type(other).__name__}")

    @staticmethod
    def _check_elementwise(a: "Tensor", b: "Tensor", op: str) -> None:
        # Python scalars were wrapped as 0-d tensors; those broadcast.  Any
        # other mismatch is a bug in the caller.
        if a.data.shape != b.data.shape and a.data.ndim != 0 and b.data.ndim != 0:
            raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")

    @staticmethod
    def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        # Undoes the scalar broadcast: a 0-d operand receives the sum.
        if shape == grad.shape:
            return grad
        return np.sum(grad).reshape(shape)

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        self._check_elementwise(self, other, "add")
        out_data = self.data + other.data

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += self._reduce_to(g, self.data.shape)
            if other.requires_grad:
                other.grad += self._reduce_to(g, other.data.shape)

        return Tensor._from_op(out_data, (self, other), backward, "add")

    def __radd__(self, other) -> "Tensor":
        return self.__add__(other)

    def __neg__(self) -> "Tensor":
        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += -g

        return Tensor._from_op(-self.data, (self,), backward, "neg")

    def __sub__(self, other) -> "Tensor":
        return self.__add__(self._coerce(other).__neg__())

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other).__add__(self.__neg__())

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        self._check_elementwise(self, other, "mul")
        out_data = self.data * other.data

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += self._reduce_to(g * other.data, self.data.shape)
            if other.requires_grad:
                other.grad += self._reduce_to(g * self.data, other.data.shape)

        return Tensor._from_op(out_data, (self, other), backward, "mul")

    def __rmul__(self, other) -> "Tensor":
        return self.__mul__(other)

    def __pow__(self, exponent) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise TypeError("exponent must be a python number")
        exponent = float(exponent)
        out_data = self.data**exponent

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += g * exponent * self.data ** (exponent - 1.0)

        return Tensor._from_op(out_data, (self,), backward, "pow")

    def abs(self) -> "Tensor":
        # Subgradient 0 at exactly 0.
        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += g * np.sign(self.data)

        return Tensor._from_op(np.abs(self.data), (self,), backward, "abs")

    def log(self) -> "Tensor":
        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += g / self.data

        return Tensor._from_op(np.log(self.data), (self,), backward, "log")

    def clamp(self, lo: float, hi: float) -> "Tensor":
        """Clip to [lo, hi]; gradient flows only where the input was strictly inside."""
        if not lo < hi:
            raise ContractError(f"clamp needs lo < hi, got [{lo}, {hi}]")
        out_data = np.clip(self.data, lo, hi)
        inside = (self.data > lo) & (self.data < hi)

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad += g * inside

        return Tensor._from_op(out_data, (self,), backward, "clamp")

    def sum(self, axis: int | tuple[int, ...] | None = None) -> "Tensor":
        out_data = np.sum(self.data, axis=axis)
        in_shape = self.data.shape

        def backward(g: np.ndarray) -> None:
            if not self.requires_grad:
                return
            if axis is None:
                self.grad += np.broadcast_to(g, in_shape)
            else:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                g_exp = np.expand_dims(g, axes)
                self.grad += np.broadcast_to(g_exp, in_shape)

        return Tensor._from_op(out_data, (self,), backward, "sum")

    def mean(self, axis: int | tuple[int, ...] | None = None) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis) * (1.0 / count)

    def __getitem__(self, key) -> "Tensor":
        out_data = self.data[key]

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.grad[key] += g

        return Tensor._from_op(np.array(out_data), (self,), backward, "getitem")


# -- activations and layers ------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.grad += g * mask

    return Tensor._from_op(x.data * mask, (x,), backward, "relu")


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: [N, d_in] @ weight[d_out, d_in].T + bias[d_out]."""
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(
            f"dense expects x[N,d_in], weight[d_out,d_in], bias[d_out]; "
            f"got {x.shape}, {weight.shape}, {bias.shape}"
        )
    if x.shape[1] != weight.shape[1] or weight.shape[0] != bias.shape[0]:
        raise ShapeError(
            f"dense dimension mismatch: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    out_data = x.data @ weight.data.T + bias.data

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.grad += g @ weight.data
        if weight.requires_grad:
            weight.grad += g.T @ x.data
        if bias.requires_grad:
            bias.grad += g.sum(axis=0)

    return Tensor._from_op(out_data, (x, weight, bias), backward, "dense")


def _conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if out < 1:
        raise ShapeError(f"conv kernel {k} with pad {pad} does not fit input of size {size}")
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with kernel[O,C,kh,kw], plus bias[O]."""
    if x.ndim != 4 or kernel.ndim != 4 or bias.ndim != 1:
        raise ShapeError(
            f"conv2d expects x[N,C,H,W], kernel[O,C,kh,kw], bias[O]; "
            f"got {x.shape}, {kernel.shape}, {bias.shape}"
        )
    n, c, h, w = x.shape
    o, ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {ck}")
    if bias.shape[0] != o:
        raise ShapeError(f"conv2d bias length {bias.shape[0]} != output channels {o}")
    if stride < 1 or pad < 0:
        raise ContractError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    ho = _conv_output_size(h, kh, stride, pad)
    wo = _conv_output_size(w, kw, stride, pad)

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    # [N, C*kh*kw, Ho*Wo] patch matrix; one matmul does the whole conv.
    cols = np.ascontiguousarray(windows).reshape(n, c * kh * kw, ho * wo)
    kmat = kernel.data.reshape(o, c * kh * kw)
    out_data = (kmat @ cols).reshape(n, o, ho, wo) + bias.data[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        g2 = g.reshape(n, o, ho * wo)
        if bias.requires_grad:
            bias.grad += g.sum(axis=(0, 2, 3))
        if kernel.requires_grad:
            kernel.grad += np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
        if x.requires_grad:
            dcols = np.matmul(kmat.T, g2).reshape(n, c, kh, kw, ho, wo)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                        :, :, i, j
                    ]
            if pad:
                x.grad += dxp[:, :, pad : pad + h, pad : pad + w]
            else:
                x.grad += dxp

    return Tensor._from_op(out_data, (x, kernel, bias), backward, "conv2d")


def depthwise_conv2d(x: Tensor, kernel: Tensor, pad: int = 0) -> Tensor:
    """Per-channel cross-correlation: kernel[C,kh,kw] filters channel c of x alone."""
    if x.ndim != 4 or kernel.ndim != 3:
        raise ShapeError(
            f"depthwise_conv2d expects x[N,C,H,W] and kernel[C,kh,kw]; got {x.shape}, {kernel.shape}"
        )
    n, c, h, w = x.shape
    ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"depthwise channel mismatch: input has {c}, kernel has {ck}")
    ho = _conv_output_size(h, kh, 1, pad)
    wo = _conv_output_size(w, kw, 1, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

    out_data = np.zeros((n, c, ho, wo))
    for i in range(kh):
        for j in range(kw):
            out_data += xp[:, :, i : i + ho, j : j + wo] * kernel.data[None, :, i, j, None, None]

    def backward(g: np.ndarray) -> None:
        if kernel.requires_grad:
            for i in range(kh):
                for j in range(kw):
                    kernel.grad[:, i, j] += np.einsum(
                        "nchw,nchw->c", g, xp[:, :, i : i + ho, j : j + wo]
                    )
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + ho, j : j + wo] += g * kernel.data[None, :, i, j, None, None]
            if pad:
                x.grad += dxp[:, :, pad : pad + h, pad : pad + w]
            else:
                x.grad += dxp

    return Tensor._from_op(out_data, (x, kernel), backward, "depthwise_conv2d")


def pointwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """1x1 convolution mixing channels: weight[O,C] applied at every pixel."""
    if x.ndim != 4 or weight.ndim != 2 or bias.ndim != 1:
        raise ShapeError(
            f"pointwise_conv2d expects x[N,C,H,W], weight[O,C], bias[O]; "
            f"got {x.shape}, {weight.shape}, {bias.shape}"
        )
    if weight.shape[1] != x.shape[1] or bias.shape[0] != weight.shape[0]:
        raise ShapeError(
            f"pointwise dimension mismatch: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    out_data = (
        np.einsum("oc,nchw->nohw", weight.data, x.data, optimize=True)
        + bias.data[None, :, None, None]
    )

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.grad += np.einsum("oc,nohw->nchw", weight.data, g, optimize=True)
        if weight.requires_grad:
            weight.grad += np.einsum("nohw,nchw->oc", g, x.data, optimize=True)
        if bias.requires_grad:
            bias.grad += g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out_data, (x, weight, bias), backward, "pointwise_conv2d")


def separable_conv2d(x: Tensor, depthwise: Tensor, pointwise: Tensor, bias: Tensor) -> Tensor:
    """Depthwise filter then 1x1 channel mix, the factored stand-in for a full conv.

    Padding is fixed at kh // 2 so odd kernels preserve spatial size.
    """
    if depthwise.ndim != 3 or depthwise.shape[1] != depthwise.shape[2]:
        raise ShapeError(f"separable depthwise kernel must be [C,k,k], got {depthwise.shape}")
    k = depthwise.shape[1]
    if k % 2 != 1:
        raise ShapeError(f"separable kernel size must be odd, got {k}")
    return pointwise_conv2d(depthwise_conv2d(x, depthwise, pad=k // 2), pointwise, bias)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2 expects x[N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    out_data = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            spread = np.broadcast_to(
                g[:, :, :, None, :, None] * 0.25, (n, c, h // 2, 2, w // 2, 2)
            )
            x.grad += spread.reshape(n, c, h, w)

    return Tensor._from_op(out_data, (x,), backward, "avg_pool2")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial grid: [N,C,H,W] -> [N,C]."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects x[N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    out_data = x.data.mean(axis=(2, 3))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x.grad += np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape)

    return Tensor._from_op(out_data, (x,), backward, "global_avg_pool")


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis of a [N, k] tensor, max-shifted for stability."""
    if x.ndim != 2:
        raise ShapeError(f"softmax expects a [N, k] tensor, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            # dL/dx_i = y_i * (g_i - sum_j g_j y_j)
            dot = (g * y).sum(axis=1, keepdims=True)
            x.grad += y * (g - dot)

    return Tensor._from_op(y, (x,), backward, "softmax")


def l2_normalize(x: Tensor) -> Tensor:
    """Scale rows of [N, d] (or a single [d] vector) to unit Euclidean norm."""
    if x.ndim == 1:
        norms = np.linalg.norm(x.data, keepdims=True)
    elif x.ndim == 2:
        norms = np.linalg.norm(x.data, axis=1, keepdims=True)
    else:
        raise ShapeError(f"l2_normalize expects [d] or [N, d], got {x.shape}")
    if np.any(norms <= EPS_NORM):
        raise DegenerateVectorError(
            f"cannot normalize a vector with norm <= {EPS_NORM:g}; min norm {norms.min():g}"
        )
    y = x.data / norms

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            if x.ndim == 1:
                dot = np.sum(g * y)
            else:
                dot = (g * y).sum(axis=1, keepdims=True)
            x.grad += (g - y * dot) / norms

    return Tensor._from_op(y, (x,), backward, "l2_normalize")


# -- optimization -----------------------------------------------------------


class Adam:
    """Adam with bias correction; update is lr * m_hat / (sqrt(v_hat) + eps).

    Holds one first/second-moment buffer per named parameter.  The state is
    exposed (t, m, v and the hyperparameters) so checkpoints can carry it.
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ContractError(f"lr must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ContractError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ContractError(f"eps must be positive, got {eps}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        """Apply one update from the gradients currently stored on the parameters."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- gradient checking -------------------------------------------------------


def finite_diff_grad(
    loss_fn: Callable[[], float],
    params: Sequence[Tensor] | Mapping[str, Tensor],
    h: float = 1e-5,
):
    """Central-difference gradient of loss_fn w.r.t. every element of params.

    loss_fn must recompute the loss from the parameters' current .data on
    every call.  Returns gradients in the same container shape as params
    (list for a sequence, dict for a mapping).  O(2 * n_params) loss
    evaluations, so keep the model tiny.
    """
    if isinstance(params, Mapping):
        names = list(params.keys())
        tensors = [params[n] for n in names]
    else:
        names = None
        tensors = list(params)

    grads = []
    for p in tensors:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_fn()
            flat[i] = orig - h
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)

    if names is not None:
        return dict(zip(names, grads))
    return grads


def parameters_vector(params: Mapping[str, Tensor] | Iterable[Tensor]) -> np.ndarray:
    """Concatenate parameter values into one flat vector (for drift checks in tests)."""
    if isinstance(params, Mapping):
        tensors = params.values()
    else:
        tensors = params
    return np.concatenate([p.data.reshape(-1) for p in tensors])
