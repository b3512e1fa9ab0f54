"""Reverse-mode automatic differentiation over 1-D multi-channel signals.

Tensors carry arrays shaped ``[..., length, channels]`` (optional leading
batch axes; losses reduce to 0-d scalars).  Every operation records its
parents and a backward closure, so calling :meth:`Tensor.backward` on a
scalar loss walks the graph once in reverse topological order and
accumulates gradients onto leaf tensors.

The op set is intentionally small: exactly what a lifting-wavelet
reconstruction network and its spectral losses need.  Convolutions use
symmetric zero padding of (k-1)//2 per side, so stride-1 preserves length
and stride-2 halves it; the transposed convolution is the exact adjoint of
the strided convolution with the same geometry.

Training runs in float32; gradient checking builds float64 graphs
(python-scalar constants do not promote the dtype).  All computation is
single-threaded and deterministic for fixed inputs.
"""

import ctypes
import platform

import numpy as np

__all__ = [
    "Tensor", "Param", "as_tensor", "tune_malloc_for_large_arrays",
    "add", "sub", "mul", "scale", "neg", "relu", "sigmoid", "absval", "sqrtval",
    "matmul", "transpose_last", "conv1d", "conv1d_transposed",
    "polyphase_split_kernel", "polyphase_merge_kernel",
    "layer_norm", "softmax",
    "split_channels", "split_halves", "concat_channels",
    "channel_shuffle", "channel_unshuffle", "global_avg_pool",
    "polyphase_split", "polyphase_merge",
    "split_heads", "merge_heads", "multi_head_self_attention",
    "squeeze_channel", "frames", "tsum", "tmean",
    "check_gradients",
]


_malloc_tuned = False


def tune_malloc_for_large_arrays():
    """Keep big numpy temporaries on the reusable heap (Linux/glibc only).

    Training repeatedly allocates and frees identical large score matrices;
    with default glibc settings those round-trip through mmap/munmap and
    page-fault on every touch, which dominates the step time.  Raising the
    mmap and trim thresholds lets freed blocks be handed straight back.
    No-op on other platforms; safe to call more than once.
    """
    global _malloc_tuned
    if _malloc_tuned or platform.system() != "Linux":
        return
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)   # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)   # M_TRIM_THRESHOLD
        _malloc_tuned = True
    except OSError:
        pass


class Tensor:
    """A node in the computation graph.

    ``data`` is a numpy array of shape ``[..., L, C]`` (or 0-d for scalar
    losses).  Gradients accumulate on leaf tensors only: intermediates use
    transient storage during backward, so repeated ``backward()`` calls
    without a reset add up on leaves, matching optimizer semantics.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):
            # numpy scalar (e.g. a 0-d arithmetic result): keep its dtype
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float32)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float32)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        """A leaf copy that does not participate in the gradient graph."""
        return Tensor(self.data.copy())

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # arithmetic sugar; scalars bind to `scale`/`add`-with-constant
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def backward(self):
        """Accumulate d(self)/d(leaf) on every reachable leaf tensor.

        Raises if ``self`` is not scalar.  Unreachable leaves are left
        untouched (their grad reads as zero to the optimizer).
        """
        if self.data.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        # transient grads for interior nodes; persistent accumulation on leaves
        local = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = local.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in local:
                    local[key] = local[key] + pg
                else:
                    local[key] = pg


class Param:
    """A named model parameter with Adam moment buffers.

    Names are hierarchical paths (e.g. ``"lu.2.predict.csconv.0.weight"``)
    and must be unique within one model.  Moments start at zero and live in
    the parameter's dtype.
    """

    __slots__ = ("name", "tensor", "adam_m", "adam_v")

    def __init__(self, name, value):
        value = np.asarray(value)
        self.name = name
        self.tensor = Tensor(value, requires_grad=True)
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)

    @property
    def value(self):
        return self.tensor.data

    @value.setter
    def value(self, arr):
        if arr.shape != self.tensor.data.shape:
            raise ValueError(f"shape mismatch assigning {self.name}: "
                             f"{arr.shape} vs {self.tensor.data.shape}")
        self.tensor.data = arr

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.grad = None

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32) if not isinstance(x, np.ndarray) else x)


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape` by summing extra axes."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {what}")


def _result(data, parents, backward_fn):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents if req else (), backward_fn if req else None)


# ---------------------------------------------------------------------------
# pointwise ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _result(data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _result(data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), bw)


def scale(x, s):
    """Multiply by a python scalar (keeps dtype)."""
    x = as_tensor(x)
    s = float(s)
    return _result(x.data * s, (x,), lambda g: (g * s,))


def neg(x):
    x = as_tensor(x)
    return _result(-x.data, (x,), lambda g: (-g,))


def relu(x):
    """Elementwise max(x, 0); subgradient at 0 is 0."""
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    out = 1.0 / (1.0 + np.exp(-x.data))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def absval(x):
    """Elementwise |x|; subgradient at 0 is 0 (sign convention)."""
    x = as_tensor(x)
    sgn = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * sgn,))


def sqrtval(x):
    """Elementwise square root (caller guards x > 0)."""
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _result(out, (x,), lambda g: (g / (2.0 * out),))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Batched matrix product over the last two axes (numpy broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def bw(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return _result(data, (a, b), bw)


def transpose_last(x):
    x = as_tensor(x)
    return _result(x.data.swapaxes(-1, -2).copy(), (x,),
                   lambda g: (g.swapaxes(-1, -2),))


# ---------------------------------------------------------------------------
# convolutions

def _same_pad(k):
    return (k - 1) // 2


def _windows(arr, k, stride):
    """Strided sliding windows over the length axis: [..., T, C, k]."""
    win = np.lib.stride_tricks.sliding_window_view(arr, k, axis=-2)
    if stride > 1:
        win = win[..., ::stride, :, :]
    return win


def _scatter_windows(gwin, length, k, stride):
    """Adjoint of `_windows`: accumulate window grads into [..., length, C]."""
    lead = gwin.shape[:-3]
    t = gwin.shape[-3]
    c = gwin.shape[-2]
    out = np.zeros(lead + (length, c), dtype=gwin.dtype)
    for j in range(k):
        out[..., j:j + stride * t:stride, :] += gwin[..., :, :, j]
    return out


def conv1d(x, w, b=None, stride=1, padding="same"):
    """1-D convolution, channels-last.

    x: [..., L, Cin]; w: [Cout, Cin, k]; b: [Cout] or None.
    Symmetric zero padding of (k-1)//2 per side: stride 1 with odd k
    preserves length, stride 2 with even L yields L/2.
    """
    if padding != "same":
        raise ValueError(f"unsupported padding mode {padding!r}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    x = as_tensor(x)
    w = as_tensor(w)
    cout, cin, k = w.data.shape
    if x.data.shape[-1] != cin:
        raise ValueError(f"conv1d channel mismatch: input has {x.data.shape[-1]}, "
                         f"kernel expects {cin}")
    L = x.data.shape[-2]
    if stride == 1 and k % 2 == 0:
        raise ValueError("stride-1 conv1d requires an odd kernel size")
    if stride == 2 and L % 2 != 0:
        raise ValueError("stride-2 conv1d requires even input length")
    _check_finite(x.data, "conv1d input")

    p = _same_pad(k)
    pad_spec = [(0, 0)] * (x.data.ndim - 2) + [(p, p), (0, 0)]
    xp = np.pad(x.data, pad_spec)
    win = _windows(xp, k, stride)                       # [..., T, Cin, k]
    t = win.shape[-3]
    w2 = w.data.reshape(cout, cin * k)
    out = win.reshape(win.shape[:-2] + (cin * k,)) @ w2.T
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents.append(b)

    def bw(g):
        gflat = g.reshape(-1, cout)
        winflat = win.reshape(-1, cin * k)
        gw = (gflat.T @ winflat).reshape(cout, cin, k).astype(w.data.dtype, copy=False)
        gwin = (g @ w2).reshape(g.shape[:-1] + (cin, k))
        gxp = _scatter_windows(gwin, L + 2 * p, k, stride)
        gx = gxp[..., p:p + L, :]
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, cout).sum(axis=0)

    return _result(out, tuple(parents), bw)


def conv1d_transposed(x, w, b=None, stride=2, padding="same"):
    """Strided 1-D transposed convolution (upsampling), channels-last.

    x: [..., T, Cin]; w: [Cin, Cout, k]; output [..., stride*T, Cout].
    Exact adjoint of `conv1d` with the same stride/padding geometry, so
    <conv(x), y> == <x, convT(y)> for a shared kernel array.
    """
    if padding != "same":
        raise ValueError(f"unsupported padding mode {padding!r}")
    x = as_tensor(x)
    w = as_tensor(w)
    cin, cout, k = w.data.shape
    if x.data.shape[-1] != cin:
        raise ValueError(f"conv1d_transposed channel mismatch: input has "
                         f"{x.data.shape[-1]}, kernel expects {cin}")
    _check_finite(x.data, "conv1d_transposed input")
    t = x.data.shape[-2]
    n = stride * t
    p = _same_pad(k)

    u = (x.data @ w.data.reshape(cin, cout * k)).reshape(x.data.shape[:-1] + (cout, k))
    buf = np.zeros(x.data.shape[:-2] + (n + k, cout), dtype=u.dtype)
    for j in range(k):
        buf[..., j:j + stride * t:stride, :] += u[..., :, :, j]
    out = buf[..., p:p + n, :]
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents.append(b)

    def bw(g):
        pad_spec = [(0, 0)] * (g.ndim - 2) + [(p, p), (0, 0)]
        gp = np.pad(g, pad_spec)
        gwin = _windows(gp, k, stride)                  # [..., T, Cout, k]
        gwflat = gwin.reshape(gwin.shape[:-2] + (cout * k,))
        gx = gwflat @ w.data.reshape(cin, cout * k).T
        xflat = x.data.reshape(-1, cin)
        gw = (xflat.T @ gwflat.reshape(-1, cout * k)).reshape(cin, cout, k)
        gw = gw.astype(w.data.dtype, copy=False)
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, cout).sum(axis=0)

    return _result(out, tuple(parents), bw)


def polyphase_split_kernel(channels, k, dtype=np.float32):
    """Strided-conv kernel [2C, C, k] that copies even samples to the first
    C output channels and odd samples to the last C."""
    p = _same_pad(k)
    w = np.zeros((2 * channels, channels, k), dtype=dtype)
    for c in range(channels):
        w[c, c, p] = 1.0          # y[t, c]   = x[2t, c]
        w[channels + c, c, p + 1] = 1.0   # y[t, C+c] = x[2t+1, c]
    return w


def polyphase_merge_kernel(channels, k, swapped=False, dtype=np.float32):
    """Transposed-conv kernel [2C, C, k] inverting `polyphase_split_kernel`.

    swapped=False expects input channels ordered [even || odd] (the direct
    inverse of the split); swapped=True expects [odd || even], the layout
    produced when a synthesis unit concatenates its two branches.
    """
    p = _same_pad(k)
    w = np.zeros((2 * channels, channels, k), dtype=dtype)
    for c in range(channels):
        even_src = channels + c if swapped else c
        odd_src = c if swapped else channels + c
        w[even_src, c, p] = 1.0       # -> positions 2t
        w[odd_src, c, p + 1] = 1.0    # -> positions 2t+1
    return w


# ---------------------------------------------------------------------------
# normalization / attention


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize each position across channels, then affine-map.

    x: [..., L, C]; gamma, beta: [C].  eps > 0 guards zero variance, so a
    constant row maps to beta.
    """
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xc * ivar
    out = xhat * gamma.data + beta.data

    def bw(g):
        ggamma = (g * xhat).reshape(-1, c).sum(axis=0)
        gbeta = g.reshape(-1, c).sum(axis=0)
        gxh = g * gamma.data
        gx = (ivar / c) * (c * gxh
                           - gxh.sum(axis=-1, keepdims=True)
                           - xhat * (gxh * xhat).sum(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return _result(out, (x, gamma, beta), bw)


def softmax(x):
    """Row softmax over the last axis (max-shifted for stability)."""
    x = as_tensor(x)
    # fused in-place pipeline: score matrices are the largest arrays in a
    # forward pass, so keep the number of full passes minimal
    out = np.subtract(x.data, x.data.max(axis=-1, keepdims=True))
    np.exp(out, out=out)
    out /= out.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = np.einsum("...i,...i->...", g, out)[..., None]
        gx = np.subtract(g, dot)
        np.multiply(gx, out, out=gx)
        return (gx,)

    return _result(out, (x,), bw)


def split_heads(x, heads):
    """[..., L, C] -> [..., heads, L, C/heads]."""
    x = as_tensor(x)
    *lead, L, c = x.data.shape
    if c % heads != 0:
        raise ValueError(f"channels {c} not divisible by heads {heads}")
    d = c // heads
    data = np.ascontiguousarray(
        x.data.reshape(*lead, L, heads, d).swapaxes(-3, -2))

    def bw(g):
        return (g.swapaxes(-3, -2).reshape(x.data.shape),)

    return _result(data, (x,), bw)


def merge_heads(x):
    """[..., heads, L, d] -> [..., L, heads*d] (inverse of split_heads)."""
    x = as_tensor(x)
    *lead, h, L, d = x.data.shape
    data = np.ascontiguousarray(x.data.swapaxes(-3, -2)).reshape(*lead, L, h * d)

    def bw(g):
        return (g.reshape(*lead, L, h, d).swapaxes(-3, -2),)

    return _result(data, (x,), bw)


def multi_head_self_attention(x, wq, wk, wv, wo, heads,
                              bq=None, bk=None, bv=None, bo=None):
    """Scaled dot-product self-attention over positions.

    x: [..., L, C]; projection weights [C, C] (per-head blocks are the
    column slices), optional [C] biases.  Scores are scaled by
    1/sqrt(C/heads); each attention row normalizes to 1.  No positional
    encoding: locality comes from the surrounding convolutions.
    """
    x = as_tensor(x)
    c = x.data.shape[-1]
    if c % heads != 0:
        raise ValueError(f"channels {c} not divisible by heads {heads}")
    d = c // heads

    def project(w, b):
        out = matmul(x, w)
        return add(out, b) if b is not None else out

    # scale queries instead of scores: same math, touches a C/L-times
    # smaller array than the [L, L] score matrices
    q = split_heads(scale(project(wq, bq), 1.0 / np.sqrt(d)), heads)
    k = split_heads(project(wk, bk), heads)
    v = split_heads(project(wv, bv), heads)
    attn = softmax(matmul(q, transpose_last(k)))
    ctx = merge_heads(matmul(attn, v))
    out = matmul(ctx, wo)
    if bo is not None:
        out = add(out, bo)
    return out


# ---------------------------------------------------------------------------
# channel ops


def split_channels(x, start, stop):
    """Slice channels [start:stop) out of [..., L, C]."""
    x = as_tensor(x)
    data = np.ascontiguousarray(x.data[..., start:stop])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return _result(data, (x,), bw)


def split_halves(x):
    """[..., L, 2C] -> two [..., L, C] tensors (first half, last half)."""
    c = as_tensor(x).data.shape[-1]
    if c % 2 != 0:
        raise ValueError(f"split_halves requires an even channel count, got {c}")
    return split_channels(x, 0, c // 2), split_channels(x, c // 2, c)


def concat_channels(parts):
    """Concatenate along the channel axis; inverse of split."""
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[-1] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=-1)

    def bw(g):
        offs = np.cumsum([0] + sizes)
        return tuple(np.ascontiguousarray(g[..., offs[i]:offs[i + 1]])
                     for i in range(len(parts)))

    return _result(data, tuple(parts), bw)


def _shuffle_dest(channels, groups):
    # channel c moves to position (c mod g)*(C/g) + c//g
    c = np.arange(channels)
    return (c % groups) * (channels // groups) + c // groups


def channel_shuffle(x, groups):
    """Fixed permutation mixing `groups` consecutive channel blocks."""
    x = as_tensor(x)
    c = x.data.shape[-1]
    if c % groups != 0:
        raise ValueError(f"channels {c} not divisible by groups {groups}")
    dest = _shuffle_dest(c, groups)
    gather = np.empty(c, dtype=np.intp)
    gather[dest] = np.arange(c)   # out[j] = x[gather[j]]
    data = np.ascontiguousarray(x.data[..., gather])

    def bw(g):
        return (np.ascontiguousarray(g[..., dest]),)

    return _result(data, (x,), bw)


def channel_unshuffle(x, groups):
    """Exact inverse permutation of `channel_shuffle`."""
    x = as_tensor(x)
    c = x.data.shape[-1]
    if c % groups != 0:
        raise ValueError(f"channels {c} not divisible by groups {groups}")
    dest = _shuffle_dest(c, groups)
    data = np.ascontiguousarray(x.data[..., dest])

    def bw(g):
        gather = np.empty(c, dtype=np.intp)
        gather[dest] = np.arange(c)
        return (np.ascontiguousarray(g[..., gather]),)

    return _result(data, (x,), bw)


def global_avg_pool(x):
    """[..., L, C] -> [..., 1, C], mean over positions."""
    x = as_tensor(x)
    L = x.data.shape[-2]
    data = x.data.mean(axis=-2, keepdims=True)

    def bw(g):
        return (np.broadcast_to(g / L, x.data.shape).copy(),)

    return _result(data, (x,), bw)


def _decimate(x, phase):
    x = as_tensor(x)
    data = np.ascontiguousarray(x.data[..., phase::2, :])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[..., phase::2, :] = g
        return (gx,)

    return _result(data, (x,), bw)


def polyphase_split(x):
    """Lazy-wavelet split: ([..., even samples], [..., odd samples])."""
    L = as_tensor(x).data.shape[-2]
    if L % 2 != 0:
        raise ValueError(f"polyphase_split requires even length, got {L}")
    return _decimate(x, 0), _decimate(x, 1)


def polyphase_merge(even, odd):
    """Interleave two half-length signals back to full length."""
    even, odd = as_tensor(even), as_tensor(odd)
    if even.data.shape != odd.data.shape:
        raise ValueError(f"polyphase_merge shape mismatch: "
                         f"{even.data.shape} vs {odd.data.shape}")
    half = even.data.shape[-2]
    out = np.empty(even.data.shape[:-2] + (2 * half,) + even.data.shape[-1:],
                   dtype=even.data.dtype)
    out[..., 0::2, :] = even.data
    out[..., 1::2, :] = odd.data

    def bw(g):
        return (np.ascontiguousarray(g[..., 0::2, :]),
                np.ascontiguousarray(g[..., 1::2, :]))

    return _result(out, (even, odd), bw)


# ---------------------------------------------------------------------------
# reductions / framing (loss support)


def squeeze_channel(x):
    """[..., L, 1] -> [..., L]."""
    x = as_tensor(x)
    if x.data.shape[-1] != 1:
        raise ValueError(f"squeeze_channel expects a single channel, got {x.data.shape[-1]}")
    data = x.data[..., 0].copy()

    def bw(g):
        return (g[..., None],)

    return _result(data, (x,), bw)


def frames(x, width, hop):
    """Frame [..., L] into [..., F, width] with F = (L-width)//hop + 1.

    No boundary padding: every frame lies fully inside the signal.
    """
    x = as_tensor(x)
    L = x.data.shape[-1]
    if width > L:
        raise ValueError(f"frame width {width} exceeds signal length {L}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    nf = (L - width) // hop + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, width, axis=-1)
    data = np.ascontiguousarray(win[..., ::hop, :][..., :nf, :])

    def bw(g):
        gx = np.zeros_like(x.data)
        for f in range(nf):
            gx[..., f * hop:f * hop + width] += g[..., f, :]
        return (gx,)

    return _result(data, (x,), bw)


def tsum(x):
    """Sum all entries to a scalar."""
    x = as_tensor(x)
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bw(g):
        return (np.full(x.data.shape, g, dtype=x.data.dtype),)

    return _result(data, (x,), bw)


def tmean(x):
    """Mean of all entries as a scalar."""
    x = as_tensor(x)
    n = x.data.size
    data = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def bw(g):
        return (np.full(x.data.shape, g / n, dtype=x.data.dtype),)

    return _result(data, (x,), bw)


# ---------------------------------------------------------------------------
# gradient checking


def check_gradients(build_loss, inputs, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    build_loss maps {name: Tensor} to a scalar Tensor; inputs maps names to
    arrays (promoted to float64 for the check).  Relative error per entry is
    |analytic - numeric| / max(|numeric|, 1e-8); the max over all entries of
    all inputs is returned.
    """
    base = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}

    tensors = {k: Tensor(v.copy(), requires_grad=True) for k, v in base.items()}
    loss = build_loss(tensors)
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in tensors.items()}

    def evaluate():
        ts = {k: Tensor(v) for k, v in base.items()}
        return float(build_loss(ts).data)

    worst = 0.0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            fp = evaluate()
            flat[i] = keep - eps
            fm = evaluate()
            flat[i] = keep
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(abs(numeric), 1e-8)
            if err > worst:
                worst = err
    return worst
