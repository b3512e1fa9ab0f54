"""The lifting-wavelet reconstruction network.

Analysis runs the input feature through N lifting units, each of which
splits a length-l feature into two half-length parts, predicts the detail
component as the residual against one part, and updates the other into the
next approximation.  Synthesis mirrors this with inverse lifting units
(update, predict, merge), consuming the detail stack in reverse, so the
network is a structurally invertible multi-scale autoencoder whose
"filters" are learned predict/update blocks.

Predict and update blocks share one architecture: a multi-kernel
convolution cascade with channel shuffling, a layer-normalized multi-head
self-attention, and a squeeze-excitation channel gate.  Every sub-layer
can be disabled (replaced by identity) for ablations; split/merge can be
swapped between learned strided (de)convolutions and the fixed even/odd
polyphase operators.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad


@dataclass
class ModelConfig:
    scales: int = 4
    channels: int = 32
    input_length: int = 1024
    projection_kernel: int = 31
    csconv_kernels: tuple = (31, 33, 35, 37)
    attention_heads: int = 4
    channel_attention_reduction: int = 4
    csconv_topology: str = "cascade"    # "cascade" | "parallel"
    share_analysis_params: bool = False
    share_synthesis_params: bool = False
    learnable_split: bool = True
    learnable_merge: bool = True
    use_csconv: bool = True
    use_self_attention: bool = True
    use_channel_attention: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.csconv_kernels = tuple(self.csconv_kernels)
        if self.scales < 1:
            raise ValueError("scales must be >= 1")
        if self.input_length % (2 ** self.scales) != 0:
            raise ValueError(f"input length {self.input_length} not divisible "
                             f"by 2^{self.scales}")
        if self.channels % self.attention_heads != 0:
            raise ValueError(f"channels {self.channels} not divisible by "
                             f"{self.attention_heads} attention heads")
        if self.channels % self.channel_attention_reduction != 0:
            raise ValueError(f"channels {self.channels} not divisible by "
                             f"channel-attention reduction "
                             f"{self.channel_attention_reduction}")
        if self.use_csconv and self.channels % len(self.csconv_kernels) != 0:
            raise ValueError(f"channels {self.channels} not divisible by "
                             f"{len(self.csconv_kernels)} csconv branches")
        for k in (self.projection_kernel, *self.csconv_kernels):
            if k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd, got {k}")
        if self.csconv_topology not in ("cascade", "parallel"):
            raise ValueError(f"unknown csconv topology {self.csconv_topology!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def branch_filters(self):
        return self.channels // len(self.csconv_kernels)

    def to_dict(self):
        d = asdict(self)
        d["csconv_kernels"] = list(self.csconv_kernels)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Registry:
    """Insertion-ordered parameter store with unique hierarchical names."""

    def __init__(self):
        self.params = {}

    def add(self, name, value):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = ad.Param(name, value)
        self.params[name] = p
        return p

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1d:
    def __init__(self, reg, name, cin, cout, kernel, rng, dtype, stride=1):
        self.stride = stride
        self.weight = reg.add(f"{name}.weight",
                              _uniform(rng, (cout, cin, kernel), cin * kernel, dtype))
        self.bias = reg.add(f"{name}.bias", np.zeros(cout, dtype=dtype))

    def __call__(self, x):
        return ad.conv1d(x, self.weight.tensor, self.bias.tensor, stride=self.stride)


class ConvTranspose1d:
    def __init__(self, reg, name, cin, cout, kernel, rng, dtype, stride=2):
        self.stride = stride
        self.weight = reg.add(f"{name}.weight",
                              _uniform(rng, (cin, cout, kernel), cin * kernel, dtype))
        self.bias = reg.add(f"{name}.bias", np.zeros(cout, dtype=dtype))

    def __call__(self, x):
        return ad.conv1d_transposed(x, self.weight.tensor, self.bias.tensor,
                                    stride=self.stride)


class CSConv:
    """Multi-kernel convolution cascade with channel shuffling.

    Four convolutions with growing kernel sizes run in sequence (each branch
    consuming the previous one's output); the per-branch outputs are
    concatenated back to the block width and shuffled across groups so later
    layers mix receptive fields.  ReLU follows every convolution.  The
    "parallel" topology feeds every branch from the block input instead.
    """

    def __init__(self, reg, name, cfg, rng):
        c = cfg.channels
        f = cfg.branch_filters
        self.topology = cfg.csconv_topology
        self.groups = len(cfg.csconv_kernels)
        self.branches = []
        cin = c
        for i, k in enumerate(cfg.csconv_kernels):
            self.branches.append(
                Conv1d(reg, f"{name}.{i}", cin, f, k, rng, cfg.np_dtype))
            cin = f if self.topology == "cascade" else c

    def __call__(self, x):
        taps = []
        h = x
        for conv in self.branches:
            src = h if self.topology == "cascade" else x
            h = ad.relu(conv(src))
            taps.append(h)
        return ad.channel_shuffle(ad.concat_channels(taps), self.groups)


class SelfAttentionLayer:
    """Layer norm followed by multi-head self-attention (no residual: the
    lifting equations already provide the residual structure)."""

    def __init__(self, reg, name, cfg, rng):
        c = cfg.channels
        dt = cfg.np_dtype
        self.heads = cfg.attention_heads
        self.ln_gamma = reg.add(f"{name}.ln.gamma", np.ones(c, dtype=dt))
        self.ln_beta = reg.add(f"{name}.ln.beta", np.zeros(c, dtype=dt))
        self.weights = {}
        self.biases = {}
        for proj in ("wq", "wk", "wv", "wo"):
            self.weights[proj] = reg.add(f"{name}.{proj}", _uniform(rng, (c, c), c, dt))
        # no key bias: a constant shift of every key moves each score row
        # uniformly, which softmax cancels, leaving a dead parameter
        for proj in ("wq", "wv", "wo"):
            self.biases[proj] = reg.add(f"{name}.{proj[1]}_bias", np.zeros(c, dtype=dt))

    def __call__(self, x):
        h = ad.layer_norm(x, self.ln_gamma.tensor, self.ln_beta.tensor)
        w = {k: v.tensor for k, v in self.weights.items()}
        b = {k: v.tensor for k, v in self.biases.items()}
        return ad.multi_head_self_attention(
            h, w["wq"], w["wk"], w["wv"], w["wo"], self.heads,
            bq=b["wq"], bv=b["wv"], bo=b["wo"])


class ChannelAttention:
    """Squeeze-excitation gate: pool -> reduce -> ReLU -> expand -> sigmoid."""

    def __init__(self, reg, name, cfg, rng):
        c = cfg.channels
        r = cfg.channel_attention_reduction
        dt = cfg.np_dtype
        self.w1 = reg.add(f"{name}.reduce.weight", _uniform(rng, (c, c // r), c, dt))
        self.b1 = reg.add(f"{name}.reduce.bias", np.zeros(c // r, dtype=dt))
        self.w2 = reg.add(f"{name}.expand.weight", _uniform(rng, (c // r, c), c // r, dt))
        self.b2 = reg.add(f"{name}.expand.bias", np.zeros(c, dtype=dt))

    def __call__(self, x):
        pooled = ad.global_avg_pool(x)
        h = ad.relu(ad.add(ad.matmul(pooled, self.w1.tensor), self.b1.tensor))
        gate = ad.sigmoid(ad.add(ad.matmul(h, self.w2.tensor), self.b2.tensor))
        return ad.mul(x, gate)


class PredictUpdateBlock:
    """Shape-preserving [l, C] -> [l, C] operator used for both the predict
    and update roles.  Disabled sub-layers pass their input through."""

    def __init__(self, reg, name, cfg, rng):
        self.csconv = CSConv(reg, f"{name}.csconv", cfg, rng) if cfg.use_csconv else None
        self.attention = (SelfAttentionLayer(reg, f"{name}.attn", cfg, rng)
                          if cfg.use_self_attention else None)
        self.channel_attention = (ChannelAttention(reg, f"{name}.ca", cfg, rng)
                                  if cfg.use_channel_attention else None)

    def __call__(self, x):
        if self.csconv is not None:
            x = self.csconv(x)
        if self.attention is not None:
            x = self.attention(x)
        if self.channel_attention is not None:
            x = self.channel_attention(x)
        return x


class LiftingUnit:
    """Analysis step: split -> predict -> update.

    Splitting either applies a learned strided convolution [l, C] ->
    [l/2, 2C] followed by a channel-halves split, or the fixed even/odd
    polyphase split.  Then detail = first_part - P(second_part) and
    approximation = second_part + U(detail).
    """

    def __init__(self, reg, name, cfg, rng, predict=None, update=None):
        c = cfg.channels
        self.split = (Conv1d(reg, f"{name}.split", c, 2 * c, cfg.projection_kernel,
                             rng, cfg.np_dtype, stride=2)
                      if cfg.learnable_split else None)
        self.predict = predict or PredictUpdateBlock(reg, f"{name}.predict", cfg, rng)
        self.update = update or PredictUpdateBlock(reg, f"{name}.update", cfg, rng)

    def __call__(self, f):
        if self.split is not None:
            f_e, f_o = ad.split_halves(self.split(f))
        else:
            f_e, f_o = ad.polyphase_split(f)
        f_d = ad.sub(f_e, self.predict(f_o))
        f_a = ad.add(f_o, self.update(f_d))
        return f_a, f_d


class InverseLiftingUnit:
    """Synthesis step: update -> predict -> merge (exact algebraic inverse
    of the lifting step when it shares the same P and U)."""

    def __init__(self, reg, name, cfg, rng, predict=None, update=None):
        c = cfg.channels
        self.merge = (ConvTranspose1d(reg, f"{name}.merge", 2 * c, c,
                                      cfg.projection_kernel, rng, cfg.np_dtype)
                      if cfg.learnable_merge else None)
        self.predict = predict or PredictUpdateBlock(reg, f"{name}.predict", cfg, rng)
        self.update = update or PredictUpdateBlock(reg, f"{name}.update", cfg, rng)

    def __call__(self, g_a, g_d):
        if g_a.data.shape != g_d.data.shape:
            raise ValueError(f"approximation/detail shape mismatch: "
                             f"{g_a.data.shape} vs {g_d.data.shape}")
        g_o = ad.sub(g_a, self.update(g_d))
        g_e = ad.add(g_d, self.predict(g_o))
        if self.merge is not None:
            return self.merge(ad.concat_channels([g_o, g_e]))
        # fixed placement: even-indexed part back to even sample positions
        return ad.polyphase_merge(g_e, g_o)


class LiftingNetwork:
    """Input projection, N lifting / inverse-lifting scales, output projection.

    The deepest approximation feeds synthesis unchanged; each inverse unit
    consumes the synthesis approximation from the scale below plus the
    matching analysis detail.  Output length equals input length.
    """

    def __init__(self, config):
        self.config = config
        self.registry = Registry()
        rng = np.random.default_rng(config.seed)
        c = config.channels
        k = config.projection_kernel
        dt = config.np_dtype

        self.in_proj = Conv1d(self.registry, "in_proj", 1, c, k, rng, dt)

        if config.share_analysis_params:
            shared = LiftingUnit(self.registry, "lu.shared", config, rng)
            self.lus = [shared] * config.scales
        else:
            self.lus = [LiftingUnit(self.registry, f"lu.{i + 1}", config, rng)
                        for i in range(config.scales)]

        if config.share_synthesis_params:
            shared = InverseLiftingUnit(self.registry, "ilu.shared", config, rng)
            self.ilus = [shared] * config.scales
        else:
            self.ilus = [InverseLiftingUnit(self.registry, f"ilu.{i + 1}", config, rng)
                         for i in range(config.scales)]

        self.out_proj = Conv1d(self.registry, "out_proj", c, 1, k, rng, dt)

    # -- parameter access ---------------------------------------------------

    def params(self):
        return list(self.registry)

    def zero_grads(self):
        for p in self.registry:
            p.zero_grad()

    def param_count(self):
        return sum(p.value.size for p in self.registry)

    def get_param(self, name):
        return self.registry.params[name]

    # -- forward ------------------------------------------------------------

    def _prepare_input(self, x):
        if not isinstance(x, ad.Tensor):
            arr = np.asarray(x, dtype=self.config.np_dtype)
            if arr.ndim == 1:
                arr = arr[:, None]
            x = ad.Tensor(arr)
        if x.data.shape[-1] != 1:
            raise ValueError(f"expected single-channel input, got {x.data.shape[-1]}")
        if x.data.shape[-2] != self.config.input_length:
            raise ValueError(f"input length {x.data.shape[-2]} != configured "
                             f"{self.config.input_length}")
        return x

    def forward(self, x):
        out, _ = self._run(x, collect=False)
        return out

    def __call__(self, x):
        return self.forward(x)

    def _run(self, x, collect):
        x = self._prepare_input(x)
        feats = {}
        f_a = self.in_proj(x)
        if collect:
            feats["in_proj"] = f_a
        details = []
        for i, lu in enumerate(self.lus):
            f_a, f_d = lu(f_a)
            details.append(f_d)
            if collect:
                feats[f"lu{i + 1}_approx"] = f_a
                feats[f"lu{i + 1}_detail"] = f_d
        g_a = f_a
        for i in reversed(range(self.config.scales)):
            g_a = self.ilus[i](g_a, details[i])
            if collect:
                feats[f"ilu{i + 1}_out"] = g_a
        out = self.out_proj(g_a)
        if collect:
            feats["out_proj"] = out
        return out, feats

    def predict_numpy(self, x):
        """Convenience inference: numpy in, numpy out, no graph kept."""
        return self.forward(np.asarray(x)).data


def export_intermediate_features(model, x):
    """Per-scale feature dumps for inspection/plotting.

    Returns an ordered dict name -> array covering the input projection,
    each scale's analysis approximation and detail, each scale's synthesis
    output, and the final projection (2N analysis + N synthesis + 2
    projection entries).
    """
    _, feats = model._run(x, collect=True)
    return {name: t.data.copy() for name, t in feats.items()}


# ---------------------------------------------------------------------------
# cost accounting


def count_params_flops(config):
    """Exact parameter count plus a flop estimate for one forward pass.

    Flops are counted as 2 per multiply-accumulate for convolutions,
    attention matmuls (projections, scores, context), channel-attention
    matmuls and layer norms, at the configured input length.
    """
    model = LiftingNetwork(config)
    params = model.param_count()

    c = config.channels
    f = config.branch_filters
    heads = config.attention_heads
    red = config.channel_attention_reduction
    k = config.projection_kernel

    def conv_flops(length_out, cin, cout, kernel):
        return 2 * length_out * cin * cout * kernel

    def block_flops(length):
        total = 0
        if config.use_csconv:
            cin = c
            for kk in config.csconv_kernels:
                total += conv_flops(length, cin, f, kk)
                cin = f if config.csconv_topology == "cascade" else c
        if config.use_self_attention:
            total += 2 * 4 * length * c * c          # q, k, v, o projections
            total += 2 * 2 * length * length * c     # scores and context
            total += 2 * 4 * length * c              # layer norm moments/affine
        if config.use_channel_attention:
            total += 2 * length * c                  # pooled mean
            total += 2 * (c * (c // red) + (c // red) * c)
            total += 2 * length * c                  # gating product
        return total

    flops = 0
    L = config.input_length
    flops += conv_flops(L, 1, c, k)                  # input projection
    for i in range(config.scales):
        li = L // (2 ** i)
        half = li // 2
        if config.learnable_split:
            flops += conv_flops(half, c, 2 * c, k)
        flops += 2 * block_flops(half)               # predict + update (LU)
        flops += 2 * block_flops(half)               # predict + update (ILU)
        if config.learnable_merge:
            flops += conv_flops(li, 2 * c, c, k)
    flops += conv_flops(L, c, 1, k)                  # output projection

    return {"params": params, "flops_per_forward": flops}


# ---------------------------------------------------------------------------
# finite-difference verification of the whole network


def model_gradient_check(model, x, eps=1e-5, max_entries_per_param=None,
                         jitter=0.05):
    """Max relative error of parameter/input gradients through the model.

    Builds the scalar probe loss sum(output * R) for a fixed random R,
    backpropagates once, then central-differences every parameter entry
    (and the input).  Use a float64 model for meaningful tolerances.

    `jitter` randomly offsets every parameter first: zero-initialized biases
    otherwise leave ReLU pre-activations sitting exactly on the kink, where
    a central difference measures the two-sided average instead of the
    chosen subgradient.  The check must run at a generic point.
    """
    x = np.asarray(x, dtype=model.config.np_dtype)
    rng = np.random.default_rng(1234)
    if jitter:
        for p in model.params():
            p.value = p.value + rng.normal(scale=jitter, size=p.value.shape
                                           ).astype(p.value.dtype)
    xt = ad.Tensor(x.copy(), requires_grad=True)
    probe = rng.normal(size=model.forward(xt).data.shape).astype(model.config.np_dtype)

    # mean-scaled probe keeps |loss| small: difference-quotient roundoff is
    # proportional to |loss|, and the relative-error floor of 1e-8 makes the
    # check sensitive to absolute noise on near-zero gradients
    def loss_value():
        return float(ad.tmean(ad.mul(model.forward(ad.Tensor(x)),
                                     ad.Tensor(probe))).data)

    model.zero_grads()
    xt = ad.Tensor(x.copy(), requires_grad=True)
    loss = ad.tmean(ad.mul(model.forward(xt), ad.Tensor(probe)))
    loss.backward()

    worst = 0.0

    def fd_check(arr, grad):
        nonlocal worst
        flat = arr.reshape(-1)
        gflat = (grad if grad is not None else np.zeros_like(arr)).reshape(-1)
        idx = np.arange(flat.size)
        if max_entries_per_param is not None and flat.size > max_entries_per_param:
            idx = rng.choice(flat.size, size=max_entries_per_param, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + eps
            fp = loss_value()
            flat[i] = keep - eps
            fm = loss_value()
            flat[i] = keep
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(gflat[i] - numeric) / max(abs(numeric), 1e-8)
            worst = max(worst, err)

    for p in model.params():
        fd_check(p.value, p.grad)
    fd_check(x, xt.grad)
    return worst
