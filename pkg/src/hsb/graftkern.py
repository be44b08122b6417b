"""Reference implementation of the windowed cross-attention grafting kernel.

Everything runs in float64 numpy with explicit forward caches and a
hand-written reverse pass, so gradients can be checked against central
finite differences.  This is a numerical oracle, not a training engine:
clarity and verifiability beat speed.

Conventions:
  feature maps     (C, H, W)
  window tensors   (N, S*S, C), windows in row-major grid order, pixels in
                   row-major order inside each window
  attention maps   (N, S*S, S*S), query rows x key columns
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_WINDOW_SIZE = 8
DEFAULT_CHANNELS = 32
DEFAULT_ALPHA = 2.0
ALLOWED_ALPHA = (0.0, 1.0, 2.0, 3.0)
BN_EPS = 1e-5
LN_EPS = 1e-5
FD_TOL = 1e-4
SYM_TOL = 1e-12


# --------------------------------------------------------------------------
# schedule


@dataclass
class PyramidSchedule:
    """Spatial sizes of the three encoder branches and their stage grid."""

    input_size: tuple[int, int]
    branch_inputs: list[tuple[int, int]]
    stages: dict[tuple[int, int], tuple[int, int]]
    graft_pairs: list[tuple[tuple[int, int], tuple[int, int]]]


def pyramid_schedule(height: int, width: int) -> PyramidSchedule:
    """Stage (i, j) of branch i = 1..3 runs at size / 2**(4 - i + j).

    Grafting couples the equally sized stages (i, j) and (i+1, j+1).
    """
    if height % 256 or width % 256:
        raise ValueError(
            f"input size must be divisible by 256, got {height}x{width}")
    branch_inputs = [(height >> (3 - i), width >> (3 - i)) for i in (1, 2, 3)]
    stages = {}
    for i in (1, 2, 3):
        for j in (1, 2, 3, 4):
            s = 4 - i + j
            stages[(i, j)] = (height >> s, width >> s)
    pairs = [((i, j), (i + 1, j + 1)) for i in (1, 2) for j in (1, 2, 3)]
    for a, b in pairs:
        assert stages[a] == stages[b]
    return PyramidSchedule((height, width), branch_inputs, stages, pairs)


# --------------------------------------------------------------------------
# parameter containers


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS


@dataclass
class ConvBnRelu:
    """Pointwise (1x1) convolution, batch norm, ReLU."""

    weight: np.ndarray  # (c_out, c_in)
    bias: np.ndarray    # (c_out,)
    bn: BatchNormParams


@dataclass
class Compressor:
    """Two successive ConvBnRelu stages squeezing the channel count."""

    stage1: ConvBnRelu
    stage2: ConvBnRelu


@dataclass
class LayerNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = LN_EPS


@dataclass
class GraftParams:
    comp_r1: Compressor
    comp_r2: Compressor | None
    comp_s: Compressor
    ln_r: LayerNormParams
    ln_s: LayerNormParams
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    cam_conv_w: np.ndarray  # (3, 3)
    cam_conv_b: np.ndarray  # (1,)
    cam_bn: BatchNormParams  # single channel
    alpha: np.ndarray  # (1,), differentiable exponent of the re-weighting

    @property
    def channels(self) -> int:
        return self.w_q.shape[0]


def param_leaves(params: GraftParams) -> list[tuple[str, np.ndarray]]:
    """All learnable arrays, keyed the same way graft_backward keys grads.

    Batch-norm running statistics are buffers, not parameters, and are
    excluded on purpose.
    """
    leaves: list[tuple[str, np.ndarray]] = []

    def add_bn(prefix, bn):
        leaves.append((prefix + ".gamma", bn.gamma))
        leaves.append((prefix + ".beta", bn.beta))

    def add_comp(prefix, comp):
        for sname in ("stage1", "stage2"):
            st = getattr(comp, sname)
            leaves.append((f"{prefix}.{sname}.weight", st.weight))
            leaves.append((f"{prefix}.{sname}.bias", st.bias))
            add_bn(f"{prefix}.{sname}.bn", st.bn)

    add_comp("comp_r1", params.comp_r1)
    if params.comp_r2 is not None:
        add_comp("comp_r2", params.comp_r2)
    add_comp("comp_s", params.comp_s)
    for name in ("ln_r", "ln_s"):
        ln = getattr(params, name)
        leaves.append((name + ".gamma", ln.gamma))
        leaves.append((name + ".beta", ln.beta))
    for name in ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_out", "b_out",
                 "cam_conv_w", "cam_conv_b"):
        leaves.append((name, getattr(params, name)))
    add_bn("cam_bn", params.cam_bn)
    leaves.append(("alpha", params.alpha))
    return leaves


# --------------------------------------------------------------------------
# window bookkeeping


def window_partition(fmap: np.ndarray, window_size: int) -> np.ndarray:
    """(C, H, W) -> (N, S*S, C) with non-overlapping S x S windows."""
    c, h, w = fmap.shape
    s = window_size
    if h % s or w % s:
        raise ValueError(f"{h}x{w} map not divisible by window size {s}")
    gh, gw = h // s, w // s
    x = fmap.reshape(c, gh, s, gw, s)
    return np.ascontiguousarray(x.transpose(1, 3, 2, 4, 0)).reshape(
        gh * gw, s * s, c)


def window_merge(windows: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of window_partition."""
    n, ss, c = windows.shape
    s = math.isqrt(ss)
    if s * s != ss:
        raise ValueError(f"window axis {ss} is not a square")
    gh, gw = height // s, width // s
    if n != gh * gw:
        raise ValueError(f"{n} windows cannot tile {height}x{width} at S={s}")
    x = windows.reshape(gh, gw, s, s, c)
    return np.ascontiguousarray(x.transpose(4, 0, 2, 1, 3)).reshape(
        c, height, width)


# --------------------------------------------------------------------------
# layer primitives (forward returns a cache consumed by the matching
# backward; batch-norm stats in training mode are population moments)


def _bn_fwd(x2, bn, training):
    # x2: (channels, samples)
    if training:
        mu = x2.mean(axis=1)
        var = x2.var(axis=1)
    else:
        mu = bn.running_mean
        var = bn.running_var
    inv = 1.0 / np.sqrt(var + bn.eps)
    xhat = (x2 - mu[:, None]) * inv[:, None]
    y = bn.gamma[:, None] * xhat + bn.beta[:, None]
    return y, (xhat, inv, training)


def _bn_bwd(dy, cache, bn):
    xhat, inv, training = cache
    dgamma = (dy * xhat).sum(axis=1)
    dbeta = dy.sum(axis=1)
    scale = (bn.gamma * inv)[:, None]
    if training:
        dx = scale * (dy - dy.mean(axis=1, keepdims=True)
                      - xhat * (dy * xhat).mean(axis=1, keepdims=True))
    else:
        dx = scale * dy
    return dx, dgamma, dbeta


def _ln_fwd(x, ln):
    # x: (..., C), normalized over the channel axis
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + ln.eps)
    xhat = (x - mu) * inv
    return ln.gamma * xhat + ln.beta, (xhat, inv)


def _ln_bwd(dy, cache, ln):
    xhat, inv = cache
    dgamma = (dy * xhat).sum(axis=(0, 1))
    dbeta = dy.sum(axis=(0, 1))
    dxhat = dy * ln.gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def _cbr_fwd(x2, layer, training):
    pre = layer.weight @ x2 + layer.bias[:, None]
    bn_out, bn_cache = _bn_fwd(pre, layer.bn, training)
    return np.maximum(bn_out, 0.0), (x2, bn_cache, bn_out)


def _cbr_bwd(dy, cache, layer, grads, prefix):
    x2, bn_cache, bn_out = cache
    dy = dy * (bn_out > 0.0)
    dpre, dgamma, dbeta = _bn_bwd(dy, bn_cache, layer.bn)
    grads[prefix + ".weight"] = dpre @ x2.T
    grads[prefix + ".bias"] = dpre.sum(axis=1)
    grads[prefix + ".bn.gamma"] = dgamma
    grads[prefix + ".bn.beta"] = dbeta
    return layer.weight.T @ dpre


def _compressor_fwd(fmap, comp, training):
    c, h, w = fmap.shape
    x2 = fmap.reshape(c, h * w)
    y1, c1 = _cbr_fwd(x2, comp.stage1, training)
    y2, c2 = _cbr_fwd(y1, comp.stage2, training)
    return y2.reshape(-1, h, w), (c1, c2, (c, h, w))


def _compressor_bwd(dy, cache, comp, grads, prefix):
    c1, c2, in_shape = cache
    d2 = dy.reshape(dy.shape[0], -1)
    d1 = _cbr_bwd(d2, c2, comp.stage2, grads, prefix + ".stage2")
    dx = _cbr_bwd(d1, c1, comp.stage1, grads, prefix + ".stage1")
    return dx.reshape(in_shape)


def _conv3_fwd(x, kernel, bias):
    # x: (N, M, M); 3x3 same convolution with zero padding, one channel
    n, m, _ = x.shape
    xp = np.zeros((n, m + 2, m + 2))
    xp[:, 1:-1, 1:-1] = x
    y = np.full((n, m, m), float(bias[0]))
    for u in range(3):
        for v in range(3):
            y += kernel[u, v] * xp[:, u:u + m, v:v + m]
    return y, xp


def _conv3_bwd(dy, xp, kernel):
    n, m, _ = dy.shape
    dk = np.empty((3, 3))
    dxp = np.zeros_like(xp)
    for u in range(3):
        for v in range(3):
            dk[u, v] = (xp[:, u:u + m, v:v + m] * dy).sum()
            dxp[:, u:u + m, v:v + m] += kernel[u, v] * dy
    db = np.array([dy.sum()])
    return dxp[:, 1:-1, 1:-1], dk, db


def _softmax_rows(y):
    m = y.max(axis=-1, keepdims=True)
    e = np.exp(y - m)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --------------------------------------------------------------------------
# forward


@dataclass
class CamStack:
    """Cross-attention matrices of one grafting site, window by window."""

    windows: np.ndarray  # (N, S*S, S*S), entries in (0, 1)
    grid: tuple[int, int]
    window_size: int


@dataclass
class GraftTrace:
    """Forward activations plus every cache the reverse pass needs."""

    params: GraftParams
    window_size: int
    map_size: tuple[int, int]
    training: bool
    inputs: dict
    output: np.ndarray  # (C, H, W)
    cam: np.ndarray     # (N, S*S, S*S)
    _cache: dict = field(repr=False, default_factory=dict)

    @property
    def cam_stack(self) -> CamStack:
        s = self.window_size
        h, w = self.map_size
        return CamStack(self.cam, (h // s, w // s), s)


def graft_forward(f_r1, f_r2, f_s, params: GraftParams, window_size: int,
                  training: bool = True) -> GraftTrace:
    """Graft the fine branch features f_s onto the coarse branch f_r.

    f_r1 and optional f_r2 are the coarse-branch maps to be compressed and
    summed; f_s is the parallel-stage map of the next branch.  All three
    must share the spatial size, which must tile by the window size.
    """
    f_r1 = np.asarray(f_r1, np.float64)
    f_s = np.asarray(f_s, np.float64)
    if f_r1.shape[1:] != f_s.shape[1:]:
        raise ValueError(
            f"spatial mismatch: {f_r1.shape[1:]} vs {f_s.shape[1:]}")
    if (f_r2 is None) != (params.comp_r2 is None):
        raise ValueError("f_r2 and comp_r2 must be supplied together")
    s = window_size
    _, h, w = f_r1.shape
    cache: dict = {}

    fr, cache["comp_r1"] = _compressor_fwd(f_r1, params.comp_r1, training)
    if f_r2 is not None:
        f_r2 = np.asarray(f_r2, np.float64)
        fr2, cache["comp_r2"] = _compressor_fwd(f_r2, params.comp_r2, training)
        fr = fr + fr2
    fs, cache["comp_s"] = _compressor_fwd(f_s, params.comp_s, training)

    fr_win = window_partition(fr, s)   # (N, S*S, C)
    fs_win = window_partition(fs, s)
    rn, cache["ln_r"] = _ln_fwd(fr_win, params.ln_r)
    sn, cache["ln_s"] = _ln_fwd(fs_win, params.ln_s)

    q = rn @ params.w_q + params.b_q
    k = sn @ params.w_k + params.b_k
    v = rn @ params.w_v + params.b_v
    y = q @ k.transpose(0, 2, 1)       # (N, S*S, S*S)

    ysym = y + y.transpose(0, 2, 1)
    conv, xp = _conv3_fwd(ysym, params.cam_conv_w, params.cam_conv_b)
    bn_in = conv.reshape(1, -1)
    bn_out, cache["cam_bn"] = _bn_fwd(bn_in, params.cam_bn, training)
    cam = _sigmoid(bn_out.reshape(conv.shape))

    alpha = float(params.alpha[0])
    y_re = (cam + 1.0) ** alpha
    sm = _softmax_rows(y)
    y_final = sm * y_re
    z = y_final @ v

    hwin = fr_win + z
    out_win = hwin + (hwin @ params.w_out + params.b_out)
    output = window_merge(out_win, h, w)

    cache.update(fr_win=fr_win, fs_win=fs_win, rn=rn, sn=sn, q=q, k=k, v=v,
                 sm=sm, y_re=y_re, cam=cam, xp=xp, hwin=hwin,
                 has_r2=f_r2 is not None)
    return GraftTrace(params=params, window_size=s, map_size=(h, w),
                      training=training,
                      inputs={"f_r1": f_r1, "f_r2": f_r2, "f_s": f_s},
                      output=output, cam=cam, _cache=cache)


def check_invariants(trace: GraftTrace, tol: float = SYM_TOL) -> None:
    """Sanity checks on a forward trace; raises AssertionError on failure.

    The softmax rows must sum to one, the attention-map branch must see a
    symmetric matrix, and the attention map itself must live in (0, 1).
    """
    c = trace._cache
    rowsum = c["sm"].sum(axis=-1)
    assert np.abs(rowsum - 1.0).max() <= tol, "softmax rows do not sum to 1"
    ysym = c["xp"][:, 1:-1, 1:-1]
    assert np.abs(ysym - ysym.transpose(0, 2, 1)).max() <= tol, \
        "attention-map input is not symmetric"
    assert trace.cam.min() > 0.0 and trace.cam.max() < 1.0, \
        "attention map left the open interval (0, 1)"


# --------------------------------------------------------------------------
# backward


def graft_backward(trace: GraftTrace, grad_output, grad_cam=None) -> dict:
    """Gradients of <grad_output, output> + <grad_cam, cam> w.r.t. every
    learnable parameter and the three input maps.

    Returns a flat dict keyed like param_leaves, plus "f_r1", "f_r2", "f_s".
    """
    p = trace.params
    c = trace._cache
    s = trace.window_size
    h, w = trace.map_size
    grads: dict[str, np.ndarray] = {}

    d_out_win = window_partition(np.asarray(grad_output, np.float64), s)

    # out_win = hwin + (hwin @ w_out + b_out)
    grads["w_out"] = np.einsum("nsc,nsd->cd", c["hwin"], d_out_win)
    grads["b_out"] = d_out_win.sum(axis=(0, 1))
    dh = d_out_win + d_out_win @ p.w_out.T

    dfr_win = dh.copy()
    dz = dh

    # z = y_final @ v
    dy_final = dz @ c["v"].transpose(0, 2, 1)
    dv = (c["sm"] * c["y_re"]).transpose(0, 2, 1) @ dz

    # y_final = softmax(y) * y_re
    dsm = dy_final * c["y_re"]
    dy_re = dy_final * c["sm"]

    # y_re = (cam + 1) ** alpha
    alpha = float(p.alpha[0])
    log1_cam = np.log1p(c["cam"])
    grads["alpha"] = np.array([(dy_re * c["y_re"] * log1_cam).sum()])
    dcam = dy_re * alpha * (1.0 + c["cam"]) ** (alpha - 1.0)
    if grad_cam is not None:
        dcam = dcam + np.asarray(grad_cam, np.float64)

    # cam = sigmoid(bn(conv(ysym)))
    dbn_out = dcam * c["cam"] * (1.0 - c["cam"])
    dconv2, dcg, dcb = _bn_bwd(dbn_out.reshape(1, -1), c["cam_bn"], p.cam_bn)
    grads["cam_bn.gamma"] = dcg
    grads["cam_bn.beta"] = dcb
    dconv = dconv2.reshape(dcam.shape)
    dysym, dkw, dkb = _conv3_bwd(dconv, c["xp"], p.cam_conv_w)
    grads["cam_conv_w"] = dkw
    grads["cam_conv_b"] = dkb

    # ysym = y + y^T; softmax over rows of y
    dy = dysym + dysym.transpose(0, 2, 1)
    sm = c["sm"]
    dy += sm * (dsm - (dsm * sm).sum(axis=-1, keepdims=True))

    # y = q @ k^T
    dq = dy @ c["k"]
    dk = dy.transpose(0, 2, 1) @ c["q"]

    grads["w_q"] = np.einsum("nsc,nsd->cd", c["rn"], dq)
    grads["b_q"] = dq.sum(axis=(0, 1))
    grads["w_v"] = np.einsum("nsc,nsd->cd", c["rn"], dv)
    grads["b_v"] = dv.sum(axis=(0, 1))
    grads["w_k"] = np.einsum("nsc,nsd->cd", c["sn"], dk)
    grads["b_k"] = dk.sum(axis=(0, 1))
    drn = dq @ p.w_q.T + dv @ p.w_v.T
    dsn = dk @ p.w_k.T

    dfr_ln, dg, db = _ln_bwd(drn, c["ln_r"], p.ln_r)
    grads["ln_r.gamma"] = dg
    grads["ln_r.beta"] = db
    dfr_win += dfr_ln
    dfs_win, dg, db = _ln_bwd(dsn, c["ln_s"], p.ln_s)
    grads["ln_s.gamma"] = dg
    grads["ln_s.beta"] = db

    dfr = window_merge(dfr_win, h, w)
    dfs = window_merge(dfs_win, h, w)

    grads["f_r1"] = _compressor_bwd(dfr, c["comp_r1"], p.comp_r1, grads,
                                    "comp_r1")
    if c["has_r2"]:
        grads["f_r2"] = _compressor_bwd(dfr, c["comp_r2"], p.comp_r2, grads,
                                        "comp_r2")
    else:
        grads["f_r2"] = None
    grads["f_s"] = _compressor_bwd(dfs, c["comp_s"], p.comp_s, grads,
                                   "comp_s")
    return grads


# --------------------------------------------------------------------------
# verification harness


@dataclass
class GraftInstance:
    """A concrete problem for the finite-difference harness."""

    params: GraftParams
    f_r1: np.ndarray
    f_r2: np.ndarray | None
    f_s: np.ndarray
    window_size: int
    grad_output: np.ndarray
    grad_cam: np.ndarray
    training: bool = True


@dataclass
class FiniteDiffReport:
    max_rel_error: float
    worst_leaf: str
    per_leaf: dict[str, float]
    step: float
    tol: float = FD_TOL

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def _uniform(rng, shape, lo=-0.1, hi=0.1):
    return rng.uniform(lo, hi, shape)


def make_test_instance(window_size: int = 4, channels: int = 8,
                       windows: int = 2, in_channels: int = 3,
                       alpha: float = DEFAULT_ALPHA, seed: int = 14,
                       with_r2: bool = True,
                       training: bool = True) -> GraftInstance:
    """A small, well-conditioned instance for gradient verification.

    The default seed is chosen so that every pre-ReLU activation stays
    comfortably away from zero (the ReLU kink would poison central
    differences).  make_test_instance asserts that margin.
    """
    if alpha not in ALLOWED_ALPHA:
        raise ValueError(f"alpha must be one of {ALLOWED_ALPHA}, got {alpha}")
    rng = np.random.default_rng(seed)
    s = window_size
    c = channels
    h, w = s, windows * s  # a 1 x windows grid of windows
    mid = max(2, in_channels)

    def bn(nc):
        return BatchNormParams(gamma=_uniform(rng, nc, 0.9, 1.1),
                               beta=_uniform(rng, nc),
                               running_mean=np.zeros(nc),
                               running_var=np.ones(nc))

    def relu_safe_bn(nc):
        # A strong alternating offset keeps every pre-ReLU value far from
        # the kink (which would break central differences) while still
        # exercising both sides of the ReLU.  Gains stay near one so the
        # finite-difference step is a small relative perturbation.
        sign = np.where(np.arange(nc) % 2 == 0, 1.0, -1.0)
        return BatchNormParams(gamma=_uniform(rng, nc, 0.8, 1.2),
                               beta=sign * 6.0 + _uniform(rng, nc, -0.5, 0.5),
                               running_mean=np.zeros(nc),
                               running_var=np.ones(nc))

    def comp():
        # The wide weight range keeps the pre-norm variance well above the
        # finite-difference step, which tames the truncation error of the
        # batch-norm curvature at h = 1e-3.
        return Compressor(
            stage1=ConvBnRelu(_uniform(rng, (mid, in_channels), -1.0, 1.0),
                              _uniform(rng, mid, -0.5, 0.5), relu_safe_bn(mid)),
            stage2=ConvBnRelu(_uniform(rng, (c, mid), -1.0, 1.0),
                              _uniform(rng, c, -0.5, 0.5), relu_safe_bn(c)))

    def ln():
        return LayerNormParams(gamma=_uniform(rng, c, 0.9, 1.1),
                               beta=_uniform(rng, c))

    params = GraftParams(
        comp_r1=comp(), comp_r2=comp() if with_r2 else None, comp_s=comp(),
        ln_r=ln(), ln_s=ln(),
        w_q=_uniform(rng, (c, c)), b_q=_uniform(rng, c),
        w_k=_uniform(rng, (c, c)), b_k=_uniform(rng, c),
        w_v=_uniform(rng, (c, c)), b_v=_uniform(rng, c),
        w_out=_uniform(rng, (c, c)), b_out=_uniform(rng, c),
        cam_conv_w=_uniform(rng, (3, 3)), cam_conv_b=_uniform(rng, 1),
        cam_bn=bn(1), alpha=np.array([float(alpha)]))

    f_r1 = rng.uniform(0.2, 1.0, (in_channels, h, w))
    f_r2 = rng.uniform(0.2, 1.0, (in_channels, h, w)) if with_r2 else None
    f_s = rng.uniform(0.2, 1.0, (in_channels, h, w))
    grad_output = _uniform(rng, (c, h, w), -1.0, 1.0)
    grad_cam = _uniform(rng, (windows, s * s, s * s), -1.0, 1.0)

    inst = GraftInstance(params, f_r1, f_r2, f_s, window_size, grad_output,
                         grad_cam, training)
    margin = relu_margin(inst)
    assert margin > 5e-3, f"seed {seed} puts a pre-ReLU value at {margin}"
    return inst


def _forward(inst: GraftInstance) -> GraftTrace:
    return graft_forward(inst.f_r1, inst.f_r2, inst.f_s, inst.params,
                         inst.window_size, inst.training)


def relu_margin(inst: GraftInstance) -> float:
    """Smallest |pre-ReLU| activation across all compressor stages."""
    trace = _forward(inst)
    m = math.inf
    for key in ("comp_r1", "comp_r2", "comp_s"):
        if key not in trace._cache:
            continue
        c1, c2, _ = trace._cache[key]
        for _, _, bn_out in (c1, c2):
            m = min(m, float(np.abs(bn_out).min()))
    return m


def objective(inst: GraftInstance) -> float:
    """Scalar probe: <grad_output, output> + <grad_cam, cam>."""
    trace = _forward(inst)
    return float((inst.grad_output * trace.output).sum()
                 + (inst.grad_cam * trace.cam).sum())


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


def finite_diff_check(inst: GraftInstance | None = None, step: float = 1e-3,
                      max_coords_per_leaf: int | None = None,
                      rng_seed: int = 0) -> FiniteDiffReport:
    """Compare analytic gradients with central finite differences.

    Perturbs every coordinate of every learnable leaf and every input map
    (optionally a random subset per leaf to bound runtime) and reports the
    worst relative error, |a - n| / max(|a|, |n|, 1e-6).
    """
    if inst is None:
        inst = make_test_instance()
    trace = _forward(inst)
    grads = graft_backward(trace, inst.grad_output, inst.grad_cam)

    leaves = param_leaves(inst.params)
    leaves.append(("f_r1", inst.f_r1))
    if inst.f_r2 is not None:
        leaves.append(("f_r2", inst.f_r2))
    leaves.append(("f_s", inst.f_s))

    rng = np.random.default_rng(rng_seed)
    per_leaf: dict[str, float] = {}
    worst = 0.0
    worst_leaf = ""
    for name, arr in leaves:
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        idx = np.arange(flat.size)
        if max_coords_per_leaf is not None and flat.size > max_coords_per_leaf:
            idx = rng.choice(flat.size, max_coords_per_leaf, replace=False)
        leaf_worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = objective(inst)
            flat[i] = orig - step
            fm = objective(inst)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            leaf_worst = max(leaf_worst, _rel_err(float(gflat[i]), numeric))
        per_leaf[name] = leaf_worst
        if leaf_worst >= worst:
            worst = leaf_worst
            worst_leaf = name
    return FiniteDiffReport(max_rel_error=worst, worst_leaf=worst_leaf,
                            per_leaf=per_leaf, step=step)
