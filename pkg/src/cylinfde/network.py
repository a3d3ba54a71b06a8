"""The PINN function approximator and its differentiation engine.

Architecture: 3 x (affine -> sin -> layer norm) -> affine head to a scalar.
Forward, input gradients, directional (tangent) derivatives, and parameter
gradients of losses that contain input derivatives are all hand-written:
affine steps go through BLAS, the sin/layer-norm math goes through fused
numba kernels (see _kernels).  Gradients are exact derivatives of the
implemented forward computation; the test suite checks them against central
finite differences.

A pass carries V value rows, the first T of which have a paired tangent row
stacked below row V (forward-mode directional derivative).  A residual of
the form df/dt + drift . df/da is one directional derivative, so a whole
training step (interior residual + boundary fit + optional zero-input
anchor) is a single stacked pass: one matmul and one kernel launch per
block, forward and backward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels

LAYER_NORM_EPS = 1e-5
CHECKPOINT_MAGIC = b"CYLINFDE-CKPT-1\n"
_EVAL_CHUNK = 4096


class Mlp:
    """Multilayer perceptron with sin activations and layer normalization.

    ``activation="identity"`` and ``layer_norm=False`` exist for test
    configurations; production networks use the defaults.
    """

    def __init__(self, input_dim, width, params, *, n_blocks=3, layer_norm=True,
                 activation="sin", meta=None):
        if activation not in ("sin", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.input_dim = int(input_dim)
        self.width = int(width)
        self.n_blocks = int(n_blocks)
        self.layer_norm = bool(layer_norm)
        self.activation = activation
        self.params = params
        self.meta = dict(meta or {})
        self._validate()

    def _validate(self):
        for name, expected in self._param_shapes().items():
            arr = self.params.get(name)
            if arr is None or arr.shape != expected:
                got = None if arr is None else arr.shape
                raise ValueError(f"parameter {name}: expected shape {expected}, got {got}")
        if not all(np.isfinite(p).all() for p in self.params.values()):
            raise ValueError("parameters contain non-finite values")

    def _param_shapes(self):
        shapes = {}
        d = self.input_dim
        for i in range(self.n_blocks):
            shapes[f"w{i}"] = (self.width, d)
            shapes[f"b{i}"] = (self.width,)
            if self.layer_norm:
                shapes[f"ln_g{i}"] = (self.width,)
                shapes[f"ln_b{i}"] = (self.width,)
            d = self.width
        shapes["w_head"] = (d,)
        shapes["b_head"] = ()
        return shapes

    @property
    def dtype(self):
        return self.params["w_head"].dtype

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    @classmethod
    def init(cls, input_dim, width, *, n_blocks=3, layer_norm=True, activation="sin",
             dtype=np.float32, seed=0, meta=None):
        """Fresh network: affine weights uniform in +-1/sqrt(fan_in), biases 0,
        layer-norm gains 1 and biases 0."""
        rng = np.random.default_rng(seed)
        params = {}
        d = input_dim
        for i in range(n_blocks):
            bound = 1.0 / math.sqrt(d)
            params[f"w{i}"] = rng.uniform(-bound, bound, (width, d)).astype(dtype)
            params[f"b{i}"] = np.zeros(width, dtype)
            if layer_norm:
                params[f"ln_g{i}"] = np.ones(width, dtype)
                params[f"ln_b{i}"] = np.zeros(width, dtype)
            d = width
        bound = 1.0 / math.sqrt(d)
        params["w_head"] = rng.uniform(-bound, bound, d).astype(dtype)
        params["b_head"] = np.zeros((), dtype)
        meta = dict(meta or {})
        meta.setdefault("seed", int(seed))
        return cls(input_dim, width, params, n_blocks=n_blocks, layer_norm=layer_norm,
                   activation=activation, meta=meta)

    def copy(self) -> "Mlp":
        return Mlp(self.input_dim, self.width,
                   {k: v.copy() for k, v in self.params.items()},
                   n_blocks=self.n_blocks, layer_norm=self.layer_norm,
                   activation=self.activation, meta=dict(self.meta))

    def astype(self, dtype) -> "Mlp":
        return Mlp(self.input_dim, self.width,
                   {k: v.astype(dtype) for k, v in self.params.items()},
                   n_blocks=self.n_blocks, layer_norm=self.layer_norm,
                   activation=self.activation, meta=dict(self.meta))

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def __call__(self, x):
        return forward(self, x)


class _PassBuffers:
    """Preallocated buffers for one pass of V value + T tangent rows."""

    def __init__(self, net: Mlp, n_value: int, n_tangent: int):
        if n_tangent > n_value:
            raise ValueError("tangent rows pair with the first value rows")
        w, dt = net.width, net.dtype
        v, t = n_value, n_tangent
        self.n_value = v
        self.n_tangent = t
        rows = v + t
        self.x0 = np.empty((rows, net.input_dim), dt)
        self.pre = [np.empty((rows, w), dt) for _ in range(net.n_blocks)]
        self.out = [np.empty((rows, w), dt) for _ in range(net.n_blocks)]
        self.act1 = [np.empty((v, w), dt) for _ in range(net.n_blocks)]
        self.sh = [np.empty((v, w), dt) for _ in range(net.n_blocks)]
        self.inv = [np.empty(v, dt) for _ in range(net.n_blocks)]
        self.m2 = [np.empty(t, dt) for _ in range(net.n_blocks)]
        self.dmu = [np.empty(t, dt) for _ in range(net.n_blocks)]
        self.ga = np.empty((rows, w), dt)
        self.gb = np.empty((rows, w), dt)
        self.y = np.empty(v, dt)
        self.dy = np.empty(t, dt)
        if net.activation == "identity":
            self.ones = np.ones((v, w), dt)
            self.zeros = np.zeros((v, w), dt)
        n_chunks = max(1, numba.get_num_threads())
        self.acc_g = np.zeros((n_chunks, w), dt)
        self.acc_b = np.zeros((n_chunks, w), dt)
        self.scratch_w = {}

    def dw_scratch(self, shape, dt):
        if shape not in self.scratch_w:
            self.scratch_w[shape] = np.empty(shape, dt)
        return self.scratch_w[shape]


def _activations(net, buf, i):
    """(act_out, act1, act2neg) for block i; applies sin in place on pre[:V]."""
    v = buf.n_value
    p_top = buf.pre[i][:v]
    if net.activation == "sin":
        np.cos(p_top, out=buf.act1[i])
        np.sin(p_top, out=p_top)
        return p_top, buf.act1[i], p_top
    return p_top, buf.ones, buf.zeros


def _stashed_activations(net, buf, i):
    v = buf.n_value
    if net.activation == "sin":
        s = buf.pre[i][:v]  # holds sin(p) after the forward pass
        return s, buf.act1[i], s
    return buf.pre[i][:v], buf.ones, buf.zeros


def _forward_pass(net: Mlp, buf: _PassBuffers, check_finite=False):
    v, t = buf.n_value, buf.n_tangent
    x = buf.x0
    for i in range(net.n_blocks):
        w, bias = net.params[f"w{i}"], net.params[f"b{i}"]
        np.matmul(x, w.T, out=buf.pre[i])
        buf.pre[i][:v] += bias
        s, act1, _ = _activations(net, buf, i)
        if net.layer_norm:
            g, be = net.params[f"ln_g{i}"], net.params[f"ln_b{i}"]
            _kernels.ln_fwd(s, act1, buf.pre[i][v:], g, be,
                            buf.out[i][:v], buf.out[i][v:],
                            buf.sh[i], buf.inv[i], buf.m2[i], buf.dmu[i],
                            LAYER_NORM_EPS)
        else:
            buf.out[i][:v] = s
            if t:
                np.multiply(act1[:t], buf.pre[i][v:], out=buf.out[i][v:])
        if check_finite and not np.isfinite(buf.out[i][:v]).all():
            raise FloatingPointError(f"non-finite activation in block {i}")
        x = buf.out[i]
    wh, bh = net.params["w_head"], net.params["b_head"]
    np.matmul(x[:v], wh, out=buf.y)
    buf.y += bh
    if t:
        np.matmul(x[v:], wh, out=buf.dy)
    if check_finite and not np.isfinite(buf.y).all():
        raise FloatingPointError("non-finite network output")


def _backward_pass(net: Mlp, buf: _PassBuffers, gy, gdy, grads, want_input_grad=False):
    """Backpropagate head seeds (gy over value rows, gdy over tangent rows)
    into ``grads`` (accumulating); optionally return the input gradient of
    the value rows."""
    v, t = buf.n_value, buf.n_tangent
    dt = net.dtype
    wh = net.params["w_head"]
    h_last = buf.out[net.n_blocks - 1]
    if gy is not None:
        grads["w_head"] += gy @ h_last[:v]
        grads["b_head"] += gy.sum()
        np.multiply(gy[:, None], wh[None, :], out=buf.ga[:v])
    else:
        buf.ga[:v] = 0.0
    if t:
        grads["w_head"] += gdy @ h_last[v:]
        np.multiply(gdy[:, None], wh[None, :], out=buf.ga[v:])
    g_cur, g_next = buf.ga, buf.gb
    for i in range(net.n_blocks - 1, -1, -1):
        s, act1, act2neg = _stashed_activations(net, buf, i)
        if net.layer_norm:
            buf.acc_g[:] = 0.0
            buf.acc_b[:] = 0.0
            _kernels.ln_bwd(g_cur[:v], g_cur[v:], act2neg, act1, buf.pre[i][v:],
                            buf.sh[i], buf.inv[i], buf.m2[i], buf.dmu[i],
                            net.params[f"ln_g{i}"], g_next[:v], g_next[v:],
                            buf.acc_g, buf.acc_b)
            grads[f"ln_g{i}"] += buf.acc_g.sum(axis=0)
            grads[f"ln_b{i}"] += buf.acc_b.sum(axis=0)
        else:
            np.multiply(act1, g_cur[:v], out=g_next[:v])
            if t:
                g_next[:t] -= act2neg[:t] * buf.pre[i][v:] * g_cur[v:]
                np.multiply(act1[:t], g_cur[v:], out=g_next[v:])
        # g_next holds the stacked pre-activation gradient; one matmul gives
        # dW, another the upstream gradient (written into g_cur, which then
        # serves as the next iteration's input).
        x_in = buf.x0 if i == 0 else buf.out[i - 1]
        dw = buf.dw_scratch(net.params[f"w{i}"].shape, dt)
        np.matmul(g_next.T, x_in, out=dw)
        grads[f"w{i}"] += dw
        grads[f"b{i}"] += g_next[:v].sum(axis=0)
        if i > 0:
            np.matmul(g_next, net.params[f"w{i}"], out=g_cur)
        elif want_input_grad:
            return g_next[:v] @ net.params["w0"]
    return None


def _prepare(net: Mlp, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=net.dtype)
    batched = arr.ndim == 2
    arr = np.atleast_2d(arr)
    if arr.shape[1] != net.input_dim:
        raise ValueError(f"input has {arr.shape[1]} features, network expects {net.input_dim}")
    if not np.isfinite(arr).all():
        raise ValueError("network input contains non-finite values")
    return arr, batched


def forward(net: Mlp, x):
    """Scalar output(s) of the network at x, shape () or (n,)."""
    arr, batched = _prepare(net, x)
    out = np.empty(arr.shape[0], net.dtype)
    for lo in range(0, arr.shape[0], _EVAL_CHUNK):
        chunk = arr[lo:lo + _EVAL_CHUNK]
        buf = _PassBuffers(net, chunk.shape[0], 0)
        buf.x0[:] = chunk
        _forward_pass(net, buf, check_finite=True)
        out[lo:lo + _EVAL_CHUNK] = buf.y
    return out if batched else float(out[0])


def input_gradient(net: Mlp, x):
    """Exact gradient of forward w.r.t. the inputs, same shape as x."""
    arr, batched = _prepare(net, x)
    out = np.empty_like(arr)
    grads = net.zero_grads()  # parameter slots are required but discarded
    for lo in range(0, arr.shape[0], _EVAL_CHUNK):
        chunk = arr[lo:lo + _EVAL_CHUNK]
        buf = _PassBuffers(net, chunk.shape[0], 0)
        buf.x0[:] = chunk
        _forward_pass(net, buf, check_finite=True)
        gy = np.ones(chunk.shape[0], net.dtype)
        gx = _backward_pass(net, buf, gy, None, grads, want_input_grad=True)
        out[lo:lo + _EVAL_CHUNK] = gx
    return out if batched else out[0]


def directional_derivative(net: Mlp, x, v):
    """(f(x), grad f(x) . v) via exact forward-mode propagation."""
    arr, batched = _prepare(net, x)
    varr = np.ascontiguousarray(np.broadcast_to(np.asarray(v, net.dtype), arr.shape))
    ys = np.empty(arr.shape[0], net.dtype)
    dys = np.empty(arr.shape[0], net.dtype)
    for lo in range(0, arr.shape[0], _EVAL_CHUNK):
        chunk = arr[lo:lo + _EVAL_CHUNK]
        n = chunk.shape[0]
        buf = _PassBuffers(net, n, n)
        buf.x0[:n] = chunk
        buf.x0[n:] = varr[lo:lo + _EVAL_CHUNK]
        _forward_pass(net, buf, check_finite=True)
        ys[lo:lo + _EVAL_CHUNK] = buf.y
        dys[lo:lo + _EVAL_CHUNK] = buf.dy
    if batched:
        return ys, dys
    return float(ys[0]), float(dys[0])


@dataclass
class LossBreakdown:
    total: float
    residual: float
    boundary: float
    regularizer: float | None
    weights: tuple[float, ...]


class LossWorkspace:
    """Reusable buffers for loss_and_weight_gradient at a fixed batch size.

    Row layout of the single stacked pass: [interior values (B); boundary
    values (B); zero-input values (B, optional); interior tangents (B)].
    """

    def __init__(self, net: Mlp, batch: int, with_regularizer: bool):
        self.batch = batch
        self.with_regularizer = with_regularizer
        n_value = (3 if with_regularizer else 2) * batch
        self.buf = _PassBuffers(net, n_value, batch)
        self.grads = net.zero_grads()
        self.gy = np.empty(n_value, net.dtype)


def loss_and_weight_gradient(net: Mlp, points, problem, cfg, workspace=None):
    """Reweighted PINN loss at the given interior points and its exact
    parameter gradient.

    The boundary batch reuses the interior coefficients with t forced to 0;
    when cfg.regularize_zero_input is set, a third term anchors f(0, t) = 0
    at the interior times.  Returns (loss, grads).
    """
    parts, grads = _loss_backward(net, points, problem, cfg, workspace)
    return parts.total, grads


def _loss_backward(net: Mlp, points, problem, cfg, workspace=None):
    from .training import softmax_reweight  # deferred to avoid an import cycle

    pts = np.asarray(points, dtype=net.dtype)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("need a non-empty 2-d batch of collocation points")
    if pts.shape[1] != net.input_dim:
        raise ValueError(f"points have {pts.shape[1]} columns, network expects {net.input_dim}")
    b = pts.shape[0]
    ws = workspace or LossWorkspace(net, b, cfg.regularize_zero_input)
    if ws.batch != b or ws.with_regularizer != cfg.regularize_zero_input:
        raise ValueError("workspace does not match the batch size / loss configuration")
    buf = ws.buf
    v = buf.n_value

    a = pts[:, 1:].astype(np.float64)
    buf.x0[:b] = pts
    buf.x0[b:2 * b] = pts
    buf.x0[b:2 * b, 0] = 0.0
    if cfg.regularize_zero_input:
        buf.x0[2 * b:3 * b] = 0.0
        buf.x0[2 * b:3 * b, 0] = pts[:, 0]
    buf.x0[v:, 0] = 1.0
    buf.x0[v:, 1:] = problem.drift(a).astype(net.dtype)

    _forward_pass(net, buf)

    res = buf.dy
    f0 = np.asarray(problem.initial(a), dtype=net.dtype)
    loss_res, gres = _loss_value_grad(cfg.loss_kind, res, None)
    loss_bnd, gbnd = _loss_value_grad(cfg.loss_kind, buf.y[b:2 * b], f0)
    losses = [loss_res, loss_bnd]
    if cfg.regularize_zero_input:
        loss_reg, greg = _loss_value_grad(cfg.loss_kind, buf.y[2 * b:3 * b], None)
        losses.append(loss_reg)

    if not all(math.isfinite(l) for l in losses):
        bad = np.flatnonzero(~np.isfinite(np.concatenate([res, buf.y[b:]])))
        raise FloatingPointError(f"non-finite loss (first bad sample {int(bad[0]) if bad.size else -1})")

    lam = softmax_reweight(losses, cfg.reweight_temperature)
    total = float(np.dot(lam, losses))

    for g in ws.grads.values():
        g[...] = 0.0
    ws.gy[:b] = 0.0
    ws.gy[b:2 * b] = (lam[1] * gbnd).astype(net.dtype)
    if cfg.regularize_zero_input:
        ws.gy[2 * b:3 * b] = (lam[2] * greg).astype(net.dtype)
    gdy = (lam[0] * gres).astype(net.dtype)
    _backward_pass(net, buf, ws.gy, gdy, ws.grads)

    parts = LossBreakdown(total, loss_res, loss_bnd,
                          losses[2] if cfg.regularize_zero_input else None,
                          tuple(float(x) for x in lam))
    return parts, ws.grads


def _loss_value_grad(kind, pred, target):
    """Loss value and dL/dpred for the configured elementwise loss."""
    from .training import LossKind

    d = pred.astype(np.float64)
    if target is not None:
        d = d - target.astype(np.float64)
    n = d.shape[0]
    if kind is LossKind.SMOOTH_L1:
        absd = np.abs(d)
        small = absd < 1.0
        loss = float(np.where(small, 0.5 * d * d, absd - 0.5).mean())
        grad = np.where(small, d, np.sign(d)) / n
    else:
        absd = np.abs(d)
        k = int(np.argmax(absd))
        loss = float(absd.mean() + absd[k])
        grad = np.sign(d) / n
        grad[k] += np.sign(d[k])
    return loss, grad


def _json_clean(obj):
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def save_checkpoint(net: Mlp, path, extra_meta=None) -> None:
    """Write a flat binary container: JSON header plus raw parameter bytes.

    Round-trips bit-exactly and produces identical bytes for identical
    networks (no timestamps).
    """
    meta = _json_clean({
        "input_dim": net.input_dim,
        "width": net.width,
        "n_blocks": net.n_blocks,
        "layer_norm": net.layer_norm,
        "activation": net.activation,
        **net.meta,
        **(extra_meta or {}),
    })
    names = sorted(net.params)
    header = {
        "meta": meta,
        "arrays": [
            {"name": n, "shape": list(net.params[n].shape), "dtype": str(net.params[n].dtype)}
            for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(net.params[n]).tobytes())


def load_checkpoint(path) -> Mlp:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        header = json.loads(fh.readline().decode())
        params = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * dtype.itemsize)
            params[spec["name"]] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    meta = header["meta"]
    arch_keys = ("input_dim", "width", "n_blocks", "layer_norm", "activation")
    extra = {k: v for k, v in meta.items() if k not in arch_keys}
    return Mlp(meta["input_dim"], meta["width"], params,
               n_blocks=meta["n_blocks"], layer_norm=meta["layer_norm"],
               activation=meta["activation"], meta=extra)
