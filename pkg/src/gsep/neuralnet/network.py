"""Forward pass, MSE loss and backpropagation through time.

Arrays are batch-major ``(B, T, D)``. A single utterance may be passed as
``(T, D)`` and comes back in the same rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gsep.dsp import FeatureSequence
from gsep.errors import GsepError
from gsep.masking import MaskSequence
from gsep.neuralnet.params import LstmLayerParams, NetworkParams


def sigmoid(x):
    # tanh form never overflows, unlike 1/(1+exp(-x)) in float32
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmState:
    """Per-layer hidden and cell vectors, each ``(B, H)``."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    @classmethod
    def zeros(cls, params: NetworkParams, batch: int = 1) -> "LstmState":
        dt = params.dtype
        return cls(
            [np.zeros((batch, l.hidden), dt) for l in params.lstm_layers],
            [np.zeros((batch, l.hidden), dt) for l in params.lstm_layers],
        )

    def copy(self) -> "LstmState":
        return LstmState([h.copy() for h in self.h], [c.copy() for c in self.c])


def lstm_cell_forward(x_t, h_prev, c_prev, layer: LstmLayerParams):
    """One time step. Returns ``(h_t, c_t, gates)`` with gates = (i, f, g, o)."""
    x_t = np.asarray(x_t)
    if x_t.shape[-1] != layer.input_dim or np.shape(h_prev)[-1] != layer.hidden:
        raise GsepError(
            f"LSTM cell expects input {layer.input_dim} / hidden {layer.hidden}, "
            f"got {x_t.shape[-1]} / {np.shape(h_prev)[-1]}"
        )
    H = layer.hidden
    z = x_t @ layer.W_x.T + h_prev @ layer.W_h.T + layer.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, g, o)


@dataclass
class _LayerCache:
    x: np.ndarray          # (B, T, in) layer input
    h_prev: np.ndarray     # (B, T, H) hidden entering each step
    c_prev: np.ndarray
    gates: np.ndarray      # (B, T, 4H) post-activation i, f, g, o
    tanh_c: np.ndarray
    drop: np.ndarray | None  # scaled keep mask applied to the layer output


@dataclass
class ForwardCache:
    layers: list[_LayerCache] = field(default_factory=list)
    top: np.ndarray | None = None     # dense input (after dropout)
    z_hidden: np.ndarray | None = None
    a_hidden: np.ndarray | None = None
    z_out: np.ndarray | None = None
    out: np.ndarray | None = None


@dataclass
class ForwardResult:
    output: np.ndarray
    state: LstmState
    cache: ForwardCache | None = None

    def as_mask(self) -> MaskSequence:
        return MaskSequence(self.output, "estimate")


def _run_lstm_layer(x, layer: LstmLayerParams, h, c, keep_cache: bool):
    B, T, _ = x.shape
    H = layer.hidden
    dt = x.dtype
    xproj = x @ layer.W_x.T + layer.b
    W_hT = np.ascontiguousarray(layer.W_h.T)
    out = np.empty((B, T, H), dt)
    if keep_cache:
        h_prev = np.empty((B, T, H), dt)
        c_prev = np.empty((B, T, H), dt)
        gates = np.empty((B, T, 4 * H), dt)
        tanh_c = np.empty((B, T, H), dt)
    for t in range(T):
        z = xproj[:, t] + h @ W_hT
        act = sigmoid(z)
        act[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        if keep_cache:
            h_prev[:, t] = h
            c_prev[:, t] = c
        c = act[:, H : 2 * H] * c + act[:, :H] * act[:, 2 * H : 3 * H]
        tc = np.tanh(c)
        h = act[:, 3 * H :] * tc
        out[:, t] = h
        if keep_cache:
            gates[:, t] = act
            tanh_c[:, t] = tc
    cache = _LayerCache(x, h_prev, c_prev, gates, tanh_c, None) if keep_cache else None
    return out, h, c, cache


def _as_batch(features) -> tuple[np.ndarray, bool]:
    if isinstance(features, FeatureSequence):
        features = features.frames
    x = np.asarray(features)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise GsepError(f"features must be (T, F) or (B, T, F), got shape {x.shape}")
    return x, False


def forward(
    features,
    params: NetworkParams,
    mode: str = "eval",
    dropout_seed: int | np.random.Generator | None = None,
    state: LstmState | None = None,
    keep_cache: bool | None = None,
) -> ForwardResult:
    """Stream features through the LSTM stack and the two ReLU dense layers.

    ``mode="train"`` applies inverted dropout to every LSTM layer output,
    drawn from ``dropout_seed``, and keeps the activations needed by
    :func:`backward`. Passing the returned ``state`` back in continues the
    sequence exactly where the previous call stopped.
    """
    if mode not in ("train", "eval"):
        raise GsepError(f"mode must be 'train' or 'eval', got {mode!r}")
    x, squeeze = _as_batch(features)
    if x.shape[-1] != params.arch.input_dim:
        raise GsepError(
            f"feature dimension {x.shape[-1]} does not match network input {params.arch.input_dim}"
        )
    x = x.astype(params.dtype, copy=False)
    B = x.shape[0]
    train = mode == "train"
    keep_cache = train if keep_cache is None else keep_cache
    state = LstmState.zeros(params, B) if state is None else state
    if len(state.h) != len(params.lstm_layers) or state.h[0].shape[0] != B:
        raise GsepError("LSTM state does not match network/batch")

    p = params.arch.dropout
    rng = None
    if train and p > 0:
        rng = dropout_seed if isinstance(dropout_seed, np.random.Generator) else np.random.default_rng(dropout_seed)

    cache = ForwardCache() if keep_cache else None
    new_h, new_c = [], []
    layer_in = x
    for k, layer in enumerate(params.lstm_layers):
        seq, h, c, lc = _run_lstm_layer(layer_in, layer, state.h[k], state.c[k], keep_cache)
        new_h.append(h)
        new_c.append(c)
        if rng is not None:
            keep = (rng.random(seq.shape) >= p).astype(params.dtype) / params.dtype.type(1.0 - p)
            seq = seq * keep
            if lc is not None:
                lc.drop = keep
        if cache is not None:
            cache.layers.append(lc)
        layer_in = seq

    z1 = layer_in @ params.hidden_fc.W.T + params.hidden_fc.b
    a1 = np.maximum(z1, 0) if params.hidden_fc.activation == "relu" else z1
    z2 = a1 @ params.output_fc.W.T + params.output_fc.b
    out = np.maximum(z2, 0) if params.output_fc.activation == "relu" else z2
    if cache is not None:
        cache.top, cache.z_hidden, cache.a_hidden, cache.z_out, cache.out = layer_in, z1, a1, z2, out
    return ForwardResult(out[0] if squeeze else out, LstmState(new_h, new_c), cache)


def _valid_weights(shape, valid, weights):
    w = np.ones(shape) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != shape:
        w = np.broadcast_to(w, shape)
    if valid is not None:
        v = np.asarray(valid, dtype=np.float64)
        w = w * v.reshape(v.shape + (1,) * (len(shape) - v.ndim))
    return w


def mse_loss(estimate, target, weighting: str = "plain", weights=None, valid=None) -> float:
    """Mean squared error between mask estimate and target.

    ``weighting="magnitude"`` weights every squared error by ``weights``
    (mixture magnitudes) and divides by the weight sum. ``valid`` is an
    optional ``(B, T)`` frame mask for padded batches.
    """
    e = estimate.frames if isinstance(estimate, MaskSequence) else np.asarray(estimate)
    t = target.frames if isinstance(target, MaskSequence) else np.asarray(target)
    if e.shape != t.shape:
        raise GsepError(f"estimate shape {e.shape} does not match target {t.shape}")
    if weighting not in ("plain", "magnitude"):
        raise GsepError(f"unknown weighting {weighting!r}")
    if weighting == "magnitude" and weights is None:
        raise GsepError("magnitude weighting needs mixture magnitudes")
    w = _valid_weights(e.shape, valid, weights if weighting == "magnitude" else None)
    diff = e.astype(np.float64) - t
    return float(np.sum(w * diff * diff) / max(np.sum(w), 1e-300))


def mse_grad(estimate, target, weighting: str = "plain", weights=None, valid=None) -> np.ndarray:
    """Gradient of :func:`mse_loss` with respect to ``estimate``."""
    e = np.asarray(estimate)
    t = np.asarray(target)
    w = _valid_weights(e.shape, valid, weights if weighting == "magnitude" else None)
    return (2.0 * w * (e - t) / max(np.sum(w), 1e-300)).astype(e.dtype)


def backward(
    cache: ForwardCache | None,
    params: NetworkParams,
    grad_output: np.ndarray,
    truncate: int | None = None,
) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss given ``d loss / d output``.

    Full BPTT unless ``truncate`` is set, in which case the recurrent
    gradient is cut every ``truncate`` frames.
    """
    if cache is None or cache.out is None:
        raise GsepError("backward needs a forward cache (run forward in train mode)")
    dout = np.asarray(grad_output, dtype=params.dtype)
    if dout.ndim == 2:
        dout = dout[None]
    if dout.shape != cache.out.shape:
        raise GsepError(f"grad_output shape {dout.shape} does not match output {cache.out.shape}")
    grads: dict[str, np.ndarray] = {}

    dz2 = dout * (cache.z_out > 0) if params.output_fc.activation == "relu" else dout
    grads["fc_out.W"] = np.einsum("btj,bti->ji", dz2, cache.a_hidden)
    grads["fc_out.b"] = dz2.sum(axis=(0, 1))
    da1 = dz2 @ params.output_fc.W
    dz1 = da1 * (cache.z_hidden > 0) if params.hidden_fc.activation == "relu" else da1
    grads["fc_hidden.W"] = np.einsum("btj,bti->ji", dz1, cache.top)
    grads["fc_hidden.b"] = dz1.sum(axis=(0, 1))
    dseq = dz1 @ params.hidden_fc.W

    for k in reversed(range(len(params.lstm_layers))):
        layer = params.lstm_layers[k]
        lc = cache.layers[k]
        if lc.drop is not None:
            dseq = dseq * lc.drop
        dZ, dW_h = _lstm_layer_backward(lc, layer, dseq, truncate)
        B, T, _ = dZ.shape
        grads[f"lstm{k}.W_x"] = dZ.reshape(B * T, -1).T @ lc.x.reshape(B * T, -1)
        grads[f"lstm{k}.W_h"] = dW_h
        grads[f"lstm{k}.b"] = dZ.sum(axis=(0, 1))
        dseq = dZ @ layer.W_x
    return {name: grads[name] for name, _ in params.named_tensors()}


def _lstm_layer_backward(lc: _LayerCache, layer: LstmLayerParams, dseq, truncate):
    B, T, H = dseq.shape
    g_all = lc.gates
    dZ = np.empty((B, T, 4 * H), dseq.dtype)
    dh_next = np.zeros((B, H), dseq.dtype)
    dc_next = np.zeros((B, H), dseq.dtype)
    W_h = layer.W_h
    for t in reversed(range(T)):
        if truncate and (t + 1) % truncate == 0 and t + 1 < T:
            dh_next[:] = 0
            dc_next[:] = 0
        i = g_all[:, t, :H]
        f = g_all[:, t, H : 2 * H]
        g = g_all[:, t, 2 * H : 3 * H]
        o = g_all[:, t, 3 * H :]
        tc = lc.tanh_c[:, t]
        dh = dseq[:, t] + dh_next
        dc = dh * o * (1 - tc * tc) + dc_next
        dZ[:, t, :H] = dc * g * i * (1 - i)
        dZ[:, t, H : 2 * H] = dc * lc.c_prev[:, t] * f * (1 - f)
        dZ[:, t, 2 * H : 3 * H] = dc * i * (1 - g * g)
        dZ[:, t, 3 * H :] = dh * tc * o * (1 - o)
        dc_next = dc * f
        dh_next = dZ[:, t] @ W_h
    dW_h = dZ.reshape(B * T, -1).T @ lc.h_prev.reshape(B * T, -1)
    return dZ, dW_h


def loss_and_grads(
    params: NetworkParams,
    features,
    target,
    valid=None,
    weights=None,
    dropout_seed=None,
    truncate: int | None = None,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """One train-mode forward + backward. Returns (loss, grads, output)."""
    res = forward(features, params, "train", dropout_seed=dropout_seed, keep_cache=True)
    out = res.cache.out
    tgt = np.asarray(target)
    if tgt.ndim == 2:
        tgt = tgt[None]
    wts = None if weights is None else np.asarray(weights).reshape(out.shape)
    weighting = params.arch.loss_weighting if wts is not None else "plain"
    loss = mse_loss(out, tgt, weighting, wts, valid)
    dout = mse_grad(out, tgt, weighting, wts, valid)
    return loss, backward(res.cache, params, dout, truncate), res.output


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = global_norm(grads)
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
