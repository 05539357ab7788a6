"""Model assembly: parameter init, forward passes, loss, and exact gradients.

Parameters live in a flat dict of numpy arrays keyed by dotted names
(``v.block3.pw.w``, ``gru0.wx``, ...). All gradients are computed by
hand-written backward passes; no autodiff framework is involved.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError
from . import layers as L
from .spec import HeadType, ModelSpec

Params = dict[str, np.ndarray]


# ---------------------------------------------------------------------------
# Parameter shapes and initialization
# ---------------------------------------------------------------------------


def _tower_channels(spec: ModelSpec) -> list[int]:
    """Input channel count of each separable block's depthwise conv."""
    chans = [spec.stem_channels]
    chans.extend([spec.block_channels] * (spec.num_blocks - 1))
    return chans


def parameter_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for tower in spec.towers:
        cin = spec.tower_input_shape(tower)[2]
        p = f"{tower}."
        shapes[p + "stem.w"] = (9 * cin, spec.stem_channels)
        shapes[p + "stem.b"] = (spec.stem_channels,)
        for i, c in enumerate(_tower_channels(spec)):
            shapes[p + f"block{i}.dw.w"] = (3, 3, c)
            shapes[p + f"block{i}.dw.b"] = (c,)
            shapes[p + f"block{i}.pw.w"] = (c, spec.block_channels)
            shapes[p + f"block{i}.pw.b"] = (spec.block_channels,)
        shapes[p + "fc.w"] = (spec.block_channels, spec.embedding_dim)
        shapes[p + "fc.b"] = (spec.embedding_dim,)
    if spec.head is HeadType.STATIC:
        shapes["pred.fc1.w"] = (spec.fused_dim, spec.pred_hidden)
        shapes["pred.fc1.b"] = (spec.pred_hidden,)
        shapes["pred.fc2.w"] = (spec.pred_hidden, 2)
        shapes["pred.fc2.b"] = (2,)
    else:
        h = spec.gru_units
        shapes["gru0.wx"] = (spec.fused_dim, 3 * h)
        shapes["gru0.wh"] = (h, 3 * h)
        shapes["gru0.b"] = (3 * h,)
        shapes["gru1.wx"] = (h, 3 * h)
        shapes["gru1.wh"] = (h, 3 * h)
        shapes["gru1.b"] = (3 * h,)
        shapes["pred.fc2.w"] = (h, 2)
        shapes["pred.fc2.b"] = (2,)
    for tower, _ in spec.aux_towers:
        p = f"aux_{tower}."
        shapes[p + "fc1.w"] = (spec.embedding_dim, spec.pred_hidden)
        shapes[p + "fc1.b"] = (spec.pred_hidden,)
        shapes[p + "fc2.w"] = (spec.pred_hidden, 2)
        shapes[p + "fc2.b"] = (2,)
    return shapes


def parameter_count(spec: ModelSpec) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(spec).values())


def init_parameters(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Params:
    """Uniform fan-in scaled init, biases zero; deterministic in (spec, seed)."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in sorted(parameter_shapes(spec).items()):
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = shape[0] if len(shape) == 2 else int(np.prod(shape[:-1]))
            if name.endswith(".dw.w"):
                fan_in = shape[0] * shape[1]  # per-channel 3x3 receptive field
            # Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)): preserves activation
            # scale through stacked rectified conv layers (variance 2/fan_in).
            bound = math.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def _check_params(params: Params, spec: ModelSpec) -> None:
    shapes = parameter_shapes(spec)
    for name, shape in shapes.items():
        if name not in params:
            raise ValidationError(f"missing parameter {name}")
        if tuple(params[name].shape) != tuple(shape):
            raise ValidationError(
                f"parameter {name}: shape {params[name].shape}, expected {shape}"
            )


# ---------------------------------------------------------------------------
# Embedding towers
# ---------------------------------------------------------------------------


def _tower_forward(params: Params, spec: ModelSpec, tower: str, x: np.ndarray):
    """x: (N, H, W, Cin) -> (N, embedding_dim), caches for backward."""
    expect = spec.tower_input_shape(tower)
    if tuple(x.shape[1:]) != tuple(expect):
        raise ValidationError(
            f"tower {tower}: input shape {x.shape[1:]}, expected {expect}"
        )
    p = f"{tower}."
    caches = {}
    h, caches["stem"] = L.conv_relu_forward(x, params[p + "stem.w"], params[p + "stem.b"], 2)
    for i, stride in enumerate(spec.block_strides):
        b = f"block{i}"
        h, caches[b + ".dw"] = L.depthwise_relu_forward(
            h, params[p + b + ".dw.w"], params[p + b + ".dw.b"], stride
        )
        h, caches[b + ".pw"] = L.pointwise_relu_forward(
            h, params[p + b + ".pw.w"], params[p + b + ".pw.b"]
        )
    h, caches["pool"] = L.avgpool_forward(h)
    emb, caches["fc"] = L.fc_forward(h, params[p + "fc.w"], params[p + "fc.b"])
    return emb, caches


def _tower_backward(params, spec, tower, demb, caches, grads):
    p = f"{tower}."
    dh, dw, db = L.fc_backward(demb, caches["fc"])
    grads[p + "fc.w"] = grads.get(p + "fc.w", 0) + dw
    grads[p + "fc.b"] = grads.get(p + "fc.b", 0) + db
    dh = L.avgpool_backward(dh, caches["pool"])
    for i in range(spec.num_blocks - 1, -1, -1):
        b = f"block{i}"
        dh, dw, db = L.pointwise_relu_backward(dh, caches[b + ".pw"])
        grads[p + b + ".pw.w"] = grads.get(p + b + ".pw.w", 0) + dw
        grads[p + b + ".pw.b"] = grads.get(p + b + ".pw.b", 0) + db
        dh, dw, db = L.depthwise_relu_backward(dh, caches[b + ".dw"])
        grads[p + b + ".dw.w"] = grads.get(p + b + ".dw.w", 0) + dw
        grads[p + b + ".dw.b"] = grads.get(p + b + ".dw.b", 0) + db
    dw, db = L.conv_relu_backward_params(dh, caches["stem"])
    grads[p + "stem.w"] = grads.get(p + "stem.w", 0) + dw
    grads[p + "stem.b"] = grads.get(p + "stem.b", 0) + db


def embed_visual(stack: np.ndarray, params: Params, spec: ModelSpec, tower: str = "v"):
    """Embed one (128,128,M) face stack (or a batch of them)."""
    single = stack.ndim == 3
    x = stack[None] if single else stack
    emb, _ = _tower_forward(params, spec, tower, np.asarray(x))
    return emb[0] if single else emb


def embed_audio(mel: np.ndarray, params: Params, spec: ModelSpec):
    """Embed one (64,48) Mel feature (or a batch)."""
    m = np.asarray(mel)
    single = m.ndim == 2
    x = m[None] if single else m
    emb, _ = _tower_forward(params, spec, "a", x[..., None])
    return emb[0] if single else emb


# ---------------------------------------------------------------------------
# Prediction heads
# ---------------------------------------------------------------------------


def _static_head_forward(params, prefix, x):
    caches = {}
    h, caches["fc1"] = L.fc_forward(x, params[prefix + "fc1.w"], params[prefix + "fc1.b"])
    h, caches["relu"] = L.relu_forward(h)
    logits, caches["fc2"] = L.fc_forward(h, params[prefix + "fc2.w"], params[prefix + "fc2.b"])
    return logits, caches


def _static_head_backward(params, prefix, dlogits, caches, grads):
    dh, dw, db = L.fc_backward(dlogits, caches["fc2"])
    grads[prefix + "fc2.w"] = grads.get(prefix + "fc2.w", 0) + dw
    grads[prefix + "fc2.b"] = grads.get(prefix + "fc2.b", 0) + db
    dh = L.relu_backward(dh, caches["relu"])
    dx, dw, db = L.fc_backward(dh, caches["fc1"])
    grads[prefix + "fc1.w"] = grads.get(prefix + "fc1.w", 0) + dw
    grads[prefix + "fc1.b"] = grads.get(prefix + "fc1.b", 0) + db
    return dx


def predict_static(fused: np.ndarray, params: Params, spec: ModelSpec) -> np.ndarray:
    """Probability pairs for fused embedding(s): (..., fused_dim) -> (..., 2)."""
    if fused.shape[-1] != spec.fused_dim:
        raise ValidationError(
            f"fused input dim {fused.shape[-1]}, expected {spec.fused_dim}"
        )
    logits, _ = _static_head_forward(params, "pred.", fused)
    return L.softmax(logits)


def _gru_head_forward(params, spec, x, state=None):
    """x: (B,S,fused). state: optional (h0_layer0, h0_layer1)."""
    bsz = x.shape[0]
    h = spec.gru_units
    if state is None:
        state = (
            np.zeros((bsz, h), dtype=x.dtype),
            np.zeros((bsz, h), dtype=x.dtype),
        )
    for s in state:
        if s.shape != (bsz, h):
            raise ValidationError(f"state shape {s.shape}, expected {(bsz, h)}")
    hs0, hT0, c0 = L.gru_forward(x, state[0], params["gru0.wx"], params["gru0.wh"], params["gru0.b"])
    hs1, hT1, c1 = L.gru_forward(hs0, state[1], params["gru1.wx"], params["gru1.wh"], params["gru1.b"])
    logits, fc_cache = L.fc_forward(
        hs1.reshape(-1, h), params["pred.fc2.w"], params["pred.fc2.b"]
    )
    logits = logits.reshape(bsz, x.shape[1], 2)
    return logits, (hT0, hT1), (c0, c1, fc_cache, x.shape)


def _gru_head_backward(params, spec, dlogits, caches, grads):
    c0, c1, fc_cache, xshape = caches
    bsz, steps, _ = xshape
    h = spec.gru_units
    dh1, dw, db = L.fc_backward(dlogits.reshape(-1, 2), fc_cache)
    grads["pred.fc2.w"] = grads.get("pred.fc2.w", 0) + dw
    grads["pred.fc2.b"] = grads.get("pred.fc2.b", 0) + db
    dh1 = dh1.reshape(bsz, steps, h)
    zero = np.zeros((bsz, h), dtype=dh1.dtype)
    dhs0, _, dwx, dwh, db = L.gru_backward(dh1, zero, c1, params["gru1.wx"], params["gru1.wh"])
    grads["gru1.wx"] = grads.get("gru1.wx", 0) + dwx
    grads["gru1.wh"] = grads.get("gru1.wh", 0) + dwh
    grads["gru1.b"] = grads.get("gru1.b", 0) + db
    dx, _, dwx, dwh, db = L.gru_backward(dhs0, zero, c0, params["gru0.wx"], params["gru0.wh"])
    grads["gru0.wx"] = grads.get("gru0.wx", 0) + dwx
    grads["gru0.wh"] = grads.get("gru0.wh", 0) + dwh
    grads["gru0.b"] = grads.get("gru0.b", 0) + db
    return dx


def predict_recurrent(fused_seq: np.ndarray, state, params: Params, spec: ModelSpec):
    """(S, fused) or (B, S, fused) -> (probs, final state)."""
    x = np.asarray(fused_seq)
    single = x.ndim == 2
    if single:
        x = x[None]
        if state is not None:
            state = tuple(s[None] for s in state)
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ValidationError("empty input sequence")
    logits, new_state, _ = _gru_head_forward(params, spec, x, state)
    probs = L.softmax(logits)
    if single:
        return probs[0], tuple(s[0] for s in new_state)
    return probs, new_state


# ---------------------------------------------------------------------------
# Full forward / loss / gradients
# ---------------------------------------------------------------------------


def _prepare_inputs(spec, visual, audio):
    """Validate batch inputs; returns (B, S) and per-tower flat inputs."""
    if spec.uses_visual and visual is None:
        raise ValidationError("model requires visual input")
    if spec.uses_audio and audio is None:
        raise ValidationError("model requires audio input")
    ref = visual if visual is not None and spec.uses_visual else audio
    bsz, steps = ref.shape[0], ref.shape[1]
    flat = {}
    for tower in spec.towers:
        if tower == "a":
            flat[tower] = audio.reshape(bsz * steps, *audio.shape[2:])[..., None]
        else:
            flat[tower] = visual.reshape(bsz * steps, *visual.shape[2:])
    return bsz, steps, flat


def forward(params: Params, spec: ModelSpec, visual=None, audio=None, state=None):
    """Inference pass over a batch of windows.

    visual: (B,S,H,W,M); audio: (B,S,64,48). Returns dict with ``fused``
    probabilities (B,S,2), per-tower ``aux`` probabilities, and ``state``
    (GRU heads only) so full-track scoring can chain windows.
    """
    _check_params(params, spec)
    bsz, steps, flat = _prepare_inputs(spec, visual, audio)
    embs = {t: _tower_forward(params, spec, t, flat[t])[0] for t in spec.towers}
    fused = np.concatenate([embs[t] for t in spec.towers], axis=1)
    out = {"aux": {}}
    if spec.head is HeadType.STATIC:
        logits, _ = _static_head_forward(params, "pred.", fused)
        out["fused"] = L.softmax(logits).reshape(bsz, steps, 2)
        out["state"] = None
    else:
        logits, new_state, _ = _gru_head_forward(
            params, spec, fused.reshape(bsz, steps, -1), state
        )
        out["fused"] = L.softmax(logits)
        out["state"] = new_state
    for tower, _w in spec.aux_towers:
        alog, _ = _static_head_forward(params, f"aux_{tower}.", embs[tower])
        out["aux"][tower] = L.softmax(alog).reshape(bsz, steps, 2)
    return out


def compute_loss(
    fused_probs: np.ndarray,
    aux_probs: dict[str, np.ndarray],
    targets: np.ndarray,
    mask: np.ndarray,
    params: Params,
    spec: ModelSpec,
) -> dict[str, float]:
    """Loss of the combined objective from probabilities.

    Returns parts: l_av (cross entropy + l2), l_a, l_v (aux cross
    entropies), and their weighted total. Sums run over all unmasked
    frames passed in.
    """

    def ce(p):
        p1 = np.clip(p[..., 1], L.PROB_CLAMP, 1.0 - L.PROB_CLAMP)
        terms = targets * np.log(p1) + (1.0 - targets) * np.log1p(-p1)
        return -float((terms * mask).sum())

    l2 = l2_penalty(params, spec)
    parts = {"l_av": ce(fused_probs) + l2, "l_a": 0.0, "l_v": 0.0}
    total = parts["l_av"]
    for tower, weight in spec.aux_towers:
        term = ce(aux_probs[tower])
        parts["l_a" if tower == "a" else "l_v"] += term
        total += weight * term
    parts["total"] = total
    return parts


def l2_penalty(params: Params, spec: ModelSpec) -> float:
    """lambda * sum of squared weights (biases excluded)."""
    return spec.l2_weight * float(
        sum((p.astype(np.float64) ** 2).sum() for n, p in params.items() if not n.endswith(".b"))
    )


def loss_and_grads(
    params: Params,
    spec: ModelSpec,
    targets: np.ndarray,
    mask: np.ndarray,
    visual=None,
    audio=None,
):
    """Mean-over-batch loss and its exact gradients.

    targets/mask: (B,S). The loss is the batch mean of per-window sums
    (cross entropies plus aux terms) plus the single l2 penalty.
    """
    _check_params(params, spec)
    bsz, steps, flat = _prepare_inputs(spec, visual, audio)
    targets = np.asarray(targets, dtype=params[next(iter(params))].dtype)
    maskf = np.asarray(mask)

    embs, tcaches = {}, {}
    for t in spec.towers:
        embs[t], tcaches[t] = _tower_forward(params, spec, t, flat[t])
    fused = np.concatenate([embs[t] for t in spec.towers], axis=1)

    grads: Params = {}
    inv_b = 1.0 / bsz
    flat_targets = targets.reshape(-1)
    flat_mask = maskf.reshape(-1)

    if spec.head is HeadType.STATIC:
        logits, hcache = _static_head_forward(params, "pred.", fused)
        l_av_ce, _, dlogits = L.softmax_cross_entropy(logits, flat_targets, flat_mask)
        dfused = _static_head_backward(params, "pred.", dlogits * inv_b, hcache, grads)
    else:
        logits, _, hcache = _gru_head_forward(params, spec, fused.reshape(bsz, steps, -1))
        l_av_ce, _, dlogits = L.softmax_cross_entropy(
            logits, targets.reshape(bsz, steps), maskf.reshape(bsz, steps)
        )
        dfused = _gru_head_backward(params, spec, dlogits * inv_b, hcache, grads)
        dfused = dfused.reshape(bsz * steps, -1)

    # Split the fused gradient back per tower; add aux-head contributions.
    dembs = dict(zip(spec.towers, np.split(dfused, len(spec.towers), axis=1)))
    parts = {"l_av": l_av_ce * inv_b + l2_penalty(params, spec), "l_a": 0.0, "l_v": 0.0}
    total = parts["l_av"]
    for tower, weight in spec.aux_towers:
        alog, acache = _static_head_forward(params, f"aux_{tower}.", embs[tower])
        aux_ce, _, dalog = L.softmax_cross_entropy(alog, flat_targets, flat_mask)
        parts["l_a" if tower == "a" else "l_v"] += aux_ce * inv_b
        total += weight * aux_ce * inv_b
        dembs[tower] = dembs[tower] + _static_head_backward(
            params, f"aux_{tower}.", dalog * (weight * inv_b), acache, grads
        )
    parts["total"] = total

    for t in spec.towers:
        _tower_backward(params, spec, t, dembs[t], tcaches[t], grads)

    for name, p in params.items():
        if not name.endswith(".b"):
            grads[name] = grads.get(name, 0) + 2.0 * spec.l2_weight * p
        grads.setdefault(name, np.zeros_like(p))
    return parts, grads
