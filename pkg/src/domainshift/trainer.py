"""Desk-scale grounded trainer with a hand-verifiable gradient path.

Two identically shaped models: a precursor (featurizer + linear head)
trained first on its own corpus with cross-entropy, then frozen; and the
main model, trained on the pooled training domains with

    total = l_s + l_erm + lambda * l_js + lambda_kl * l_kl

where l_js is the base-2 Jensen-Shannon divergence between softmax-
normalized features of the frozen precursor and the main featurizer, and
l_kl is the optional last-layer KL term between the two heads' softmax
outputs.  l_s is evaluated for reporting but contributes no gradient to
the main model (the precursor is frozen).

Everything is plain numpy with explicit backprop; every analytic gradient
is checkable against central finite differences via finite_diff_check.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .errors import (
    DimensionMismatch,
    LabelOutOfRange,
    NonFiniteLoss,
    ShapeMismatch,
)

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class ToyFeaturizer:
    """Small MLP: ReLU on hidden layers, identity on the output layer."""

    weights: tuple  # W_i of shape (d_in, d_out)
    biases: tuple  # b_i of shape (d_out,)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=np.float64) for b in self.biases))
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ShapeMismatch(f"layer {i}: non-finite parameters")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeMismatch(f"layers {i - 1}->{i} do not compose")

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def feat_dim(self):
        return self.weights[-1].shape[1]

    @property
    def dims(self):
        return (self.in_dim,) + tuple(w.shape[1] for w in self.weights)


@dataclass(frozen=True)
class LinearHead:
    weight: np.ndarray  # (feat_dim, n_classes)
    bias: np.ndarray  # (n_classes,)

    def __post_init__(self):
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=np.float64))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=np.float64))
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeMismatch("head weight/bias shapes do not compose")
        if self.weight.shape[1] < 2:
            raise ShapeMismatch("head needs n_classes >= 2")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.1  # grounding coefficient
    lam_kl: float = 0.0  # last-layer KL coefficient
    lr: float = 1e-2
    batch_size: int = 16
    steps: int = 100
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    temperature: float = 1.0  # softmax temperature for the grounding term
    init: str = "kaiming"  # "kaiming" or a checkpoint path

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 1:
            raise ValueError("lr > 0, batch_size >= 1, steps >= 1 required")
        if self.lam < 0 or self.lam_kl < 0:
            raise ValueError("coefficients must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    l_s: float
    l_erm: float
    l_js: float
    l_kl: float
    total: float

    def __post_init__(self):
        parts = (self.l_s, self.l_erm, self.l_js, self.l_kl, self.total)
        if not all(math.isfinite(v) for v in parts):
            raise NonFiniteLoss(f"non-finite loss components: {parts}")
        if any(v < -1e-12 for v in parts):
            raise ValueError(f"negative loss component: {parts}")

    def as_row(self):
        return [self.l_s, self.l_erm, self.l_js, self.l_kl, self.total]


# ---------------------------------------------------------------------------
# initialization and forward/backward passes


def _normalize_dims(dims):
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError("dims must be positive")
    if len(dims) == 1:
        dims = (dims[0], dims[0])  # single linear map
    return dims


def init_featurizer(dims, mode: str = "kaiming", seed: int = 0) -> ToyFeaturizer:
    """Kaiming init: W ~ N(0, 2/fan_in), zero biases, seeded per layer.

    mode other than "kaiming" is taken as a checkpoint path; the loaded
    featurizer must match dims.
    """
    dims = _normalize_dims(dims)
    if mode != "kaiming":
        f, _ = load_checkpoint(mode)
        if f.dims != dims:
            raise ShapeMismatch(f"checkpoint dims {f.dims} != requested {dims}")
        return f
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        g = rng.generator(seed, "kaiming", i)
        weights.append(g.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ToyFeaturizer(tuple(weights), tuple(biases))


def init_head(feat_dim: int, n_classes: int, seed: int = 0) -> LinearHead:
    g = rng.generator(seed, "head")
    w = g.normal(0.0, math.sqrt(2.0 / feat_dim), size=(feat_dim, n_classes))
    return LinearHead(w, np.zeros(n_classes))


def _forward_cached(f: ToyFeaturizer, x: np.ndarray):
    """Forward pass caching (layer input, pre-activation) per layer."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != f.in_dim:
        raise DimensionMismatch(f"input dim {x.shape[-1]} != featurizer in_dim {f.in_dim}")
    z = x
    cache = []
    last = len(f.weights) - 1
    for i, (w, b) in enumerate(zip(f.weights, f.biases)):
        pre = z @ w + b
        cache.append((z, pre))
        z = pre if i == last else np.maximum(pre, 0.0)
    return z, cache


def forward_features(f: ToyFeaturizer, x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass of the featurizer."""
    out, _ = _forward_cached(f, x)
    return out


def _backward_featurizer(f: ToyFeaturizer, cache, d_out: np.ndarray):
    """Backprop d(loss)/d(features) into per-layer weight/bias gradients."""
    d_ws = [None] * len(f.weights)
    d_bs = [None] * len(f.weights)
    grad = np.atleast_2d(d_out)
    last = len(f.weights) - 1
    for i in range(last, -1, -1):
        layer_in, pre = cache[i]
        layer_in = np.atleast_2d(layer_in)
        d_pre = grad if i == last else grad * (np.atleast_2d(pre) > 0)
        d_ws[i] = layer_in.T @ d_pre
        d_bs[i] = d_pre.sum(axis=0)
        grad = d_pre @ f.weights[i].T
    return d_ws, d_bs


def head_logits(g: LinearHead, feats: np.ndarray) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.shape[-1] != g.weight.shape[0]:
        raise DimensionMismatch(
            f"feature dim {feats.shape[-1]} != head in_dim {g.weight.shape[0]}"
        )
    return feats @ g.weight + g.bias


# ---------------------------------------------------------------------------
# losses


def _softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """-ln softmax(logits)[label], max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise DimensionMismatch("logits must be a vector of >= 2 classes")
    if not 0 <= label < logits.size:
        raise LabelOutOfRange(f"label {label} for {logits.size} classes")
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def _batch_ce(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch and its gradient w.r.t. logits."""
    labels = np.asarray(labels)
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise LabelOutOfRange("batch label out of range")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), labels]))
    d_logits = _softmax(logits)
    d_logits[np.arange(n), labels] -= 1.0
    return loss, d_logits / n


def grounding_js(fs_out: np.ndarray, f_out: np.ndarray, temperature: float = 1.0) -> float:
    """Base-2 JSD between softmax-normalized feature vectors."""
    v = _grounding_js_value(np.asarray(fs_out, dtype=np.float64),
                            np.asarray(f_out, dtype=np.float64), temperature)
    return float(v)


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")


def _grounding_js_value(fs_out, f_out, temperature):
    _check_same_dim(fs_out, f_out)
    p = _softmax(fs_out / temperature)
    q = _softmax(f_out / temperature)
    m = 0.5 * (p + q)
    # softmax outputs are strictly positive, no zero guard needed
    val = 0.5 * (np.sum(p * np.log2(p / m), axis=-1) + np.sum(q * np.log2(q / m), axis=-1))
    return np.clip(val, 0.0, None)

def grounding_js_grad(fs_out: np.ndarray, f_out: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """d JSD / d f_out; the precursor branch fs_out is treated as constant.

    With q = softmax(f_out/T) and m = (p+q)/2, dJS/dq = log2(q/m)/2, then
    the softmax Jacobian gives the gradient in logit space.
    """
    fs_out = np.asarray(fs_out, dtype=np.float64)
    f_out = np.asarray(f_out, dtype=np.float64)
    _check_same_dim(fs_out, f_out)
    p = _softmax(fs_out / temperature)
    q = _softmax(f_out / temperature)
    m = 0.5 * (p + q)
    dq = 0.5 * np.log2(q / m)
    inner = np.sum(q * dq, axis=-1, keepdims=True)
    return q * (dq - inner) / temperature


def kl_head_regularizer(precursor_logits: np.ndarray, dg_logits: np.ndarray) -> float:
    """KL(softmax(precursor) || softmax(dg)) in nats."""
    p_logits = np.asarray(precursor_logits, dtype=np.float64)
    q_logits = np.asarray(dg_logits, dtype=np.float64)
    _check_same_dim(p_logits, q_logits)
    p = _softmax(p_logits)
    q = _softmax(q_logits)
    return float(np.clip(np.sum(p * np.log(p / q), axis=-1), 0.0, None))


def kl_head_regularizer_grad(precursor_logits: np.ndarray, dg_logits: np.ndarray) -> np.ndarray:
    """d KL / d dg_logits = softmax(dg) - softmax(precursor)."""
    p_logits = np.asarray(precursor_logits, dtype=np.float64)
    q_logits = np.asarray(dg_logits, dtype=np.float64)
    _check_same_dim(p_logits, q_logits)
    return _softmax(q_logits) - _softmax(p_logits)


def _breakdown(l_s, l_erm, l_js, l_kl, config) -> LossBreakdown:
    total = l_s + l_erm + config.lam * l_js + config.lam_kl * l_kl
    return LossBreakdown(l_s=l_s, l_erm=l_erm, l_js=l_js, l_kl=l_kl, total=total)


def smos_total_loss(batch, precursor_batch, f_s, g_s, f, g, config: TrainConfig) -> LossBreakdown:
    """All loss components on one batch pair.

    l_s: mean precursor cross-entropy on the precursor batch.
    l_erm: mean main-model cross-entropy on the training batch.
    l_js: mean grounding JSD between precursor and main features.
    l_kl: mean last-layer KL between the two heads' outputs.
    """
    breakdown, _ = smos_loss_and_grads(batch, precursor_batch, f_s, g_s, f, g, config)
    return breakdown


def smos_loss_and_grads(batch, precursor_batch, f_s, g_s, f, g, config: TrainConfig):
    """LossBreakdown plus gradients w.r.t. the main model's parameters.

    The precursor is constant: no gradients flow into f_s or g_s; the
    grounding term's gradient enters only through the main featurizer's
    features, and the KL term's only through the main head's logits.
    """
    xp, yp = precursor_batch
    xs_feats = forward_features(f_s, np.atleast_2d(np.asarray(xp, dtype=np.float64)))
    l_s, _ = _batch_ce(head_logits(g_s, xs_feats), yp)

    x, y = batch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    feats, cache = _forward_cached(f, x)
    feats_s = forward_features(f_s, x)
    logits = head_logits(g, feats)
    logits_s = head_logits(g_s, feats_s)

    l_erm, d_logits = _batch_ce(logits, y)
    l_js = float(np.mean(_grounding_js_value(feats_s, feats, config.temperature)))
    p_s = _softmax(logits_s)
    q = _softmax(logits)
    l_kl = float(np.mean(np.clip(np.sum(p_s * np.log(p_s / q), axis=-1), 0.0, None)))

    d_logits = d_logits + config.lam_kl * (q - p_s) / n
    d_head_w = feats.T @ d_logits
    d_head_b = d_logits.sum(axis=0)
    d_feats = d_logits @ g.weight.T
    d_feats = d_feats + config.lam * grounding_js_grad(feats_s, feats, config.temperature) / n
    d_ws, d_bs = _backward_featurizer(f, cache, d_feats)

    grads = {"weights": d_ws, "biases": d_bs, "head_w": d_head_w, "head_b": d_head_b}
    return _breakdown(l_s, l_erm, l_js, l_kl, config), grads


# ---------------------------------------------------------------------------
# Adam and parameter flattening


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def fresh(cls, params):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """One standard Adam update with bias correction; returns new values."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params/grads/state length mismatch")
    b1, b2 = config.adam_betas
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, gr, m, v in zip(params, grads, state.m, state.v):
        if p.shape != gr.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {gr.shape}")
        m = b1 * m + (1 - b1) * gr
        v = b2 * v + (1 - b2) * gr * gr
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params.append(p - config.lr * m_hat / (np.sqrt(v_hat) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def model_params(f: ToyFeaturizer, g: LinearHead):
    return list(f.weights) + list(f.biases) + [g.weight, g.bias]


def with_params(f: ToyFeaturizer, g: LinearHead, params):
    k = len(f.weights)
    return (
        ToyFeaturizer(tuple(params[:k]), tuple(params[k : 2 * k])),
        LinearHead(params[2 * k], params[2 * k + 1]),
    )


def _grads_as_params(grads, n_layers):
    return list(grads["weights"]) + list(grads["biases"]) + [grads["head_w"], grads["head_b"]]


# ---------------------------------------------------------------------------
# training loops


def _batch_indices(n: int, config: TrainConfig, step: int) -> np.ndarray:
    g = rng.generator(config.seed, "batch", step)
    return g.integers(0, n, size=config.batch_size)


def train_precursor(data, dims, n_classes: int, config: TrainConfig):
    """Phase 1: minibatch Adam on plain cross-entropy.

    data: (X, y) arrays.  Returns (featurizer, head, loss_curve).
    """
    x, y = np.asarray(data[0], dtype=np.float64), np.asarray(data[1])
    if n_classes < 2:
        raise ValueError("need >= 2 classes")
    f = init_featurizer(dims, config.init, seed=config.seed)
    g = init_head(f.feat_dim, n_classes, seed=config.seed)
    params = model_params(f, g)
    state = AdamState.fresh(params)
    curve = []
    for step in range(config.steps):
        idx = _batch_indices(len(x), config, step)
        feats, cache = _forward_cached(f, x[idx])
        logits = head_logits(g, feats)
        loss, d_logits = _batch_ce(logits, y[idx])
        d_feats = d_logits @ g.weight.T
        d_ws, d_bs = _backward_featurizer(f, cache, d_feats)
        grads = d_ws + d_bs + [feats.T @ d_logits, d_logits.sum(axis=0)]
        params, state = adam_step(params, grads, state, config)
        f, g = with_params(f, g, params)
        curve.append(loss)
    return f, g, curve


def train_erm(data, dims, n_classes: int, config: TrainConfig):
    """Plain ERM training; the lambda = 0 reference trajectory."""
    return train_precursor(data, dims, n_classes, config)


def train_grounded(train_domains, precursor, dims, config: TrainConfig, precursor_data=None):
    """Phase 2: grounded training of the main model.

    train_domains: list of (X, y) per training domain, pooled for batch
    sampling.  precursor: the frozen (f_s, g_s) pair from phase 1.
    precursor_data, when given, is sampled each step to evaluate l_s for
    reporting (it never contributes gradient).  Returns (f, g, history).
    """
    f_s, g_s = precursor
    x = np.vstack([np.atleast_2d(np.asarray(d[0], dtype=np.float64)) for d in train_domains])
    y = np.concatenate([np.asarray(d[1]) for d in train_domains])
    n_classes = g_s.weight.shape[1]

    f = init_featurizer(dims, config.init, seed=config.seed)
    if f.feat_dim != f_s.feat_dim:
        raise ShapeMismatch(
            f"main feat_dim {f.feat_dim} != precursor feat_dim {f_s.feat_dim}"
        )
    g = init_head(f.feat_dim, n_classes, seed=config.seed)
    params = model_params(f, g)
    state = AdamState.fresh(params)

    if precursor_data is not None:
        xp_all = np.atleast_2d(np.asarray(precursor_data[0], dtype=np.float64))
        yp_all = np.asarray(precursor_data[1])

    history = []
    for step in range(config.steps):
        idx = _batch_indices(len(x), config, step)
        if precursor_data is not None:
            gp = rng.generator(config.seed, "precursor-batch", step)
            pidx = gp.integers(0, len(xp_all), size=config.batch_size)
            pbatch = (xp_all[pidx], yp_all[pidx])
        else:
            pbatch = (x[idx], y[idx])  # placeholder; l_s still well-defined
        breakdown, grads = smos_loss_and_grads(
            (x[idx], y[idx]), pbatch, f_s, g_s, f, g, config
        )
        params, state = adam_step(params, _grads_as_params(grads, len(f.weights)), state, config)
        f, g = with_params(f, g, params)
        history.append(breakdown)
    return f, g, history


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(f: ToyFeaturizer, g: LinearHead, path: str):
    payload = {
        "dims": list(f.dims),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()} for w, b in zip(f.weights, f.biases)
        ],
        "head": {"w": g.weight.tolist(), "b": g.bias.tolist()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str):
    with open(path) as fh:
        payload = json.load(fh)
    try:
        weights = tuple(np.asarray(l["w"], dtype=np.float64) for l in payload["layers"])
        biases = tuple(np.asarray(l["b"], dtype=np.float64) for l in payload["layers"])
        f = ToyFeaturizer(weights, biases)
        head = payload.get("head")
        g = LinearHead(np.asarray(head["w"]), np.asarray(head["b"])) if head else None
    except (KeyError, TypeError) as e:
        raise ShapeMismatch(f"malformed checkpoint {path}: {e}") from e
    return f, g


# ---------------------------------------------------------------------------
# finite-difference verification


def finite_diff_check(
    loss_and_grad,
    params,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    coords_per_block: int = 25,
    seed: int = 0,
):
    """Verify analytic gradients against central finite differences.

    loss_and_grad(params) must return (loss, grads) with grads matching
    params block-for-block.  A random subsample of coordinates per block
    is perturbed by +-h.  Relative error uses a 1e-6 scale floor so
    near-zero coordinates do not produce spurious blowups.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    params = [np.asarray(p, dtype=np.float64) for p in params]
    loss0, grads = loss_and_grad(params)
    if not math.isfinite(loss0):
        raise NonFiniteLoss(f"loss is {loss0!r}")

    g = rng.generator(seed, "fdcheck")
    blocks = []
    worst = 0.0
    for bi, (p, an) in enumerate(zip(params, grads)):
        an = np.asarray(an, dtype=np.float64)
        if an.shape != p.shape:
            raise ShapeMismatch(f"block {bi}: grad shape {an.shape} != param {p.shape}")
        flat = p.size
        n_check = min(coords_per_block, flat)
        coords = g.choice(flat, size=n_check, replace=False)
        block_worst = 0.0
        for c in coords:
            idx = np.unravel_index(c, p.shape)
            perturbed = [q.copy() for q in params]
            perturbed[bi][idx] += h
            lp, _ = loss_and_grad(perturbed)
            perturbed[bi][idx] -= 2 * h
            lm, _ = loss_and_grad(perturbed)
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise NonFiniteLoss("perturbed loss is non-finite")
            fd = (lp - lm) / (2 * h)
            scale = max(abs(fd), abs(an[idx]), 1e-6)
            block_worst = max(block_worst, abs(fd - an[idx]) / scale)
        blocks.append(
            {"block": bi, "shape": list(p.shape), "checked": int(n_check),
             "max_rel_err": float(block_worst)}
        )
        worst = max(worst, block_worst)
    return {
        "h": h,
        "tolerance": tolerance,
        "blocks": blocks,
        "max_rel_err": float(worst),
        "passed": bool(worst < tolerance),
    }


def make_smos_loss_fn(batch, precursor_batch, f_s, g_s, f_template, g_template, config):
    """Adapter giving finite_diff_check a (loss, grads) view of the
    grounded objective over the main model's parameter list."""

    def loss_and_grad(params):
        f, g = with_params(f_template, g_template, params)
        breakdown, grads = smos_loss_and_grads(batch, precursor_batch, f_s, g_s, f, g, config)
        return breakdown.total, _grads_as_params(grads, len(f.weights))

    return loss_and_grad


def accuracy(f: ToyFeaturizer, g: LinearHead, x, y) -> float:
    logits = head_logits(g, forward_features(f, np.atleast_2d(np.asarray(x, dtype=np.float64))))
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))
