"""KL and Jensen-Shannon divergences over discrete probability vectors.

All values are in bits (log base 2), which puts the Jensen-Shannon
divergence exactly in [0, 1].  Sums use math.fsum so 768-term histograms
with tiny components accumulate without cancellation error.
"""

import math

import numpy as np

from .errors import LengthMismatch, NotADistribution

LOG_BASE = 2
_SUM_TOL = 1e-9
_CLAMP_TOL = 1e-12


def _as_prob_vector(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise NotADistribution(f"{name}: expected a 1-d vector of length >= 2")
    if np.any(p < 0):
        raise NotADistribution(f"{name}: negative component")
    total = math.fsum(p.tolist())
    if abs(total - 1.0) > _SUM_TOL:
        raise NotADistribution(f"{name}: sums to {total!r}, not 1 within {_SUM_TOL}")
    return p


def _kl_terms_bits(p: np.ndarray, q: np.ndarray) -> float:
    """sum p*log2(p/q) with the 0*log(0/q)=0 convention; +inf on p>0, q=0."""
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    ps = p[support]
    qs = q[support]
    terms = ps * np.log2(ps / qs)
    return math.fsum(terms.tolist())


def kl_divergence(p, q, smoothing: float = 0.0) -> float:
    """KL(P || Q) in bits.

    With smoothing=0 the published formula is evaluated exactly and the
    result may be +inf on disjoint support.  With smoothing=eps > 0 both
    vectors get additive smoothing (p+eps)/(1+n*eps) first.
    """
    p = _as_prob_vector(p, "p")
    q = _as_prob_vector(q, "q")
    if p.size != q.size:
        raise LengthMismatch(f"p has {p.size} components, q has {q.size}")
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    if smoothing > 0:
        n = p.size
        p = (p + smoothing) / (1.0 + n * smoothing)
        q = (q + smoothing) / (1.0 + n * smoothing)
    return _kl_terms_bits(p, q)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits, guaranteed in [0, 1].

    M = (P+Q)/2, value = (KL(P||M) + KL(Q||M)) / 2.  M(x)=0 implies
    P(x)=Q(x)=0, so the mixture never divides by zero and no smoothing is
    needed.  Floating-point excess beyond the bounds is clamped only when
    below 1e-12; anything larger indicates an internal error.
    """
    p = _as_prob_vector(p, "p")
    q = _as_prob_vector(q, "q")
    if p.size != q.size:
        raise LengthMismatch(f"p has {p.size} components, q has {q.size}")
    m = 0.5 * (p + q)
    value = 0.5 * (_kl_terms_bits(p, m) + _kl_terms_bits(q, m))
    if value < 0.0:
        if value < -_CLAMP_TOL:
            raise AssertionError(f"JSD underflow beyond tolerance: {value!r}")
        value = 0.0
    elif value > 1.0:
        if value > 1.0 + _CLAMP_TOL:
            raise AssertionError(f"JSD overflow beyond tolerance: {value!r}")
        value = 1.0
    return value
