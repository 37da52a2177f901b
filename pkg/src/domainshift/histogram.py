"""Binned probability distributions over pixels and feature vectors.

An image becomes a 768-component vector: 256 bins per RGB channel, each
channel block carrying total mass 1/3 so the whole vector is one valid
probability distribution.  Feature vectors get the analogous treatment
with configurable bins and ranges (mass 1/d per dimension block).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyPool

BINS_PER_CHANNEL = 256
N_CHANNELS = 3

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ChannelDistribution:
    """Probability vector over (channel, bin) outcomes, R||G||B order."""

    probs: np.ndarray
    bins_per_channel: int = BINS_PER_CHANNEL

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        n = N_CHANNELS * self.bins_per_channel
        if probs.shape != (n,):
            raise DimensionMismatch(f"expected {n} components, got {probs.shape}")
        if np.any(probs < 0):
            raise ValueError("negative probability component")
        if abs(math.fsum(probs.tolist()) - 1.0) > _SUM_TOL:
            raise ValueError("channel distribution does not sum to 1")
        for c in range(N_CHANNELS):
            block = probs[c * self.bins_per_channel : (c + 1) * self.bins_per_channel]
            if abs(math.fsum(block.tolist()) - 1.0 / N_CHANNELS) > _SUM_TOL:
                raise ValueError(f"channel block {c} does not sum to 1/3")

    def to_dict(self) -> dict:
        return {"bins_per_channel": self.bins_per_channel, "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelDistribution":
        return cls(np.asarray(d["probs"], dtype=np.float64), d["bins_per_channel"])


@dataclass(frozen=True)
class FeatureDistribution:
    """Probability vector over (dimension, bin) outcomes for feature vectors."""

    probs: np.ndarray
    dims: int
    bins: int
    ranges: tuple = field(default=())  # ((lo, hi), ...) per dimension

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "ranges", tuple(tuple(r) for r in self.ranges))
        if probs.shape != (self.dims * self.bins,):
            raise DimensionMismatch(
                f"expected {self.dims * self.bins} components, got {probs.shape}"
            )
        if np.any(probs < 0):
            raise ValueError("negative probability component")
        if abs(math.fsum(probs.tolist()) - 1.0) > _SUM_TOL:
            raise ValueError("feature distribution does not sum to 1")
        for d in range(self.dims):
            block = probs[d * self.bins : (d + 1) * self.bins]
            if abs(math.fsum(block.tolist()) - 1.0 / self.dims) > _SUM_TOL:
                raise ValueError(f"dimension block {d} does not sum to 1/{self.dims}")

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "bins": self.bins,
            "ranges": [list(r) for r in self.ranges],
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureDistribution":
        return cls(np.asarray(d["probs"], dtype=np.float64), d["dims"], d["bins"], d["ranges"])


def _channel_counts(grid: np.ndarray) -> np.ndarray:
    """(3, 256) pixel counts of one HxWx3 uint8 grid."""
    if grid.ndim != 3 or grid.shape[2] != N_CHANNELS:
        raise DimensionMismatch(f"expected HxWx3 grid, got shape {grid.shape}")
    return np.stack(
        [np.bincount(grid[:, :, c].ravel(), minlength=BINS_PER_CHANNEL) for c in range(N_CHANNELS)]
    )


def _normalize_counts(counts: np.ndarray) -> ChannelDistribution:
    # each channel block normalized by its own pixel total, then weighted 1/3
    probs = counts.astype(np.float64)
    probs /= probs.sum(axis=1, keepdims=True)
    probs /= N_CHANNELS
    return ChannelDistribution(probs.ravel())


def image_histogram(grid: np.ndarray) -> ChannelDistribution:
    """Per-channel bin frequencies of one pixel grid, channel-weighted 1/3."""
    return _normalize_counts(_channel_counts(grid))


def pool_histogram(grids, weighting: str = "pixel") -> ChannelDistribution:
    """Pooled distribution over many grids.

    weighting="pixel" (default) adds raw bin counts over all pixels of all
    grids before normalizing, so larger images carry proportionally more
    weight.  weighting="image" averages per-image distributions instead;
    kept for sensitivity analysis.
    """
    grids = list(grids)
    if not grids:
        raise EmptyPool("pool_histogram needs at least one grid")
    if weighting == "pixel":
        counts = _channel_counts(grids[0])
        for g in grids[1:]:
            counts = counts + _channel_counts(g)
        return _normalize_counts(counts)
    if weighting == "image":
        acc = np.zeros(N_CHANNELS * BINS_PER_CHANNEL)
        for g in grids:
            acc += image_histogram(g).probs
        return ChannelDistribution(acc / len(grids))
    raise ValueError(f"unknown weighting {weighting!r}")


def feature_histogram(features, bins: int, ranges=None) -> FeatureDistribution:
    """Uniform-bin distribution of feature vectors, one block per dimension.

    ranges=None resolves each dimension to its global min/max over the
    inputs; otherwise pass one (lo, hi) pair applied to every dimension or
    a per-dimension sequence of pairs.  Values at hi land in the last bin;
    values outside a fixed range clamp to the edge bins.  A dimension with
    zero spread becomes a delta in bin 0.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionMismatch(f"expected (n, d) features, got shape {x.shape}")
    n, d = x.shape
    if bins < 2:
        raise ValueError("bins must be >= 2")

    if ranges is None:
        resolved = [(float(x[:, j].min()), float(x[:, j].max())) for j in range(d)]
    else:
        ranges = list(ranges)
        if len(ranges) == 2 and np.isscalar(ranges[0]):
            resolved = [(float(ranges[0]), float(ranges[1]))] * d
        else:
            if len(ranges) != d:
                raise DimensionMismatch(f"{len(ranges)} ranges for {d} dimensions")
            resolved = [(float(lo), float(hi)) for lo, hi in ranges]

    probs = np.zeros(d * bins)
    for j, (lo, hi) in enumerate(resolved):
        if hi < lo:
            raise ValueError(f"dimension {j}: hi < lo")
        if hi == lo:
            # zero spread: delta in bin 0 keeps the block a valid distribution
            counts = np.zeros(bins)
            counts[0] = n
        else:
            idx = np.floor((x[:, j] - lo) / (hi - lo) * bins).astype(np.int64)
            idx = np.clip(idx, 0, bins - 1)
            counts = np.bincount(idx, minlength=bins).astype(np.float64)
        probs[j * bins : (j + 1) * bins] = counts / (n * d)
    return FeatureDistribution(probs, dims=d, bins=bins, ranges=resolved)
