"""Intra-class variation (ICV) and inter-domain dissimilarity (IDD).

ICV of a domain: per class, split the samples into two equal random
halves, pool each half into a channel distribution, take their JSD, then
average over classes; repeated over trials (default 3) and averaged.
Low ICV means the class looks consistent within the domain.

IDD of two domains: JSD between their pooled channel distributions, a
stylistic distance in [0, 1].  representation_idd applies the same idea
to binned feature-vector distributions from a trained featurizer.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .corpus import CorpusManifest, DomainSpec, decode_image, warn
from .divergence import js_divergence
from .errors import EmptyDomain, NoUsableClass
from .histogram import feature_histogram, pool_histogram

DEFAULT_TRIALS = 3
DEFAULT_FEATURE_BINS = 32


@dataclass(frozen=True)
class IcvReport:
    domain: str
    per_class: dict  # class name -> mean JSD over trials
    icv: float
    trials: int
    seed: int
    per_trial: np.ndarray  # (trials, classes), class order = sorted(per_class)
    log_base: int = 2

    def __post_init__(self):
        object.__setattr__(self, "per_trial", np.asarray(self.per_trial, dtype=np.float64))
        values = [self.per_class[c] for c in sorted(self.per_class)]
        if abs(self.icv - float(np.mean(values))) > 1e-12:
            raise ValueError("icv does not equal the class mean")
        if np.any(self.per_trial < 0) or np.any(self.per_trial > 1):
            raise ValueError("stored JSD outside [0, 1]")

    def to_dict(self) -> dict:
        classes = sorted(self.per_class)
        return {
            "domain": self.domain,
            "icv": self.icv,
            "per_class": {c: self.per_class[c] for c in classes},
            "per_trial": self.per_trial.tolist(),
            "class_order": classes,
            "trials": self.trials,
            "seed": self.seed,
            "log_base": self.log_base,
        }


@dataclass(frozen=True)
class IddMatrix:
    domain_names: list
    values: np.ndarray
    sample_caps: dict = field(default_factory=dict)  # name -> images used
    log_base: int = 2

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        n = len(self.domain_names)
        if v.shape != (n, n):
            raise ValueError(f"matrix shape {v.shape} for {n} domains")
        if np.any(np.abs(v - v.T) > 1e-12):
            raise ValueError("IDD matrix is not symmetric")
        if np.any(np.diagonal(v) != 0):
            raise ValueError("IDD diagonal must be exactly 0")

    def to_dict(self) -> dict:
        return {
            "domain_names": list(self.domain_names),
            "values": self.values.tolist(),
            "sample_caps": dict(self.sample_caps),
            "log_base": self.log_base,
        }


def _load_domain_grids(domain: DomainSpec, root: str, paths=None, decode=decode_image):
    paths = paths if paths is not None else [p for ps in domain.classes.values() for p in ps]
    return [decode(os.path.join(root, p)) for p in paths]


def _capped_paths(paths, cap, *key_parts):
    """Deterministic subset of at most cap paths, keyed for reproducibility."""
    if cap is None or cap >= len(paths):
        return list(paths)
    g = rng.generator(*key_parts)
    idx = np.sort(g.choice(len(paths), size=cap, replace=False))
    return [paths[i] for i in idx]


def intra_class_variation(
    domain: DomainSpec,
    root: str = ".",
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    sample_cap=None,
    decode=decode_image,
) -> IcvReport:
    """ICV over the domain's classes, averaged over trials.

    Per trial t and class c the samples are shuffled by a generator keyed
    on (seed, t, c), cut into two equal halves (odd counts drop the last
    shuffled sample), pooled, and compared by JSD.  With a sample_cap the
    capped subset is fixed across trials; only the split varies.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    usable = {}
    for cname in sorted(domain.classes):
        paths = domain.classes[cname]
        if len(paths) < 2:
            warn(f"class {cname!r} dropped from ICV: fewer than 2 samples", cname)
            continue
        usable[cname] = _capped_paths(paths, sample_cap, seed, "icv-cap", cname)
    if not usable:
        raise NoUsableClass(f"domain {domain.name!r} has no class with >= 2 samples")

    classes = sorted(usable)
    per_trial = np.zeros((trials, len(classes)))
    for t in range(trials):
        for j, cname in enumerate(classes):
            paths = usable[cname]
            g = rng.generator(seed, t, cname)
            perm = g.permutation(len(paths))
            half = len(paths) // 2
            first = [paths[i] for i in perm[:half]]
            second = [paths[i] for i in perm[half : 2 * half]]
            p = pool_histogram(_load_domain_grids(domain, root, first, decode))
            q = pool_histogram(_load_domain_grids(domain, root, second, decode))
            per_trial[t, j] = js_divergence(p.probs, q.probs)

    per_class = {c: float(per_trial[:, j].mean()) for j, c in enumerate(classes)}
    icv = float(np.mean([per_class[c] for c in classes]))
    return IcvReport(
        domain=domain.name,
        per_class=per_class,
        icv=icv,
        trials=trials,
        seed=seed,
        per_trial=per_trial,
    )


def _pooled_domain_distribution(domain, root, sample_cap, seed, decode):
    paths = [p for ps in (domain.classes[c] for c in sorted(domain.classes)) for p in ps]
    if not paths:
        raise EmptyDomain(f"domain {domain.name!r} has no samples")
    paths = _capped_paths(paths, sample_cap, seed, "idd-cap", domain.name)
    return pool_histogram(_load_domain_grids(domain, root, paths, decode)), len(paths)


def inter_domain_dissimilarity(
    a: DomainSpec,
    b: DomainSpec,
    root: str = ".",
    root_b: str = None,
    sample_cap=None,
    seed: int = 0,
    decode=decode_image,
) -> float:
    """JSD between the pooled channel distributions of two domains."""
    pa, _ = _pooled_domain_distribution(a, root, sample_cap, seed, decode)
    pb, _ = _pooled_domain_distribution(b, root_b if root_b is not None else root, sample_cap, seed, decode)
    return js_divergence(pa.probs, pb.probs)


def idd_matrix(
    manifest: CorpusManifest,
    reference: DomainSpec = None,
    reference_root: str = None,
    sample_cap=None,
    seed: int = 0,
    decode=decode_image,
) -> IddMatrix:
    """Pairwise IDD over manifest domains, with an optional external
    reference domain (e.g. a stand-in pre-training corpus) appended."""
    entries = [(d, manifest.root) for d in manifest.domains]
    if reference is not None:
        entries.append((reference, reference_root if reference_root is not None else manifest.root))

    dists, caps = [], {}
    for d, droot in entries:
        dist, used = _pooled_domain_distribution(d, droot, sample_cap, seed, decode)
        dists.append(dist)
        caps[d.name] = used

    n = len(entries)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v = js_divergence(dists[i].probs, dists[j].probs)
            values[i, j] = values[j, i] = v
    return IddMatrix(
        domain_names=[d.name for d, _ in entries], values=values, sample_caps=caps
    )


def representation_idd(
    featurizer,
    domains,
    bins: int = DEFAULT_FEATURE_BINS,
    seed: int = 0,
) -> IddMatrix:
    """Pairwise JSD between binned feature distributions per domain.

    domains: list of (name, samples) with samples an (n, in_dim) array.
    All domains share one global min-max binning range per feature
    dimension, computed jointly, so the distributions are comparable.
    """
    from .trainer import forward_features

    names = [name for name, _ in domains]
    feats = [np.atleast_2d(forward_features(featurizer, np.asarray(x, dtype=np.float64)))
             for _, x in domains]
    stacked = np.vstack(feats)
    ranges = [
        (float(stacked[:, j].min()), float(stacked[:, j].max()))
        for j in range(stacked.shape[1])
    ]
    dists = [feature_histogram(f, bins=bins, ranges=ranges) for f in feats]

    n = len(domains)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            v = js_divergence(dists[i].probs, dists[j].probs)
            values[i, j] = values[j, i] = v
    caps = {name: len(f) for name, f in zip(names, feats)}
    return IddMatrix(domain_names=names, values=values, sample_caps=caps)
