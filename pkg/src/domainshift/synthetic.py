"""Synthetic corpora and toy tasks for desk-scale experiments and tests.

Two families:
  * tiny PNG corpora written to disk (monochrome domains, noise domains)
    for exercising ingestion and the pixel-space shift metrics;
  * vector classification tasks (Gaussian blobs with per-domain tint
    dimensions) for the trainer and representation-space metrics.
"""

import os

import numpy as np
from PIL import Image

from . import rng
from .corpus import scan_tree


def write_png(path: str, pixels: np.ndarray):
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path)


def solid_grid(color, height: int = 4, width: int = 4) -> np.ndarray:
    grid = np.zeros((height, width, 3), dtype=np.uint8)
    grid[:, :] = color
    return grid


def make_monochrome_corpus(root, domain_colors, classes=("a", "b"), per_class=3, size=4):
    """Corpus where every image of a domain is one solid color.

    domain_colors: {domain_name: (r, g, b)}.  Returns the scanned manifest.
    """
    for dname, color in domain_colors.items():
        for cname in classes:
            cdir = os.path.join(root, dname, cname)
            os.makedirs(cdir, exist_ok=True)
            for i in range(per_class):
                write_png(os.path.join(cdir, f"img{i:03d}.png"), solid_grid(color, size, size))
    return scan_tree(root)


def make_noise_corpus(root, domains=("d0",), classes=("a", "b"), per_class=8, size=8, seed=0):
    """Corpus of uniform-random RGB images."""
    for dname in domains:
        for cname in classes:
            cdir = os.path.join(root, dname, cname)
            os.makedirs(cdir, exist_ok=True)
            g = rng.generator(seed, "noise", dname, cname)
            for i in range(per_class):
                pixels = g.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
                write_png(os.path.join(cdir, f"img{i:03d}.png"), pixels)
    return scan_tree(root)


def make_blobs(seed: int = 0, n_per_class: int = 200, separation: float = 3.0, noise: float = 0.5):
    """Linearly separable 2-class, 2-dim Gaussian blobs."""
    g = rng.generator(seed, "blobs")
    c0 = np.array([separation / 2, separation / 2])
    c1 = -c0
    x0 = c0 + noise * g.normal(size=(n_per_class, 2))
    x1 = c1 + noise * g.normal(size=(n_per_class, 2))
    x = np.vstack([x0, x1])
    y = np.concatenate([np.zeros(n_per_class, dtype=int), np.ones(n_per_class, dtype=int)])
    perm = g.permutation(len(x))
    return x[perm], y[perm]


# tint vectors: first two dims carry class signal, last two carry the
# domain's stylistic shift
_TASK_TINTS = {
    "alpha": np.array([2.0, 0.0]),
    "beta": np.array([0.0, 2.0]),
    "gamma": np.array([-2.0, -2.0]),
}


def _tinted_domain(g, tint, n_per_class, class_sep, signal_noise, tint_noise):
    c0 = np.array([class_sep / 2, class_sep / 2])
    c1 = -c0
    xs, ys = [], []
    for label, center in ((0, c0), (1, c1)):
        signal = center + signal_noise * g.normal(size=(n_per_class, 2))
        style = tint + tint_noise * g.normal(size=(n_per_class, 2))
        xs.append(np.hstack([signal, style]))
        ys.append(np.full(n_per_class, label, dtype=int))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    perm = g.permutation(len(x))
    return x[perm], y[perm]


def make_tinted_task(seed: int = 0, n_per_class: int = 100, class_sep: float = 3.0,
                     signal_noise: float = 0.5, tint_noise: float = 0.4):
    """3-domain color-shifted classification task in 4-dim input space.

    Returns {"train": [(name, X, y), (name, X, y)], "test": (name, X, y)}.
    Domains share class structure in dims 0-1 and differ by a fixed tint
    in dims 2-3; "gamma" is the held-out domain.
    """
    domains = {}
    for name, tint in _TASK_TINTS.items():
        g = rng.generator(seed, "tinted", name)
        domains[name] = _tinted_domain(g, tint, n_per_class, class_sep, signal_noise, tint_noise)
    return {
        "train": [("alpha", *domains["alpha"]), ("beta", *domains["beta"])],
        "test": ("gamma", *domains["gamma"]),
    }


def make_precursor_task(seed: int = 0, n_per_class: int = 400, class_sep: float = 3.0,
                        signal_noise: float = 0.5, tint_spread: float = 3.0):
    """Precursor corpus matching the tinted task's input space.

    The tint dims are large-variance noise uncorrelated with labels, so a
    well-trained precursor learns to suppress them; that suppression is
    what grounding transfers to the main model.
    """
    g = rng.generator(seed, "precursor")
    c0 = np.array([class_sep / 2, class_sep / 2])
    c1 = -c0
    xs, ys = [], []
    for label, center in ((0, c0), (1, c1)):
        signal = center + signal_noise * g.normal(size=(n_per_class, 2))
        style = g.uniform(-tint_spread, tint_spread, size=(n_per_class, 2))
        xs.append(np.hstack([signal, style]))
        ys.append(np.full(n_per_class, label, dtype=int))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    perm = g.permutation(len(x))
    return x[perm], y[perm]
