"""Corpus discovery, manifest IO, image decoding, and seeded splits.

On-disk layout is root/<domain>/<class>/<image files>.  A manifest is the
serialized index of that layout: domain -> class -> relative sample paths,
with a shared label space across domains.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import rng
from .errors import (
    ClassMismatch,
    DecodeError,
    EmptyCorpus,
    InvariantViolation,
    ParseError,
)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def warn(message: str, path: str = "", *, stream=None):
    """Emit a JSON-lines warning to stderr (or the given stream)."""
    import sys

    record = {"warn": message, "path": path}
    print(json.dumps(record, sort_keys=True), file=stream or sys.stderr)


@dataclass(frozen=True)
class DomainSpec:
    name: str
    classes: dict  # class name -> list of relative sample paths

    def n_samples(self) -> int:
        return sum(len(v) for v in self.classes.values())


@dataclass(frozen=True)
class CorpusManifest:
    corpus_name: str
    root: str
    domains: list  # of DomainSpec
    seed: int = 0

    def __post_init__(self):
        validate_manifest(self)

    def domain(self, name: str) -> DomainSpec:
        for d in self.domains:
            if d.name == name:
                return d
        raise KeyError(f"no domain named {name!r}")

    def class_names(self) -> list:
        return sorted(self.domains[0].classes) if self.domains else []

    def to_dict(self) -> dict:
        return {
            "corpus_name": self.corpus_name,
            "seed": self.seed,
            "root": self.root,
            "domains": [
                {"name": d.name, "classes": {c: list(p) for c, p in d.classes.items()}}
                for d in self.domains
            ],
        }


def validate_manifest(m: CorpusManifest):
    if not m.domains:
        raise InvariantViolation("manifest has no domains")
    label_space = set(m.domains[0].classes)
    seen = {}
    for d in m.domains:
        if set(d.classes) != label_space:
            raise InvariantViolation(
                f"label space mismatch: domain {d.name!r} has classes "
                f"{sorted(d.classes)}, expected {sorted(label_space)}"
            )
        for cname, paths in d.classes.items():
            for p in paths:
                if p in seen:
                    raise InvariantViolation(
                        f"duplicate sample path {p!r} in ({d.name!r}, {cname!r}) "
                        f"and {seen[p]!r}"
                    )
                seen[p] = (d.name, cname)
    for d in m.domains:
        if not any(len(paths) >= 2 for paths in d.classes.values()):
            raise InvariantViolation(
                f"domain {d.name!r} has no class with >= 2 samples"
            )


def scan_tree(root_path: str, corpus_name: str = None, seed: int = 0) -> CorpusManifest:
    """Build a manifest from a root/<domain>/<class>/files layout.

    Classes are intersected across domains; dropped classes are reported
    as warnings.  Ordering is lexicographic by path throughout.
    """
    root_path = os.fspath(root_path)
    if not os.path.isdir(root_path):
        raise EmptyCorpus(f"not a directory: {root_path}")
    domain_dirs = sorted(
        e for e in os.listdir(root_path) if os.path.isdir(os.path.join(root_path, e))
    )
    if not domain_dirs:
        raise EmptyCorpus(f"no domain directory found under {root_path}")

    raw = {}
    for dname in domain_dirs:
        ddir = os.path.join(root_path, dname)
        classes = {}
        for cname in sorted(os.listdir(ddir)):
            cdir = os.path.join(ddir, cname)
            if not os.path.isdir(cdir):
                continue
            files = sorted(
                f
                for f in os.listdir(cdir)
                if f.lower().endswith(IMAGE_EXTENSIONS)
                and os.path.isfile(os.path.join(cdir, f))
            )
            if files:
                classes[cname] = [f"{dname}/{cname}/{f}" for f in files]
        raw[dname] = classes

    shared = None
    for classes in raw.values():
        names = set(classes)
        shared = names if shared is None else shared & names
    if not shared:
        raise ClassMismatch("class intersection across domains is empty")

    for dname, classes in raw.items():
        for cname in sorted(set(classes) - shared):
            warn(f"class {cname!r} dropped: absent from some domain", f"{dname}/{cname}")

    domains = [
        DomainSpec(dname, {c: raw[dname][c] for c in sorted(shared)})
        for dname in domain_dirs
    ]
    return CorpusManifest(
        corpus_name=corpus_name or os.path.basename(os.path.abspath(root_path)),
        root=root_path,
        domains=domains,
        seed=seed,
    )


def load_manifest(path: str) -> CorpusManifest:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read manifest {path}: {e}") from e
    try:
        domains = [
            DomainSpec(d["name"], {c: list(p) for c, p in d["classes"].items()})
            for d in data["domains"]
        ]
        return CorpusManifest(
            corpus_name=data["corpus_name"],
            root=data.get("root", "."),
            domains=domains,
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError, AttributeError) as e:
        raise ParseError(f"malformed manifest {path}: {e}") from e


def save_manifest(manifest: CorpusManifest, path: str):
    with open(path, "w") as f:
        json.dump(manifest.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")


def decode_image(path: str) -> np.ndarray:
    """Decode a PNG/JPEG into an HxWx3 uint8 grid.

    Grayscale replicates across channels; alpha is dropped; ICC profiles
    are ignored and pixel values taken as display RGB.
    """
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise DecodeError(f"cannot decode {path}: {e}") from e
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DecodeError(f"unexpected decoded shape {arr.shape} for {path}")
    return arr


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


def split_corpus(manifest: CorpusManifest, spec: SplitSpec):
    """Deterministic per-cell train/test split.

    Each (domain, class) cell is shuffled by a counter-based generator
    keyed on (seed, domain, class) and cut at floor(train_fraction * n).
    Returns two {domain: {class: [paths]}} indices partitioning the corpus.
    """
    train, test = {}, {}
    for d in manifest.domains:
        train[d.name], test[d.name] = {}, {}
        for cname, paths in d.classes.items():
            g = rng.generator(spec.seed, d.name, cname)
            perm = g.permutation(len(paths))
            shuffled = [paths[i] for i in perm]
            n_train = math.floor(spec.train_fraction * len(paths))
            if n_train == 0:
                warn(
                    f"cell ({d.name!r}, {cname!r}) too small: 0 train samples",
                    f"{d.name}/{cname}",
                )
            train[d.name][cname] = shuffled[:n_train]
            test[d.name][cname] = shuffled[n_train:]
    return train, test
