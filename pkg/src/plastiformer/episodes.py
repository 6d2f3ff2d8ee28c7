"""N-way K-shot episode construction and dataset backends.

An episode is N*K labeled support samples (episode-local labels are a random
permutation of 0..N-1 over the N drawn classes) followed by one query.
Tokens concatenate the flattened image, the one-hot label channels and a
query-marker channel.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass
class Episode:
    support: list  # [(image, label), ...] of length N*K
    query_image: np.ndarray
    query_label: int
    n: int
    k: int
    seed: int | None = None


def episode_tokens(ep: Episode) -> np.ndarray:
    """(N*K+1, P+N+1) token matrix; last row is the query token."""
    p = ep.query_image.shape[0]
    toks = np.zeros((len(ep.support) + 1, p + ep.n + 1))
    for i, (img, label) in enumerate(ep.support):
        toks[i, :p] = img
        toks[i, p + label] = 1.0
    toks[-1, :p] = ep.query_image
    toks[-1, -1] = 1.0  # query marker
    return toks


class SyntheticFewShotDataset:
    """Gaussian class prototypes in [0,1]^P; dataset-free stand-in for CI."""

    def __init__(self, num_classes: int = 64, pixels: int = 16, noise: float = 0.05,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.pixels = pixels
        self.noise = noise
        self.prototypes = rng.uniform(0.0, 1.0, size=(num_classes, pixels))

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    def samples_per_class(self) -> int:
        return 10**9  # generated on demand

    def sample(self, class_index: int, count: int, rng: np.random.Generator) -> np.ndarray:
        base = self.prototypes[class_index]
        imgs = base + rng.normal(0.0, self.noise, size=(count, self.pixels))
        return np.clip(imgs, 0.0, 1.0)


class OmniglotDataset:
    """Omniglot directory backend: root/<alphabet>/<character>/<sample>.png.

    Images are downscaled to 28x28, ink mapped to 1 and background to 0.
    """

    IMAGE_SIZE = 28

    def __init__(self, root: str):
        self.root = root
        self.classes = []
        for alphabet in sorted(os.listdir(root)):
            apath = os.path.join(root, alphabet)
            if not os.path.isdir(apath):
                continue
            for character in sorted(os.listdir(apath)):
                cpath = os.path.join(apath, character)
                if os.path.isdir(cpath):
                    files = sorted(
                        os.path.join(cpath, f)
                        for f in os.listdir(cpath)
                        if f.lower().endswith((".png", ".jpg", ".bmp"))
                    )
                    if files:
                        self.classes.append(files)
        if not self.classes:
            raise ValueError(f"no character classes found under {root}")
        self._cache = {}

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def samples_per_class(self) -> int:
        return min(len(files) for files in self.classes)

    def _load(self, path: str) -> np.ndarray:
        if path not in self._cache:
            from PIL import Image

            with Image.open(path) as im:
                im = im.convert("L").resize((self.IMAGE_SIZE, self.IMAGE_SIZE))
                arr = np.asarray(im, dtype=np.float64) / 255.0
            # Omniglot ships black strokes on white; invert so ink == 1
            self._cache[path] = 1.0 - arr.ravel()
        return self._cache[path]

    def sample(self, class_index: int, count: int, rng: np.random.Generator) -> np.ndarray:
        files = self.classes[class_index]
        if count > len(files):
            raise ValueError(f"class {class_index} has only {len(files)} samples")
        picks = rng.choice(len(files), size=count, replace=False)
        return np.stack([self._load(files[i]) for i in picks])


def sample_episode(dataset, n: int, k: int, rng: np.random.Generator,
                   seed: int | None = None) -> Episode:
    """Draw N distinct classes, K supports each, plus one query."""
    if dataset.num_classes < n:
        raise ValueError(f"dataset has {dataset.num_classes} classes, need {n}")
    if dataset.samples_per_class() < k + 1:
        raise ValueError(f"need {k + 1} samples per class")
    classes = rng.choice(dataset.num_classes, size=n, replace=False)
    labels = rng.permutation(n)  # episode-local label per drawn class
    query_pos = int(rng.integers(n))
    support = []
    query_image = None
    for slot_idx, (cls, label) in enumerate(zip(classes, labels)):
        count = k + 1 if slot_idx == query_pos else k
        imgs = dataset.sample(int(cls), count, rng)
        if slot_idx == query_pos:
            query_image = imgs[-1]
            imgs = imgs[:-1]
        support.extend((img, int(label)) for img in imgs)
    order = rng.permutation(len(support))
    support = [support[i] for i in order]
    return Episode(support, query_image, int(labels[query_pos]), n, k, seed)


def episode_stream(dataset, n: int, k: int, seed: int):
    """Reproducible infinite stream of episodes; episode i depends only on
    (seed, i)."""
    i = 0
    while True:
        rng = np.random.default_rng((seed, i))
        yield sample_episode(dataset, n, k, rng, seed=i)
        i += 1
