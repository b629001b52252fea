"""Labeled image datasets: procedural builtins plus directory loading.

The builtins are small seeded texture sets (3x32x32, values in [0,1])
designed so a desk-scale classifier trains in seconds:

  stripes-blobs    2 classes for the robust-vs-standard training contrast.
                   Each image carries a weak noisy texture (stripes or
                   blobs) that matches the label only 88% of the time,
                   plus a tiny corner tag that matches it always. The tag
                   is cheap to flip inside a small L2 ball, the texture
                   is not: standard training shortcuts to the tag and is
                   defenseless once an attacker can reach it.
  stripes-domains  2 classes, horizontal vs vertical stripes; the
                   unpaired domain-translation testbed.
  textures4        4 texture families with random phase, so class means
                   are near-uniform gray and Gaussian seed draws are
                   genuinely ambiguous.
  textures4-locked same 4 families with the phase and frequency pinned
                   per class, so class identity determines fine detail
                   exactly; the inpainting / super-resolution testbed.
  cifar-small      10 texture families; the default training set.

Directory datasets follow root/<class_name>/*.fif|png with class names
sorted alphabetically.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from gradsynth.errors import DataError, MissingFileError

from . import floatimage

BUILTIN_NAMES = (
    "stripes-blobs",
    "stripes-domains",
    "textures4",
    "textures4-locked",
    "cifar-small",
)


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0,1]
    labels: np.ndarray  # (N,) int64
    class_names: list

    def __post_init__(self):
        if self.images.ndim != 4 or len(self.labels) != len(self.images):
            raise DataError(f"bad dataset shapes {self.images.shape} / {self.labels.shape}")

    def __len__(self):
        return len(self.images)

    @property
    def num_classes(self):
        return len(self.class_names)

    def subset(self, idx):
        return Dataset(self.images[idx], self.labels[idx], self.class_names)

    def split(self, n_train):
        return self.subset(slice(0, n_train)), self.subset(slice(n_train, len(self)))


# ---------------------------------------------------------------------------
# pattern primitives


def _grid(h, w):
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return yy / h, xx / w


def _stripes(h, w, theta, freq, phase):
    yy, xx = _grid(h, w)
    t = np.cos(theta) * xx + np.sin(theta) * yy
    return np.sin(2.0 * np.pi * freq * t + phase)


def _rings(h, w, cy, cx, freq, phase):
    yy, xx = _grid(h, w)
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return np.sin(2.0 * np.pi * freq * r + phase)


def _blobs(h, w, rng, k=3, sigma=0.12):
    yy, xx = _grid(h, w)
    out = np.zeros((h, w))
    for _ in range(k):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        out += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    out = out / max(out.max(), 1e-9) * 2.0 - 1.0
    return out


def _checker(h, w, freq, py, px):
    yy, xx = _grid(h, w)
    return np.sin(2 * np.pi * freq * yy + py) * np.sin(2 * np.pi * freq * xx + px)


def _compose(pattern, rng, amp, noise=0.03, tint=0.02):
    h, w = pattern.shape
    img = np.empty((3, h, w))
    for c in range(3):
        img[c] = 0.5 + amp * pattern + rng.uniform(-tint, tint)
    img += rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# builtins


def _gen_stripes_blobs(n_per_class, rng, h=32, w=32):
    images, labels = [], []
    for y in (0, 1):
        for _ in range(n_per_class):
            amp = rng.uniform(0.08, 0.22)
            # texture agrees with the label only 88% of the time
            tex = y if rng.uniform() >= 0.12 else 1 - y
            if tex == 0:
                pat = _stripes(h, w, 0.0, rng.integers(3, 5), rng.uniform(0, 2 * np.pi))
            else:
                pat = _blobs(h, w, rng)
            img = _compose(pat, rng, amp, noise=0.05)
            # corner tag always agrees; full flip costs ~0.55 in L2, a
            # boundary crossing about half that, so eps=0.5 reaches it
            img[:, :2, :2] = 0.42 if y == 0 else 0.58
            images.append(img)
            labels.append(y)
    return images, labels, ["stripes", "blobs"]


def _gen_stripes_domains(n_per_class, rng, h=32, w=32):
    images, labels = [], []
    for y in (0, 1):
        for _ in range(n_per_class):
            theta = 0.0 if y == 0 else np.pi / 2
            pat = _stripes(h, w, theta, rng.integers(3, 6), rng.uniform(0, 2 * np.pi))
            images.append(_compose(pat, rng, rng.uniform(0.25, 0.35), noise=0.02))
            labels.append(y)
    return images, labels, ["horizontal", "vertical"]


def _texture(kind, rng, h, w):
    phase = rng.uniform(0, 2 * np.pi)
    if kind == 0:
        return _stripes(h, w, 0.0, rng.integers(3, 5), phase)
    if kind == 1:
        return _stripes(h, w, np.pi / 2, rng.integers(3, 5), phase)
    if kind == 2:
        return _stripes(h, w, np.pi / 4, rng.integers(3, 5), phase)
    if kind == 3:
        return _rings(h, w, rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.integers(3, 5), phase)
    if kind == 4:
        return _checker(h, w, rng.integers(2, 4), phase, rng.uniform(0, 2 * np.pi))
    if kind == 5:
        return _blobs(h, w, rng)
    if kind == 6:
        return _stripes(h, w, 3 * np.pi / 4, rng.integers(3, 5), phase)
    if kind == 7:
        return _stripes(h, w, 0.0, rng.integers(7, 9), phase)
    if kind == 8:
        return _stripes(h, w, np.pi / 2, rng.integers(7, 9), phase)
    yy, xx = _grid(h, w)
    return np.sin(2 * np.pi * (rng.integers(2, 4) * xx * yy) + phase)


def _gen_textures(n_per_class, rng, kinds, names, h=32, w=32):
    images, labels = [], []
    for y, kind in enumerate(kinds):
        for _ in range(n_per_class):
            images.append(_compose(_texture(kind, rng, h, w), rng, rng.uniform(0.25, 0.35)))
            labels.append(y)
    return images, labels, names


def _gen_textures_locked(n_per_class, rng, h=32, w=32):
    """Pattern is a pure function of the class; only amp/tint/noise vary.

    Frequency 8 on a 32px canvas: one period spans 4 pixels, so 4x
    block-mean downsampling erases the pattern entirely and recovering
    it is a pure act of class knowledge.
    """
    makers = [
        ("horizontal", _stripes(h, w, 0.0, 8, 0.7)),
        ("vertical", _stripes(h, w, np.pi / 2, 8, 0.7)),
        ("diagonal", _stripes(h, w, np.pi / 4, 8, 0.7)),
        ("rings", _rings(h, w, 0.5, 0.5, 8, 0.7)),
    ]
    images, labels = [], []
    for y, (_, pat) in enumerate(makers):
        for _ in range(n_per_class):
            images.append(_compose(pat, rng, rng.uniform(0.2, 0.35)))
            labels.append(y)
    return images, labels, [n for n, _ in makers]


def builtin(name, n_per_class=100, seed=0):
    """Deterministically generate one of the builtin datasets."""
    rng = np.random.default_rng(seed)
    if name == "stripes-blobs":
        images, labels, class_names = _gen_stripes_blobs(n_per_class, rng)
    elif name == "stripes-domains":
        images, labels, class_names = _gen_stripes_domains(n_per_class, rng)
    elif name == "textures4":
        images, labels, class_names = _gen_textures(
            n_per_class, rng, (0, 1, 2, 3), ["horizontal", "vertical", "diagonal", "rings"]
        )
    elif name == "textures4-locked":
        images, labels, class_names = _gen_textures_locked(n_per_class, rng)
    elif name == "cifar-small":
        names = ["h-stripes", "v-stripes", "d-stripes", "rings", "checker",
                 "blobs", "a-stripes", "h-fine", "v-fine", "hyper"]
        images, labels, class_names = _gen_textures(n_per_class, rng, tuple(range(10)), names)
    else:
        raise DataError(f"unknown builtin dataset {name!r} (have {', '.join(BUILTIN_NAMES)})")
    images = np.stack(images).astype(np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    order = rng.permutation(len(images))
    return Dataset(images[order], labels[order], class_names)


# ---------------------------------------------------------------------------
# directory loading


def load_directory(root, shuffle_seed=None):
    """Load root/<class_name>/*.fif|png with alphabetical class order."""
    if not os.path.isdir(root):
        raise MissingFileError(f"no such directory: {root}")
    class_names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not class_names:
        raise DataError(f"{root}: no class subdirectories")
    images, labels = [], []
    shape = None
    for y, cname in enumerate(class_names):
        cdir = os.path.join(root, cname)
        files = sorted(f for f in os.listdir(cdir) if f.endswith((".fif", ".png")))
        for fname in files:
            path = os.path.join(cdir, fname)
            img = floatimage.read_image(path) if fname.endswith(".fif") else floatimage.read_png(path)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise DataError(f"{path}: shape {img.shape} inconsistent with {shape}")
            images.append(img)
            labels.append(y)
    if not images:
        raise DataError(f"{root}: class directories contain no images")
    ds = Dataset(np.stack(images), np.asarray(labels, dtype=np.int64), class_names)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(ds))
        ds = ds.subset(order)
    return ds


def load_dataset(name_or_path, n_per_class=100, seed=0, shuffle_seed=None):
    """Resolve a builtin name or a directory tree to a Dataset."""
    if name_or_path in BUILTIN_NAMES:
        return builtin(name_or_path, n_per_class=n_per_class, seed=seed)
    return load_directory(name_or_path, shuffle_seed=shuffle_seed)
