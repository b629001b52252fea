"""Multivariate normal seed models fit per class.

A seed model is N(mu_y, Sigma_y) over images of class y at a reduced fit
resolution; draws are upsampled back with nearest neighbor. Sigma_y is
kept in factor form F F^T + shrinkage*I: the empirical covariance is
eigendecomposed, negative eigenvalues are clamped to zero, and F =
V*sqrt(lambda), which keeps the model positive semi-definite by
construction even when the sample count is far below the dimension.

Sampling is per-draw seeded (one child RNG stream per draw index), so a
batch of n draws is identical regardless of how it is split across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gradsynth.data import transforms
from gradsynth.errors import DataError
from gradsynth.models.container import read_container, write_container

KIND = "seed-models"


@dataclass
class ClassSeedModel:
    class_index: int
    mean: np.ndarray       # (d,) at fit resolution
    factor: np.ndarray     # (d, d) with Sigma ~ factor @ factor.T + shrinkage*I
    shrinkage: float
    fit_shape: tuple       # (C, h, w) at fit resolution
    upsample_factor: int

    @property
    def dim(self):
        return int(np.prod(self.fit_shape))

    def covariance(self):
        """Dense Sigma = F F^T + shrinkage*I (test/inspection helper)."""
        return self.factor @ self.factor.T + self.shrinkage * np.eye(self.dim)

    def sample(self, n, master_seed=0, clip=True):
        """Draw n seed images at full resolution, (n,C,H,W) float32."""
        children = np.random.SeedSequence(master_seed).spawn(n)
        c, h, w = self.fit_shape
        out = np.empty((n, c, h, w), dtype=np.float64)
        root = np.sqrt(self.shrinkage)
        for i, ss in enumerate(children):
            rng = np.random.default_rng(ss)
            z1 = rng.standard_normal(self.dim)
            z2 = rng.standard_normal(self.dim)
            v = self.mean + self.factor @ z1 + root * z2
            out[i] = v.reshape(c, h, w)
        full = transforms.upsample_nn(out, self.upsample_factor)
        if clip:
            full = np.clip(full, 0.0, 1.0)
        return full.astype(np.float32)


def fit_seed_model(dataset, class_index, shrinkage=None, downsample_factor=1):
    """Fit one class's Gaussian at 1/downsample_factor resolution.

    shrinkage defaults to 1e-3 * trace(Sigma_emp)/d (floored to 1e-8 so
    zero-variance classes still sample). Covariance uses the 1/N
    maximum-likelihood convention.
    """
    idx = np.flatnonzero(dataset.labels == class_index)
    if len(idx) < 2:
        raise DataError(f"class {class_index} has {len(idx)} samples; need at least 2")
    low = transforms.downsample(dataset.images[idx].astype(np.float64), downsample_factor)
    n = len(low)
    fit_shape = low.shape[1:]
    flat = low.reshape(n, -1)
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = centered.T @ centered / n
    if shrinkage is None:
        d = flat.shape[1]
        shrinkage = max(1e-3 * float(np.trace(cov)) / d, 1e-8)
    try:
        evals, evecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as e:
        raise DataError(f"covariance factorization failed (shrinkage too small?): {e}") from None
    evals = np.clip(evals, 0.0, None)
    factor = evecs * np.sqrt(evals)[None, :]
    return ClassSeedModel(
        class_index=int(class_index),
        mean=mean,
        factor=factor,
        shrinkage=float(shrinkage),
        fit_shape=tuple(fit_shape),
        upsample_factor=int(downsample_factor),
    )


class SeedModelSet:
    """All classes' seed models plus save/load on the tensor container."""

    def __init__(self, models, class_names=None):
        self.models = {m.class_index: m for m in models}
        self.class_names = class_names

    def __getitem__(self, class_index):
        if class_index not in self.models:
            raise DataError(f"no seed model for class {class_index}")
        return self.models[class_index]

    def __len__(self):
        return len(self.models)

    def save(self, path):
        tensors, meta_models = {}, {}
        for ci, m in sorted(self.models.items()):
            tensors[f"class{ci}.mean"] = m.mean.astype(np.float32)
            tensors[f"class{ci}.factor"] = m.factor.astype(np.float32)
            meta_models[str(ci)] = {
                "shrinkage": m.shrinkage,
                "fit_shape": list(m.fit_shape),
                "upsample_factor": m.upsample_factor,
            }
        meta = {"models": meta_models, "class_names": self.class_names}
        write_container(path, KIND, meta, tensors)

    @staticmethod
    def load(path):
        _, meta, tensors = read_container(path, expect_kind=KIND)
        models = []
        for ci_str, info in meta["models"].items():
            ci = int(ci_str)
            models.append(ClassSeedModel(
                class_index=ci,
                mean=tensors[f"class{ci}.mean"].astype(np.float64),
                factor=tensors[f"class{ci}.factor"].astype(np.float64),
                shrinkage=float(info["shrinkage"]),
                fit_shape=tuple(info["fit_shape"]),
                upsample_factor=int(info["upsample_factor"]),
            ))
        return SeedModelSet(models, class_names=meta.get("class_names"))


def fit_all(dataset, shrinkage=None, downsample_factor=1):
    models = [
        fit_seed_model(dataset, ci, shrinkage=shrinkage, downsample_factor=downsample_factor)
        for ci in range(dataset.num_classes)
    ]
    return SeedModelSet(models, class_names=list(dataset.class_names))
