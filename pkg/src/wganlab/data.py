"""Toy 2-D target distributions and the generator's latent prior."""
from dataclasses import dataclass

import numpy as np

DATASETS = ("8gaussians", "25gaussians", "swissroll")


@dataclass(frozen=True)
class DatasetKind:
    tag: str = "swissroll"
    radius: float = 2.0          # 8gaussians ring radius
    std_8: float = 0.02
    scale_8: float = 1.414
    grid_spacing: float = 2.0    # 25gaussians
    std_25: float = 0.05
    scale_25: float = 2.828
    std_roll: float = 0.25
    scale_roll: float = 7.5

    def __post_init__(self):
        if self.tag not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}, got {self.tag!r}")

    def centers(self):
        """Mixture centers after scaling (empty for the swiss roll)."""
        if self.tag == "8gaussians":
            k = np.arange(8) * np.pi / 4
            return np.stack([np.cos(k), np.sin(k)], axis=1) * self.radius / self.scale_8
        if self.tag == "25gaussians":
            g = np.arange(-2, 3) * self.grid_spacing
            xx, yy = np.meshgrid(g, g, indexing="ij")
            return np.stack([xx.ravel(), yy.ravel()], axis=1) / self.scale_25
        return np.zeros((0, 2))

    def bounds(self):
        """Axis-aligned box holding essentially all the mass."""
        if self.tag == "swissroll":
            r = 4.5 * np.pi / self.scale_roll + 3 * self.std_roll / self.scale_roll
        elif self.tag == "8gaussians":
            r = self.radius / self.scale_8 + 3 * self.std_8 / self.scale_8
        else:
            r = 2 * self.grid_spacing / self.scale_25 + 3 * self.std_25 / self.scale_25
        return (-r, r, -r, r)


@dataclass(frozen=True)
class LatentSpec:
    dim: int = 2
    prior: str = "standard-normal"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dim must be >= 1")
        if self.prior != "standard-normal":
            raise ValueError(f"unsupported prior {self.prior!r}")


def sample_real(kind, n, rng):
    if isinstance(kind, str):
        kind = DatasetKind(kind)
    if kind.tag == "swissroll":
        u = rng.uniform(n)
        t = 1.5 * np.pi * (1.0 + 2.0 * u)
        pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
        return (pts + kind.std_roll * rng.normal_matrix(n, 2)) / kind.scale_roll
    centers = kind.centers()
    idx = rng.choice(len(centers), n)
    if kind.tag == "8gaussians":
        std, scale = kind.std_8, kind.scale_8
    else:
        std, scale = kind.std_25, kind.scale_25
    return centers[idx] + std * rng.normal_matrix(n, 2) / scale


def sample_latent(spec, n, rng):
    return rng.normal_matrix(n, spec.dim)
