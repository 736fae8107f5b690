"""Reference uncertainty scores. Higher always means more confident."""

from __future__ import annotations

import numpy as np

from .gallery import Gallery
from . import vmf

# Wire-format method names accepted by the evaluation pipeline and CLI.
METHOD_NAMES = ("AccScr", "SCF", "PFE", "SF", "GalUE", "HolUE", "HolUE-sum")


def acc_score(gallery: Gallery, z) -> float:
    """Best gallery cosine similarity for a probe."""
    z = vmf.as_unit_vector(np.asarray(z, dtype=np.float64))
    if z.shape[0] != gallery.d:
        raise ValueError(f"dimension mismatch: gallery d={gallery.d}, z d={z.shape[0]}")
    return float(np.max(gallery.means @ z))


def q_accscr(score: float, tau: float) -> float:
    """Distance of the acceptance score from the operating threshold."""
    return abs(float(score) - float(tau))


def q_scf(kappa: float) -> float:
    """Probe concentration used directly as confidence."""
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa <= 0.0:
        raise ValueError(f"kappa must be finite and > 0, got {kappa!r}")
    return kappa


def q_pfe(sigma_sq) -> float:
    """Negative harmonic mean of per-dimension variances."""
    s = np.asarray(sigma_sq, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] < 1:
        raise ValueError(f"expected a 1-d variance vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
        raise ValueError("variances must be finite and > 0")
    return float(-s.shape[0] / np.sum(1.0 / s))


def q_sf(scale: float) -> float:
    """Scale feature passed through as confidence."""
    scale = float(scale)
    if not np.isfinite(scale):
        raise ValueError(f"scale must be finite, got {scale!r}")
    return scale
