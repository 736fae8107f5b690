"""von Mises-Fisher kernels on the unit hypersphere, kept in log domain throughout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive, logsumexp

# Tolerance for vectors that claim to be unit norm already; matches the
# bundle reader's accept tier so loaded vectors pass downstream validation.
UNIT_NORM_ATOL = 1e-6

LOG_2PI = np.log(2.0 * np.pi)

# Power series length for the small-x / large-order Bessel branch. The series
# peaks near m = (sqrt(order^2 + x^2) - order) / 2, which stays below ~220 for
# every order/x pair that can reach this branch, so 1024 terms is ample.
_SERIES_TERMS = 1024


def as_unit_vector(v, atol: float = UNIT_NORM_ATOL) -> np.ndarray:
    """Validate and return a 1-d unit vector as float64.

    Rejects vectors whose norm deviates from 1 by more than ``atol``; callers
    that want renormalization must do it explicitly.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if v.shape[0] < 2:
        raise ValueError(f"dimension must be >= 2, got {v.shape[0]}")
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or abs(norm - 1.0) > atol:
        raise ValueError(f"vector norm {norm!r} is not 1 within {atol}")
    return v


@dataclass(frozen=True)
class VmfParams:
    """Mean direction and concentration; kappa == 0 is the uniform sphere."""

    mean: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "mean", as_unit_vector(self.mean))
        kappa = float(self.kappa)
        if not np.isfinite(kappa) or kappa < 0.0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        object.__setattr__(self, "kappa", kappa)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def _check_dimension(d: int) -> int:
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")
    return int(d)


def log_surface_area(d: int) -> float:
    """log of the surface area of the unit sphere in R^d."""
    d = _check_dimension(d)
    return float(np.log(2.0) + 0.5 * d * np.log(np.pi) - gammaln(0.5 * d))


def _log_bessel_series(order: float, x: np.ndarray) -> np.ndarray:
    # sum_m (x/2)^(2m + order) / (m! Gamma(m + order + 1)), evaluated as a
    # logsumexp so huge orders cannot underflow. Only reached for x small
    # relative to order, where the series converges in a few hundred terms.
    m = np.arange(_SERIES_TERMS, dtype=np.float64)
    log_half_x = np.log(0.5 * x)[..., None]
    terms = (2.0 * m + order) * log_half_x - gammaln(m + 1.0) - gammaln(m + order + 1.0)
    tail_slack = terms[..., -1] - np.max(terms, axis=-1)
    if np.any(tail_slack > -46.0):
        raise RuntimeError("Bessel power series did not converge; x too large for this branch")
    return logsumexp(terms, axis=-1)


def log_bessel_i(order: float, x) -> float | np.ndarray:
    """log I_order(x) for order >= 0, x >= 0; stable for large order and x.

    Uses the exponentially scaled Bessel from scipy where it is nonzero and a
    log-domain power series where scaling underflows (large order, small x).
    """
    order = float(order)
    if not np.isfinite(order) or order < 0.0:
        raise ValueError(f"order must be finite and >= 0, got {order!r}")
    x_in = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x_in)) or np.any(x_in < 0.0):
        raise ValueError("x must be finite and >= 0")
    x_arr = np.atleast_1d(x_in).astype(np.float64)
    out = np.empty_like(x_arr)

    scaled = ive(order, x_arr)
    direct = np.isfinite(scaled) & (scaled > 0.0)
    out[direct] = np.log(scaled[direct]) + x_arr[direct]

    rest = ~direct
    if np.any(rest):
        xr = x_arr[rest]
        vals = np.full(xr.shape, -np.inf)
        pos = xr > 0.0
        if np.any(pos):
            vals[pos] = _log_bessel_series(order, xr[pos])
        # x == 0: I_order(0) = 0 for order > 0 (order == 0 took the direct path)
        out[rest] = vals

    if x_in.ndim == 0:
        return float(out[0])
    return out.reshape(x_in.shape)


def log_c_d(d: int, kappa) -> float | np.ndarray:
    """log normalizing constant of the vMF density in R^d.

    kappa == 0 returns the analytic uniform limit -log_surface_area(d).
    """
    d = _check_dimension(d)
    kappa_in = np.asarray(kappa, dtype=np.float64)
    if not np.all(np.isfinite(kappa_in)) or np.any(kappa_in < 0.0):
        raise ValueError("kappa must be finite and >= 0")
    k = np.atleast_1d(kappa_in).astype(np.float64)
    out = np.full(k.shape, -log_surface_area(d))
    pos = k > 0.0
    if np.any(pos):
        kp = k[pos]
        order = 0.5 * d - 1.0
        with np.errstate(divide="ignore"):
            out[pos] = order * np.log(kp) - 0.5 * d * LOG_2PI - log_bessel_i(order, kp)
    if kappa_in.ndim == 0:
        return float(out[0])
    return out.reshape(kappa_in.shape)


def log_alpha(d: int, kappa) -> float | np.ndarray:
    """log of the uniform-to-vMF density ratio at the mode.

    alpha(kappa) = 1 / (surface_area * C_d(kappa)); equals Gamma(d/2) times
    (2/kappa)^(d/2-1) I_{d/2-1}(kappa), and 1 at kappa == 0.
    """
    d = _check_dimension(d)
    kappa_in = np.asarray(kappa, dtype=np.float64)
    if not np.all(np.isfinite(kappa_in)) or np.any(kappa_in < 0.0):
        raise ValueError("kappa must be finite and >= 0")
    k = np.atleast_1d(kappa_in).astype(np.float64)
    out = np.zeros(k.shape)
    pos = k > 0.0
    if np.any(pos):
        kp = k[pos]
        n = 0.5 * d
        order = n - 1.0
        # keep the (order * log kappa) product identical to log_c_d's so the
        # identity log_alpha + log_surface_area + log_c_d == 0 cancels cleanly
        out[pos] = gammaln(n) + order * np.log(2.0) - order * np.log(kp) + log_bessel_i(order, kp)
    if kappa_in.ndim == 0:
        return float(out[0])
    return out.reshape(kappa_in.shape)


def vmf_log_pdf(params: VmfParams, z) -> float:
    """Log density of the vMF distribution at unit vector z."""
    z = as_unit_vector(z)
    if z.shape[0] != params.d:
        raise ValueError(f"dimension mismatch: params d={params.d}, z d={z.shape[0]}")
    return float(log_c_d(params.d, params.kappa) + params.kappa * float(params.mean @ z))


def _unit_rows(rows: np.ndarray, rng: np.random.Generator, orthogonal_to: np.ndarray | None = None) -> np.ndarray:
    # Normalize rows, resampling the measure-zero degenerate ones; when a mean
    # direction is given the resampled rows are re-projected into its tangent.
    norms = np.linalg.norm(rows, axis=1)
    bad = norms < 1e-12
    while np.any(bad):
        fresh = rng.standard_normal((int(bad.sum()), rows.shape[1]))
        if orthogonal_to is not None:
            fresh -= np.outer(fresh @ orthogonal_to, orthogonal_to)
        rows[bad] = fresh
        norms = np.linalg.norm(rows, axis=1)
        bad = norms < 1e-12
    return rows / norms[:, None]


def _sample_radial(rng: np.random.Generator, kappa: float, d: int, n: int) -> np.ndarray:
    # Rejection sampler for the cosine w between a draw and the mean direction
    # (Ulrich's tangent-normal decomposition with Wood's envelope).
    dim = d - 1.0
    b = dim / (np.sqrt(4.0 * kappa * kappa + dim * dim) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * np.log(1.0 - x0 * x0)
    out = np.empty(n)
    filled = 0
    for _ in range(1000):
        if filled >= n:
            break
        want = n - filled
        m = max(2 * want, 16)
        z = rng.beta(0.5 * dim, 0.5 * dim, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=m)
        accept = kappa * w + dim * np.log1p(-x0 * w) - c >= np.log(u)
        good = w[accept][:want]
        out[filled:filled + good.size] = good
        filled += good.size
    if filled < n:
        raise RuntimeError("vMF radial rejection sampler failed to converge")
    return out


def sample_vmf(params: VmfParams, seed, n: int) -> np.ndarray:
    """Draw n unit vectors from the vMF distribution; deterministic per seed."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    rng = np.random.default_rng(seed)
    d = params.d
    if params.kappa == 0.0:
        return _unit_rows(rng.standard_normal((n, d)), rng)
    w = _sample_radial(rng, params.kappa, d, n)
    g = rng.standard_normal((n, d))
    g -= np.outer(g @ params.mean, params.mean)
    v = _unit_rows(g, rng, orthogonal_to=params.mean)
    out = w[:, None] * params.mean[None, :] + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    return out / np.linalg.norm(out, axis=1)[:, None]
