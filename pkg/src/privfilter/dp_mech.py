"""Local differential-privacy release layer.

Filter outputs (or raw features) are passed through a norm-bounding map b
with ||b(h)|| <= 1, so any two bounded vectors differ by at most S = 2 in
Euclidean norm, then perturbed with additive noise drawn from the density

    p(xi) proportional to exp(-(epsilon / S) ||xi||)  on R^d.

For any two inputs the output densities then differ by a factor of at
most exp(epsilon) pointwise, which is the local differential-privacy
guarantee.  The noise is sampled in polar form: a uniform direction on
the unit sphere times a Gamma(shape=d, scale=S/epsilon) radius, which is
exactly the radial marginal of the density above (the r^{d-1} area factor
turns the exponential into a Gamma).  In one dimension this reduces to
the scalar Laplace distribution.

Two release orders are supported: bound-and-perturb the filter output
("pre", noise dimension d), or bound-and-perturb the raw features and
filter afterwards ("post", noise dimension D).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DataError, ShapeError
from .filters import FilterState, apply_filter

DEFAULT_SENSITIVITY = 2.0
_NORMALIZE_FLOOR = 1e-300


class BoundKind(str, enum.Enum):
    CLIP = "clip"
    SQUASH = "squash"
    NORMALIZE = "normalize"


@dataclass(frozen=True)
class NoiseConfig:
    """Mechanism parameters.  ``epsilon=None`` means release without noise."""

    epsilon: float | None
    sensitivity: float = DEFAULT_SENSITIVITY
    bound_kind: BoundKind = BoundKind.CLIP
    bound_scale: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "bound_kind", BoundKind(self.bound_kind))
        if self.epsilon is not None and not self.epsilon > 0:
            raise DataError("epsilon must be positive (or None for no noise)")
        if self.sensitivity <= 0:
            raise DataError("sensitivity must be positive")
        if self.bound_scale <= 0:
            raise DataError("bound_scale must be positive")

    @classmethod
    def from_epsilon_inverse(cls, epsilon_inverse: float, **kwargs) -> "NoiseConfig":
        """Sweep-friendly constructor; epsilon_inverse = 0 disables noise."""
        if epsilon_inverse < 0:
            raise DataError("epsilon_inverse must be non-negative")
        epsilon = None if epsilon_inverse == 0 else 1.0 / epsilon_inverse
        return cls(epsilon=epsilon, **kwargs)

    @property
    def noisy(self) -> bool:
        return self.epsilon is not None

    @property
    def rate(self) -> float:
        """epsilon / S, the exponential decay rate of the noise density."""
        if self.epsilon is None:
            raise DataError("the no-noise sentinel has no noise density")
        return self.epsilon / self.sensitivity


def bound(kind, scale, h) -> np.ndarray:
    """Map vectors into the unit ball; rows are bounded independently.

    clip       min(1/scale, 1/||h||) h  (linear up to ||h|| = scale, then
               direction only)
    squash     tanh(scale ||h||) h / ||h||
    normalize  h / ||h||, with near-zero inputs mapped to zero
    """
    kind = BoundKind(kind)
    if scale <= 0:
        raise DataError("bound scale must be positive")
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    rows = np.atleast_2d(h)
    if rows.ndim != 2:
        raise ShapeError("bound expects a vector or a matrix of row vectors")
    norms = np.linalg.norm(rows, axis=1)
    if kind is BoundKind.NORMALIZE:
        degenerate = norms < _NORMALIZE_FLOOR
        if np.any(degenerate):
            warnings.warn("normalize bound hit a (near-)zero vector; emitting zeros",
                          RuntimeWarning, stacklevel=2)
        factors = np.where(degenerate, 0.0, 1.0 / np.where(degenerate, 1.0, norms))
    else:
        safe_norms = np.where(norms > 0, norms, 1.0)
        if kind is BoundKind.CLIP:
            factors = np.minimum(1.0 / scale, 1.0 / safe_norms)
        else:
            factors = np.tanh(scale * norms) / safe_norms
        factors = np.where(norms > 0, factors, 0.0)
    out = rows * factors[:, None]
    # Rounding in factor * row can leave a norm an ulp or two above 1,
    # which would leak past the sensitivity budget; pull those rows back
    # strictly inside the ball (the 1e-15 undershoot dominates rounding).
    out_norms = np.linalg.norm(out, axis=1)
    over = out_norms > 1.0
    while np.any(over):
        out[over] *= (1.0 - 1e-15) / out_norms[over, None]
        out_norms = np.linalg.norm(out, axis=1)
        over = out_norms > 1.0
    return out[0] if single else out


def bound_scale_from_norms(norms, percentile=95.0) -> float:
    """Default bounding scale, the reciprocal 95th percentile of ||g(x)||."""
    norms = np.asarray(norms, dtype=np.float64)
    if norms.size == 0:
        raise DataError("cannot derive a bound scale from no samples")
    reference = float(np.percentile(norms, percentile))
    if reference <= 0:
        return 1.0
    return 1.0 / reference


def _as_rng(cfg: NoiseConfig, rng) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(cfg.seed)
    return rng


def sample_noise(cfg: NoiseConfig, dim: int, rng=None, size=None) -> np.ndarray:
    """Draw noise vectors; returns (dim,) or (size, dim).

    With the no-noise sentinel this returns exact zeros without consuming
    random state.
    """
    if dim < 1:
        raise ShapeError("noise dimension must be positive")
    n = 1 if size is None else int(size)
    if not cfg.noisy:
        out = np.zeros((n, dim))
        return out[0] if size is None else out
    rng = _as_rng(cfg, rng)
    directions = rng.standard_normal((n, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    # A zero draw from a continuous density has probability zero but would
    # divide by zero; redraw deterministically via the fallback axis.
    norms[norms == 0] = 1.0
    directions /= norms
    radii = rng.gamma(shape=dim, scale=1.0 / cfg.rate, size=n)
    out = directions * radii[:, None]
    return out[0] if size is None else out


def log_density(xi, cfg: NoiseConfig) -> float | np.ndarray:
    """Log of the noise density at xi (rows of xi if 2-d).

    The normalizer of exp(-rate ||xi||) over R^d is
    surface(S^{d-1}) * Gamma(d) / rate^d with
    surface(S^{d-1}) = 2 pi^{d/2} / Gamma(d/2).
    """
    if not cfg.noisy:
        raise DataError("the no-noise sentinel has no density")
    xi = np.asarray(xi, dtype=np.float64)
    single = xi.ndim == 1
    rows = np.atleast_2d(xi)
    dim = rows.shape[1]
    rate = cfg.rate
    log_norm = (math.log(2.0) + 0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim)
                + gammaln(dim) - dim * math.log(rate))
    values = -rate * np.linalg.norm(rows, axis=1) - log_norm
    return float(values[0]) if single else values


def release_pre(x, f: FilterState, cfg: NoiseConfig, rng=None) -> np.ndarray:
    """Bound the filter output, then add noise in the output space."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    bounded = bound(cfg.bound_kind, cfg.bound_scale, apply_filter(f, rows))
    noise = sample_noise(cfg, f.output_dim, rng=_as_rng(cfg, rng), size=rows.shape[0])
    out = bounded + noise
    return out[0] if single else out


def release_post(x, f: FilterState, cfg: NoiseConfig, rng=None) -> np.ndarray:
    """Bound and perturb the raw features, then filter the noisy release."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    bounded = bound(cfg.bound_kind, cfg.bound_scale, rows)
    noise = sample_noise(cfg, f.input_dim, rng=_as_rng(cfg, rng), size=rows.shape[0])
    out = apply_filter(f, bounded + noise)
    return out[0] if single else out


@dataclass(frozen=True)
class DiameterReport:
    """Data diameters that calibrate the mechanism without bounding.

    ``cross_subject`` is the largest distance between samples with
    different private labels but the same target label; ``within_subject``
    the largest between samples sharing a private label but differing in
    target label.  When no pair qualifies the diameter is reported as 0
    with the matching flag cleared.
    """

    cross_subject: float
    within_subject: float
    cross_pair: tuple | None
    within_pair: tuple | None
    cross_attained: bool
    within_attained: bool


def compute_diameters(X, y, z) -> DiameterReport:
    """Exhaustive O(N^2) scan for the two calibration diameters."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    z = np.asarray(z)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError("features must be a non-empty 2-d array")
    if y.shape != (X.shape[0],) or z.shape != (X.shape[0],):
        raise ShapeError("labels must be 1-d with one entry per sample")
    sq_norms = (X * X).sum(axis=1)
    sq_dist = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (X @ X.T)
    np.maximum(sq_dist, 0.0, out=sq_dist)
    y_differs = y[:, None] != y[None, :]
    z_differs = z[:, None] != z[None, :]
    upper = np.triu(np.ones_like(y_differs, dtype=bool), k=1)

    def best(mask):
        mask = mask & upper
        if not mask.any():
            return 0.0, None, False
        masked = np.where(mask, sq_dist, -np.inf)
        flat = int(np.argmax(masked))
        i, j = divmod(flat, X.shape[0])
        return float(np.sqrt(masked[i, j])), (i, j), True

    cross, cross_pair, cross_ok = best(y_differs & ~z_differs)
    within, within_pair, within_ok = best(~y_differs & z_differs)
    return DiameterReport(cross, within, cross_pair, within_pair,
                          cross_ok, within_ok)
