"""Input-quantity distributions: moments, sampling, and normal helpers.

Each input quantity of a measurement model carries one marginal
distribution in its physical unit: gaussian, rectangular, or
triangular. A :class:`JointInputModel` bundles the ordered quantities
with an optional correlation matrix; correlation is accepted only when
every marginal is Gaussian, where the Cholesky construction is exact.
How to correlate mixed marginals is not settled ground, so such input
is rejected at validation rather than silently approximated.

All sampling runs through one route: uniform draws from a counter-based
Philox generator mapped through each marginal's inverse CDF. Together
with explicit stream indices (see :mod:`uncertlab.rng`) this makes
every Monte Carlo run bit-reproducible and lets parallel workers draw
non-overlapping substreams. Moments are closed form, never estimated.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special

from .errors import ConfigError
from .rng import substream

__all__ = [
    "Gaussian",
    "Rectangular",
    "Triangular",
    "MarginalDistribution",
    "InputQuantity",
    "JointInputModel",
    "moments",
    "sample",
    "normal_cdf",
    "normal_quantile",
]


@dataclass(frozen=True)
class Gaussian:
    """Normal distribution N(mean, sd^2).

    sd = 0 is allowed and denotes a degenerate constant; propagation
    treats such inputs as exactly known.
    """

    mean: float
    sd: float

    def __post_init__(self):
        if not (self.sd >= 0.0 and math.isfinite(self.sd)):
            raise ConfigError(f"gaussian sd must be finite and >= 0, got {self.sd}")
        if not math.isfinite(self.mean):
            raise ConfigError(f"gaussian mean must be finite, got {self.mean}")

    def moments(self) -> tuple[float, float]:
        return self.mean, self.sd**2

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return self.mean + self.sd * special.ndtri(u)


@dataclass(frozen=True)
class Rectangular:
    """Uniform distribution on [lower, upper]."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise ConfigError(
                f"rectangular bounds must satisfy lower < upper, "
                f"got [{self.lower}, {self.upper}]")

    def moments(self) -> tuple[float, float]:
        a, b = self.lower, self.upper
        return 0.5 * (a + b), (b - a) ** 2 / 12.0

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * u


@dataclass(frozen=True)
class Triangular:
    """Triangular distribution on [lower, upper] with peak at mode."""

    lower: float
    mode: float
    upper: float

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise ConfigError(
                f"triangular bounds must satisfy lower < upper, "
                f"got [{self.lower}, {self.upper}]")
        if not (self.lower <= self.mode <= self.upper):
            raise ConfigError(
                f"triangular mode {self.mode} outside [{self.lower}, {self.upper}]")

    def moments(self) -> tuple[float, float]:
        a, m, b = self.lower, self.mode, self.upper
        mean = (a + m + b) / 3.0
        var = (a * a + m * m + b * b - a * m - a * b - m * b) / 18.0
        return mean, var

    def ppf(self, u: np.ndarray) -> np.ndarray:
        a, m, b = self.lower, self.mode, self.upper
        u = np.asarray(u, dtype=np.float64)
        split = (m - a) / (b - a)
        left = a + np.sqrt(np.maximum(u, 0.0) * (b - a) * (m - a))
        right = b - np.sqrt(np.maximum(1.0 - u, 0.0) * (b - a) * (b - m))
        return np.where(u < split, left, right)


MarginalDistribution = Union[Gaussian, Rectangular, Triangular]


def moments(m: MarginalDistribution) -> tuple[float, float]:
    """Exact (mean, variance) of a marginal."""
    return m.moments()


@dataclass(frozen=True)
class InputQuantity:
    """A named model input with its assigned marginal."""

    name: str
    marginal: MarginalDistribution


class JointInputModel:
    """Ordered input quantities plus an optional Gaussian correlation.

    The correlation matrix, when given, must be symmetric with unit
    diagonal, entries in [-1, 1], and positive definite; its Cholesky
    factor is computed once here. Correlation with any non-Gaussian
    marginal is rejected.
    """

    def __init__(
        self,
        quantities: list[InputQuantity],
        correlation: Optional[np.ndarray] = None,
    ):
        if not quantities:
            raise ConfigError("at least one input quantity is required")
        names = [q.name for q in quantities]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"duplicate input name(s): {', '.join(dupes)}")
        self.quantities = list(quantities)
        self.names = tuple(names)
        self.correlation: Optional[np.ndarray] = None
        self._chol: Optional[np.ndarray] = None
        if correlation is not None:
            self._init_correlation(np.asarray(correlation, dtype=np.float64))

    def _init_correlation(self, r: np.ndarray) -> None:
        n = len(self.quantities)
        if r.shape != (n, n):
            raise ConfigError(
                f"correlation matrix must be {n}x{n}, got shape {r.shape}")
        non_gauss = [q.name for q in self.quantities
                     if not isinstance(q.marginal, Gaussian)]
        if non_gauss:
            raise ConfigError(
                "correlation requires all-Gaussian marginals; non-Gaussian "
                f"input(s): {', '.join(non_gauss)}")
        if not np.allclose(r, r.T, atol=1e-12):
            raise ConfigError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(r), 1.0, atol=1e-12):
            raise ConfigError("correlation matrix must have unit diagonal")
        if np.any(np.abs(r) > 1.0 + 1e-12):
            raise ConfigError("correlation entries must lie in [-1, 1]")
        try:
            chol = np.linalg.cholesky(r)
        except np.linalg.LinAlgError as err:
            raise ConfigError(
                "correlation matrix is not positive definite") from err
        self.correlation = r
        self._chol = chol

    def __len__(self) -> int:
        return len(self.quantities)

    def means(self) -> np.ndarray:
        return np.array([q.marginal.moments()[0] for q in self.quantities])

    def variances(self) -> np.ndarray:
        return np.array([q.marginal.moments()[1] for q in self.quantities])

    def covariance(self) -> np.ndarray:
        """Input covariance matrix implied by the marginals and correlation."""
        sd = np.sqrt(self.variances())
        if self.correlation is None:
            return np.diag(sd**2)
        return self.correlation * np.outer(sd, sd)

    def mean_assignment(self) -> dict[str, float]:
        return {q.name: q.marginal.moments()[0] for q in self.quantities}


def sample(
    joint: JointInputModel,
    count: int,
    seed: int,
    stream: int = 0,
) -> np.ndarray:
    """Draw ``count`` joint realizations, shape (count, N).

    Deterministic in (seed, stream); distinct streams are
    non-overlapping, so chunked or parallel drivers stay reproducible.
    Uniforms are mapped through each marginal's inverse CDF; under
    correlation the standard-normal columns are mixed by the Cholesky
    factor first, then shifted and scaled per marginal.
    """
    if count < 1:
        raise ConfigError(f"sample count must be >= 1, got {count}")
    rng = substream(seed, stream)
    n = len(joint)
    u = rng.random((count, n))
    # random() yields [0, 1); nudge exact zeros so ndtri stays finite
    tiny = np.finfo(np.float64).tiny
    u = np.maximum(u, tiny)
    if joint._chol is not None:
        z = special.ndtri(u) @ joint._chol.T
        means = joint.means()
        sds = np.sqrt(joint.variances())
        return means + sds * z
    out = np.empty((count, n))
    for i, q in enumerate(joint.quantities):
        out[:, i] = q.marginal.ppf(u[:, i])
    return out


def normal_cdf(z) -> Union[float, np.ndarray]:
    """Standard normal CDF Phi(z)."""
    out = special.ndtr(z)
    return float(out) if np.isscalar(z) else out


def normal_quantile(p) -> Union[float, np.ndarray]:
    """Standard normal quantile Phi^-1(p) for p in the open unit interval."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ConfigError(f"quantile probability must lie in (0, 1), got {p}")
    out = special.ndtri(arr)
    return float(out) if np.isscalar(p) else out
