"""Heteroscedastic Bayesian regression model for virtual measurement.

The model ties a measured quality characteristic y to process-variable
features x through two linear-in-parameters heads sharing one weight
vector w = (w_mu, w_sigma):

    y = f(x; w) + eps,   eps ~ N(0, sigma_n(x; w)^2)
    f(x; w)       = w_mu' phi_mu(x)          (mean head)
    sigma_n(x; w) = softplus(w_sigma' phi_sigma(x)) + floor

Both feature maps are polynomial bases over standardized inputs, so
the conditional noise level can vary across the process window
(heteroscedastic) while everything stays differentiable in w and a
conjugate closed form remains reachable for validation: setting
``fixed_noise_sd`` freezes the noise level to a known constant and
drops w_sigma entirely, which is exactly the Bayesian linear
regression whose posterior the normal-equations oracle computes.

The prior over all P weights is isotropic Gaussian N(0, tau^2 I) in
the standardized feature space. The softplus transform plus a small
positive floor keeps sigma_n strictly positive for every x and w, so
the Gaussian log-likelihood below is always finite. Records are
independent, hence the log-likelihood is a plain sum over records; the
analytic gradients next to it are what variational training consumes,
and they are finite-difference-checked in the test suite.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .errors import ConfigError

__all__ = [
    "NOISE_FLOOR",
    "polynomial_exponents",
    "polynomial_features",
    "softplus",
    "inv_softplus",
    "BayesianVMModel",
    "build_model",
    "DesignMatrices",
    "log_likelihood",
    "log_likelihood_grad",
]

# Minimum noise level in y-units; keeps the likelihood away from the
# degenerate zero-noise spike.
NOISE_FLOOR = 1e-6


def polynomial_exponents(n_features: int, degree: int,
                         include_bias: bool = True) -> tuple[tuple[int, ...], ...]:
    """Exponent tuples of all monomials with total degree <= degree.

    Ordered by total degree, then lexicographically by the index
    combination, e.g. for two features and degree 2:
    1, x1, x2, x1^2, x1*x2, x2^2.
    """
    if degree < 0:
        raise ConfigError(f"polynomial degree must be >= 0, got {degree}")
    out = []
    start = 0 if include_bias else 1
    for total in range(start, degree + 1):
        for combo in itertools.combinations_with_replacement(
                range(n_features), total):
            exps = [0] * n_features
            for idx in combo:
                exps[idx] += 1
            out.append(tuple(exps))
    return tuple(out)


def polynomial_features(x: np.ndarray,
                        exponents: Sequence[tuple[int, ...]]) -> np.ndarray:
    """Design matrix (D, P) of the monomials in ``exponents``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    exps = np.asarray(exponents, dtype=np.float64)
    return np.prod(x[:, None, :] ** exps[None, :, :], axis=2)


def softplus(t: np.ndarray) -> np.ndarray:
    """log(1 + e^t), computed stably for large |t|."""
    return np.logaddexp(0.0, t)


def inv_softplus(s: float) -> float:
    """Inverse of softplus for s > 0."""
    if s <= 0.0:
        raise ValueError(f"inv_softplus needs s > 0, got {s}")
    if s < 1.0:
        return math.log(math.expm1(s))
    return s + math.log1p(-math.exp(-s))


@dataclass(frozen=True)
class BayesianVMModel:
    """Model structure: feature maps, standardization, prior, noise mode.

    Immutable; the trained posterior over w lives in a separate object.
    ``x_mean``/``x_sd`` hold the training standardization constants
    (zeros/ones when standardization is off) so predictions transform
    new inputs identically.
    """

    feature_names: tuple[str, ...]
    mean_degree: int = 2
    noise_degree: int = 1
    mean_include_bias: bool = True
    prior_tau: float = 1.0
    standardize: bool = True
    x_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x_sd: np.ndarray = field(default_factory=lambda: np.ones(0))
    fixed_noise_sd: Optional[float] = None
    noise_floor: float = NOISE_FLOOR

    def __post_init__(self):
        if self.prior_tau <= 0.0:
            raise ConfigError(f"prior tau must be > 0, got {self.prior_tau}")
        if self.fixed_noise_sd is not None and self.fixed_noise_sd <= 0.0:
            raise ConfigError(
                f"fixed noise sd must be > 0, got {self.fixed_noise_sd}")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def mean_exponents(self) -> tuple[tuple[int, ...], ...]:
        return polynomial_exponents(self.n_features, self.mean_degree,
                                    self.mean_include_bias)

    @property
    def noise_exponents(self) -> tuple[tuple[int, ...], ...]:
        return polynomial_exponents(self.n_features, self.noise_degree)

    @property
    def n_mean_weights(self) -> int:
        return len(self.mean_exponents)

    @property
    def n_noise_weights(self) -> int:
        return 0 if self.fixed_noise_sd is not None else len(self.noise_exponents)

    @property
    def n_weights(self) -> int:
        """Total weight count P reported with every trained model."""
        return self.n_mean_weights + self.n_noise_weights

    def standardized(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ConfigError(
                f"expected {self.n_features} feature(s), got {x.shape[1]}")
        if not self.standardize:
            return x
        return (x - self.x_mean) / self.x_sd

    def mean_features(self, x: np.ndarray) -> np.ndarray:
        return polynomial_features(self.standardized(x), self.mean_exponents)

    def noise_features(self, x: np.ndarray) -> Optional[np.ndarray]:
        if self.fixed_noise_sd is not None:
            return None
        return polynomial_features(self.standardized(x), self.noise_exponents)

    def split_weights(self, w: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
        w = np.asarray(w, dtype=np.float64)
        if w.shape[-1] != self.n_weights:
            raise ConfigError(
                f"expected {self.n_weights} weight(s), got {w.shape[-1]}")
        if self.fixed_noise_sd is not None:
            return w, None
        p = self.n_mean_weights
        return w[..., :p], w[..., p:]

    def design(self, data: Dataset) -> "DesignMatrices":
        """Precompute the per-record feature matrices for a dataset."""
        if data.feature_names != self.feature_names:
            raise ConfigError(
                f"dataset features {data.feature_names} do not match "
                f"model features {self.feature_names}")
        return DesignMatrices(self.mean_features(data.x),
                              self.noise_features(data.x),
                              data.y.astype(np.float64), self)


@dataclass(frozen=True)
class DesignMatrices:
    """Cached design matrices for repeated likelihood evaluations."""

    phi_mu: np.ndarray            # (D, P_mu)
    phi_sigma: Optional[np.ndarray]  # (D, P_sigma) or None for fixed noise
    y: np.ndarray                 # (D,)
    model: BayesianVMModel

    def noise_sd(self, w_sigma: Optional[np.ndarray]) -> np.ndarray:
        """Per-record noise level; columns of w_sigma give batch draws."""
        m = self.model
        if m.fixed_noise_sd is not None:
            return np.full(len(self.y), m.fixed_noise_sd)
        return softplus(self.phi_sigma @ w_sigma) + m.noise_floor

    def log_likelihood_batch(self, w: np.ndarray) -> np.ndarray:
        """Log-likelihood of each weight draw; w has shape (S, P)."""
        ll, _ = self.log_likelihood_and_grad(w, want_grad=False)
        return ll

    def log_likelihood_and_grad(
        self, w: np.ndarray, want_grad: bool = True
    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Batched Gaussian log-likelihood and its weight gradient.

        ``w`` is (S, P); returns (S,) log-likelihoods and the (S, P)
        gradients. The gradient splits into the two heads:
        d/dw_mu   = phi_mu' (r / sigma^2)
        d/dw_sigma = phi_sigma' [ (-1/sigma + r^2/sigma^3) * s'(t) ]
        with r the residuals, t the pre-transform noise activation, and
        s'(t) the logistic sigmoid (derivative of softplus).
        """
        m = self.model
        w = np.atleast_2d(np.asarray(w, dtype=np.float64))
        w_mu, w_sigma = m.split_weights(w)
        mean = self.phi_mu @ w_mu.T                      # (D, S)
        r = self.y[:, None] - mean
        if m.fixed_noise_sd is not None:
            sigma = m.fixed_noise_sd
            ll = np.sum(-0.5 * np.log(2.0 * np.pi * sigma**2)
                        - r**2 / (2.0 * sigma**2), axis=0)
            if not want_grad:
                return ll, None
            grad = (r / sigma**2).T @ self.phi_mu       # (S, P_mu)
            return ll, grad
        t = self.phi_sigma @ w_sigma.T                  # (D, S)
        sigma = softplus(t) + m.noise_floor
        ll = np.sum(-0.5 * np.log(2.0 * np.pi * sigma**2)
                    - r**2 / (2.0 * sigma**2), axis=0)
        if not want_grad:
            return ll, None
        g_mu = (r / sigma**2).T @ self.phi_mu           # (S, P_mu)
        dt = (-1.0 / sigma + r**2 / sigma**3) * expit(t)
        g_sigma = dt.T @ self.phi_sigma                 # (S, P_sigma)
        return ll, np.concatenate([g_mu, g_sigma], axis=1)


def build_model(
    data: Dataset,
    mean_degree: int = 2,
    noise_degree: int = 1,
    mean_include_bias: bool = True,
    prior_tau: float = 1.0,
    standardize: bool = True,
    fixed_noise_sd: Optional[float] = None,
) -> BayesianVMModel:
    """Construct a model whose standardization is fit to ``data``."""
    if standardize:
        x_mean = np.array([c.mean for c in data.summary.features])
        sds = np.array([c.sd for c in data.summary.features])
        # a constant feature has nothing to scale; leave it centered
        x_sd = np.where(sds > 0.0, sds, 1.0)
    else:
        f = data.n_features
        x_mean, x_sd = np.zeros(f), np.ones(f)
    return BayesianVMModel(
        feature_names=data.feature_names,
        mean_degree=mean_degree,
        noise_degree=noise_degree,
        mean_include_bias=mean_include_bias,
        prior_tau=prior_tau,
        standardize=standardize,
        x_mean=x_mean,
        x_sd=x_sd,
        fixed_noise_sd=fixed_noise_sd,
    )


def log_likelihood(model: BayesianVMModel, w: np.ndarray, data: Dataset) -> float:
    """Total Gaussian log-likelihood of the dataset at one weight vector."""
    ll = model.design(data).log_likelihood_batch(np.atleast_2d(w))
    return float(ll[0])


def log_likelihood_grad(model: BayesianVMModel, w: np.ndarray,
                        data: Dataset) -> np.ndarray:
    """Gradient of :func:`log_likelihood` in the weights."""
    _, grad = model.design(data).log_likelihood_and_grad(np.atleast_2d(w))
    return grad[0]
