"""Uncertainty propagation through a measurement model.

Four methods turn a model plus its joint input distribution into an
expected value y, a standard uncertainty u(Y), and a coverage interval:

- ``analytic``: exact mean/variance for affine models, u^2 = c' Sigma c
  over the input covariance; with Gaussian inputs the output is exactly
  Gaussian, so the interval is exact at the requested coverage.
- ``taylor1``: the first-order law of propagation of uncertainty,
  u^2 = sum_i (df/dx_i)^2 u^2(x_i), gradient taken at the input means.
- ``taylor2``: adds the second-order correction
  sum_ij [ (1/2) (d2f/dx_i dx_j)^2 + (df/dx_i)(d3f/dx_i dx_j^2) ]
  u^2(x_i) u^2(x_j) on top of the first-order sum, which repairs
  first-order blind spots such as a vanishing gradient.
- ``monte_carlo``: samples the joint input model, evaluates the model
  per draw, and reports the sample mean, unbiased sample standard
  deviation, and the equal-tail coverage interval read off the sorted
  evaluations at 1-based ranks ceil(alpha/2 M) and ceil((1-alpha/2) M).

Monte Carlo runs are deterministic in (model, inputs, M, seed): draws
are striped into fixed-size chunks with one Philox substream per chunk
index, so the sample set depends only on M and never on worker count,
and the final statistics are computed on the assembled sample vector
with numpy's pairwise summation. Evaluations that land outside the
model's domain come back non-finite, are excluded, and are counted;
more than 1% of them aborts the run with a diagnostic rather than
quietly reporting a distorted distribution.

Expanded uncertainty is U = k u(Y). When ``coverage`` is passed instead
of ``k``, k is the two-sided Gaussian factor for that coverage; the
default k = 2 implies 95.45% Gaussian coverage.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .autodiff import derivatives
from .distributions import JointInputModel, normal_cdf, normal_quantile, sample
from .errors import ConfigError, DomainError, MonteCarloError
from .expr import MeasurementModelExpr, evaluate_batch
from .rng import substream

__all__ = [
    "MeasurementResult",
    "MCDiagnostics",
    "EmpiricalCDF",
    "propagate_analytic",
    "propagate_taylor1",
    "propagate_taylor2",
    "propagate_monte_carlo",
    "summarize",
    "implied_coverage",
    "sensitivity_budget",
    "MC_CHUNK_SIZE",
]

# Fixed chunk width for Monte Carlo draws. Part of the reproducibility
# contract: chunk boundaries depend only on M, never on parallelism.
MC_CHUNK_SIZE = 65536

# Seed for the internal affinity probe; fixed so propagate_analytic is
# deterministic without consuming the caller's seed.
_AFFINE_PROBE_SEED = 186916


@dataclass(frozen=True)
class MCDiagnostics:
    """Monte Carlo run diagnostics attached to the result."""

    M: int
    mc_standard_error: float
    domain_error_count: int


@dataclass(frozen=True)
class MeasurementResult:
    """Propagated measurement: y, u(Y), and the expanded statement.

    U equals k*u exactly. For the analytic and Taylor methods the
    interval is y +/- U; for monte_carlo it is the equal-tail interval
    of the empirical output distribution at the run's coverage.
    """

    y: float
    u: float
    k: float
    U: float
    interval: tuple[float, float]
    method: str
    mc_diagnostics: Optional[MCDiagnostics] = None


@dataclass(frozen=True)
class EmpiricalCDF:
    """Sorted model evaluations representing the output distribution."""

    sorted_values: np.ndarray

    def quantile(self, p: float) -> float:
        """Empirical p-quantile by the 1-based rank ceil(p*M)."""
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"quantile probability must lie in (0, 1], got {p}")
        m = len(self.sorted_values)
        idx = max(math.ceil(p * m), 1)
        return float(self.sorted_values[idx - 1])

    def cdf(self, x: float) -> float:
        """Fraction of evaluations <= x."""
        m = len(self.sorted_values)
        return float(np.searchsorted(self.sorted_values, x, side="right")) / m


def _resolve_k(k: float, coverage: Optional[float]) -> float:
    if coverage is not None:
        if not 0.0 < coverage < 1.0:
            raise ConfigError(f"coverage must lie in (0, 1), got {coverage}")
        return float(normal_quantile(0.5 * (1.0 + coverage)))
    if k <= 0.0:
        raise ConfigError(f"coverage factor k must be > 0, got {k}")
    return float(k)


def implied_coverage(k: float) -> float:
    """Two-sided Gaussian coverage probability implied by k: 2*Phi(k) - 1."""
    return 2.0 * float(normal_cdf(k)) - 1.0


def _expanded(y: float, u: float, k: float, method: str,
              diagnostics: Optional[MCDiagnostics] = None) -> MeasurementResult:
    U = k * u
    return MeasurementResult(y, u, k, U, (y - U, y + U), method, diagnostics)


def _check_affine(expr: MeasurementModelExpr, joint: JointInputModel) -> None:
    """Reject models whose Hessian is not identically zero.

    Probes the exact Hessian at three random points around the means;
    a nonzero entry anywhere, or a domain restriction preventing
    evaluation there, disqualifies the model from analytic propagation.
    """
    rng = substream(_AFFINE_PROBE_SEED, 0)
    mu = joint.means()
    scale = np.maximum(1.0, np.maximum(np.abs(mu), np.sqrt(joint.variances())))
    for _ in range(3):
        point = mu + scale * rng.standard_normal(len(joint))
        at = dict(zip(joint.names, point))
        try:
            bundle = derivatives(expr, at, order=2, variables=joint.names)
        except DomainError as err:
            raise ConfigError(
                "analytic propagation requires an affine model; this model "
                f"has a restricted domain ({err})") from err
        tol = 1e-12 * max(1.0, abs(bundle.value), float(np.max(np.abs(bundle.grad))))
        if np.max(np.abs(bundle.hess)) > tol:
            raise ConfigError(
                "analytic propagation requires an affine model; "
                "second derivatives do not vanish")


def propagate_analytic(
    expr: MeasurementModelExpr,
    joint: JointInputModel,
    k: float = 2.0,
    coverage: Optional[float] = None,
) -> MeasurementResult:
    """Exact propagation for affine models.

    y = f(mu) and u^2 = c' Sigma c with c the (constant) gradient and
    Sigma the input covariance, correlation included. Inputs must be
    independent or jointly Gaussian, which the joint model already
    guarantees by construction.
    """
    _check_affine(expr, joint)
    kk = _resolve_k(k, coverage)
    bundle = derivatives(expr, joint.mean_assignment(), order=1,
                         variables=joint.names)
    var = float(bundle.grad @ joint.covariance() @ bundle.grad)
    return _expanded(bundle.value, math.sqrt(max(var, 0.0)), kk, "analytic")


def _reject_correlation(joint: JointInputModel, method: str) -> None:
    if joint.correlation is not None:
        raise ConfigError(
            f"{method} propagation assumes independent inputs; remove the "
            "correlation matrix or use the analytic or monte_carlo method")


def propagate_taylor1(
    expr: MeasurementModelExpr,
    joint: JointInputModel,
    k: float = 2.0,
    coverage: Optional[float] = None,
) -> MeasurementResult:
    """First-order law of propagation of uncertainty at the input means."""
    _reject_correlation(joint, "taylor1")
    kk = _resolve_k(k, coverage)
    bundle = derivatives(expr, joint.mean_assignment(), order=1,
                         variables=joint.names)
    var = float(np.sum(bundle.grad**2 * joint.variances()))
    return _expanded(bundle.value, math.sqrt(var), kk, "taylor1")


def propagate_taylor2(
    expr: MeasurementModelExpr,
    joint: JointInputModel,
    k: float = 2.0,
    coverage: Optional[float] = None,
) -> MeasurementResult:
    """Second-order Taylor propagation.

    Adds the Hessian and mixed-third-derivative correction to the
    first-order variance. The truncated series can turn negative far
    from the expansion point; that is reported as an error instead of a
    clamped number, since it means the expansion is not trustworthy.
    """
    _reject_correlation(joint, "taylor2")
    kk = _resolve_k(k, coverage)
    bundle = derivatives(expr, joint.mean_assignment(), order=3,
                         variables=joint.names)
    v = joint.variances()
    var1 = float(np.sum(bundle.grad**2 * v))
    correction = float(
        (0.5 * bundle.hess**2 + bundle.grad[:, None] * bundle.third_mixed)
        @ v @ v)
    var = var1 + correction
    if var < 0.0:
        raise ConfigError(
            "second-order Taylor variance is negative "
            f"({var:.6g}); the expansion is invalid here, use monte_carlo")
    return _expanded(bundle.value, math.sqrt(var), kk, "taylor2")


def propagate_monte_carlo(
    expr: MeasurementModelExpr,
    joint: JointInputModel,
    M: int = 200_000,
    seed: int = 0,
    coverage: float = 0.95,
) -> tuple[MeasurementResult, EmpiricalCDF]:
    """Monte Carlo propagation with an empirical coverage interval.

    Returns the result together with the sorted evaluations. The
    reported k is the Gaussian factor for ``coverage`` so that U = k*u
    stays meaningful, but the interval itself is empirical and keeps
    any asymmetry of the output distribution.
    """
    if M < 100:
        raise ConfigError(f"Monte Carlo sample count must be >= 100, got {M}")
    if not 0.0 < coverage < 1.0:
        raise ConfigError(f"coverage must lie in (0, 1), got {coverage}")

    chunks = []
    n_errors = 0
    for ci, start in enumerate(range(0, M, MC_CHUNK_SIZE)):
        n = min(MC_CHUNK_SIZE, M - start)
        draws = sample(joint, n, seed, stream=ci)
        cols = {name: draws[:, i] for i, name in enumerate(joint.names)}
        values = evaluate_batch(expr, cols, n=n)
        finite = np.isfinite(values)
        n_errors += int(n - np.count_nonzero(finite))
        chunks.append(values[finite])

    if n_errors > 0.01 * M:
        raise MonteCarloError(
            f"{n_errors} of {M} model evaluations ({n_errors / M:.1%}) hit "
            "domain errors; the input distributions extend outside the "
            "model's domain")

    valid = np.sort(np.concatenate(chunks))
    n_valid = len(valid)
    y = float(np.mean(valid))
    u = float(np.std(valid, ddof=1)) if n_valid > 1 else 0.0

    alpha = 1.0 - coverage
    lo = max(math.ceil(0.5 * alpha * n_valid), 1)
    hi = min(math.ceil((1.0 - 0.5 * alpha) * n_valid), n_valid)
    interval = (float(valid[lo - 1]), float(valid[hi - 1]))

    kk = float(normal_quantile(0.5 * (1.0 + coverage)))
    diagnostics = MCDiagnostics(M, u / math.sqrt(n_valid), n_errors)
    result = MeasurementResult(y, u, kk, kk * u, interval, "monte_carlo",
                               diagnostics)
    return result, EmpiricalCDF(valid)


def summarize(result: MeasurementResult, k: float) -> MeasurementResult:
    """Restate a result at a different coverage factor: U = k*u.

    Analytic and Taylor intervals are rebuilt as y +/- U; a Monte Carlo
    result keeps its empirical interval, since rescaling cannot move
    empirical quantiles.
    """
    if k <= 0.0:
        raise ConfigError(f"coverage factor k must be > 0, got {k}")
    U = k * result.u
    if result.method == "monte_carlo":
        return replace(result, k=k, U=U)
    return replace(result, k=k, U=U, interval=(result.y - U, result.y + U))


def sensitivity_budget(
    expr: MeasurementModelExpr, joint: JointInputModel
) -> list[dict]:
    """Per-input uncertainty budget at the means.

    Each entry carries the sensitivity coefficient df/dx_i and the
    first-order variance contribution (df/dx_i)^2 u^2(x_i).
    """
    bundle = derivatives(expr, joint.mean_assignment(), order=1,
                         variables=joint.names)
    variances = joint.variances()
    return [
        {
            "name": name,
            "sensitivity": float(bundle.grad[i]),
            "u_input": float(math.sqrt(variances[i])),
            "contribution": float(bundle.grad[i] ** 2 * variances[i]),
        }
        for i, name in enumerate(joint.names)
    ]
