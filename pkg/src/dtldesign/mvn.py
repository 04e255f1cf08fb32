"""Rectangle probabilities P(lower <= Z <= upper) for multivariate normals.

The integrator uses the separation-of-variables transform of Genz (1992):
a pivoted Cholesky factorization visits coordinates in order of increasing
conditional truncated mass, after which the rectangle probability becomes a
smooth integral over the (d-1)-dimensional unit cube.  That integral is
evaluated with scrambled Sobol points, averaged over independent
randomizations to obtain a standard-error estimate.  Infinite bounds map to
the cube endpoints exactly, so no truncation is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

__all__ = [
    "NotPositiveSemiDefiniteError",
    "OrthantProblem",
    "ProbabilityEstimate",
    "mvn_rectangle_prob",
    "standardize",
]

# Matrices with min eigenvalue >= -PSD_RTOL * max eigenvalue are accepted;
# exact rank deficiency is then handled by the pivoted factorization.
PSD_RTOL = 1e-10

# Conditional variances below this are treated as exactly singular pivots.
_SINGULAR_TOL = 1e-12

# ndtri arguments are clipped strictly inside (0, 1).
_UNIT_LO = 1e-300
_UNIT_HI = 1.0 - 1e-16

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


class NotPositiveSemiDefiniteError(ValueError):
    """Correlation matrix has an eigenvalue below the accepted tolerance."""


@dataclass(frozen=True)
class ProbabilityEstimate:
    """A rectangle probability together with its integration error.

    Attributes:
        value: estimated probability in [0, 1].
        error_bound: three-sigma spread of the independent randomizations
            (0.0 when the value was computed exactly).
        evaluations: integrand evaluations spent.
        converged: False when the evaluation cap was reached before the
            requested error target.
    """

    value: float
    error_bound: float
    evaluations: int
    converged: bool = True


@dataclass(frozen=True, eq=False)
class OrthantProblem:
    """One MVN rectangle probability P(lower <= Z <= upper), Z ~ N(mean, corr).

    `corr` must be a correlation matrix (unit diagonal, symmetric, positive
    semi-definite within tolerance); use :func:`standardize` to reduce a
    general covariance problem to this form.  Bounds may be -inf / +inf.
    A coordinate with lower >= upper would make the rectangle empty and is
    rejected: callers prune empty events before building a problem.
    """

    mean: np.ndarray
    corr: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        corr = np.asarray(self.corr, dtype=float)
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        d = mean.shape[0]
        if d == 0:
            raise ValueError("problem must have at least one coordinate")
        if corr.shape != (d, d):
            raise ValueError(f"corr has shape {corr.shape}, expected {(d, d)}")
        if lower.shape != (d,) or upper.shape != (d,):
            raise ValueError("mean, lower and upper lengths must agree")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("bounds must not be NaN")
        if not np.all(lower < upper):
            bad = int(np.argmin((lower < upper).astype(int)))
            raise ValueError(f"degenerate bounds at coordinate {bad}: "
                             f"[{lower[bad]}, {upper[bad]}]")
        if not np.allclose(corr, corr.T, rtol=0.0, atol=1e-12):
            raise ValueError("corr must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, rtol=0.0, atol=1e-12):
            raise ValueError("corr must have unit diagonal")
        eigs = np.linalg.eigvalsh(corr)
        if eigs[0] < -PSD_RTOL * max(eigs[-1], 1.0):
            raise NotPositiveSemiDefiniteError(
                f"minimum eigenvalue {eigs[0]:.3e} below tolerance")
        corr = (corr + corr.T) / 2.0
        np.fill_diagonal(corr, 1.0)
        for name, value in (("mean", mean), ("corr", corr),
                            ("lower", lower), ("upper", upper)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def standardize(mean, cov, lower, upper) -> OrthantProblem:
    """Reduce a general covariance rectangle problem to correlation form.

    Divides each coordinate by its standard deviation; the probability is
    unchanged.  Raises ValueError on non-positive diagonal entries.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float)
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    diag = np.diag(cov).copy()
    if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
        raise ValueError("covariance diagonal must be strictly positive")
    s = np.sqrt(diag)
    corr = cov / np.outer(s, s)
    return OrthantProblem(mean / s, corr, lower / s, upper / s)


def _npdf(t: float) -> float:
    # standard normal density; exp underflows to 0 at +-inf as needed
    return math.exp(-0.5 * t * t) / _SQRT_TWO_PI


def _pivoted_cholesky(corr, lower, upper):
    """Cholesky factor with greedy variable reordering (Genz ordering).

    At each step the pending coordinate with the smallest conditional
    truncated mass is processed next, concentrating the integrand's variation
    in the leading cube dimensions.  Returns the lower-triangular factor and
    the reordered bounds.  Pivots whose conditional variance underflows are
    treated as exactly singular: their column is zeroed and the coordinate
    becomes deterministic given its predecessors (the integrand applies an
    indicator).
    """
    d = len(lower)
    L = np.array(corr, dtype=float)
    a = np.array(lower, dtype=float)
    b = np.array(upper, dtype=float)
    y = np.zeros(d)  # conditional truncated means of processed coordinates
    for k in range(d):
        best, best_mass = k, np.inf
        for i in range(k, d):
            var = L[i, i] - L[i, :k] @ L[i, :k]
            if var <= _SINGULAR_TOL:
                continue  # singular candidates are processed last
            sd = math.sqrt(var)
            s = L[i, :k] @ y[:k]
            mass = ndtr((b[i] - s) / sd) - ndtr((a[i] - s) / sd)
            if mass < best_mass:
                best, best_mass = i, mass
        if best != k:
            L[[k, best], :] = L[[best, k], :]
            L[:, [k, best]] = L[:, [best, k]]
            a[[k, best]] = a[[best, k]]
            b[[k, best]] = b[[best, k]]
        var = L[k, k] - L[k, :k] @ L[k, :k]
        if var <= _SINGULAR_TOL:
            L[k, k] = 0.0
            L[k + 1:, k] = 0.0
            y[k] = 0.0
            continue
        ck = math.sqrt(var)
        L[k, k] = ck
        if k + 1 < d:
            L[k + 1:, k] = (L[k + 1:, k] - L[k + 1:, :k] @ L[k, :k]) / ck
        s = float(L[k, :k] @ y[:k])
        at = (a[k] - s) / ck
        bt = (b[k] - s) / ck
        mass = ndtr(bt) - ndtr(at)
        if mass > 1e-280:
            y[k] = (_npdf(at) - _npdf(bt)) / mass
        elif at > 0.0:
            y[k] = at
        elif bt < 0.0:
            y[k] = bt
        else:
            y[k] = 0.0
    return np.tril(L), a, b


def _sov_integrand(L, a, b, x):
    """Transformed integrand on the unit cube, vectorized over points x."""
    npts = x.shape[0]
    d = len(a)
    lo = np.full(npts, float(ndtr(a[0] / L[0, 0])))
    hi = np.full(npts, float(ndtr(b[0] / L[0, 0])))
    p = hi - lo
    y = np.empty((npts, d - 1))
    for i in range(1, d):
        z = lo + x[:, i - 1] * (hi - lo)
        np.clip(z, _UNIT_LO, _UNIT_HI, out=z)
        y[:, i - 1] = ndtri(z)
        s = y[:, :i] @ L[i, :i]
        ci = L[i, i]
        if ci > 0.0:
            lo = ndtr((a[i] - s) / ci)
            hi = ndtr((b[i] - s) / ci)
        else:
            # singular direction: the coordinate is deterministic given its
            # predecessors, so the factor is an interval indicator
            lo = (s < a[i]).astype(float)
            hi = (s <= b[i]).astype(float)
        p = p * np.maximum(hi - lo, 0.0)
    return p


def mvn_rectangle_prob(problem: OrthantProblem,
                       target_abs_error: float = 1e-5,
                       seed: int = 0,
                       *,
                       randomizations: int = 12,
                       max_evaluations: int = 1 << 24) -> ProbabilityEstimate:
    """Estimate P(lower <= Z <= upper) for Z ~ N(mean, corr).

    Args:
        problem: the rectangle problem; unit-diagonal correlation.
        target_abs_error: the point count doubles until the three-sigma
            error estimate drops below this value (or the cap is reached).
        seed: integration seed.  Results are deterministic given
            (problem, target_abs_error, seed); the independent randomizations
            use fixed sub-seeds derived from `seed`, so any parallel
            evaluation schedule would produce the same estimate.
        randomizations: independent Sobol scramblings for the error estimate.
        max_evaluations: cap on total integrand evaluations; when hit, the
            current estimate is returned with converged=False.

    Returns:
        ProbabilityEstimate with the estimate, a three-sigma error bound,
        the evaluation count and a convergence flag.  Dimension one is
        computed exactly.
    """
    if target_abs_error <= 0.0:
        raise ValueError("target_abs_error must be positive")
    a = problem.lower - problem.mean
    b = problem.upper - problem.mean
    corr = problem.corr
    # unconstrained coordinates contribute a factor of one
    keep = ~(np.isneginf(a) & np.isposinf(b))
    if not keep.all():
        a, b = a[keep], b[keep]
        corr = corr[np.ix_(keep, keep)]
    d = a.shape[0]
    if d == 0:
        return ProbabilityEstimate(1.0, 0.0, 0, True)
    if d == 1:
        p = float(ndtr(b[0]) - ndtr(a[0]))
        return ProbabilityEstimate(max(p, 0.0), 0.0, 1, True)
    L, a, b = _pivoted_cholesky(corr, a, b)

    children = np.random.SeedSequence(seed).spawn(randomizations)
    engines = [qmc.Sobol(d - 1, scramble=True, seed=np.random.default_rng(c))
               for c in children]
    sums = np.zeros(randomizations)
    n_per = 0
    batch = 128
    evaluations = 0
    while True:
        for r, engine in enumerate(engines):
            pts = engine.random(batch)
            sums[r] += float(_sov_integrand(L, a, b, pts).sum())
        n_per += batch
        evaluations += randomizations * batch
        estimates = sums / n_per
        value = float(estimates.mean())
        error = 3.0 * float(estimates.std(ddof=1)) / math.sqrt(randomizations)
        if error <= target_abs_error:
            converged = True
            break
        batch = n_per  # double the total each round (keeps counts powers of 2)
        if evaluations + randomizations * batch > max_evaluations:
            converged = False
            break
    value = min(max(value, 0.0), 1.0)
    return ProbabilityEstimate(value, error, evaluations, converged)
