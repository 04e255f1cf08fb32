"""Boundary scale and sample size calibration.

Two searches, run in this order:

1. calibrate_boundaries fixes the boundary shape (O'Brien-Fleming by
   default) and bisects on the scale c until the pairwise type I error
   lands inside [alpha - omega, alpha].  PWER does not depend on the
   per-stage sample size, so this is done once per shape.

2. find_sample_size takes the calibrated design and finds the smallest
   integer per-stage sample size whose power under the least favourable
   configuration reaches the target.  The candidate n doubles until the
   power target is met, then a binary search pins down the minimal
   integer; this visits the same final n as a one-patient-at-a-time scan
   at a fraction of the integrals.

Both searches integrate with a fixed seed so the objectives are
deterministic functions of their argument; the monotonicity that makes
bracketing valid is asserted on the visited grid rather than assumed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .covariance import TrialDesign
from .events import power_lfc_problems, pwer_problem, total_probability
from .mvn import mvn_rectangle_prob

__all__ = [
    "BracketError",
    "SearchLimitError",
    "ConvergenceError",
    "CalibrationConfig",
    "BoundaryShape",
    "obf_shape",
    "calibrate_boundaries",
    "find_sample_size",
]

_SHAPE_KINDS = ("obrien_fleming", "pocock", "custom")


class BracketError(ValueError):
    """The scale bracket does not straddle the PWER target."""


class SearchLimitError(RuntimeError):
    """The sample size search hit its cap before reaching the target."""


class ConvergenceError(RuntimeError):
    """An integration failed to converge during a search."""


@dataclass(frozen=True)
class CalibrationConfig:
    """Targets and search limits for both calibration passes.

    Attributes:
        alpha: pairwise type I error target.
        power_target: required power under the least favourable
            configuration (1 - beta).
        omega: width of the accepted PWER window [alpha - omega, alpha].
        bracket: (c_lo, c_hi) bracket for the boundary scale bisection.
        max_n: cap on the per-stage sample size search.
    """

    alpha: float
    power_target: float
    omega: float = 1e-5
    bracket: tuple[float, float] = (0.5, 10.0)
    max_n: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if not 0.0 < self.power_target < 1.0:
            raise ValueError("power_target must be in (0, 1)")
        if not 0.0 < self.omega < self.alpha:
            raise ValueError("need 0 < omega < alpha")
        c_lo, c_hi = self.bracket
        if not 0.0 < c_lo < c_hi:
            raise ValueError("bracket must satisfy 0 < c_lo < c_hi")
        if self.max_n < 1:
            raise ValueError("max_n must be positive")


@dataclass(frozen=True)
class BoundaryShape:
    """Boundary profile up to a common scale factor.

    kind "obrien_fleming" uses multipliers sqrt(J/j), "pocock" a flat
    profile, "custom" the supplied multipliers.  Custom multipliers must
    be strictly positive; +inf on a non-final stage disables stopping
    there (drop-the-loser without early stopping is custom
    (inf, ..., inf, 1)).
    """

    kind: str = "obrien_fleming"
    custom_multipliers: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if (self.custom_multipliers is not None) != (self.kind == "custom"):
            raise ValueError(
                "custom_multipliers required iff kind == 'custom'")
        if self.custom_multipliers is not None:
            object.__setattr__(
                self, "custom_multipliers",
                tuple(float(m) for m in self.custom_multipliers))

    def multipliers(self, stages: int) -> tuple[float, ...]:
        if stages < 1:
            raise ValueError("stages must be at least 1")
        if self.kind == "obrien_fleming":
            return tuple(math.sqrt(stages / j)
                         for j in range(1, stages + 1))
        if self.kind == "pocock":
            return (1.0,) * stages
        mults = self.custom_multipliers
        if len(mults) != stages:
            raise ValueError(
                f"need {stages} multipliers, got {len(mults)}")
        if any(not m > 0.0 or math.isnan(m) for m in mults):
            raise ValueError("multipliers must be strictly positive")
        if not math.isfinite(mults[-1]):
            raise ValueError("final multiplier must be finite")
        return mults


def obf_shape(stages: int, c: float) -> tuple[float, ...]:
    """O'Brien-Fleming boundaries u_j = c sqrt(J/j)."""
    if c <= 0.0:
        raise ValueError("scale c must be positive")
    return tuple(c * m
                 for m in BoundaryShape("obrien_fleming").multipliers(stages))


def _pwer(design: TrialDesign, *, target: float, seed: int) -> float:
    problem = pwer_problem(design)
    est = mvn_rectangle_prob(problem, target_abs_error=target, seed=seed)
    if not est.converged:
        raise ConvergenceError(
            f"PWER integration stalled at error bound {est.error_bound:.2e}")
    return 1.0 - est.value


def calibrate_boundaries(design_template: TrialDesign,
                         shape: BoundaryShape = BoundaryShape(),
                         cfg: CalibrationConfig = CalibrationConfig(0.025, 0.9),
                         *,
                         seed: int = 0,
                         max_iterations: int = 200) -> TrialDesign:
    """Bisect the boundary scale until PWER falls in [alpha - omega, alpha].

    PWER is continuous and strictly decreasing in the scale, so plain
    bisection converges; the bracket endpoints are checked to straddle the
    window first.  The integration error target is omega / 10, an order
    below the window width.  Returns the template with the calibrated
    boundaries and cfg.alpha installed.
    """
    mults = shape.multipliers(design_template.stages)
    window_lo = cfg.alpha - cfg.omega
    window_hi = cfg.alpha
    target = cfg.omega / 10.0

    def at(c: float) -> tuple[TrialDesign, float]:
        d = design_template.with_boundaries(tuple(c * m for m in mults))
        return d, _pwer(d, target=target, seed=seed)

    def done(design: TrialDesign) -> TrialDesign:
        return dataclasses.replace(design, alpha=cfg.alpha)

    c_lo, c_hi = cfg.bracket
    d_lo, p_lo = at(c_lo)      # largest PWER: boundaries lowest here
    if window_lo <= p_lo <= window_hi:
        return done(d_lo)
    if p_lo < window_lo:
        raise BracketError(
            f"PWER at c_lo={c_lo} is {p_lo:.6f}, below the window "
            f"[{window_lo:.6f}, {window_hi:.6f}]; lower c_lo")
    d_hi, p_hi = at(c_hi)
    if window_lo <= p_hi <= window_hi:
        return done(d_hi)
    if p_hi > window_hi:
        raise BracketError(
            f"PWER at c_hi={c_hi} is {p_hi:.6f}, above the window "
            f"[{window_lo:.6f}, {window_hi:.6f}]; raise c_hi")

    for _ in range(max_iterations):
        c_mid = 0.5 * (c_lo + c_hi)
        d_mid, p_mid = at(c_mid)
        if window_lo <= p_mid <= window_hi:
            return done(d_mid)
        if p_mid > window_hi:
            c_lo = c_mid
        else:
            c_hi = c_mid
    raise ConvergenceError(
        "bisection exhausted its iteration budget without landing in "
        "the PWER window; omega may be too small for the integration "
        "error target")


def _lfc_power(design: TrialDesign, theta_prime: float, theta_zero: float,
               *, target: float, seed: int) -> tuple[float, float]:
    sets = power_lfc_problems(design, theta_prime, theta_zero)
    est = total_probability(sets, target_abs_error=target, seed=seed)
    if not est.converged:
        raise ConvergenceError(
            f"power integration stalled at error bound "
            f"{est.error_bound:.2e}")
    return est.value, est.error_bound


def find_sample_size(design: TrialDesign, theta_prime: float,
                     theta_zero: float,
                     cfg: CalibrationConfig = CalibrationConfig(0.025, 0.9),
                     *,
                     seed: int = 0,
                     target_abs_error: float = 1e-5) -> TrialDesign:
    """Smallest per-stage n with LFC power >= cfg.power_target.

    Doubles n until the target is reached, then binary-searches the
    minimal integer.  The same integration seed is used at every n
    (common random numbers), so the visited power curve is smooth; it is
    asserted nondecreasing up to twice the integration error bound.  The
    per-problem error target defaults to 1e-5, well below the power gap
    between consecutive n near the reference designs (~5e-4).
    """
    visited: dict[int, tuple[float, float]] = {}

    def power_at(n: int) -> float:
        if n not in visited:
            visited[n] = _lfc_power(design.with_n(n), theta_prime,
                                    theta_zero, target=target_abs_error,
                                    seed=seed)
        return visited[n][0]

    n_hi = 1
    while power_at(n_hi) < cfg.power_target:
        if n_hi >= cfg.max_n:
            raise SearchLimitError(
                f"power {power_at(n_hi):.4f} at n={n_hi} still below "
                f"{cfg.power_target} (max_n={cfg.max_n})")
        n_hi = min(2 * n_hi, cfg.max_n)
    n_lo = n_hi // 2      # power(n_lo) < target whenever n_lo >= 1

    while n_hi - n_lo > 1:
        n_mid = (n_lo + n_hi) // 2
        if power_at(n_mid) >= cfg.power_target:
            n_hi = n_mid
        else:
            n_lo = n_mid

    grid = sorted(visited)
    for a, b in zip(grid, grid[1:]):
        (pa, ea), (pb, eb) = visited[a], visited[b]
        if pb < pa - 2.0 * (ea + eb):
            raise ConvergenceError(
                f"power not nondecreasing on the visited grid: "
                f"power({a})={pa:.6f} vs power({b})={pb:.6f}")
    return design.with_n(n_hi)
