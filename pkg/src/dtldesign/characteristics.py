"""Operating characteristics of a calibrated design, plus comparators.

All quantities are analytic: the events module assembles each one as a
small family of multivariate-normal rectangle probabilities and this
module integrates them and does the patient bookkeeping.  Integration
noise is kept two orders of magnitude below the reporting precision;
a result whose error bound exceeds the allowance raises instead of
silently degrading the report.

Patient counts assume the equal-allocation schedule: n patients per
remaining arm (control included) per stage, one arm dropped at each
interim.  If the trial stops at stage j the total spent is

    N_j = sum_{i<j} i*n + (K - j + 2) * j * n,

the dropped arms having received n, 2n, ... and the j*n block covering
each of the K - j + 1 surviving arms and the control.  An equivalent
per-group rendering (cumulative arm totals plus the control's j*n) is
used as a cross-check in the tests; the two are algebraically identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .calibrate import ConvergenceError, SearchLimitError
from .covariance import EffectConfig, TrialDesign
from .endpoint import NormalEffectSpec
from .events import (
    EventProblemSet,
    global_null_typeI_problems,
    pwer_problem,
    set_probability,
    stop_stage_problems,
    total_probability,
    win_problems,
)
from .mvn import OrthantProblem, mvn_rectangle_prob

__all__ = [
    "OperatingCharacteristics",
    "pwer",
    "power_lfc",
    "type_i_global_null",
    "stop_stage_probabilities",
    "expected_sample_size",
    "stage_total_patients",
    "max_total_patients",
    "multiarm_lfc_power",
    "comparator_multiarm",
    "comparator_separate_trials",
    "full_report",
]

# Per-problem integration target, and the weighted set-level error bound
# beyond which a result is refused.  A problem may stall a shade above
# the per-problem target at the evaluation cap (the three-sigma bound is
# conservative); that is fine as long as the total stays inside the
# allowance, which sits two orders below the coarsest reported digit.
DEFAULT_TARGET = 2e-6
DEFAULT_MAX_EVALUATIONS = 1 << 26
ERROR_ALLOWANCE = 5e-5

_PROB_SLACK = 5e-5        # integration noise allowance on [0, 1]
_PARTITION_SLACK = 2e-5   # stop-stage probabilities must sum to one


@dataclass(frozen=True)
class OperatingCharacteristics:
    """One report row: error rates, power, and patient numbers.

    ess and stop_probs are keyed by the caller's configuration names
    (for example "global_null", "lfc", "all_relevant").
    """

    pwer: float
    power_lfc: float
    type_i_global_null: float
    max_n: int
    ess: dict[str, float] = field(default_factory=dict)
    stop_probs: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name, p in (("pwer", self.pwer),
                        ("power_lfc", self.power_lfc),
                        ("type_i_global_null", self.type_i_global_null)):
            if not -_PROB_SLACK <= p <= 1.0 + _PROB_SLACK:
                raise ValueError(f"{name}={p} is not a probability")
        if self.max_n < 1:
            raise ValueError("max_n must be positive")
        if set(self.ess) != set(self.stop_probs):
            raise ValueError("ess and stop_probs must share their keys")
        # per-stage probability noise times the largest stage cost
        ess_slack = _PROB_SLACK * self.max_n * max(
            (len(p) for p in self.stop_probs.values()), default=1)
        for name, value in self.ess.items():
            if not 0.0 <= value <= self.max_n + ess_slack:
                raise ValueError(
                    f"ess[{name!r}]={value} outside [0, max_n={self.max_n}]")
        for name, probs in self.stop_probs.items():
            if any(not -_PROB_SLACK <= p <= 1.0 + _PROB_SLACK
                   for p in probs):
                raise ValueError(f"stop_probs[{name!r}] not probabilities")
            if abs(math.fsum(probs) - 1.0) > _PARTITION_SLACK:
                raise ValueError(
                    f"stop_probs[{name!r}] sum to {math.fsum(probs)}, not 1")


def pwer(design: TrialDesign, *, target_abs_error: float = 1e-7,
         seed: int = 0) -> float:
    """Pairwise type I error: P(recommend a given ineffective arm)."""
    est = mvn_rectangle_prob(pwer_problem(design),
                             target_abs_error=target_abs_error, seed=seed)
    if not est.converged:
        raise ConvergenceError(
            f"PWER integration stalled at {est.error_bound:.2e}")
    return 1.0 - est.value


def _total(sets: list[EventProblemSet], *, target_abs_error: float,
           seed: int, max_evaluations: int, what: str) -> float:
    est = total_probability(sets, target_abs_error=target_abs_error,
                            seed=seed, max_evaluations=max_evaluations)
    if est.error_bound > ERROR_ALLOWANCE:
        raise ConvergenceError(
            f"{what} error bound {est.error_bound:.2e} exceeds the "
            f"allowance {ERROR_ALLOWANCE:.0e}; raise max_evaluations")
    return est.value


def power_lfc(design: TrialDesign, theta_prime: float, theta_zero: float,
              *, target_abs_error: float = DEFAULT_TARGET, seed: int = 0,
              max_evaluations: int = DEFAULT_MAX_EVALUATIONS) -> float:
    """P(recommend arm 1) when arm 1 sits at theta_prime and the rest at
    theta_zero.

    theta_prime == theta_zero is allowed (the degenerate all-equal
    configuration); theta_prime < theta_zero is not a least favourable
    configuration and is rejected.
    """
    if theta_prime < theta_zero:
        raise ValueError("need theta_prime >= theta_zero")
    effects = EffectConfig.least_favorable(design.arms, theta_prime,
                                           theta_zero)
    sets = win_problems(design, effects, focal_arm=1)
    return _total(sets, target_abs_error=target_abs_error, seed=seed,
                  max_evaluations=max_evaluations, what="power")


def type_i_global_null(design: TrialDesign, *,
                       target_abs_error: float = DEFAULT_TARGET,
                       seed: int = 0,
                       max_evaluations: int = DEFAULT_MAX_EVALUATIONS
                       ) -> float:
    """P(reject a given null) when no treatment works."""
    sets = global_null_typeI_problems(design)
    return _total(sets, target_abs_error=target_abs_error, seed=seed,
                  max_evaluations=max_evaluations, what="type I")


def stop_stage_probabilities(design: TrialDesign, effects: EffectConfig,
                             *, target_abs_error: float = DEFAULT_TARGET,
                             seed: int = 0,
                             max_evaluations: int = DEFAULT_MAX_EVALUATIONS
                             ) -> tuple[float, ...]:
    """P(trial ends at stage j) for j = 1..J; sums to one."""
    out = []
    for pset in stop_stage_problems(design, effects):
        est = set_probability(pset, target_abs_error=target_abs_error,
                              seed=seed, max_evaluations=max_evaluations)
        if est.error_bound > ERROR_ALLOWANCE:
            raise ConvergenceError(
                f"stop-stage {pset.stage} error bound "
                f"{est.error_bound:.2e} exceeds the allowance "
                f"{ERROR_ALLOWANCE:.0e}; raise max_evaluations")
        out.append(est.value)
    total = math.fsum(out)
    if abs(total - 1.0) > _PARTITION_SLACK:
        raise ConvergenceError(
            f"stop-stage probabilities sum to {total:.7f}; "
            "the event partition leaks")
    return tuple(out)


def stage_total_patients(design: TrialDesign, stage: int) -> int:
    """Patients recruited in total when the trial ends at `stage`."""
    if not 1 <= stage <= design.stages:
        raise ValueError(f"stage must be in 1..{design.stages}")
    n = design.n_per_stage
    dropped = sum(range(1, stage)) * n
    running = (design.arms - stage + 2) * stage * n
    return dropped + running


def max_total_patients(design: TrialDesign) -> int:
    """Patient total when no early stop occurs (the design maximum)."""
    return stage_total_patients(design, design.stages)


def expected_sample_size(design: TrialDesign, effects: EffectConfig, *,
                         target_abs_error: float = DEFAULT_TARGET,
                         seed: int = 0,
                         max_evaluations: int = DEFAULT_MAX_EVALUATIONS
                         ) -> float:
    """E(total patients) under the given true effects."""
    probs = stop_stage_probabilities(design, effects,
                                     target_abs_error=target_abs_error,
                                     seed=seed,
                                     max_evaluations=max_evaluations)
    return _ess_from_stop_probs(design, probs)


def _ess_from_stop_probs(design: TrialDesign,
                         probs: tuple[float, ...]) -> float:
    return math.fsum(p * stage_total_patients(design, j + 1)
                     for j, p in enumerate(probs))


def _multiarm_problem(arms: int, n: int, crit: float, theta_prime: float,
                      theta_zero: float, sigma: float) -> OrthantProblem:
    # coords (Z_1, Z_1 - Z_2, ..., Z_1 - Z_K); all unit variance, all
    # pairwise correlations one half under equal allocation
    shift = math.sqrt(n / 2.0) / sigma
    mean = [theta_prime * shift]
    mean += [(theta_prime - theta_zero) * shift] * (arms - 1)
    corr = 0.5 * (np.eye(arms) + np.ones((arms, arms)))
    lower = [crit] + [0.0] * (arms - 1)
    upper = [math.inf] * arms
    return OrthantProblem(np.array(mean), corr, np.array(lower),
                          np.array(upper))


def multiarm_lfc_power(arms: int, n: int, alpha: float, theta_prime: float,
                       theta_zero: float, sigma: float, *,
                       target_abs_error: float = 1e-7,
                       seed: int = 0) -> float:
    """LFC power of the single-look K-arm comparator at n per arm.

    The focal arm must beat the critical value and every other arm.
    """
    crit = float(ndtri(1.0 - alpha))
    problem = _multiarm_problem(arms, n, crit, theta_prime, theta_zero,
                                sigma)
    est = mvn_rectangle_prob(problem, target_abs_error=target_abs_error,
                             seed=seed)
    if not est.converged:
        raise ConvergenceError(
            f"comparator integration stalled at {est.error_bound:.2e}")
    return est.value


def comparator_multiarm(arms: int, alpha: float, power_target: float,
                        theta_prime: float, theta_zero: float, sigma: float,
                        *, max_n: int = 100_000,
                        seed: int = 0) -> tuple[int, int]:
    """Single-look K-arm design: (n per arm, maximum total patients).

    Pairwise error control needs only the marginal critical value; the
    sample size comes from the same double-then-bisect search as the main
    design, on the K-dimensional recommendation probability.
    """
    if arms < 1:
        raise ValueError("arms must be at least 1")
    if arms > 1 and not theta_prime > theta_zero:
        raise ValueError("need theta_prime > theta_zero")

    visited: dict[int, float] = {}

    def power_at(n: int) -> float:
        if n not in visited:
            visited[n] = multiarm_lfc_power(arms, n, alpha, theta_prime,
                                            theta_zero, sigma, seed=seed)
        return visited[n]

    n_hi = 1
    while power_at(n_hi) < power_target:
        if n_hi >= max_n:
            raise SearchLimitError(
                f"comparator power {power_at(n_hi):.4f} at n={n_hi} "
                f"still below {power_target}")
        n_hi = min(2 * n_hi, max_n)
    n_lo = n_hi // 2
    while n_hi - n_lo > 1:
        n_mid = (n_lo + n_hi) // 2
        if power_at(n_mid) >= power_target:
            n_hi = n_mid
        else:
            n_lo = n_mid
    return n_hi, (arms + 1) * n_hi


def comparator_separate_trials(arms: int, alpha: float, power_target: float,
                               theta_prime: float, sigma: float
                               ) -> tuple[int, int]:
    """K independent two-arm trials: (n per group, maximum total patients).

    Each trial brings its own control, so the total is 2*K*n with
    n = ceil(2 sigma^2 (z_{1-alpha} + z_{power})^2 / theta_prime^2).
    """
    if arms < 1:
        raise ValueError("arms must be at least 1")
    if not 0.0 < alpha < 1.0 or not 0.0 < power_target < 1.0:
        raise ValueError("alpha and power_target must be in (0, 1)")
    if theta_prime <= 0.0 or sigma <= 0.0:
        raise ValueError("theta_prime and sigma must be positive")
    z_sum = float(ndtri(1.0 - alpha)) + float(ndtri(power_target))
    n = math.ceil(2.0 * sigma ** 2 * z_sum ** 2 / theta_prime ** 2)
    return n, 2 * arms * n


def full_report(design: TrialDesign, endpoint: NormalEffectSpec,
                named_effect_configs: dict[str, EffectConfig], *,
                target_abs_error: float = DEFAULT_TARGET, seed: int = 0,
                max_evaluations: int = DEFAULT_MAX_EVALUATIONS
                ) -> OperatingCharacteristics:
    """Assemble the full report for one design.

    Expected sample size and stop-stage probabilities are computed for
    every named configuration; an empty map yields a report with the
    scalar fields only.
    """
    ess: dict[str, float] = {}
    stops: dict[str, tuple[float, ...]] = {}
    for name, effects in named_effect_configs.items():
        probs = stop_stage_probabilities(
            design, effects, target_abs_error=target_abs_error, seed=seed,
            max_evaluations=max_evaluations)
        stops[name] = probs
        ess[name] = _ess_from_stop_probs(design, probs)
    return OperatingCharacteristics(
        pwer=pwer(design, seed=seed),
        power_lfc=power_lfc(design, endpoint.theta_prime,
                            endpoint.theta_zero,
                            target_abs_error=target_abs_error, seed=seed,
                            max_evaluations=max_evaluations),
        type_i_global_null=type_i_global_null(
            design, target_abs_error=target_abs_error, seed=seed,
            max_evaluations=max_evaluations),
        max_n=max_total_patients(design),
        ess=ess,
        stop_probs=stops,
    )
