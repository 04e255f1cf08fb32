"""Event enumeration for multi-stage drop-the-loser trials.

Every quantity the design engine reports (pairwise error, power under the
least favorable configuration, the distribution of the stopping stage, type
I error under the global null) is the probability of a union of mutually
exclusive trial paths.  A path fixes the arm dropped at each interim, which
survivors failed to clear the earlier boundaries, and where the focal arm
sits when the trial ends.  Each path is a rectangle event on a jointly
normal vector, so the enumerators below reduce an event system to a weighted
list of OrthantProblems.

Paths that are arm relabelings of one another integrate to the same value
whenever the relabeling preserves the true effects (and the focal arm, when
there is one).  Such paths are merged into a single problem with an integer
weight; the merge tests exact effect equality, so no collapsing happens
between arms whose effects merely happen to be close.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .covariance import (
    EffectConfig,
    StatCoord,
    TrialDesign,
    build_moment_problem,
    difference,
    single,
)
from .mvn import OrthantProblem, ProbabilityEstimate, mvn_rectangle_prob

__all__ = [
    "PERMUTATION_CAP",
    "CapacityError",
    "DropOrder",
    "EventProblemSet",
    "pwer_problem",
    "win_problems",
    "power_lfc_problems",
    "stop_stage_problems",
    "reject_problems",
    "global_null_typeI_problems",
    "stop_event_rectangles",
    "win_event_rectangles",
    "set_probability",
    "total_probability",
]

# K! drop orders times 2^K no-stop rectangles per stage grows brutally; the
# cap keeps accidental K=12 calls from hanging the process.
PERMUTATION_CAP = 8


class CapacityError(ValueError):
    """Raised when the drop-order enumeration would be intractably large."""


@dataclass(frozen=True)
class DropOrder:
    """Arms dropped at stages 1..len(dropped), in stage order."""

    dropped: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dropped",
                           tuple(int(m) for m in self.dropped))
        if len(set(self.dropped)) != len(self.dropped):
            raise ValueError("dropped arms must be distinct")
        if any(m < 1 for m in self.dropped):
            raise ValueError("arm indices start at 1")

    def validate(self, design: TrialDesign) -> None:
        if any(m > design.arms for m in self.dropped):
            raise ValueError("dropped arm outside the design")
        if len(self.dropped) > max(design.stages - 1, 0):
            raise ValueError("more drops than interim analyses")

    def survivors(self, design: TrialDesign) -> tuple[int, ...]:
        gone = set(self.dropped)
        return tuple(a for a in range(1, design.arms + 1) if a not in gone)


@dataclass(frozen=True)
class EventProblemSet:
    """Disjoint rectangle problems whose weighted sum is one event probability."""

    stage: int
    problems: tuple[tuple[int, OrthantProblem], ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "problems",
                           tuple((int(w), p) for w, p in self.problems))
        if self.stage < 1:
            raise ValueError("stage indices start at 1")
        for w, p in self.problems:
            if w < 1:
                raise ValueError("weights are positive integers")
            if not isinstance(p, OrthantProblem):
                raise TypeError("problems must be OrthantProblem instances")


def _coord_key(c: StatCoord):
    return (c.stage, c.kind, c.arm_a, c.arm_b)


class _RectBuilder:
    """Accumulates interval constraints per coordinate, intersecting repeats."""

    def __init__(self):
        self.bounds: dict[StatCoord, list[float]] = {}

    def add(self, coord: StatCoord, lo: float, hi: float) -> None:
        if lo == -math.inf and hi == math.inf:
            return
        cur = self.bounds.get(coord)
        if cur is None:
            self.bounds[coord] = [lo, hi]
        else:
            cur[0] = max(cur[0], lo)
            cur[1] = min(cur[1], hi)

    def items(self):
        """Sorted (coord, lo, hi) description, or None for an empty rectangle."""
        out = []
        for coord, (lo, hi) in sorted(self.bounds.items(),
                                      key=lambda kv: _coord_key(kv[0])):
            if not lo < hi:
                return None
            out.append((coord, lo, hi))
        return tuple(out)


def _check_inputs(design: TrialDesign, effects: EffectConfig, cap: int,
                  focal_arm: int | None = None) -> None:
    if design.arms > cap:
        raise CapacityError(
            f"{design.arms} arms exceeds the enumeration cap of {cap}")
    if len(effects.deltas) != design.arms:
        raise ValueError("effects length must match the number of arms")
    if focal_arm is not None and not 1 <= focal_arm <= design.arms:
        raise ValueError(f"focal arm {focal_arm} outside 1..{design.arms}")


def _drop_constraints(design: TrialDesign, order: DropOrder):
    """Argmin constraints making order.dropped the realized drop sequence."""
    cons = []
    in_trial = set(range(1, design.arms + 1))
    for i, m in enumerate(order.dropped, start=1):
        for a in sorted(in_trial - {m}):
            cons.append((difference(a, m, i), 0.0, math.inf))
        in_trial.remove(m)
    return cons


def _no_stop_options(design: TrialDesign, order: DropOrder, upto: int):
    """Per-stage disjoint rectangles for 'did not stop at stages 1..upto'.

    After the stage-i drop the trial stops only if every survivor clears
    u_i, so its complement is every below/above sign pattern except
    all-above.  An infinite boundary cannot be cleared, so the stage
    contributes no constraints at all.
    """
    options = []
    in_trial = set(range(1, design.arms + 1))
    for i in range(1, upto + 1):
        in_trial.remove(order.dropped[i - 1])
        u = design.boundaries[i - 1]
        if math.isinf(u):
            options.append([()])
            continue
        surv = sorted(in_trial)
        opts = []
        for above in itertools.product((False, True), repeat=len(surv)):
            if all(above):
                continue
            opts.append(tuple(
                (single(a, i), u, math.inf) if up else
                (single(a, i), -math.inf, u)
                for a, up in zip(surv, above)))
        options.append(opts)
    return options


def _path_rects(design: TrialDesign, order: DropOrder, end_stage: int,
                extras):
    """Rectangle descriptions for: drops follow `order`, no earlier stop, the
    trial ends at end_stage (all after-drop survivors cross, vacuous at the
    final stage), plus event-specific extra constraints."""
    base = _drop_constraints(design, order)
    stop_cons = []
    if end_stage < design.stages:
        u = design.boundaries[end_stage - 1]
        stop_cons = [(single(a, end_stage), u, math.inf)
                     for a in order.survivors(design)]
    out = []
    for combo in itertools.product(
            *_no_stop_options(design, order, end_stage - 1)):
        b = _RectBuilder()
        for c in base:
            b.add(*c)
        for group in combo:
            for c in group:
                b.add(*c)
        for c in stop_cons:
            b.add(*c)
        for c in extras:
            b.add(*c)
        items = b.items()
        if items is not None:
            out.append(items)
    return out


def _symmetry_maps(deltas, fixed=frozenset()):
    """Arm relabelings that preserve the effect vector and the fixed arms.

    Returned as tuples indexed by arm (entry 0 unused).  Arms only trade
    places within groups of bit-identical effects, so collapsing is off for
    effects that merely round to the same value.
    """
    classes: dict[float, list[int]] = {}
    for a in range(1, len(deltas) + 1):
        if a in fixed:
            continue
        classes.setdefault(deltas[a - 1], []).append(a)
    members = list(classes.values())
    maps = []
    for combo in itertools.product(
            *(itertools.permutations(m) for m in members)):
        pi = list(range(len(deltas) + 1))
        for src_group, dst_group in zip(members, combo):
            for src, dst in zip(src_group, dst_group):
                pi[src] = dst
        maps.append(tuple(pi))
    return maps


def _relabeled_key(items, pi):
    out = []
    for c, lo, hi in items:
        if c.kind == "single":
            key = (c.stage, c.kind, pi[c.arm_a], 0)
        else:
            key = (c.stage, c.kind, pi[c.arm_a], pi[c.arm_b])
        out.append((key, lo, hi))
    out.sort()
    return tuple(out)


def _problem_from_key(design: TrialDesign, effects: EffectConfig, key):
    if not key:
        # certain event: keep a carrier coordinate the integrator prunes
        return build_moment_problem(design, effects, [single(1, 1)],
                                    [-math.inf], [math.inf])
    coords = [StatCoord(kind, arm_a, arm_b, stage)
              for (stage, kind, arm_a, arm_b), _, _ in key]
    lowers = [lo for _, lo, _ in key]
    uppers = [hi for _, _, hi in key]
    return build_moment_problem(design, effects, coords, lowers, uppers)


def _collapse(design: TrialDesign, effects: EffectConfig, paths, gamma):
    """Merge relabeling-equivalent paths into (weight, problem) pairs.

    Each path's key is the lexicographic minimum of its description over the
    symmetry group, so two paths share a key exactly when one is an
    effect-preserving relabeling of the other.
    """
    table: dict = {}
    for items in paths:
        key = min(_relabeled_key(items, pi) for pi in gamma)
        table[key] = table.get(key, 0) + 1
    return tuple((table[key], _problem_from_key(design, effects, key))
                 for key in sorted(table))


def _drops_before_decision(design: TrialDesign, stage: int) -> int:
    # a drop happens at every stage except the last
    return stage if stage < design.stages else design.stages - 1


def pwer_problem(design: TrialDesign) -> OrthantProblem:
    """Marginal no-crossing rectangle for one arm under its null.

    The pairwise error rate used for calibration is 1 - P(this problem):
    the chance the arm's statistic ever clears its boundary when delta = 0,
    ignoring selection.  Selection only removes crossing opportunities, so
    this bounds the realized per-arm type I error at every effect
    configuration.
    """
    stages = design.stages
    coords = [single(1, j) for j in range(1, stages + 1)]
    return build_moment_problem(design, EffectConfig.global_null(design.arms),
                                coords, [-math.inf] * stages,
                                list(design.boundaries))


def win_problems(design: TrialDesign, effects: EffectConfig,
                 focal_arm: int = 1, *,
                 cap: int = PERMUTATION_CAP) -> list[EventProblemSet]:
    """Per-stage events: trial ends at that stage with the focal arm
    recommended (it survived every drop so far, cleared the boundary, and
    beat every other crossing survivor)."""
    _check_inputs(design, effects, cap, focal_arm)
    gamma = _symmetry_maps(effects.deltas, fixed=frozenset((focal_arm,)))
    others = [a for a in range(1, design.arms + 1) if a != focal_arm]
    sets = []
    for j in range(1, design.stages + 1):
        drops = _drops_before_decision(design, j)
        paths = []
        for perm in itertools.permutations(others, drops):
            order = DropOrder(perm)
            if j < design.stages:
                extras = [(difference(focal_arm, s, j), 0.0, math.inf)
                          for s in order.survivors(design) if s != focal_arm]
            else:
                extras = [(single(focal_arm, j), design.boundaries[-1],
                           math.inf)]
            paths += _path_rects(design, order, j, extras)
        sets.append(EventProblemSet(j, _collapse(design, effects, paths,
                                                 gamma), label=f"win@{j}"))
    return sets


def power_lfc_problems(design: TrialDesign, theta_prime: float,
                       theta_zero: float, *,
                       cap: int = PERMUTATION_CAP) -> list[EventProblemSet]:
    """Win events for arm 1 under the least favorable configuration
    (arm 1 at theta_prime, all rivals at theta_zero)."""
    if not theta_prime > theta_zero:
        raise ValueError("theta_prime must exceed theta_zero")
    effects = EffectConfig.least_favorable(design.arms, theta_prime,
                                           theta_zero)
    return win_problems(design, effects, focal_arm=1, cap=cap)


def stop_stage_problems(design: TrialDesign, effects: EffectConfig, *,
                        cap: int = PERMUTATION_CAP) -> list[EventProblemSet]:
    """Per-stage events: the trial ends at that stage.  The stage events
    partition the sample space, so the probabilities sum to one."""
    _check_inputs(design, effects, cap)
    gamma = _symmetry_maps(effects.deltas)
    arms = range(1, design.arms + 1)
    sets = []
    for j in range(1, design.stages + 1):
        drops = _drops_before_decision(design, j)
        paths = []
        for perm in itertools.permutations(arms, drops):
            paths += _path_rects(design, DropOrder(perm), j, [])
        sets.append(EventProblemSet(j, _collapse(design, effects, paths,
                                                 gamma), label=f"stop@{j}"))
    return sets


def reject_problems(design: TrialDesign, effects: EffectConfig,
                    focal_arm: int = 1, *,
                    cap: int = PERMUTATION_CAP) -> list[EventProblemSet]:
    """Per-stage events: the trial ends at that stage and the focal arm
    clears the boundary there.  The focal arm may be a crossing survivor or
    the arm dropped at the ending stage; both ways its null is rejected."""
    _check_inputs(design, effects, cap, focal_arm)
    gamma = _symmetry_maps(effects.deltas, fixed=frozenset((focal_arm,)))
    others = [a for a in range(1, design.arms + 1) if a != focal_arm]
    sets = []
    stages = design.stages
    for j in range(1, stages + 1):
        paths = []
        if j < stages:
            for perm in itertools.permutations(others, j):
                # focal survives the stage-j drop; its crossing is part of
                # the all-survivors-cross stop constraint
                paths += _path_rects(design, DropOrder(perm), j, [])
            u = design.boundaries[j - 1]
            for perm in itertools.permutations(others, j - 1):
                order = DropOrder(perm + (focal_arm,))
                paths += _path_rects(design, order, j,
                                     [(single(focal_arm, j), u, math.inf)])
        else:
            for perm in itertools.permutations(others, stages - 1):
                paths += _path_rects(
                    design, DropOrder(perm), j,
                    [(single(focal_arm, j), design.boundaries[-1], math.inf)])
        sets.append(EventProblemSet(j, _collapse(design, effects, paths,
                                                 gamma), label=f"reject@{j}"))
    return sets


def global_null_typeI_problems(design: TrialDesign, *,
                               cap: int = PERMUTATION_CAP
                               ) -> list[EventProblemSet]:
    """Reject events for a fixed arm when every effect is zero; summed over
    stages this is the realized per-arm type I error under the global null."""
    effects = EffectConfig.global_null(design.arms)
    return reject_problems(design, effects, focal_arm=1, cap=cap)


def stop_event_rectangles(design: TrialDesign, *,
                          cap: int = PERMUTATION_CAP):
    """Raw constraint rectangles of the end-at-stage events, one tuple per
    stage, without the relabeling collapse.

    Each rectangle is a tuple of (coordinate, lower, upper) constraints; a
    realized statistic path lies in the stage-j event iff it satisfies every
    constraint of exactly one stage-j rectangle.  The uncollapsed form is
    what a simulated path can be tested against directly: across all stages
    the rectangles tile the sample space up to boundary ties.
    """
    if design.arms > cap:
        raise CapacityError(
            f"{design.arms} arms exceeds the enumeration cap of {cap}")
    arms = range(1, design.arms + 1)
    out = []
    for j in range(1, design.stages + 1):
        drops = _drops_before_decision(design, j)
        rects = []
        for perm in itertools.permutations(arms, drops):
            rects += _path_rects(design, DropOrder(perm), j, [])
        out.append(tuple(rects))
    return out


def win_event_rectangles(design: TrialDesign, focal_arm: int = 1, *,
                         cap: int = PERMUTATION_CAP):
    """Raw constraint rectangles of the focal-arm win events, one tuple per
    stage, without the relabeling collapse.  A path lies in at most one of
    these rectangles over all stages combined."""
    if design.arms > cap:
        raise CapacityError(
            f"{design.arms} arms exceeds the enumeration cap of {cap}")
    if not 1 <= focal_arm <= design.arms:
        raise ValueError(f"focal arm {focal_arm} outside 1..{design.arms}")
    others = [a for a in range(1, design.arms + 1) if a != focal_arm]
    out = []
    for j in range(1, design.stages + 1):
        drops = _drops_before_decision(design, j)
        rects = []
        for perm in itertools.permutations(others, drops):
            order = DropOrder(perm)
            if j < design.stages:
                extras = [(difference(focal_arm, s, j), 0.0, math.inf)
                          for s in order.survivors(design) if s != focal_arm]
            else:
                extras = [(single(focal_arm, j), design.boundaries[-1],
                           math.inf)]
            rects += _path_rects(design, order, j, extras)
        out.append(tuple(rects))
    return out


def set_probability(pset: EventProblemSet, *, target_abs_error: float = 1e-6,
                    seed: int = 0,
                    max_evaluations: int = 1 << 24) -> ProbabilityEstimate:
    """Weighted probability of one event set.

    Problems are integrated in their stored (canonically sorted) order with
    per-problem seeds derived from (seed, stage, index), so the estimate is
    independent of any execution schedule.
    """
    value = 0.0
    bound = 0.0
    evaluations = 0
    converged = True
    for idx, (w, prob) in enumerate(pset.problems):
        sub = int(np.random.SeedSequence(
            (seed, pset.stage, idx)).generate_state(1)[0])
        est = mvn_rectangle_prob(prob, target_abs_error=target_abs_error,
                                 seed=sub, max_evaluations=max_evaluations)
        value += w * est.value
        bound += w * est.error_bound
        evaluations += est.evaluations
        converged = converged and est.converged
    return ProbabilityEstimate(value, bound, evaluations, converged)


def total_probability(psets, *, target_abs_error: float = 1e-6, seed: int = 0,
                      max_evaluations: int = 1 << 24) -> ProbabilityEstimate:
    """Sum of set_probability over one family of per-stage event sets."""
    value = 0.0
    bound = 0.0
    evaluations = 0
    converged = True
    for pset in psets:
        est = set_probability(pset, target_abs_error=target_abs_error,
                              seed=seed, max_evaluations=max_evaluations)
        value += est.value
        bound += est.error_bound
        evaluations += est.evaluations
        converged = converged and est.converged
    return ProbabilityEstimate(value, bound, evaluations, converged)
