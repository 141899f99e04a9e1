"""Promotion gate: adjudicate candidate vs incumbent into pass / defer / fail.

Decision rule order is fixed:

1. any safety constraint not certified (upper bound above threshold) -> fail;
2. any objective with a certified regression (upper < -epsilon) -> fail;
3. every margin objective certified at its margin (lower >= delta) and every
   objective free of regression risk (lower >= -epsilon) -> pass;
4. otherwise -> defer, preserving the incumbent.

Margins compare CI lower bounds, never point estimates: a margin holds only
when it is certified at the policy's confidence. Safety uses the candidate's
own one-sided upper bound against the absolute threshold; an interval that
merely crosses the threshold is an uncertified constraint, hence fail.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence, Union

from tvgov.errors import GateError
from tvgov.evidence import (
    EvidenceSummary,
    PairedEvidence,
    paired_objective_ci,
    violation_count,
)
from tvgov.space import Assignment
from tvgov.stats import (
    CiMethod,
    PairedDeltaCI,
    RateUpperBound,
    derived_seed,
    rate_upper_bound,
)
from tvgov.tvl.canonical import policy_hash
from tvgov.tvl.model import Direction, PromotionPolicy, TvlDocument


class Decision(str, Enum):
    PASS = "pass"
    DEFER = "defer"
    FAIL = "fail"


class ObjectiveStatus(str, Enum):
    MARGIN_MET = "margin-met"
    NO_CERTIFIED_REGRESSION = "no-certified-regression"
    CERTIFIED_REGRESSION = "certified-regression"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SafetyInterval:
    """Two-sided rate interval supplied by an external analysis; only its
    upper endpoint is compared against the threshold."""

    constraint: str
    lower: float
    upper: float
    confidence: float

    def to_plain(self) -> dict:
        return {
            "constraint": self.constraint,
            "lower": self.lower,
            "upper": self.upper,
            "confidence": self.confidence,
        }


ConstraintEvidence = Union[RateUpperBound, SafetyInterval]


@dataclass(frozen=True)
class ObjectiveVerdict:
    objective: str
    ci: PairedDeltaCI
    epsilon: float
    delta_required: float
    status: ObjectiveStatus

    def to_plain(self) -> dict:
        return {
            "objective": self.objective,
            "ci": self.ci.to_plain(),
            "epsilon": self.epsilon,
            "delta_required": self.delta_required,
            "status": self.status.value,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "ObjectiveVerdict":
        return cls(
            objective=raw["objective"],
            ci=PairedDeltaCI.from_plain(raw["ci"]),
            epsilon=raw["epsilon"],
            delta_required=raw["delta_required"],
            status=ObjectiveStatus(raw["status"]),
        )


@dataclass(frozen=True)
class ConstraintVerdict:
    constraint: str
    bound: ConstraintEvidence
    threshold: float
    certified: bool

    def to_plain(self) -> dict:
        kind = "upper-bound" if isinstance(self.bound, RateUpperBound) else "interval"
        return {
            "constraint": self.constraint,
            "bound_kind": kind,
            "bound": self.bound.to_plain(),
            "threshold": self.threshold,
            "certified": self.certified,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "ConstraintVerdict":
        bound: ConstraintEvidence
        if raw["bound_kind"] == "upper-bound":
            bound = RateUpperBound.from_plain(raw["bound"])
        else:
            b = raw["bound"]
            bound = SafetyInterval(
                constraint=b["constraint"], lower=b["lower"], upper=b["upper"],
                confidence=b["confidence"],
            )
        return cls(
            constraint=raw["constraint"],
            bound=bound,
            threshold=raw["threshold"],
            certified=raw["certified"],
        )


@dataclass(frozen=True)
class GateDecision:
    decision: Decision
    objective_verdicts: tuple[ObjectiveVerdict, ...]
    constraint_verdicts: tuple[ConstraintVerdict, ...]
    reasons: tuple[str, ...]
    policy_hash: str
    seed: int

    def to_plain(self) -> dict:
        return {
            "decision": self.decision.value,
            "objective_verdicts": [v.to_plain() for v in self.objective_verdicts],
            "constraint_verdicts": [v.to_plain() for v in self.constraint_verdicts],
            "reasons": list(self.reasons),
            "policy_hash": self.policy_hash,
            "seed": self.seed,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "GateDecision":
        return cls(
            decision=Decision(raw["decision"]),
            objective_verdicts=tuple(
                ObjectiveVerdict.from_plain(v) for v in raw["objective_verdicts"]
            ),
            constraint_verdicts=tuple(
                ConstraintVerdict.from_plain(v) for v in raw["constraint_verdicts"]
            ),
            reasons=tuple(raw["reasons"]),
            policy_hash=raw["policy_hash"],
            seed=raw["seed"],
        )


def classify_objective(
    ci: PairedDeltaCI, epsilon: float, delta_required: float
) -> ObjectiveStatus:
    if ci.upper < -epsilon:
        return ObjectiveStatus.CERTIFIED_REGRESSION
    if delta_required > 0.0:
        if ci.lower >= delta_required:
            return ObjectiveStatus.MARGIN_MET
        return ObjectiveStatus.INCONCLUSIVE
    if ci.lower >= -epsilon:
        return ObjectiveStatus.NO_CERTIFIED_REGRESSION
    return ObjectiveStatus.INCONCLUSIVE


def adjudicate_from_summaries(
    objective_cis: Sequence[PairedDeltaCI],
    constraint_bounds: Sequence[ConstraintEvidence],
    policy: PromotionPolicy,
    objectives: Sequence[str] | None = None,
    seed: int = 0,
) -> GateDecision:
    """Apply the gate rule order to precomputed intervals and bounds.

    When `objectives` is given, every named objective must have a CI and every
    declared chance constraint must have a bound.
    """
    cis_by_name = {ci.objective: ci for ci in objective_cis}
    bounds_by_name: dict[str, ConstraintEvidence] = {
        b.constraint: b for b in constraint_bounds
    }
    if objectives is not None:
        for name in objectives:
            if name not in cis_by_name:
                raise GateError(f"missing interval for declared objective '{name}'")
        for spec in policy.chance_constraints:
            if spec.name not in bounds_by_name:
                raise GateError(
                    f"missing bound for declared chance constraint '{spec.name}'"
                )

    objective_verdicts = []
    for ci in objective_cis:
        epsilon = policy.epsilon_for(ci.objective)
        delta_required = policy.min_effect_for(ci.objective)
        objective_verdicts.append(
            ObjectiveVerdict(
                objective=ci.objective,
                ci=ci,
                epsilon=epsilon,
                delta_required=delta_required,
                status=classify_objective(ci, epsilon, delta_required),
            )
        )

    constraint_verdicts = []
    for bound in constraint_bounds:
        spec = policy.constraint(bound.constraint)
        constraint_verdicts.append(
            ConstraintVerdict(
                constraint=bound.constraint,
                bound=bound,
                threshold=spec.threshold,
                certified=bound.upper <= spec.threshold,
            )
        )

    reasons: list[str] = []
    decision = Decision.PASS

    uncertified = [v for v in constraint_verdicts if not v.certified]
    regressions = [
        v for v in objective_verdicts
        if v.status is ObjectiveStatus.CERTIFIED_REGRESSION
    ]
    if uncertified:
        decision = Decision.FAIL
        for v in uncertified:
            reasons.append(
                f"safety constraint '{v.constraint}' not certified: upper bound "
                f"{v.bound.upper:.6g} > threshold {v.threshold:.6g}"
            )
    elif regressions:
        decision = Decision.FAIL
        for v in regressions:
            reasons.append(
                f"certified regression on '{v.objective}': upper {v.ci.upper:.6g} "
                f"< -epsilon {-v.epsilon:.6g}"
            )
    else:
        blockers = [
            v for v in objective_verdicts if v.status is ObjectiveStatus.INCONCLUSIVE
        ]
        if blockers:
            decision = Decision.DEFER
            for v in blockers:
                if v.delta_required > 0.0:
                    reasons.append(
                        f"inconclusive on '{v.objective}': lower {v.ci.lower:.6g} "
                        f"below required margin {v.delta_required:.6g}; "
                        f"incumbent preserved"
                    )
                else:
                    reasons.append(
                        f"inconclusive on '{v.objective}': interval "
                        f"[{v.ci.lower:.6g}, {v.ci.upper:.6g}] crosses "
                        f"-epsilon {-v.epsilon:.6g}; incumbent preserved"
                    )
        else:
            reasons.append(
                "all margin objectives certified, no certified regressions, "
                "all safety constraints certified"
            )

    return GateDecision(
        decision=decision,
        objective_verdicts=tuple(objective_verdicts),
        constraint_verdicts=tuple(constraint_verdicts),
        reasons=tuple(reasons),
        policy_hash=policy_hash(policy),
        seed=seed,
    )


def adjudicate(
    doc: TvlDocument,
    pe: PairedEvidence,
    seed: int,
    policy: PromotionPolicy | None = None,
    method: CiMethod = CiMethod.BOOTSTRAP_PERCENTILE,
    b: int = 10_000,
) -> GateDecision:
    """Full adjudication from paired evidence.

    Objective CIs are computed at the policy's alpha with per-objective
    derived seeds; safety bounds are exact binomial upper bounds on the
    candidate's own indicators over the common items.
    """
    policy = policy if policy is not None else doc.policy
    n = len(pe.common_items)
    cis = [
        paired_objective_ci(
            pe,
            objective,
            alpha=policy.alpha,
            method=method,
            seed=derived_seed(seed, "ci", objective.name),
            b=b,
        )
        for objective in doc.objectives
    ]
    bounds = []
    for spec in policy.chance_constraints:
        k = violation_count(pe.candidate, spec.test, pe.common_items)
        bounds.append(
            rate_upper_bound(k, n, spec.confidence, constraint=spec.name)
        )
    return adjudicate_from_summaries(
        cis, bounds, policy, objectives=[o.name for o in doc.objectives], seed=seed
    )


_DECISION_ORDER = {Decision.PASS: 0, Decision.DEFER: 1, Decision.FAIL: 2}


def rank_candidates(
    entries: Sequence[tuple[Assignment, GateDecision, EvidenceSummary]],
    doc: TvlDocument,
) -> list[tuple[Assignment, GateDecision, EvidenceSummary]]:
    """Order a batch: passes first by direction-normalized tie-breaker means
    (better first), then defers, then fails, each class by assignment id.
    The head is the promotion recommendation when it is a pass."""

    def normalized(summary: EvidenceSummary, name: str) -> float:
        objective = doc.objective(name)
        mean = summary.objective_means[name]
        return mean if objective.direction is Direction.MAXIMIZE else -mean

    def key(entry: tuple[Assignment, GateDecision, EvidenceSummary]):
        assignment, decision, summary = entry
        rank = _DECISION_ORDER[decision.decision]
        if decision.decision is Decision.PASS:
            tie_key = tuple(
                -normalized(summary, name) for name in doc.policy.tie_breakers
            )
        else:
            tie_key = ()
        return (rank, tie_key, assignment.assignment_id)

    return sorted(entries, key=key)


def apply_multiplicity(policy: PromotionPolicy, m: int) -> PromotionPolicy:
    """Bonferroni adjustment across a candidate batch of size m.

    With bonferroni enabled the objective-CI risk level becomes alpha / m;
    chance-constraint confidences are left unchanged. Without it the policy is
    returned as-is (callers surface a written warning when m > 1).
    """
    if m < 1:
        raise GateError(f"batch size must be >= 1, got {m}")
    if not policy.bonferroni or m == 1:
        return policy
    return replace(policy, alpha=policy.alpha / m)
