"""Promotion report: the JSON artifact written by the promote command.

Reports are a pure function of (inputs, seed): the generated-at field is
populated from the SOURCE_DATE_EPOCH convention when that variable is set and
is null otherwise, so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

from tvgov.evidence import EvidenceSummary
from tvgov.gate import Decision, GateDecision
from tvgov.tvl.canonical import canonical_json_bytes

REPORT_SCHEMA = "tvgov.promotion-report/1"


def deterministic_timestamp() -> str | None:
    """ISO-8601 time from SOURCE_DATE_EPOCH, or None (never wall clock)."""
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    if raw is None:
        return None
    try:
        moment = datetime.fromtimestamp(int(raw), tz=timezone.utc)
    except (ValueError, OverflowError, OSError):
        return None
    return moment.isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class CandidateResult:
    assignment_id: str
    decision: GateDecision
    summary: EvidenceSummary
    evidence_hash: str
    seed: int

    def to_plain(self) -> dict:
        return {
            "assignment_id": self.assignment_id,
            "decision": self.decision.to_plain(),
            "summary": self.summary.to_plain(),
            "evidence_hash": self.evidence_hash,
            "seed": self.seed,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "CandidateResult":
        return cls(
            assignment_id=raw["assignment_id"],
            decision=GateDecision.from_plain(raw["decision"]),
            summary=EvidenceSummary.from_plain(raw["summary"]),
            evidence_hash=raw["evidence_hash"],
            seed=raw["seed"],
        )


@dataclass(frozen=True)
class PromotionReport:
    tvl_hash: str
    incumbent_id: str
    incumbent_evidence_hash: str
    batch_size: int
    alpha: float
    alpha_effective: float
    bonferroni_applied: bool
    policy_echo: dict
    candidates: tuple[CandidateResult, ...]
    ranking: tuple[str, ...]
    recommendation: str | None
    seed: int
    generated_at: str | None = field(default_factory=deterministic_timestamp)
    warnings: tuple[str, ...] = ()

    def to_plain(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "tvl_hash": self.tvl_hash,
            "incumbent": {
                "assignment_id": self.incumbent_id,
                "evidence_hash": self.incumbent_evidence_hash,
            },
            "batch_size": self.batch_size,
            "alpha": self.alpha,
            "alpha_effective": self.alpha_effective,
            "bonferroni_applied": self.bonferroni_applied,
            "policy": self.policy_echo,
            "candidates": [c.to_plain() for c in self.candidates],
            "ranking": list(self.ranking),
            "recommendation": self.recommendation,
            "seed": self.seed,
            "timestamps": {"generated_at": self.generated_at},
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "PromotionReport":
        return cls(
            tvl_hash=raw["tvl_hash"],
            incumbent_id=raw["incumbent"]["assignment_id"],
            incumbent_evidence_hash=raw["incumbent"]["evidence_hash"],
            batch_size=raw["batch_size"],
            alpha=raw["alpha"],
            alpha_effective=raw["alpha_effective"],
            bonferroni_applied=raw["bonferroni_applied"],
            policy_echo=raw["policy"],
            candidates=tuple(
                CandidateResult.from_plain(c) for c in raw["candidates"]
            ),
            ranking=tuple(raw["ranking"]),
            recommendation=raw["recommendation"],
            seed=raw["seed"],
            generated_at=raw["timestamps"]["generated_at"],
            warnings=tuple(raw["warnings"]),
        )

    def to_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_plain()) + b"\n"

    def render_text(self) -> str:
        lines = [
            f"promotion batch of {self.batch_size} candidate(s) "
            f"vs incumbent {self.incumbent_id}",
            f"alpha {self.alpha:g}"
            + (
                f" -> {self.alpha_effective:g} (bonferroni, m={self.batch_size})"
                if self.bonferroni_applied
                else ""
            ),
        ]
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        by_id: Mapping[str, CandidateResult] = {
            c.assignment_id: c for c in self.candidates
        }
        for position, assignment_id in enumerate(self.ranking, start=1):
            result = by_id[assignment_id]
            lines.append(
                f"{position}. [{result.decision.decision.value.upper()}] "
                f"{assignment_id}"
            )
            for reason in result.decision.reasons:
                lines.append(f"     - {reason}")
        if self.recommendation is not None:
            lines.append(f"recommendation: promote {self.recommendation}")
        else:
            lines.append("recommendation: none (incumbent preserved)")
        return "\n".join(lines)


def exit_code_for(decisions: Sequence[Decision]) -> int:
    """CI contract: 0 when a pass exists, 10 when the best is defer, 20 when
    everything fails."""
    if Decision.PASS in decisions:
        return 0
    if Decision.DEFER in decisions:
        return 10
    return 20
