"""Operating-characteristics audit: run the shipped evaluator and gate over a
grid of true effect sizes and report pass/defer/fail frequencies.

Each cell simulates `trials` incumbent/candidate comparisons. The incumbent's
quality success probability is the configured base; the candidate's is base
plus the cell's true effect. By default both sides share one evaluator seed
per trial (common random numbers), which is what makes paired deltas
low-variance; `paired_streams: false` draws the two sides from independent
streams instead. The pass frequency at a zero true effect estimates the
false-promotion rate; at effects above the margin it estimates power.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from tvgov.errors import AuditConfigError
from tvgov.evidence import NoiseProfile, pair, run_synthetic_evaluator
from tvgov.gate import CiMethod, Decision, adjudicate
from tvgov.space import feasible_set
from tvgov.stats import derived_seed
from tvgov.tvl.canonical import doc_hash
from tvgov.tvl.model import EvaluationSetRef, TvlDocument


@dataclass(frozen=True)
class AuditConfig:
    true_effects: tuple[float, ...]
    n_items: int
    trials: int
    seed: int
    base_quality: float = 0.8
    safety_rates: Mapping[str, float] = None  # keyed by constraint test name
    effect_objective: str = "quality"
    paired_streams: bool = True
    bootstrap_resamples: int = 10_000
    method: CiMethod = CiMethod.BOOTSTRAP_PERCENTILE

    def __post_init__(self):
        if self.safety_rates is None:
            object.__setattr__(self, "safety_rates", {})
        if self.trials < 1:
            raise AuditConfigError(f"trials must be >= 1, got {self.trials}")
        if self.n_items < 2:
            raise AuditConfigError(f"n items must be >= 2, got {self.n_items}")
        if not self.true_effects:
            raise AuditConfigError("true-effect grid is empty")
        if not 0.0 <= self.base_quality <= 1.0:
            raise AuditConfigError(
                f"base quality {self.base_quality} outside [0, 1]"
            )
        for effect in self.true_effects:
            if not 0.0 <= self.base_quality + effect <= 1.0:
                raise AuditConfigError(
                    f"base quality + effect {self.base_quality + effect} "
                    f"outside [0, 1]"
                )

    @classmethod
    def from_plain(cls, raw: object) -> "AuditConfig":
        if not isinstance(raw, dict):
            raise AuditConfigError("audit config must be an object")
        known = {
            "true_effects", "n_items", "trials", "seed", "base_quality",
            "safety_rates", "effect_objective", "paired_streams",
            "bootstrap_resamples", "method",
        }
        unknown = set(raw) - known
        if unknown:
            raise AuditConfigError(f"unknown config fields {sorted(unknown)}")
        for key in ("true_effects", "n_items", "trials", "seed"):
            if key not in raw:
                raise AuditConfigError(f"missing config field '{key}'")
        try:
            return cls(
                true_effects=tuple(float(x) for x in raw["true_effects"]),
                n_items=int(raw["n_items"]),
                trials=int(raw["trials"]),
                seed=int(raw["seed"]),
                base_quality=float(raw.get("base_quality", 0.8)),
                safety_rates={
                    str(k): float(v)
                    for k, v in raw.get("safety_rates", {}).items()
                },
                effect_objective=str(raw.get("effect_objective", "quality")),
                paired_streams=bool(raw.get("paired_streams", True)),
                bootstrap_resamples=int(raw.get("bootstrap_resamples", 10_000)),
                method=CiMethod(raw.get("method", "bootstrap-percentile")),
            )
        except (TypeError, ValueError) as exc:
            raise AuditConfigError(f"malformed audit config: {exc}") from exc

    @classmethod
    def load(cls, path: Path | str) -> "AuditConfig":
        return cls.from_plain(json.loads(Path(path).read_text(encoding="utf-8")))


# Location/scale used for every non-effect objective measure; identical on
# both sides so the effect objective is the only systematic difference.
_DEFAULT_LOGNORMAL = {"location": -4.0, "scale": 0.25}


def _profile_for(doc: TvlDocument, config: AuditConfig, quality_p: float) -> NoiseProfile:
    effect_measure = doc.objective(config.effect_objective).measure
    objectives: dict = {}
    for objective in doc.objectives:
        if objective.measure == effect_measure:
            objectives[objective.measure] = {"kind": "bernoulli", "p": quality_p}
        elif objective.measure not in objectives:
            objectives[objective.measure] = {
                "kind": "lognormal", **_DEFAULT_LOGNORMAL
            }
    safety = {
        spec.test: {"default": config.safety_rates.get(spec.test, 0.0)}
        for spec in doc.policy.chance_constraints
    }
    return NoiseProfile.from_plain({"objectives": objectives, "safety": safety})


def run_audit(doc: TvlDocument, config: AuditConfig) -> dict:
    """Simulate the gate's operating characteristics; returns a plain report."""
    if config.effect_objective not in doc.objective_names:
        raise AuditConfigError(
            f"effect objective '{config.effect_objective}' is not declared"
        )
    items = tuple(f"audit-{i:06d}" for i in range(config.n_items))
    evaluation_set = EvaluationSetRef(
        dataset_id="audit-synthetic", seed=config.seed, item_ids=items
    )
    fs = feasible_set(doc)
    if len(fs) == 0:
        raise AuditConfigError("document has an empty feasible set")
    incumbent = fs.assignments[0]
    candidate = fs.assignments[1] if len(fs) > 1 else fs.assignments[0]

    cells = []
    for cell_index, effect in enumerate(config.true_effects):
        incumbent_profile = _profile_for(doc, config, config.base_quality)
        candidate_profile = _profile_for(
            doc, config, config.base_quality + effect
        )
        counts = {Decision.PASS: 0, Decision.DEFER: 0, Decision.FAIL: 0}
        for trial in range(config.trials):
            seed_inc = derived_seed(config.seed, "cell", str(cell_index),
                                    "trial", str(trial), "incumbent")
            if config.paired_streams:
                seed_cand = seed_inc
            else:
                seed_cand = derived_seed(config.seed, "cell", str(cell_index),
                                         "trial", str(trial), "candidate")
            inc_matrix = run_synthetic_evaluator(
                incumbent, evaluation_set, incumbent_profile, seed_inc
            )
            cand_matrix = run_synthetic_evaluator(
                candidate, evaluation_set, candidate_profile, seed_cand
            )
            decision = adjudicate(
                doc,
                pair(inc_matrix, cand_matrix),
                seed=derived_seed(config.seed, "cell", str(cell_index),
                                  "trial", str(trial), "gate"),
                method=config.method,
                b=config.bootstrap_resamples,
            )
            counts[decision.decision] += 1
        cells.append(
            {
                "true_effect": effect,
                "trials": config.trials,
                "pass": counts[Decision.PASS],
                "defer": counts[Decision.DEFER],
                "fail": counts[Decision.FAIL],
                "pass_rate": counts[Decision.PASS] / config.trials,
                "defer_rate": counts[Decision.DEFER] / config.trials,
                "fail_rate": counts[Decision.FAIL] / config.trials,
            }
        )

    return {
        "tvl_hash": doc_hash(doc),
        "config": {
            "true_effects": list(config.true_effects),
            "n_items": config.n_items,
            "trials": config.trials,
            "seed": config.seed,
            "base_quality": config.base_quality,
            "safety_rates": dict(config.safety_rates),
            "effect_objective": config.effect_objective,
            "paired_streams": config.paired_streams,
            "bootstrap_resamples": config.bootstrap_resamples,
            "method": config.method.value,
        },
        "policy": {
            "alpha": doc.policy.alpha,
            "min_effect": dict(doc.policy.min_effect),
            "epsilon": dict(doc.policy.epsilon),
        },
        "cells": cells,
    }
