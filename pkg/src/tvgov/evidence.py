"""Per-item evaluation evidence: production, loading, pairing, and summaries.

Evidence files are JSON Lines with fields exactly `assignment_id`, `item_id`,
`objectives` (object), `safety` (object), and optional `meta` (object).

The synthetic evaluator draws every value from a counter-style uniform keyed
by (seed, column, item), NOT by assignment, so two assignments evaluated with
the same seed share per-item randomness (common random numbers). Distinct
seeds give independent streams.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from tvgov.errors import EvaluatorError, EvidenceError, ProfileError
from tvgov.space import Assignment
from tvgov.stats import counter_uniform
from tvgov.tvl.canonical import canonical_json_bytes
from tvgov.tvl.model import EvaluationSetRef, Objective, TvlDocument

_RECORD_FIELDS = {"assignment_id", "item_id", "objectives", "safety", "meta"}


@dataclass(frozen=True)
class EvidenceRecord:
    assignment_id: str
    item_id: str
    objective_values: Mapping[str, float]
    safety_indicators: Mapping[str, int]
    meta: Mapping[str, object] = field(default_factory=dict)

    def to_plain(self) -> dict:
        out = {
            "assignment_id": self.assignment_id,
            "item_id": self.item_id,
            "objectives": dict(self.objective_values),
            "safety": dict(self.safety_indicators),
        }
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_plain(cls, raw: object, context: str = "") -> "EvidenceRecord":
        where = f" ({context})" if context else ""
        if not isinstance(raw, dict):
            raise EvidenceError(f"evidence record must be an object{where}")
        unknown = set(raw) - _RECORD_FIELDS
        if unknown:
            raise EvidenceError(
                f"unknown evidence fields {sorted(unknown)}{where}"
            )
        for key in ("assignment_id", "item_id", "objectives", "safety"):
            if key not in raw:
                raise EvidenceError(f"evidence record misses '{key}'{where}")
        objectives = raw["objectives"]
        safety = raw["safety"]
        if not isinstance(objectives, dict) or not isinstance(safety, dict):
            raise EvidenceError(f"objectives/safety must be objects{where}")
        values: dict[str, float] = {}
        for name, value in objectives.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise EvidenceError(
                    f"objective '{name}' must be numeric, got {value!r}{where}"
                )
            values[str(name)] = float(value)
        indicators: dict[str, int] = {}
        for name, value in safety.items():
            if value not in (0, 1, 0.0, 1.0) or isinstance(value, bool):
                raise EvidenceError(
                    f"safety indicator '{name}' must be 0 or 1, got {value!r}{where}"
                )
            indicators[str(name)] = int(value)
        meta = raw.get("meta", {})
        if not isinstance(meta, dict):
            raise EvidenceError(f"meta must be an object{where}")
        return cls(
            assignment_id=str(raw["assignment_id"]),
            item_id=str(raw["item_id"]),
            objective_values=values,
            safety_indicators=indicators,
            meta=meta,
        )


class EvidenceMatrix:
    """All per-item records for one assignment over one evaluation set.

    Immutable once built; records are kept in insertion order and indexed by
    item id.
    """

    def __init__(
        self,
        assignment_id: str,
        records: Sequence[EvidenceRecord],
        evaluation_set: EvaluationSetRef,
    ):
        by_item: dict[str, EvidenceRecord] = {}
        for record in records:
            if record.assignment_id != assignment_id:
                raise EvidenceError(
                    f"record for {record.assignment_id!r} in matrix for "
                    f"{assignment_id!r}"
                )
            if record.item_id in by_item:
                raise EvidenceError(f"duplicate item {record.item_id!r}")
            by_item[record.item_id] = record
        if evaluation_set.resolved:
            unknown = set(by_item) - set(evaluation_set.item_ids)
            if unknown:
                raise EvidenceError(
                    f"item not in evaluation set: {sorted(unknown)[0]!r}"
                )
        self.assignment_id = assignment_id
        self.records: tuple[EvidenceRecord, ...] = tuple(records)
        self.evaluation_set = evaluation_set
        self._by_item = by_item

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, EvidenceMatrix)
            and self.assignment_id == other.assignment_id
            and self.records == other.records
            and self.evaluation_set == other.evaluation_set
        )

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(r.item_id for r in self.records)

    def record(self, item_id: str) -> EvidenceRecord:
        try:
            return self._by_item[item_id]
        except KeyError:
            raise EvidenceError(f"no record for item {item_id!r}") from None

    def validate_coverage(
        self, measures: Sequence[str], tests: Sequence[str]
    ) -> None:
        """Check every record covers all declared measures and safety tests."""
        for record in self.records:
            for measure in measures:
                if measure not in record.objective_values:
                    raise EvidenceError(
                        f"missing measure: {measure} (item {record.item_id!r})"
                    )
            for test in tests:
                if test not in record.safety_indicators:
                    raise EvidenceError(
                        f"missing safety indicator: {test} "
                        f"(item {record.item_id!r})"
                    )


@dataclass(frozen=True)
class PairedEvidence:
    incumbent: EvidenceMatrix
    candidate: EvidenceMatrix
    common_items: tuple[str, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvidenceSummary:
    objective_means: Mapping[str, float]
    safety_rates: Mapping[str, float]
    n_items: int

    def to_plain(self) -> dict:
        return {
            "objective_means": dict(self.objective_means),
            "safety_rates": dict(self.safety_rates),
            "n_items": self.n_items,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "EvidenceSummary":
        return cls(
            objective_means=dict(raw["objective_means"]),
            safety_rates=dict(raw["safety_rates"]),
            n_items=int(raw["n_items"]),
        )


# -- noise profiles -----------------------------------------------------------


def _parse_selector(text: str) -> tuple[tuple[str, str], ...]:
    clauses = []
    for clause in text.split(";"):
        if "=" not in clause:
            raise ProfileError(f"malformed selector clause {clause!r}")
        name, _, value = clause.partition("=")
        clauses.append((name.strip(), value.strip()))
    return tuple(clauses)


@dataclass(frozen=True)
class ParamSpec:
    """Scalar parameter, optionally varying by assignment feature.

    A selector key like "model=gpt-5.4" (clauses joined with ';') matches when
    every clause holds for the assignment; the most specific match wins. With
    no match the default applies; without a default the profile cannot cover
    the assignment and resolution fails.
    """

    default: float | None
    selectors: tuple[tuple[tuple[tuple[str, str], ...], float], ...] = ()

    @classmethod
    def from_plain(cls, raw: object, path: str) -> "ParamSpec":
        if isinstance(raw, bool):
            raise ProfileError(f"{path}: expected a number or selector map")
        if isinstance(raw, (int, float)):
            return cls(default=float(raw))
        if not isinstance(raw, dict):
            raise ProfileError(f"{path}: expected a number or selector map")
        default: float | None = None
        selectors = []
        for key, value in raw.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ProfileError(f"{path}.{key}: expected a number")
            if key == "default":
                default = float(value)
            else:
                selectors.append((_parse_selector(key), float(value)))
        return cls(default=default, selectors=tuple(selectors))

    def resolve(self, assignment: Assignment, path: str) -> float:
        from tvgov.tvl.model import render_value

        bindings = {
            name: render_value(value) for name, value in assignment.bindings
        }
        best: tuple[int, float] | None = None
        ambiguous = False
        for clauses, value in self.selectors:
            if all(bindings.get(name) == want for name, want in clauses):
                rank = len(clauses)
                if best is None or rank > best[0]:
                    best, ambiguous = (rank, value), False
                elif rank == best[0] and value != best[1]:
                    ambiguous = True
        if ambiguous:
            raise ProfileError(
                f"{path}: ambiguous selectors for assignment "
                f"{assignment.assignment_id!r}"
            )
        if best is not None:
            return best[1]
        if self.default is not None:
            return self.default
        raise ProfileError(
            f"{path}: profile has no entry covering assignment "
            f"{assignment.assignment_id!r}"
        )


@dataclass(frozen=True)
class ObjectiveNoise:
    kind: str  # bernoulli | lognormal | constant
    params: Mapping[str, ParamSpec]

    @classmethod
    def from_plain(cls, raw: object, path: str) -> "ObjectiveNoise":
        if not isinstance(raw, dict) or "kind" not in raw:
            raise ProfileError(f"{path}: expected an object with a 'kind'")
        kind = raw["kind"]
        wanted = {
            "bernoulli": {"p"},
            "lognormal": {"location", "scale"},
            "constant": {"value"},
        }.get(kind)
        if wanted is None:
            raise ProfileError(f"{path}.kind: unknown kind {kind!r}")
        extra = set(raw) - wanted - {"kind"}
        if extra:
            raise ProfileError(f"{path}: unknown parameters {sorted(extra)}")
        params = {}
        for name in wanted:
            if name not in raw:
                raise ProfileError(f"{path}: missing parameter '{name}'")
            params[name] = ParamSpec.from_plain(raw[name], f"{path}.{name}")
        return cls(kind=kind, params=params)


@dataclass(frozen=True)
class NoiseProfile:
    """True data-generating parameters for the synthetic evaluator."""

    objectives: Mapping[str, ObjectiveNoise]  # keyed by measure name
    safety: Mapping[str, ParamSpec]  # violation rate keyed by test name

    @classmethod
    def from_plain(cls, raw: object) -> "NoiseProfile":
        if not isinstance(raw, dict):
            raise ProfileError("profile must be an object")
        unknown = set(raw) - {"objectives", "safety"}
        if unknown:
            raise ProfileError(f"unknown profile sections {sorted(unknown)}")
        objectives = {
            str(name): ObjectiveNoise.from_plain(spec, f"objectives.{name}")
            for name, spec in raw.get("objectives", {}).items()
        }
        safety = {
            str(name): ParamSpec.from_plain(spec, f"safety.{name}")
            for name, spec in raw.get("safety", {}).items()
        }
        return cls(objectives=objectives, safety=safety)

    @classmethod
    def load(cls, path: Path | str) -> "NoiseProfile":
        return cls.from_plain(json.loads(Path(path).read_text(encoding="utf-8")))


def run_synthetic_evaluator(
    c: Assignment,
    evaluation_set: EvaluationSetRef,
    profile: NoiseProfile,
    seed: int,
) -> EvidenceMatrix:
    """Generate per-item evidence from a noise profile.

    Every draw is a pure function of (seed, column, item): quality-style
    measures are Bernoulli in the profile's success probability, rates are
    Bernoulli violation indicators, and location-scale measures are lognormal
    with the normal deviate obtained from the shared uniform by inverse CDF.
    Assignments only influence the parameters, so equal parameters reproduce
    identical draws across assignments (common random numbers).
    """
    if not evaluation_set.resolved:
        raise EvidenceError("evaluation set has no resolved item list")
    records = []
    for item_id in evaluation_set.item_ids:
        values: dict[str, float] = {}
        for measure, noise in profile.objectives.items():
            if noise.kind == "bernoulli":
                p = noise.params["p"].resolve(c, f"objectives.{measure}.p")
                if not 0.0 <= p <= 1.0:
                    raise ProfileError(
                        f"objectives.{measure}.p: probability {p} outside [0, 1]"
                    )
                u = counter_uniform(seed, "obj", measure, item_id)
                values[measure] = 1.0 if u < p else 0.0
            elif noise.kind == "lognormal":
                location = noise.params["location"].resolve(
                    c, f"objectives.{measure}.location"
                )
                scale = noise.params["scale"].resolve(
                    c, f"objectives.{measure}.scale"
                )
                u = counter_uniform(seed, "obj", measure, item_id)
                z = float(ndtri(min(max(u, 1e-12), 1.0 - 1e-12)))
                values[measure] = float(np.exp(location + scale * z))
            else:  # constant
                values[measure] = noise.params["value"].resolve(
                    c, f"objectives.{measure}.value"
                )
        indicators: dict[str, int] = {}
        for test, rate_spec in profile.safety.items():
            rate = rate_spec.resolve(c, f"safety.{test}")
            if not 0.0 <= rate <= 1.0:
                raise ProfileError(f"safety.{test}: rate {rate} outside [0, 1]")
            u = counter_uniform(seed, "safety", test, item_id)
            indicators[test] = 1 if u < rate else 0
        records.append(
            EvidenceRecord(
                assignment_id=c.assignment_id,
                item_id=item_id,
                objective_values=values,
                safety_indicators=indicators,
            )
        )
    return EvidenceMatrix(c.assignment_id, records, evaluation_set)


def run_command_evaluator(
    c: Assignment,
    evaluation_set: EvaluationSetRef,
    command: Sequence[str],
    required_measures: Sequence[str] = (),
    required_tests: Sequence[str] = (),
    timeout: float | None = None,
) -> EvidenceMatrix:
    """Invoke an external evaluator once for the whole batch.

    Protocol: a JSON object {"assignment": {"assignment_id", "bindings"},
    "items": [...]} on standard input; one EvidenceRecord JSON object per line
    on standard output; nonzero exit means evaluator failure.
    """
    if not evaluation_set.resolved:
        raise EvidenceError("evaluation set has no resolved item list")
    payload = {
        "assignment": {
            "assignment_id": c.assignment_id,
            "bindings": {name: value for name, value in c.bindings},
        },
        "items": list(evaluation_set.item_ids),
    }
    try:
        proc = subprocess.run(
            list(command),
            input=json.dumps(payload).encode("utf-8"),
            capture_output=True,
            timeout=timeout,
        )
    except OSError as exc:
        raise EvaluatorError(f"cannot run evaluator {command!r}: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise EvaluatorError(f"evaluator timed out after {timeout}s") from exc
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf-8", "replace").strip()
        raise EvaluatorError(
            f"evaluator exited with status {proc.returncode}"
            + (f": {stderr}" if stderr else "")
        )
    by_item: dict[str, EvidenceRecord] = {}
    for lineno, line in enumerate(
        proc.stdout.decode("utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluatorError(f"malformed record on line {lineno}: {exc}") from exc
        record = EvidenceRecord.from_plain(raw, context=f"line {lineno}")
        if record.assignment_id != c.assignment_id:
            raise EvaluatorError(
                f"record for {record.assignment_id!r} from evaluator of "
                f"{c.assignment_id!r} (line {lineno})"
            )
        if record.item_id not in evaluation_set.item_ids:
            raise EvaluatorError(
                f"item not in evaluation set: {record.item_id!r} (line {lineno})"
            )
        if record.item_id in by_item:
            raise EvaluatorError(f"duplicate item {record.item_id!r} (line {lineno})")
        by_item[record.item_id] = record
    missing = [i for i in evaluation_set.item_ids if i not in by_item]
    if missing:
        raise EvaluatorError(f"missing item: {missing[0]!r}")
    ordered = [by_item[i] for i in evaluation_set.item_ids]
    matrix = EvidenceMatrix(c.assignment_id, ordered, evaluation_set)
    matrix.validate_coverage(required_measures, required_tests)
    return matrix


def pair(inc: EvidenceMatrix, cand: EvidenceMatrix) -> PairedEvidence:
    """Join two matrices on their common items, in canonical dataset order.

    Canonical order is the evaluation set's item list when resolved, else
    sorted item ids. Raises on dataset mismatch or empty intersection; item
    coverage asymmetry is surfaced as warnings.
    """
    if inc.evaluation_set.dataset_id != cand.evaluation_set.dataset_id:
        raise EvidenceError(
            f"dataset mismatch: {inc.evaluation_set.dataset_id!r} vs "
            f"{cand.evaluation_set.dataset_id!r}"
        )
    inc_items, cand_items = set(inc.item_ids), set(cand.item_ids)
    shared = inc_items & cand_items
    if not shared:
        raise EvidenceError("no common items between incumbent and candidate")
    if inc.evaluation_set.resolved:
        order: Sequence[str] = inc.evaluation_set.item_ids
    elif cand.evaluation_set.resolved:
        order = cand.evaluation_set.item_ids
    else:
        order = sorted(shared)
    common = tuple(i for i in order if i in shared)
    warnings = []
    only_inc = len(inc_items - cand_items)
    only_cand = len(cand_items - inc_items)
    if only_inc:
        warnings.append(f"{only_inc} incumbent item(s) lack candidate evidence")
    if only_cand:
        warnings.append(f"{only_cand} candidate item(s) lack incumbent evidence")
    return PairedEvidence(
        incumbent=inc, candidate=cand, common_items=common,
        warnings=tuple(warnings),
    )


def paired_deltas(pe: PairedEvidence, objective: Objective) -> np.ndarray:
    """Per-item direction-normalized deltas (positive = improvement)."""
    sign = objective.sign
    out = np.empty(len(pe.common_items), dtype=float)
    for i, item_id in enumerate(pe.common_items):
        inc = pe.incumbent.record(item_id)
        cand = pe.candidate.record(item_id)
        for record in (inc, cand):
            if objective.measure not in record.objective_values:
                raise EvidenceError(
                    f"missing measure: {objective.measure} "
                    f"(item {item_id!r})"
                )
        out[i] = sign * (
            cand.objective_values[objective.measure]
            - inc.objective_values[objective.measure]
        )
    return out


def paired_objective_ci(
    pe: PairedEvidence,
    objective: Objective,
    alpha: float,
    method: "CiMethod | None" = None,
    seed: int = 0,
    b: int = 10_000,
):
    """Interval for one objective's mean paired delta over the common items."""
    from tvgov.stats import CiMethod, paired_delta_ci

    return paired_delta_ci(
        paired_deltas(pe, objective),
        objective.name,
        alpha=alpha,
        method=method if method is not None else CiMethod.BOOTSTRAP_PERCENTILE,
        seed=seed,
        b=b,
    )


def violation_count(
    matrix: EvidenceMatrix, test: str, items: Sequence[str]
) -> int:
    total = 0
    for item_id in items:
        record = matrix.record(item_id)
        if test not in record.safety_indicators:
            raise EvidenceError(
                f"missing safety indicator: {test} (item {item_id!r})"
            )
        total += record.safety_indicators[test]
    return total


def summarize(matrix: EvidenceMatrix, doc: TvlDocument) -> EvidenceSummary:
    """Aggregate a matrix into objective means and safety violation rates."""
    if len(matrix) == 0:
        raise EvidenceError("cannot summarize an empty evidence matrix")
    matrix.validate_coverage(
        [o.measure for o in doc.objectives],
        [c.test for c in doc.policy.chance_constraints],
    )
    n = len(matrix)
    means = {
        obj.name: sum(r.objective_values[obj.measure] for r in matrix.records) / n
        for obj in doc.objectives
    }
    rates = {
        spec.name: sum(r.safety_indicators[spec.test] for r in matrix.records) / n
        for spec in doc.policy.chance_constraints
    }
    return EvidenceSummary(objective_means=means, safety_rates=rates, n_items=n)


# -- evidence files -----------------------------------------------------------


def save_evidence(matrix: EvidenceMatrix, path: Path | str) -> None:
    """Write JSONL evidence with canonical per-line encoding."""
    with open(path, "wb") as fh:
        for record in matrix.records:
            fh.write(canonical_json_bytes(record.to_plain()))
            fh.write(b"\n")


def load_evidence(
    path: Path | str, evaluation_set: EvaluationSetRef | None = None
) -> EvidenceMatrix:
    """Read JSONL evidence; all records must share one assignment id."""
    records = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvidenceError(
                f"{path}: malformed record on line {lineno}: {exc}"
            ) from exc
        records.append(EvidenceRecord.from_plain(raw, context=f"{path}:{lineno}"))
    if not records:
        raise EvidenceError(f"{path}: no evidence records")
    assignment_id = records[0].assignment_id
    es = evaluation_set or EvaluationSetRef(dataset_id="", seed=0)
    return EvidenceMatrix(assignment_id, records, es)
