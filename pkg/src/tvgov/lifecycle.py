"""Governance-state versioning: snapshots, diffs, trigger actions, fallback
selection, and an append-only hash-chained state log with rollback.

A state bundles the declaration document (whose embedded environment IS the
live snapshot, re-resolved at build time), eligibility rules, the
evaluation-set manifest hash, the incumbent, and a review schedule. The
content hash covers every component except version and parent linkage, so
equal content always hashes equally regardless of position in the chain.

The log is a directory of numbered JSON files plus a HEAD pointer; appends
take an exclusive file lock and verify the parent hash, so concurrent writers
are detected rather than silently interleaved. Rollback appends a copy of an
older version; history is never rewritten.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from filelock import FileLock

from tvgov.errors import LifecycleError, LogConflictError, LogCorruptionError
from tvgov.evidence import EvidenceSummary
from tvgov.space import (
    Assignment,
    EligibilityRule,
    FeasibleSet,
    eligibility_rule_from_plain,
)
from tvgov.tvl.canonical import (
    canonical_json_bytes,
    document_to_plain,
    sha256_hex,
)
from tvgov.tvl.model import (
    Direction,
    EnvironmentSnapshot,
    TvlDocument,
    document_from_plain,
    rebind_environment,
)

COMPONENT_DOMAINS = "D"
COMPONENT_STRUCTURAL = "C_s"
COMPONENT_ELIGIBILITY = "E"
COMPONENT_EVALUATION_SET = "S"
COMPONENT_GATE = "G"
COMPONENT_INCUMBENT = "incumbent"
COMPONENT_REVIEW = "review"


class ActionKind(str, Enum):
    CANDIDATE_SEARCH = "candidate-search"
    FALLBACK_REQUIRED = "fallback-required"
    REEVALUATE_INCUMBENT_FIRST = "reevaluate-incumbent-first"
    READJUDICATE_UNDER_NEW_POLICY = "readjudicate-under-new-policy"
    SCHEDULED_REVIEW = "scheduled-review"
    DRIFT_REVIEW = "drift-review"


@dataclass(frozen=True)
class TriggerAction:
    kind: ActionKind
    rationale: str

    def to_plain(self) -> dict:
        return {"kind": self.kind.value, "rationale": self.rationale}


@dataclass(frozen=True)
class GovernanceState:
    version: int
    doc: TvlDocument
    eligibility_rules: tuple[EligibilityRule, ...]
    manifest_hash: str | None
    incumbent_id: str | None
    review_epochs: Mapping[str, object] | None
    content_hash: str
    parent_hash: str | None

    @property
    def environment(self) -> EnvironmentSnapshot:
        return self.doc.environment

    def components_plain(self) -> dict:
        """Hash basis: every component except version/parent linkage."""
        return {
            "doc": document_to_plain(self.doc),
            "eligibility_rules": [r.to_plain() for r in self.eligibility_rules],
            "manifest_hash": self.manifest_hash,
            "incumbent": self.incumbent_id,
            "review_epochs": dict(self.review_epochs) if self.review_epochs else None,
        }

    def to_plain(self) -> dict:
        out = self.components_plain()
        out["version"] = self.version
        out["parent_hash"] = self.parent_hash
        out["content_hash"] = self.content_hash
        return out

    @classmethod
    def from_plain(cls, raw: dict) -> "GovernanceState":
        doc = document_from_plain(raw["doc"])
        state = cls(
            version=int(raw["version"]),
            doc=doc,
            eligibility_rules=tuple(
                eligibility_rule_from_plain(r) for r in raw["eligibility_rules"]
            ),
            manifest_hash=raw.get("manifest_hash"),
            incumbent_id=raw.get("incumbent"),
            review_epochs=raw.get("review_epochs"),
            content_hash=raw["content_hash"],
            parent_hash=raw.get("parent_hash"),
        )
        return state


def hash_state_components(
    doc: TvlDocument,
    eligibility_rules: Sequence[EligibilityRule],
    manifest_hash: str | None,
    incumbent_id: str | None,
    review_epochs: Mapping[str, object] | None,
) -> str:
    plain = {
        "doc": document_to_plain(doc),
        "eligibility_rules": [r.to_plain() for r in eligibility_rules],
        "manifest_hash": manifest_hash,
        "incumbent": incumbent_id,
        "review_epochs": dict(review_epochs) if review_epochs else None,
    }
    return sha256_hex(canonical_json_bytes(plain))


def hash_state(state: GovernanceState) -> str:
    """Recompute the collision-resistant content digest of a state."""
    return sha256_hex(canonical_json_bytes(state.components_plain()))


def build_state(
    doc: TvlDocument,
    environment: EnvironmentSnapshot | None = None,
    eligibility_rules: Sequence[EligibilityRule] = (),
    manifest_hash: str | None = None,
    incumbent_id: str | None = None,
    review_epochs: Mapping[str, object] | None = None,
    parent_hash: str | None = None,
    version: int = 0,
) -> GovernanceState:
    """Assemble a state; referenced domains are re-resolved against the live
    environment so the stored document is its own source of truth."""
    if environment is not None:
        doc = rebind_environment(doc, environment)
    content = hash_state_components(
        doc, eligibility_rules, manifest_hash, incumbent_id, review_epochs
    )
    return GovernanceState(
        version=version,
        doc=doc,
        eligibility_rules=tuple(eligibility_rules),
        manifest_hash=manifest_hash,
        incumbent_id=incumbent_id,
        review_epochs=review_epochs,
        content_hash=content,
        parent_hash=parent_hash,
    )


# -- diffs ---------------------------------------------------------------------


@dataclass(frozen=True)
class DomainDelta:
    added: Mapping[str, tuple[str, ...]]  # variable -> rendered values
    removed: Mapping[str, tuple[str, ...]]
    added_variables: tuple[str, ...] = ()
    removed_variables: tuple[str, ...] = ()

    @property
    def expanded(self) -> bool:
        return bool(self.added or self.added_variables)

    @property
    def narrowed(self) -> bool:
        return bool(self.removed or self.removed_variables)


@dataclass(frozen=True)
class EnvironmentDelta:
    list_added: Mapping[str, tuple[str, ...]]
    list_removed: Mapping[str, tuple[str, ...]]
    caps_changed: Mapping[str, tuple[float | None, float | None]]
    rules_changed: bool

    @property
    def narrowed(self) -> bool:
        if self.list_removed or self.rules_changed:
            return True
        for old, new in self.caps_changed.values():
            if old is not None and new is not None and new < old:
                return True
            if old is None and new is not None:
                return True  # a new cap constrains previously-unbounded cost
        return False


@dataclass(frozen=True)
class EvaluationSetDelta:
    dataset_changed: bool
    seed_changed: bool
    manifest_changed: bool


@dataclass(frozen=True)
class StateDiff:
    changed_components: frozenset[str]
    domain_delta: DomainDelta | None = None
    environment_delta: EnvironmentDelta | None = None
    evaluation_set_delta: EvaluationSetDelta | None = None
    structural_changed: bool = False
    gate_changed: bool = False
    incumbent_changed: bool = False
    review_changed: bool = False
    meta_changed: bool = False  # document metadata outside the component set

    @property
    def is_empty(self) -> bool:
        return not self.changed_components and not self.meta_changed

    def describe(self) -> list[str]:
        lines = []
        if self.is_empty:
            return ["no changes"]
        if self.domain_delta is not None:
            for var, values in self.domain_delta.added.items():
                lines.append(f"D: domain of '{var}' expanded (+{', '.join(values)})")
            for var, values in self.domain_delta.removed.items():
                lines.append(f"D: domain of '{var}' narrowed (-{', '.join(values)})")
            for var in self.domain_delta.added_variables:
                lines.append(f"D: variable '{var}' added")
            for var in self.domain_delta.removed_variables:
                lines.append(f"D: variable '{var}' removed")
        if self.structural_changed:
            lines.append("C_s: structural rules changed")
        if self.environment_delta is not None:
            for name, values in self.environment_delta.list_added.items():
                lines.append(f"E: list '{name}' gained {', '.join(values)}")
            for name, values in self.environment_delta.list_removed.items():
                lines.append(f"E: list '{name}' lost {', '.join(values)}")
            for name, (old, new) in self.environment_delta.caps_changed.items():
                lines.append(f"E: cap '{name}' changed {old} -> {new}")
            if self.environment_delta.rules_changed:
                lines.append("E: eligibility rules changed")
        if self.evaluation_set_delta is not None:
            if self.evaluation_set_delta.dataset_changed:
                lines.append("S: dataset id changed")
            if self.evaluation_set_delta.seed_changed:
                lines.append("S: sampling seed changed")
            if self.evaluation_set_delta.manifest_changed:
                lines.append("S: item manifest changed")
        if self.gate_changed:
            lines.append("G: objectives or promotion policy changed")
        if self.incumbent_changed:
            lines.append("incumbent: changed")
        if self.review_changed:
            lines.append("review: schedule changed")
        if self.meta_changed:
            lines.append("meta: document metadata changed")
        return lines


def _render_domain(var) -> tuple[str, ...]:
    from tvgov.tvl.model import render_value

    return tuple(render_value(v) for v in var.values)


def diff_states(a: GovernanceState, b: GovernanceState) -> StateDiff:
    """Component-wise comparison; symmetric in the set of changed components."""
    changed: set[str] = set()

    vars_a = {v.name: v for v in a.doc.tvars}
    vars_b = {v.name: v for v in b.doc.tvars}
    added_values: dict[str, tuple[str, ...]] = {}
    removed_values: dict[str, tuple[str, ...]] = {}
    for name in vars_a.keys() & vars_b.keys():
        da, db = set(_render_domain(vars_a[name])), set(_render_domain(vars_b[name]))
        gained = tuple(sorted(db - da))
        lost = tuple(sorted(da - db))
        if gained:
            added_values[name] = gained
        if lost:
            removed_values[name] = lost
    domain_delta = DomainDelta(
        added=added_values,
        removed=removed_values,
        added_variables=tuple(sorted(vars_b.keys() - vars_a.keys())),
        removed_variables=tuple(sorted(vars_a.keys() - vars_b.keys())),
    )
    if domain_delta.expanded or domain_delta.narrowed:
        changed.add(COMPONENT_DOMAINS)

    structural_changed = a.doc.structural_rules != b.doc.structural_rules
    if structural_changed:
        changed.add(COMPONENT_STRUCTURAL)

    env_a, env_b = a.environment, b.environment
    list_added: dict[str, tuple[str, ...]] = {}
    list_removed: dict[str, tuple[str, ...]] = {}
    for name in set(env_a.lists) | set(env_b.lists):
        la = set(env_a.lists.get(name, ()))
        lb = set(env_b.lists.get(name, ()))
        if lb - la:
            list_added[name] = tuple(sorted(lb - la))
        if la - lb:
            list_removed[name] = tuple(sorted(la - lb))
    caps_changed: dict[str, tuple[float | None, float | None]] = {}
    for name in set(env_a.caps) | set(env_b.caps):
        old, new = env_a.caps.get(name), env_b.caps.get(name)
        if old != new:
            caps_changed[name] = (old, new)
    rules_changed = [r.to_plain() for r in a.eligibility_rules] != [
        r.to_plain() for r in b.eligibility_rules
    ]
    environment_delta = EnvironmentDelta(
        list_added=list_added,
        list_removed=list_removed,
        caps_changed=caps_changed,
        rules_changed=rules_changed,
    )
    if list_added or list_removed or caps_changed or rules_changed:
        changed.add(COMPONENT_ELIGIBILITY)

    es_a, es_b = a.doc.evaluation_set, b.doc.evaluation_set
    evaluation_set_delta = EvaluationSetDelta(
        dataset_changed=es_a.dataset_id != es_b.dataset_id,
        seed_changed=es_a.seed != es_b.seed,
        manifest_changed=(
            a.manifest_hash != b.manifest_hash
            or es_a.item_ids != es_b.item_ids
        ),
    )
    if (
        evaluation_set_delta.dataset_changed
        or evaluation_set_delta.seed_changed
        or evaluation_set_delta.manifest_changed
    ):
        changed.add(COMPONENT_EVALUATION_SET)

    gate_changed = (
        a.doc.objectives != b.doc.objectives or a.doc.policy != b.doc.policy
    )
    if gate_changed:
        changed.add(COMPONENT_GATE)

    incumbent_changed = a.incumbent_id != b.incumbent_id
    if incumbent_changed:
        changed.add(COMPONENT_INCUMBENT)

    review_changed = (a.review_epochs or None) != (b.review_epochs or None)
    if review_changed:
        changed.add(COMPONENT_REVIEW)

    meta_changed = a.doc.module_name != b.doc.module_name

    return StateDiff(
        changed_components=frozenset(changed),
        domain_delta=domain_delta if COMPONENT_DOMAINS in changed else None,
        environment_delta=(
            environment_delta if COMPONENT_ELIGIBILITY in changed else None
        ),
        evaluation_set_delta=(
            evaluation_set_delta if COMPONENT_EVALUATION_SET in changed else None
        ),
        structural_changed=structural_changed,
        gate_changed=gate_changed,
        incumbent_changed=incumbent_changed,
        review_changed=review_changed,
        meta_changed=meta_changed,
    )


def required_actions(
    diff: StateDiff,
    feasibility_now: FeasibleSet,
    incumbent: Assignment | None,
    epoch_reached: bool = False,
    drift: bool = False,
) -> tuple[TriggerAction, ...]:
    """Map a state diff (plus schedule/drift flags) to re-evaluation actions,
    in fixed component order. Feasibility must be computed under the NEW
    state."""
    actions: list[TriggerAction] = []

    if diff.domain_delta is not None and diff.domain_delta.expanded:
        detail = ", ".join(
            sorted(
                list(diff.domain_delta.added)
                + list(diff.domain_delta.added_variables)
            )
        )
        actions.append(
            TriggerAction(
                ActionKind.CANDIDATE_SEARCH,
                f"domains expanded ({detail}): incumbent remains valid in the "
                f"existing subspace; candidates may exploit enlarged domains",
            )
        )

    narrowing = (
        (diff.environment_delta is not None and diff.environment_delta.narrowed)
        or diff.structural_changed
        or (diff.domain_delta is not None and diff.domain_delta.narrowed)
    )
    if narrowing:
        if incumbent is None:
            actions.append(
                TriggerAction(
                    ActionKind.FALLBACK_REQUIRED,
                    "no incumbent; bootstrap selection required",
                )
            )
        elif not feasibility_now.contains_id(incumbent.assignment_id):
            actions.append(
                TriggerAction(
                    ActionKind.FALLBACK_REQUIRED,
                    f"incumbent {incumbent.assignment_id!r} is no longer "
                    f"feasible under the tightened state; a compliant fallback "
                    f"is required",
                )
            )

    if COMPONENT_EVALUATION_SET in diff.changed_components:
        if incumbent is None:
            rationale = "no incumbent; bootstrap selection required"
        else:
            rationale = (
                "evaluation set changed: re-evaluate the incumbent before any "
                "candidate comparison"
            )
        actions.append(
            TriggerAction(ActionKind.REEVALUATE_INCUMBENT_FIRST, rationale)
        )

    if COMPONENT_GATE in diff.changed_components:
        actions.append(
            TriggerAction(
                ActionKind.READJUDICATE_UNDER_NEW_POLICY,
                "gate policy changed: re-adjudicate existing evidence under "
                "the new policy before new search begins (fixed action order; "
                "emitted after any evaluation-set action by convention)",
            )
        )

    if epoch_reached:
        actions.append(
            TriggerAction(
                ActionKind.SCHEDULED_REVIEW, "scheduled review epoch reached"
            )
        )
    if drift:
        actions.append(
            TriggerAction(
                ActionKind.DRIFT_REVIEW,
                "operator-reported monitoring drift with no artifact edit",
            )
        )
    return tuple(actions)


def select_fallback(
    fs: FeasibleSet,
    history: Mapping[str, EvidenceSummary],
    doc: TvlDocument,
) -> Assignment:
    """Deterministic compliant fallback.

    Among feasible assignments with recorded history, best by
    direction-normalized tie-breaker means (then assignment id); with no
    history anywhere, the lexicographically smallest assignment id.
    """
    if len(fs) == 0:
        raise LifecycleError("no compliant fallback exists: feasible set is empty")
    with_history = [
        a for a in fs.assignments if a.assignment_id in history
    ]
    if not with_history:
        return min(fs.assignments, key=lambda a: a.assignment_id)

    def key(a: Assignment):
        summary = history[a.assignment_id]
        parts = []
        for name in doc.policy.tie_breakers:
            objective = doc.objective(name)
            mean = summary.objective_means[name]
            normalized = mean if objective.direction is Direction.MAXIMIZE else -mean
            parts.append(-normalized)  # better first
        return (tuple(parts), a.assignment_id)

    return min(with_history, key=key)


# -- append-only state log -------------------------------------------------------


class StateLog:
    """Directory-backed append-only log: `NNNNNN.json` files plus `HEAD`."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.directory / ".lock"))

    def _state_path(self, version: int) -> Path:
        return self.directory / f"{version:06d}.json"

    @property
    def head_path(self) -> Path:
        return self.directory / "HEAD"

    def head(self) -> tuple[int, str] | None:
        if not self.head_path.exists():
            return None
        raw = json.loads(self.head_path.read_text(encoding="utf-8"))
        return int(raw["version"]), str(raw["content_hash"])

    def read(self, version: int) -> GovernanceState:
        path = self._state_path(version)
        if not path.exists():
            raise LifecycleError(f"no state version {version} in {self.directory}")
        state = GovernanceState.from_plain(
            json.loads(path.read_text(encoding="utf-8"))
        )
        return state

    def append(self, state: GovernanceState) -> int:
        """Append a state whose parent_hash matches the current head.

        The log assigns the version; prior versions are immutable.
        """
        with self._lock:
            head = self.head()
            if head is None:
                if state.parent_hash is not None:
                    raise LogConflictError(
                        "parent mismatch: log is empty but state has a parent"
                    )
                version = 0
            else:
                head_version, head_hash = head
                if state.parent_hash != head_hash:
                    raise LogConflictError(
                        f"parent mismatch: expected {head_hash}, got "
                        f"{state.parent_hash!r} (concurrent writer?)"
                    )
                version = head_version + 1
            stamped = replace(state, version=version)
            path = self._state_path(version)
            if path.exists():
                raise LogCorruptionError(
                    f"state file {path.name} already exists ahead of HEAD"
                )
            tmp = path.with_suffix(".json.tmp")
            tmp.write_bytes(canonical_json_bytes(stamped.to_plain()))
            tmp.rename(path)
            head_tmp = self.head_path.with_suffix(".tmp")
            head_tmp.write_bytes(
                canonical_json_bytes(
                    {"version": version, "content_hash": stamped.content_hash}
                )
            )
            head_tmp.rename(self.head_path)
            return version

    def verify(self) -> list[str]:
        """Replay the chain from genesis; return all integrity violations."""
        issues: list[str] = []
        head = self.head()
        if head is None:
            files = sorted(self.directory.glob("[0-9]*.json"))
            if files:
                issues.append("HEAD missing but state files exist")
            return issues
        head_version, head_hash = head
        previous_hash: str | None = None
        for version in range(head_version + 1):
            path = self._state_path(version)
            if not path.exists():
                issues.append(f"missing state file for version {version}")
                previous_hash = None
                continue
            try:
                state = GovernanceState.from_plain(
                    json.loads(path.read_text(encoding="utf-8"))
                )
            except Exception as exc:  # corrupt content is an integrity issue
                issues.append(f"version {version}: unreadable state ({exc})")
                previous_hash = None
                continue
            if state.version != version:
                issues.append(
                    f"version {version}: file records version {state.version}"
                )
            recomputed = hash_state(state)
            if recomputed != state.content_hash:
                issues.append(
                    f"version {version}: content hash mismatch "
                    f"(stored {state.content_hash[:12]}..., "
                    f"recomputed {recomputed[:12]}...)"
                )
            if version == 0:
                if state.parent_hash is not None:
                    issues.append("version 0: genesis must have no parent")
            elif previous_hash is not None and state.parent_hash != previous_hash:
                issues.append(f"version {version}: broken parent link")
            previous_hash = state.content_hash
        if previous_hash is not None and previous_hash != head_hash:
            issues.append("HEAD hash does not match the last state")
        extra = [
            p.name
            for p in sorted(self.directory.glob("[0-9]*.json"))
            if int(p.stem) > head_version
        ]
        for name in extra:
            issues.append(f"state file {name} beyond HEAD")
        return issues

    def rollback(self, to_version: int) -> int:
        """Adopt an older version's content by appending, never rewriting."""
        head = self.head()
        if head is None:
            raise LifecycleError("cannot roll back an empty log")
        old = self.read(to_version)
        restored = replace(old, parent_hash=head[1])
        return self.append(restored)
