"""Assignment space: enumeration, structural constraints, eligibility,
and the governed feasible set.

Enumeration is exhaustive up to a hard cap (default 10^7 assignments) in
deterministic lexicographic order over the declared variable order, with each
domain in its declared value order. For larger spaces a seeded
uniform-sampling mode is provided instead of exhaustive listing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from tvgov.errors import (
    EligibilityUndecidableError,
    SpaceTooLargeError,
    TvlSchemaError,
)
from tvgov.tvl.model import (
    EnvironmentSnapshot,
    StructuralRule,
    TunedVariable,
    TvlDocument,
    Value,
    coerce_value,
    render_value,
)
from tvgov.tvl.canonical import doc_hash

DEFAULT_ENUMERATION_LIMIT = 10_000_000


@dataclass(frozen=True)
class Assignment:
    """One total valuation of all tuned variables, in declaration order."""

    bindings: tuple[tuple[str, Value], ...]

    @property
    def assignment_id(self) -> str:
        return ";".join(f"{name}={render_value(value)}" for name, value in self.bindings)

    def value(self, name: str) -> Value:
        for var_name, value in self.bindings:
            if var_name == name:
                return value
        raise KeyError(name)

    def as_dict(self) -> dict[str, Value]:
        return dict(self.bindings)

    @classmethod
    def from_bindings(
        cls, doc: TvlDocument, mapping: Mapping[str, Value]
    ) -> "Assignment":
        """Build a validated total assignment in declaration order."""
        missing = [v.name for v in doc.tvars if v.name not in mapping]
        if missing:
            raise TvlSchemaError(f"assignment misses variables: {', '.join(missing)}")
        extra = [name for name in mapping if all(v.name != name for v in doc.tvars)]
        if extra:
            raise TvlSchemaError(f"assignment binds undeclared variables: {', '.join(extra)}")
        bindings = []
        for var in doc.tvars:
            value = mapping[var.name]
            if not var.contains(value):
                raise TvlSchemaError(
                    f"value {render_value(value)!r} is not in the domain of '{var.name}'"
                )
            bindings.append((var.name, value))
        return cls(bindings=tuple(bindings))

    @classmethod
    def from_id(cls, doc: TvlDocument, assignment_id: str) -> "Assignment":
        """Parse a `name=value;...` id back into a validated assignment."""
        mapping: dict[str, Value] = {}
        for clause in assignment_id.split(";"):
            if "=" not in clause:
                raise TvlSchemaError(f"malformed assignment id clause {clause!r}")
            name, _, text = clause.partition("=")
            var = doc.variable(name)
            mapping[name] = coerce_value(text, var.kind, f"assignment.{name}")
        return cls.from_bindings(doc, mapping)


@dataclass(frozen=True)
class ModelAvailabilityRule:
    """Holds iff the assignment's value for `variable` is in an environment list."""

    variable: str
    list_name: str = "models"
    kind: str = field(default="model-availability", init=False)

    def evaluate(self, c: Assignment, env: EnvironmentSnapshot) -> bool:
        if self.list_name not in env.lists:
            raise EligibilityUndecidableError(
                f"environment declares no list '{self.list_name}'"
            )
        return render_value(c.value(self.variable)) in env.lists[self.list_name]

    def to_plain(self) -> dict:
        return {"kind": self.kind, "variable": self.variable, "list": self.list_name}


@dataclass(frozen=True)
class CostCapRule:
    """Holds iff the assignment's predicted cost is within an environment cap.

    Costs come from a user-supplied table keyed by assignment id; a missing
    entry makes eligibility undecidable rather than silently false.
    """

    costs: Mapping[str, float]
    cap_name: str = "budget_usd"
    kind: str = field(default="cost-cap", init=False)

    def evaluate(self, c: Assignment, env: EnvironmentSnapshot) -> bool:
        if self.cap_name not in env.caps:
            raise EligibilityUndecidableError(
                f"environment declares no cap '{self.cap_name}'"
            )
        cost = self.costs.get(c.assignment_id)
        if cost is None:
            raise EligibilityUndecidableError(
                f"eligibility undecidable: no predicted cost for {c.assignment_id!r}"
            )
        return cost <= env.caps[self.cap_name]

    def to_plain(self) -> dict:
        return {
            "kind": self.kind,
            "cap": self.cap_name,
            "costs": dict(sorted(self.costs.items())),
        }


@dataclass(frozen=True)
class PredicateTableRule:
    """Explicit admission table keyed by assignment id."""

    table: Mapping[str, bool]
    kind: str = field(default="custom-predicate-table", init=False)

    def evaluate(self, c: Assignment, env: EnvironmentSnapshot) -> bool:
        allowed = self.table.get(c.assignment_id)
        if allowed is None:
            raise EligibilityUndecidableError(
                f"eligibility undecidable: no predicate entry for {c.assignment_id!r}"
            )
        return allowed

    def to_plain(self) -> dict:
        return {"kind": self.kind, "table": dict(sorted(self.table.items()))}


EligibilityRule = Union[ModelAvailabilityRule, CostCapRule, PredicateTableRule]


def eligibility_rule_from_plain(raw: Mapping) -> EligibilityRule:
    kind = raw.get("kind")
    if kind == "model-availability":
        return ModelAvailabilityRule(
            variable=str(raw["variable"]), list_name=str(raw.get("list", "models"))
        )
    if kind == "cost-cap":
        return CostCapRule(
            costs={str(k): float(v) for k, v in raw["costs"].items()},
            cap_name=str(raw.get("cap", "budget_usd")),
        )
    if kind == "custom-predicate-table":
        return PredicateTableRule(
            table={str(k): bool(v) for k, v in raw["table"].items()}
        )
    raise TvlSchemaError(f"unknown eligibility rule kind {kind!r}")


def availability_rules_for(doc: TvlDocument) -> tuple[ModelAvailabilityRule, ...]:
    """One availability rule per variable whose domain references an
    environment list."""
    return tuple(
        ModelAvailabilityRule(variable=v.name, list_name=v.domain_ref)
        for v in doc.tvars
        if v.domain_ref is not None
    )


def load_cost_table(path: Path | str) -> dict[str, float]:
    """Read a line-delimited `assignment_id<TAB>cost` table."""
    table: dict[str, float] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        if "\t" not in line:
            raise TvlSchemaError(
                f"line {lineno}: expected 'assignment_id<TAB>cost'", str(path)
            )
        assignment_id, _, cost_text = line.partition("\t")
        try:
            table[assignment_id.strip()] = float(cost_text)
        except ValueError:
            raise TvlSchemaError(
                f"line {lineno}: malformed cost {cost_text!r}", str(path)
            ) from None
    return table


@dataclass(frozen=True)
class FeasibleSet:
    assignments: tuple[Assignment, ...]
    source_doc_hash: str

    def __len__(self) -> int:
        return len(self.assignments)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(a.assignment_id for a in self.assignments)

    def contains_id(self, assignment_id: str) -> bool:
        return assignment_id in self.ids


def theta_size(tvars: Sequence[TunedVariable]) -> int:
    return math.prod(len(v.values) for v in tvars)


def enumerate_theta(
    doc: TvlDocument, limit: int = DEFAULT_ENUMERATION_LIMIT
) -> Iterator[Assignment]:
    """Yield the full Cartesian product in lexicographic declaration order.

    Refuses to start when |Theta| exceeds `limit`.
    """
    size = theta_size(doc.tvars)
    if size > limit:
        raise SpaceTooLargeError(
            f"space too large for exhaustive mode: |Theta| = {size} exceeds "
            f"limit {limit}"
        )
    names = [v.name for v in doc.tvars]
    for combo in itertools.product(*(v.values for v in doc.tvars)):
        yield Assignment(bindings=tuple(zip(names, combo)))


def sample_theta(doc: TvlDocument, count: int, seed: int) -> list[Assignment]:
    """Seeded uniform sampling (with replacement) for spaces above the
    exhaustive cap."""
    rng = np.random.Generator(np.random.PCG64(seed))
    names = [v.name for v in doc.tvars]
    domains = [v.values for v in doc.tvars]
    out = []
    for _ in range(count):
        combo = tuple(domain[int(rng.integers(0, len(domain)))] for domain in domains)
        out.append(Assignment(bindings=tuple(zip(names, combo))))
    return out


def check_structural(c: Assignment, rules: Sequence[StructuralRule]) -> bool:
    """True iff every implication holds (vacuously true on empty rules)."""
    values = c.as_dict()
    for rule in rules:
        if values[rule.when_var] == rule.when_value:
            if values[rule.then_var] != rule.then_value:
                return False
    return True


def check_eligibility(
    c: Assignment,
    env: EnvironmentSnapshot,
    rules: Sequence[EligibilityRule],
) -> bool:
    """True iff all eligibility rules hold. Raises when any rule is
    undecidable for this assignment (never silently false)."""
    return all(rule.evaluate(c, env) for rule in rules)


def feasible_set(
    doc: TvlDocument,
    environment: EnvironmentSnapshot | None = None,
    eligibility: Sequence[EligibilityRule] = (),
    limit: int = DEFAULT_ENUMERATION_LIMIT,
) -> FeasibleSet:
    """Assignments satisfying both the structural conjunction and all
    eligibility rules, in deterministic enumeration order.

    `environment` overrides the snapshot eligibility rules are evaluated
    against (the enumerated space stays the document's: an environment that
    excludes every model yields an empty feasible set, not an error).
    """
    env = environment if environment is not None else doc.environment
    kept = tuple(
        c
        for c in enumerate_theta(doc, limit=limit)
        if check_structural(c, doc.structural_rules)
        and check_eligibility(c, env, eligibility)
    )
    return FeasibleSet(assignments=kept, source_doc_hash=doc_hash(doc))
