"""TVL document model: typed schema, validation, and reference resolution.

A parsed document is fully resolved (environment references substituted) and
immutable; it is safe to share across threads. `parse_tvl` works on source
text alone; `load_tvl` additionally resolves the evaluation-set item manifest
from a sidecar `<dataset_id>.items` file next to the document.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Union

from tvgov.errors import TvlSchemaError
from tvgov.tvl.reader import read_tvl_text

Value = Union[str, int, bool]

ENV_REF_PREFIX = "environment."


class ValueKind(str, Enum):
    STRING = "enum[str]"
    INTEGER = "int"
    BOOLEAN = "bool"


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


def render_value(value: Value) -> str:
    """Canonical text form of a domain value (used in assignment ids,
    rule clauses, and profile selectors)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def coerce_value(raw: object, kind: ValueKind, path: str) -> Value:
    """Coerce a parsed scalar to a variable's value kind."""
    if kind is ValueKind.BOOLEAN:
        if isinstance(raw, bool):
            return raw
        if raw in ("true", "false"):
            return raw == "true"
        raise TvlSchemaError(f"expected a boolean, got {raw!r}", path)
    if kind is ValueKind.INTEGER:
        if isinstance(raw, bool) or not isinstance(raw, int):
            if isinstance(raw, str):
                try:
                    return int(raw)
                except ValueError:
                    pass
            raise TvlSchemaError(f"expected an integer, got {raw!r}", path)
        return raw
    if isinstance(raw, (bool, int, float)):
        raise TvlSchemaError(f"expected a string, got {raw!r}", path)
    return str(raw)


@dataclass(frozen=True)
class EnvironmentSnapshot:
    """Named value lists plus named nonnegative scalar caps."""

    lists: Mapping[str, tuple[str, ...]]
    caps: Mapping[str, float]

    def to_plain(self) -> dict:
        out: dict = {}
        for name, values in self.lists.items():
            out[name] = list(values)
        for name, cap in self.caps.items():
            out[name] = cap
        return out

    @classmethod
    def from_plain(cls, raw: object, path: str = "environment") -> "EnvironmentSnapshot":
        if not isinstance(raw, dict):
            raise TvlSchemaError("expected a mapping", path)
        lists: dict[str, tuple[str, ...]] = {}
        caps: dict[str, float] = {}
        for name, value in raw.items():
            here = f"{path}.{name}"
            if isinstance(value, list):
                entries = []
                for i, entry in enumerate(value):
                    if isinstance(entry, (bool, int, float, dict, list)):
                        raise TvlSchemaError(
                            f"expected a string, got {entry!r}", f"{here}[{i}]"
                        )
                    entries.append(str(entry))
                if len(set(entries)) != len(entries):
                    raise TvlSchemaError("list entries must be unique", here)
                lists[name] = tuple(entries)
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TvlSchemaError(
                    f"expected a value list or a numeric cap, got {value!r}", here
                )
            else:
                if value < 0:
                    raise TvlSchemaError("caps must be nonnegative", here)
                caps[name] = float(value)
        return cls(lists=lists, caps=caps)


@dataclass(frozen=True)
class EvaluationSetRef:
    dataset_id: str
    seed: int
    item_ids: tuple[str, ...] = ()

    @property
    def resolved(self) -> bool:
        return bool(self.item_ids)


@dataclass(frozen=True)
class TunedVariable:
    name: str
    kind: ValueKind
    values: tuple[Value, ...]
    domain_ref: str | None = None  # environment list name, when referenced

    def contains(self, value: Value) -> bool:
        return any(value == v and type(value) is type(v) for v in self.values)


@dataclass(frozen=True)
class StructuralRule:
    """Implication over assignments: when-clause satisfied => then-clause must be."""

    when_var: str
    when_value: Value
    then_var: str
    then_value: Value

    def describe(self) -> str:
        return (
            f"{self.when_var} = {render_value(self.when_value)} => "
            f"{self.then_var} = {render_value(self.then_value)}"
        )


@dataclass(frozen=True)
class Objective:
    name: str
    measure: str
    direction: Direction

    @property
    def sign(self) -> float:
        """Direction normalization: +1 when larger raw values are better."""
        return 1.0 if self.direction is Direction.MAXIMIZE else -1.0


@dataclass(frozen=True)
class ChanceConstraintSpec:
    name: str
    test: str
    threshold: float
    confidence: float


@dataclass(frozen=True)
class PromotionPolicy:
    alpha: float
    epsilon: Mapping[str, float] = field(default_factory=dict)
    min_effect: Mapping[str, float] = field(default_factory=dict)
    tie_breakers: tuple[str, ...] = ()
    chance_constraints: tuple[ChanceConstraintSpec, ...] = ()
    bonferroni: bool = False
    dominance: str = "epsilon_pareto"

    def epsilon_for(self, objective: str) -> float:
        return float(self.epsilon.get(objective, 0.0))

    def min_effect_for(self, objective: str) -> float:
        return float(self.min_effect.get(objective, 0.0))

    def constraint(self, name: str) -> ChanceConstraintSpec:
        for spec in self.chance_constraints:
            if spec.name == name:
                return spec
        raise TvlSchemaError(f"no chance constraint named '{name}'")


@dataclass(frozen=True)
class TvlDocument:
    module_name: str
    environment: EnvironmentSnapshot
    evaluation_set: EvaluationSetRef
    tvars: tuple[TunedVariable, ...]
    structural_rules: tuple[StructuralRule, ...]
    objectives: tuple[Objective, ...]
    policy: PromotionPolicy

    def variable(self, name: str) -> TunedVariable:
        for var in self.tvars:
            if var.name == name:
                return var
        raise TvlSchemaError(f"undeclared variable '{name}'")

    def objective(self, name: str) -> Objective:
        for obj in self.objectives:
            if obj.name == name:
                return obj
        raise TvlSchemaError(f"undeclared objective '{name}'")

    @property
    def objective_names(self) -> tuple[str, ...]:
        return tuple(obj.name for obj in self.objectives)

    @property
    def constraint_names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.policy.chance_constraints)

    def with_items(self, item_ids: tuple[str, ...]) -> "TvlDocument":
        return replace(
            self, evaluation_set=replace(self.evaluation_set, item_ids=item_ids)
        )


# -- schema validation -------------------------------------------------------


def _require_mapping(raw: object, path: str) -> dict:
    if not isinstance(raw, dict):
        raise TvlSchemaError("expected a mapping", path)
    return raw


def _require_string(raw: object, path: str) -> str:
    if isinstance(raw, (bool, int, float, dict, list)) or raw is None:
        raise TvlSchemaError(f"expected a string, got {raw!r}", path)
    return str(raw)


def _reject_unknown(raw: dict, allowed: set[str], path: str) -> None:
    for key in raw:
        if key not in allowed:
            raise TvlSchemaError(f"unknown field '{key}'", path)


def _parse_clause(raw: object, path: str) -> tuple[str, str]:
    text = _require_string(raw, path)
    if "=" not in text:
        raise TvlSchemaError(f"expected 'variable = value', got {text!r}", path)
    var, _, value = text.partition("=")
    var, value = var.strip(), value.strip()
    if not var or not value:
        raise TvlSchemaError(f"expected 'variable = value', got {text!r}", path)
    return var, value


def _parse_tvar(raw: object, env: EnvironmentSnapshot, path: str) -> TunedVariable:
    raw = _require_mapping(raw, path)
    _reject_unknown(raw, {"name", "type", "domain"}, path)
    for key in ("name", "type", "domain"):
        if key not in raw:
            raise TvlSchemaError(f"missing field '{key}'", path)
    name = _require_string(raw["name"], f"{path}.name")
    type_token = _require_string(raw["type"], f"{path}.type")
    try:
        kind = ValueKind(type_token)
    except ValueError:
        raise TvlSchemaError(
            f"unknown type '{type_token}' (expected one of: "
            f"{', '.join(k.value for k in ValueKind)})",
            f"{path}.type",
        ) from None

    domain_raw = raw["domain"]
    domain_ref: str | None = None
    if isinstance(domain_raw, str) and domain_raw.startswith(ENV_REF_PREFIX):
        list_name = domain_raw[len(ENV_REF_PREFIX):]
        if list_name not in env.lists:
            raise TvlSchemaError(
                f"unresolved reference '{domain_raw}': environment declares no "
                f"list '{list_name}'",
                f"{path}.domain",
            )
        domain_ref = list_name
        entries: list[object] = list(env.lists[list_name])
    elif isinstance(domain_raw, list):
        entries = domain_raw
    else:
        raise TvlSchemaError(
            f"expected a value list or environment reference, got {domain_raw!r}",
            f"{path}.domain",
        )

    values = tuple(
        coerce_value(entry, kind, f"{path}.domain[{i}]")
        for i, entry in enumerate(entries)
    )
    if not values:
        raise TvlSchemaError("domain is empty after resolution", f"{path}.domain")
    if len(set(values)) != len(values):
        raise TvlSchemaError("domain values must be unique", f"{path}.domain")
    return TunedVariable(name=name, kind=kind, values=values, domain_ref=domain_ref)


def _parse_objective(raw: object, path: str) -> Objective:
    raw = _require_mapping(raw, path)
    _reject_unknown(raw, {"name", "measure", "direction"}, path)
    if "name" not in raw or "direction" not in raw:
        raise TvlSchemaError("objective needs 'name' and 'direction'", path)
    name = _require_string(raw["name"], f"{path}.name")
    direction_token = _require_string(raw["direction"], f"{path}.direction")
    try:
        direction = Direction(direction_token)
    except ValueError:
        raise TvlSchemaError(
            f"direction must be 'maximize' or 'minimize', got {direction_token!r}",
            f"{path}.direction",
        ) from None
    measure = (
        _require_string(raw["measure"], f"{path}.measure")
        if "measure" in raw
        else name
    )
    return Objective(name=name, measure=measure, direction=direction)


def _parse_rate(raw: object, lo: float, hi: float, open_ends: bool, path: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise TvlSchemaError(f"expected a number, got {raw!r}", path)
    value = float(raw)
    ok = lo < value < hi if open_ends else lo <= value <= hi
    bracket = "()" if open_ends else "[]"
    if not ok:
        raise TvlSchemaError(
            f"must lie in {bracket[0]}{lo}, {hi}{bracket[1]}, got {value}", path
        )
    return value


def _parse_policy(raw: object, objective_names: list[str], path: str) -> PromotionPolicy:
    raw = _require_mapping(raw, path)
    allowed = {
        "dominance", "alpha", "epsilon", "min_effect", "tie_breakers",
        "chance_constraints", "bonferroni",
    }
    _reject_unknown(raw, allowed, path)
    dominance = _require_string(raw.get("dominance", ""), f"{path}.dominance")
    if dominance != "epsilon_pareto":
        raise TvlSchemaError(
            f"dominance must be 'epsilon_pareto', got {dominance!r}",
            f"{path}.dominance",
        )
    if "alpha" not in raw:
        raise TvlSchemaError("missing field 'alpha'", path)
    alpha = _parse_rate(raw["alpha"], 0.0, 1.0, True, f"{path}.alpha")

    epsilon: dict[str, float] = {}
    for name, value in _require_mapping(raw.get("epsilon", {}), f"{path}.epsilon").items():
        if name not in objective_names:
            raise TvlSchemaError(f"epsilon names undeclared objective '{name}'", path)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            raise TvlSchemaError(
                f"epsilon must be nonnegative, got {value!r}", f"{path}.epsilon.{name}"
            )
        epsilon[name] = float(value)

    min_effect: dict[str, float] = {}
    for name, value in _require_mapping(
        raw.get("min_effect", {}), f"{path}.min_effect"
    ).items():
        if name not in objective_names:
            raise TvlSchemaError(f"min_effect names undeclared objective '{name}'", path)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise TvlSchemaError(
                f"min_effect margins must be positive, got {value!r}",
                f"{path}.min_effect.{name}",
            )
        min_effect[name] = float(value)

    tie_breakers = []
    raw_ties = raw.get("tie_breakers", [])
    if not isinstance(raw_ties, list):
        raise TvlSchemaError("expected a list", f"{path}.tie_breakers")
    for i, name in enumerate(raw_ties):
        name = _require_string(name, f"{path}.tie_breakers[{i}]")
        if name not in objective_names:
            raise TvlSchemaError(
                f"tie breaker names undeclared objective '{name}'",
                f"{path}.tie_breakers[{i}]",
            )
        tie_breakers.append(name)

    constraints: list[ChanceConstraintSpec] = []
    raw_ccs = raw.get("chance_constraints", [])
    if not isinstance(raw_ccs, list):
        raise TvlSchemaError("expected a list", f"{path}.chance_constraints")
    for i, raw_cc in enumerate(raw_ccs):
        here = f"{path}.chance_constraints[{i}]"
        raw_cc = _require_mapping(raw_cc, here)
        _reject_unknown(raw_cc, {"name", "test", "threshold", "confidence"}, here)
        for key in ("name", "test", "threshold", "confidence"):
            if key not in raw_cc:
                raise TvlSchemaError(f"missing field '{key}'", here)
        constraints.append(
            ChanceConstraintSpec(
                name=_require_string(raw_cc["name"], f"{here}.name"),
                test=_require_string(raw_cc["test"], f"{here}.test"),
                threshold=_parse_rate(
                    raw_cc["threshold"], 0.0, 1.0, False, f"{here}.threshold"
                ),
                confidence=_parse_rate(
                    raw_cc["confidence"], 0.0, 1.0, True, f"{here}.confidence"
                ),
            )
        )
    names = [c.name for c in constraints]
    if len(set(names)) != len(names):
        raise TvlSchemaError("chance-constraint names must be unique", path)

    bonferroni = raw.get("bonferroni", False)
    if not isinstance(bonferroni, bool):
        raise TvlSchemaError(
            f"bonferroni must be a boolean, got {bonferroni!r}", f"{path}.bonferroni"
        )

    return PromotionPolicy(
        alpha=alpha,
        epsilon=epsilon,
        min_effect=min_effect,
        tie_breakers=tuple(tie_breakers),
        chance_constraints=tuple(constraints),
        bonferroni=bonferroni,
        dominance=dominance,
    )


def document_from_plain(raw: object) -> TvlDocument:
    """Validate parsed plain data against the TVL schema and resolve references."""
    raw = _require_mapping(raw, "document")
    allowed = {
        "tvl", "environment", "evaluation_set", "tvars", "constraints",
        "objectives", "promotion_policy",
    }
    _reject_unknown(raw, allowed, "document")
    for key in ("tvl", "environment", "evaluation_set", "tvars", "objectives",
                "promotion_policy"):
        if key not in raw:
            raise TvlSchemaError(f"missing section '{key}'", "document")

    header = _require_mapping(raw["tvl"], "tvl")
    _reject_unknown(header, {"module"}, "tvl")
    if "module" not in header:
        raise TvlSchemaError("missing field 'module'", "tvl")
    module_name = _require_string(header["module"], "tvl.module")

    environment = EnvironmentSnapshot.from_plain(raw["environment"])

    es_raw = _require_mapping(raw["evaluation_set"], "evaluation_set")
    _reject_unknown(es_raw, {"dataset", "seed", "items"}, "evaluation_set")
    for key in ("dataset", "seed"):
        if key not in es_raw:
            raise TvlSchemaError(f"missing field '{key}'", "evaluation_set")
    seed_raw = es_raw["seed"]
    if isinstance(seed_raw, bool) or not isinstance(seed_raw, int):
        raise TvlSchemaError(
            f"expected an integer, got {seed_raw!r}", "evaluation_set.seed"
        )
    item_ids: tuple[str, ...] = ()
    if "items" in es_raw:
        items_raw = es_raw["items"]
        if not isinstance(items_raw, list) or not items_raw:
            raise TvlSchemaError("expected a non-empty list", "evaluation_set.items")
        item_ids = tuple(
            _require_string(x, f"evaluation_set.items[{i}]")
            for i, x in enumerate(items_raw)
        )
        if len(set(item_ids)) != len(item_ids):
            raise TvlSchemaError("item ids must be unique", "evaluation_set.items")
    evaluation_set = EvaluationSetRef(
        dataset_id=_require_string(es_raw["dataset"], "evaluation_set.dataset"),
        seed=seed_raw,
        item_ids=item_ids,
    )

    tvars_raw = raw["tvars"]
    if not isinstance(tvars_raw, list):
        raise TvlSchemaError("expected a list", "tvars")
    if not tvars_raw:
        raise TvlSchemaError("empty variable set", "tvars")
    tvars = tuple(
        _parse_tvar(entry, environment, f"tvars[{i}]")
        for i, entry in enumerate(tvars_raw)
    )
    names = [v.name for v in tvars]
    if len(set(names)) != len(names):
        dupe = next(n for n in names if names.count(n) > 1)
        raise TvlSchemaError(f"duplicate variable name '{dupe}'", "tvars")
    by_name = {v.name: v for v in tvars}

    rules: list[StructuralRule] = []
    if "constraints" in raw:
        cons = _require_mapping(raw["constraints"], "constraints")
        _reject_unknown(cons, {"structural"}, "constraints")
        structural = cons.get("structural", [])
        if not isinstance(structural, list):
            raise TvlSchemaError("expected a list", "constraints.structural")
        for i, raw_rule in enumerate(structural):
            here = f"constraints.structural[{i}]"
            raw_rule = _require_mapping(raw_rule, here)
            _reject_unknown(raw_rule, {"when", "then"}, here)
            for key in ("when", "then"):
                if key not in raw_rule:
                    raise TvlSchemaError(f"missing field '{key}'", here)
            when_var, when_text = _parse_clause(raw_rule["when"], f"{here}.when")
            then_var, then_text = _parse_clause(raw_rule["then"], f"{here}.then")
            for var_name, clause in ((when_var, "when"), (then_var, "then")):
                if var_name not in by_name:
                    raise TvlSchemaError(
                        f"rule mentions undeclared variable '{var_name}'",
                        f"{here}.{clause}",
                    )
            when_value = coerce_value(
                when_text, by_name[when_var].kind, f"{here}.when"
            )
            then_value = coerce_value(
                then_text, by_name[then_var].kind, f"{here}.then"
            )
            for var_name, value, clause in (
                (when_var, when_value, "when"), (then_var, then_value, "then"),
            ):
                if not by_name[var_name].contains(value):
                    raise TvlSchemaError(
                        f"value {render_value(value)!r} is not in the domain of "
                        f"'{var_name}'",
                        f"{here}.{clause}",
                    )
            rules.append(StructuralRule(when_var, when_value, then_var, then_value))

    objectives_raw = raw["objectives"]
    if not isinstance(objectives_raw, list) or not objectives_raw:
        raise TvlSchemaError("expected a non-empty list", "objectives")
    objectives = tuple(
        _parse_objective(entry, f"objectives[{i}]")
        for i, entry in enumerate(objectives_raw)
    )
    obj_names = [o.name for o in objectives]
    if len(set(obj_names)) != len(obj_names):
        dupe = next(n for n in obj_names if obj_names.count(n) > 1)
        raise TvlSchemaError(f"duplicate objective name '{dupe}'", "objectives")

    policy = _parse_policy(raw["promotion_policy"], obj_names, "promotion_policy")

    return TvlDocument(
        module_name=module_name,
        environment=environment,
        evaluation_set=evaluation_set,
        tvars=tvars,
        structural_rules=tuple(rules),
        objectives=objectives,
        policy=policy,
    )


def parse_tvl(text: str) -> TvlDocument:
    """Parse and validate TVL source text into a resolved document."""
    return document_from_plain(read_tvl_text(text))


def resolve_domains(
    tvars: tuple[TunedVariable, ...], environment: EnvironmentSnapshot
) -> tuple[TunedVariable, ...]:
    """Re-resolve environment-referencing domains against a snapshot."""
    out = []
    for var in tvars:
        if var.domain_ref is None:
            out.append(var)
            continue
        if var.domain_ref not in environment.lists:
            raise TvlSchemaError(
                f"unresolved reference 'environment.{var.domain_ref}' for "
                f"variable '{var.name}'"
            )
        values = tuple(
            coerce_value(v, var.kind, f"environment.{var.domain_ref}")
            for v in environment.lists[var.domain_ref]
        )
        if not values:
            raise TvlSchemaError(
                f"domain of '{var.name}' is empty after resolution"
            )
        out.append(replace(var, values=values))
    return tuple(out)


def rebind_environment(
    doc: TvlDocument, environment: EnvironmentSnapshot
) -> TvlDocument:
    """Document with its embedded environment replaced and domains re-resolved."""
    return replace(
        doc,
        environment=environment,
        tvars=resolve_domains(doc.tvars, environment),
    )


def load_manifest(path: Path) -> tuple[str, ...]:
    """Read a dataset manifest: one item id per line, order is canonical."""
    items = tuple(
        line.strip() for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    )
    if not items:
        raise TvlSchemaError("dataset manifest is empty", str(path))
    if len(set(items)) != len(items):
        raise TvlSchemaError("dataset manifest has duplicate item ids", str(path))
    return items


def manifest_hash(items: tuple[str, ...]) -> str:
    digest = hashlib.sha256()
    for item in items:
        digest.update(item.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def load_tvl(path: Path | str) -> TvlDocument:
    """Load a .tvl file and resolve its item manifest when a sidecar
    `<dataset_id>.items` file exists next to it."""
    path = Path(path)
    doc = parse_tvl(path.read_text(encoding="utf-8"))
    if not doc.evaluation_set.resolved:
        sidecar = path.parent / f"{doc.evaluation_set.dataset_id}.items"
        if sidecar.exists():
            doc = doc.with_items(load_manifest(sidecar))
    return doc
