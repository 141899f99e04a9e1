from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvgov.errors import TvlSchemaError
from tvgov.tvl.canonical import canonical_serialize, doc_hash
from tvgov.tvl.model import (
    Direction,
    ValueKind,
    load_tvl,
    parse_tvl,
)

from conftest import SUPPORT_TVL, write_tvl


def test_listing_parses_fully(support_doc):
    assert support_doc.module_name == "support.assistant"
    assert [v.name for v in support_doc.tvars] == [
        "model", "retrieval_depth", "prompt_template", "history", "k",
    ]
    assert len(support_doc.structural_rules) == 1
    assert len(support_doc.objectives) == 3
    assert len(support_doc.policy.chance_constraints) == 2
    assert support_doc.policy.alpha == 0.05
    assert support_doc.policy.min_effect == {"quality": 0.01}
    assert support_doc.policy.tie_breakers == ("cost", "latency")
    assert support_doc.policy.bonferroni is False
    assert support_doc.evaluation_set.dataset_id == "support_tickets_v3"
    assert support_doc.evaluation_set.seed == 13


def test_environment_reference_resolves_to_three_values(support_doc):
    model = support_doc.variable("model")
    assert model.domain_ref == "models"
    assert len(model.values) == 3
    assert model.kind is ValueKind.STRING


def test_min_effect_only_names_quality(support_doc):
    assert support_doc.policy.min_effect_for("quality") == 0.01
    assert support_doc.policy.min_effect_for("cost") == 0.0
    assert support_doc.policy.epsilon_for("latency") == 0.0


def test_objective_measure_defaults_to_name(support_doc):
    assert support_doc.objective("quality").measure == "answer_accuracy"
    assert support_doc.objective("cost").measure == "cost"
    assert support_doc.objective("cost").direction is Direction.MINIMIZE


def test_empty_variable_set_rejected():
    text = SUPPORT_TVL.replace(
        """tvars:
  - { name: model, type: enum[str], domain: environment.models }
  - { name: retrieval_depth, type: int, domain: [4, 8, 12] }
  - { name: prompt_template, type: enum[str], domain: [brief, guided] }
  - { name: history, type: bool, domain: [true, false] }
  - { name: k, type: int, domain: [0, 2, 4, 6, 8] }
""",
        "tvars: []\n",
    ).replace("constraints: { structural: [{ when: history = false, then: k = 0 }] }\n", "")
    with pytest.raises(TvlSchemaError, match="empty variable set"):
        parse_tvl(text)


@pytest.mark.parametrize(
    "mutation,fragment",
    [
        (("domain: environment.models", "domain: environment.engines"),
         "unresolved reference"),
        (("{ name: k, type: int, domain: [0, 2, 4, 6, 8] }",
          "{ name: model, type: int, domain: [0] }"),
         "duplicate variable name"),
        (("when: history = false, then: k = 0",
          "when: history = false, then: k = 3"),
         "not in the domain"),
        (("when: history = false, then: k = 0",
          "when: verbosity = low, then: k = 0"),
         "undeclared variable"),
        (("alpha: 0.05", "alpha: 1.5"), "must lie in"),
        (("direction: maximize", "direction: upward"), "maximize"),
        (("tie_breakers: [cost, latency]", "tie_breakers: [cost, wallclock]"),
         "undeclared objective"),
        (("{ name: k, type: int, domain: [0, 2, 4, 6, 8] }",
          "{ name: k, type: int, domain: [0, 2, 2] }"),
         "unique"),
        (("{ name: k, type: int, domain: [0, 2, 4, 6, 8] }",
          "{ name: k, type: int, domain: [0, two, 4] }"),
         "expected an integer"),
        (("tvl: { module: support.assistant }",
          "tvl: { module: support.assistant, owner: someone }"),
         "unknown field"),
    ],
)
def test_schema_rejections(mutation, fragment):
    old, new = mutation
    assert old in SUPPORT_TVL
    with pytest.raises(TvlSchemaError, match=fragment):
        parse_tvl(SUPPORT_TVL.replace(old, new))


def test_rule_rejected_at_parse_time_not_enumeration():
    # rejection completeness: a bad rule never survives into a document
    bad = SUPPORT_TVL.replace("then: k = 0", "then: k = 7")
    with pytest.raises(TvlSchemaError):
        parse_tvl(bad)


def test_canonical_is_source_order_independent(support_doc):
    reordered = SUPPORT_TVL.replace(
        "tvl: { module: support.assistant }\n"
        "environment: { models: [gpt-5.4-mini, gpt-5.4, orion-3], budget_usd: 0.02 }\n",
        "environment: { budget_usd: 0.02, models: [gpt-5.4-mini, gpt-5.4, orion-3] }\n"
        "tvl: { module: support.assistant }\n",
    )
    assert canonical_serialize(parse_tvl(reordered)) == canonical_serialize(support_doc)


def test_canonical_round_trip_identity(support_doc):
    blob = canonical_serialize(support_doc)
    again = parse_tvl(blob.decode("utf-8"))
    assert again == support_doc
    assert canonical_serialize(again) == blob


def test_canonical_injective_on_alpha(support_doc):
    other = parse_tvl(SUPPORT_TVL.replace("alpha: 0.05", "alpha: 0.01"))
    assert canonical_serialize(other) != canonical_serialize(support_doc)
    assert doc_hash(other) != doc_hash(support_doc)


def test_sidecar_manifest_resolution(tmp_path):
    path = write_tvl(tmp_path, items=10)
    doc = load_tvl(path)
    assert len(doc.evaluation_set.item_ids) == 10
    assert doc.evaluation_set.item_ids[0] == "ticket-0001"
    # canonical form of a resolved document still round-trips
    again = parse_tvl(canonical_serialize(doc).decode("utf-8"))
    assert again == doc


def test_manifest_duplicates_rejected(tmp_path):
    path = write_tvl(tmp_path)
    (tmp_path / "support_tickets_v3.items").write_text("a\nb\na\n", encoding="utf-8")
    with pytest.raises(TvlSchemaError, match="duplicate"):
        load_tvl(path)


# -- property: random documents round-trip through canonical form ----------------

_names = st.lists(
    st.text(alphabet="abcdefghij", min_size=1, max_size=6),
    min_size=1, max_size=4, unique=True,
)


@st.composite
def documents(draw):
    var_names = draw(_names)
    lines = [
        "tvl: { module: demo.module }",
        "environment: { models: [m-one, m-two], budget_usd: 0.5 }",
        "evaluation_set: { dataset: demo_set, seed: 7 }",
        "tvars:",
    ]
    domains = {}
    for i, name in enumerate(var_names):
        kind = draw(st.sampled_from(["int", "bool", "enum[str]"]))
        if kind == "int":
            values = draw(
                st.lists(st.integers(-50, 50), min_size=1, max_size=4, unique=True)
            )
            domain = "[" + ", ".join(str(v) for v in values) + "]"
        elif kind == "bool":
            values = draw(st.sampled_from([[True], [False], [True, False]]))
            domain = "[" + ", ".join("true" if v else "false" for v in values) + "]"
        else:
            values = draw(
                st.lists(
                    st.text(alphabet="xyz", min_size=1, max_size=4),
                    min_size=1, max_size=3, unique=True,
                )
            )
            domain = "[" + ", ".join(values) + "]"
        domains[name] = (kind, values)
        lines.append(f"  - {{ name: {name}, type: {kind}, domain: {domain} }}")
    lines.append("objectives:")
    lines.append("  - { name: score, direction: maximize }")
    alpha = draw(st.floats(min_value=0.01, max_value=0.5))
    lines.append(
        "promotion_policy: { dominance: epsilon_pareto, alpha: %r }" % alpha
    )
    return "\n".join(lines) + "\n"


@given(documents())
@settings(max_examples=60, deadline=None)
def test_round_trip_property(text):
    doc = parse_tvl(text)
    blob = canonical_serialize(doc)
    again = parse_tvl(blob.decode("utf-8"))
    assert again == doc
    assert canonical_serialize(again) == blob
