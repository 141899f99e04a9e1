"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one `[acceptance] criterion N (<name>): PASS|FAIL` line; run
with `pytest tests/test_acceptance.py -v -s` to see them inline.
"""

from __future__ import annotations

import itertools
import math
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from tvgov.evidence import NoiseProfile, run_synthetic_evaluator
from tvgov.gate import Decision, SafetyInterval, adjudicate_from_summaries
from tvgov.lifecycle import (
    ActionKind,
    StateLog,
    build_state,
    diff_states,
    required_actions,
)
from tvgov.space import (
    Assignment,
    PredicateTableRule,
    availability_rules_for,
    enumerate_theta,
    feasible_set,
    theta_size,
)
from tvgov.stats import (
    CiMethod,
    PairedDeltaCI,
    RateUpperBound,
    paired_delta_ci,
    rate_upper_bound,
)
from tvgov.tvl.model import (
    ChanceConstraintSpec,
    EnvironmentSnapshot,
    EvaluationSetRef,
    PromotionPolicy,
    parse_tvl,
)

from conftest import CANDIDATE_ID, INCUMBENT_ID, write_tvl


@contextmanager
def criterion(number: int, name: str, budget_seconds: float):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number} ({name}): FAIL")
        raise
    elapsed = time.perf_counter() - started
    if elapsed >= budget_seconds:
        print(f"[acceptance] criterion {number} ({name}): FAIL (runtime "
              f"{elapsed:.2f}s >= {budget_seconds}s)")
        raise AssertionError(
            f"criterion {number} exceeded its runtime budget: "
            f"{elapsed:.2f}s >= {budget_seconds}s"
        )
    print(f"[acceptance] criterion {number} ({name}): PASS ({elapsed:.2f}s)")


# -- criterion 1: promotion-table reproduction -------------------------------------


def test_criterion_1_table_reproduction():
    with criterion(1, "promotion-table reproduction", 1.0):
        policy = PromotionPolicy(
            alpha=0.05,
            min_effect={"quality": 0.010},
            chance_constraints=(
                ChanceConstraintSpec("bias_rate", "fairness_test", 0.05, 0.95),
                ChanceConstraintSpec(
                    "hallucination_rate", "hallucination_check", 0.03, 0.95
                ),
            ),
        )

        def quality_ci(point, lower, upper):
            return PairedDeltaCI(
                objective="quality", point=point, lower=lower, upper=upper,
                confidence=0.95, method=CiMethod.BOOTSTRAP_PERCENTILE, n=500,
            )

        certified = [
            RateUpperBound("bias_rate", 0, 500, 0.95, 0.0059),
            RateUpperBound("hallucination_rate", 0, 500, 0.95, 0.0059),
        ]

        c1 = adjudicate_from_summaries(
            [quality_ci(0.020, 0.012, 0.028)],
            [SafetyInterval("bias_rate", 0.038, 0.062, 0.95), certified[1]],
            policy,
        )
        c2 = adjudicate_from_summaries(
            [quality_ci(0.005, -0.003, 0.013)], certified, policy
        )
        c3 = adjudicate_from_summaries(
            [quality_ci(0.018, 0.011, 0.025)], certified, policy
        )
        assert c1.decision is Decision.FAIL
        assert c2.decision is Decision.DEFER
        assert c3.decision is Decision.PASS


# -- criterion 2: feasible-set counts ------------------------------------------------


def _oracle_feasible_count(doc, allowed_models=None):
    names = [v.name for v in doc.tvars]
    count = 0
    for combo in itertools.product(*(v.values for v in doc.tvars)):
        bound = dict(zip(names, combo))
        ok = all(
            bound[r.then_var] == r.then_value
            for r in doc.structural_rules
            if bound[r.when_var] == r.when_value
        )
        if ok and allowed_models is not None:
            ok = bound["model"] in allowed_models
        count += ok
    return count


def test_criterion_2_feasible_set_counts(support_doc):
    with criterion(2, "feasible-set counts 180/108/36", 1.0):
        assert theta_size(support_doc.tvars) == 180
        assert len(list(enumerate_theta(support_doc))) == 180

        fs = feasible_set(support_doc)
        assert len(fs) == _oracle_feasible_count(support_doc) == 108

        env = EnvironmentSnapshot(lists={"models": ("gpt-5.4",)}, caps={})
        fs_one = feasible_set(
            support_doc, environment=env,
            eligibility=availability_rules_for(support_doc),
        )
        assert len(fs_one) == _oracle_feasible_count(
            support_doc, allowed_models={"gpt-5.4"}
        ) == 36


# -- criterion 3: monotonicity over random spaces ------------------------------------


def _random_doc(rng: random.Random):
    while True:
        n_vars = rng.randint(1, 5)
        blocks = []
        for i in range(n_vars):
            kind = rng.choice(["int", "bool", "enum[str]"])
            if kind == "int":
                values = rng.sample(range(0, 40), rng.randint(1, 6))
                domain = "[" + ", ".join(map(str, values)) + "]"
            elif kind == "bool":
                domain = rng.choice(["[true, false]", "[true]", "[false]"])
            else:
                values = rng.sample(["aa", "bb", "cc", "dd", "ee", "ff"],
                                    rng.randint(1, 5))
                domain = "[" + ", ".join(values) + "]"
            blocks.append(f"  - {{ name: v{i}, type: {kind}, domain: {domain} }}\n")
        doc = parse_tvl(
            "tvl: { module: demo }\n"
            "environment: { models: [m-a], budget_usd: 1.0 }\n"
            "evaluation_set: { dataset: d, seed: 1 }\n"
            f"tvars:\n{''.join(blocks)}"
            "objectives:\n"
            "  - { name: score, direction: maximize }\n"
            "promotion_policy: { dominance: epsilon_pareto, alpha: 0.05 }\n"
        )
        if theta_size(doc.tvars) <= 2000:
            return doc


def test_criterion_3_monotonicity_200_spaces():
    with criterion(3, "monotonicity over 200 random spaces", 30.0):
        rng = random.Random(2024)
        violations = 0
        for _ in range(200):
            doc = _random_doc(rng)
            base = feasible_set(doc)
            if rng.random() < 0.5:
                when = rng.choice(doc.tvars)
                then = rng.choice(doc.tvars)
                from tvgov.tvl.model import StructuralRule

                rule = StructuralRule(
                    when_var=when.name, when_value=rng.choice(when.values),
                    then_var=then.name, then_value=rng.choice(then.values),
                )
                tightened = feasible_set(
                    replace(doc, structural_rules=doc.structural_rules + (rule,))
                )
            else:
                table = {
                    a.assignment_id: rng.random() < 0.7
                    for a in enumerate_theta(doc)
                }
                tightened = feasible_set(
                    doc, eligibility=[PredicateTableRule(table)]
                )
            if not tightened.ids <= base.ids:
                violations += 1
        assert violations == 0


# -- criterion 4: alpha control under the synthetic null ------------------------------


def test_criterion_4_alpha_control(support_doc):
    with criterion(4, "alpha control at the synthetic null", 300.0):
        alpha = 0.05
        n, trials = 200, 500
        items = tuple(f"item-{i:04d}" for i in range(n))
        es = EvaluationSetRef(dataset_id="null-study", seed=0, item_ids=items)
        profile = NoiseProfile.from_plain(
            {"objectives": {"answer_accuracy": {"kind": "bernoulli", "p": 0.8}},
             "safety": {}}
        )
        incumbent = Assignment.from_id(support_doc, INCUMBENT_ID)
        candidate = Assignment.from_id(support_doc, CANDIDATE_ID)
        hits = 0
        for trial in range(trials):
            # independent per-side streams: a noisy mean-zero null
            m0 = run_synthetic_evaluator(incumbent, es, profile, 2 * trial)
            m1 = run_synthetic_evaluator(candidate, es, profile, 2 * trial + 1)
            deltas = np.array(
                [
                    r1.objective_values["answer_accuracy"]
                    - r0.objective_values["answer_accuracy"]
                    for r0, r1 in zip(m0.records, m1.records)
                ]
            )
            ci = paired_delta_ci(
                deltas, "quality", alpha=alpha, seed=trial, b=10_000
            )
            hits += ci.lower > 0.0
        bound = alpha + 2 * math.sqrt(alpha * (1 - alpha) / trials)
        assert bound == pytest.approx(0.0695, abs=5e-4)
        assert hits / trials <= bound


# -- criterion 5: bootstrap vs exhaustive oracle --------------------------------------


def test_criterion_5_bootstrap_oracle():
    with criterion(5, "bootstrap vs exhaustive n=4 oracle", 10.0):
        rng = random.Random(77)
        for fixture in range(20):
            values = [rng.uniform(-1.0, 1.0) for _ in range(4)]
            means = [
                sum(values[i] for i in combo) / 4.0
                for combo in itertools.product(range(4), repeat=4)
            ]
            expected_lower = float(np.quantile(means, 0.025))
            expected_upper = float(np.quantile(means, 0.975))
            ci = paired_delta_ci(values, "x", alpha=0.05, seed=fixture, b=10_000)
            assert abs(ci.lower - expected_lower) <= 0.01
            assert abs(ci.upper - expected_upper) <= 0.01


# -- criterion 6: exact rate bound ----------------------------------------------------


def _oracle_binom_cdf(k, n, p):
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0 if k < n else 1.0
    log_terms = [
        math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
        + i * math.log(p) + (n - i) * math.log1p(-p)
        for i in range(k + 1)
    ]
    peak = max(log_terms)
    return min(max(math.exp(peak) * sum(math.exp(t - peak) for t in log_terms), 0.0), 1.0)


def _oracle_upper(k, n, confidence):
    if k == n:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if _oracle_binom_cdf(k, n, mid) > 1.0 - confidence:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def test_criterion_6_exact_rate_bound():
    with criterion(6, "exact binomial upper bound", 5.0):
        assert rate_upper_bound(0, 1, 0.95).upper == 0.95  # exact
        rng = random.Random(123)
        for _ in range(50):
            n = rng.randint(1, 600)
            k = rng.randint(0, n)
            confidence = rng.choice([0.9, 0.95, 0.99])
            got = rate_upper_bound(k, n, confidence).upper
            assert abs(got - _oracle_upper(k, n, confidence)) <= 1e-9


# -- criterion 7: lifecycle scripted sequence ----------------------------------------


def test_criterion_7_lifecycle_sequence(tmp_path, support_doc):
    with criterion(7, "lifecycle actions, chain integrity, rollback", 5.0):
        log = StateLog(tmp_path / "log")
        incumbent_id = CANDIDATE_ID  # uses model gpt-5.4

        def models_env(models):
            return EnvironmentSnapshot(
                lists={"models": tuple(models)},
                caps=dict(support_doc.environment.caps),
            )

        base_kwargs = dict(manifest_hash="a" * 64, incumbent_id=incumbent_id,
                           review_epochs={"every_days": 30})
        states = [build_state(support_doc, **base_kwargs)]
        log.append(states[0])

        def advance(new_state, epoch=False, drift=False):
            previous = states[-1]
            stamped = replace(new_state, parent_hash=previous.content_hash)
            diff = diff_states(previous, stamped)
            fs = feasible_set(
                stamped.doc, eligibility=stamped.eligibility_rules
            )
            try:
                incumbent = Assignment.from_id(stamped.doc, incumbent_id)
            except Exception:
                incumbent = Assignment.from_id(states[0].doc, incumbent_id)
            actions = required_actions(
                diff, fs, incumbent, epoch_reached=epoch, drift=drift
            )
            log.append(stamped)
            states.append(stamped)
            return [a.kind for a in actions]

        # 1: expand D (new model joins the environment list)
        expanded = build_state(
            support_doc,
            environment=models_env(
                support_doc.environment.lists["models"] + ("gemini-3",)
            ),
            **base_kwargs,
        )
        assert advance(expanded) == [ActionKind.CANDIDATE_SEARCH]

        # 2: narrow E, invalidating the incumbent (its model is dropped)
        narrowed = build_state(
            support_doc,
            environment=models_env(("gpt-5.4-mini", "orion-3", "gemini-3")),
            **base_kwargs,
        )
        assert advance(narrowed) == [ActionKind.FALLBACK_REQUIRED]

        # 3: refresh S (new item manifest)
        refreshed = build_state(
            states[-1].doc,
            manifest_hash="b" * 64,
            incumbent_id=incumbent_id,
            review_epochs={"every_days": 30},
        )
        assert advance(refreshed) == [ActionKind.REEVALUATE_INCUMBENT_FIRST]

        # 4: change G (tighter risk level)
        repoliced = build_state(
            replace(
                states[-1].doc,
                policy=replace(states[-1].doc.policy, alpha=0.01),
            ),
            manifest_hash="b" * 64,
            incumbent_id=incumbent_id,
            review_epochs={"every_days": 30},
        )
        assert advance(repoliced) == [ActionKind.READJUDICATE_UNDER_NEW_POLICY]

        # 5: scheduled review epoch (no component change)
        epoch_state = build_state(
            states[-1].doc, manifest_hash="b" * 64, incumbent_id=incumbent_id,
            review_epochs={"every_days": 30},
        )
        assert advance(epoch_state, epoch=True) == [ActionKind.SCHEDULED_REVIEW]

        # 6: operator-reported drift (no component change)
        drift_state = build_state(
            states[-1].doc, manifest_hash="b" * 64, incumbent_id=incumbent_id,
            review_epochs={"every_days": 30},
        )
        assert advance(drift_state, drift=True) == [ActionKind.DRIFT_REVIEW]

        # chain integrity over all 7 states
        assert log.verify() == []

        # rollback appends rather than rewrites
        before = {
            p.name: p.read_bytes() for p in (tmp_path / "log").glob("*.json")
        }
        new_version = log.rollback(2)
        assert new_version == 7
        after = {
            p.name: p.read_bytes() for p in (tmp_path / "log").glob("*.json")
        }
        assert set(before) < set(after)
        assert all(after[name] == blob for name, blob in before.items())
        restored = log.read(7)
        assert restored.content_hash == states[2].content_hash
        assert restored.parent_hash == states[6].content_hash
        assert log.verify() == []

        # determinism: rebuilding any state reproduces its content hash
        rebuilt = build_state(
            support_doc,
            environment=models_env(
                support_doc.environment.lists["models"] + ("gemini-3",)
            ),
            **base_kwargs,
        )
        assert rebuilt.content_hash == states[1].content_hash


# -- criterion 8: end-to-end promote determinism --------------------------------------


def test_criterion_8_promote_byte_identical(tmp_path):
    with criterion(8, "byte-identical promote reruns", 60.0):
        tvl = write_tvl(tmp_path, items=300)
        profile_path = tmp_path / "profile.json"
        profile_path.write_text(
            """
            {"objectives": {
                "answer_accuracy": {"kind": "bernoulli",
                    "p": {"default": 0.80, "model=orion-3": 0.86}},
                "cost": {"kind": "lognormal", "location": -4.3, "scale": 0.25},
                "latency": {"kind": "lognormal", "location": 4.7, "scale": 0.4}},
             "safety": {"fairness_test": 0.0, "hallucination_check": 0.0}}
            """,
            encoding="utf-8",
        )
        candidate_id = (
            "model=orion-3;retrieval_depth=4;prompt_template=brief;"
            "history=true;k=0"
        )

        def run(*argv):
            proc = subprocess.run(
                [sys.executable, "-m", "tvgov.cli", *argv],
                capture_output=True,
            )
            return proc.returncode

        inc, cand = tmp_path / "inc.jsonl", tmp_path / "cand.jsonl"
        assert run(
            "evaluate", str(tvl), "--assignment", INCUMBENT_ID,
            "--profile", str(profile_path), "--seed", "13", "--out", str(inc),
        ) == 0
        assert run(
            "evaluate", str(tvl), "--assignment", candidate_id,
            "--profile", str(profile_path), "--seed", "13", "--out", str(cand),
        ) == 0
        reports = []
        exit_codes = []
        for name in ("r1.json", "r2.json"):
            path = tmp_path / name
            exit_codes.append(
                run(
                    "promote", str(tvl), "--incumbent", str(inc),
                    "--candidate", str(cand), "--seed", "7",
                    "--report", str(path),
                )
            )
            reports.append(path.read_bytes())
        assert exit_codes[0] == exit_codes[1] == 0
        assert reports[0] == reports[1]
