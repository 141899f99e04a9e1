from __future__ import annotations

import math

import pytest

from tvgov.audit import AuditConfig, run_audit
from tvgov.errors import AuditConfigError


def config(**overrides):
    base = {
        "true_effects": [0.0, 0.05],
        "n_items": 200,
        "trials": 40,
        "seed": 11,
        "base_quality": 0.8,
        "bootstrap_resamples": 2_000,
    }
    base.update(overrides)
    return AuditConfig.from_plain(base)


def test_invalid_configs_rejected():
    with pytest.raises(AuditConfigError, match="trials"):
        config(trials=0)
    with pytest.raises(AuditConfigError, match="n items"):
        config(n_items=1)
    with pytest.raises(AuditConfigError, match="outside"):
        config(base_quality=0.98, true_effects=[0.05])
    with pytest.raises(AuditConfigError, match="unknown config"):
        AuditConfig.from_plain({"true_effects": [0.0], "n_items": 10,
                                "trials": 1, "seed": 0, "bogus": 1})


def test_null_cell_rarely_passes_and_power_cell_mostly_passes(support_doc):
    result = run_audit(support_doc, config(n_items=500, trials=40))
    null_cell, power_cell = result["cells"]
    assert null_cell["true_effect"] == 0.0
    # margin delta=.01 plus paired streams: the null should essentially never pass
    assert null_cell["pass_rate"] <= 0.05 + 2 * math.sqrt(0.05 * 0.95 / 40)
    assert power_cell["true_effect"] == 0.05
    assert power_cell["pass_rate"] >= 0.9


def test_paired_null_is_pure_defer(support_doc):
    # same seed on both sides + zero effect => record-identical evidence
    result = run_audit(support_doc, config(true_effects=[0.0], trials=10))
    cell = result["cells"][0]
    assert cell["defer"] == 10


def test_independent_streams_null_controls_false_promotion(support_doc):
    result = run_audit(
        support_doc,
        config(true_effects=[0.0], trials=60, paired_streams=False, n_items=300),
    )
    cell = result["cells"][0]
    assert cell["pass_rate"] <= 0.05 + 2 * math.sqrt(0.05 * 0.95 / 60)


def test_audit_deterministic(support_doc):
    a = run_audit(support_doc, config(trials=5, n_items=60))
    b = run_audit(support_doc, config(trials=5, n_items=60))
    assert a == b


def test_audit_null_400_trials_below_alpha_band(support_doc):
    # false-promotion rate at zero effect, margin .01, n=500, 400 trials:
    # bound alpha + 2*sqrt(alpha*(1-alpha)/400) ~= .072
    result = run_audit(
        support_doc, config(true_effects=[0.0], n_items=500, trials=400)
    )
    cell = result["cells"][0]
    assert cell["pass_rate"] <= 0.05 + 2 * math.sqrt(0.05 * 0.95 / 400)
