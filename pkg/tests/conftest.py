from __future__ import annotations

from pathlib import Path

import pytest

from tvgov.evidence import NoiseProfile
from tvgov.tvl.model import TvlDocument, load_tvl, parse_tvl

SUPPORT_TVL = """\
tvl: { module: support.assistant }
environment: { models: [gpt-5.4-mini, gpt-5.4, orion-3], budget_usd: 0.02 }
evaluation_set: { dataset: support_tickets_v3, seed: 13 }
tvars:
  - { name: model, type: enum[str], domain: environment.models }
  - { name: retrieval_depth, type: int, domain: [4, 8, 12] }
  - { name: prompt_template, type: enum[str], domain: [brief, guided] }
  - { name: history, type: bool, domain: [true, false] }
  - { name: k, type: int, domain: [0, 2, 4, 6, 8] }
constraints: { structural: [{ when: history = false, then: k = 0 }] }
objectives:
  - { name: quality, measure: answer_accuracy, direction: maximize }
  - { name: cost, direction: minimize }
  - { name: latency, direction: minimize }
promotion_policy:
  { dominance: epsilon_pareto, alpha: 0.05,
    min_effect: { quality: 0.01 },
    tie_breakers: [cost, latency],
    chance_constraints: [{ name: bias_rate, test: fairness_test, threshold: 0.05, confidence: 0.95 },
                         { name: hallucination_rate, test: hallucination_check, threshold: 0.03, confidence: 0.95 }] }
"""

DEMO_DIR = Path(__file__).resolve().parents[1] / "demo"

INCUMBENT_ID = (
    "model=gpt-5.4-mini;retrieval_depth=4;prompt_template=brief;history=true;k=0"
)
CANDIDATE_ID = (
    "model=gpt-5.4;retrieval_depth=8;prompt_template=guided;history=true;k=4"
)


@pytest.fixture(scope="session")
def support_doc() -> TvlDocument:
    """The running-example declaration, items unresolved."""
    return parse_tvl(SUPPORT_TVL)


@pytest.fixture(scope="session")
def support_doc_items() -> TvlDocument:
    """Same declaration with the 500-ticket manifest resolved."""
    return load_tvl(DEMO_DIR / "support_assistant.tvl")


def flat_profile(
    quality_p: float = 0.8,
    fairness_rate: float = 0.0,
    hallucination_rate: float = 0.0,
    cost_location: float = -4.0,
    latency_location: float = 4.7,
) -> NoiseProfile:
    """Scalar-parameter profile covering the running example's measures."""
    return NoiseProfile.from_plain(
        {
            "objectives": {
                "answer_accuracy": {"kind": "bernoulli", "p": quality_p},
                "cost": {"kind": "lognormal", "location": cost_location, "scale": 0.25},
                "latency": {
                    "kind": "lognormal", "location": latency_location, "scale": 0.4,
                },
            },
            "safety": {
                "fairness_test": fairness_rate,
                "hallucination_check": hallucination_rate,
            },
        }
    )


def write_tvl(tmp_path: Path, text: str = SUPPORT_TVL, items: int = 0) -> Path:
    """Materialize a TVL file (optionally with a sidecar manifest)."""
    path = tmp_path / "module.tvl"
    path.write_text(text, encoding="utf-8")
    if items:
        manifest = tmp_path / "support_tickets_v3.items"
        manifest.write_text(
            "\n".join(f"ticket-{i:04d}" for i in range(1, items + 1)) + "\n",
            encoding="utf-8",
        )
    return path
