"""Canonical serialization of TVL documents.

Canonical bytes are compact JSON with sorted keys and UTF-8 encoding; floats
use Python's shortest round-trip repr. JSON lies inside the reader's accepted
flow grammar, so `parse_tvl(canonical_serialize(doc))` reproduces `doc`.
Sequence order (tvars, objectives, tie_breakers, domains) is semantic and
preserved; mapping key order is not and is normalized away.
"""

from __future__ import annotations

import hashlib
import json

from tvgov.tvl.model import (
    ENV_REF_PREFIX,
    PromotionPolicy,
    TvlDocument,
    render_value,
)


def canonical_json_bytes(plain: object) -> bytes:
    """Canonical JSON encoding for any plain structure."""
    return json.dumps(
        plain,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def policy_to_plain(policy: PromotionPolicy) -> dict:
    out: dict = {"dominance": policy.dominance, "alpha": policy.alpha}
    if policy.epsilon:
        out["epsilon"] = dict(policy.epsilon)
    if policy.min_effect:
        out["min_effect"] = dict(policy.min_effect)
    if policy.tie_breakers:
        out["tie_breakers"] = list(policy.tie_breakers)
    if policy.chance_constraints:
        out["chance_constraints"] = [
            {
                "name": spec.name,
                "test": spec.test,
                "threshold": spec.threshold,
                "confidence": spec.confidence,
            }
            for spec in policy.chance_constraints
        ]
    if policy.bonferroni:
        out["bonferroni"] = True
    return out


def document_to_plain(doc: TvlDocument) -> dict:
    evaluation_set: dict = {
        "dataset": doc.evaluation_set.dataset_id,
        "seed": doc.evaluation_set.seed,
    }
    if doc.evaluation_set.item_ids:
        evaluation_set["items"] = list(doc.evaluation_set.item_ids)

    tvars = []
    for var in doc.tvars:
        domain: object
        if var.domain_ref is not None:
            domain = f"{ENV_REF_PREFIX}{var.domain_ref}"
        else:
            domain = list(var.values)
        tvars.append({"name": var.name, "type": var.kind.value, "domain": domain})

    out: dict = {
        "tvl": {"module": doc.module_name},
        "environment": doc.environment.to_plain(),
        "evaluation_set": evaluation_set,
        "tvars": tvars,
        "objectives": [
            {"name": o.name, "measure": o.measure, "direction": o.direction.value}
            for o in doc.objectives
        ],
        "promotion_policy": policy_to_plain(doc.policy),
    }
    if doc.structural_rules:
        out["constraints"] = {
            "structural": [
                {
                    "when": f"{r.when_var} = {render_value(r.when_value)}",
                    "then": f"{r.then_var} = {render_value(r.then_value)}",
                }
                for r in doc.structural_rules
            ]
        }
    return out


def canonical_serialize(doc: TvlDocument) -> bytes:
    """Deterministic byte form of a document; injective on content."""
    return canonical_json_bytes(document_to_plain(doc))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def doc_hash(doc: TvlDocument) -> str:
    return sha256_hex(canonical_serialize(doc))


def policy_hash(policy: PromotionPolicy) -> str:
    return sha256_hex(canonical_json_bytes(policy_to_plain(policy)))
