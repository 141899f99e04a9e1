from tvgov.tvl.canonical import (
    canonical_json_bytes,
    canonical_serialize,
    doc_hash,
    document_to_plain,
    policy_hash,
    policy_to_plain,
    sha256_hex,
)
from tvgov.tvl.model import (
    ChanceConstraintSpec,
    Direction,
    EnvironmentSnapshot,
    EvaluationSetRef,
    Objective,
    PromotionPolicy,
    StructuralRule,
    TunedVariable,
    TvlDocument,
    ValueKind,
    coerce_value,
    document_from_plain,
    load_manifest,
    load_tvl,
    manifest_hash,
    parse_tvl,
    rebind_environment,
    render_value,
    resolve_domains,
)
from tvgov.tvl.reader import read_tvl_text

__all__ = [
    "ChanceConstraintSpec",
    "Direction",
    "EnvironmentSnapshot",
    "EvaluationSetRef",
    "Objective",
    "PromotionPolicy",
    "StructuralRule",
    "TunedVariable",
    "TvlDocument",
    "ValueKind",
    "canonical_json_bytes",
    "canonical_serialize",
    "coerce_value",
    "doc_hash",
    "document_from_plain",
    "document_to_plain",
    "load_manifest",
    "load_tvl",
    "manifest_hash",
    "parse_tvl",
    "policy_hash",
    "policy_to_plain",
    "read_tvl_text",
    "rebind_environment",
    "render_value",
    "resolve_domains",
    "sha256_hex",
]
