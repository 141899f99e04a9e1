"""tvgov: a governed tuning engine.

Maintains a versioned governed program space (tuned-variable domains,
structural constraints, eligibility, evaluation evidence, and a statistical
promotion gate) and adjudicates candidate-vs-incumbent promotions into
pass / defer / fail decisions.
"""

__version__ = "0.1.0"
