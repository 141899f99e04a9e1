"""Interval engine: paired confidence intervals for objective deltas and
one-sided exact upper bounds for safety rates, with seeded reproducible
randomness.

Randomness sources (both documented, both covered by golden-value tests):

* Resampling uses numpy's PCG64 generator seeded directly with the given
  integer seed. Bootstrap quantiles use linear interpolation (numpy's
  default `np.quantile` method).
* Counter-style uniforms for synthetic evidence use BLAKE2b over a
  `seed | part | part | ...` label string; the first 8 digest bytes,
  big-endian, scaled by 2^-64, give a uniform in [0, 1). The same
  construction (mod 2^63) derives independent sub-seeds from labels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats as sp_stats

from tvgov.errors import TvgovError

_MAX_BOOTSTRAP_CELLS = 20_000_000


class CiMethod(str, Enum):
    BOOTSTRAP_PERCENTILE = "bootstrap-percentile"
    T_INTERVAL = "t-interval"


@dataclass(frozen=True)
class PairedDeltaCI:
    """Two-sided interval for a mean paired delta, direction-normalized so
    positive means improvement."""

    objective: str
    point: float
    lower: float
    upper: float
    confidence: float
    method: CiMethod
    n: int
    b: int | None = None
    degenerate: bool = False

    def to_plain(self) -> dict:
        return {
            "objective": self.objective,
            "point": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "confidence": self.confidence,
            "method": self.method.value,
            "n": self.n,
            "b": self.b,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "PairedDeltaCI":
        return cls(
            objective=raw["objective"],
            point=raw["point"],
            lower=raw["lower"],
            upper=raw["upper"],
            confidence=raw["confidence"],
            method=CiMethod(raw["method"]),
            n=raw["n"],
            b=raw.get("b"),
            degenerate=raw.get("degenerate", False),
        )


@dataclass(frozen=True)
class RateUpperBound:
    """One-sided exact (Clopper-Pearson) upper confidence bound for a
    violation rate."""

    constraint: str
    successes: int
    n: int
    confidence: float
    upper: float

    def to_plain(self) -> dict:
        return {
            "constraint": self.constraint,
            "successes": self.successes,
            "n": self.n,
            "confidence": self.confidence,
            "upper": self.upper,
        }

    @classmethod
    def from_plain(cls, raw: dict) -> "RateUpperBound":
        return cls(
            constraint=raw["constraint"],
            successes=raw["successes"],
            n=raw["n"],
            confidence=raw["confidence"],
            upper=raw["upper"],
        )


def seeded_resampler(seed: int) -> np.random.Generator:
    """Deterministic random source: PCG64 seeded with `seed`."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_resamplers(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams for concurrent consumers; each stream is
    individually reproducible from (seed, index)."""
    return [
        np.random.Generator(np.random.PCG64(child))
        for child in np.random.SeedSequence(seed).spawn(n)
    ]


def _label_digest(seed: int, parts: Sequence[str]) -> bytes:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode("utf-8"))
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode("utf-8"))
    return h.digest()


def derived_seed(seed: int, *labels: str) -> int:
    """Stable sub-seed for a labeled stream (per objective, per candidate...)."""
    return int.from_bytes(_label_digest(seed, labels), "big") % (2 ** 63)


def counter_uniform(seed: int, *parts: str) -> float:
    """Counter-style uniform in [0, 1), a pure function of (seed, labels)."""
    return int.from_bytes(_label_digest(seed, parts), "big") / 2.0 ** 64


def paired_delta_ci(
    deltas: Sequence[float] | np.ndarray,
    objective: str,
    alpha: float,
    method: CiMethod = CiMethod.BOOTSTRAP_PERCENTILE,
    seed: int = 0,
    b: int = 10_000,
) -> PairedDeltaCI:
    """Two-sided (1 - alpha) interval for the mean of per-item paired deltas.

    The caller supplies direction-normalized deltas (positive = improvement).
    Bootstrap-percentile resamples the deltas `b` times with replacement and
    takes empirical alpha/2 and 1-alpha/2 quantiles of the resampled means;
    when every delta is identical the interval degenerates to the point and is
    flagged. The t-interval uses mean +/- t_{1-alpha/2, n-1} * sd / sqrt(n).
    """
    d = np.asarray(deltas, dtype=float)
    n = d.size
    if n < 2:
        raise TvgovError(f"paired interval needs n >= 2 items, got {n}")
    if not 0.0 < alpha < 1.0:
        raise TvgovError(f"alpha must lie in (0, 1), got {alpha}")
    point = float(d.mean())
    confidence = 1.0 - alpha

    if method is CiMethod.T_INTERVAL:
        sd = float(d.std(ddof=1))
        t_crit = float(sp_stats.t.ppf(1.0 - alpha / 2.0, n - 1))
        half = t_crit * sd / np.sqrt(n)
        return PairedDeltaCI(
            objective=objective,
            point=point,
            lower=float(point - half),
            upper=float(point + half),
            confidence=confidence,
            method=method,
            n=n,
        )

    if np.ptp(d) == 0.0:
        return PairedDeltaCI(
            objective=objective,
            point=point,
            lower=point,
            upper=point,
            confidence=confidence,
            method=method,
            n=n,
            b=b,
            degenerate=True,
        )

    rng = seeded_resampler(seed)
    means = np.empty(b, dtype=float)
    chunk = max(1, min(b, _MAX_BOOTSTRAP_CELLS // n))
    done = 0
    while done < b:
        take = min(chunk, b - done)
        idx = rng.integers(0, n, size=(take, n))
        means[done:done + take] = d[idx].mean(axis=1)
        done += take
    lower, upper = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return PairedDeltaCI(
        objective=objective,
        point=point,
        lower=float(lower),
        upper=float(upper),
        confidence=confidence,
        method=method,
        n=n,
        b=b,
    )


def rate_upper_bound(k: int, n: int, confidence: float, constraint: str = "") -> RateUpperBound:
    """Smallest p with P[Binomial(n, p) <= k] <= 1 - confidence; 1.0 when k = n.

    Closed forms cover the boundaries (k = 0: 1 - (1-confidence)^(1/n)); the
    interior uses the Beta-quantile identity for the exact binomial tail.
    """
    if n < 1:
        raise TvgovError(f"rate bound needs n >= 1 trials, got {n}")
    if not 0 <= k <= n:
        raise TvgovError(f"violation count {k} outside [0, {n}]")
    if not 0.0 < confidence < 1.0:
        raise TvgovError(f"confidence must lie in (0, 1), got {confidence}")
    if k == n:
        upper = 1.0
    elif k == 0:
        upper = 1.0 - (1.0 - confidence) ** (1.0 / n)
    else:
        upper = float(sp_stats.beta.ppf(confidence, k + 1, n - k))
    return RateUpperBound(
        constraint=constraint, successes=k, n=n, confidence=confidence, upper=upper
    )
