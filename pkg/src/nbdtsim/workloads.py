"""Seeded key generators: uniform, normal, beta, and power-law draws.

All draws come from numpy's PCG64 generator seeded from the DistributionSpec,
so a (spec, count) pair always reproduces the same keys. Values falling outside
the key range are rejected and redrawn rather than clamped, keeping tail
shapes unbiased near the boundaries.

Distinct draws redraw on collision; when the hit rate collapses (the head of
a skewed distribution saturates), the redraw loop switches to the exact
equivalent exponential race: the first-occurrence order of an iid stream is
the ascending order of Exp(1)/p(key), so the remaining keys are taken from a
race over the not-yet-seen ones. Same distribution, no 10^9-draw endgames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, ndtr

KINDS = ("uniform", "normal", "beta", "powlaw")


def default_params(kind: str, lo: int, hi: int) -> dict:
    """Documented parameter defaults; the underlying sources publish none."""
    size = hi - lo + 1
    if kind == "uniform":
        return {}
    if kind == "normal":
        return {"mean": size / 2, "sigma": size / 8}
    if kind == "beta":
        return {"alpha": 2.0, "beta": 2.0}
    if kind == "powlaw":
        return {"exponent": 2.5}
    raise ValueError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class DistributionSpec:
    """A fully pinned key distribution over [lo, hi]."""

    kind: str
    lo: int
    hi: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.hi < self.lo:
            raise ValueError("empty key range")
        merged = default_params(self.kind, self.lo, self.hi)
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        p = self.params
        if self.kind == "normal" and p["sigma"] <= 0:
            raise ValueError("normal sigma must be positive")
        if self.kind == "beta" and (p["alpha"] <= 0 or p["beta"] <= 0):
            raise ValueError("beta shape parameters must be positive")
        if self.kind == "powlaw" and p["exponent"] <= 1:
            raise ValueError("power-law exponent must exceed 1")

    @property
    def range_size(self) -> int:
        return self.hi - self.lo + 1

    def to_config(self) -> dict:
        return {"kind": self.kind, "lo": str(self.lo), "hi": str(self.hi),
                "seed": str(self.seed),
                "params": {k: str(v) for k, v in self.params.items()}}


def spec_from_config(doc: dict) -> DistributionSpec:
    params = {k: float(v) for k, v in doc.get("params", {}).items()}
    return DistributionSpec(doc["kind"], int(doc["lo"]), int(doc["hi"]),
                            int(doc.get("seed", 0)), params)


def _draw_batch(spec: DistributionSpec, rng: np.random.Generator,
                count: int) -> np.ndarray:
    """One batch of raw draws mapped into [lo, hi]; may contain repeats and
    out-of-range values (callers filter)."""
    size = spec.range_size
    p = spec.params
    if spec.kind == "uniform":
        return rng.integers(spec.lo, spec.hi + 1, size=count, dtype=np.int64)
    if spec.kind == "normal":
        x = np.floor(rng.normal(p["mean"], p["sigma"], size=count))
        return spec.lo + x.astype(np.int64)
    if spec.kind == "beta":
        x = np.floor(rng.beta(p["alpha"], p["beta"], size=count) * size)
        return spec.lo + x.astype(np.int64)
    # power law over ranks 1..size via inverse CDF of a truncated Pareto,
    # rank r mapped to key lo + r - 1
    a = p["exponent"]
    u = rng.random(size=count)
    ranks = np.floor((1.0 + u * (size ** (1.0 - a) - 1.0)) ** (1.0 / (1.0 - a)))
    return spec.lo + ranks.astype(np.int64) - 1


def _key_weights(spec: DistributionSpec) -> np.ndarray:
    """P(draw == key) for every key in range, matching _draw_batch's
    discretization (unnormalized is fine for the race)."""
    size = spec.range_size
    p = spec.params
    if spec.kind == "uniform":
        return np.full(size, 1.0)
    edges = np.arange(size + 1, dtype=np.float64)
    if spec.kind == "normal":
        cdf = ndtr((edges - p["mean"]) / p["sigma"])
    elif spec.kind == "beta":
        cdf = betainc(p["alpha"], p["beta"], np.clip(edges / size, 0.0, 1.0))
    else:  # powlaw: floor of the truncated inverse-CDF over ranks 1..size
        a = p["exponent"]
        x = np.minimum(edges + 1.0, size)
        cdf = (x ** (1.0 - a) - 1.0) / (size ** (1.0 - a) - 1.0)
    return np.diff(cdf)


def sample_keys(spec: DistributionSpec, count: int) -> np.ndarray:
    """count keys drawn from the distribution; repeats allowed."""
    rng = np.random.default_rng(spec.seed)
    out = np.empty(count, dtype=np.int64)
    have = 0
    while have < count:
        batch = _draw_batch(spec, rng, max(count - have, 256))
        ok = batch[(batch >= spec.lo) & (batch <= spec.hi)]
        take = min(len(ok), count - have)
        out[have:have + take] = ok[:take]
        have += take
    return out


def gen_keys(spec: DistributionSpec, count: int) -> list[int]:
    """count distinct keys in generation order; collisions are redrawn.

    Batches grow when the hit rate drops (heavy-headed draws collide almost
    always once their head is exhausted), so even power-law draws over wide
    ranges stay tractable.
    """
    if count > spec.range_size:
        raise ValueError(
            f"cannot draw {count} distinct keys from a range of "
            f"{spec.range_size}")
    rng = np.random.default_rng(spec.seed)
    seen = np.zeros(spec.range_size, dtype=bool)
    out: list[int] = []
    batch_size = max(2 * count, 1024)
    while len(out) < count:
        batch = _draw_batch(spec, rng, batch_size)
        rel = batch - spec.lo
        rel = rel[(rel >= 0) & (rel < spec.range_size)]
        uniq, first = np.unique(rel, return_index=True)
        new = ~seen[uniq]
        fresh = uniq[new][np.argsort(first[new], kind="stable")]
        take = fresh[:count - len(out)]
        seen[take] = True
        out.extend((take + spec.lo).tolist())
        if len(fresh) * 20 < batch_size and len(out) < count:
            break  # redraw hit rate collapsed; finish with the race
    if len(out) < count:
        unseen = np.nonzero(~seen)[0]
        w = _key_weights(spec)[unseen]
        with np.errstate(divide="ignore"):
            race = rng.exponential(1.0, size=len(unseen)) / w
        order = np.argsort(race, kind="stable")[:count - len(out)]
        out.extend((unseen[order] + spec.lo).tolist())
    return out
