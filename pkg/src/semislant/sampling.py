"""Deterministic sample plans: quasi-random points in a box, seeded test vectors."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

DEFAULT_SAMPLES = 25
DEFAULT_VECTORS = 8
DEFAULT_SEED = 42


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplePlan:
    samples: int = DEFAULT_SAMPLES
    vectors: int = DEFAULT_VECTORS
    seed: int = DEFAULT_SEED
    fd_step: float = 1e-5
    richardson: bool = False

    def points(self, spec) -> list[np.ndarray]:
        """``samples`` scrambled-Halton points in the spec's box, outside its excluded region."""
        lo, hi = np.asarray(spec.box_lo, float), np.asarray(spec.box_hi, float)
        if self.samples <= 0:
            return []
        width = hi - lo
        span = width > 0
        sampler = qmc.Halton(max(1, int(span.sum())), scramble=True, seed=self.seed)
        out: list[np.ndarray] = []
        drawn = 0
        while len(out) < self.samples:
            if drawn > 1000 * self.samples:
                raise SamplingError(f"excluded region of {spec.name!r} rejects almost every point")
            batch = sampler.random(self.samples)
            drawn += len(batch)
            for u in batch:
                x = lo.copy()
                x[span] = lo[span] + u * width[span]
                if spec.excluded(x):
                    continue
                out.append(x)
                if len(out) == self.samples:
                    break
        return out

    def rng(self, check: str, sample: int = 0) -> np.random.Generator:
        """Generator for one (check, sample) cell, independent of execution order."""
        return np.random.default_rng([self.seed, zlib.crc32(check.encode()), sample])

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "vectors": self.vectors,
            "seed": self.seed,
            "fd_step": self.fd_step,
            "richardson": self.richardson,
        }


def random_unit_vectors(rng: np.random.Generator, basis: np.ndarray, count: int, gram=None) -> list[np.ndarray]:
    """Random unit vectors in span(basis columns), unit w.r.t. ``gram`` (identity if None)."""
    if basis.shape[1] == 0:
        return []
    out = []
    for _ in range(count):
        v = basis @ rng.standard_normal(basis.shape[1])
        norm = np.sqrt(v @ (v if gram is None else gram @ v))
        out.append(v / norm)
    return out
