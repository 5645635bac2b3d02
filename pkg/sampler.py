"""
Truncated sample generation for truncation-limits.

A pair (Y, T) is drawn by pushing two uniforms through the quantile
functions of F and G; it is kept only when Y >= T. Draw index i always
consumes the i-th row of the Philox stream, so a fixed-n sample is the
prefix of the fixed-population sample with the same seed.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from errors import InvalidSampleError, SamplingBudgetError
from truncation_model import TruncationModel, alpha

logger = logging.getLogger(__name__)

ATTEMPT_BUDGET = 10**9
MAX_BATCH = 1 << 22
RNG_NAME = "numpy.random.Philox"


@dataclass(frozen=True, eq=False)
class TruncatedSample:
    """Observed pairs (t_i, y_i) with y_i >= t_i plus sampling metadata."""

    t: np.ndarray
    y: np.ndarray
    attempted: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if t.shape != y.shape:
            raise InvalidSampleError(f"t and y differ in length ({t.size} vs {y.size})")
        bad = np.flatnonzero(~(y >= t))
        if bad.size:
            i = int(bad[0])
            raise InvalidSampleError(f"pair {i} violates y >= t (t={t[i]!r}, y={y[i]!r})")
        if self.attempted and y.size > self.attempted:
            raise InvalidSampleError(f"{y.size} pairs exceed {self.attempted} attempted draws")
        t.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def pairs(self) -> list:
        return list(zip(self.t.tolist(), self.y.tolist()))

    @property
    def has_ties(self) -> bool:
        return bool(np.unique(self.y).size < self.y.size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.t, "y": self.y})


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(master_seed: int, *keys: int) -> int:
    """
    Derive an independent 64-bit seed from a master seed and integer keys.

    The same (master_seed, keys) always gives the same seed, regardless of
    which worker asks for it.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, np.uint64)[0])


def _pairs_from_uniforms(model: TruncationModel, u: np.ndarray) -> tuple:
    y = np.asarray(model.f.quantile(u[:, 0]), dtype=float)
    t = np.asarray(model.g.quantile(u[:, 1]), dtype=float)
    return t, y


def draw_fixed_population(model: TruncationModel, population: int, seed: int) -> TruncatedSample:
    """
    Simulate N independent (Y, T) draws and keep the observable ones.

    Args:
        model: Truncation model
        population: Number of attempted draws N
        seed: 64-bit seed

    Returns:
        TruncatedSample with n ~ Binomial(N, alpha) pairs and attempted = N
    """
    if population < 0:
        raise ValueError(f"population must be >= 0, got {population}")
    rng = make_rng(seed)
    t, y = _pairs_from_uniforms(model, rng.random((population, 2)))
    keep = y >= t
    return TruncatedSample(t=t[keep], y=y[keep], attempted=population, seed=seed)


def draw_fixed_n(model: TruncationModel, n_target: int, seed: int) -> TruncatedSample:
    """
    Rejection-sample until exactly n_target pairs are accepted.

    Args:
        model: Truncation model
        n_target: Number of observed pairs wanted
        seed: 64-bit seed

    Returns:
        TruncatedSample of size n_target with the attempted count recorded

    Raises:
        SamplingBudgetError: more than 10^9 attempts needed
    """
    if n_target < 0:
        raise ValueError(f"n_target must be >= 0, got {n_target}")
    if n_target == 0:
        return TruncatedSample(t=np.empty(0), y=np.empty(0), attempted=0, seed=seed)

    rng = make_rng(seed)
    rate = alpha(model)
    t_parts, y_parts = [], []
    accepted = 0
    attempted = 0

    while accepted < n_target:
        remaining = n_target - accepted
        batch = int(min(MAX_BATCH, max(64, math.ceil(1.1 * remaining / rate) + 16)))
        if attempted + batch > ATTEMPT_BUDGET:
            batch = ATTEMPT_BUDGET - attempted
            if batch <= 0:
                raise SamplingBudgetError(
                    f"accepted {accepted} of {n_target} pairs within {ATTEMPT_BUDGET} attempts",
                    attempted=attempted,
                    accepted=accepted,
                )
        t, y = _pairs_from_uniforms(model, rng.random((batch, 2)))
        hits = np.flatnonzero(y >= t)
        if hits.size >= remaining:
            # Stop at the draw that completes the sample.
            hits = hits[:remaining]
            attempted += int(hits[-1]) + 1
        else:
            attempted += batch
        t_parts.append(t[hits])
        y_parts.append(y[hits])
        accepted += hits.size

    logger.debug("drew n=%d from %d attempts (seed=%d)", n_target, attempted, seed)
    return TruncatedSample(
        t=np.concatenate(t_parts),
        y=np.concatenate(y_parts),
        attempted=attempted,
        seed=seed,
    )
