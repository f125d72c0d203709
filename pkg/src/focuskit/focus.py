"""Target-conditioned reweighting of a proposal batch with ESS-controlled focusing.

A batch of candidates drawn from a proposal carries similarity scores ``S_i``.
Weights ``w_i ∝ exp(beta * S_i)`` tilt the batch toward high scorers; ``beta`` is
raised from zero only while the effective sample size stays above
``ess_fraction * M``.  The result can be used to pick one candidate, to resample
a few, or as a weighted set for downstream estimators.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from focuskit.errors import (
    ClipInfeasible,
    ConfigError,
    InvalidBatch,
    InvalidWeights,
    NonFiniteScore,
)

MAX_EVALUATIONS = 60


def _as_scores(scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidBatch("scores must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteScore("scores must all be finite")
    return arr


def _as_weights(weights) -> np.ndarray:
    arr = np.asarray(weights, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidWeights("weights must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidWeights("weights must be finite and nonnegative")
    if not arr.sum() > 0:
        raise InvalidWeights("weights must not all be zero")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScoredBatch:
    """Similarity scores for one proposal batch plus opaque candidate ids."""

    scores: np.ndarray
    payload_ids: tuple = ()

    def __post_init__(self):
        scores = _as_scores(self.scores)
        ids = tuple(self.payload_ids) if len(self.payload_ids) else tuple(range(scores.size))
        if len(ids) != scores.size:
            raise InvalidBatch(
                f"{scores.size} scores but {len(ids)} payload ids"
            )
        object.__setattr__(self, "scores", _frozen(scores))
        object.__setattr__(self, "payload_ids", ids)

    def __len__(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class FixedStep:
    step: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.step) and self.step > 0):
            raise ConfigError("FixedStep.step must be a positive real")


@dataclass(frozen=True)
class Bisection:
    tolerance: float = 1e-6

    def __post_init__(self):
        if not (math.isfinite(self.tolerance) and self.tolerance > 0):
            raise ConfigError("Bisection.tolerance must be a positive real")


StepPolicy = Union[FixedStep, Bisection]


@dataclass(frozen=True)
class FocusConfig:
    batch_size: int = 16
    ess_fraction: float = 0.5
    beta_max: float = 50.0
    step_policy: StepPolicy = field(default_factory=Bisection)
    clip_ratio: float | None = None
    temper_gamma: float = 1.0
    # 0 is allowed: it forces the fallback branch on every batch.
    fallback_max_weight: float = 0.95
    fallback_ess_floor: float = 2.0

    def __post_init__(self):
        if isinstance(self.batch_size, bool) or int(self.batch_size) != self.batch_size:
            raise ConfigError("batch_size must be an integer")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if not 0 < self.ess_fraction < 1:
            raise ConfigError("ess_fraction must lie in (0, 1)")
        if not (math.isfinite(self.beta_max) and self.beta_max >= 0):
            raise ConfigError("beta_max must be a finite nonnegative real")
        if not isinstance(self.step_policy, (FixedStep, Bisection)):
            raise ConfigError("step_policy must be FixedStep or Bisection")
        if not 0 < self.temper_gamma <= 1:
            raise ConfigError("temper_gamma must lie in (0, 1]")
        if not 0 <= self.fallback_max_weight <= 1:
            raise ConfigError("fallback_max_weight must lie in [0, 1]")
        if not (math.isfinite(self.fallback_ess_floor) and self.fallback_ess_floor >= 0):
            raise ConfigError("fallback_ess_floor must be a finite nonnegative real")
        if self.clip_ratio is not None:
            if self.clip_ratio > 1:
                raise ConfigError("clip_ratio must not exceed 1")
            if self.clip_ratio <= 1.0 / self.batch_size:
                raise ClipInfeasible(
                    f"clip_ratio {self.clip_ratio} <= 1/M = {1.0 / self.batch_size}"
                )


@dataclass(frozen=True)
class FocusResult:
    beta: float
    weights: np.ndarray
    ess: float
    trace: tuple[tuple[float, float], ...]
    fallback_triggered: bool = False
    selected_index: int | None = None

    @property
    def evaluations(self) -> int:
        return len(self.trace)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "weights": [float(w) for w in self.weights],
            "ess": self.ess,
            "trace": [[b, e] for b, e in self.trace],
            "fallback_triggered": self.fallback_triggered,
            "selected_index": self.selected_index,
        }


@dataclass(frozen=True)
class DiagnosticsRecord:
    ess_fraction: float
    max_weight: float
    weight_entropy: float
    timestamp_ordinal: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "ess_fraction": self.ess_fraction,
                "max_weight": self.max_weight,
                "weight_entropy": self.weight_entropy,
                "timestamp_ordinal": self.timestamp_ordinal,
            },
            sort_keys=True,
        )


def normalized_weights(scores: Sequence[float], beta: float) -> np.ndarray:
    """Return ``exp(beta * (S_i - max S)) / sum_j exp(beta * (S_j - max S))``."""
    s = _as_scores(scores)
    if not (math.isfinite(beta) and beta >= 0):
        raise InvalidBatch("beta must be finite and nonnegative")
    u = np.exp(beta * (s - s.max()))
    return u / u.sum()


def ess(weights: Sequence[float]) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``; invariant to rescaling."""
    w = _as_weights(weights)
    # scale first so that squaring tiny or huge weights cannot under/overflow
    w = w / w.max()
    return float(w.sum() ** 2 / np.dot(w, w))


def weight_entropy(weights: Sequence[float]) -> float:
    w = _as_weights(weights)
    w = w / w.sum()
    nz = w[w > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def _check_batch(batch: ScoredBatch, config: FocusConfig) -> None:
    if len(batch) != config.batch_size:
        raise InvalidBatch(
            f"batch has {len(batch)} candidates, config expects M={config.batch_size}"
        )


def adapt_beta(batch: ScoredBatch, config: FocusConfig) -> FocusResult:
    """Find the largest focusing strength whose weights keep ESS >= rho * M.

    The returned trace holds every evaluated ``(beta, ess)`` pair sorted by
    beta, so its ESS column is nonincreasing.
    """
    _check_batch(batch, config)
    target = config.ess_fraction * config.batch_size
    scores = batch.scores
    evaluated: dict[float, tuple[np.ndarray, float]] = {}

    def evaluate(beta: float) -> tuple[np.ndarray, float]:
        if beta not in evaluated:
            w = normalized_weights(scores, beta)
            evaluated[beta] = (w, ess(w))
        return evaluated[beta]

    policy = config.step_policy
    if isinstance(policy, FixedStep):
        beta = 0.0
        w, e = evaluate(0.0)
        k = 1
        while beta < config.beta_max and len(evaluated) < MAX_EVALUATIONS:
            nxt = min(k * policy.step, config.beta_max)
            w_next, e_next = evaluate(nxt)
            if e_next < target:
                break
            beta, w, e = nxt, w_next, e_next
            k += 1
    else:
        beta = 0.0
        w, e = evaluate(0.0)
        if config.beta_max > 0:
            w_hi, e_hi = evaluate(config.beta_max)
            if e_hi >= target:
                beta, w, e = config.beta_max, w_hi, e_hi
            else:
                lo, hi = 0.0, config.beta_max
                tol = policy.tolerance
                while (
                    hi - lo >= tol
                    and e - target > tol
                    and len(evaluated) < MAX_EVALUATIONS
                ):
                    mid = 0.5 * (lo + hi)
                    w_mid, e_mid = evaluate(mid)
                    if e_mid >= target:
                        lo, beta, w, e = mid, mid, w_mid, e_mid
                    else:
                        hi = mid

    trace = tuple((b, evaluated[b][1]) for b in sorted(evaluated))
    return FocusResult(beta=float(beta), weights=_frozen(w), ess=float(e), trace=trace)


def regularize(
    weights: Sequence[float], clip_ratio: float | None = None, gamma: float = 1.0
) -> np.ndarray:
    """Temper with ``w**gamma``, cap at ``clip_ratio`` once, then renormalize.

    Capping is a single pass, so after renormalization the largest weight can
    again exceed ``clip_ratio``.
    """
    w = _as_weights(weights)
    if abs(w.sum() - 1) > 1e-9:
        w = w / w.sum()
    if not 0 < gamma <= 1:
        raise ConfigError("gamma must lie in (0, 1]")
    if clip_ratio is not None and clip_ratio <= 1.0 / w.size:
        raise ClipInfeasible(f"clip_ratio {clip_ratio} <= 1/M = {1.0 / w.size}")
    if gamma == 1 and clip_ratio is None:
        return w.copy()
    if gamma != 1:
        w = w**gamma
    if clip_ratio is not None:
        w = np.minimum(w, clip_ratio)
    return w / w.sum()


def estimate_expectation(weights: Sequence[float], f_values: Sequence[float]) -> float:
    """Self-normalized estimate ``sum_i w_i f_i``."""
    w = _as_weights(weights)
    f = np.asarray(f_values, dtype=float)
    if f.shape != w.shape:
        raise InvalidBatch(f"{w.size} weights but {f.size} function values")
    return float(np.dot(w / w.sum(), f))


class ResampleScheme(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"


def resample(
    weights: Sequence[float],
    count: int,
    scheme: ResampleScheme | str = ResampleScheme.MULTINOMIAL,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """Draw ``count`` candidate indices in proportion to ``weights``."""
    w = _as_weights(weights)
    if count < 1:
        raise InvalidWeights("count must be at least 1")
    scheme = ResampleScheme(scheme)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    if scheme is ResampleScheme.SYSTEMATIC:
        positions = (rng.random() + np.arange(count)) / count
    else:
        positions = rng.random(count)
    idx = np.searchsorted(cdf, positions, side="right")
    return np.minimum(idx, w.size - 1)


def select_best(weights: Sequence[float]) -> int:
    """Index of the largest weight; ties go to the lowest index."""
    return int(np.argmax(_as_weights(weights)))


def diagnostics(result: FocusResult, ordinal: int = 0) -> DiagnosticsRecord:
    m = result.weights.size
    return DiagnosticsRecord(
        ess_fraction=result.ess / m,
        max_weight=float(result.weights.max()),
        weight_entropy=weight_entropy(result.weights),
        timestamp_ordinal=ordinal,
    )


def focus_with_fallback(
    batch: ScoredBatch, config: FocusConfig, ordinal: int = 0
) -> tuple[FocusResult, DiagnosticsRecord]:
    """Adapt beta, regularize, and revert to uniform weights on collapse."""
    adapted = adapt_beta(batch, config)
    w = regularize(adapted.weights, config.clip_ratio, config.temper_gamma)
    e = ess(w)
    beta = adapted.beta
    fallback = bool(w.max() > config.fallback_max_weight or e < config.fallback_ess_floor)
    if fallback:
        m = config.batch_size
        w = np.full(m, 1.0 / m)
        e = float(m)
        beta = 0.0
    result = FocusResult(
        beta=beta,
        weights=_frozen(w),
        ess=float(e),
        trace=adapted.trace,
        fallback_triggered=fallback,
        selected_index=select_best(w),
    )
    return result, diagnostics(result, ordinal)


def focus(scores: Sequence[float], config: FocusConfig | None = None, **overrides) -> FocusResult:
    """Convenience wrapper: build a batch from raw scores and run the fallback pipeline."""
    scores = _as_scores(scores)
    if config is None:
        config = FocusConfig(batch_size=scores.size, **overrides)
    result, _ = focus_with_fallback(ScoredBatch(scores), config)
    return result
