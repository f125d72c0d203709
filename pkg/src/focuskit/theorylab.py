"""Checks of the solution-mass identity and sample-complexity scaling on enumerable spaces."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import linregress, multinomial

from focuskit.errors import AdvantageTooWeak, ConfigError, DegenerateSpace
from focuskit.focus import FocusConfig, ResampleScheme, ScoredBatch, adapt_beta, resample, select_best


@dataclass(frozen=True)
class EnumerableSpace:
    proposal_mass: np.ndarray
    scores: np.ndarray
    solution_mask: np.ndarray

    def __post_init__(self):
        p = np.array(self.proposal_mass, dtype=float)
        s = np.array(self.scores, dtype=float)
        m = np.array(self.solution_mask, dtype=bool)
        if not (p.ndim == s.ndim == m.ndim == 1 and p.size == s.size == m.size and p.size):
            raise ConfigError("proposal_mass, scores and solution_mask must be equal-length vectors")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ConfigError("proposal_mass must be nonnegative and sum to 1")
        if not np.all(np.isfinite(s)):
            raise ConfigError("scores must be finite")
        for name, arr in (("proposal_mass", p), ("scores", s), ("solution_mask", m)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.scores.size

    def require_both_sets(self) -> None:
        if not self.solution_mask.any():
            raise DegenerateSpace("no solutions in the space")
        if self.solution_mask.all():
            raise DegenerateSpace("every element is a solution; complement is empty")


def needle_space(n: int) -> EnumerableSpace:
    """Uniform proposal over ``n`` elements, one solution (index 0) scoring 1, the rest 0."""
    if n < 2:
        raise ConfigError("needle space needs at least 2 elements")
    scores = np.zeros(n)
    scores[0] = 1.0
    mask = np.zeros(n, bool)
    mask[0] = True
    return EnumerableSpace(np.full(n, 1.0 / n), scores, mask)


@dataclass(frozen=True)
class AdvantageReport:
    beta: float
    A: float
    B: float
    kappa: float
    mass_lower_bound: float
    exact_solution_mass: float
    total_mass: float

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "A": self.A,
            "B": self.B,
            "kappa": self.kappa,
            "mass_lower_bound": self.mass_lower_bound,
            "exact_solution_mass": self.exact_solution_mass,
        }


def advantage(space: EnumerableSpace, beta: float) -> AdvantageReport:
    """Reweighted solution mass ``A``, non-solution mass ``B`` and ``kappa = ln(A/B)``.

    Both sums share the factor ``exp(-beta * max S)``, which cancels in every ratio.
    """
    space.require_both_sets()
    if not (math.isfinite(beta) and beta >= 0):
        raise ConfigError("beta must be finite and nonnegative")
    p, s, m = space.proposal_mass, space.scores, space.solution_mask
    with np.errstate(divide="ignore"):
        logw = np.log(p) + beta * (s - s.max())
    log_a = logsumexp(logw[m])
    log_b = logsumexp(logw[~m])
    if not (np.isfinite(log_a) and np.isfinite(log_b)):
        raise DegenerateSpace("solution set or complement carries zero proposal mass")
    a, b = math.exp(log_a), math.exp(log_b)
    kappa = log_a - log_b
    return AdvantageReport(
        beta=float(beta),
        A=a,
        B=b,
        kappa=float(kappa),
        mass_lower_bound=1.0 / (1.0 + math.exp(-kappa)),
        exact_solution_mass=a / (a + b),
        total_mass=float(np.exp(logsumexp(logw))),
    )


def _draw_success(space: EnumerableSpace, config: FocusConfig, rng: np.random.Generator) -> bool:
    idx = rng.choice(space.size, size=config.batch_size, p=space.proposal_mass)
    result = adapt_beta(ScoredBatch(space.scores[idx]), config)
    pick = resample(result.weights, 1, ResampleScheme.MULTINOMIAL, rng)[0]
    return bool(space.solution_mask[idx[pick]])


def batch_success_probability(
    space: EnumerableSpace, config: FocusConfig, trials: int, seed: int
) -> float:
    """Monte Carlo rate at which one batch (draw M, adapt beta, resample once) yields a solution."""
    if not space.solution_mask.any():
        raise DegenerateSpace("no solutions in the space")
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    hits = sum(_draw_success(space, config, rng) for _ in range(trials))
    return hits / trials


def exact_batch_success_probability(space: EnumerableSpace, config: FocusConfig) -> float:
    """Same quantity by enumerating every batch composition (small N and M only)."""
    if not space.solution_mask.any():
        raise DegenerateSpace("no solutions in the space")
    n, M = space.size, config.batch_size
    if math.comb(n + M - 1, M) > 200_000:
        raise ConfigError("too many batch compositions to enumerate")
    total = 0.0
    for combo in itertools.combinations_with_replacement(range(n), M):
        counts = np.bincount(combo, minlength=n)
        prob = multinomial.pmf(counts, M, space.proposal_mass)
        if prob == 0:
            continue
        idx = np.array(combo)
        w = adapt_beta(ScoredBatch(space.scores[idx]), config).weights
        total += prob * float(w[space.solution_mask[idx]].sum())
    return total


@dataclass(frozen=True)
class SpaceFamily:
    """Spaces indexed by size, with the beta at which kappa is checked for each size."""

    build: Callable[[int], EnumerableSpace]
    reference_beta: Callable[[int], float]
    name: str = "family"


def needle_family() -> SpaceFamily:
    return SpaceFamily(needle_space, lambda n: 2.0 * math.log(n), name="needle")


def _icfa_samples_to_success(
    space: EnumerableSpace, config: FocusConfig, rng: np.random.Generator, max_samples: int
) -> int:
    """Proposal draws consumed until a focused batch's top-weight pick is a solution."""
    used = 0
    while used < max_samples:
        idx = rng.choice(space.size, size=config.batch_size, p=space.proposal_mass)
        used += config.batch_size
        result = adapt_beta(ScoredBatch(space.scores[idx]), config)
        if space.solution_mask[idx[select_best(result.weights)]]:
            return used
    return max_samples


def _naive_samples_to_success(
    space: EnumerableSpace, rng: np.random.Generator, max_samples: int, chunk: int = 256
) -> int:
    used = 0
    while used < max_samples:
        idx = rng.choice(space.size, size=chunk, p=space.proposal_mass)
        hits = np.flatnonzero(space.solution_mask[idx])
        if hits.size:
            return min(used + int(hits[0]) + 1, max_samples)
        used += chunk
    return max_samples


@dataclass(frozen=True)
class SweepRow:
    N: int
    delta: float
    quantile_samples: float
    median_samples: float
    ratio_to_log: float
    method: str
    kappa: float

    COLUMNS = ("N", "delta", "quantile_samples", "median_samples", "ratio_to_log", "method", "kappa")

    def row(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


def sample_complexity_sweep(
    family: SpaceFamily,
    sizes: Sequence[int],
    config: FocusConfig,
    delta: float,
    seeds: Sequence[int],
    kappa_floor: float = 0.0,
    max_samples: int = 1_000_000,
    methods: Sequence[str] = ("icfa", "naive"),
) -> list[SweepRow]:
    """Samples until the first solution, per size and seed, for focused and naive search.

    Each row reports the ``1 - delta`` quantile over seeds and its ratio to
    ``log(N / delta)``.  Raises ``AdvantageTooWeak`` if any space has kappa
    below ``kappa_floor`` at its reference beta.
    """
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    if not seeds:
        raise ConfigError("at least one seed is required")
    spaces = {}
    for n in sizes:
        space = family.build(n)
        rep = advantage(space, family.reference_beta(n))
        if rep.kappa < kappa_floor:
            raise AdvantageTooWeak(
                f"kappa={rep.kappa:.4g} < floor {kappa_floor} for N={n}"
            )
        spaces[n] = (space, rep.kappa)
    rows = []
    for n in sizes:
        space, kappa = spaces[n]
        for method in methods:
            samples = []
            for seed in seeds:
                rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
                if method == "icfa":
                    samples.append(_icfa_samples_to_success(space, config, rng, max_samples))
                elif method == "naive":
                    samples.append(_naive_samples_to_success(space, rng, max_samples))
                else:
                    raise ConfigError(f"unknown sweep method {method!r}")
            q = float(np.quantile(samples, 1 - delta))
            rows.append(
                SweepRow(
                    N=n,
                    delta=delta,
                    quantile_samples=q,
                    median_samples=float(np.median(samples)),
                    ratio_to_log=q / math.log(n / delta),
                    method=method,
                    kappa=kappa,
                )
            )
    return rows


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float


def fit_scaling(sizes: Sequence[int], samples: Sequence[float], against: str) -> ScalingFit:
    """Least-squares fit of samples on ``log N`` (``against="log"``) or on ``N`` (``"linear"``)."""
    x = np.asarray(sizes, dtype=float)
    if against == "log":
        x = np.log(x)
    elif against != "linear":
        raise ConfigError("against must be 'log' or 'linear'")
    fit = linregress(x, np.asarray(samples, dtype=float))
    return ScalingFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2))
