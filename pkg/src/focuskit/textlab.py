"""Toy constrained generation: i.i.d. token sequences scored by keyword coverage.

Three selection strategies are compared on shared, per-trial seeded batches:
focused reweighting, Best-of-N argmax, and a coverage-guided beam search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from focuskit.errors import ConfigError
from focuskit.focus import (
    FocusConfig,
    ResampleScheme,
    ScoredBatch,
    focus_with_fallback,
    resample,
    select_best,
)
from focuskit.scoring import KeywordSet

DEFAULT_KEYWORDS = ("river", "lantern", "copper", "meadow")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, derived from ``(master seed, trial index)``."""
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


@dataclass(frozen=True)
class ToyGeneratorConfig:
    vocabulary: tuple[str, ...]
    sequence_length: int = 12
    keyword_boost: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if not self.vocabulary:
            raise ConfigError("vocabulary must be nonempty")
        if self.sequence_length < 1:
            raise ConfigError("sequence_length must be at least 1")
        if not (math.isfinite(self.keyword_boost) and self.keyword_boost >= 0):
            raise ConfigError("keyword_boost must be a finite nonnegative real")


@dataclass(frozen=True)
class TextTask:
    generator: ToyGeneratorConfig
    target: KeywordSet
    success_threshold: float = 1.0
    # std of Gaussian noise added to every scorer call; 0 means exact coverage
    noise_sigma: float = 0.0

    def __post_init__(self):
        vocab = {t.lower() for t in self.generator.vocabulary}
        missing = [k for k in self.target.keywords if k.lower() not in vocab]
        if missing:
            raise ConfigError(f"keywords not in vocabulary: {missing}")
        if len(self.generator.vocabulary) < len(self.target.keywords):
            raise ConfigError("vocabulary is smaller than the keyword set")
        if not 0 < self.success_threshold <= 1:
            raise ConfigError("success_threshold must lie in (0, 1]")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if not self.token_probabilities().sum() > 0:
            raise ConfigError("proposal assigns zero probability to every token")

    def keyword_masks(self) -> np.ndarray:
        """Boolean matrix (keyword, vocab index): which vocabulary entries match each keyword."""
        vocab = np.array([t.lower() for t in self.generator.vocabulary])
        return np.stack([vocab == k.lower() for k in self.target.keywords])

    def token_probabilities(self) -> np.ndarray:
        is_kw = self.keyword_masks().any(axis=0)
        p = np.where(is_kw, self.generator.keyword_boost, 1.0)
        total = p.sum()
        return p / total if total > 0 else p

    def coverage(self, sequences: np.ndarray) -> np.ndarray:
        """Exact keyword coverage for each row of a (n, length) token-id array."""
        seqs = np.atleast_2d(sequences)
        masks = self.keyword_masks()
        hit = np.stack([m[seqs].any(axis=1) for m in masks], axis=1)
        return hit.mean(axis=1)

    def noisy(self, coverage: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.noise_sigma == 0:
            return np.asarray(coverage, dtype=float)
        return coverage + rng.normal(0.0, self.noise_sigma, size=np.shape(coverage))

    def satisfied(self, coverage) -> np.ndarray:
        return np.asarray(coverage) >= self.success_threshold - 1e-12


def default_task(noise_sigma: float = 0.0, vocab_size: int = 50, sequence_length: int = 12) -> TextTask:
    filler = [f"w{i:02d}" for i in range(vocab_size - len(DEFAULT_KEYWORDS))]
    gen = ToyGeneratorConfig(
        vocabulary=tuple(DEFAULT_KEYWORDS) + tuple(filler), sequence_length=sequence_length
    )
    return TextTask(gen, KeywordSet(DEFAULT_KEYWORDS), noise_sigma=noise_sigma)


@dataclass(frozen=True)
class TextBatch:
    batch: ScoredBatch
    sequences: np.ndarray
    coverage: np.ndarray
    vocabulary: tuple[str, ...]

    def tokens(self, i: int) -> list[str]:
        return [self.vocabulary[j] for j in self.sequences[i]]


def generate_batch(task: TextTask, M: int, seed: int | np.random.Generator) -> TextBatch:
    if M < 1:
        raise ConfigError("M must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = task.token_probabilities()
    seqs = rng.choice(p.size, size=(M, task.generator.sequence_length), p=p)
    cov = task.coverage(seqs)
    scores = task.noisy(cov, rng)
    return TextBatch(ScoredBatch(scores), seqs, cov, task.generator.vocabulary)


@dataclass
class ExperimentReport:
    method: str
    satisfaction_rate: float
    trials: int
    samples_per_trial: int
    seed: int
    mean_ess: float | None = None
    mean_beta: float | None = None
    fallback_rate: float | None = None
    outcomes: np.ndarray = field(default_factory=lambda: np.zeros(0, bool), repr=False)
    selected: np.ndarray = field(default_factory=lambda: np.zeros(0, int), repr=False)

    COLUMNS = (
        "method",
        "satisfaction_rate",
        "trials",
        "samples_per_trial",
        "mean_ess",
        "mean_beta",
        "fallback_rate",
        "seed",
    )

    def row(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


def _report(method, outcomes, selected, samples, seed, **extra) -> ExperimentReport:
    outcomes = np.asarray(outcomes, dtype=bool)
    return ExperimentReport(
        method=method,
        satisfaction_rate=float(outcomes.mean()),
        trials=int(outcomes.size),
        samples_per_trial=int(samples),
        seed=seed,
        outcomes=outcomes,
        selected=np.asarray(selected, dtype=int),
        **extra,
    )


def _rescored_choice(
    task: TextTask, tb: TextBatch, weights: np.ndarray, count: int, rng: np.random.Generator
) -> int:
    """Resample ``count`` indices, score each draw again, pick the best running mean.

    Only candidates drawn at least once are eligible; each candidate's estimate
    averages its batch score with one fresh scorer call per draw.
    """
    idx = resample(weights, count, ResampleScheme.SYSTEMATIC, rng)
    fresh = task.noisy(tb.coverage[idx], rng)
    drawn = np.unique(idx)
    totals = tb.batch.scores.copy()
    counts = np.ones_like(totals)
    np.add.at(totals, idx, fresh)
    np.add.at(counts, idx, 1.0)
    means = totals[drawn] / counts[drawn]
    return int(drawn[np.argmax(means)])


def run_icfa_text(
    task: TextTask,
    config: FocusConfig,
    trials: int,
    seed: int,
    resample_count: int = 0,
    method: str = "icfa",
) -> ExperimentReport:
    """Focus each trial's batch and select one candidate.

    ``resample_count == 0`` selects the highest-weight candidate; otherwise the
    weighted set is resampled and the draws are re-scored before selecting.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    M = config.batch_size
    outcomes, selected, esss, betas, falls = [], [], [], [], []
    for t in range(trials):
        rng = trial_rng(seed, t)
        tb = generate_batch(task, M, rng)
        result, _ = focus_with_fallback(tb.batch, config, ordinal=t)
        if resample_count:
            i = _rescored_choice(task, tb, result.weights, resample_count, rng)
        else:
            i = result.selected_index
        outcomes.append(task.satisfied(tb.coverage[i]))
        selected.append(i)
        esss.append(result.ess)
        betas.append(result.beta)
        falls.append(result.fallback_triggered)
    return _report(
        method,
        outcomes,
        selected,
        M,
        seed,
        mean_ess=float(np.mean(esss)),
        mean_beta=float(np.mean(betas)),
        fallback_rate=float(np.mean(falls)),
    )


def run_best_of_n(
    task: TextTask, N: int, trials: int, seed: int, method: str = "best_of_n"
) -> ExperimentReport:
    """Draw ``N`` candidates per trial and keep the argmax score (lowest index on ties)."""
    if N < 1 or trials < 1:
        raise ConfigError("N and trials must be at least 1")
    outcomes, selected = [], []
    for t in range(trials):
        tb = generate_batch(task, N, trial_rng(seed, t))
        i = select_best_score(tb.batch.scores)
        outcomes.append(task.satisfied(tb.coverage[i]))
        selected.append(i)
    return _report(method, outcomes, selected, N, seed)


def select_best_score(scores: Sequence[float]) -> int:
    return int(np.argmax(np.asarray(scores, dtype=float)))


def beam_search(
    task: TextTask,
    beam_width: int,
    rng: np.random.Generator,
    expansions: int | None = None,
) -> tuple[int, ...]:
    """Grow prefixes one token at a time, keeping the ``beam_width`` best by partial coverage.

    Each prefix is extended by every supported token, or by ``expansions``
    tokens drawn without replacement from the proposal.  Ranking is by
    (scored coverage desc, prefix lexicographic asc, seeded random key).
    """
    if beam_width < 1:
        raise ConfigError("beam_width must be at least 1")
    p = task.token_probabilities()
    support = np.flatnonzero(p > 0)
    beams: list[tuple[int, ...]] = [()]
    for _ in range(task.generator.sequence_length):
        cands = []
        for prefix in beams:
            if expansions is None or expansions >= support.size:
                toks = support
            else:
                toks = np.sort(rng.choice(p.size, size=expansions, replace=False, p=p))
            cands.extend(prefix + (int(tok),) for tok in toks)
        cands = list(dict.fromkeys(cands))
        cov = task.coverage(np.array(cands))
        scored = task.noisy(cov, rng)
        tiebreak = rng.random(len(cands))
        order = sorted(range(len(cands)), key=lambda i: (-scored[i], cands[i], tiebreak[i]))
        beams = [cands[i] for i in order[:beam_width]]
    return beams[0]


def run_beam(
    task: TextTask,
    beam_width: int,
    trials: int,
    seed: int,
    expansions: int | None = None,
    method: str = "beam",
) -> ExperimentReport:
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    outcomes = []
    for t in range(trials):
        best = beam_search(task, beam_width, trial_rng(seed, t), expansions)
        outcomes.append(task.satisfied(task.coverage(np.array([best]))[0]))
    return _report(method, outcomes, np.zeros(trials, int), beam_width, seed)


def paired_sign_test(better: Sequence[bool], worse: Sequence[bool]) -> float:
    """One-sided exact sign test p-value for H1: ``better`` succeeds more often than ``worse``.

    Only discordant pairs carry information (McNemar's exact form).
    """
    from scipy.stats import binomtest

    a = np.asarray(better, dtype=bool)
    b = np.asarray(worse, dtype=bool)
    wins = int(np.sum(a & ~b))
    losses = int(np.sum(~a & b))
    if wins + losses == 0:
        return 1.0
    return float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)
