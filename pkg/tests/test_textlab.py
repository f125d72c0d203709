import itertools
import math

import numpy as np
import pytest

from focuskit.errors import ConfigError
from focuskit.focus import FocusConfig, ScoredBatch, adapt_beta, select_best
from focuskit.scoring import KeywordSet, keyword_coverage
from focuskit.textlab import (
    TextTask,
    ToyGeneratorConfig,
    beam_search,
    default_task,
    generate_batch,
    paired_sign_test,
    run_beam,
    run_best_of_n,
    run_icfa_text,
    trial_rng,
)


def tiny_task(noise_sigma=0.0):
    gen = ToyGeneratorConfig(vocabulary=("a", "b", "c"), sequence_length=3)
    return TextTask(gen, KeywordSet(("a", "b")), noise_sigma=noise_sigma)


def test_single_keyword_vocabulary_forces_full_coverage():
    gen = ToyGeneratorConfig(vocabulary=("river",), sequence_length=5)
    task = TextTask(gen, KeywordSet(("river",)))
    tb = generate_batch(task, 20, 0)
    assert np.all(tb.coverage == 1.0)


def test_zero_boost_never_hits_keywords():
    gen = ToyGeneratorConfig(vocabulary=("river", "x", "y"), sequence_length=8, keyword_boost=0.0)
    task = TextTask(gen, KeywordSet(("river",)))
    tb = generate_batch(task, 100, 1)
    assert np.all(tb.batch.scores == 0.0)


def test_task_validation():
    gen = ToyGeneratorConfig(vocabulary=("a", "b"), sequence_length=3)
    with pytest.raises(ConfigError):
        TextTask(gen, KeywordSet(("zzz",)))
    with pytest.raises(ConfigError):
        TextTask(gen, KeywordSet(("a",)), noise_sigma=-1)
    with pytest.raises(ConfigError):
        ToyGeneratorConfig(vocabulary=(), sequence_length=3)


def test_batch_coverage_matches_keyword_coverage():
    task = default_task()
    tb = generate_batch(task, 50, 3)
    for i in range(50):
        assert tb.coverage[i] == keyword_coverage(tb.tokens(i), task.target)
    assert np.array_equal(tb.batch.scores, tb.coverage)


def test_mean_coverage_matches_closed_form():
    task = default_task()
    tb = generate_batch(task, 10_000, 5)
    expected = 1 - (49 / 50) ** 12
    se = tb.coverage.std(ddof=1) / math.sqrt(tb.coverage.size)
    assert abs(tb.coverage.mean() - expected) <= 3 * se


def test_best_of_one_matches_inclusion_exclusion():
    task = default_task()
    trials = 20_000
    rep = run_best_of_n(task, 1, trials, seed=7)
    exact = sum((-1) ** j * math.comb(4, j) * (1 - j / 50) ** 12 for j in range(5))
    se = math.sqrt(exact * (1 - exact) / trials)
    assert abs(rep.satisfaction_rate - exact) <= 3 * se


def test_best_of_n_monotone_under_paired_seeds():
    task = default_task()
    rates = [run_best_of_n(task, n, 300, seed=2).outcomes for n in (1, 4, 16, 64)]
    # nested batches: the first n candidates of a trial are shared across sizes
    for small, big in zip(rates, rates[1:]):
        assert np.all(big >= small)


def test_icfa_top_weight_matches_best_of_n_with_exact_scorer():
    task = default_task()
    cfg = FocusConfig(batch_size=16)
    icfa = run_icfa_text(task, cfg, 400, seed=9)
    bon = run_best_of_n(task, 16, 400, seed=9)
    assert np.array_equal(icfa.outcomes, bon.outcomes)


def test_icfa_beta_zero_equals_single_draw():
    task = default_task(sequence_length=40)
    cfg = FocusConfig(batch_size=16, beta_max=0.0)
    icfa = run_icfa_text(task, cfg, 300, seed=3)
    assert np.all(icfa.selected == 0)
    single = run_best_of_n(task, 1, 300, seed=3)
    assert np.array_equal(icfa.outcomes, single.outcomes)


def test_icfa_resampled_is_deterministic():
    task = default_task(noise_sigma=0.25, sequence_length=24)
    cfg = FocusConfig(batch_size=16)
    a = run_icfa_text(task, cfg, 100, seed=4, resample_count=16)
    b = run_icfa_text(task, cfg, 100, seed=4, resample_count=16)
    assert a.row() == b.row() and np.array_equal(a.selected, b.selected)
    assert a.trials == 100 and 0 <= a.satisfaction_rate <= 1


def _brute_force_best(task):
    seqs = np.array(list(itertools.product(range(3), repeat=3)))
    return task.coverage(seqs).max()


def test_exhaustive_beam_finds_global_optimum():
    task = tiny_task()
    best = beam_search(task, 27, np.random.default_rng(0))
    assert task.coverage(np.array([best]))[0] == _brute_force_best(task) == 1.0


def test_limited_expansions_never_beat_exhaustive():
    task = tiny_task()
    full = task.coverage(np.array([beam_search(task, 27, np.random.default_rng(0))]))[0]
    for s in range(20):
        seq = beam_search(task, 1, np.random.default_rng(s), expansions=1)
        assert task.coverage(np.array([seq]))[0] <= full


def test_beam_is_deterministic_and_reports_width():
    task = default_task()
    a = run_beam(task, 4, 5, seed=1)
    b = run_beam(task, 4, 5, seed=1)
    assert np.array_equal(a.outcomes, b.outcomes) and a.samples_per_trial == 4


def test_trial_rng_streams_are_independent_of_order():
    assert trial_rng(3, 5).random() == trial_rng(3, 5).random()
    assert trial_rng(3, 5).random() != trial_rng(3, 6).random()


def test_paired_sign_test():
    better = [True] * 20 + [False] * 5
    worse = [False] * 20 + [False] * 5
    assert paired_sign_test(better, worse) == pytest.approx(0.5**20)
    assert paired_sign_test(worse, better) == 1.0
    assert paired_sign_test(better, better) == 1.0


def test_select_best_on_textbatch_is_argmax():
    tb = generate_batch(default_task(), 16, 12)
    w = adapt_beta(ScoredBatch(tb.batch.scores), FocusConfig()).weights
    assert tb.batch.scores[select_best(w)] == tb.batch.scores.max()
