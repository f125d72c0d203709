"""Sparse-reward grid navigation with reweighted tabular REINFORCE.

The baseline learner averages per-trajectory policy gradients uniformly.  The
focused learner scores each trajectory (total return or closest approach to
the goal), runs the adaptive focusing step on those scores, and uses the
resulting weights in the same gradient step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from focuskit.errors import ConfigError, InvalidBatch
from focuskit.focus import FocusConfig, ScoredBatch, focus_with_fallback
from focuskit.scoring import GoalCell, distance_proxy_score, trajectory_return_score


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])
N_ACTIONS = len(Action)

Cell = tuple[int, int]


def _manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class GridWorldConfig:
    rows: int = 9
    cols: int = 9
    start: Cell = (0, 0)
    goal: Cell = (8, 8)
    max_episode_steps: int = 200
    goal_reward: float = 1.0
    step_reward: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("grid must have at least one row and column")
        for name in ("start", "goal"):
            r, c = getattr(self, name)
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ConfigError(f"{name} {(r, c)} lies outside the grid")
        if self.start == self.goal:
            raise ConfigError("start and goal must differ")
        if self.max_episode_steps < _manhattan(self.start, self.goal):
            raise ConfigError(
                "max_episode_steps is shorter than the distance from start to goal"
            )

    @property
    def goal_target(self) -> GoalCell:
        return GoalCell(self.goal[0], self.goal[1], self.rows, self.cols)


@dataclass(frozen=True)
class Trajectory:
    cells: tuple[Cell, ...]
    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    reached_goal: bool = False

    def __post_init__(self):
        if not (len(self.actions) == len(self.rewards) == len(self.cells) - 1):
            raise InvalidBatch("trajectory needs |actions| = |rewards| = |cells| - 1")

    @property
    def total_return(self) -> float:
        return math.fsum(self.rewards)

    def __len__(self) -> int:
        return len(self.actions)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class TabularPolicy:
    logits: np.ndarray
    learning_rate: float = 0.1
    discount: float = 0.99

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        if logits.ndim != 3 or logits.shape[2] != N_ACTIONS:
            raise ConfigError("logits must have shape (rows, cols, 4)")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.discount <= 1:
            raise ConfigError("discount must lie in (0, 1]")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, rows: int, cols: int, **kwargs) -> TabularPolicy:
        return cls(np.zeros((rows, cols, N_ACTIONS)), **kwargs)

    def probabilities(self) -> np.ndarray:
        return _softmax(self.logits)


def env_step(config: GridWorldConfig, cell: Cell, action: int) -> tuple[Cell, float, bool]:
    dr, dc = MOVES[int(action)]
    r = min(max(cell[0] + dr, 0), config.rows - 1)
    c = min(max(cell[1] + dc, 0), config.cols - 1)
    nxt = (int(r), int(c))
    if nxt == config.goal:
        return nxt, config.goal_reward, True
    return nxt, config.step_reward, False


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def rollout(
    policy: TabularPolicy, config: GridWorldConfig, seed: int | np.random.Generator
) -> Trajectory:
    """Sample one episode; a fixed block of uniforms is drawn per episode."""
    rng = _rng(seed)
    cdf = np.cumsum(policy.probabilities(), axis=-1)
    u = rng.random(config.max_episode_steps)
    cell = config.start
    cells, actions, rewards = [cell], [], []
    done = False
    for t in range(config.max_episode_steps):
        a = min(int(np.searchsorted(cdf[cell], u[t], side="right")), N_ACTIONS - 1)
        cell, reward, done = env_step(config, cell, a)
        cells.append(cell)
        actions.append(a)
        rewards.append(reward)
        if done:
            break
    return Trajectory(tuple(cells), tuple(actions), tuple(rewards), reached_goal=done)


def returns_to_go(rewards: Sequence[float], discount: float) -> np.ndarray:
    g = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        g[t] = acc
    return g


def pg_update(
    policy: TabularPolicy, trajectories: Sequence[Trajectory], weights: Sequence[float]
) -> TabularPolicy:
    """One weighted REINFORCE step on the logits.

    Each step contributes ``lr * w_i * G_t * (onehot(a_t) - pi(.|cell_t))`` to
    the logits of ``cell_t``, with ``G_t`` the discounted return-to-go.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size != len(trajectories):
        raise InvalidBatch(f"{len(trajectories)} trajectories but {w.size} weights")
    probs = policy.probabilities()
    grad = np.zeros_like(policy.logits)
    for traj, wi in zip(trajectories, w):
        if wi == 0 or not traj.actions:
            continue
        coef = wi * returns_to_go(traj.rewards, policy.discount)
        if not coef.any():
            continue
        cells = np.asarray(traj.cells[:-1])
        acts = np.asarray(traj.actions)
        g = -coef[:, None] * probs[cells[:, 0], cells[:, 1]]
        g[np.arange(acts.size), acts] += coef
        np.add.at(grad, (cells[:, 0], cells[:, 1]), g)
    return TabularPolicy(
        policy.logits + policy.learning_rate * grad,
        learning_rate=policy.learning_rate,
        discount=policy.discount,
    )


class TrajectoryScorer(str, enum.Enum):
    TOTAL_RETURN = "total_return"
    DISTANCE_PROXY = "distance_proxy"


@dataclass(frozen=True)
class Baseline:
    name: str = "baseline"


@dataclass(frozen=True)
class Focused:
    focus: FocusConfig = field(default_factory=FocusConfig)
    scorer: TrajectoryScorer = TrajectoryScorer.DISTANCE_PROXY
    name: str = "icfa"

    def __post_init__(self):
        object.__setattr__(self, "scorer", TrajectoryScorer(self.scorer))


TrainMode = Union[Baseline, Focused]


@dataclass(frozen=True)
class SolveCriterion:
    """Greedy evaluation: solved when >= ``success_rate`` of ``episodes`` reach the goal."""

    success_rate: float = 0.95
    episodes: int = 50

    @property
    def required(self) -> int:
        return math.ceil(self.success_rate * self.episodes - 1e-12)


def greedy_success_count(
    policy: TabularPolicy,
    config: GridWorldConfig,
    episodes: int,
    rng: np.random.Generator,
    stop_after_failures: int | None = None,
) -> int:
    """Run greedy episodes (ties broken uniformly at random) and count successes."""
    logits = policy.logits
    best = logits == logits.max(axis=-1, keepdims=True)
    n_best = best.sum(axis=-1)
    successes = failures = 0
    for ep in range(episodes):
        cell = config.start
        tie_seen = False
        done = False
        for _ in range(config.max_episode_steps):
            if n_best[cell] == 1:
                a = int(np.argmax(best[cell]))
            else:
                tie_seen = True
                a = int(rng.choice(np.flatnonzero(best[cell])))
            cell, _, done = env_step(config, cell, a)
            if done:
                break
        if not tie_seen:
            # deterministic path: every remaining episode repeats this one
            return successes + (episodes - ep) if done else successes
        if done:
            successes += 1
        else:
            failures += 1
            if stop_after_failures is not None and failures >= stop_after_failures:
                return successes
    return successes


@dataclass
class TrainReport:
    mode: str
    seed: int
    solved: bool
    env_steps_to_solve: int | None
    updates: int
    env_steps: int
    ess_trace: list[float] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    final_policy: TabularPolicy | None = field(default=None, repr=False)
    trajectories_digest: list[int] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "solved": self.solved,
            "env_steps_to_solve": self.env_steps_to_solve,
            "updates": self.updates,
        }


def _score_trajectories(
    trajs: Sequence[Trajectory], config: GridWorldConfig, scorer: TrajectoryScorer
) -> list[float]:
    if scorer is TrajectoryScorer.DISTANCE_PROXY:
        target = config.goal_target
        return [distance_proxy_score(t, target) for t in trajs]
    return [trajectory_return_score(t) for t in trajs]


def train(
    config: GridWorldConfig,
    mode: TrainMode | None = None,
    *,
    policy_init: TabularPolicy | None = None,
    batch_per_update: int = 16,
    step_budget: int = 500_000,
    solve_criterion: SolveCriterion | None = None,
    seed: int = 0,
    learning_rate: float = 0.1,
    discount: float = 0.99,
    keep_digest: bool = False,
) -> TrainReport:
    """Collect batches, update, and stop at the first greedy solve or when out of budget.

    Only training rollouts count toward ``env_steps``; evaluation episodes are free.
    A batch that would push the total past ``step_budget`` ends the run unsolved.
    """
    mode = mode or Baseline()
    criterion = solve_criterion or SolveCriterion()
    if batch_per_update < 2:
        raise ConfigError("batch_per_update must be at least 2")
    policy = policy_init or TabularPolicy.uniform(
        config.rows, config.cols, learning_rate=learning_rate, discount=discount
    )
    focus_cfg = None
    if isinstance(mode, Focused):
        focus_cfg = mode.focus
        if focus_cfg.batch_size != batch_per_update:
            focus_cfg = FocusConfig(
                **{**focus_cfg.__dict__, "batch_size": batch_per_update}
            )
    rollout_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    eval_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    report = TrainReport(
        mode=mode.name, seed=seed, solved=False, env_steps_to_solve=None, updates=0, env_steps=0
    )
    uniform = np.full(batch_per_update, 1.0 / batch_per_update)
    allowed_failures = criterion.episodes - criterion.required + 1

    while report.env_steps < step_budget:
        trajs = [rollout(policy, config, rollout_rng) for _ in range(batch_per_update)]
        used = sum(len(t) for t in trajs)
        if report.env_steps + used > step_budget:
            break
        report.env_steps += used
        if keep_digest:
            report.trajectories_digest.append(hash(tuple(t.actions for t in trajs)))

        entry = {
            "update": report.updates,
            "mean_return": float(np.mean([t.total_return for t in trajs])),
        }
        if focus_cfg is None:
            weights = uniform
        else:
            scores = _score_trajectories(trajs, config, mode.scorer)
            result, _ = focus_with_fallback(ScoredBatch(scores), focus_cfg, report.updates)
            weights = result.weights
            report.ess_trace.append(result.ess)
            entry["ess"] = result.ess
            entry["beta"] = result.beta
        report.history.append(entry)

        policy = pg_update(policy, trajs, weights)
        report.updates += 1
        wins = greedy_success_count(
            policy, config, criterion.episodes, eval_rng, stop_after_failures=allowed_failures
        )
        if wins >= criterion.required:
            report.solved = True
            report.env_steps_to_solve = report.env_steps
            break

    report.final_policy = policy
    return report


def median_speedup(baseline_steps: Sequence[int | None], focused_steps: Sequence[int | None], cap: int) -> float:
    """Ratio of median steps-to-solve; unsolved runs count as ``cap``."""
    b = np.median([cap if s is None else s for s in baseline_steps])
    f = np.median([cap if s is None else s for s in focused_steps])
    return float(b / f)
