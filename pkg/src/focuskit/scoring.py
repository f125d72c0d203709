"""Similarity functions ``S(candidate, target)`` used by the labs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable, Protocol, Union

from focuskit.errors import InvalidTarget

if TYPE_CHECKING:
    from focuskit.gridlab import Trajectory


@dataclass(frozen=True)
class KeywordSet:
    keywords: tuple[str, ...]

    def __post_init__(self):
        kws = tuple(self.keywords)
        if not kws:
            raise InvalidTarget("keyword set must be nonempty")
        if len(set(kws)) != len(kws):
            raise InvalidTarget(f"duplicate keywords in {kws!r}")
        object.__setattr__(self, "keywords", kws)


@dataclass(frozen=True)
class GoalCell:
    row: int
    col: int
    # grid shape, needed to normalize distances into [-1, 0]
    rows: int
    cols: int


@dataclass(frozen=True)
class ReturnTarget:
    pass


TargetSpec = Union[KeywordSet, GoalCell, ReturnTarget]


class Scorer(Protocol):
    def __call__(self, candidate: Any, target: TargetSpec) -> float: ...


def keyword_coverage(tokens: Iterable[str], target: KeywordSet) -> float:
    """Fraction of distinct target keywords present among ``tokens`` (case-folded)."""
    if not isinstance(target, KeywordSet) or not target.keywords:
        raise InvalidTarget("keyword_coverage needs a nonempty KeywordSet")
    wanted = {k.lower() for k in target.keywords}
    present = wanted.intersection(t.lower() for t in tokens)
    return len(present) / len(wanted)


def trajectory_return_score(traj: Trajectory, target: TargetSpec | None = None) -> float:
    """Undiscounted total reward of a trajectory."""
    return math.fsum(traj.rewards)


def distance_proxy_score(traj: Trajectory, target: GoalCell) -> float:
    """``-d_min / (rows + cols)`` where ``d_min`` is the closest Manhattan approach to the goal."""
    if not traj.cells:
        raise InvalidTarget("trajectory must visit at least one cell")
    d_min = min(abs(r - target.row) + abs(c - target.col) for r, c in traj.cells)
    return -d_min / (target.rows + target.cols)


def score(candidate: Any, target: TargetSpec) -> float:
    """Dispatch to the scorer matching the target variant."""
    if isinstance(target, KeywordSet):
        return keyword_coverage(candidate, target)
    if isinstance(target, GoalCell):
        return distance_proxy_score(candidate, target)
    if isinstance(target, ReturnTarget):
        return trajectory_return_score(candidate)
    raise InvalidTarget(f"unknown target {target!r}")
