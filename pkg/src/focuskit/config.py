"""Strict JSON run configuration: defaults merged with user values, unknown keys rejected."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any

from focuskit.errors import ConfigError
from focuskit.focus import Bisection, FixedStep, FocusConfig

SCHEMA_VERSION = "focuskit-report/1"

FOCUS_DEFAULTS: dict[str, Any] = {
    "batch_size": 16,
    "ess_fraction": 0.5,
    "beta_max": 50.0,
    "step_policy": {"kind": "bisection", "tolerance": 1e-6, "step": 0.1},
    "clip_ratio": None,
    "temper_gamma": 1.0,
    "fallback_max_weight": 0.95,
    "fallback_ess_floor": 2.0,
}

TEXTLAB_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": None,
    "textlab": {
        "task": {
            "vocabulary": None,
            "vocab_size": 50,
            "keywords": ["river", "lantern", "copper", "meadow"],
            "sequence_length": 12,
            "keyword_boost": 1.0,
            "success_threshold": 1.0,
            "noise_sigma": 0.0,
        },
        "focus": FOCUS_DEFAULTS,
        "trials": 1000,
        "resample_count": 0,
        "best_of_n": [16, 100],
        "single_draw": True,
        "beam": {"width": 5, "expansions": 5},
    },
}

ARM_DEFAULTS: dict[str, Any] = {
    "name": None,
    "mode": "baseline",
    "scorer": "distance_proxy",
    "focus": FOCUS_DEFAULTS,
}

GRIDLAB_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": None,
    "gridlab": {
        "env": {
            "rows": 9,
            "cols": 9,
            "start": [0, 0],
            "goal": [8, 8],
            "max_episode_steps": 200,
            "goal_reward": 1.0,
            "step_reward": 0.0,
        },
        "n_seeds": 7,
        "batch_per_update": 16,
        "step_budget": 500_000,
        "learning_rate": 0.1,
        "discount": 0.99,
        "solve": {"success_rate": 0.95, "episodes": 50},
        "arms": [
            {"name": "baseline", "mode": "baseline"},
            {"name": "icfa", "mode": "icfa", "scorer": "distance_proxy"},
        ],
        "diagnostics": False,
    },
}

SPACE_DEFAULTS: dict[str, Any] = {
    "name": None,
    "proposal_mass": None,
    "scores": None,
    "solution_mask": None,
    "beta": 0.0,
}

THEORYLAB_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": None,
    "theorylab": {
        "advantage": [
            {
                "name": "two_element",
                "proposal_mass": [0.5, 0.5],
                "scores": [1.0, 0.0],
                "solution_mask": [True, False],
                "beta": math.log(9.0),
            }
        ],
        "batch_success": {
            "space": "two_element",
            "trials": 20000,
            "focus": {**FOCUS_DEFAULTS, "batch_size": 8},
        },
        "sweep": {
            "family": "needle",
            "sizes": [16, 64, 256, 1024],
            "delta": 0.1,
            "n_seeds": 50,
            "kappa_floor": 1.0,
            "reference_beta_scale": 2.0,
            "max_samples": 1_000_000,
            "focus": FOCUS_DEFAULTS,
        },
    },
}

# sections whose value may be replaced wholesale by null or by a list
_LIST_KEYS = {"arms", "advantage", "best_of_n", "sizes", "keywords", "vocabulary", "start", "goal"}
_NULLABLE_SECTIONS = {"beam", "sweep", "batch_success"}


def strict_merge(defaults: dict, user: dict, where: str = "") -> dict:
    """Overlay ``user`` on ``defaults`` recursively; any key absent from defaults is an error."""
    if not isinstance(user, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        path = f"{where}.{key}" if where else key
        base = defaults[key]
        if isinstance(base, dict) and key not in _LIST_KEYS:
            if value is None and key in _NULLABLE_SECTIONS:
                out[key] = None
            else:
                out[key] = strict_merge(base, value, path)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(defaults: dict, user: dict) -> dict:
    cfg = strict_merge(defaults, user)
    for section in cfg.values():
        if not isinstance(section, dict):
            continue
        if "arms" in section:
            section["arms"] = [
                strict_merge(ARM_DEFAULTS, arm, f"arms[{i}]") for i, arm in enumerate(section["arms"])
            ]
        if "advantage" in section:
            section["advantage"] = [
                strict_merge(SPACE_DEFAULTS, sp, f"advantage[{i}]")
                for i, sp in enumerate(section["advantage"])
            ]
    return cfg


def load_json(path: str | Path) -> dict:
    """Read a config file; unreadable or malformed JSON raises ``ValueError``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must contain a JSON object")
    return data


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def build_focus(section: dict, batch_size: int | None = None) -> FocusConfig:
    sp = section["step_policy"]
    unknown = set(sp) - {"kind", "tolerance", "step"}
    if unknown:
        raise ConfigError(f"unknown key(s) in step_policy: {', '.join(sorted(unknown))}")
    kind = sp.get("kind", "bisection")
    if kind == "bisection":
        policy = Bisection(float(sp.get("tolerance", 1e-6)))
    elif kind == "fixed_step":
        policy = FixedStep(float(sp.get("step", 0.1)))
    else:
        raise ConfigError(f"unknown step_policy kind {kind!r}")
    clip = section["clip_ratio"]
    try:
        return FocusConfig(
            batch_size=int(batch_size if batch_size is not None else section["batch_size"]),
            ess_fraction=float(section["ess_fraction"]),
            beta_max=float(section["beta_max"]),
            step_policy=policy,
            clip_ratio=None if clip is None else float(clip),
            temper_gamma=float(section["temper_gamma"]),
            fallback_max_weight=float(section["fallback_max_weight"]),
            fallback_ess_floor=float(section["fallback_ess_floor"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid focus settings: {exc}") from exc
