"""Command-line entry point: ``focuskit {focus,textlab,gridlab,theorylab}``.

Exit codes: 0 ok, 2 unparsable input, 3 invalid configuration,
4 failed experiment precondition (degenerate space, weak advantage).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from focuskit import gridlab, textlab, theorylab
from focuskit.config import (
    GRIDLAB_DEFAULTS,
    SCHEMA_VERSION,
    TEXTLAB_DEFAULTS,
    THEORYLAB_DEFAULTS,
    build_focus,
    config_digest,
    load_json,
    resolve,
)
from focuskit.errors import AdvantageTooWeak, ConfigError, DegenerateSpace, FocusKitError
from focuskit.focus import Bisection, FixedStep, FocusConfig, ScoredBatch, focus_with_fallback
from focuskit.scoring import KeywordSet

EXIT_OK, EXIT_PARSE, EXIT_CONFIG, EXIT_PRECONDITION = 0, 2, 3, 4


class UsageError(Exception):
    def __init__(self, message: str, flag: str | None = None):
        super().__init__(message)
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flags = [w.strip(",.:'\"") for w in message.split() if w.startswith("--")]
        raise UsageError(message, flags[0] if flags else None)


def _fail(code: int, kind: str, message: str, **extra) -> int:
    payload = {"error": kind, "message": message, "exit_code": code, **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


# ----------------------------------------------------------------- writers


def _cell(v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict], digest: str) -> None:
    cols = list(columns) + ["schema_version", "config_sha256"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            full = {**row, "schema_version": SCHEMA_VERSION, "config_sha256": digest}
            writer.writerow([_cell(full[c]) for c in cols])


def _jsonable(v: Any) -> Any:
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_jsonl(path: Path, rows: Iterable[dict], digest: str) -> None:
    with path.open("w") as fh:
        for row in rows:
            rec = {**_jsonable(row), "schema_version": SCHEMA_VERSION, "config_sha256": digest}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_json(path: Path, obj: dict, cfg: dict) -> None:
    rec = {**_jsonable(obj), "schema_version": SCHEMA_VERSION, "config": cfg}
    path.write_text(json.dumps(rec, sort_keys=True, indent=2) + "\n")


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------- focus


def _parse_scores(text: str) -> list[float]:
    parts = [p for p in text.replace("\n", ",").split(",") if p.strip()]
    if not parts:
        raise ValueError("no scores given")
    values = [float(p) for p in parts]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("scores must be finite numbers")
    return values


def cmd_focus(args) -> int:
    try:
        if args.scores_file:
            scores = _parse_scores(Path(args.scores_file).read_text())
        else:
            scores = _parse_scores(args.scores)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_PARSE, "ParseError", str(exc), flag="--scores")
    try:
        policy = FixedStep(args.step) if args.step is not None else Bisection(args.tolerance)
        config = FocusConfig(
            batch_size=len(scores),
            ess_fraction=args.rho,
            beta_max=args.beta_max,
            step_policy=policy,
            clip_ratio=args.clip,
            temper_gamma=args.gamma,
            fallback_max_weight=args.fallback_max_weight,
            fallback_ess_floor=args.fallback_ess_floor,
        )
        result, diag = focus_with_fallback(ScoredBatch(scores), config)
    except FocusKitError as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))
    out = {**result.to_dict(), "diagnostics": json.loads(diag.to_json())}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# ----------------------------------------------------------------- textlab


def _build_task(t: dict) -> textlab.TextTask:
    vocab = t["vocabulary"]
    keywords = tuple(t["keywords"])
    if vocab is None:
        n_filler = int(t["vocab_size"]) - len(keywords)
        if n_filler < 0:
            raise ConfigError("vocab_size is smaller than the keyword set")
        vocab = keywords + tuple(f"w{i:02d}" for i in range(n_filler))
    gen = textlab.ToyGeneratorConfig(
        vocabulary=tuple(vocab),
        sequence_length=int(t["sequence_length"]),
        keyword_boost=float(t["keyword_boost"]),
    )
    return textlab.TextTask(
        gen,
        KeywordSet(keywords),
        success_threshold=float(t["success_threshold"]),
        noise_sigma=float(t["noise_sigma"]),
    )


def _text_job(job: tuple) -> textlab.ExperimentReport:
    kind, task, param, trials, seed = job
    if kind == "icfa":
        focus_cfg, resample_count = param
        return textlab.run_icfa_text(task, focus_cfg, trials, seed, resample_count=resample_count)
    if kind == "best_of_n":
        return textlab.run_best_of_n(task, param, trials, seed, method=f"best_of_n_{param}")
    width, expansions = param
    return textlab.run_beam(task, width, trials, seed, expansions=expansions, method=f"beam_{width}")


def run_textlab(cfg: dict, jobs: int = 1) -> list[textlab.ExperimentReport]:
    sec = cfg["textlab"]
    seed = int(cfg["seed"])
    task = _build_task(sec["task"])
    focus_cfg = build_focus(sec["focus"])
    trials = int(sec["trials"])
    work = [("icfa", task, (focus_cfg, int(sec["resample_count"])), trials, seed)]
    for n in sec["best_of_n"]:
        work.append(("best_of_n", task, int(n), trials, seed))
    if sec["single_draw"]:
        work.append(("best_of_n", task, 1, trials, seed))
    if sec["beam"] is not None:
        exp = sec["beam"]["expansions"]
        work.append(("beam", task, (int(sec["beam"]["width"]), None if exp is None else int(exp)), trials, seed))
    return _map(_text_job, work, jobs)


def cmd_textlab(cfg: dict, out: Path, jobs: int) -> int:
    reports = run_textlab(cfg, jobs)
    digest = config_digest(cfg)
    rows = [r.row() for r in reports]
    write_csv(out / "textlab_summary.csv", textlab.ExperimentReport.COLUMNS, rows, digest)
    write_jsonl(out / "textlab_reports.jsonl", rows, digest)
    return EXIT_OK


# ----------------------------------------------------------------- gridlab


def _build_env(e: dict) -> gridlab.GridWorldConfig:
    return gridlab.GridWorldConfig(
        rows=int(e["rows"]),
        cols=int(e["cols"]),
        start=tuple(int(x) for x in e["start"]),
        goal=tuple(int(x) for x in e["goal"]),
        max_episode_steps=int(e["max_episode_steps"]),
        goal_reward=float(e["goal_reward"]),
        step_reward=float(e["step_reward"]),
    )


def _build_arm(arm: dict, batch: int) -> gridlab.TrainMode:
    name = arm["name"] or arm["mode"]
    if arm["mode"] == "baseline":
        return gridlab.Baseline(name=name)
    if arm["mode"] == "icfa":
        return gridlab.Focused(build_focus(arm["focus"], batch), arm["scorer"], name=name)
    raise ConfigError(f"unknown arm mode {arm['mode']!r}")


def _grid_job(job: tuple) -> gridlab.TrainReport:
    env, mode, kwargs = job
    report = gridlab.train(env, mode, **kwargs)
    report.final_policy = None
    return report


def run_gridlab(cfg: dict, jobs: int = 1) -> tuple[list[gridlab.TrainReport], dict]:
    sec = cfg["gridlab"]
    env = _build_env(sec["env"])
    batch = int(sec["batch_per_update"])
    arms = [_build_arm(a, batch) for a in sec["arms"]]
    names = [a.name for a in arms]
    if len(set(names)) != len(names):
        raise ConfigError("arm names must be unique")
    criterion = gridlab.SolveCriterion(float(sec["solve"]["success_rate"]), int(sec["solve"]["episodes"]))
    seeds = [int(cfg["seed"]) + i for i in range(int(sec["n_seeds"]))]
    budget = int(sec["step_budget"])
    work = []
    for mode in arms:
        for s in seeds:
            kwargs = dict(
                batch_per_update=batch,
                step_budget=budget,
                solve_criterion=criterion,
                seed=s,
                learning_rate=float(sec["learning_rate"]),
                discount=float(sec["discount"]),
            )
            work.append((env, mode, kwargs))
    reports = _map(_grid_job, work, jobs)

    summary: dict[str, Any] = {"step_budget": budget, "seeds": seeds, "arms": {}}
    by_arm: dict[str, list] = {}
    for r in reports:
        by_arm.setdefault(r.mode, []).append(r.env_steps_to_solve)
    for name, steps in by_arm.items():
        summary["arms"][name] = {
            "median_steps_to_solve": float(np.median([budget if s is None else s for s in steps])),
            "solved": sum(s is not None for s in steps),
            "runs": len(steps),
        }
    base = [a.name for a in arms if isinstance(a, gridlab.Baseline)]
    focused = [a.name for a in arms if isinstance(a, gridlab.Focused)]
    summary["speedups"] = {
        f: gridlab.median_speedup(by_arm[base[0]], by_arm[f], budget) for f in focused
    } if base else {}
    summary["median_speedup"] = summary["speedups"][focused[0]] if base and focused else None
    return reports, summary


def cmd_gridlab(cfg: dict, out: Path, jobs: int) -> int:
    reports, summary = run_gridlab(cfg, jobs)
    digest = config_digest(cfg)
    rows = [r.row() for r in reports]
    write_csv(out / "gridlab_reports.csv", ("mode", "seed", "solved", "env_steps_to_solve", "updates"), rows, digest)
    write_jsonl(out / "gridlab_reports.jsonl", rows, digest)
    write_json(out / "gridlab_summary.json", summary, cfg)
    if cfg["gridlab"]["diagnostics"]:
        diag = (
            {"mode": r.mode, "seed": r.seed, **h} for r in reports for h in r.history
        )
        write_jsonl(out / "gridlab_diagnostics.jsonl", diag, digest)
    return EXIT_OK


# ----------------------------------------------------------------- theorylab


def run_theorylab(cfg: dict) -> tuple[dict, list[theorylab.SweepRow]]:
    sec = cfg["theorylab"]
    seed = int(cfg["seed"])
    spaces = {}
    reports = []
    for sp in sec["advantage"]:
        if sp["proposal_mass"] is None or sp["scores"] is None or sp["solution_mask"] is None:
            raise ConfigError("advantage entries need proposal_mass, scores and solution_mask")
        space = theorylab.EnumerableSpace(sp["proposal_mass"], sp["scores"], sp["solution_mask"])
        name = sp["name"] or f"space{len(spaces)}"
        spaces[name] = space
        rep = theorylab.advantage(space, float(sp["beta"]))
        reports.append({"name": name, **rep.to_dict()})
    result: dict[str, Any] = {"advantage": reports}

    bs = sec["batch_success"]
    if bs is not None:
        if bs["space"] not in spaces:
            raise ConfigError(f"batch_success refers to unknown space {bs['space']!r}")
        space = spaces[bs["space"]]
        fc = build_focus(bs["focus"])
        entry = {
            "space": bs["space"],
            "trials": int(bs["trials"]),
            "monte_carlo": theorylab.batch_success_probability(space, fc, int(bs["trials"]), seed),
        }
        try:
            entry["exact"] = theorylab.exact_batch_success_probability(space, fc)
        except ConfigError:
            entry["exact"] = None
        result["batch_success"] = entry

    rows: list[theorylab.SweepRow] = []
    sw = sec["sweep"]
    if sw is not None:
        if sw["family"] != "needle":
            raise ConfigError(f"unknown space family {sw['family']!r}")
        scale = float(sw["reference_beta_scale"])
        family = theorylab.SpaceFamily(theorylab.needle_space, lambda n: scale * math.log(n), "needle")
        sizes = [int(n) for n in sw["sizes"]]
        rows = theorylab.sample_complexity_sweep(
            family,
            sizes,
            build_focus(sw["focus"]),
            float(sw["delta"]),
            [seed + i for i in range(int(sw["n_seeds"]))],
            kappa_floor=float(sw["kappa_floor"]),
            max_samples=int(sw["max_samples"]),
        )
        fits = {}
        for method in ("icfa", "naive"):
            med = [r.median_samples for r in rows if r.method == method]
            fits[method] = {
                against: theorylab.fit_scaling(sizes, med, against).__dict__
                for against in ("log", "linear")
            }
        result["sweep_fits"] = fits
    return result, rows


def cmd_theorylab(cfg: dict, out: Path, jobs: int) -> int:
    result, rows = run_theorylab(cfg)
    digest = config_digest(cfg)
    write_json(out / "theory_advantage.json", result, cfg)
    if cfg["theorylab"]["sweep"] is not None:
        write_csv(out / "theory_sweep.csv", theorylab.SweepRow.COLUMNS, [r.row() for r in rows], digest)
    return EXIT_OK


# ----------------------------------------------------------------- main

LABS = {
    "textlab": (TEXTLAB_DEFAULTS, cmd_textlab),
    "gridlab": (GRIDLAB_DEFAULTS, cmd_gridlab),
    "theorylab": (THEORYLAB_DEFAULTS, cmd_theorylab),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="focuskit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("focus", help="adapt beta for one batch of scores and print the result")
    src = f.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", help="comma-separated scores")
    src.add_argument("--scores-file", help="file of scores, comma or newline separated")
    f.add_argument("--rho", type=float, default=0.5, help="ESS fraction (default 0.5)")
    f.add_argument("--beta-max", type=float, default=50.0)
    f.add_argument("--step", type=float, default=None, help="use fixed beta steps of this size")
    f.add_argument("--tolerance", type=float, default=1e-6, help="bisection tolerance in ESS units")
    f.add_argument("--clip", type=float, default=None)
    f.add_argument("--gamma", type=float, default=1.0)
    f.add_argument("--fallback-max-weight", type=float, default=0.95)
    f.add_argument("--fallback-ess-floor", type=float, default=2.0)

    for name in LABS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON run config (bundled defaults if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_PARSE, "UsageError", str(exc), flag=exc.flag)

    if args.command == "focus":
        return cmd_focus(args)

    defaults, runner = LABS[args.command]
    try:
        user = load_json(args.config) if args.config else {}
    except ValueError as exc:
        return _fail(EXIT_PARSE, "ParseError", str(exc), flag="--config")
    try:
        cfg = resolve(defaults, user)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = Path(args.out or cfg["out"] or f"runs/{args.command}")
        cfg["out"] = None  # output location is not part of the experiment's identity
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.json").write_text(
            json.dumps({"schema_version": SCHEMA_VERSION, "command": args.command, "config": cfg}, sort_keys=True, indent=2)
            + "\n"
        )
        return runner(cfg, out, max(1, args.jobs))
    except (AdvantageTooWeak, DegenerateSpace) as exc:
        return _fail(EXIT_PRECONDITION, type(exc).__name__, str(exc))
    except (ConfigError, FocusKitError, TypeError, KeyError, ValueError) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
