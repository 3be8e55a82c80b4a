from __future__ import annotations

import argparse
import json
import os
import time

from app.config import Settings
from app.core.models import STRATEGIES, ScenarioConfig
from app.core.runner import run, sweep
from app.services import plots
from app.services.journal import RunJournal
from app.services.repo.json_repo import RunRepo, ScenarioRepo


def register(subparsers) -> None:
    p = subparsers.add_parser("run", help="simulate the closed loop and write run.csv, metrics.json and plots")
    p.add_argument("config", help="scenario JSON file")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", help="output directory (default: RPO_OUTPUT_DIR)")
    p.add_argument("--strategy", choices=STRATEGIES, help="override the observer strategy")
    p.add_argument("--sweep", action="store_true", help="run all three strategies from the same seed")
    p.add_argument("--no-plots", action="store_true", help="skip SVG output")
    p.set_defaults(func=handle)


def _with_overrides(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.strategy is not None:
        overrides["strategy"] = args.strategy
    if not overrides:
        return config
    return ScenarioConfig.model_validate({**config.model_dump(), **overrides})


def handle(args: argparse.Namespace, settings: Settings) -> int:
    config = _with_overrides(ScenarioRepo().load(args.config), args)
    out = args.out or settings.output_dir
    started = time.perf_counter()

    if args.sweep:
        results = sweep(config, workers=settings.workers)
        summaries = []
        for strategy, (frame, summary) in results.items():
            repo = RunRepo(os.path.join(out, strategy))
            repo.write_log(frame)
            repo.write_metrics(summary)
            repo.write_config(config.model_copy(update={"strategy": strategy}))
            if not args.no_plots:
                plots.render_run(frame, repo.out_dir)
            summaries.append(summary)
        top = RunRepo(out)
        top.write_metrics_table(summaries)
        if not args.no_plots:
            plots.plot_sweep({s: f for s, (f, _) in results.items()}, out)
        for s in summaries:
            print(json.dumps(s.model_dump(mode="json")))
        extra = {"out": out, "seed": config.seed, "tracking_rmse": {s.strategy: s.tracking_rmse for s in summaries}}
        kind = "sweep"
    else:
        log, summary = run(config)
        frame = log.frame()
        repo = RunRepo(out)
        repo.write_log(frame)
        repo.write_metrics(summary)
        repo.write_config(config)
        if not args.no_plots:
            plots.render_run(frame, out)
        print(json.dumps(summary.model_dump(mode="json")))
        extra = {"out": out, "seed": config.seed, "strategy": config.strategy, "tracking_rmse": summary.tracking_rmse}
        kind = "run"

    RunJournal(settings).record(kind, args.config, (time.perf_counter() - started) * 1000.0, extra)
    return 0
