from __future__ import annotations

import argparse
import sys
import time

import pandas as pd

from app.config import Settings
from app.core.models import PruneMonteCarloConfig
from app.core.pruning import monte_carlo
from app.services import plots
from app.services.journal import RunJournal
from app.services.repo.json_repo import CSV_FLOAT_FORMAT, RunRepo, ScenarioRepo


def register(subparsers) -> None:
    p = subparsers.add_parser("prune-mc", help="Monte Carlo check of the pruning exclusion guarantee")
    p.add_argument("config", help="Monte Carlo JSON file")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--support-mode", choices=("fixed", "random"), help="attacked set fixed or drawn per trial")
    p.add_argument("--out", help="also write trials.csv, summary.json and exclusion.svg here")
    p.set_defaults(func=handle)


def handle(args: argparse.Namespace, settings: Settings) -> int:
    config = ScenarioRepo().load_monte_carlo(args.config)
    overrides = {k: v for k, v in (("trials", args.trials), ("seed", args.seed), ("support_mode", args.support_mode)) if v is not None}
    if overrides:
        config = PruneMonteCarloConfig.model_validate({**config.model_dump(), **overrides})

    started = time.perf_counter()
    summary, trials = monte_carlo(config, workers=settings.workers)
    per_eta = pd.DataFrame([s.model_dump() for s in summary.per_eta])

    sys.stdout.write(per_eta.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"))
    print(
        f"# eta={summary.eta:g} l_eta={summary.l_eta} exclusion_rate={summary.exclusion_rate:.4f} "
        f"margin={summary.margin:.4f} meets_bound={summary.meets_bound}"
    )

    if args.out:
        repo = RunRepo(args.out)
        repo.write_frame("trials.csv", trials)
        repo.write_json("summary.json", summary)
        plots.plot_exclusion(per_eta, args.out)

    RunJournal(settings).record(
        "prune-mc",
        args.config,
        (time.perf_counter() - started) * 1000.0,
        {"trials": config.trials, "eta": config.eta, "exclusion_rate": summary.exclusion_rate},
    )
    return 0
