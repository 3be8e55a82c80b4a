from __future__ import annotations

import argparse
from typing import List

from app.config import Settings
from app.core.pruning import poisson_binomial_pmf, reliable_count
from app.services.exceptions import ConfigError


def register(subparsers) -> None:
    p = subparsers.add_parser("pmf", help="print the Poisson-Binomial PMF of comma-separated success rates")
    p.add_argument("p_list", metavar="p-list", help="e.g. 0.5,0.5")
    p.add_argument("--eta", type=float, help="also print the reliable count at this confidence")
    p.set_defaults(func=handle)


def parse_rates(text: str) -> List[float]:
    try:
        rates = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"bad p-list {text!r}: {e}") from e
    if not rates:
        raise ConfigError("p-list is empty")
    bad = [r for r in rates if not 0.0 <= r <= 1.0]
    if bad:
        raise ConfigError(f"rates outside [0, 1]: {bad}")
    return rates


def handle(args: argparse.Namespace, settings: Settings) -> int:
    pmf = poisson_binomial_pmf(parse_rates(args.p_list))
    # repr gives the shortest string that round-trips.
    print(" ".join(repr(float(x)) for x in pmf.r))
    if args.eta is not None:
        if not 0.0 < args.eta < 1.0:
            raise ConfigError("eta must lie in (0, 1)")
        print(f"l_eta={reliable_count(pmf, args.eta)}")
    return 0
