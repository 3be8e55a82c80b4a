"""Subcommands; each module exposes `register(subparsers)`."""
from app.cli import attack, pmf, prune, run

COMMANDS = (run, prune, pmf, attack)
