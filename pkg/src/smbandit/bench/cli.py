"""Command line entry point: ``smbandit {bandit,lipschitz,pricing,verify}``.

Settings come from three layers, later ones winning: built-in defaults, a
``--config`` file of ``key = value`` lines, then command-line flags.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from .experiment import ExperimentConfig, run_experiment


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-3,7"`` -> ``(0, 1, 2, 3, 7)``."""
    seeds: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return tuple(seeds)


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> Optional[float]:
    return None if str(text).strip().lower() in ("", "none") else float(text)


CONVERTERS = {
    "k": int,
    "T": int,
    "L": float,
    "tau_bar": int,
    "eta": _opt_float,
    "seeds": parse_seeds,
    "stride": int,
    "plot": _bool,
    "jobs": int,
    "budget": int,
    "learners": lambda s: tuple(x.strip() for x in str(s).split(",") if x.strip()),
}
KNOWN = {f.name for f in fields(ExperimentConfig)} - {"mode"}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Dashes in keys become underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise SystemExit(f"cannot read config {path}: {e}")
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KNOWN:
            raise SystemExit(f"{path}:{n}: unknown key {key!r}")
        out[key] = CONVERTERS.get(key, str)(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--seeds", type=parse_seeds, help="e.g. 0-19 or 1,5,9 (default 0)")
    common.add_argument("--out", help="CSV of per-round records; summary goes next to it")
    common.add_argument("--trace", help="JSON-lines SMB trace (one file per seed)")
    common.add_argument("--T", type=int, help="horizon in rounds (days for pricing)")
    common.add_argument("--eta", type=_opt_float, help="override the learning rate")
    common.add_argument("--stride", type=int, help="write every n-th record")
    common.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    common.add_argument("--jobs", type=int, help="worker processes over seeds")

    p = argparse.ArgumentParser(prog="smbandit", description="Slowly moving bandit experiments")
    sub = p.add_subparsers(dest="mode", required=True)

    b = sub.add_parser(
        "bandit", parents=[common], argument_default=argparse.SUPPRESS, help="k-armed bandit with tree movement cost"
    )
    b.add_argument("--k", type=int)
    b.add_argument("--adversary", help="stochastic_gap(mu,gap) | drifting_sine(period) | adversarial_flip(epoch)")
    b.add_argument("--learners", type=CONVERTERS["learners"], help="comma list of smb, smb_dense, exp3")

    c = sub.add_parser(
        "lipschitz", parents=[common], argument_default=argparse.SUPPRESS, help="Lipschitz losses on [0, 1]"
    )
    c.add_argument("--L", type=float)
    c.add_argument("--adversary", help="drifting_sine(period)")

    r = sub.add_parser(
        "pricing", parents=[common], argument_default=argparse.SUPPRESS, help="posted prices with patient buyers"
    )
    r.add_argument("--tau-bar", dest="tau_bar", type=int)
    r.add_argument("--values", help="uniform | point(c) | beta(a,b)")
    r.add_argument("--patience", help="uniform | point(c)")
    r.add_argument("--blocks", choices=("box", "prose"))

    v = sub.add_parser("verify", argument_default=argparse.SUPPRESS, help="run invariant suites")
    v.add_argument("--config")
    v.add_argument("--scope", choices=("smb", "mw", "pricing", "all"))
    v.add_argument("--budget", type=int, help="rounds / replications")
    v.add_argument("--out", help="write the JSON report here")
    return p


def config_from_args(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    args = vars(build_parser().parse_args(argv))
    mode = args.pop("mode")
    settings = {}
    path = args.pop("config", None)
    if path:
        settings.update(read_config(path))
    settings.update(args)
    if mode == "lipschitz" and "adversary" not in settings:
        settings["adversary"] = "drifting_sine()"
    if mode != "bandit":
        settings.setdefault("learners", ("smb",))
    try:
        return ExperimentConfig(mode=mode, **settings)
    except (TypeError, ValueError) as e:
        raise SystemExit(f"invalid configuration: {e}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    cfg = config_from_args(argv)
    try:
        result = run_experiment(cfg)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    text = json.dumps(result, indent=2, sort_keys=True)
    if cfg.mode == "verify":
        if cfg.out:
            Path(cfg.out).write_text(text + "\n")
        print(text)
        return 0 if result["passed"] else 1
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
