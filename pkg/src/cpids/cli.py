"""Command-line front end.

Verbs: ``synth``, ``features``, ``experiment``, ``predict`` and
``fetch-dataset``. Settings come from a YAML file (``--config``); command-line
flags override it. Relative input paths that do not exist in the working
directory are looked up in ``$CPIDS_DATA_DIR``.

Exit codes: 0 success, 2 configuration, 3 validation, 4 data, 5 other
toolkit failures, 1 unexpected errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import urllib.parse
import urllib.request
import zipfile
from dataclasses import replace
from pathlib import Path

import yaml

from .errors import ConfigError, CpidsError
from .experiment import (
    RunConfig, atomic_dir, cmd_experiment, cmd_features, load_bundle, predict_timeline, write_predictions,
)
from .synth import SynthConfig, write_dataset

log = logging.getLogger("cpids")
DATA_ENV = "CPIDS_DATA_DIR"


def data_dir() -> Path:
    return Path(os.environ.get(DATA_ENV, Path.home() / ".cache" / "cpids"))


def resolve_input(path: str | None) -> str | None:
    if path is None or Path(path).is_absolute() or Path(path).exists():
        return path
    candidate = data_dir() / path
    return str(candidate) if candidate.exists() else path


def load_run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    for key in ("packets", "physical", "labels", "out", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "view", None):
        over["views"] = [args.view]
    if getattr(args, "models", None):
        over["models"] = args.models.split(",")
    if getattr(args, "no_filter", False):
        over["filter"] = False
    cfg = replace(cfg, **over)
    return replace(cfg, packets=resolve_input(cfg.packets), physical=resolve_input(cfg.physical), labels=resolve_input(cfg.labels))


def cmd_synth(args) -> int:
    d = {}
    if args.config:
        raw = yaml.safe_load(Path(args.config).read_text()) or {}
        d = raw.get("synth", raw) if isinstance(raw, dict) else {}
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        cfg = SynthConfig.from_dict(d)
    except TypeError as exc:
        raise ConfigError(f"bad synth settings: {exc}") from exc
    out = Path(args.out or "synthetic")
    with atomic_dir(out) as tmp:
        write_dataset(cfg, tmp)
        (tmp / "synth_config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    print(f"synthetic dataset written to {out}")
    return 0


def cmd_features_cli(args) -> int:
    out = cmd_features(load_run_config(args))
    print(f"features written to {out}")
    return 0


def cmd_experiment_cli(args) -> int:
    out, res = cmd_experiment(load_run_config(args))
    print((out / "reports" / "summary.txt").read_text(), end="")
    print(f"reports written to {out}")
    return 0


def cmd_predict(args) -> int:
    bundle = load_bundle(args.model)
    rc = bundle["run_config"]
    packets, physical = resolve_input(args.packets), resolve_input(args.physical)
    for p in (packets, physical):
        if not Path(p).is_file():
            raise ConfigError(f"input file not found: {p}")
    ts, raw, filt = predict_timeline(
        bundle, packets, physical, rc.get("packet_schema") or None, rc.get("physical_schema") or None,
        rc.get("delimiter", ","), rc.get("max_gap", 1.0))
    out = Path(args.out or "predictions.csv")
    write_predictions(ts, raw, filt, out)
    print(f"{len(ts)} per-second predictions written to {out}")
    return 0


def cmd_fetch(args) -> int:
    if not args.url:
        raise ConfigError("fetch-dataset needs an explicit --url; nothing is downloaded by default")
    dest = Path(args.dest) if args.dest else data_dir()
    dest.mkdir(parents=True, exist_ok=True)
    name = Path(urllib.parse.urlparse(args.url).path).name or "dataset"
    target = dest / name
    tmp = target.with_suffix(target.suffix + ".part")
    with urllib.request.urlopen(args.url) as resp, tmp.open("wb") as handle:
        shutil.copyfileobj(resp, handle)
    os.replace(tmp, target)
    if zipfile.is_zipfile(target):
        with zipfile.ZipFile(target) as z:
            z.extractall(dest)
    print(f"downloaded {args.url} to {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpids", description="Cyber-physical intrusion detection experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, run=True):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if run:
            p.add_argument("--packets")
            p.add_argument("--physical")
            p.add_argument("--labels")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p, run=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract, fuse and prune per-second features")
    common(p)
    p.set_defaults(func=cmd_features_cli)

    p = sub.add_parser("experiment", help="select, train and evaluate pipelines")
    common(p)
    p.add_argument("--view", choices=("network", "fused"))
    p.add_argument("--models", help="comma-separated families, e.g. SVM,RF")
    p.add_argument("--no-filter", action="store_true", help="disable the majority filter in pipelines")
    p.set_defaults(func=cmd_experiment_cli)

    p = sub.add_parser("predict", help="label new data with a saved model bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--packets", required=True)
    p.add_argument("--physical", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fetch-dataset", help="download a dataset archive (explicit opt-in)")
    p.add_argument("--url")
    p.add_argument("--dest")
    p.set_defaults(func=cmd_fetch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CpidsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
