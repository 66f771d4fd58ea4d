"""Run all four model families on the public dataset and print the comparison
against the reference targets.

Usage::

    python scripts/reproduce_dataset.py --config configs/dataset.yaml

The dataset must already be on disk (see ``cpids fetch-dataset``).
"""

import argparse
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from cpids.cli import resolve_input
from cpids.errors import CpidsError
from cpids.experiment import RunConfig, atomic_dir, run_experiment, write_experiment
from cpids.ingest import EventLabel

TARGET_FRACTIONS = {"Normal": 0.80, "DoS": 0.7307, "MiTM": 0.8091, "PhysicalFault": 0.7775, "Scanning": 0.7142}
TARGET_MACRO = {("SVM", "fused"): 0.88, ("SVM", "network"): 0.61}
TARGET_WIDTH = 161


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Reproduce the public-dataset comparison.")
    ap.add_argument("--config", required=True)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        return run(args)
    except CpidsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def run(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg = replace(cfg, models=["RF", "KNN", "SVM", "ANN"], views=["network", "fused"], out=args.out or cfg.out,
                  packets=resolve_input(cfg.packets), physical=resolve_input(cfg.physical),
                  labels=resolve_input(cfg.labels)).validate()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_experiment(cfg)
    with atomic_dir(Path(cfg.out)) as tmp:
        (tmp / "run_config.yaml").write_text(cfg.dump())
        write_experiment(res, cfg, tmp)

    fr = res.features
    print("training share per class (got / target):")
    for name, frac in fr.split.class_fractions(fr.table.labels).items():
        print(f"  {name:<14} {100 * frac:6.2f} % / {100 * TARGET_FRACTIONS[name]:6.2f} %")
    print(f"retained feature columns: {fr.table.n_columns} (target {TARGET_WIDTH})")

    print(f"\n{'model':<6} {'network':>8} {'fused':>8}")
    for family in cfg.models:
        print(f"{family:<6} {res.report(family, 'network').macro_f1:8.3f} {res.report(family, 'fused').macro_f1:8.3f}")
    for key, target in TARGET_MACRO.items():
        print(f"{key[0]} {key[1]}: macro F1 {res.report(*key).macro_f1:.3f} (target {target:.2f} +/- 0.06)")

    r = res.results[("SVM", "fused")]
    print("\nfused SVM delay per class, raw / filtered [s]:")
    for lab in list(EventLabel)[1:]:
        a, b = r.raw.delay.per_class.get(int(lab)), r.filtered.delay.per_class.get(int(lab))
        fmt = lambda v: "-" if v is None else f"{v:.2f}"  # noqa: E731
        print(f"  {lab.name:<14} {fmt(a):>6} / {fmt(b):>6}")
    print(f"macro F1 raw {r.raw.macro_f1:.3f}, filtered {r.filtered.macro_f1:.3f}")
    print(f"\nreports in {Path(cfg.out) / 'reports'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
