"""Command-line entry point: ``bregman-control {run,sweep-tau,verify,list-presets}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import CASE_IDS
from .config import OUTPUT_ENV, ConfigError, ExperimentConfig, preset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3


def _overrides(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(args) -> ExperimentConfig:
    """Preset, then config file, then ``key=value`` overrides; resolved and validated."""
    cfg = preset(args.preset) if args.preset else ExperimentConfig()
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        cfg = ExperimentConfig.from_text(text, cfg)
    cfg = cfg.with_overrides(_overrides(args.overrides))
    return cfg.resolved()


def _parser():
    p = argparse.ArgumentParser(
        prog="bregman-control",
        description="Bregman iteration benchmarks for box-constrained Poisson control.",
        epilog=f"Output goes to ${OUTPUT_ENV}/<output or case> (default root: results).",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--preset", choices=CASE_IDS, help="start from a benchmark's defaults")
        sp.add_argument("--out-dir", help="write here instead of the configured output directory")
        sp.add_argument("overrides", nargs="*", metavar="key=value")

    common(sub.add_parser("run", help="noisy runs with the a priori stopping rule"))
    sp = sub.add_parser("sweep-tau", help="stopping index and error for several tau values")
    common(sp)
    sp.add_argument("--taus", help="comma-separated tau values (default: the taus key)")
    sp = sub.add_parser("verify", help="check the closed-form benchmark formulas")
    common(sp)
    sp.add_argument("--samples", type=int, default=1000)
    sub.add_parser("list-presets", help="print the per-benchmark defaults")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.verb == "list-presets":
        for cid in CASE_IDS:
            print(f"[{cid}]")
            print(preset(cid).to_text())
        return EXIT_OK

    from . import experiment

    if args.verb == "sweep-tau" and args.taus:
        args.overrides.append(f"taus={args.taus}")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.verb == "verify" or cfg.verify_only:
        if args.verb == "verify" and args.samples < 100:
            print("config error: --samples must be at least 100", file=sys.stderr)
            return EXIT_CONFIG
        report = experiment.verify(cfg, args.samples if args.verb == "verify" else 1000)
        print("\n".join(report.lines()))
        return EXIT_OK if report.passed else EXIT_VERIFY

    try:
        if args.verb == "run":
            summary, status = experiment.run_experiment(cfg, args.out_dir)
            for r in summary["runs"]:
                if "error" in r:
                    print(f"delta={r['delta']!r} seed={r['seed']}: FAILED {r['error']}")
                else:
                    print(f"delta={r['delta']!r} seed={r['seed']}: k(delta)={r['k_delta']} "
                          f"err_at_stop={r['err_at_stop']} min_error={r['min_error']:.6g}")
        else:
            rows, status = experiment.sweep_tau(cfg, None, args.out_dir)
            for t, d, s, k, e in rows:
                print(f"tau={t!r} delta={d!r} seed={s}: k(delta)={k} err_at_stop={e}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return status


if __name__ == "__main__":
    sys.exit(main())
