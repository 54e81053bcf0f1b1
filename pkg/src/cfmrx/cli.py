"""Command line entry point: ``cfmrx <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .channel import make_dataset, read_dataset, write_dataset
from .errors import ConfigurationError, MissingArtifactError
from .harness import (ExperimentConfig, ablation_modulation, ablation_steps, ablation_teq, dump_config, load_config,
                      run_sweep, write_results)
from .prior import save_weights, train_velocity_net

log = logging.getLogger("cfmrx")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    sw = cfg.sweep
    if getattr(args, "seed", None) is not None:
        sw = replace(sw, master_seed=args.seed)
    if getattr(args, "frames", None) is not None:
        sw = replace(sw, frames=args.frames)
    if getattr(args, "out_dir", None) is not None:
        sw = replace(sw, output_dir=args.out_dir)
    if getattr(args, "backend", None) is not None:
        cfg = replace(cfg, prior=replace(cfg.prior, backend=args.backend))
    return replace(cfg, sweep=sw)


def _echo(msg: str):
    print(msg, flush=True)


def cmd_default_config(args) -> int:
    print(dump_config(ExperimentConfig()))
    return 0


def cmd_gen_channels(args) -> int:
    cfg = _config(args)
    n = args.samples if args.samples is not None else cfg.dataset.n_samples
    seed = args.dataset_seed if args.dataset_seed is not None else cfg.dataset.seed
    path = Path(args.out) if args.out else cfg.resolve(cfg.dataset.path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = make_dataset(cfg.profile, cfg.frame, n, seed)
    write_dataset(path, ds)
    _echo(f"wrote {n} channel samples to {path}")
    return 0


def cmd_train_prior(args) -> int:
    cfg = _config(args)
    path = cfg.resolve(cfg.dataset.path)
    if not path.exists():
        raise MissingArtifactError(f"channel dataset {path} not found; generate it with `cfmrx gen-channels`")
    ds = read_dataset(path, cfg.frame, cfg.profile)
    hp = cfg.training if args.epochs is None else replace(cfg.training, epochs=args.epochs)
    t0 = time.time()

    def progress(epoch, result):
        done = epoch + 1
        if done % max(1, hp.epochs // 20) == 0 or done == hp.epochs:
            val = f"{result.val_loss[-1]:.5f}" if result.val_loss else "-"
            _echo(f"epoch {done:4d}  train {result.train_loss[-1]:.5f}  val {val}")

    res = train_velocity_net(ds, hp, seed=args.train_seed, progress=progress)
    out = Path(args.out) if args.out else cfg.resolve(cfg.prior.weights)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(out, res.net)
    _echo(f"trained in {time.time() - t0:.0f} s; weights written to {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    records = run_sweep(cfg, progress=None if args.quiet else _echo)
    paths = write_results(records, cfg.resolve(cfg.sweep.output_dir), cfg, stem="sweep")
    _echo(f"results: {paths['csv']}")
    return 0


def cmd_ablation(args) -> int:
    cfg = _config(args)
    progress = None if args.quiet else _echo
    if args.study == "teq":
        records = ablation_teq(cfg, progress)
    elif args.study == "steps":
        records = ablation_steps(cfg, steps=args.steps, snr_db=args.snr, progress=progress)
    else:
        records = ablation_modulation(cfg, orders=args.orders, progress=progress)
    paths = write_results(records, cfg.resolve(cfg.sweep.output_dir), cfg, stem=f"ablation_{args.study}")
    _echo(f"results: {paths['csv']}")
    return 0


def cmd_validate(args) -> int:
    from .validation import run_checks

    results = run_checks(full=args.full, echo=_echo)
    failed = [r for r in results if not r.passed]
    _echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfmrx", description="Flow-matching joint channel estimation and detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config (defaults are used when omitted)")
        return sp

    sp = sub.add_parser("default-config", help="print the default JSON config")
    sp.set_defaults(func=cmd_default_config)

    sp = common(sub.add_parser("gen-channels", help="generate and store a channel dataset"))
    sp.add_argument("--samples", type=int)
    sp.add_argument("--dataset-seed", type=int)
    sp.add_argument("--out", help="output path (default: dataset.path of the config)")
    sp.set_defaults(func=cmd_gen_channels)

    sp = common(sub.add_parser("train-prior", help="train the velocity network on the stored dataset"))
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--train-seed", type=int, default=0)
    sp.add_argument("--out", help="weights path (default: prior.weights of the config)")
    sp.set_defaults(func=cmd_train_prior)

    for name, func, hlp in (("sweep", cmd_sweep, "run the SNR sweep and write CSV results"),
                            ("ablation", cmd_ablation, "run an ablation study")):
        sp = common(sub.add_parser(name, help=hlp))
        if name == "ablation":
            sp.add_argument("study", choices=("teq", "steps", "modulation"))
            sp.add_argument("--steps", type=int, nargs="+", default=[5, 10, 20, 30, 50, 100])
            sp.add_argument("--snr", type=float, default=5.0, help="SNR of the steps study")
            sp.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3, 4], help="PSK bits per symbol")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--frames", type=int, help="frames per node")
        sp.add_argument("--out-dir")
        sp.add_argument("--backend", choices=("net", "analytic"), help="channel prior backend")
        sp.add_argument("-q", "--quiet", action="store_true")
        sp.set_defaults(func=func)

    sp = sub.add_parser("validate", help="run the invariant checks; exit status 1 on any failure")
    sp.add_argument("--full", action="store_true", help="use acceptance-scale sizes (slow)")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (MissingArtifactError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
