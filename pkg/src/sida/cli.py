"""Command-line driver: gen-data, pretrain, build-bank, adapt, eval, augment-dump.

Exit codes: 0 success, 2 usage or input error, 3 runtime/numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from . import data_synth, pipeline
from .augment import ConfigError, MixParams
from .model import init_extractor, load_checkpoint, save_checkpoint
from .style_bank import BankFormatError, load_bank, save_bank
from .trainer import DegenerateBatchError, TrainConfig, TrainLog, adapt, pretrain_source

log = logging.getLogger("sida")

BANK_FILE = "bank.sidb"
CKPT_FILE = "classifier.sidc"


class UsageError(Exception):
    pass


def _train_flags(p: argparse.ArgumentParser, *, mix: bool):
    d = TrainConfig()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=d.iters)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--base-lr", type=float, default=d.base_lr)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--poly-power", type=float, default=d.poly_power)
    if mix:
        m = MixParams()
        p.add_argument("--tau-ent", type=float, default=d.tau_ent)
        p.add_argument("--s-e", type=float, default=m.s_e)
        p.add_argument("--m", type=int, default=m.m)
        p.add_argument("--fixed-lambda", type=float, default=None)
        p.add_argument("--patch-norm", choices=["local", "global"], default=m.patch_norm)
        p.add_argument("--entropy-from", choices=["current", "frozen"], default=d.entropy_from)
        p.add_argument("--weight-scope", choices=["batch", "item"], default=d.weight_scope)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sida", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", type=Path, help="key=value file; flags override it")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--extractor-seed", type=int, default=0)
        return p

    p = cmd("gen-data", "write the procedural benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-source", type=int, default=64)
    p.add_argument("--n-val", type=int, default=32)
    p.add_argument("--n-target-per-domain", type=int, default=24)
    p.add_argument("--n-bank", type=int, default=3)

    p = cmd("pretrain", "train the classifier on clean source features")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _train_flags(p, mix=False)

    p = cmd("build-bank", "extract style statistics of the synthetic bank images")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = cmd("adapt", "fine-tune a pretrained classifier toward one target domain")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--bank", type=Path, required=True)
    p.add_argument("--pretrained", type=Path, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", type=Path, required=True)
    _train_flags(p, mix=True)

    p = cmd("eval", "write an mIoU report")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--domain", required=True, help="'source' (val split), a target domain, comma list or 'all'")
    p.add_argument("--report", type=Path, required=True)

    p = cmd("augment-dump", "export channel statistics of source, bank and stylized features")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--bank", type=Path, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    _mix_only(p)
    return ap


def _mix_only(p):
    m = MixParams()
    p.add_argument("--s-e", type=float, default=m.s_e)
    p.add_argument("--m", type=int, default=m.m)
    p.add_argument("--fixed-lambda", type=float, default=None)
    p.add_argument("--patch-norm", choices=["local", "global"], default=m.patch_norm)


def read_config(path: Path) -> dict:
    out = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def parse_args(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config is None:
        return args
    if not args.config.is_file():
        raise UsageError(f"config file not found: {args.config}")
    # re-parse with file values as defaults so explicit flags still win
    sub = ap._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for k, v in read_config(args.config).items():
        if k not in known or k in ("config", "help"):
            raise UsageError(f"unknown config key {k!r} for {args.command}")
        act = known[k]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[k] = act.type(v) if act.type else v
            except ValueError as e:
                raise UsageError(f"config key {k}: {e}") from None
            if act.choices and defaults[k] not in act.choices:
                raise UsageError(f"config key {k}: {v!r} not in {act.choices}")
    sub.set_defaults(**defaults)
    # required flags given only in the file
    for a in sub._actions:
        if a.required and a.dest in defaults:
            a.required = False
    return ap.parse_args(argv)


def effective_config(args) -> str:
    skip = {"command", "verbose", "config", "force"}  # force never changes outputs
    lines = [f"command={args.command}"]
    for k in sorted(vars(args)):
        if k not in skip:
            lines.append(f"{k}={getattr(args, k)}")
    return "\n".join(lines) + "\n"


def _prepare_dir(out: Path, force: bool):
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    if out.exists() and any(out.iterdir()):
        if not force:
            raise UsageError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)


def _resolve(path: Path, name: str) -> Path:
    p = path / name if path.is_dir() else path
    if not p.is_file():
        raise UsageError(f"not found: {p}")
    return p


def _benchmark(path: Path):
    try:
        return data_synth.read_benchmark(path)
    except (FileNotFoundError, KeyError, ValueError, OSError) as e:
        raise UsageError(f"cannot read benchmark at {path}: {e}") from None


def _mix(args) -> MixParams:
    try:
        return MixParams(args.s_e, args.m, args.fixed_lambda, args.patch_norm)
    except ConfigError as e:
        raise UsageError(str(e)) from None


def _train_cfg(args, mix=None) -> TrainConfig:
    kw = dict(batch_size=args.batch_size, iters=args.iters, base_lr=args.base_lr,
              momentum=args.momentum, weight_decay=args.weight_decay,
              poly_power=args.poly_power, seed=args.seed)
    if mix is not None:
        kw.update(mix=mix, tau_ent=args.tau_ent, entropy_from=args.entropy_from,
                  weight_scope=args.weight_scope)
    try:
        return TrainConfig(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load_bank(path):
    try:
        return load_bank(_resolve(path, BANK_FILE))
    except (BankFormatError, ValueError) as e:
        raise UsageError(f"corrupt bank {path}: {e}") from None


def _load_ckpt(path):
    try:
        return load_checkpoint(_resolve(path, CKPT_FILE))
    except ValueError as e:
        raise UsageError(f"corrupt checkpoint {path}: {e}") from None


def cmd_gen_data(args):
    if min(args.n_source, args.n_val, args.n_target_per_domain, args.n_bank) < 1:
        raise UsageError("all counts must be >= 1")
    _prepare_dir(args.out, args.force)
    for sub in ("source", "bank", "target"):
        if (args.out / sub).exists():
            shutil.rmtree(args.out / sub)
    b = data_synth.gen_benchmark(args.seed, args.n_source, args.n_val,
                                 args.n_target_per_domain, args.n_bank)
    data_synth.write_benchmark(b, args.out)
    (args.out / "config.txt").write_text(effective_config(args))


def cmd_pretrain(args):
    bench = _benchmark(args.data)
    cfg = _train_cfg(args)
    _prepare_dir(args.out, args.force)
    ex = init_extractor(args.extractor_seed)
    lg = TrainLog()
    p = pretrain_source(cfg, pipeline.source_arrays(bench.source_train, ex), ex, log_out=lg)
    save_checkpoint(p, args.out / CKPT_FILE)
    (args.out / "loss.csv").write_text(lg.to_csv())
    (args.out / "config.txt").write_text(effective_config(args))
    log.info("pretrain wall-clock %.2fs", lg.seconds)


def cmd_build_bank(args):
    bench = _benchmark(args.data)
    if len(bench.bank) < 2:
        raise UsageError("benchmark needs at least two bank domains")
    _prepare_dir(args.out, args.force)
    bank = pipeline.build_bank(bench.bank, init_extractor(args.extractor_seed))
    save_bank(bank, args.out / BANK_FILE)
    (args.out / "config.txt").write_text(effective_config(args))


def cmd_adapt(args):
    bench = _benchmark(args.data)
    bank = _load_bank(args.bank)
    if args.target not in bank.domains:
        raise UsageError(f"domain not in bank: {args.target}")
    p0 = _load_ckpt(args.pretrained)
    cfg = _train_cfg(args, _mix(args))
    _prepare_dir(args.out, args.force)
    ex = init_extractor(args.extractor_seed)
    lg = TrainLog()
    p = adapt(cfg, pipeline.source_arrays(bench.source_train, ex), bank, args.target, p0, log_out=lg)
    save_checkpoint(p, args.out / CKPT_FILE)
    (args.out / "metrics.csv").write_text(lg.to_csv())
    (args.out / "config.txt").write_text(effective_config(args))
    log.info("adapt[%s] wall-clock %.2fs", args.target, lg.seconds)


def cmd_eval(args):
    bench = _benchmark(args.data)
    p = _load_ckpt(args.checkpoint)
    if args.domain == "all":
        domains = ["source", *bench.target]
    else:
        domains = args.domain.split(",")
    ex = init_extractor(args.extractor_seed)
    results = {}
    for d in domains:
        if d == "source":
            samples = bench.source_val
        elif d in bench.target:
            samples = bench.target[d]
        else:
            raise UsageError(f"unknown domain {d!r}")
        results[d] = pipeline.evaluate(samples, p, ex)
        log.info("%s mIoU %.4f", d, results[d][1])
    if args.report.exists() and not args.force:
        raise UsageError(f"{args.report} exists (use --force)")
    args.report.parent.mkdir(parents=True, exist_ok=True)
    from .metrics import report_csv

    args.report.write_text(report_csv(results))
    (args.report.parent / "config.txt").write_text(effective_config(args))


def cmd_augment_dump(args):
    bench = _benchmark(args.data)
    bank = _load_bank(args.bank)
    if args.target not in bank.domains:
        raise UsageError(f"domain not in bank: {args.target}")
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    mix = _mix(args)
    _prepare_dir(args.out, args.force)
    ex = init_extractor(args.extractor_seed)
    src = pipeline.features_of(bench.source_train, ex)
    tgt = pipeline.features_of(bench.target[args.target], ex) if args.target in bench.target else None
    rows = pipeline.style_rows(src, bank, args.target, args.n, mix, args.seed, tgt)
    (args.out / "styles.csv").write_text(pipeline.style_csv(rows))
    (args.out / "config.txt").write_text(effective_config(args))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "build-bank": cmd_build_bank,
    "adapt": cmd_adapt,
    "eval": cmd_eval,
    "augment-dump": cmd_augment_dump,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"sida: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:  # argparse usage errors
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"sida: error: {e}", file=sys.stderr)
        return 2
    except (DegenerateBatchError, FloatingPointError) as e:
        print(f"sida: runtime failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
