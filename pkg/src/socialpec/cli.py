"""Command-line entry point.

    socialpec train --config run.cfg
    socialpec eval --checkpoint ckpt.json --config run.cfg [--k 20] [--mode sample|mean]
    socialpec predict --checkpoint ckpt.json --input scene.txt --out pred.txt
    socialpec baseline --config run.cfg
    socialpec dump-patterns --checkpoint ckpt.json --format csv|svg --which context|target
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import build_windows, frame_step, load_file, load_sets, split_leave_one_out
from .errors import SocialPecError
from .evaluation import LinearBaseline, ModelPredictor, combine, evaluate
from .export import export_patterns
from .model import LocationPredictor, ModelConfig
from .predictor import RolloutConfig, rollout
from .trainer import TrainConfig, train

log = logging.getLogger("socialpec")


def _split(cfg):
    if not cfg.manifest:
        raise SocialPecError("config does not name a dataset manifest")
    sets = load_sets(cfg.resolve(cfg.manifest))
    return sets, split_leave_one_out(
        sets, cfg.test_set, cfg.val_fraction, cfg.seed,
        total_len=cfg.obs_len + cfg.pred_len, stride=cfg.stride, obs_len=cfg.obs_len)


def _write_report(cfg, report):
    if cfg.report:
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
        cfg.resolve(cfg.report).write_text(text + "\n")


def cmd_train(args):
    cfg = RunConfig.from_file(args.config)
    _, split = _split(cfg)
    model = LocationPredictor(ModelConfig(obs_len=cfg.obs_len), seed=cfg.seed)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed,
                       val_every=cfg.val_every, max_steps=cfg.max_steps,
                       log_path=str(cfg.resolve(cfg.metrics_log)) if cfg.metrics_log else "")
    log.info("training on %d windows, validating on %d", len(split.train), len(split.val))
    model, history = train(model, split, tcfg)
    meta = {
        "seed": cfg.seed, "epochs": len(history.train_nll), "steps": history.steps,
        "best_epoch": history.best_epoch, "best_val_nll": history.best_val_nll,
        "test_set": cfg.test_set,
    }
    out = cfg.resolve(cfg.checkpoint)
    save_checkpoint(model, out, meta)
    print(f"trained {len(history.train_nll)} epochs ({history.steps} steps); "
          f"best val NLL {history.best_val_nll:.4f} at epoch {history.best_epoch}; saved {out}")


def cmd_eval(args):
    cfg = RunConfig.from_file(args.config)
    model, _ = load_checkpoint(args.checkpoint, ModelConfig(obs_len=cfg.obs_len))
    _, split = _split(cfg)
    k = args.k if args.k is not None else cfg.k
    report = evaluate(ModelPredictor(model, args.mode), split.test, k=k, seed=cfg.seed,
                      independent_fde=args.independent_fde, set_name=cfg.test_set)
    _write_report(cfg, report)
    print(report.summary())


def cmd_baseline(args):
    cfg = RunConfig.from_file(args.config)
    sets, split = _split(cfg)
    if args.all_sets:
        reports = []
        for name in sorted(sets):
            wins = build_windows(sets[name], cfg.obs_len + cfg.pred_len, cfg.stride,
                                 cfg.obs_len)
            reports.append(evaluate(LinearBaseline(), wins, k=1, seed=cfg.seed, set_name=name))
            print(reports[-1].summary())
        report = combine(reports)
    else:
        report = evaluate(LinearBaseline(), split.test, k=1, seed=cfg.seed,
                          set_name=cfg.test_set)
    _write_report(cfg, report)
    print(report.summary())


def cmd_predict(args):
    model, _ = load_checkpoint(args.checkpoint)
    T_h = model.config.obs_len
    records = load_file(args.input)
    windows = build_windows(records, total_len=T_h, stride=1, obs_len=T_h)
    if not windows:
        raise SocialPecError(f"no pedestrian is observed for {T_h} consecutive frames")
    win = windows[-1]
    cfg = RolloutConfig(mode=args.mode, k=args.k, seed=args.seed, pred_len=args.pred_len)
    pred = rollout(model, win.positions, cfg, win.ped_ids)
    step = frame_step(records)
    last = win.start_frame + (T_h - 1) * step
    lines = []
    for k in range(cfg.k):
        for t in range(cfg.pred_len):
            for m, pid in enumerate(win.ped_ids):
                x, y = (float(v) for v in pred[k, m, t])
                lines.append(f"{last + (t + 1) * step} {pid} {x!r} {y!r} {k}")
    Path(args.out).write_text("".join(line + "\n" for line in lines))
    print(f"wrote {len(lines)} predicted states for {win.num_peds} pedestrians to {args.out}")


def cmd_dump_patterns(args):
    model, _ = load_checkpoint(args.checkpoint)
    text = export_patterns(model, args.format, args.which, args.extent)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="socialpec",
                                     description="Pattern-based pedestrian trajectory prediction")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="best-of-K ADE/FDE on the held-out set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--k", type=int, default=None, help="rollouts per window (default: config)")
    p.add_argument("--mode", choices=("sample", "mean"), default="sample")
    p.add_argument("--independent-fde", action="store_true",
                   help="take the FDE minimum independently of the ADE pick")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="roll out the latest observed window of a scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("sample", "mean"), default="sample")
    p.add_argument("--pred-len", type=int, default=12)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline", help="linear extrapolation baseline")
    p.add_argument("--config", required=True)
    p.add_argument("--all-sets", action="store_true", help="report every set of the manifest")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("dump-patterns", help="export learned motion patterns")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--format", choices=("csv", "svg"), default="csv")
    p.add_argument("--which", default="context")
    p.add_argument("--out", default="")
    p.add_argument("--extent", type=float, default=6.0, help="svg half-width in meters")
    p.set_defaults(func=cmd_dump_patterns)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (SocialPecError, OSError, ValueError, FloatingPointError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"socialpec {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
