"""Command-line entry points.

Seed precedence: --seed flag, then the MTA_SEED environment variable, then the
config file. Config validation failures exit 1 and name the offending field's
dotted path; argparse handles unknown flags with usage text and exit 2.
"""

import argparse
import json
import os
import sys

from .config import ConfigError, default_config, load_config, parse_config


def _apply_overrides(cfg_dict: dict, args) -> dict:
    if getattr(args, "out", None):
        cfg_dict["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        cfg_dict["seed"] = args.seed
    elif "MTA_SEED" in os.environ:
        raw = os.environ["MTA_SEED"]
        try:
            cfg_dict["seed"] = int(raw)
        except ValueError:
            raise ConfigError("seed", f"MTA_SEED={raw!r} is not an integer") from None
    return cfg_dict


def _load(args):
    cfg = load_config(args.config)
    return parse_config(_apply_overrides(cfg.to_dict(), args))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spandistill", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="path to a run config JSON file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output directory/file")

    common(sub.add_parser("train-teacher", help="pretrain the teacher on a corpus"))

    sp = sub.add_parser("distill", help="train a student against a frozen teacher")
    sp.add_argument("teacher_ckpt", help="teacher checkpoint path")
    common(sp)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    sp.add_argument("ckpt", help="checkpoint path")
    common(sp)

    sp = sub.add_parser("probe-dsa", help="per-layer span-geometry discrepancy table")
    sp.add_argument("teacher_ckpt")
    sp.add_argument("student_ckpt")
    common(sp)

    sp = sub.add_parser("export-hidden", help="dump all hidden states for a corpus")
    sp.add_argument("ckpt", help="checkpoint path")
    common(sp)

    sp = sub.add_parser("gen-config", help="emit a default config")
    sp.add_argument("--out", default=None, help="write here instead of stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "gen-config":
        blob = json.dumps(default_config(), indent=2, sort_keys=True) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                f.write(blob)
        else:
            sys.stdout.write(blob)
        return 0

    cfg = _load(args)

    if args.command == "train-teacher":
        from .train import train_teacher

        metrics = train_teacher(cfg)
        if metrics["final"]:
            print(f"held-out ce {metrics['final']['heldout_ce']:.4f} "
                  f"accuracy {metrics['final']['heldout_accuracy']:.4f}")
        return 0

    if args.command == "distill":
        from .train import distill

        metrics = distill(cfg, args.teacher_ckpt)
        if metrics["final"]:
            line = f"held-out ce {metrics['final']['heldout_ce']:.4f}"
            if "mean_dsa" in metrics["final"]:
                line += f" mean dsa {metrics['final']['mean_dsa']:.6f}"
            print(line)
        return 0

    if args.command == "eval":
        from .model import load_checkpoint
        from .train import evaluate, read_corpus, split_corpus

        model, tokenizer, _ = load_checkpoint(args.ckpt)
        samples = read_corpus(cfg.corpus_path)
        _, held = split_corpus(samples, cfg.heldout_fraction, cfg.seed)
        if not held:
            held = samples
        result = evaluate(model, tokenizer, held, model.config.max_seq_len)
        os.makedirs(cfg.out_dir, exist_ok=True)
        out_path = os.path.join(cfg.out_dir, "eval_metrics.json")
        with open(out_path, "w", encoding="utf-8") as f:
            json.dump(result, f, sort_keys=True, indent=2)
        for key in sorted(result):
            print(f"{key} {result[key]:.6f}")
        print(f"metrics written to {out_path}")
        return 0

    if args.command == "probe-dsa":
        from .train import probe_dsa

        os.makedirs(cfg.out_dir, exist_ok=True)
        out_csv = os.path.join(cfg.out_dir, "probe_dsa.csv")
        rows = probe_dsa(cfg, args.teacher_ckpt, args.student_ckpt, out_csv)
        print("student_layer teacher_layer granularity mean_dsa")
        for r in rows:
            print(f"{r['student_layer']:>13} {r['teacher_layer']:>13} "
                  f"{r['granularity']:>11} {r['mean_dsa']:.6f}")
        print(f"csv written to {out_csv}")
        return 0

    if args.command == "export-hidden":
        from .dump import export_hidden
        from .model import load_checkpoint
        from .train import read_corpus
        from .corpus import render_text

        model, tokenizer, _ = load_checkpoint(args.ckpt)
        samples = read_corpus(cfg.corpus_path)
        rows = []
        for s in samples:
            enc = tokenizer.encode(render_text(s), model.config.max_seq_len)
            rows.append((enc.ids[: enc.n_tokens], None))
        os.makedirs(cfg.out_dir, exist_ok=True)
        out_path = os.path.join(cfg.out_dir, "hidden.bin")
        header = export_hidden(model, rows, out_path)
        print(f"wrote {header['n_samples']} samples to {out_path}")
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
