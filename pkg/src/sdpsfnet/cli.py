"""Command-line entry point: train, eval, ablate, synth, diag."""

import argparse
import json
import logging
import sys

from .config import load_config
from .data import load_image, load_pair_dataset, normalize, reflect_pad_for_inference, to_tensor
from .evaluate import dump_diagnostics, evaluate, format_table, run_ablation
from .network import count_parameters
from .synthetic import synthesize_dir
from .train import TrainConfig, default_device, load_checkpoint, train


def cmd_train(args):
    cfg = load_config(args.config)
    data = load_pair_dataset(args.data)
    val = load_pair_dataset(args.val) if args.val else None
    print(f"{len(data)} training pairs, {count_parameters(cfg.model) / 1e6:.2f}M parameters")
    path = train(cfg, data, args.out, resume=args.resume, val_dataset=val)
    print(f"checkpoint: {path}")


def cmd_eval(args):
    data = load_pair_dataset(args.data)
    report = evaluate(args.ckpt, data, out_csv=args.out)
    print(report.summary())
    if args.out:
        print(f"metrics written to {args.out}")


def cmd_ablate(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    data = load_pair_dataset(args.data) if args.data else None
    rows = run_ablation(cfg, args.toggle, data, out_dir=args.out)
    print(format_table(rows))


def cmd_synth(args):
    n = synthesize_dir(args.dict, args.inp, args.out, seed=args.seed)
    print(f"wrote {n} pairs to {args.out}")


def cmd_diag(args):
    device = default_device()
    model, _, ckpt = load_checkpoint(args.ckpt, device)
    dtype = next(model.parameters()).dtype
    img = to_tensor(load_image(args.image), dtype).to(device)
    padded, _ = reflect_pad_for_inference(img)
    dump = dump_diagnostics(model, normalize(padded), epoch=ckpt["epoch"])
    text = json.dumps(dump.to_dict(), indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)


def build_parser():
    p = argparse.ArgumentParser(prog="sdpsfnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True, help="dataset root with input/ and gt/")
    t.add_argument("--resume", default=None)
    t.add_argument("--val", default=None, help="optional validation dataset root")
    t.add_argument("--out", default="runs/train")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None, help="metrics CSV path")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="build/compare ablation variants")
    a.add_argument("--config", default=None)
    a.add_argument("--toggle", nargs="+", required=True,
                   help="baseline, gate, h_updates, enhanced_csff, psf_1ch, psf_full, "
                        "tau=N, disable:<stage>:<site>, use_gate=false, ...")
    a.add_argument("--data", default=None, help="train and evaluate each variant on this set")
    a.add_argument("--out", default="runs/ablation")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("synth", help="degrade clean images with a PSF dictionary")
    s.add_argument("--dict", required=True, help=".npz with a [K_c, K, K] 'kernels' array")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("diag", help="dump per-stage feature means")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--image", required=True)
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_diag)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
