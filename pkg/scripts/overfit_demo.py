"""Overfit a tau=1, K_c=4 model on eight synthetic pairs and report the PSNR gain.

Default widths are reduced so the run finishes in minutes on a CPU; pass
--full-width for the default architecture (about 30 min per 500 steps on one core).
"""

import argparse
import logging
import math
import time

from sdpsfnet.data import load_pair_dataset
from sdpsfnet.evaluate import evaluate, input_baseline
from sdpsfnet.network import ModelConfig
from sdpsfnet.synthetic import make_synthetic_dataset
from sdpsfnet.train import TrainConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/overfit")
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--full-width", action="store_true")
    p.add_argument("--device", default=None)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    root = make_synthetic_dataset(f"{args.out}/data", count=8, size=64, num_kernels=4)
    ds = load_pair_dataset(root)
    widths = {} if args.full_width else dict(n_feat=16, scale_unet=8, scale_ors=8, num_cab=2)
    cfg = TrainConfig(lr_init=args.lr, epochs=args.epochs, batch_size=4, patch_size=64,
                      log_every=50, model=ModelConfig(tau=1, psf_channels=4, **widths))
    steps = cfg.epochs * math.ceil(len(ds) / cfg.batch_size)
    t0 = time.time()
    ckpt = train(cfg, ds, f"{args.out}/run", device=args.device)
    base, out = input_baseline(ds), evaluate(ckpt, ds, device=args.device)
    print(f"{steps} steps in {(time.time() - t0) / 60:.1f} min")
    print("input   ", base.summary())
    print("restored", out.summary())
    print(f"PSNR-RGB gain {out.means()['psnr_rgb'] - base.means()['psnr_rgb']:+.2f} dB")


if __name__ == "__main__":
    main()
