"""Whole-image evaluation, feature diagnostics and ablation runs."""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import torch

from .data import crop, denormalize, normalize, reflect_pad_for_inference, to_tensor
from .metrics import MetricsReport, psnr
from .network import SDPSFNet, count_parameters, parse_pathway
from .train import TrainConfig, default_device, load_checkpoint, train

log = logging.getLogger(__name__)


@torch.no_grad()
def restore(model, img01, multiple=4):
    """Derain a ``[B, 3, H, W]`` image in [0, 1]; returns the final output in [0, 1]."""
    padded, box = reflect_pad_for_inference(img01, multiple)
    final, _ = model(normalize(padded))
    return denormalize(crop(final, box)).clamp(0, 1)


def evaluate(checkpoint, dataset, out_csv=None, device=None, y_only=False):
    """Evaluate a checkpoint path or a model on every pair of ``dataset``.

    ``y_only`` computes just PSNR-Y (the validation metric used in training).
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    device = torch.device(device) if device is not None else default_device()
    if isinstance(checkpoint, (str, Path)):
        model, _, _ = load_checkpoint(checkpoint, device)
    else:
        model = checkpoint
    model.eval()
    dtype = next(model.parameters()).dtype
    report = MetricsReport()
    for i in range(len(dataset)):
        pair = dataset[i]
        x = to_tensor(pair.rainy, dtype).to(device)
        y = to_tensor(pair.clean, torch.float64)
        pred = restore(model, x).cpu()
        if y_only:
            report.rows.append({"image_id": pair.id, "psnr_y": psnr(pred, y, "y"),
                                "psnr_rgb": float("nan"), "ssim_rgb": float("nan")})
        else:
            report.add(pair.id, pred, y)
    if out_csv is not None:
        report.to_csv(out_csv)
    return report


def input_baseline(dataset):
    """Metrics of the rainy inputs themselves against the clean targets."""
    report = MetricsReport()
    for i in range(len(dataset)):
        pair = dataset[i]
        report.add(pair.id, to_tensor(pair.rainy, torch.float64),
                   to_tensor(pair.clean, torch.float64))
    return report


@dataclass
class DiagnosticsDump:
    h_means: list = field(default_factory=list)   # one per Stage In / Stage Mid
    o_means: list = field(default_factory=list)   # [stage][scale]
    epoch: int = -1

    def to_dict(self):
        return {"epoch": self.epoch, "h_means": self.h_means, "o_means": self.o_means}


@torch.no_grad()
def dump_diagnostics(model: SDPSFNet, batch, epoch=-1):
    """Mean of each stage's H and of each scale of its cross-stage features O."""
    outs, _ = model.run_stages(batch)
    return DiagnosticsDump([o.h.mean().item() for o in outs],
                           [[t.mean().item() for t in o.o] for o in outs], epoch)


# cumulative ablation ladder: additive MPRNet-style baseline up to the full model
PRESETS = {
    "baseline": dict(use_gate=False, use_h_updates=False, use_enhanced_csff=False,
                     psf_channels_mode="off"),
    "gate": dict(use_gate=True, use_h_updates=False, use_enhanced_csff=False,
                 psf_channels_mode="off"),
    "h_updates": dict(use_gate=True, use_h_updates=True, use_enhanced_csff=False,
                      psf_channels_mode="off"),
    "enhanced_csff": dict(use_gate=True, use_h_updates=True, use_enhanced_csff=True,
                          psf_channels_mode="off"),
    "psf_1ch": dict(use_gate=True, use_h_updates=True, use_enhanced_csff=True,
                    psf_channels_mode="1"),
    "psf_full": dict(use_gate=True, use_h_updates=True, use_enhanced_csff=True,
                     psf_channels_mode="full"),
}
ABLATION_LADDER = tuple(PRESETS)


def variant_config(cfg: TrainConfig, toggle: str) -> TrainConfig:
    """Apply one toggle: a preset name, ``tau=N``, ``disable:<stage>:<site>``
    or ``<model field>=<value>`` for the boolean switches."""
    model = cfg.model
    if toggle in PRESETS:
        model = replace(model, **PRESETS[toggle])
    elif toggle.startswith("tau="):
        model = replace(model, tau=int(toggle[4:]))
    elif toggle.startswith("disable:"):
        pathway = toggle[len("disable:"):]
        parse_pathway(pathway, model.tau)
        model = replace(model, disabled_pathways=model.disabled_pathways + (pathway,))
    elif "=" in toggle:
        key, value = toggle.split("=", 1)
        if key in ("use_gate", "use_h_updates", "use_enhanced_csff"):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(f"bad boolean {value!r} for {key}")
            model = replace(model, **{key: value.lower() in ("true", "1")})
        elif key == "psf_channels_mode":
            model = replace(model, psf_channels_mode=value)
        else:
            raise ValueError(f"unknown toggle {toggle!r}")
    else:
        raise ValueError(f"unknown toggle {toggle!r}")
    return replace(cfg, model=model)


def run_ablation(cfg: TrainConfig, toggles, dataset=None, out_dir="runs/ablation",
                 probe_size=16, device=None):
    """Build each variant, run it forward and optionally train and evaluate it.

    Without a dataset, each variant is checked with a random ``probe_size``
    input. Returns one row per toggle.
    """
    variants = [(t, variant_config(cfg, t)) for t in toggles]
    device = torch.device(device) if device is not None else default_device()
    rows = []
    for name, vcfg in variants:
        row = {"variant": name, "params": count_parameters(vcfg.model)}
        if dataset is None:
            torch.manual_seed(vcfg.seed)
            model = SDPSFNet(vcfg.model).to(device).eval()
            probe = torch.rand(1, 3, probe_size, probe_size, device=device)
            with torch.no_grad():
                final, inters = model(probe)
            row["outputs"] = len(inters) + 1
            row["finite"] = bool(torch.isfinite(final).all())
        else:
            safe = name.replace(":", "_").replace("=", "_")
            ckpt = train(vcfg, dataset, Path(out_dir) / safe, device=device)
            row.update(evaluate(ckpt, dataset, device=device).means())
        rows.append(row)
    return rows


def format_table(rows):
    if not rows:
        return ""
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]

    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        if isinstance(v, int) and not isinstance(v, bool) and v > 10000:
            return f"{v / 1e6:.2f}M"
        return str(v)

    cells = [[fmt(r.get(k, "")) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.ljust(w) for k, w in zip(keys, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(cell, widths)) for cell in cells]
    return "\n".join(lines)
