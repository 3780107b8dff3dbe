"""Training loop: AdamW, warmup + cosine schedule, global-norm clipping."""

import json
import logging
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .data import TrainPatches
from .losses import LossWeights, total_loss
from .network import ModelConfig, SDPSFNet

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "sdpsfnet-checkpoint/1"


@dataclass
class TrainConfig:
    lr_init: float = 1e-4
    lr_final: float = 1e-6
    warmup_epochs: int = 3
    epochs: int = 100
    clip_norm: float = 2.0
    batch_size: int = 4
    seed: int = 0
    precision: str = "full"
    weight_decay: float = 1e-4
    patch_size: int = 128
    alpha1: float = 0.05
    alpha2: float = 0.01
    charbonnier_eps: float = 1e-3
    supervise_final: bool = True
    checkpoint_every: int = 0
    val_every: int = 0
    log_every: int = 10
    diag_every: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.lr_final > self.lr_init:
            raise ValueError("lr_final must not exceed lr_init")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("need 0 <= warmup_epochs < epochs")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.precision not in ("full", "mixed"):
            raise ValueError("precision must be 'full' or 'mixed'")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def loss_weights(self):
        return LossWeights(self.alpha1, self.alpha2, self.charbonnier_eps)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        d["model"] = self.model.to_dict()
        return d


def lr_schedule(step, steps_per_epoch, cfg: TrainConfig):
    """Linear warmup from 0 to ``lr_init`` then cosine decay to ``lr_final``.

    ``step`` counts completed updates; the last update of training uses
    ``step = epochs * steps_per_epoch``.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    warmup = cfg.warmup_epochs * steps_per_epoch
    total = cfg.epochs * steps_per_epoch
    if warmup and step <= warmup:
        return cfg.lr_init * (step / warmup)
    t = min(1.0, (step - warmup) / max(1, total - warmup))
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1 + math.cos(math.pi * t))


def grad_norm(params):
    grads = [p.grad.detach() for p in params if p.grad is not None]
    if not grads:
        return 0.0
    return torch.linalg.vector_norm(
        torch.stack([torch.linalg.vector_norm(g.double()) for g in grads])).item()


def clip_grad_norm(params, max_norm):
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    params = [p for p in params if p.grad is not None]
    norm = grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad.detach().mul_(scale)
    return norm


def default_device():
    env = os.environ.get("SDPSFNET_DEVICE")
    if env:
        return torch.device(env)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def save_checkpoint(path, model, cfg: TrainConfig, optimizer=None, epoch=0, step=0,
                    history=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "config": cfg.to_dict(),
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "step": step,
        "history": history or [],
    }, path)
    return path


def load_checkpoint(path, device="cpu"):
    """Returns ``(model, cfg, raw_checkpoint)``."""
    ckpt = torch.load(path, map_location=device, weights_only=False)
    if not isinstance(ckpt, dict) or ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an SD-PSFNet checkpoint")
    cfg = TrainConfig(**ckpt["config"])
    model = SDPSFNet(cfg.model)
    dtype = next(iter(ckpt["model"].values())).dtype
    model.to(device=device, dtype=dtype)
    missing, unexpected = model.load_state_dict(ckpt["model"], strict=False)
    if missing or unexpected:
        raise ValueError(f"checkpoint does not match its config: missing={missing[:3]} "
                         f"unexpected={unexpected[:3]}")
    model.eval()
    return model, cfg, ckpt


def _autocast(device, enabled):
    if not enabled:
        return torch.autocast(device.type, enabled=False)
    dtype = torch.float16 if device.type == "cuda" else torch.bfloat16
    return torch.autocast(device.type, dtype=dtype)


def train(cfg: TrainConfig, dataset, out_dir="runs/default", resume=None, device=None,
          dtype=torch.float32, val_dataset=None):
    """Train on ``dataset`` (a pair dataset) and return the final checkpoint path."""
    from .evaluate import dump_diagnostics, evaluate  # evaluate imports this module

    device = torch.device(device) if device is not None else default_device()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    model = SDPSFNet(cfg.model).to(device=device, dtype=dtype)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr_init,
                                  weight_decay=cfg.weight_decay)
    start_epoch, step, history, diagnostics = 0, 0, [], []
    if resume is not None:
        _, _, ckpt = load_checkpoint(resume, device)
        model.load_state_dict(ckpt["model"])
        if ckpt["optimizer"] is not None:
            optimizer.load_state_dict(ckpt["optimizer"])
        start_epoch, step, history = ckpt["epoch"], ckpt["step"], ckpt["history"]

    patches = TrainPatches(dataset, cfg.patch_size, cfg.seed)
    mixed = cfg.precision == "mixed"
    scaler = torch.amp.GradScaler("cuda") if mixed and device.type == "cuda" else None
    weights = cfg.loss_weights
    steps_per_epoch = math.ceil(len(patches) / cfg.batch_size)

    model.train()
    for epoch in range(start_epoch, cfg.epochs):
        patches.set_epoch(epoch)
        gen = torch.Generator().manual_seed(cfg.seed * 100003 + epoch)
        loader = DataLoader(patches, batch_size=cfg.batch_size, shuffle=True, generator=gen)
        for x, y in loader:
            x, y = x.to(device=device, dtype=dtype), y.to(device=device, dtype=dtype)
            lr = lr_schedule(step + 1, steps_per_epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad(set_to_none=True)
            with _autocast(device, mixed):
                final, inters = model(x)
            loss, parts = total_loss([i.float() if mixed else i for i in inters],
                                     final.float() if mixed else final, y, weights,
                                     cfg.supervise_final)
            if not torch.isfinite(loss):
                snap = save_checkpoint(out_dir / "nonfinite.pt", model, cfg, optimizer,
                                       epoch, step, history)
                raise FloatingPointError(
                    f"non-finite loss at step {step} (epoch {epoch}); snapshot in {snap}")
            if scaler is not None:
                scaler.scale(loss).backward()
                scaler.unscale_(optimizer)
            else:
                loss.backward()
            norm = clip_grad_norm(model.parameters(), cfg.clip_norm)
            if scaler is not None:
                scaler.step(optimizer)
                scaler.update()
            else:
                optimizer.step()
            step += 1
            record = {"step": step, "epoch": epoch, "lr": lr, "loss": loss.item(),
                      "grad_norm": norm, **parts}
            history.append(record)
            if cfg.log_every and step % cfg.log_every == 0:
                log.info("step %d epoch %d lr %.3g loss %.5f", step, epoch, lr, loss.item())
            if cfg.diag_every and step % cfg.diag_every == 0:
                dump = dump_diagnostics(model, x, epoch)
                diagnostics.append({"step": step, **dump.to_dict()})
        done = epoch + 1
        if val_dataset is not None and cfg.val_every and done % cfg.val_every == 0:
            model.eval()
            report = evaluate(model, val_dataset, device=device, y_only=True)
            model.train()
            history.append({"step": step, "epoch": epoch,
                            "val_psnr_y": report.means()["psnr_y"]})
            log.info("epoch %d val PSNR-Y %.2f dB", epoch, history[-1]["val_psnr_y"])
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"epoch{done:04d}.pt", model, cfg, optimizer,
                            done, step, history)

    model.eval()
    path = save_checkpoint(out_dir / "last.pt", model, cfg, optimizer, cfg.epochs, step, history)
    (out_dir / "history.json").write_text(json.dumps(history, indent=1))
    if diagnostics:
        (out_dir / "diagnostics.json").write_text(json.dumps(diagnostics, indent=1))
    return path
