"""Stage In / Stage Mid / ORStage assembly."""

from dataclasses import dataclass, field, fields
from typing import List, Optional

import torch
import torch.nn as nn

from .blocks import ORB, PSFBlock, SAM
from .fusion import EnhancedCSFF, GatedFusion, ShallowFeatures
from .layers import CAB, DownSample, SkipUpSample, UpSample, conv, zero_
from .psf import MultiScalePSFHead, check_psf

PSF_MODES = ("off", "1", "full")
PATHWAY_SITES = ("shallow", "encoder", "csff", "side")


@dataclass
class ModelConfig:
    tau: int = 3
    psf_channels: int = 40
    psf_size: int = 7
    n_feat: int = 40
    scale_unet: int = 20
    scale_ors: int = 16
    num_cab: int = 8
    kernel_size: int = 3
    reduction: int = 4
    bias: bool = False
    head_sizes: tuple = (3, 5, 7)
    psf_embed_dim: int = 64
    use_gate: bool = True
    use_h_updates: bool = True
    use_enhanced_csff: bool = True
    psf_channels_mode: str = "full"
    disabled_pathways: tuple = ()

    def __post_init__(self):
        self.head_sizes = tuple(self.head_sizes)
        self.disabled_pathways = tuple(self.disabled_pathways)
        self.psf_channels_mode = str(self.psf_channels_mode)
        if self.psf_channels_mode == str(self.psf_channels):
            self.psf_channels_mode = "full"
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.psf_channels < 1:
            raise ValueError("psf_channels must be >= 1")
        if self.n_feat <= 0 or self.scale_unet < 0 or self.scale_ors < 0:
            raise ValueError("feature widths must be positive")
        if self.psf_size % 2 == 0:
            raise ValueError("psf_size must be odd")
        if not self.head_sizes or any(k % 2 == 0 or k < 1 for k in self.head_sizes):
            raise ValueError("head_sizes must be a nonempty list of odd sizes")
        if self.psf_channels_mode not in PSF_MODES:
            raise ValueError(f"psf_channels_mode must be one of {PSF_MODES} "
                             f"or {self.psf_channels}")
        for p in self.disabled_pathways:
            parse_pathway(p, self.tau)

    @property
    def widths(self):
        return [self.n_feat + i * self.scale_unet for i in range(3)]

    @property
    def ors_width(self):
        return self.n_feat + self.scale_ors

    @property
    def effective_psf_channels(self):
        return {"off": 0, "1": 1, "full": self.psf_channels}[self.psf_channels_mode]

    @property
    def fusion_mode(self):
        return "gate" if self.use_gate else "add"

    @property
    def encoder_mode(self):
        return self.fusion_mode if self.use_h_updates else "add"

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_pathway(pathway, tau):
    """Parse ``"<stage>:<site>"`` where stage is an index (0 = Stage In) or ``ors``."""
    try:
        stage, site = pathway.split(":")
    except ValueError:
        raise ValueError(f"pathway must look like 'stage:site', got {pathway!r}") from None
    if site not in PATHWAY_SITES:
        raise ValueError(f"unknown pathway site {site!r}, expected one of {PATHWAY_SITES}")
    if stage == "ors":
        if site not in ("shallow", "side"):
            raise ValueError("ORStage pathways are 'shallow' and 'side'")
        return stage, site
    idx = int(stage)
    if not 0 <= idx <= tau:
        raise ValueError(f"stage index {idx} outside 0..{tau}")
    if site == "side":
        raise ValueError("'side' is an ORStage pathway")
    return idx, site


@dataclass
class StageOutput:
    restored: torch.Tensor
    h: torch.Tensor
    o: List[torch.Tensor]
    psf: Optional[torch.Tensor] = None
    enc: List[torch.Tensor] = field(default_factory=list)
    dec: List[torch.Tensor] = field(default_factory=list)


class Encoder(nn.Module):
    """Three-scale encoder; level outputs are fused with the previous stage's O."""

    def __init__(self, cfg: ModelConfig, history=False, blocks=2):
        super().__init__()
        w = cfg.widths
        k, r, b = cfg.kernel_size, cfg.reduction, cfg.bias
        self.levels = nn.ModuleList(
            nn.Sequential(*[CAB(w[i], k, r, bias=b) for _ in range(blocks)]) for i in range(3))
        self.down = nn.ModuleList([DownSample(w[0], w[1]), DownSample(w[1], w[2])])
        self.fuse = (nn.ModuleList(GatedFusion(w[i], mode=cfg.encoder_mode) for i in range(3))
                     if history else None)

    def forward(self, x, o_prev=None):
        feats = []
        for i, level in enumerate(self.levels):
            if i:
                x = self.down[i - 1](x)
            x = level(x)
            if self.fuse is not None and o_prev is not None:
                x = self.fuse[i](x, o_prev[i])
            feats.append(x)
        return feats


class Decoder(nn.Module):
    """Three-scale decoder whose blocks are PSF blocks conditioned on the stage PSF."""

    def __init__(self, cfg: ModelConfig, blocks=2):
        super().__init__()
        w = cfg.widths
        k, r, b = cfg.kernel_size, cfg.reduction, cfg.bias
        kc = cfg.effective_psf_channels
        self.use_psf = kc > 0

        def block(width):
            if self.use_psf:
                return PSFBlock(width, kc, k, bias=b, embed_dim=cfg.psf_embed_dim)
            return CAB(width, k, r, bias=b)

        self.levels = nn.ModuleList(
            nn.ModuleList(block(w[i]) for _ in range(blocks)) for i in range(3))
        self.skip_attn = nn.ModuleList([CAB(w[0], k, r, bias=b), CAB(w[1], k, r, bias=b)])
        self.up = nn.ModuleList([SkipUpSample(w[1], w[0]), SkipUpSample(w[2], w[1])])

    def _level(self, i, x, psf):
        for blk in self.levels[i]:
            x = blk(x, psf) if self.use_psf else blk(x)
        return x

    def forward(self, enc, psf=None):
        if self.use_psf and psf is None:
            raise ValueError("PSF decoder needs a PSF")
        dec3 = self._level(2, enc[2], psf)
        dec2 = self._level(1, self.up[1](dec3, self.skip_attn[1](enc[1])), psf)
        dec1 = self._level(0, self.up[0](dec2, self.skip_attn[0](enc[0])), psf)
        return [dec1, dec2, dec3]


class Stage(nn.Module):
    """Encoder-decoder stage. ``history=False`` is Stage In, ``True`` Stage Mid."""

    def __init__(self, cfg: ModelConfig, history=False):
        super().__init__()
        self.history = history
        n = cfg.n_feat
        self.shallow = ShallowFeatures(n, n if history else None, cfg.fusion_mode,
                                       cfg.kernel_size, cfg.reduction, cfg.bias)
        self.encoder = Encoder(cfg, history)
        kc = cfg.effective_psf_channels
        self.psf_head = (MultiScalePSFHead(cfg.widths, cfg.head_sizes, kc, cfg.psf_size)
                         if kc else None)
        self.decoder = Decoder(cfg)
        self.csff = EnhancedCSFF(cfg.widths, history, cfg.use_enhanced_csff,
                                 cfg.fusion_mode, bias=cfg.bias)
        self.sam = SAM(n, cfg.kernel_size, cfg.bias)

    def forward(self, img, h_prev=None, o_prev=None):
        x = self.shallow(img, h_prev)
        enc = self.encoder(x, o_prev)
        psf = self.psf_head(enc) if self.psf_head is not None else None
        dec = self.decoder(enc, psf)
        o = self.csff(enc, dec, o_prev)
        restored, h = self.sam(dec[0], img)
        return StageOutput(restored, h, o, psf, enc, dec)

    def fusions(self, site):
        """GatedFusion modules belonging to one pathway site."""
        if site == "shallow":
            return [self.shallow.fuse] if self.shallow.fuse is not None else []
        if site == "encoder":
            return list(self.encoder.fuse) if self.encoder.fuse is not None else []
        if site == "csff":
            if not self.csff.enhanced:
                return []
            mods = list(self.csff.first)
            if self.csff.second is not None:
                mods += list(self.csff.second)
            return mods
        raise ValueError(f"stage has no pathway {site!r}")


class ORStage(nn.Module):
    """Original-resolution stage: shallow fusion with H, three ORBs fed by O."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        width = cfg.ors_width
        k, r, b = cfg.kernel_size, cfg.reduction, cfg.bias
        self.shallow = ShallowFeatures(width, cfg.n_feat, cfg.fusion_mode, k, r, b)
        self.side = nn.ModuleList(
            UpSample(w, width, factor=2 ** i) for i, w in enumerate(cfg.widths))
        self.orbs = nn.ModuleList(ORB(width, k, r, b, cfg.num_cab) for _ in range(3))
        self.tail = conv(width, 3, k, bias=b)
        self.use_side = True

    def forward(self, img, h_mid, o_mid):
        x = self.shallow(img, h_mid)
        for i, orb in enumerate(self.orbs):
            side = self.side[i](o_mid[i]) if self.use_side else None
            x = orb(x, side)
        return self.tail(x) + img


class SDPSFNet(nn.Module):
    def __init__(self, cfg: Optional[ModelConfig] = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.stage_in = Stage(self.cfg, history=False)
        self.stage_mid = nn.ModuleList(Stage(self.cfg, history=True) for _ in range(self.cfg.tau))
        self.or_stage = ORStage(self.cfg)
        for p in self.cfg.disabled_pathways:
            disable_pathway(self, p)

    @property
    def stages(self):
        return [self.stage_in, *self.stage_mid]

    def run_stages(self, img):
        """All stage outputs (Stage In then each Stage Mid) and the final image."""
        h, w = img.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(f"input size {h}x{w} is not divisible by 4; "
                             "reflect-pad it first (see data.reflect_pad_for_inference)")
        outs = [self.stage_in(img)]
        for stage in self.stage_mid:
            prev = outs[-1]
            outs.append(stage(img, prev.h, prev.o))
        final = self.or_stage(img, outs[-1].h, outs[-1].o)
        return outs, final

    def forward(self, img):
        outs, final = self.run_stages(img)
        return final, [o.restored for o in outs]


def disable_pathway(model: SDPSFNet, pathway: str):
    """Switch one gated pathway to pass-through, e.g. ``"0:csff"`` or ``"ors:shallow"``."""
    stage, site = parse_pathway(pathway, model.cfg.tau)
    if stage == "ors":
        if site == "side":
            model.or_stage.use_side = False
        else:
            model.or_stage.shallow.fuse.mode = "off"
        return
    for fusion in model.stages[stage].fusions(site):
        fusion.mode = "off"


def check_stage_psfs(outs, atol=1e-5):
    for o in outs:
        if o.psf is not None:
            check_psf(o.psf, atol)


def zero_residual_tails(model: nn.Module) -> nn.Module:
    """Zero the last layer of every residual branch, making the net an identity."""
    for m in model.modules():
        if isinstance(m, (CAB, PSFBlock, SAM)):
            zero_(m.tail)
        elif isinstance(m, ORB):
            m.zero_tails()
        elif isinstance(m, ORStage):
            zero_(m.tail)
    return model


def count_parameters(cfg_or_model) -> int:
    model = cfg_or_model if isinstance(cfg_or_model, nn.Module) else SDPSFNet(cfg_or_model)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
