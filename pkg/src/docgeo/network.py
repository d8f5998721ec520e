"""Rectification model: hybrid convolutional/transformer flow predictor.

The model consumes a background-removed document photo and predicts the
backward warping flow that rectifies it, supervised by three signals:

* a 3D coordinate map of the paper surface (structure branch),
* a textline confidence map (textline branch),
* the ground-truth backward flow (main output).

Pipeline: a convolutional stem reduces the image to 1/8 resolution with C
channels; the structure branch runs transformer encoder layers over those
tokens and regresses the 3D map; the textline branch is a small UNet whose
1/8-resolution decoder feature is flattened into tokens; both token streams
are concatenated and fused by further transformer layers; a two-layer conv
head predicts the coarse flow, expanded to full resolution by a learned
convex combination of each pixel's 3x3 coarse neighborhood.

Flow values are in full-resolution pixel units at every stage; upsampling
never rescales magnitudes. Tensors are channel-first torch; the numpy
helpers at the bottom bridge to the package's channel-last image world.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .geometry import WarpField, apply_flow
from .formats import atomic_write_bytes

CLAMP_EPS = 1e-7
CHECKPOINT_VERSION = 1


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults are the full-size model."""

    height: int = 288
    width: int = 288
    channels: int = 128        # conv feature width C at 1/8 resolution
    attn_width: int = 256      # transformer token width
    heads: int = 8
    enc_layers: int = 6        # structure-branch transformer depth
    fusion_layers: int = 6     # decoder transformer depth
    text_channels: int = 64    # textline token width
    alpha: float = 0.2         # weight of the 3D-map loss
    beta: float = 0.2          # weight of the textline loss

    def __post_init__(self):
        if self.height % 8 or self.width % 8 or self.height <= 0 or self.width <= 0:
            raise ValueError("height and width must be positive multiples of 8")
        if self.channels % 16:
            raise ValueError("channels must be a multiple of 16")
        if self.attn_width % self.heads:
            raise ValueError("attn_width must be divisible by heads")
        if self.attn_width % 4:
            raise ValueError("attn_width must be divisible by 4")
        if self.text_channels % 4 or self.text_channels < 8:
            raise ValueError("text_channels must be a multiple of 4, at least 8")
        if self.enc_layers < 1 or self.fusion_layers < 1:
            raise ValueError("layer counts must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def toy(cls) -> "ModelConfig":
        """Small preset that trains in minutes on a CPU."""
        return cls(height=128, width=128, channels=32, attn_width=64,
                   heads=4, enc_layers=2, fusion_layers=2, text_channels=64)

    @property
    def grid_height(self) -> int:
        return self.height // 8

    @property
    def grid_width(self) -> int:
        return self.width // 8

    @property
    def n_tokens(self) -> int:
        return self.grid_height * self.grid_width


@dataclass
class ForwardOutputs:
    """Everything one forward pass produces; branch fields are None when
    the corresponding branch is disabled."""

    flow: torch.Tensor                      # (B, 2, H, W), (dx, dy) pixels
    coarse_flow: torch.Tensor               # (B, 2, H/8, W/8), same units
    fused_tokens: torch.Tensor              # (B, N, fusion width)
    coords3d: torch.Tensor | None = None    # (B, 3, H, W)
    text_conf: torch.Tensor | None = None   # (B, 1, H, W) in (0, 1)
    shape_tokens: list = field(default_factory=list)  # per-layer (B, N, C)
    text_tokens: torch.Tensor | None = None  # (B, N, text_channels)


# --------------------------------------------------- positional encoding

def positional_encoding(h: int, w: int, width: int) -> torch.Tensor:
    """Sinusoidal 2D encodings, one width-dim vector per grid cell.

    Channels split in four blocks: sin(x), cos(x), sin(y), cos(y), each over
    width/4 geometric frequencies. Row-major token order (y outer, x inner).
    """
    if width % 4 or width <= 0:
        raise ValueError("encoding width must be a positive multiple of 4")
    if h <= 0 or w <= 0:
        raise ValueError("grid dimensions must be positive")
    quarter = width // 4
    freqs = torch.exp(-math.log(10000.0) * torch.arange(quarter, dtype=torch.float64) / quarter)
    ys, xs = torch.meshgrid(torch.arange(h, dtype=torch.float64),
                            torch.arange(w, dtype=torch.float64), indexing="ij")
    xf = xs.reshape(-1, 1) * freqs
    yf = ys.reshape(-1, 1) * freqs
    pe = torch.cat([torch.sin(xf), torch.cos(xf), torch.sin(yf), torch.cos(yf)], dim=1)
    return pe.to(torch.float32)


# ------------------------------------------------------ transformer layer

class EncoderLayer(nn.Module):
    """Post-norm transformer encoder layer.

    Positional encodings are added to the query and key inputs only; values
    carry the raw tokens, so position never leaks into the content path.
    """

    def __init__(self, width: int, heads: int, ffn_dim: int | None = None):
        super().__init__()
        if width % heads:
            raise ValueError("width must be divisible by heads")
        self.width = width
        self.heads = heads
        self.wq = nn.Linear(width, width)
        self.wk = nn.Linear(width, width)
        self.wv = nn.Linear(width, width)
        self.wo = nn.Linear(width, width)
        self.ln1 = nn.LayerNorm(width)
        self.ln2 = nn.LayerNorm(width)
        hidden = ffn_dim if ffn_dim is not None else 2 * width
        self.ffn = nn.Sequential(nn.Linear(width, hidden), nn.ReLU(inplace=True),
                                 nn.Linear(hidden, width))

    def attention(self, x: torch.Tensor, pe: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, n, d = x.shape
        h = self.heads
        dh = d // h
        q_in = x + pe
        q = self.wq(q_in).view(b, n, h, dh).transpose(1, 2)
        k = self.wk(q_in).view(b, n, h, dh).transpose(1, 2)
        v = self.wv(x).view(b, n, h, dh).transpose(1, 2)
        weights = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dh), dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(b, n, d)
        return self.wo(mixed), weights

    def forward(self, x: torch.Tensor, pe: torch.Tensor,
                return_weights: bool = False):
        if x.shape[-1] != self.width:
            raise ValueError("token width %d does not match layer width %d"
                             % (x.shape[-1], self.width))
        attn, weights = self.attention(x, pe)
        x = self.ln1(x + attn)
        x = self.ln2(x + self.ffn(x))
        if return_weights:
            return x, weights
        return x


# ------------------------------------------------------------- conv stem

def _gn(width: int) -> nn.GroupNorm:
    return nn.GroupNorm(4, width)


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.norm1 = _gn(width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.norm2 = _gn(width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.relu(self.norm1(self.conv1(x)), inplace=True)
        y = self.norm2(self.conv2(y))
        return F.relu(x + y, inplace=True)


class ConvStem(nn.Module):
    """Three stride-2 stages with six residual blocks; output C x H/8 x W/8."""

    def __init__(self, channels: int):
        super().__init__()
        widths = [channels // 4, channels // 2, channels]
        layers = []
        prev = 3
        for w in widths:
            layers += [nn.Conv2d(prev, w, 3, stride=2, padding=1), _gn(w),
                       nn.ReLU(inplace=True), ResidualBlock(w), ResidualBlock(w)]
            prev = w
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


# ----------------------------------------------------- structure branch

class StructureEncoder(nn.Module):
    """Transformer stack over stem tokens plus a full-resolution 3D-map head.

    Width adapters keep the stage interface at C: tokens are widened to the
    attention width before the first layer and every exposed per-layer stack
    is mapped back to C by a shared output adapter.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.in_adapter = nn.Linear(cfg.channels, cfg.attn_width)
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.attn_width, cfg.heads) for _ in range(cfg.enc_layers))
        self.out_adapter = nn.Linear(cfg.attn_width, cfg.channels)
        self.head = nn.Conv2d(cfg.channels, 3, 3, padding=1)

    def forward(self, tokens: torch.Tensor, pe: torch.Tensor
                ) -> tuple[list[torch.Tensor], torch.Tensor]:
        x = self.in_adapter(tokens)
        stacks = []
        for layer in self.layers:
            x = layer(x, pe)
            stacks.append(self.out_adapter(x))
        b = tokens.shape[0]
        fmap = stacks[-1].transpose(1, 2).reshape(
            b, self.cfg.channels, self.cfg.grid_height, self.cfg.grid_width)
        up = F.interpolate(fmap, scale_factor=8, mode="bilinear", align_corners=False)
        return stacks, self.head(up)


# ------------------------------------------------------ textline branch

def _conv_block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1), _gn(cout), nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1), _gn(cout), nn.ReLU(inplace=True))


class TextlineNet(nn.Module):
    """UNet textline detector; also exposes its 1/8-resolution decoder feature.

    Contracting part: four pooling stages. Expansive part: mirror upsampling
    with skip concatenation (skips removable for ablation witnesses). The
    classification part is a 1x1 conv + sigmoid at full resolution.
    """

    def __init__(self, text_channels: int = 64, base: int = 16, use_skips: bool = True):
        super().__init__()
        self.use_skips = use_skips
        w = [base, base * 2, base * 4, base * 8]
        d = [text_channels, max(text_channels // 2, base), base, base]
        self.enc0 = _conv_block(3, w[0])
        self.enc1 = _conv_block(w[0], w[1])
        self.enc2 = _conv_block(w[1], w[2])
        self.enc3 = _conv_block(w[2], w[3])
        self.mid = _conv_block(w[3], w[3])
        self.pool = nn.MaxPool2d(2)
        skip = (lambda i: w[i] if use_skips else 0)
        self.dec3 = _conv_block(w[3] + skip(3), d[0])
        self.dec2 = _conv_block(d[0] + skip(2), d[1])
        self.dec1 = _conv_block(d[1] + skip(1), d[2])
        self.dec0 = _conv_block(d[2] + skip(0), d[3])
        self.classify = nn.Conv2d(d[3], 1, 1)

    def _up(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        if self.use_skips:
            x = torch.cat([x, skip], dim=1)
        return x

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        e0 = self.enc0(x)
        e1 = self.enc1(self.pool(e0))
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        m = self.mid(self.pool(e3))
        d3 = self.dec3(self._up(m, e3))          # 1/8 resolution tap
        d2 = self.dec2(self._up(d3, e2))
        d1 = self.dec1(self._up(d2, e1))
        d0 = self.dec0(self._up(d1, e0))
        conf = torch.sigmoid(self.classify(d0))
        return d3, conf


# -------------------------------------------------------- fusion decoder

class FusionDecoder(nn.Module):
    """Transformer layers over the concatenated token streams.

    Adapters widen to the attention width on entry and restore the input
    width on exit, so the fused tokens match the concatenation width.
    """

    def __init__(self, in_width: int, cfg: ModelConfig):
        super().__init__()
        self.in_width = in_width
        self.in_adapter = nn.Linear(in_width, cfg.attn_width)
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.attn_width, cfg.heads) for _ in range(cfg.fusion_layers))
        self.out_adapter = nn.Linear(cfg.attn_width, in_width)

    def forward(self, tokens: torch.Tensor, pe: torch.Tensor) -> torch.Tensor:
        if tokens.shape[-1] != self.in_width:
            raise ValueError("fusion expects %d-wide tokens, got %d"
                             % (self.in_width, tokens.shape[-1]))
        x = self.in_adapter(tokens)
        for layer in self.layers:
            x = layer(x, pe)
        return self.out_adapter(x)


# ------------------------------------------------------ convex upsample

def convex_upsample(coarse: torch.Tensor, weight_logits: torch.Tensor,
                    factor: int = 8) -> torch.Tensor:
    """Expand a coarse field by per-pixel convex combinations.

    Each fine pixel inside coarse cell (i, j) at sub-position (fy, fx) takes
    a softmax-weighted sum of the 3x3 coarse neighborhood of (i, j), border
    cells replicated. Logit channel layout: k * factor^2 + fy * factor + fx,
    with k = ky * 3 + kx indexing the neighborhood row-major. Values pass
    through unscaled, so units are preserved.
    """
    b, c, h, w = coarse.shape
    if weight_logits.shape != (b, 9 * factor * factor, h, w):
        raise ValueError("weight logits must have shape (B, 9*factor^2, h, w)")
    weights = torch.softmax(weight_logits.view(b, 9, factor * factor, h, w), dim=1)
    padded = F.pad(coarse, (1, 1, 1, 1), mode="replicate")
    patches = F.unfold(padded, 3).view(b, c, 9, 1, h, w)
    up = (patches * weights.unsqueeze(1)).sum(dim=2)          # (B, C, f^2, h, w)
    up = up.view(b, c, factor, factor, h, w)
    up = up.permute(0, 1, 4, 2, 5, 3).reshape(b, c, h * factor, w * factor)
    return up


# ---------------------------------------------------- bilinear sampling

def bilinear_sample(feat: torch.Tensor, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Differentiable bilinear lookup of (B, C, H, W) features at pixel coords.

    Coordinates are clamped to the image rectangle (edge replication), the
    same convention as the numpy sampler. Gradients flow to both the feature
    map and the coordinates.
    """
    b, c, hh, ww = feat.shape
    if x.dim() == 2:
        x = x.unsqueeze(0).expand(b, -1, -1)
        y = y.unsqueeze(0).expand(b, -1, -1)
    if x.shape != y.shape or x.shape[0] != b:
        raise ValueError("coordinate shapes must match and share the batch size")
    xc = x.clamp(0, ww - 1)
    yc = y.clamp(0, hh - 1)
    x0 = xc.detach().floor().clamp(0, max(ww - 2, 0))
    y0 = yc.detach().floor().clamp(0, max(hh - 2, 0))
    tx = (xc - x0).unsqueeze(1)
    ty = (yc - y0).unsqueeze(1)
    x0l = x0.long()
    y0l = y0.long()
    x1l = (x0l + 1).clamp(max=ww - 1)
    y1l = (y0l + 1).clamp(max=hh - 1)
    flat = feat.reshape(b, c, hh * ww)

    def pick(yi, xi):
        idx = (yi * ww + xi).reshape(b, 1, -1).expand(b, c, -1)
        return flat.gather(2, idx).reshape(b, c, *x.shape[1:])

    f00 = pick(y0l, x0l)
    f01 = pick(y0l, x1l)
    f10 = pick(y1l, x0l)
    f11 = pick(y1l, x1l)
    top = f00 * (1 - tx) + f01 * tx
    bot = f10 * (1 - tx) + f11 * tx
    return top * (1 - ty) + bot * ty


# ---------------------------------------------------------------- losses

def loss_3d(pred: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute 3D-map error over masked pixels (all 3 channels)."""
    pred = torch.as_tensor(pred)
    gt = torch.as_tensor(gt, dtype=pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError("3D map shapes differ")
    m = torch.as_tensor(mask, dtype=pred.dtype)
    if m.shape != pred.shape[:-3] + pred.shape[-2:]:
        raise ValueError("mask shape does not match the maps")
    count = m.sum()
    if count == 0:
        raise ValueError("mask selects no pixels")
    diff = (pred - gt).abs() * m.unsqueeze(-3)
    return diff.sum() / (3.0 * count)


def loss_text(pred: torch.Tensor, gt: torch.Tensor, doc_mask: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy over document-foreground pixels only."""
    p = torch.as_tensor(pred)
    y = torch.as_tensor(gt, dtype=p.dtype)
    if p.shape != y.shape:
        raise ValueError("textline map shapes differ")
    m = torch.as_tensor(doc_mask, dtype=p.dtype)
    if m.shape != p.shape:
        m = m.reshape(p.shape)
    count = m.sum()
    if count == 0:
        raise ValueError("document mask selects no pixels")
    pc = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    bce = -(y * torch.log(pc) + (1.0 - y) * torch.log(1.0 - pc))
    return (bce * m).sum() / count


def loss_flow(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean absolute flow error over all pixels and both components."""
    pred = torch.as_tensor(pred)
    gt = torch.as_tensor(gt, dtype=pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError("flow shapes differ")
    return (pred - gt).abs().mean()


def total_loss(l3d, ltext, lflow, alpha: float = 0.2, beta: float = 0.2):
    """Weighted objective: alpha * 3D + beta * text + flow."""
    return alpha * l3d + beta * ltext + lflow


# ------------------------------------------------------------ full model

class RectificationNetwork(nn.Module):
    """Full flow predictor; branch and upsampler choices are ablation flags.

    With both branches off the fusion decoder runs on the raw stem tokens,
    giving the flow-only baseline configuration.
    """

    def __init__(self, cfg: ModelConfig, use_se: bool = True, use_te: bool = True,
                 learnable_upsample: bool = True, text_skips: bool = True):
        super().__init__()
        self.cfg = cfg
        self.use_se = use_se
        self.use_te = use_te
        self.learnable_upsample = learnable_upsample
        self.stem = ConvStem(cfg.channels)
        self.structure = StructureEncoder(cfg) if use_se else None
        self.textline = TextlineNet(cfg.text_channels, use_skips=text_skips) if use_te else None
        width = (cfg.channels if use_se else 0) + (cfg.text_channels if use_te else 0)
        if width == 0:
            width = cfg.channels
        self.fusion_width = width
        self.fusion = FusionDecoder(width, cfg)
        self.flow_head = nn.Sequential(
            nn.Conv2d(width, width, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(width, 2, 3, padding=1))
        nn.init.zeros_(self.flow_head[-1].weight)
        nn.init.zeros_(self.flow_head[-1].bias)
        if learnable_upsample:
            self.weight_head = nn.Sequential(
                nn.Conv2d(width, width, 3, padding=1), nn.ReLU(inplace=True),
                nn.Conv2d(width, 9 * 64, 3, padding=1))
        else:
            self.weight_head = None
        pe = positional_encoding(cfg.grid_height, cfg.grid_width, cfg.attn_width)
        self.register_buffer("pe", pe, persistent=False)

    def forward(self, x: torch.Tensor) -> ForwardOutputs:
        cfg = self.cfg
        if x.dim() != 4 or x.shape[1:] != (3, cfg.height, cfg.width):
            raise ValueError("expected input of shape (B, 3, %d, %d)"
                             % (cfg.height, cfg.width))
        b = x.shape[0]
        feat = self.stem(x)
        stem_tokens = feat.flatten(2).transpose(1, 2)

        stacks: list = []
        coords = None
        z_c = None
        if self.structure is not None:
            stacks, coords = self.structure(stem_tokens, self.pe)
            z_c = stacks[min(4, cfg.enc_layers) - 1]
        text_tokens = None
        text_conf = None
        if self.textline is not None:
            tap, text_conf = self.textline(x)
            text_tokens = tap.flatten(2).transpose(1, 2)

        parts = [t for t in (z_c, text_tokens) if t is not None]
        fusion_in = torch.cat(parts, dim=-1) if parts else stem_tokens
        fused = self.fusion(fusion_in, self.pe)
        fmap = fused.transpose(1, 2).reshape(
            b, self.fusion_width, cfg.grid_height, cfg.grid_width)
        coarse = self.flow_head(fmap)
        if self.weight_head is not None:
            flow = convex_upsample(coarse, self.weight_head(fmap), 8)
        else:
            flow = F.interpolate(coarse, scale_factor=8, mode="bilinear",
                                 align_corners=False)
        return ForwardOutputs(flow=flow, coarse_flow=coarse, fused_tokens=fused,
                              coords3d=coords, text_conf=text_conf,
                              shape_tokens=stacks, text_tokens=text_tokens)


# ----------------------------------------------------------- checkpoints

def save_model(path, model: RectificationNetwork, step: int = 0, extra: dict | None = None) -> None:
    """Atomic checkpoint: named parameter blocks + config echo + step counter."""
    import io

    blob = {
        "version": CHECKPOINT_VERSION,
        "kind": "rectifier",
        "config": asdict(model.cfg),
        "flags": {
            "use_se": model.use_se,
            "use_te": model.use_te,
            "learnable_upsample": model.learnable_upsample,
            "text_skips": model.textline.use_skips if model.textline is not None else True,
        },
        "step": int(step),
        "state": model.state_dict(),
    }
    if extra:
        blob["extra"] = extra
    buf = io.BytesIO()
    torch.save(blob, buf)
    atomic_write_bytes(path, buf.getvalue())


def load_model(path) -> tuple[RectificationNetwork, int, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(blob, dict) or blob.get("kind") != "rectifier":
        raise ValueError("%s is not a rectifier checkpoint" % path)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint version %r" % blob.get("version"))
    cfg = ModelConfig(**blob["config"])
    flags = blob["flags"]
    model = RectificationNetwork(cfg, use_se=flags["use_se"], use_te=flags["use_te"],
                                 learnable_upsample=flags["learnable_upsample"],
                                 text_skips=flags.get("text_skips", True))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, blob.get("step", 0), blob.get("extra", {})


# ------------------------------------------------------- numpy interface

def predict_flow(image: np.ndarray, model: RectificationNetwork) -> WarpField:
    """Predict the backward flow for one RGB image, at the image's resolution.

    The image is resized to the model's input size; the predicted flow is
    resized back with its values scaled to source-resolution pixel units.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("predict_flow expects an H x W x 3 image")
    h, w = image.shape[:2]
    cfg = model.cfg
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)
    x = x.unsqueeze(0)
    if (h, w) != (cfg.height, cfg.width):
        x = F.interpolate(x, size=(cfg.height, cfg.width), mode="bilinear",
                          align_corners=False)
    model.eval()
    with torch.no_grad():
        out = model(x)
        flow = out.flow
        if (h, w) != (cfg.height, cfg.width):
            flow = F.interpolate(flow, size=(h, w), mode="bilinear", align_corners=False)
            sx = w / cfg.width
            sy = h / cfg.height
            flow = torch.stack([flow[:, 0] * sx, flow[:, 1] * sy], dim=1)
    f = flow[0].numpy()
    return WarpField(dx=f[0].astype(np.float64), dy=f[1].astype(np.float64))


def rectify_image(image: np.ndarray, model: RectificationNetwork) -> tuple[np.ndarray, WarpField]:
    """Predict the flow and backward-warp the image with it."""
    flow = predict_flow(image, model)
    return apply_flow(image, flow), flow
