"""Foreground-document segmentation.

A small encoder-decoder network predicts a per-pixel confidence that the
pixel belongs to the document page. Binarizing at a threshold tau and
multiplying the image by the resulting mask removes the background so the
rectification model only ever sees the page.

Images follow the package convention: float arrays in [0, 1], channel-last.
The network itself runs on torch tensors; the public entry points accept
numpy arrays and hide the conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .formats import atomic_write_bytes

CLAMP_EPS = 1e-7
CHECKPOINT_VERSION = 1


def _block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.GroupNorm(4, cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.GroupNorm(4, cout),
        nn.ReLU(inplace=True),
    )


class SegNet(nn.Module):
    """Encoder-decoder with 4 down/up stages; outputs one logit per pixel."""

    def __init__(self, base: int = 16):
        super().__init__()
        if base < 4 or base % 4:
            raise ValueError("base width must be a positive multiple of 4")
        self.base = base
        w = [base, base * 2, base * 4, base * 8]
        self.enc0 = _block(3, w[0])
        self.enc1 = _block(w[0], w[1])
        self.enc2 = _block(w[1], w[2])
        self.enc3 = _block(w[2], w[3])
        self.pool = nn.MaxPool2d(2)
        self.mid = _block(w[3], w[3])
        self.dec3 = _block(w[3] + w[3], w[2])
        self.dec2 = _block(w[2] + w[2], w[1])
        self.dec1 = _block(w[1] + w[1], w[0])
        self.dec0 = _block(w[0] + w[0], w[0])
        self.head = nn.Conv2d(w[0], 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e0 = self.enc0(x)
        e1 = self.enc1(self.pool(e0))
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        m = self.mid(self.pool(e3))

        def up(t, skip):
            return torch.cat([nn.functional.interpolate(
                t, size=skip.shape[-2:], mode="bilinear", align_corners=False), skip], dim=1)

        d3 = self.dec3(up(m, e3))
        d2 = self.dec2(up(d3, e2))
        d1 = self.dec1(up(d2, e1))
        d0 = self.dec0(up(d1, e0))
        return self.head(d0)


@dataclass
class SegmenterParams:
    """Trained segmentation network plus its binarization threshold."""

    net: SegNet = field(repr=False)
    tau: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError("tau must lie strictly inside (0, 1)")


def segment_confidence(image: np.ndarray, params: SegmenterParams) -> np.ndarray:
    """Per-pixel page confidence in (0, 1) for a 3-channel image."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("segment_confidence expects an H x W x 3 image")
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
    x = x.permute(2, 0, 1).unsqueeze(0)
    params.net.eval()
    with torch.no_grad():
        logits = params.net(x)
    return torch.sigmoid(logits)[0, 0].numpy()


def remove_background(image: np.ndarray, confidence: np.ndarray,
                      tau: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Zero out background pixels: mask = confidence >= tau, image * mask."""
    if confidence.shape != image.shape[:2]:
        raise ValueError("confidence shape %r does not match image %r"
                         % (confidence.shape, image.shape))
    mask = confidence >= tau
    if image.ndim == 3:
        out = image * mask[:, :, None]
    else:
        out = image * mask
    return out.astype(image.dtype, copy=False), mask


def seg_loss(confidence, target) -> torch.Tensor:
    """Mean binary cross-entropy between confidence and a 0/1 target.

    Confidence values are clamped to [eps, 1-eps] before the logs so exact
    0/1 inputs stay finite. Accepts torch tensors (gradients flow) or numpy.
    """
    p = torch.as_tensor(confidence)
    y = torch.as_tensor(target, dtype=p.dtype)
    if p.shape != y.shape:
        raise ValueError("confidence and target shapes differ")
    p = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    return (-(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))).mean()


def train_segmenter(pairs: list[tuple[np.ndarray, np.ndarray]], *,
                    steps: int = 300, batch: int = 4, lr: float = 1e-3,
                    seed: int = 0, base: int = 16, tau: float = 0.5,
                    progress=None) -> tuple[SegmenterParams, list[float]]:
    """Train a fresh SegNet on (image, page_mask) pairs; returns per-step losses."""
    if not pairs:
        raise ValueError("need at least one training pair")
    torch.manual_seed(seed)
    net = SegNet(base)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    imgs = [torch.from_numpy(np.ascontiguousarray(im, dtype=np.float32)).permute(2, 0, 1)
            for im, _ in pairs]
    masks = [torch.from_numpy(m.astype(np.float32)) for _, m in pairs]
    losses = []
    for step in range(steps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, step]))
        idx = rng.choice(len(pairs), size=min(batch, len(pairs)), replace=False)
        x = torch.stack([imgs[i] for i in idx])
        y = torch.stack([masks[i] for i in idx]).unsqueeze(1)
        conf = torch.sigmoid(net(x))
        loss = seg_loss(conf, y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if progress is not None:
            progress(step, losses[-1])
    net.eval()
    return SegmenterParams(net=net, tau=tau), losses


def save_segmenter(path, params: SegmenterParams) -> None:
    """Checkpoint with named parameter blocks; atomic write."""
    import io

    buf = io.BytesIO()
    torch.save({
        "version": CHECKPOINT_VERSION,
        "kind": "segmenter",
        "base": params.net.base,
        "tau": params.tau,
        "state": params.net.state_dict(),
    }, buf)
    atomic_write_bytes(path, buf.getvalue())


def load_segmenter(path) -> SegmenterParams:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(blob, dict) or blob.get("kind") != "segmenter":
        raise ValueError("%s is not a segmenter checkpoint" % path)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported segmenter checkpoint version %r" % blob.get("version"))
    net = SegNet(blob["base"])
    net.load_state_dict(blob["state"])
    net.eval()
    return SegmenterParams(net=net, tau=blob["tau"])
