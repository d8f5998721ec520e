"""Training pipeline: dataset preparation, augmentation, optimization, ablations.

The loop is deterministic under a fixed seed with single-worker loading:
batch composition and augmentation draws are pure functions of
(seed, step, item), never of consumed generator state, so a run resumed
from a checkpoint replays exactly the steps an uninterrupted run would
have taken.
"""

from __future__ import annotations

import io
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .annotate import rasterize_lines
from .formats import atomic_write_bytes
from .network import (
    CHECKPOINT_VERSION,
    ModelConfig,
    RectificationNetwork,
    loss_3d,
    loss_flow,
    loss_text,
    total_loss,
)
from .synthgen import DistortedSample

UPSAMPLE_MODES = ("learnable", "bilinear")


# ---------------------------------------------------------------- configs

@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings plus the ablation switches.

    Branches can run unsupervised (flag on, supervision off); supervising a
    branch that is not built is rejected.
    """

    batch: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-4
    max_steps: int = 2000
    seed: int = 0
    val_every: int = 200
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    use_se: bool = True
    use_te: bool = True
    supervise_3d: bool = True
    supervise_text: bool = True
    upsample: str = "learnable"
    use_preprocessing: bool = True
    jitter_hue: float = 0.05
    jitter_sat: float = 0.2
    jitter_val: float = 0.15

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.batch < 1 or self.max_steps < 1:
            raise ValueError("batch and max_steps must be at least 1")
        if self.upsample not in UPSAMPLE_MODES:
            raise ValueError("upsample must be one of %r" % (UPSAMPLE_MODES,))
        if self.supervise_3d and not self.use_se:
            raise ValueError("supervise_3d requires use_se")
        if self.supervise_text and not self.use_te:
            raise ValueError("supervise_text requires use_te")
        if min(self.jitter_hue, self.jitter_sat, self.jitter_val) < 0:
            raise ValueError("jitter bounds must be non-negative")
        if self.checkpoint_every and not self.checkpoint_dir:
            raise ValueError("checkpoint_every needs a checkpoint_dir")


@dataclass
class TrainLog:
    """Per-step losses and periodic validation metrics."""

    steps: list = field(default_factory=list)   # {step, total, l3d, ltext, lflow}
    val: list = field(default_factory=list)     # {step, loss_flow, ld}
    wall_time: float = 0.0

    def to_csv(self, path) -> None:
        lines = ["step,total,l3d,ltext,lflow"]
        for row in self.steps:
            lines.append("%d,%.8g,%.8g,%.8g,%.8g" % (
                row["step"], row["total"], row["l3d"], row["ltext"], row["lflow"]))
        from .formats import atomic_write_text

        atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- dataset

@dataclass
class TrainSample:
    """Torch-ready tensors for one training item (channel-first)."""

    image: torch.Tensor        # (3, H, W) distorted photo
    flow: torch.Tensor         # (2, H, W) ground-truth backward flow
    page_mask: torch.Tensor    # (H, W) 0/1 document foreground
    coords3d: torch.Tensor     # (3, H, W) surface coordinate map
    text_mask: torch.Tensor    # (H, W) 0/1 textline capsules
    image_np: np.ndarray       # kept for augmentation in HSV space


def sample_to_train(sample: DistortedSample) -> TrainSample:
    """Convert a generated sample into training tensors."""
    img = np.ascontiguousarray(sample.img, dtype=np.float32)
    flow = np.stack([sample.flow.dx, sample.flow.dy]).astype(np.float32)
    text = rasterize_lines(sample.lines, sample.mask.shape)
    return TrainSample(
        image=torch.from_numpy(img).permute(2, 0, 1),
        flow=torch.from_numpy(flow),
        page_mask=torch.from_numpy(sample.mask.astype(np.float32)),
        coords3d=torch.from_numpy(
            np.ascontiguousarray(sample.coords3d, dtype=np.float32)).permute(2, 0, 1),
        text_mask=torch.from_numpy(text),
        image_np=img,
    )


def prepare_dataset(samples, cfg: ModelConfig) -> list[TrainSample]:
    """Convert DistortedSamples, checking they match the model resolution."""
    out = []
    for i, s in enumerate(samples):
        h, w = s.mask.shape
        if (h, w) != (cfg.height, cfg.width):
            raise ValueError(
                "sample %d is %dx%d but the model expects %dx%d; generate the "
                "dataset at the model resolution" % (i, h, w, cfg.height, cfg.width))
        out.append(sample_to_train(s))
    if not out:
        raise ValueError("dataset is empty")
    return out


def load_dataset_dir(path, cfg: ModelConfig) -> list[TrainSample]:
    """Load every sample_* subdirectory of a generated dataset."""
    from .synthgen import read_sample

    dirs = sorted(d for d in os.listdir(path) if d.startswith("sample_"))
    if not dirs:
        raise ValueError("no sample_* directories under %s" % path)
    return prepare_dataset((read_sample(os.path.join(path, d)) for d in dirs), cfg)


# ----------------------------------------------------------- augmentation

def _jitter_image(img: np.ndarray, rng: np.random.Generator,
                  hue: float, sat: float, val: float) -> np.ndarray:
    hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
    hsv[..., 0] = (hsv[..., 0] + rng.uniform(-hue, hue)) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * rng.uniform(1.0 - sat, 1.0 + sat), 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * rng.uniform(1.0 - val, 1.0 + val), 0.0, 1.0)
    return hsv_to_rgb(hsv).astype(img.dtype, copy=False)


def augment(sample: DistortedSample, seed: int, *, hue: float = 0.05,
            sat: float = 0.2, val: float = 0.15) -> DistortedSample:
    """Jitter the distorted photo in HSV space; all ground truth is shared
    untouched with the input sample. Zero bounds return the sample as is."""
    if hue == 0.0 and sat == 0.0 and val == 0.0:
        return sample
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFF, 11]))
    img = _jitter_image(np.asarray(sample.img, dtype=np.float64), rng, hue, sat, val)
    return replace(sample, img=img)


# ------------------------------------------------------------ train loop

def build_model(model_cfg: ModelConfig, cfg: TrainConfig) -> RectificationNetwork:
    """Seeded model construction honoring the ablation flags."""
    torch.manual_seed(cfg.seed)
    return RectificationNetwork(
        model_cfg, use_se=cfg.use_se, use_te=cfg.use_te,
        learnable_upsample=(cfg.upsample == "learnable"))


def _batch_indices(cfg: TrainConfig, step: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, step]))
    return rng.choice(n, size=min(cfg.batch, n), replace=n < cfg.batch)


def _augmented_image(ts: TrainSample, cfg: TrainConfig, step: int, idx: int) -> torch.Tensor:
    if cfg.jitter_hue == 0.0 and cfg.jitter_sat == 0.0 and cfg.jitter_val == 0.0:
        return ts.image
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3, step, idx]))
    img = _jitter_image(ts.image_np, rng, cfg.jitter_hue, cfg.jitter_sat, cfg.jitter_val)
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)


def _model_input(image: torch.Tensor, ts: TrainSample, cfg: TrainConfig) -> torch.Tensor:
    if cfg.use_preprocessing:
        return image * ts.page_mask.unsqueeze(0)
    return image


def _step_losses(model: RectificationNetwork, batch: list[TrainSample],
                 images: torch.Tensor, cfg: TrainConfig):
    out = model(images)
    gt_flow = torch.stack([ts.flow for ts in batch])
    lflow = loss_flow(out.flow, gt_flow)
    l3d = torch.zeros(())
    ltext = torch.zeros(())
    if cfg.supervise_3d:
        gt_c = torch.stack([ts.coords3d for ts in batch])
        mask = torch.stack([ts.page_mask for ts in batch])
        l3d = loss_3d(out.coords3d, gt_c, mask)
    if cfg.supervise_text:
        gt_t = torch.stack([ts.text_mask for ts in batch]).unsqueeze(1)
        mask = torch.stack([ts.page_mask for ts in batch]).unsqueeze(1)
        ltext = loss_text(out.text_conf, gt_t, mask)
    total = total_loss(l3d, ltext, lflow, model.cfg.alpha, model.cfg.beta)
    return total, l3d, ltext, lflow


def validate(model: RectificationNetwork, val: list[TrainSample],
             cfg: TrainConfig, batch: int = 4) -> dict:
    """Mean flow loss and ground-truth-matched local distortion.

    LD here measures the mean per-pixel Euclidean gap between predicted and
    true flow: the displacement a dense matcher would recover between the
    model's rectification and the ideal one.
    """
    model.eval()
    flow_losses = []
    lds = []
    with torch.no_grad():
        for lo in range(0, len(val), batch):
            chunk = val[lo:lo + batch]
            images = torch.stack([_model_input(ts.image, ts, cfg) for ts in chunk])
            out = model(images)
            gt = torch.stack([ts.flow for ts in chunk])
            flow_losses.append(loss_flow(out.flow, gt).item() * len(chunk))
            gap = out.flow - gt
            ld = torch.sqrt(gap[:, 0] ** 2 + gap[:, 1] ** 2).mean(dim=(1, 2))
            lds += ld.tolist()
    model.train()
    return {"loss_flow": sum(flow_losses) / len(val), "ld": float(np.mean(lds))}


def baseline_ld(val: list[TrainSample]) -> float:
    """LD of the identity rectification (leaving images distorted)."""
    lds = [torch.sqrt(ts.flow[0] ** 2 + ts.flow[1] ** 2).mean().item() for ts in val]
    return float(np.mean(lds))


def save_train_checkpoint(path, model: RectificationNetwork,
                          optimizer: torch.optim.Optimizer, step: int,
                          cfg: TrainConfig) -> None:
    blob = {
        "version": CHECKPOINT_VERSION,
        "kind": "train",
        "model_config": asdict(model.cfg),
        "flags": {
            "use_se": model.use_se,
            "use_te": model.use_te,
            "learnable_upsample": model.learnable_upsample,
        },
        "state": model.state_dict(),
        "optimizer": optimizer.state_dict(),
        "step": int(step),
        "train_config": asdict(cfg),
    }
    buf = io.BytesIO()
    torch.save(blob, buf)
    atomic_write_bytes(path, buf.getvalue())


def load_train_checkpoint(path) -> tuple[RectificationNetwork, dict, int, TrainConfig]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(blob, dict) or blob.get("kind") != "train":
        raise ValueError("%s is not a training checkpoint" % path)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint version %r" % blob.get("version"))
    cfg = ModelConfig(**blob["model_config"])
    flags = blob["flags"]
    model = RectificationNetwork(cfg, use_se=flags["use_se"], use_te=flags["use_te"],
                                 learnable_upsample=flags["learnable_upsample"])
    model.load_state_dict(blob["state"])
    return model, blob["optimizer"], blob["step"], TrainConfig(**blob["train_config"])


def train_loop(model: RectificationNetwork, train: list[TrainSample],
               cfg: TrainConfig, *, val: list[TrainSample] | None = None,
               start_step: int = 0, optimizer_state: dict | None = None,
               progress=None) -> tuple[RectificationNetwork, TrainLog]:
    """Optimize the model for cfg.max_steps steps of AdamW.

    Deterministic: step s always sees the same batch and the same jitter
    regardless of where the run started, so resuming from a step-s
    checkpoint reproduces the uninterrupted run exactly.
    """
    if not train:
        raise ValueError("training set is empty")
    if cfg.supervise_3d and train[0].coords3d is None:
        raise ValueError("supervise_3d set but samples carry no 3D maps")
    if cfg.supervise_text and train[0].text_mask is None:
        raise ValueError("supervise_text set but samples carry no textline masks")
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr,
                            weight_decay=cfg.weight_decay)
    if optimizer_state is not None:
        opt.load_state_dict(optimizer_state)
    log = TrainLog()
    t0 = time.monotonic()
    model.train()
    for step in range(start_step, cfg.max_steps):
        idxs = _batch_indices(cfg, step, len(train))
        batch = [train[i] for i in idxs]
        images = torch.stack([
            _model_input(_augmented_image(ts, cfg, step, int(i)), ts, cfg)
            for i, ts in zip(idxs, batch)])
        total, l3d, ltext, lflow = _step_losses(model, batch, images, cfg)
        value = total.item()
        if not math.isfinite(value):
            raise RuntimeError(
                "training diverged at step %d: total=%r l3d=%r ltext=%r lflow=%r"
                % (step, value, l3d.item(), ltext.item(), lflow.item()))
        opt.zero_grad()
        total.backward()
        opt.step()
        log.steps.append({"step": step, "total": value, "l3d": l3d.item(),
                          "ltext": ltext.item(), "lflow": lflow.item()})
        done = step + 1
        if val and cfg.val_every and (done % cfg.val_every == 0 or done == cfg.max_steps):
            metrics = validate(model, val, cfg)
            log.val.append({"step": done, **metrics})
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            os.makedirs(cfg.checkpoint_dir, exist_ok=True)
            save_train_checkpoint(
                os.path.join(cfg.checkpoint_dir, "ckpt_%06d.pt" % done),
                model, opt, done, cfg)
        if progress is not None:
            progress(step, value)
    log.wall_time = time.monotonic() - t0
    return model, log


# --------------------------------------------------------------- ablation

ABLATION_GRID = (
    {"name": "flow-only", "supervise_3d": False, "supervise_text": False},
    {"name": "flow+3d", "supervise_3d": True, "supervise_text": False},
    {"name": "flow+text", "supervise_3d": False, "supervise_text": True},
    {"name": "flow+3d+text", "supervise_3d": True, "supervise_text": True},
)


def _eval_ms_ssim(model: RectificationNetwork, val_samples: list[DistortedSample],
                  cfg: TrainConfig) -> float:
    """Mean MS-SSIM between model rectifications and the flat pages."""
    import warnings

    from .geometry import apply_flow
    from .metrics import ms_ssim, to_gray
    from .network import predict_flow

    scores = []
    for s in val_samples:
        img = s.img * s.mask[:, :, None] if cfg.use_preprocessing else s.img
        flow = predict_flow(img, model)
        rect = apply_flow(to_gray(s.img), flow)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # small images reduce the scale count
            scores.append(ms_ssim(rect, to_gray(s.flat)))
    return float(np.mean(scores))


def run_ablation_suite(train_samples: list[DistortedSample],
                       val_samples: list[DistortedSample],
                       model_cfg: ModelConfig, base_cfg: TrainConfig,
                       variants=ABLATION_GRID, progress=None) -> list[dict]:
    """Train one model per flag combination and report validation metrics.

    Rows carry the supervision flags plus MS-SSIM (higher better) and LD
    (lower better) on the validation set, in the shape of the usual
    supervision-ablation comparison tables.
    """
    train = prepare_dataset(train_samples, model_cfg)
    val = prepare_dataset(val_samples, model_cfg)
    rows = []
    for variant in variants:
        overrides = {k: v for k, v in variant.items() if k != "name"}
        cfg = replace(base_cfg, **overrides)
        model = build_model(model_cfg, cfg)
        model, log = train_loop(model, train, cfg, val=val, progress=progress)
        metrics = validate(model, val, cfg)
        rows.append({
            "name": variant.get("name", "run-%d" % len(rows)),
            "supervise_3d": cfg.supervise_3d,
            "supervise_text": cfg.supervise_text,
            "use_se": cfg.use_se,
            "use_te": cfg.use_te,
            "upsample": cfg.upsample,
            "use_preprocessing": cfg.use_preprocessing,
            "val_ld": metrics["ld"],
            "val_loss_flow": metrics["loss_flow"],
            "val_ms_ssim": _eval_ms_ssim(model, val_samples, cfg),
            "steps": cfg.max_steps,
            "seed": cfg.seed,
        })
    return rows


def format_ablation_table(rows: list[dict]) -> str:
    """Fixed-width comparison table with check marks per supervision."""
    header = "%-14s %-6s %-6s %10s %10s" % ("config", "3D", "text", "MS-SSIM", "LD")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append("%-14s %-6s %-6s %10.4f %10.3f" % (
            r["name"], "yes" if r["supervise_3d"] else "-",
            "yes" if r["supervise_text"] else "-",
            r["val_ms_ssim"], r["val_ld"]))
    return "\n".join(lines)
