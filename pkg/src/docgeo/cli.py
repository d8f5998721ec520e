"""Command-line entry point.

One binary with subcommands covering the full pipeline:

* ``generate``  - synthesize a distorted-document dataset with ground truth
* ``annotate``  - re-detect textlines on a dataset and store them
* ``train-seg`` - train the background segmenter
* ``train``     - train the rectification model
* ``rectify``   - rectify images with a trained model
* ``eval``      - score rectifications against ground truth
* ``ablate``    - run the supervision ablation suite
* ``report``    - render plots + a markdown summary from eval reports

Every command writes a run manifest next to its primary output (sibling
file ``<out>.manifest.json``) so output trees themselves stay byte-identical
across reruns of the same seed. Errors print a single machine-parsable line
``docgeo: error [E_CODE] message`` and exit nonzero. Config files are flat
``key = value`` text; the README documents the keys per command.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__

E_CONFIG = "E_CONFIG"
E_IO = "E_IO"
E_FORMAT = "E_FORMAT"
E_DATA = "E_DATA"
E_TRAIN = "E_TRAIN"
E_INTERNAL = "E_INTERNAL"

IMAGE_EXTS = (".png", ".jpg", ".jpeg")


class CliError(Exception):
    """Carries a machine-parsable error code plus a one-line message."""

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = " ".join(str(message).split())
        super().__init__(self.message)


# ----------------------------------------------------------------- config

def parse_config(path) -> dict:
    """Flat key = value file; # and ; start comments; no sections."""
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as e:
        raise CliError(E_IO, "cannot read config %s: %s" % (path, e))
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(E_CONFIG, "%s line %d: expected key = value" % (path, ln))
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise CliError(E_CONFIG, "%s line %d: empty key" % (path, ln))
        out[key] = value.strip()
    return out


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(key: str, raw: str, kind):
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        return kind(raw)
    except (ValueError, KeyError):
        raise CliError(E_CONFIG, "config key %s: cannot parse %r as %s"
                       % (key, raw, kind.__name__))


def cfg_get(cfg: dict, key: str, default, kind=None):
    if key not in cfg:
        return default
    return _coerce(key, cfg[key], kind or type(default))


def parse_overrides(text: str) -> dict:
    """Comma-separated flag overrides: 'supervise_3d=off,upsample=bilinear'."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise CliError(E_CONFIG, "ablation override %r is not key=value" % part)
        key, value = (s.strip() for s in part.split("=", 1))
        out[key] = value
    return out


# --------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    """Provenance record written alongside every output."""

    command: str
    config: dict
    seed: int
    inputs: list
    outputs: list
    started: str
    finished: str
    extra: dict

    def to_dict(self) -> dict:
        cfg_blob = json.dumps(self.config, sort_keys=True).encode()
        return {
            "command": self.command,
            "config": self.config,
            "config_hash": hashlib.sha256(cfg_blob).hexdigest(),
            "seed": self.seed,
            "tool_version": __version__,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started": self.started,
            "finished": self.finished,
            **({"extra": self.extra} if self.extra else {}),
        }


def _utc(ts: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts))


def write_manifest(out_path, command: str, config: dict, seed: int,
                   inputs: list, started: float, extra: dict | None = None) -> str:
    """Write <out>.manifest.json as a sibling of the output path."""
    from .formats import write_json

    base = str(out_path).rstrip("/\\")
    path = base + ".manifest.json"
    manifest = RunManifest(command=command, config=config, seed=seed,
                           inputs=[str(p) for p in inputs], outputs=[base],
                           started=_utc(started), finished=_utc(time.time()),
                           extra=extra or {})
    write_json(path, manifest.to_dict())
    return path


# ----------------------------------------------------------------- helpers

def _load_rgb(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as e:
        raise CliError(E_IO, "cannot read image %s: %s" % (path, e))


def _require(path, what: str):
    if not os.path.exists(str(path)):
        raise CliError(E_IO, "%s not found: %s" % (what, path))
    return str(path)


def _sample_dirs(root) -> list:
    _require(root, "dataset directory")
    dirs = sorted(d for d in os.listdir(root) if d.startswith("sample_"))
    if not dirs:
        raise CliError(E_DATA, "no sample_* directories under %s" % root)
    return [os.path.join(root, d) for d in dirs]


def _read_samples(root) -> list:
    from .formats import FormatError
    from .synthgen import read_sample

    try:
        return [read_sample(d) for d in _sample_dirs(root)]
    except FormatError as e:
        raise CliError(E_FORMAT, str(e))


def _load_rectifier(path):
    from .network import load_model

    _require(path, "model checkpoint")
    try:
        return load_model(path)
    except Exception as e:  # torch surfaces many exception types for bad files
        raise CliError(E_FORMAT, "bad model checkpoint %s: %s" % (path, e))


def _load_segmenter_opt(path):
    from .segmenter import load_segmenter

    if path is None:
        return None
    _require(path, "segmenter checkpoint")
    try:
        return load_segmenter(path)
    except Exception as e:
        raise CliError(E_FORMAT, "bad segmenter checkpoint %s: %s" % (path, e))


def _preprocessed(img: np.ndarray, seg, tau: float | None, no_preprocess: bool) -> np.ndarray:
    """Model input: background removed when a segmenter is supplied."""
    from .segmenter import remove_background, segment_confidence

    if no_preprocess or seg is None:
        return img
    conf = segment_confidence(img, seg)
    out, _ = remove_background(img, conf, tau if tau is not None else seg.tau)
    return out


def _model_config(cfg: dict, toy: bool):
    from .network import ModelConfig

    if toy:
        return ModelConfig.toy()
    defaults = ModelConfig()
    kwargs = {}
    for name in ("height", "width", "channels", "attn_width", "heads",
                 "enc_layers", "fusion_layers", "text_channels"):
        kwargs[name] = cfg_get(cfg, "model_" + name, getattr(defaults, name))
    for name in ("alpha", "beta"):
        kwargs[name] = cfg_get(cfg, "model_" + name, getattr(defaults, name))
    try:
        return ModelConfig(**kwargs)
    except ValueError as e:
        raise CliError(E_CONFIG, str(e))


def _train_config(cfg: dict, args, overrides: dict | None = None,
                  default_ckpt_dir=None):
    from .train import TrainConfig

    base = TrainConfig()
    kwargs = {"seed": args.seed}
    for name in ("batch", "max_steps", "val_every", "checkpoint_every"):
        kwargs[name] = cfg_get(cfg, name, getattr(base, name))
    if kwargs["checkpoint_every"]:
        kwargs["checkpoint_dir"] = cfg_get(cfg, "checkpoint_dir",
                                           default_ckpt_dir and str(default_ckpt_dir), str)
    for name in ("lr", "weight_decay", "jitter_hue", "jitter_sat", "jitter_val"):
        kwargs[name] = cfg_get(cfg, name, getattr(base, name))
    for name in ("use_se", "use_te", "supervise_3d", "supervise_text",
                 "use_preprocessing"):
        kwargs[name] = cfg_get(cfg, name, getattr(base, name))
    kwargs["upsample"] = cfg_get(cfg, "upsample", base.upsample, str)
    if getattr(args, "no_preprocess", False):
        kwargs["use_preprocessing"] = False
    for key, raw in (overrides or {}).items():
        if key not in kwargs:
            raise CliError(E_CONFIG, "unknown ablation flag %r" % key)
        kind = type(getattr(base, key))
        kwargs[key] = _coerce(key, raw, kind)
    try:
        return TrainConfig(**kwargs)
    except ValueError as e:
        raise CliError(E_CONFIG, str(e))


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    from .formats import read_json
    from .synthgen import DEFAULT_MIX, generate_dataset

    started = time.time()
    cfg = parse_config(args.config) if args.config else {}
    count = cfg_get(cfg, "count", 10)
    height = cfg_get(cfg, "height", 256)
    width = cfg_get(cfg, "width", 256)
    mix_raw = cfg_get(cfg, "mix", None, str)
    if mix_raw is not None:
        try:
            mix = tuple(float(v) for v in mix_raw.split(","))
        except ValueError:
            raise CliError(E_CONFIG, "mix must be comma-separated floats")
    else:
        mix = DEFAULT_MIX
    if count < 0:
        raise CliError(E_CONFIG, "count must be >= 0")
    try:
        paths = generate_dataset(args.out, count, seed=args.seed,
                                 height=height, width=width, mix=mix)
    except (ValueError, OSError) as e:
        raise CliError(E_DATA, "generation failed: %s" % e)
    kinds: dict = {}
    for p in paths:
        k = read_json(os.path.join(p, "meta.json"))["kind"]
        kinds[k] = kinds.get(k, 0) + 1
    write_manifest(args.out, "generate",
                   {"count": count, "height": height, "width": width,
                    "mix": list(mix)},
                   args.seed, [], started, extra={"kinds": kinds})
    print("generated %d samples in %s" % (count, args.out))
    return 0


# ---------------------------------------------------------------- annotate

def cmd_annotate(args) -> int:
    from .annotate import annotate_distorted, rasterize_lines
    from .formats import save_mask, write_textlines
    from .geometry import apply_flow
    from .metrics import to_gray
    from .synthgen import read_sample

    started = time.time()
    dirs = _sample_dirs(args.data)
    total = 0
    for d in dirs:
        s = read_sample(d)
        rectified = apply_flow(to_gray(s.img), s.flow)
        lines = annotate_distorted(rectified, s.flow)
        write_textlines(os.path.join(d, "lines.jsonl"), lines)
        save_mask(os.path.join(d, "textmask.png"),
                  rasterize_lines(lines, s.mask.shape) > 0.5)
        total += len(lines)
    write_manifest(args.data, "annotate", {}, args.seed, [args.data], started,
                   extra={"samples": len(dirs), "lines": total})
    print("annotated %d samples (%d lines)" % (len(dirs), total))
    return 0


# --------------------------------------------------------------- train-seg

def cmd_train_seg(args) -> int:
    from .segmenter import save_segmenter, train_segmenter

    started = time.time()
    cfg = parse_config(args.config) if args.config else {}
    steps = cfg_get(cfg, "steps", 300)
    batch = cfg_get(cfg, "batch", 4)
    lr = cfg_get(cfg, "lr", 1e-3)
    base = cfg_get(cfg, "base", 16)
    samples = _read_samples(args.data)
    pairs = [(s.img, s.mask.astype(np.float64)) for s in samples]
    try:
        params, losses = train_segmenter(pairs, steps=steps, batch=batch, lr=lr,
                                         seed=args.seed, base=base, tau=args.tau)
    except (ValueError, RuntimeError) as e:
        raise CliError(E_TRAIN, "segmenter training failed: %s" % e)
    save_segmenter(args.out, params)
    write_manifest(args.out, "train-seg",
                   {"steps": steps, "batch": batch, "lr": lr, "base": base,
                    "tau": args.tau},
                   args.seed, [args.data], started,
                   extra={"final_loss": losses[-1] if losses else None})
    print("segmenter saved to %s (final loss %.4f)" % (args.out, losses[-1]))
    return 0


# ------------------------------------------------------------------- train

def cmd_train(args) -> int:
    import torch

    from .formats import write_json
    from .network import save_model
    from .train import build_model, prepare_dataset, train_loop

    started = time.time()
    cfg = parse_config(args.config) if args.config else {}
    overrides = parse_overrides(args.ablate) if args.ablate else {}
    model_cfg = _model_config(cfg, args.toy)
    val_fraction = cfg_get(cfg, "val_fraction", 0.1)
    if not 0.0 <= val_fraction < 1.0:
        raise CliError(E_CONFIG, "val_fraction must lie in [0, 1)")
    samples = _read_samples(args.data)
    n_val = int(round(len(samples) * val_fraction)) if len(samples) > 1 else 0
    n_val = min(n_val, len(samples) - 1)
    try:
        train_data = prepare_dataset(samples[:len(samples) - n_val], model_cfg)
        val_data = prepare_dataset(samples[len(samples) - n_val:], model_cfg) if n_val else None
    except ValueError as e:
        raise CliError(E_DATA, str(e))
    os.makedirs(args.out, exist_ok=True)
    train_cfg = _train_config(cfg, args, overrides, default_ckpt_dir=args.out)
    model = build_model(model_cfg, train_cfg)
    try:
        model, log = train_loop(model, train_data, train_cfg, val=val_data,
                                progress=_progress_printer(train_cfg.max_steps))
    except RuntimeError as e:
        raise CliError(E_TRAIN, str(e))
    save_model(os.path.join(args.out, "model.pt"), model, step=train_cfg.max_steps)
    log.to_csv(os.path.join(args.out, "log.csv"))
    summary = {
        "steps": train_cfg.max_steps,
        "final": log.steps[-1] if log.steps else None,
        "val": log.val,
        "wall_time_s": round(log.wall_time, 3),
        "torch_threads": torch.get_num_threads(),
    }
    write_json(os.path.join(args.out, "log.json"), summary)
    write_manifest(args.out, "train",
                   {**cfg, **({"ablate": args.ablate} if args.ablate else {}),
                    "toy": args.toy},
                   args.seed, [args.data], started,
                   extra={"final_loss": log.steps[-1]["total"] if log.steps else None})
    print("model saved to %s" % os.path.join(args.out, "model.pt"))
    if log.val:
        last = log.val[-1]
        print("final val: loss_flow %.4f  ld %.3f" % (last["loss_flow"], last["ld"]))
    return 0


def _progress_printer(total: int):
    stride = max(1, total // 20)

    def cb(step, value):
        if (step + 1) % stride == 0 or step + 1 == total:
            print("step %d/%d loss %.4f" % (step + 1, total, value), flush=True)
    return cb


# ----------------------------------------------------------------- rectify

def cmd_rectify(args) -> int:
    from .formats import save_image, write_warp_field
    from .geometry import apply_flow
    from .network import predict_flow

    started = time.time()
    model, _, _ = _load_rectifier(args.checkpoint)
    seg = _load_segmenter_opt(args.seg)
    src = _require(args.input, "input path")
    if os.path.isdir(src):
        names = sorted(n for n in os.listdir(src)
                       if n.lower().endswith(IMAGE_EXTS))
        if not names:
            raise CliError(E_DATA, "no images in %s" % src)
        paths = [os.path.join(src, n) for n in names]
    else:
        paths = [src]
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for path in paths:
        img = _load_rgb(path)
        model_in = _preprocessed(img, seg, args.tau, args.no_preprocess)
        flow = predict_flow(model_in, model)
        rect = apply_flow(img, flow)
        stem = os.path.splitext(os.path.basename(path))[0]
        out_img = os.path.join(args.out, stem + "_rect.png")
        save_image(out_img, rect)
        outputs.append(out_img)
        if args.save_flow:
            write_warp_field(os.path.join(args.out, stem + "_flow.dgwf"), flow)
    write_manifest(args.out, "rectify",
                   {"no_preprocess": args.no_preprocess, "save_flow": args.save_flow},
                   args.seed, [src, str(args.checkpoint)], started,
                   extra={"images": len(outputs)})
    print("rectified %d image(s) into %s" % (len(outputs), args.out))
    return 0


# -------------------------------------------------------------------- eval

def _ocr_metrics(rect: np.ndarray, flat: np.ndarray, tmp_dir: str):
    """(edit distance, CER, reason) via the external OCR binary, if present."""
    from .formats import save_image
    from .metrics import OCRFailed, OCRUnavailable, cer, edit_distance, normalize_text, run_ocr

    rect_path = os.path.join(tmp_dir, "ocr_rect.png")
    flat_path = os.path.join(tmp_dir, "ocr_flat.png")
    save_image(rect_path, np.clip(rect, 0, 1))
    save_image(flat_path, np.clip(flat, 0, 1))
    try:
        ref = normalize_text(run_ocr(flat_path))
        hyp = normalize_text(run_ocr(rect_path))
    except (OCRUnavailable, OCRFailed) as e:
        return None, None, str(e)
    counts = edit_distance(ref, hyp)
    return counts.distance, (cer(ref, hyp) if ref else None), None


def cmd_eval(args) -> int:
    import tempfile
    import warnings

    from .formats import write_json
    from .geometry import apply_flow
    from .metrics import dense_match, local_distortion, ms_ssim, resize_to_area, to_gray
    from .network import predict_flow

    started = time.time()
    model, _, _ = _load_rectifier(args.checkpoint)
    seg = _load_segmenter_opt(args.seg)
    samples = _read_samples(args.data)
    dirs = _sample_dirs(args.data)
    rows = []
    ocr_reason = None
    with tempfile.TemporaryDirectory() as tmp:
        for d, s in zip(dirs, samples):
            model_in = _preprocessed(s.img, seg, args.tau, args.no_preprocess)
            flow = predict_flow(model_in, model)
            rect = apply_flow(to_gray(s.img), flow)
            flat = to_gray(s.flat)
            rect_std = resize_to_area(rect)
            flat_std = resize_to_area(flat)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ms = ms_ssim(rect_std, flat_std)
                matches = dense_match(flat_std, rect_std)
            ld = local_distortion(matches)
            ed, c, reason = _ocr_metrics(rect, flat, tmp)
            if reason:
                ocr_reason = reason
            rows.append({"name": os.path.basename(d), "ms_ssim": round(ms, 6),
                         "ld": round(ld, 4), "ed": ed, "cer": c})
    def _mean(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return round(float(np.mean(vals)), 6) if vals else None

    report = {
        "images": rows,
        "mean": {k: _mean(k) for k in ("ms_ssim", "ld", "ed", "cer")},
        "config": {"checkpoint": str(args.checkpoint), "dataset": str(args.data),
                   "no_preprocess": args.no_preprocess,
                   "samples": len(rows)},
    }
    if ocr_reason:
        report["ocr_skipped"] = ocr_reason
    write_json(args.out, report)
    if args.csv:
        lines = ["name,ms_ssim,ld,ed,cer"]
        for r in rows:
            lines.append("%s,%s,%s,%s,%s" % (
                r["name"], r["ms_ssim"], r["ld"],
                "" if r["ed"] is None else r["ed"],
                "" if r["cer"] is None else r["cer"]))
        from .formats import atomic_write_text

        atomic_write_text(os.path.splitext(args.out)[0] + ".csv",
                          "\n".join(lines) + "\n")
    write_manifest(args.out, "eval", {"no_preprocess": args.no_preprocess},
                   args.seed, [args.data, str(args.checkpoint)], started,
                   extra={"samples": len(rows)})
    mean = report["mean"]
    print("eval: %d samples  ms_ssim %.4f  ld %.3f" % (
        len(rows), mean["ms_ssim"], mean["ld"]))
    return 0


# ------------------------------------------------------------------ ablate

def cmd_ablate(args) -> int:
    from .formats import atomic_write_text, write_json
    from .train import ABLATION_GRID, format_ablation_table, run_ablation_suite

    started = time.time()
    cfg = parse_config(args.config) if args.config else {}
    model_cfg = _model_config(cfg, args.toy)
    seeds_raw = cfg_get(cfg, "seeds", str(args.seed), str)
    try:
        seeds = [int(v) for v in seeds_raw.split(",")]
    except ValueError:
        raise CliError(E_CONFIG, "seeds must be comma-separated integers")
    names_raw = cfg_get(cfg, "variants", "flow-only,flow+3d+text", str)
    by_name = {v["name"]: v for v in ABLATION_GRID}
    try:
        variants = [by_name[n.strip()] for n in names_raw.split(",")]
    except KeyError as e:
        raise CliError(E_CONFIG, "unknown variant %s (have: %s)"
                       % (e, ", ".join(sorted(by_name))))
    val_fraction = cfg_get(cfg, "val_fraction", 0.2)
    samples = _read_samples(args.data)
    n_val = max(1, int(round(len(samples) * val_fraction)))
    if len(samples) < 2:
        raise CliError(E_DATA, "need at least 2 samples to split train/val")
    train_s = samples[:len(samples) - n_val]
    val_s = samples[len(samples) - n_val:]
    rows = []
    for seed in seeds:
        ns = argparse.Namespace(seed=seed, no_preprocess=getattr(args, "no_preprocess", False))
        base_cfg = _train_config(cfg, ns)
        try:
            for row in run_ablation_suite(train_s, val_s, model_cfg, base_cfg,
                                          variants=variants):
                rows.append(row)
        except (ValueError, RuntimeError) as e:
            raise CliError(E_TRAIN, "ablation run failed: %s" % e)
    summary = {}
    for name in (v["name"] for v in variants):
        sub = [r for r in rows if r["name"] == name]
        summary[name] = {
            "mean_ld": round(float(np.mean([r["val_ld"] for r in sub])), 4),
            "mean_ms_ssim": round(float(np.mean([r["val_ms_ssim"] for r in sub])), 6),
            "runs": len(sub),
        }
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "ablation.json"),
               {"rows": rows, "summary": summary, "seeds": seeds})
    table = format_ablation_table(rows)
    atomic_write_text(os.path.join(args.out, "ablation.txt"), table + "\n")
    write_manifest(args.out, "ablate", {**cfg, "toy": args.toy}, args.seed,
                   [args.data], started, extra={"summary": summary})
    print(table)
    return 0


# ------------------------------------------------------------------ report

def _load_report(path) -> dict:
    from .formats import FormatError, read_json

    try:
        blob = read_json(_require(path, "report"))
    except FormatError as e:
        raise CliError(E_FORMAT, str(e))
    if not isinstance(blob, dict) or "images" not in blob or "mean" not in blob:
        raise CliError(E_FORMAT, "%s is not an eval report (needs images/mean)" % path)
    return blob


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    started = time.time()
    reports = [_load_report(p) for p in args.reports]
    if len(reports) > 2:
        raise CliError(E_CONFIG, "report takes one or two report files")
    os.makedirs(args.out, exist_ok=True)
    charts = []
    labels = [os.path.splitext(os.path.basename(p))[0] for p in args.reports]
    for metric in ("ms_ssim", "ld"):
        fig, ax = plt.subplots(figsize=(7, 3.2), dpi=110)
        width = 0.8 / len(reports)
        plotted = False
        for k, (rep, label) in enumerate(zip(reports, labels)):
            names = [r["name"] for r in rep["images"]]
            vals = [r[metric] for r in rep["images"]]
            if not names:
                continue
            xs = np.arange(len(names)) + k * width
            ax.bar(xs, vals, width=width, label=label)
            ax.set_xticks(np.arange(len(names)) + width * (len(reports) - 1) / 2)
            ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
            plotted = True
        ax.set_ylabel(metric)
        if len(reports) > 1 and plotted:
            ax.legend(fontsize=7)
        fig.tight_layout()
        out_png = os.path.join(args.out, metric + ".png")
        fig.savefig(out_png, metadata={"Software": "docgeo"})
        plt.close(fig)
        charts.append(out_png)

    lines = ["# Evaluation report", ""]
    for rep, label in zip(reports, labels):
        lines += ["## %s" % label, "",
                  "%d image(s)" % len(rep["images"]), "",
                  "| metric | mean |", "| --- | --- |"]
        for key in ("ms_ssim", "ld", "ed", "cer"):
            value = rep["mean"].get(key)
            lines.append("| %s | %s |" % (key, "n/a" if value is None else value))
        if rep.get("ocr_skipped"):
            lines.append("")
            lines.append("OCR metrics skipped: %s" % rep["ocr_skipped"])
        lines.append("")
    if len(reports) == 2:
        lines += ["## Delta (%s - %s)" % (labels[1], labels[0]), "",
                  "| metric | delta |", "| --- | --- |"]
        for key in ("ms_ssim", "ld", "ed", "cer"):
            a = reports[0]["mean"].get(key)
            b = reports[1]["mean"].get(key)
            if a is None or b is None:
                lines.append("| %s | n/a |" % key)
            else:
                lines.append("| %s | %+.6g |" % (key, b - a))
        lines.append("")
    from .formats import atomic_write_text

    md_path = os.path.join(args.out, "summary.md")
    atomic_write_text(md_path, "\n".join(lines))
    write_manifest(args.out, "report", {}, args.seed,
                   [str(p) for p in args.reports], started)
    print("wrote %s and %d chart(s)" % (md_path, len(charts)))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docgeo",
        description="Synthesize, train on, rectify, and score distorted document images.")
    parser.add_argument("--version", action="version", version="docgeo " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None, out_required=False):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=0, help="root random seed")
        if out_required:
            p.add_argument("--out", required=True, help="output path")
        else:
            p.add_argument("--out", default=out_default, help="output path")

    p = sub.add_parser("generate", help="synthesize a ground-truthed dataset")
    common(p, out_required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("annotate", help="re-detect textlines for a dataset")
    p.add_argument("data", help="dataset directory")
    common(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train-seg", help="train the background segmenter")
    p.add_argument("data", help="dataset directory")
    p.add_argument("--tau", type=float, default=0.5,
                   help="confidence binarization threshold")
    common(p, out_default="segmenter.pt")
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("train", help="train the rectification model")
    p.add_argument("data", help="dataset directory")
    p.add_argument("--toy", action="store_true", help="use the small CPU preset")
    p.add_argument("--ablate", help="flag overrides, e.g. supervise_3d=off")
    p.add_argument("--no-preprocess", action="store_true",
                   help="train on raw images (no background removal)")
    common(p, out_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rectify", help="rectify images with a trained model")
    p.add_argument("input", help="image file or directory of images")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--seg", help="segmenter checkpoint for preprocessing")
    p.add_argument("--tau", type=float, default=None,
                   help="override the segmenter threshold")
    p.add_argument("--no-preprocess", action="store_true",
                   help="skip background removal")
    p.add_argument("--save-flow", action="store_true",
                   help="also write predicted .dgwf flows")
    common(p, out_default="rectified")
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("eval", help="score a model on a ground-truthed dataset")
    p.add_argument("data", help="dataset directory")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--seg", help="segmenter checkpoint for preprocessing")
    p.add_argument("--tau", type=float, default=None,
                   help="override the segmenter threshold")
    p.add_argument("--no-preprocess", action="store_true",
                   help="skip background removal")
    p.add_argument("--csv", action="store_true", help="also write a CSV")
    common(p, out_default="report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the supervision ablation suite")
    p.add_argument("data", help="dataset directory")
    p.add_argument("--toy", action="store_true", help="use the small CPU preset")
    p.add_argument("--no-preprocess", action="store_true",
                   help="train on raw images (no background removal)")
    common(p, out_default="ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="plots + markdown summary from eval reports")
    p.add_argument("reports", nargs="+", help="one or two eval report.json files")
    common(p, out_default="report_out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except CliError as e:
        print("docgeo: error [%s] %s" % (e.code, e.message), file=sys.stderr)
        return 1
    except Exception as e:  # keep the contract: one line, nonzero exit
        print("docgeo: error [%s] %s: %s"
              % (E_INTERNAL, type(e).__name__, " ".join(str(e).split())),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
