"""Score rectifications with the full metric suite.

Three rectifiers are compared on fresh validation samples: doing nothing
(the distorted photo itself), the toy model trained by demo 04, and the
ground-truth flow (the ceiling). MS-SSIM compares appearance against the
flat page; local distortion (LD) measures the mean displacement a dense
matcher recovers between the two, both at the standard evaluation area.
Character-level OCR metrics are reported when an OCR binary is available
(set DOCGEO_OCR_BIN) and skipped otherwise.

Run demo 04 first to get demos/out/toy_model.pt; without it the model row
is omitted.

Output: demos/out/eval_panel.png
"""

import os
import warnings

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from docgeo.geometry import apply_flow, identity_flow
from docgeo.metrics import dense_match, local_distortion, ms_ssim, resize_to_area, to_gray
from docgeo.network import load_model, predict_flow
from docgeo.synthgen import make_sample

OUT = os.path.join(os.path.dirname(__file__), "out")
CKPT = os.path.join(OUT, "toy_model.pt")


def score(rect, flat):
    a, b = resize_to_area(rect), resize_to_area(flat)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ms = ms_ssim(a, b)
        matches = dense_match(b, a)
    return ms, local_distortion(matches)


def main():
    os.makedirs(OUT, exist_ok=True)
    samples = [make_sample(7000 + s, height=96, width=96) for s in range(6)]

    model = None
    if os.path.exists(CKPT):
        model, step, _ = load_model(CKPT)
        print("loaded %s (step %d)" % (CKPT, step))
    else:
        print("no toy_model.pt found; run demo 04 to add the model row")

    rectifiers = {"distorted": lambda s: to_gray(s.img),
                  "gt-flow": lambda s: apply_flow(to_gray(s.img), s.flow)}
    if model is not None:
        rectifiers["toy-model"] = lambda s: apply_flow(
            to_gray(s.img), predict_flow(s.img * s.mask[:, :, None], model))

    results = {name: [] for name in rectifiers}
    for s in samples:
        flat = to_gray(s.flat)
        for name, fn in rectifiers.items():
            results[name].append(score(fn(s), flat))

    print()
    print("%-10s %10s %10s" % ("rectifier", "MS-SSIM", "LD"))
    print("-" * 32)
    for name, vals in results.items():
        ms = np.mean([v[0] for v in vals])
        ld = np.mean([v[1] for v in vals])
        print("%-10s %10.4f %10.3f" % (name, ms, ld))
    if not os.environ.get("DOCGEO_OCR_BIN"):
        print("\nOCR metrics skipped (no OCR binary configured; "
              "set DOCGEO_OCR_BIN to enable ED/CER)")

    s = samples[0]
    panels = [("flat", s.flat), ("distorted", s.img)]
    if model is not None:
        panels.append(("toy model", apply_flow(
            s.img, predict_flow(s.img * s.mask[:, :, None], model))))
    panels.append(("gt flow", apply_flow(s.img, s.flow)))
    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3.2))
    for ax, (title, img) in zip(axes, panels):
        ax.imshow(img, cmap="gray" if img.ndim == 2 else None)
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    path = os.path.join(OUT, "eval_panel.png")
    fig.savefig(path, dpi=110)
    print("figure ->", path)


if __name__ == "__main__":
    main()
