"""Walk the textline auto-annotation pipeline stage by stage.

Lines are detected on the GT-rectified image where they are straight and
horizontal: adaptive thresholding finds ink, horizontal dilation merges
characters into runs, connected components become boxes, implausible boxes
are filtered, and the surviving boxes yield sampled centerlines. Each
centerline is then mapped through the ground-truth flow into the distorted
photo, where it lands on the curved line it came from.

Output: demos/out/annotation_stages.png
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from docgeo.annotate import (
    annotate_distorted,
    binarize_adaptive,
    boxes_to_centerlines,
    connected_components,
    dilate_horizontal,
    filter_boxes,
    point_to_polyline_distance,
)
from docgeo.geometry import apply_flow
from docgeo.metrics import to_gray
from docgeo.synthgen import make_sample

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    s = make_sample(12, height=256, width=256)
    rect = apply_flow(to_gray(s.img), s.flow)

    ink = binarize_adaptive(rect)
    merged = dilate_horizontal(ink)
    boxes = connected_components(merged)
    kept = filter_boxes(boxes, rect.shape)
    lines_rect = boxes_to_centerlines(kept)
    print("stages: %d components -> %d plausible boxes -> %d centerlines"
          % (len(boxes), len(kept), len(lines_rect)))

    detected = annotate_distorted(rect, s.flow)  # same lines, photo coordinates
    errs = [min(np.median(point_to_polyline_distance(d.points, gt.points))
                for gt in s.lines) for d in detected]
    print("detected %d lines vs %d generator lines; median distance %.2f px"
          % (len(detected), len(s.lines), float(np.median(errs))))

    fig, axes = plt.subplots(2, 3, figsize=(12, 7.5))
    stages = [(rect, "GT-rectified image"), (ink, "adaptive threshold"),
              (merged, "horizontal dilation")]
    for ax, (img, title) in zip(axes[0], stages):
        ax.imshow(img, cmap="gray")
        ax.set_title(title, fontsize=9)
        ax.axis("off")

    axes[1, 0].imshow(rect, cmap="gray")
    for b in kept:
        axes[1, 0].add_patch(plt.Rectangle((b.x0, b.y0), b.x1 - b.x0, b.y1 - b.y0,
                                           fill=False, color="tab:orange", lw=1))
    axes[1, 0].set_title("filtered boxes", fontsize=9)

    axes[1, 1].imshow(rect, cmap="gray")
    for ln in lines_rect:
        axes[1, 1].plot(ln.points[:, 0], ln.points[:, 1], lw=1.2)
    axes[1, 1].set_title("centerlines (rectified frame)", fontsize=9)

    axes[1, 2].imshow(s.img)
    for ln in detected:
        axes[1, 2].plot(ln.points[:, 0], ln.points[:, 1], lw=1.2, color="tab:red")
    for ln in s.lines:
        axes[1, 2].plot(ln.points[:, 0], ln.points[:, 1], lw=0.8, color="tab:green",
                        alpha=0.7)
    axes[1, 2].set_title("mapped to photo (red) vs generator (green)", fontsize=9)
    for ax in axes[1]:
        ax.axis("off")
    fig.tight_layout()
    path = os.path.join(OUT, "annotation_stages.png")
    fig.savefig(path, dpi=110)
    print("figure ->", path)


if __name__ == "__main__":
    main()
