"""Generate a small synthetic dataset and inspect what lands on disk.

Every sample is derived from one integer seed: a flat synthetic page, a
background, and a surface deformation (curl, fold, crumple, or flat). The
writer stores the distorted photo, the flat original, the page mask, the
dense backward-warp flow, the 3D surface coordinates, and the textline
records. Running this twice produces byte-identical trees.

Output: demos/out/dataset/sample_* plus a contact sheet PNG.
"""

import os
from collections import Counter

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from docgeo.synthgen import generate_dataset, read_sample

OUT = os.path.join(os.path.dirname(__file__), "out")
DATA = os.path.join(OUT, "dataset")


def main():
    os.makedirs(OUT, exist_ok=True)
    paths = generate_dataset(DATA, count=8, seed=42, height=192, width=192)
    samples = [read_sample(p) for p in paths]

    kinds = Counter(s.params.kind for s in samples)
    print("generated %d samples:" % len(samples))
    for kind, n in sorted(kinds.items()):
        print("  %-8s %d" % (kind, n))
    print("files per sample:", sorted(os.listdir(paths[0])))

    fig, axes = plt.subplots(3, len(samples), figsize=(2 * len(samples), 6))
    for col, s in enumerate(samples):
        axes[0, col].imshow(s.img)
        axes[0, col].set_title("%s a=%.2f" % (s.params.kind, s.params.amplitude),
                               fontsize=8)
        axes[1, col].imshow(s.flat, cmap="gray")
        axes[2, col].imshow(s.mask, cmap="gray")
        for ax in axes[:, col]:
            ax.axis("off")
    fig.suptitle("distorted photo / flat page / page mask")
    fig.tight_layout()
    sheet = os.path.join(OUT, "dataset_contact_sheet.png")
    fig.savefig(sheet, dpi=110)
    print("contact sheet ->", sheet)


if __name__ == "__main__":
    main()
