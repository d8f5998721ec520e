"""Train a doll-house rectification model on the CPU in about a minute.

The model predicts a coarse backward-warp flow from fused shape and
textline token streams, upsamples it convexly, and is supervised by the
flow itself plus two auxiliary targets: the 3D surface map and the textline
confidence map. This run is tiny (96 px, 200 steps, 80 samples) yet the
validation local distortion already drops well below the distorted
baseline. The checkpoint feeds demo 05.

Output: demos/out/toy_model.pt, demos/out/training_curve.png
"""

import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch

from docgeo.network import ModelConfig, save_model
from docgeo.synthgen import make_sample
from docgeo.train import TrainConfig, baseline_ld, build_model, prepare_dataset, train_loop, validate

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    torch.set_num_threads(1)

    mcfg = ModelConfig(height=96, width=96, channels=32, attn_width=64,
                       heads=4, enc_layers=2, fusion_layers=2)
    tcfg = TrainConfig(batch=4, max_steps=200, val_every=50, seed=0)

    t0 = time.monotonic()
    train = prepare_dataset([make_sample(s, height=96, width=96)
                             for s in range(80)], mcfg)
    val = prepare_dataset([make_sample(9000 + s, height=96, width=96)
                           for s in range(12)], mcfg)
    print("prepared 80 train / 12 val samples in %.1fs" % (time.monotonic() - t0))

    model = build_model(mcfg, tcfg)
    init = validate(model, val, tcfg)
    base = baseline_ld(val)
    print("before training: val loss_flow %.3f, val LD %.3f (distorted baseline %.3f)"
          % (init["loss_flow"], init["ld"], base))

    model, log = train_loop(model, train, tcfg, val=val)
    final = log.val[-1]
    print("after %d steps (%.0fs): val loss_flow %.3f, val LD %.3f (%.2fx baseline)"
          % (tcfg.max_steps, log.wall_time, final["loss_flow"], final["ld"],
             final["ld"] / base))

    ckpt = os.path.join(OUT, "toy_model.pt")
    save_model(ckpt, model, step=tcfg.max_steps)
    print("checkpoint ->", ckpt)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
    ax1.plot([r["step"] for r in log.steps], [r["total"] for r in log.steps],
             lw=0.8, label="train total")
    ax1.plot([r["step"] for r in log.steps], [r["lflow"] for r in log.steps],
             lw=0.8, label="train flow")
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    steps = [0] + [r["step"] for r in log.val]
    ax2.plot(steps, [init["ld"]] + [r["ld"] for r in log.val], marker="o",
             label="val LD")
    ax2.axhline(base, color="gray", ls="--", lw=1, label="distorted baseline")
    ax2.set_xlabel("step")
    ax2.set_ylabel("local distortion (px)")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    curve = os.path.join(OUT, "training_curve.png")
    fig.savefig(curve, dpi=110)
    print("curve ->", curve)


if __name__ == "__main__":
    main()
