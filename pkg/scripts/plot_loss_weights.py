#!/usr/bin/env python3
"""Plot the oscillation-attenuation weight gamma(n) and the warmup+cosine
learning-rate schedule."""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from medmatting.harness.schedule import lr_schedule
from medmatting.losses import OawsSchedule, oaws_gamma


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--out", type=Path, default=Path("loss_weights.png"))
    args = parser.parse_args()

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))

    epochs = np.arange(args.epochs)
    for phase in ("quadratic", "linear"):
        sched = OawsSchedule(phase=phase)
        ax1.plot(epochs, [oaws_gamma(int(n), sched) for n in epochs], label=f"phase={phase}")
    envelope = 0.5 * np.exp(-0.05 * epochs)
    ax1.plot(epochs, 0.5 + envelope, "k--", lw=0.8, label="envelope")
    ax1.plot(epochs, 0.5 - envelope, "k--", lw=0.8)
    ax1.set(xlabel="epoch", ylabel="gamma", title="OAWS segmentation weight")
    ax1.legend()

    total = args.epochs * 2
    steps = np.arange(total + 1)
    ax2.plot(steps, [lr_schedule(int(s), total, 5e-4, 2) for s in steps])
    ax2.set(xlabel="step", ylabel="lr", title="warmup + cosine annealing")

    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
