#!/usr/bin/env python3
"""Paired runs with the uncertainty map enabled vs zeroed, over several seeds.

Reports the final training-set SAD of each pair, the directional analogue of
the uncertainty-map ablation.
"""

import argparse
import time

from medmatting.harness.config import TrainConfig, with_overrides
from medmatting.harness.data import samples_from_memory
from medmatting.harness.evaluate import training_sad
from medmatting.harness.synth import synth_dataset
from medmatting.harness.train import train


def run(config, samples):
    result = train(config, samples)
    return training_sad(result.generator, result.matting, samples, config)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--strategy", choices=("none", "uws", "oaws"), default="none")
    args = parser.parse_args()

    base = TrainConfig(
        base_lr=2e-3,
        epochs=args.epochs,
        input_size=32,
        batch_size=32,
        depth=3,
        base_channels=8,
        latent_dim=4,
        unit_channels=(12, 12, 8),
        blocks_per_unit=2,
        n_samples=8,
        strategy=args.strategy,
        augment=False,
        threads=2,
    )
    wins = 0
    for seed in args.seeds:
        samples = samples_from_memory(synth_dataset(64, 32, seed=seed))
        start = time.time()
        sad_on = run(with_overrides(base, seed=seed, umap_enabled=True), samples)
        sad_off = run(with_overrides(base, seed=seed, umap_enabled=False), samples)
        verdict = "umap<=off" if sad_on <= sad_off else "umap>off"
        wins += sad_on <= sad_off
        print(
            f"seed={seed}: sad(umap on)={sad_on:.4f} sad(umap off)={sad_off:.4f} "
            f"[{verdict}] ({time.time() - start:.0f}s)"
        )
    print(f"uncertainty map wins on {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
