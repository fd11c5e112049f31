"""Desk-scale protocol validation: margins for acceptance criteria 6, 7, 9."""

import sys
import time

from jointfilter.evaluate import benchmark, bicubic_baseline
from jointfilter.networks import DknConfig, FdknConfig
from jointfilter.synthetic import make_synthetic_dataset, make_training_pair
from jointfilter.train import TrainConfig, train

DESK_LR = 3e-4
ITERS = 2000


def pairs_of(scenes, noise, seed0):
    return [
        make_training_pair(r, d, "bicubic", 4, noise, seed=seed0 + i, name=f"p{i}")
        for i, (r, d) in enumerate(scenes)
    ]


def main():
    t_start = time.time()
    scenes = make_synthetic_dataset(40, 96, seed=100)
    train_clean = pairs_of(scenes[:32], 0.0, 0)
    test_clean = pairs_of(scenes[32:], 0.0, 1000)
    train_noisy = pairs_of(scenes[:32], 0.005, 2000)
    test_noisy = pairs_of(scenes[32:], 0.005, 3000)
    base = bicubic_baseline(test_clean)
    print(f"baseline clean RMSE {base:.4f}", flush=True)

    for seed in (1, 2, 3):
        cfg = TrainConfig(iterations=ITERS, lr=DESK_LR, seed=seed)
        t0 = time.time()
        dkn = train(DknConfig(), train_clean, cfg).model
        r_dkn = benchmark(dkn, test_clean).mean_rmse
        r_dkn_on_noisy = benchmark(dkn, test_noisy).mean_rmse
        t1 = time.time()
        fdkn = train(FdknConfig(), train_clean, cfg).model
        r_fdkn = benchmark(fdkn, test_clean).mean_rmse
        t2 = time.time()
        frozen = train(DknConfig(learn_offsets=False), train_clean, cfg).model
        r_frozen = benchmark(frozen, test_clean).mean_rmse
        t3 = time.time()
        noisy = train(DknConfig(), train_noisy, cfg).model
        r_noisy = benchmark(noisy, test_noisy).mean_rmse
        t4 = time.time()
        print(
            f"seed {seed}: dkn {r_dkn:.4f} ({100 * (1 - r_dkn / base):.1f}%) "
            f"fdkn {r_fdkn:.4f} ({100 * (1 - r_fdkn / base):.1f}%) "
            f"frozen {r_frozen:.4f} (offsets win: {r_dkn < r_frozen}) "
            f"noisy-trained {r_noisy:.4f} vs clean-on-noisy {r_dkn_on_noisy:.4f} "
            f"(noise win: {r_noisy < r_dkn_on_noisy}) "
            f"times {t1 - t0:.0f}/{t2 - t1:.0f}/{t3 - t2:.0f}/{t4 - t3:.0f}s",
            flush=True,
        )
    print(f"total {time.time() - t_start:.0f}s")


if __name__ == "__main__":
    sys.exit(main())
