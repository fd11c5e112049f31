import time
import numpy as np
import jointfilter.networks as nets
from jointfilter.networks import FdknConfig
from jointfilter.train import train, TrainConfig
from jointfilter.synthetic import make_synthetic_dataset, make_training_pair
from jointfilter.evaluate import benchmark, bicubic_baseline

scenes = make_synthetic_dataset(40, 96, seed=100)
def pairs_of(sc, seed0):
    return [make_training_pair(r, d, 'bicubic', 4, 0.0, seed=seed0+i, name=f'p{i}') for i, (r, d) in enumerate(sc)]
train_pairs = pairs_of(scenes[:32], 0)
test_pairs = pairs_of(scenes[32:], 1000)
base = bicubic_baseline(test_pairs)
print('baseline %.4f' % base, flush=True)

# trajectory probe: eval at checkpoints via staged training
for iters in (500, 1000, 1500, 2000):
    res = train(FdknConfig(), train_pairs, TrainConfig(iterations=iters, lr=5e-4, lr_decay_every=10**9, seed=2))
    rep = benchmark(res.model, test_pairs)
    print('traj seed2 iters=%d: rmse %.4f improvement %.1f%%' % (iters, rep.mean_rmse, 100*(1-rep.mean_rmse/base)), flush=True)

# init-scale variants
for ws, osc in ((0.3, 0.1), (0.1, 0.3), (0.3, 0.3)):
    nets.WEIGHT_HEAD_INIT_SCALE = ws
    nets.OFFSET_HEAD_INIT_SCALE = osc
    res = train(FdknConfig(), train_pairs, TrainConfig(iterations=2000, lr=5e-4, lr_decay_every=10**9, seed=2))
    rep = benchmark(res.model, test_pairs)
    print('init ws=%.1f osc=%.1f seed2: rmse %.4f improvement %.1f%%' % (ws, osc, rep.mean_rmse, 100*(1-rep.mean_rmse/base)), flush=True)
