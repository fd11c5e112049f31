import time
from jointfilter.networks import DknConfig, FdknConfig
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

def run(arch_cfg, lr, decay, label, seed=1):
    t0 = time.time()
    res = train(arch_cfg, train_pairs, TrainConfig(iterations=2000, lr=lr, lr_decay_every=decay, seed=seed))
    rep = benchmark(res.model, test_pairs)
    print('%s lr=%g decay=%d seed=%d: rmse %.4f improvement %.1f%% (%.0fs)' % (label, lr, decay, seed, rep.mean_rmse, 100*(1-rep.mean_rmse/base), time.time()-t0), flush=True)

run(DknConfig(), 3e-4, 2000, 'dkn')
run(DknConfig(), 5e-4, 2000, 'dkn')
run(FdknConfig(), 1e-3, 2000, 'fdkn')
run(FdknConfig(), 1e-3, 1000, 'fdkn')
run(FdknConfig(), 5e-4, 2000, 'fdkn')
