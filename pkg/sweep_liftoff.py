"""Liftoff sweep: plain CE (alpha=0) across seeds and lr on the current data."""
import time

import numpy as np

from twoview.model import ModelConfig
from twoview.synthdata import gen_dataset
from twoview.trainer import TrainConfig, evaluate, params_from_checkpoint, train

for seed in (0, 1, 2):
    ds = gen_dataset(n_real=100, ratio=4, seed=seed)
    for lr in (3e-3, 1e-2):
        t0 = time.time()
        cfg = TrainConfig(
            seed=seed, alpha=0.0, penalty="cos", aug="none",
            pairs_per_batch=8, max_epochs=30, patience=30, lr=lr,
            model=ModelConfig(input_size=64, channels=(8, 16, 32, 64)),
        )
        ckpt, hist = train(cfg, ds)
        enc, cls = params_from_checkpoint(ckpt)
        va = [r.val_auc for r in hist.epochs]
        te = evaluate(enc, cls, ds.test).auc
        print(f"seed={seed} lr={lr:g}: best val {max(va):.3f} @ep{int(np.argmax(va))+1} "
              f"final val {va[-1]:.3f} test {te:.3f} ({time.time()-t0:.0f}s)", flush=True)
