"""Does full training ignite from the current mean-diff direction quality?

Seed 0 (the weakest init of the three acceptance seeds), alpha=0, grid over
lr and augmentation.  Patience equals max_epochs so early stopping never
interferes with the shape of the curve.
"""

import sys
import time

sys.path.insert(0, "src")

from twoview.synthdata import gen_dataset
from twoview.trainer import TrainConfig, ModelConfig, train, evaluate, params_from_checkpoint

ds = gen_dataset(n_real=100, ratio=4, seed=1000, size=64)

for aug in ("none", "raaug"):
    for lr in (3e-3, 1e-3):
        cfg = TrainConfig(
            model=ModelConfig(input_size=64, channels=(8, 16, 32, 64)),
            seed=0,
            alpha=0.0,
            penalty="cos",
            aug=aug,
            pairs_per_batch=16,
            max_epochs=30,
            patience=30,
            lr=lr,
        )
        t0 = time.time()
        curve = []

        def report(rec):
            curve.append(rec.val_auc)

        ckpt, hist = train(cfg, ds, on_epoch=report)
        enc, cls = params_from_checkpoint(ckpt)
        test_auc = evaluate(enc, cls, ds.test).auc
        shape = " ".join(f"{v:.2f}" for v in curve)
        print(f"aug={aug:5s} lr={lr:g}: best val {ckpt.best_val_auc:.3f} test {test_auc:.3f} ({time.time()-t0:.0f}s)", flush=True)
        print(f"  curve: {shape}", flush=True)
