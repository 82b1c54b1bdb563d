"""Diagnostic: does val AUC lift within 30 epochs when patience is off?

Three lrs, seed 0, alpha=0, raaug, patience 30 (never fires inside 30 epochs).
Prints every epoch so the liftoff shape is visible.
"""

import sys
import time

sys.path.insert(0, "src")

from twoview.synthdata import gen_dataset
from twoview.trainer import TrainConfig, ModelConfig, train, evaluate, params_from_checkpoint

ds = gen_dataset(n_real=100, ratio=4, seed=1000, size=64)
print(f"dataset: {len(ds.train)} train / {len(ds.val)} val / {len(ds.test)} test", flush=True)

for lr in (3e-3, 1e-3, 1e-2):
    cfg = TrainConfig(
        model=ModelConfig(input_size=64, channels=(8, 16, 32, 64)),
        seed=0,
        alpha=0.0,
        penalty="cos",
        aug="raaug",
        pairs_per_batch=8,
        max_epochs=30,
        patience=30,
        lr=lr,
    )
    t0 = time.time()

    def report(rec):
        print(
            f"  lr={lr:g} ep{rec.epoch:2d} ce={rec.ce_loss:7.4f} "
            f"cons={rec.consistency_loss:8.5f} val={rec.val_auc:.4f}",
            flush=True,
        )

    ckpt, hist = train(cfg, ds, on_epoch=report)
    enc, cls = params_from_checkpoint(ckpt)
    test_auc = evaluate(enc, cls, ds.test).auc
    print(f"lr={lr:g}: best val {ckpt.best_val_auc:.4f} @ep{ckpt.epoch} test {test_auc:.4f} ({time.time()-t0:.0f}s)", flush=True)
