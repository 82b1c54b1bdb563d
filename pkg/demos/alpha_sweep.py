"""Balance-weight sweep: how hard to pull the two views together.

Trains one miniature model per alpha in {0, 1, 2, 5, 10, 100} and reports
test AUC plus measured cross-view distance.  alpha = 0 is the plain
cross-entropy baseline; large alpha buys view invariance at the price of
drowning the classification gradient.
"""

import time

from twoview.augment import AugStrategy
from twoview.model import ModelConfig
from twoview.synthdata import gen_dataset
from twoview.trainer import (
    TrainConfig,
    cross_view_distance,
    evaluate,
    params_from_checkpoint,
    train,
)

ALPHAS = (0.0, 1.0, 2.0, 5.0, 10.0, 100.0)


def main():
    dataset = gen_dataset(n_real=40, ratio=2, seed=5)
    probe = AugStrategy(kind="raaug")

    print(f"{'alpha':>6s} {'test auc':>9s} {'cross-view dist':>16s} {'seconds':>8s}")
    for alpha in ALPHAS:
        config = TrainConfig(
            seed=5,
            alpha=alpha,
            penalty="cos",
            aug="raaug",
            pairs_per_batch=8,
            max_epochs=10,
            patience=10,
            lr=3e-3,
            model=ModelConfig(input_size=64, channels=(8, 16, 32, 64)),
        )
        t0 = time.time()
        ckpt, _ = train(config, dataset)
        enc, cls = params_from_checkpoint(ckpt)
        auc = evaluate(enc, cls, dataset.test).auc
        cvd = cross_view_distance(enc, dataset.test, probe, seed=999)
        print(f"{alpha:6g} {auc:9.3f} {cvd:16.3e} {time.time() - t0:8.1f}")


if __name__ == "__main__":
    main()
