"""Data-level gauges for the current generator.

1. brightness-only AUC margin under the 0.6 guard, several seeds
2. oracle AUC of the raw chroma statistic mean(R+B-2G) (what a perfect
   chroma detector would score)
3. ridge probe on init-encoder reps of clean views
4. per-coordinate projection: AUC along the raw class-mean difference of
   init reps (the direction CE's first gradient points at)
"""

import sys

sys.path.insert(0, "src")

import numpy as np

from twoview.metrics import ScoredSet, auc
from twoview.model import ModelConfig, encoder_forward, init_params
from twoview.ndgrad import Tensor
from twoview.synthdata import gen_dataset

for seed in (1000, 2000, 3000):
    ds = gen_dataset(n_real=100, ratio=4, seed=seed, size=64)
    allsamp = ds.train + ds.val + ds.test
    labels = np.array([s.label for s in allsamp])

    bright = np.array([s.image.mean() for s in allsamp])
    a_b = auc(ScoredSet(bright, labels))
    a_b = max(a_b, 1.0 - a_b)

    chroma = np.array([(s.image[:, :, 0] + s.image[:, :, 2] - 2 * s.image[:, :, 1]).mean() for s in allsamp])
    a_c = auc(ScoredSet(chroma, labels))

    print(f"seed {seed}: brightness AUC {a_b:.4f}  chroma-stat AUC {a_c:.4f}", flush=True)

ds = gen_dataset(n_real=100, ratio=4, seed=1000, size=64)

def reps_of(samples, enc):
    batch = np.stack([s.image for s in samples]).transpose(0, 3, 1, 2)
    reps, _ = encoder_forward(Tensor(batch, requires_grad=False), enc)
    return reps.data

cfg = ModelConfig(input_size=64, channels=(8, 16, 32, 64))
for enc_seed in (0, 1, 2):
    enc, _ = init_params(cfg, seed=enc_seed)
    Xtr = reps_of(ds.train, enc)
    ytr = np.array([s.label for s in ds.train])
    Xte = reps_of(ds.test, enc)
    yte = np.array([s.label for s in ds.test])

    mu, sd = Xtr.mean(0), Xtr.std(0) + 1e-12
    Ztr, Zte = (Xtr - mu) / sd, (Xte - mu) / sd
    lam = 1e-2
    w = np.linalg.solve(Ztr.T @ Ztr + lam * np.eye(Ztr.shape[1]), Ztr.T @ (2.0 * ytr - 1.0))
    a_ridge = auc(ScoredSet(Zte @ w, yte))

    delta = Xtr[ytr == 1].mean(0) - Xtr[ytr == 0].mean(0)
    a_delta = auc(ScoredSet(Xte @ delta, yte))
    print(f"enc seed {enc_seed}: ridge probe {a_ridge:.4f}  raw-mean-diff AUC {a_delta:.4f}", flush=True)
