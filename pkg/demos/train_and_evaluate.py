"""
Training both predictors on a small dataset
===========================================

Simulate a handful of scenes, window them into sequences, train the
tracker-state model (TxID) and a reduced end-to-end map model, and compare
them with beam hold over observation intervals of 1 to 10 frames.
Takes about two minutes on one core.  With this little data the learned
models are noisy; demos/benchmark.py runs the full-size comparison.
"""
import numpy as np

from radarbeam.benchmark import BenchmarkConfig, build_benchmark
from radarbeam.comm import build_codebook
from radarbeam.data import E2ETrainingSet, TxIdTrainingSet
from radarbeam.evaluation import accuracy_vs_To, e2e_ranker, hold_ranker, txid_ranker
from radarbeam.models import E2EModel, E2EModelConfig, TxIdModel, TxIdModelConfig, default_train_config, train

cfg = BenchmarkConfig(master_seeds=(0,), scenes_per_seed=6, map_shape=(64, 32), conv_channels=(4, 4, 4, 4, 4))
ds, feats = build_benchmark(cfg)
print(f"{len(ds.frames)} frames, {len(ds.samples)} windows: "
      f"{len(ds.split.train)} train / {len(ds.split.test)} test ({ds.split.n_dropped} dropped at the split)")

cb = build_codebook(ds.array, ds.n_beams)
txid = TxIdModel(TxIdModelConfig(n_beams=ds.n_beams), seed=0)
res = train(txid, TxIdTrainingSet(ds.split.train, feats.states, ds.radar, cb),
            default_train_config("txid", epochs=60))
print("TxID loss first/last epoch:", round(res.loss_curve[0][2], 3), round(res.loss_curve[-1][2], 3))

e2e = E2EModel(E2EModelConfig(map_shape=cfg.map_shape, conv_channels=cfg.conv_channels,
                              n_beams=ds.n_beams), seed=0).astype(np.float32)
res = train(e2e, E2ETrainingSet(ds.split.train, feats.maps), default_train_config("e2e", epochs=60, lr=0.003))
print("E2E loss first/last epoch:", round(res.loss_curve[0][2], 3), round(res.loss_curve[-1][2], 3))

report = accuracy_vs_To(ds.split.test, {
    "hold": hold_ranker(ds.n_beams),
    "txid": txid_ranker(txid, TxIdTrainingSet(ds.split.test, feats.states, ds.radar, cb)),
    "e2e": e2e_ranker(e2e, feats.maps)}, n_beams=ds.n_beams)
for name, per_t in report.accuracy.items():
    print(f"{name:5s} top-3 for T_o=1..10:", " ".join(f"{per_t[t][3]:.2f}" for t in range(1, 11)))
