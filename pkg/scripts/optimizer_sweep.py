"""Train on a labeled corpus under several optimizer settings and report test RMSE.

Used to check whether the desk-scale RMSE gap comes from the optimizer
budget (one step per epoch at the reference batch size) or from the labels.
"""
import argparse
import json
import time

import numpy as np

from pqcexpr.gnn import TrainConfig, evaluate, train
from pqcexpr.graphenc import read_dataset, split_dataset

SETTINGS = {
    "reference": {},
    "lr1e-3_batch64": {"lr": 1e-3, "batch_size": 64},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", required=True)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--settings", nargs="*", default=list(SETTINGS), choices=list(SETTINGS))
    args = ap.parse_args()

    records = read_dataset(args.data)
    tr, va, te = split_dataset(records, seed=0)
    pick = lambda idx: [records[i] for i in idx]  # noqa: E731
    labels = np.array([r.expr for r in pick(te)])
    for name in args.settings:
        start = time.time()
        res = train(pick(tr), pick(va), TrainConfig(epochs=args.epochs, **SETTINGS[name]))
        ev = evaluate(res.model, pick(te))
        print(json.dumps({"setting": name, "rmse": ev["rmse"], "label_std": float(labels.std()),
                          "per_qubit": ev["per_qubit"], "best_epoch": res.best_epoch,
                          "seconds": round(time.time() - start, 1)}))


if __name__ == "__main__":
    main()
