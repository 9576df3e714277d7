"""Training with GAP, WGAP and penalized WGAP on a two-class AR(1) task.

Takes about a minute: three 200-epoch runs of a small numpy network.
"""
import numpy as np

from gapclt import fcn
from gapclt import train as tr

train_set, test_set = tr.synthetic_ar1_task(seed=0)
skeleton = fcn.FcnSkeleton(1, (8, 5), (16, 16), "relu", "none", n_classes=2)

for mode, lam in [("gap", 0.0), ("wgap", 0.0), ("regwgap", 1.0)]:
    cfg = tr.TrainConfig(lam=lam, epochs=200, seed=0)
    model, log = tr.train(skeleton, train_set, cfg, mode, val=test_set)
    a = model.params["a"]
    print(f"{mode:8s} test acc {tr.evaluate(model, test_set):.3f}  "
          f"max |a_j+1 - a_j| {tr.max_successive_diff(a):.2e}  final loss {log[-1].train_loss:.4f}")

# Lambda selection by cross-validation is slower (16 grid points x 5 folds);
# a short grid shows the mechanics.
res = tr.cross_validate_lambda(skeleton, train_set, tr.TrainConfig(cv_epochs=10),
                               grid=[0.001, 0.128, 32.768])
print("CV accuracies:", {float(l): float(a) for l, a in zip(res.grid, res.mean_acc.round(3))}, "best:", res.best)
