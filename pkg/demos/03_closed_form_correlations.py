"""Closed-form long-run correlation of a one-layer ReLU network on AR(1) input.

For ``GAP(ReLU(w x_t))`` two channels whose weights have opposite signs are
negatively correlated in the limit; the strength depends on the input
persistence theta.
"""
import numpy as np

from gapclt import asymcov

w = np.array([1.0, -1.0])
print(" theta   corr(channel 1, channel 2)")
for theta in [0.0, 0.3, 0.6, 0.9, 0.99, 0.999]:
    r = asymcov.corr_gap_onelayer(w, theta)[0, 1]
    print(f" {theta:5.3f}   {r:+.6f}")

lc = asymcov.limit_constants()
print("endpoints: theta=0 ->", round(lc.c0, 6), " theta->1 ->", round(lc.c1, 6))

# wider filters mix several lags; the lag covariances are no longer symmetric
W = np.array([[1.0, -0.5, 0.2], [-0.3, 0.8, 0.1]])
print("k=3 filter, theta=0.5, covariance matrix:\n", asymcov.sigma_gap_onelayer(W, 0.5))
