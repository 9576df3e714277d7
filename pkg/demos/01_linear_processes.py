"""Simulating linear processes and checking their autocovariances.

Run with ``python demos/01_linear_processes.py``.
"""
import numpy as np

from gapclt import linproc

# %% AR(1) with the exact stationary start: no burn-in needed
ar = linproc.make_ar1(0.6)
x = linproc.simulate(ar, 100_000, seed=1)[0]
print("AR(1) theta=0.6")
for h in range(4):
    emp = np.mean((x[:-h or None] - x.mean()) * (x[h:] - x.mean()))
    print(f"  lag {h}: sample {emp:.4f}   exact {linproc.autocov(ar, h)[0, 0]:.4f}")

# %% the same recursion driven by Laplace noise (unit variance after normalization)
lap = linproc.make_ar1(0.6, innovations=linproc.InnovationSpec(law="laplace"))
print("Laplace-driven AR(1) variance:", linproc.simulate(lap, 100_000, 2).var().round(3))

# %% MA(1) and an explicit bivariate process
ma = linproc.make_ma1(0.6)
print("MA(1) lag-1 autocovariance:", linproc.autocov(ma, 1)[0, 0])
A = [np.eye(2), [[0.5, 0.2], [0.0, -0.3]]]
vec = linproc.make_linear(A)
print("bivariate Gamma(1):\n", linproc.autocov(vec, 1))

# the AR(1) infinite expansion is cut where the coefficient tail drops below 1e-12
print("AR(1) truncation order:", ar.truncation_order, "tail bound:", ar.tail_bound())
