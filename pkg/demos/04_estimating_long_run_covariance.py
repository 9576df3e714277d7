"""Bartlett estimates of long-run covariance, from a scalar AR(1) to network outputs."""
import numpy as np

from gapclt import asymcov, fcn, linproc, lrcov, mc

x = linproc.simulate(linproc.make_ar1(0.6), 100_000, seed=0)
est = lrcov.lr_cov_estimate(x)
print(f"AR(1) long-run variance: {est.sigma_hat[0, 0]:.3f} (exact 6.25, bandwidth {est.bandwidth:g})")

# One-layer toy network with ten Gaussian filters on AR(1) input
net = fcn.he_init(fcn.FcnSkeleton(1, (1,), (10,)), seed=5)
w = net.layers[0].filters[0]
for theta, bw in [(0.0, None), (0.99, None), (0.99, 3000)]:
    est, C, perm = mc.single_path_corr(linproc.make_ar1(theta), net, 200_000, seed=1,
                                       bandwidth=bw)
    R = asymcov.corr_gap_onelayer(w, theta)
    err = np.max(np.abs(C - R))
    print(f"theta={theta}: bandwidth {est.bandwidth:g}, max |estimate - theory| = {err:.3f}")

# With strong persistence the default bandwidth is far too short; see the
# last two lines above. The reordered matrix groups same-sign channels.
print("neuron order:", perm + 1)
print(np.round(C[np.ix_(perm, perm)], 2))
