"""Fixed-parameter FCNs, receptive fields and the two pooling layers."""
import numpy as np

from gapclt import fcn, linproc

skeleton = fcn.residual_blocks(4, width=8, filter_widths=(3, 2))
net = fcn.he_init(skeleton, seed=0)
K = fcn.receptive_field(net)
print("layers:", len(net.layers), "receptive field K_L =", K)

x = linproc.simulate(linproc.make_ar1(0.6), 50, seed=3)
H = fcn.forward(net, x)
print("activations:", H.shape)

# Every output column is a fixed function of one zero-extended input window.
wins = fcn.windows(x, K)
diff = max(np.max(np.abs(H[:, t] - fcn.window_apply(net, w))) for t, w in enumerate(wins))
print("forward vs window map, max abs difference:", diff)

# GAP is uniform weighted pooling; other weights tilt the average in time
print("GAP:", fcn.gap(H).round(3))
ramp = fcn.PoolingWeights(np.linspace(0, 2, 50) / 50)
print("ramp WGAP:", fcn.wgap(H, ramp).round(3))
print("weight-limit diagnostics:", fcn.validate_W2(ramp, max_lag=2))

fcn.save_spec(net, "/tmp/demo_net.ini")
print("round trip identical:", np.array_equal(fcn.forward(fcn.load_spec("/tmp/demo_net.ini"), x), H))
