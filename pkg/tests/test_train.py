import math
import warnings

import numpy as np
import pytest
from scipy import optimize

from gapclt import fcn
from gapclt import train as tr
from gapclt.exceptions import DivergenceError, DomainError, FormatError

from _gradcheck import max_relative_error, random_case


def tiny_task(seed=0, n=32, count=40):
    return tr.synthetic_ar1_task(seed, n=n, n_train=count, n_test=count)


SMALL = fcn.FcnSkeleton(1, (3, 3), (4, 4), "relu", "none", 2)


class TestPenalty:
    def test_values(self):
        assert tr.penalty(np.full(5, 0.2), 3.0) == 0.0
        assert tr.penalty([0.0, 1.0, 0.0], 1.0) == 2.0
        a = np.array([0.3, -1.0, 2.0, 0.5])
        assert tr.penalty(a, 2.0) == pytest.approx(2 * tr.penalty(a, 1.0))

    def test_gradient_is_second_difference(self):
        a = np.array([0.0, 1.0, 3.0, 2.0])
        # 2 lam D^T D a
        D = np.diff(np.eye(4), axis=0)
        np.testing.assert_allclose(tr.penalty_grad(a, 0.5), 2 * 0.5 * D.T @ D @ a)

    def test_needs_two_weights(self):
        with pytest.raises(DomainError):
            tr.penalty([1.0], 1.0)


class TestCrossEntropy:
    def test_values(self):
        assert tr.cross_entropy([1.0, 0.0], 1) == 0.0
        assert tr.cross_entropy([0.5, 0.5], 2) == pytest.approx(math.log(2))
        assert tr.cross_entropy([0.25, 0.75], 2) == pytest.approx(math.log(4 / 3))

    def test_clamp_flag(self):
        val, sat = tr.cross_entropy([1.0, 0.0], 2, return_flag=True)
        assert sat and val == pytest.approx(-math.log(1e-12))


class TestGradient:
    def test_random_configurations(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            errs = max_relative_error(*random_case(rng))
            assert max(errs.values()) <= 1e-4, errs

    def test_penalty_only_with_zero_filters(self):
        model = tr.init_model(SMALL, 10, 0)
        for k in model.params:
            if k.startswith(("W", "b")):
                model.params[k][:] = 0.0
        model.params["a"] = np.linspace(0, 1, 10) ** 2
        X = np.random.default_rng(0).standard_normal((3, 1, 10))
        _, g = tr.loss_and_grad(model, X, np.array([1, 2, 1]), 4.0)
        np.testing.assert_allclose(g["a"], tr.penalty_grad(model.params["a"], 4.0), atol=1e-14)

    def test_duplicated_sample(self):
        rng = np.random.default_rng(1)
        model, X, y, lam = random_case(rng)
        _, g1 = tr.loss_and_grad(model, X[:1], y[:1], lam)
        _, g2 = tr.loss_and_grad(model, np.concatenate([X[:1], X[:1]]), np.repeat(y[:1], 2), lam)
        for k in g1:
            np.testing.assert_allclose(g1[k], g2[k], rtol=1e-12, atol=1e-15)

    def test_batch_norm_gradient(self):
        # per-batch statistics are a deterministic function of the batch
        rng = np.random.default_rng(3)
        sk = fcn.FcnSkeleton(1, (2, 2), (3, 3), "sigmoid", "none", 2)
        model = tr.init_model(sk, 12, 0, batch_norm=True)
        X, y = rng.standard_normal((6, 1, 12)), rng.integers(1, 3, 6)
        errs = max_relative_error(model, X, y, 0.5)
        # biases feeding batch norm have zero true gradient
        assert all(v <= 1e-4 for k, v in errs.items() if not k.startswith("b"))

    def test_non_finite_input(self):
        model = tr.init_model(SMALL, 8, 0)
        X = np.full((1, 1, 8), np.inf)
        with pytest.raises(DivergenceError):
            tr.loss_and_grad(model, X, np.array([1]))


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        st = tr.adam_init(p)
        st.m["w"][:] = 0.5
        new, st2 = tr.adam_step(p, {"w": np.zeros(2)}, st, 1e-3)
        np.testing.assert_allclose(st2.m["w"], 0.45)
        # first-moment bias correction at t=1 leaves a nonzero step unless m is zero
        p0 = {"w": np.array([1.0])}
        new0, _ = tr.adam_step(p0, {"w": np.zeros(1)}, tr.adam_init(p0), 1e-3)
        np.testing.assert_array_equal(new0["w"], p0["w"])

    def test_constant_gradient_step(self):
        p = {"w": np.array([0.0, 0.0])}
        st = tr.adam_init(p)
        g = {"w": np.array([3.0, -0.01])}
        for _ in range(2000):
            prev = p["w"].copy()
            p, st = tr.adam_step(p, g, st, 1e-3)
        np.testing.assert_allclose(prev - p["w"], [1e-3, -1e-3], rtol=1e-4)

    def test_pure_and_deterministic(self):
        p = {"w": np.array([1.0])}
        st = tr.adam_init(p)
        a = tr.adam_step(p, {"w": np.array([2.0])}, st, 0.1)
        b = tr.adam_step(p, {"w": np.array([2.0])}, st, 0.1)
        assert p["w"][0] == 1.0 and st.t == 0
        np.testing.assert_array_equal(a[0]["w"], b[0]["w"])

    def test_frozen_key(self):
        p = {"a": np.ones(2), "w": np.ones(1)}
        new, _ = tr.adam_step(p, {"a": np.ones(2), "w": np.ones(1)}, tr.adam_init(p), 0.1,
                              frozen=("a",))
        np.testing.assert_array_equal(new["a"], p["a"])
        assert new["w"][0] < 1


class TestTraining:
    cfg = tr.TrainConfig(epochs=5, seed=2)

    def test_gap_equals_frozen_wgap(self):
        data, _ = tiny_task()
        _, log_gap = tr.train(SMALL, data, self.cfg, "gap")
        _, log_frz = tr.train(SMALL, data, self.cfg, "wgap", freeze_pooling=True)
        assert [r.train_loss for r in log_gap] == [r.train_loss for r in log_frz]

    def test_deterministic(self):
        data, _ = tiny_task()
        m1, l1 = tr.train(SMALL, data, self.cfg, "regwgap")
        m2, l2 = tr.train(SMALL, data, self.cfg, "regwgap")
        assert [r.train_loss for r in l1] == [r.train_loss for r in l2]
        for k in m1.params:
            np.testing.assert_array_equal(m1.params[k], m2.params[k])

    def test_wgap_weights_start_uniform(self):
        model = tr.init_model(SMALL, 16, 0)
        np.testing.assert_array_equal(model.params["a"], np.full(16, 1 / 16))

    def test_eval_matches_library_forward(self):
        data, _ = tiny_task()
        sk = fcn.FcnSkeleton(1, (3, 2), (4, 4), "relu", (False, True), 2)
        model, _ = tr.train(sk, data, tr.TrainConfig(epochs=3, batch_norm=True), "regwgap")
        spec = model.to_spec()
        for x, p in zip(data.X[:5], tr.predict_proba(model, data.X[:5])):
            ref = fcn.dense_softmax(fcn.wgap(fcn.forward(spec, x), model.pooling()), spec.head)
            np.testing.assert_allclose(p, ref, rtol=1e-12)

    def test_log_fields(self, tmp_path):
        data, test = tiny_task()
        _, log = tr.train(SMALL, data, self.cfg, "wgap", val=test)
        assert [r.epoch for r in log] == [1, 2, 3, 4, 5]
        tr.write_log(tmp_path / "log.csv", log)
        assert (tmp_path / "log.csv").read_text().startswith("epoch,train_loss,train_acc,val_acc")

    def test_unknown_mode(self):
        data, _ = tiny_task()
        with pytest.raises(DomainError):
            tr.train(SMALL, data, self.cfg, "maxpool")

    def test_checkpoint_round_trip(self, tmp_path):
        data, _ = tiny_task()
        model, _ = tr.train(SMALL, data, self.cfg, "regwgap")
        tr.save_checkpoint(model, tmp_path / "m.ini")
        spec, w = tr.load_checkpoint(tmp_path / "m.ini")
        np.testing.assert_array_equal(w.a, model.params["a"])
        np.testing.assert_array_equal(spec.head.A, model.params["A"])


class TestEvaluate:
    def test_memorized_training_set(self):
        data, _ = tiny_task(count=16)
        sk = fcn.FcnSkeleton(1, (3,), (8,), "relu", "none", 2)
        model, _ = tr.train(sk, data, tr.TrainConfig(epochs=300, lr=1e-2), "wgap")
        assert tr.evaluate(model, data) == 1.0

    def test_single_wrong_sample(self):
        model = tr.init_model(SMALL, 8, 0)
        model.params["A"][:] = 0.0
        model.params["c"] = np.array([5.0, 0.0])
        one = tr.LabeledDataset(np.zeros((1, 1, 8)), [2], 2)
        assert tr.evaluate(model, one) == 0.0

    def test_ties_go_to_smallest_class(self):
        model = tr.init_model(SMALL, 8, 0)
        model.params["A"][:] = 0.0
        model.params["c"][:] = 0.0
        assert tr.predict(model, np.zeros((2, 1, 8))).tolist() == [1, 1]

    def test_random_predictor_near_half(self):
        accs = []
        for s in range(30):
            data = tr.LabeledDataset(np.zeros((100, 1, 4)), np.tile([1, 2], 50), 2)
            model = tr.init_model(fcn.FcnSkeleton(1, (1,), (2,), "relu", "none", 2), 4, s)
            model.params["c"] = np.random.default_rng(s).standard_normal(2)
            accs.append(tr.evaluate(model, data))
        assert np.mean(accs) == pytest.approx(0.5, abs=0.2)


class TestCrossValidation:
    def test_folds_partition_and_stratify(self):
        y = np.repeat([1, 2, 3], [10, 15, 20])
        f = tr.stratified_folds(y, 5, 0)
        assert sorted(np.unique(f)) == list(range(5))
        for c in (1, 2, 3):
            counts = np.bincount(f[y == c], minlength=5)
            assert counts.max() - counts.min() <= 1

    def test_small_class_falls_back(self):
        y = np.array([1] * 10 + [2] * 2)
        with pytest.warns(UserWarning):
            f = tr.stratified_folds(y, 5, 0)
        assert np.bincount(f).tolist() == [3, 3, 2, 2, 2]

    def test_single_grid_point(self):
        data, _ = tiny_task(count=20)
        res = tr.cross_validate_lambda(SMALL, data, tr.TrainConfig(cv_epochs=1), grid=[0.5])
        assert res.best == 0.5 and res.fold_acc.shape == (1, 5)

    def test_workers_do_not_change_result(self):
        data, _ = tiny_task(count=20)
        cfg = tr.TrainConfig(cv_epochs=2)
        a = tr.cross_validate_lambda(SMALL, data, cfg, grid=[0.001, 1.0])
        b = tr.cross_validate_lambda(SMALL, data, tr.TrainConfig(cv_epochs=2, workers=3),
                                     grid=[0.001, 1.0])
        np.testing.assert_array_equal(a.fold_acc, b.fold_acc)

    def test_default_grid(self):
        g = tr.default_lambda_grid()
        assert len(g) == 16 and g[0] == 0.001
        assert 0.128 in [round(v, 12) for v in g] and round(g[-1], 9) == 32.768

    def test_empty_grid(self):
        with pytest.raises(DomainError):
            tr.TrainConfig(grid=())


class TestUcr:
    def test_two_rows_and_remap(self, tmp_path):
        p = tmp_path / "toy.tsv"
        p.write_text("-1\t0.5\t1.5\n1\t2\t3\n")
        ds = tr.load_ucr(p)
        assert len(ds) == 2 and ds.y.tolist() == [1, 2]
        np.testing.assert_array_equal(ds.X[:, 0], [[0.5, 1.5], [2, 3]])

    def test_comma_and_order_of_appearance(self, tmp_path):
        p = tmp_path / "toy.csv"
        p.write_text("3,1,2\n1,0,0\n3,4,5\n")
        assert tr.load_ucr(p).y.tolist() == [1, 2, 1]

    def test_ragged(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text("1\t1\t2\n2\t1\n")
        with pytest.raises(FormatError, match="row 2"):
            tr.load_ucr(p)

    def test_round_trip(self, tmp_path):
        data, _ = tiny_task(count=6)
        tr.write_ucr(tmp_path / "d.tsv", data)
        back = tr.load_ucr(tmp_path / "d.tsv")
        np.testing.assert_array_equal(back.X, data.X)
        # labels remapped by first appearance; the partition is preserved
        first = {}
        assert [first.setdefault(int(a), int(b)) for a, b in zip(data.y, back.y)] == back.y.tolist()


def lag1_autocorr(X):
    D = X - X.mean(axis=1, keepdims=True)
    return np.sum(D[:, :-1] * D[:, 1:], axis=1) / np.sum(D * D, axis=1)


def test_synthetic_task_separable_by_autocorrelation():
    train, test = tr.synthetic_ar1_task(0)
    f_tr, f_te = lag1_autocorr(train.X[:, 0]), lag1_autocorr(test.X[:, 0])
    t_tr = (train.y == 2).astype(float)

    def nll(w):
        z = w[0] + w[1] * f_tr
        return np.sum(np.logaddexp(0, z) - t_tr * z)

    w = optimize.minimize(nll, [0.0, 1.0]).x
    acc = np.mean(((w[0] + w[1] * f_te) > 0) == (test.y == 2))
    assert acc >= 0.95


def test_penalty_monotone_over_default_grid():
    sk = fcn.FcnSkeleton(1, (3, 3), (4, 4), "relu", "none", 2)
    medians = []
    for lam in tr.default_lambda_grid():
        diffs = []
        for s in range(5):
            data, _ = tr.synthetic_ar1_task(s, n=32, n_train=40, n_test=2)
            model, _ = tr.train(sk, data, tr.TrainConfig(epochs=30, lam=lam, seed=s),
                                "regwgap", track=False)
            diffs.append(tr.max_successive_diff(model.params["a"]))
        medians.append(np.median(diffs))
    assert np.all(np.diff(medians) <= 0)
