"""Batch command-line front end.

Every subcommand reads an INI-style config file, writes CSV artifacts into
``--out`` and finishes with a ``manifest.txt`` recording the config hash, the
seed and the package version.  Errors end the run with a nonzero exit code
and a single ``error: <Kind>: <message>`` line on stderr.
"""
import argparse
import configparser
from dataclasses import replace
import hashlib
import os
import re
import sys

import numpy as np

from . import __version__, asymcov, fcn, linproc, lrcov, mc
from . import train as tr
from .exceptions import DegenerateError, DomainError, FormatError, GapCltError
from .io import ensure_dir, read_matrix_csv, write_csv, write_matrix_csv, write_metadata
from .seeding import STREAM_DATA, STREAM_NETWORK, derive_seed

# section -> {key: default}; the defaults double as the --help reference
SCHEMA = {
    "process": {"kind": "ar1", "theta": "0.6", "sigma": "1.0", "law": "gaussian",
                "coeffs": ""},
    "network": {"layout": "blocks", "blocks": "4", "block_filters": "3 2", "width": "8",
                "filter_widths": "1", "widths": "10", "residual": "none",
                "activation": "relu", "file": ""},
    "simulate": {"n": "1000", "paths": "1"},
    "theory": {"weights": "1; -1", "channels": "0", "thetas": "0 0.5 0.9 0.99 0.999",
               "sigma": "1.0", "tail_tol": "1e-10"},
    "clt": {"n": "1000", "replicates": "2000", "channel": "1"},
    "estimate": {"input": "", "n": "200000", "bandwidth": "auto",
                 "bandwidth_const": "1.5"},
    "train": {"data": "synthetic", "test": "", "mode": "regwgap", "lam": "cv",
              "epochs": "200", "lr": "0.001", "batch_size": "16", "folds": "5",
              "cv_epochs": "80", "grid": "default", "freeze_pooling": "false",
              "batch_norm": "false", "n": "128", "n_train": "200", "n_test": "200",
              "thetas": "0.2 0.8"},
    "reorder": {"matrix": "", "absolute": "true"},
}

SUBCOMMANDS = ("simulate", "theory", "clt", "estimate", "train", "reorder")


class Config:
    """Validated view of a config file with line-aware error messages."""

    def __init__(self, path=None):
        self.path = path
        self.text = ""
        self.cp = configparser.ConfigParser(interpolation=None)
        if path:
            with open(path) as fh:
                self.text = fh.read()
            try:
                self.cp.read_string(self.text, source=path)
            except configparser.Error as exc:
                raise FormatError(" ".join(str(exc).split())) from None
        for sec in self.cp.sections():
            if sec not in SCHEMA:
                raise FormatError(f"{self._where(sec)}: unknown section [{sec}]")
            for key in self.cp[sec]:
                if key not in SCHEMA[sec]:
                    raise FormatError(f"{self._where(sec, key)}: unknown key '{key}' "
                                      f"in section [{sec}]")

    def _where(self, section, key=None):
        """``path:line`` of a section header or of a key inside it."""
        lines = self.text.splitlines()
        current = None
        for i, ln in enumerate(lines, start=1):
            s = ln.strip()
            m = re.match(r"\[(.+)\]$", s)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return f"{self.path}:{i}"
            elif current == section and key is not None:
                k = re.split(r"[=:]", s, 1)[0].strip().lower()
                if k == key:
                    return f"{self.path}:{i}"
        return str(self.path)

    def get(self, section, key):
        if self.cp.has_section(section) and key in self.cp[section]:
            return self.cp[section][key].strip()
        return SCHEMA[section][key]

    def _convert(self, section, key, fn, what):
        raw = self.get(section, key)
        try:
            return fn(raw)
        except (ValueError, TypeError):
            raise FormatError(f"{self._where(section, key)}: key '{key}' in [{section}] "
                              f"expects {what}, got {raw!r}") from None

    def int(self, section, key):
        return self._convert(section, key, int, "an integer")

    def float(self, section, key):
        return self._convert(section, key, float, "a number")

    def floats(self, section, key):
        return self._convert(section, key, lambda s: [float(t) for t in s.replace(",", " ").split()],
                             "a list of numbers")

    def ints(self, section, key):
        return self._convert(section, key, lambda s: [int(t) for t in s.replace(",", " ").split()],
                             "a list of integers")

    def bool(self, section, key):
        def conv(s):
            v = s.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return self._convert(section, key, conv, "true or false")

    def sha256(self):
        return hashlib.sha256(self.text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# builders

def build_process(cfg):
    kind = cfg.get("process", "kind").lower()
    law = cfg.get("process", "law").lower()
    if kind == "explicit":
        coeffs = cfg.floats("process", "coeffs")
        if not coeffs:
            raise FormatError("[process] kind = explicit needs 'coeffs'")
        return linproc.make_linear(coeffs, linproc.InnovationSpec(1, law))
    inn = linproc.InnovationSpec(1, law)
    theta, sigma = cfg.float("process", "theta"), cfg.float("process", "sigma")
    if kind == "ar1":
        return linproc.make_ar1(theta, sigma, inn)
    if kind == "ma1":
        return linproc.make_ma1(theta, sigma, inn)
    raise FormatError(f"{cfg._where('process', 'kind')}: key 'kind' must be ar1, ma1 "
                      f"or explicit, got {kind!r}")


def build_skeleton(cfg, input_dim=1, n_classes=None):
    layout = cfg.get("network", "layout").lower()
    act = cfg.get("network", "activation").lower()
    if layout == "blocks":
        return fcn.residual_blocks(cfg.int("network", "blocks"), cfg.int("network", "width"),
                                   tuple(cfg.ints("network", "block_filters")),
                                   input_dim, act, n_classes)
    if layout == "stack":
        fw = tuple(cfg.ints("network", "filter_widths"))
        ws = tuple(cfg.ints("network", "widths"))
        res = cfg.get("network", "residual").lower()
        if res not in ("none", "identity"):
            res = tuple(v.lower() in ("1", "true", "yes") for v in res.split())
        return fcn.FcnSkeleton(input_dim, fw, ws, act, res, n_classes)
    raise FormatError(f"{cfg._where('network', 'layout')}: key 'layout' must be blocks "
                      f"or stack, got {layout!r}")


def build_network(cfg, seed):
    path = cfg.get("network", "file")
    if path:
        return fcn.load_spec(path)
    return fcn.he_init(build_skeleton(cfg), derive_seed(seed, STREAM_NETWORK))


def _meta(args, cfg, **extra):
    m = {"subcommand": args.command, "seed": args.seed, "version": __version__,
         "config_sha256": cfg.sha256()}
    m.update(extra)
    return m


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, cfg):
    proc = build_process(cfg)
    n, paths = cfg.int("simulate", "n"), cfg.int("simulate", "paths")
    out = []
    for i in range(paths):
        X = linproc.simulate(proc, n, derive_seed(args.seed, STREAM_DATA, i))
        name = "series.csv" if paths == 1 else f"series_{i + 1}.csv"
        linproc.write_series_csv(os.path.join(args.out, name), X)
        out.append(name)
    write_metadata(os.path.join(args.out, "series.meta"),
                   _meta(args, cfg, kind=proc.kind, theta=proc.theta, n=n, paths=paths))
    return out + ["series.meta"]


def _theory_weights(cfg, seed):
    m = cfg.int("theory", "channels")
    if m > 0:
        rng = np.random.default_rng(derive_seed(seed, STREAM_NETWORK))
        return rng.standard_normal((m, 1))
    rows = [r for r in cfg.get("theory", "weights").split(";") if r.strip()]
    try:
        W = np.array([[float(t) for t in r.replace(",", " ").split()] for r in rows])
    except ValueError:
        raise FormatError(f"{cfg._where('theory', 'weights')}: key 'weights' must be rows "
                          f"of numbers separated by ';'") from None
    if W.ndim != 2 or W.size == 0:
        raise FormatError("key 'weights' in [theory] needs rows of equal length")
    return W


def cmd_theory(args, cfg):
    W = _theory_weights(cfg, args.seed)
    thetas = cfg.floats("theory", "thetas")
    sigma = cfg.float("theory", "sigma")
    tail = asymcov.SeriesTail(cfg.float("theory", "tail_tol"))
    m = W.shape[0]
    pairs = [(j, l) for j in range(m) for l in range(j, m)]
    corr_rows, cov_rows = [], []
    for th in thetas:
        if not 0 <= th < 1:
            raise DomainError(f"theta must lie in [0, 1), got {th}")
        R = asymcov.corr_gap_onelayer(W, th, tail)
        S = asymcov.sigma_gap_onelayer(W, th, sigma, tail)
        corr_rows.append([th] + [R[j, l] for j, l in pairs if j < l])
        cov_rows.append([th] + [S[j, l] for j, l in pairs])
    write_csv(os.path.join(args.out, "theory_corr.csv"),
              ["theta"] + [f"r_{j + 1}_{l + 1}" for j, l in pairs if j < l], corr_rows)
    write_csv(os.path.join(args.out, "theory_cov.csv"),
              ["theta"] + [f"s_{j + 1}_{l + 1}" for j, l in pairs], cov_rows)
    lc = asymcov.limit_constants()
    write_csv(os.path.join(args.out, "constants.csv"), ["name", "value"],
              [("c0", lc.c0), ("c1", lc.c1)])
    write_matrix_csv(os.path.join(args.out, "weights.csv"), W,
                     [f"tap{r + 1}" for r in range(W.shape[1])])
    write_metadata(os.path.join(args.out, "theory.meta"),
                   _meta(args, cfg, channels=m, filter_width=W.shape[1], sigma=sigma))
    return ["theory_corr.csv", "theory_cov.csv", "constants.csv", "weights.csv", "theory.meta"]


def cmd_clt(args, cfg):
    proc = build_process(cfg)
    net = build_network(cfg, args.seed)
    ch = cfg.int("clt", "channel") - 1
    if not 0 <= ch < net.out_dim:
        raise FormatError(f"{cfg._where('clt', 'channel')}: channel must lie in 1..{net.out_dim}")
    ecfg = mc.ExperimentConfig(proc, net, cfg.int("clt", "n"), cfg.int("clt", "replicates"),
                               args.seed, None, ch, args.workers)
    rep = mc.run_clt_experiment(ecfg)
    if rep.degenerate:
        raise DegenerateError(f"standardization failed ({rep.reason}); no diagnostics computed")
    mc.export_report(rep, args.out, _meta(args, cfg, kind=proc.kind, theta=proc.theta,
                                          n=ecfg.n, replicates=ecfg.replicates,
                                          channel=ch + 1))
    fcn.save_spec(net, os.path.join(args.out, "network.ini"))
    files = ["samples.csv", "qq.csv", "summary.csv", "metadata.txt", "network.ini"]
    if rep.corr is not None:
        files += ["corr.csv", "permutation.csv"]
    return files


def cmd_estimate(args, cfg):
    net = build_network(cfg, args.seed)
    src = cfg.get("estimate", "input")
    if src:
        X = linproc.read_series_csv(src)
    else:
        X = linproc.simulate(build_process(cfg), cfg.int("estimate", "n"),
                             derive_seed(args.seed, STREAM_DATA, 0))
    n = X.shape[1]
    K = fcn.receptive_field(net)
    if n < K + 8:
        raise DomainError(f"series of length {n} is too short for receptive field {K}")
    Y = fcn.forward(net, X)[:, :n - K + 1]
    bw = cfg.get("estimate", "bandwidth").lower()
    if bw == "auto":
        b = lrcov.default_bandwidth(Y.shape[1], cfg.float("estimate", "bandwidth_const"))
    else:
        b = cfg.float("estimate", "bandwidth")
    est = lrcov.lr_cov_estimate(Y, lrcov.KernelSpec(b))
    lrcov.export_estimate(est, os.path.join(args.out, "sigma.csv"),
                          os.path.join(args.out, "sigma.meta"),
                          _meta(args, cfg, n=n, receptive_field=K,
                                input=src or "simulated"))
    C = est.corr()
    perm = mc.reorder_neurons(C, absolute=True)
    write_matrix_csv(os.path.join(args.out, "corr.csv"), C)
    write_csv(os.path.join(args.out, "permutation.csv"), ["position", "neuron"],
              [(i + 1, int(p) + 1) for i, p in enumerate(perm)])
    fcn.save_spec(net, os.path.join(args.out, "network.ini"))
    return ["sigma.csv", "sigma.meta", "corr.csv", "permutation.csv", "network.ini"]


def _train_data(cfg, seed):
    src = cfg.get("train", "data")
    if src.lower() == "synthetic":
        th = cfg.floats("train", "thetas")
        return tr.synthetic_ar1_task(derive_seed(seed, STREAM_DATA), cfg.int("train", "n"),
                                     cfg.int("train", "n_train"), cfg.int("train", "n_test"),
                                     tuple(th))
    train_set = tr.load_ucr(src, "train")
    test = cfg.get("train", "test")
    test_set = None
    if test:
        test_set = tr.load_ucr(test, "test")
        # use the training label map so class indices agree
        remap = train_set.label_map
        inv = {v: k for k, v in test_set.label_map.items()}
        try:
            y = np.array([remap[inv[c]] for c in test_set.y])
        except KeyError as exc:
            raise FormatError(f"{test}: label {exc} does not occur in the training file") from None
        test_set = tr.LabeledDataset(test_set.X, y, train_set.n_classes, "test")
    return train_set, test_set


def cmd_train(args, cfg):
    data, test = _train_data(cfg, args.seed)
    grid_raw = cfg.get("train", "grid").lower()
    grid = tr.default_lambda_grid() if grid_raw == "default" else tuple(cfg.floats("train", "grid"))
    lam_raw = cfg.get("train", "lam").lower()
    tcfg = tr.TrainConfig(lr=cfg.float("train", "lr"), epochs=cfg.int("train", "epochs"),
                          batch_size=cfg.int("train", "batch_size"),
                          lam=0.0 if lam_raw == "cv" else cfg.float("train", "lam"),
                          grid=grid, folds=cfg.int("train", "folds"),
                          cv_epochs=cfg.int("train", "cv_epochs"), seed=args.seed,
                          batch_norm=cfg.bool("train", "batch_norm"), workers=args.workers)
    mode = cfg.get("train", "mode")
    skel = build_skeleton(cfg, data.X.shape[1], data.n_classes)
    files = []
    if lam_raw == "cv" and tr._check_mode(mode) == "regwgap":
        res = tr.cross_validate_lambda(skel, data, tcfg)
        tr.write_cv_table(os.path.join(args.out, "cv.csv"), res)
        files.append("cv.csv")
        tcfg = replace(tcfg, lam=res.best)
    model, log = tr.train(skel, data, tcfg, mode, val=test,
                          freeze_pooling=cfg.bool("train", "freeze_pooling"))
    tr.write_log(os.path.join(args.out, "train_log.csv"), log)
    meta = _meta(args, cfg, mode=mode, lam=tcfg.lam, epochs=tcfg.epochs,
                 batch_size=tcfg.batch_size, lr=tcfg.lr,
                 train_acc=tr.evaluate(model, data))
    if test is not None:
        meta["test_acc"] = tr.evaluate(model, test)
    tr.save_checkpoint(model, os.path.join(args.out, "model.ini"))
    write_metadata(os.path.join(args.out, "train.meta"), meta)
    return files + ["train_log.csv", "model.ini", "train.meta"]


def cmd_reorder(args, cfg):
    path = args.matrix or cfg.get("reorder", "matrix")
    if not path:
        raise FormatError("reorder needs a matrix CSV (argument or [reorder] matrix)")
    C, labels = read_matrix_csv(path)
    if C.shape[0] != C.shape[1]:
        raise FormatError(f"{path}: matrix is {C.shape[0]}x{C.shape[1]}, expected square")
    perm = mc.reorder_neurons(C, absolute=cfg.bool("reorder", "absolute"))
    write_csv(os.path.join(args.out, "permutation.csv"), ["position", "neuron", "label"],
              [(i + 1, int(p) + 1, labels[p]) for i, p in enumerate(perm)])
    write_matrix_csv(os.path.join(args.out, "reordered.csv"), C[np.ix_(perm, perm)],
                     [labels[p] for p in perm])
    return ["permutation.csv", "reordered.csv"]


COMMANDS = {"simulate": cmd_simulate, "theory": cmd_theory, "clt": cmd_clt,
            "estimate": cmd_estimate, "train": cmd_train, "reorder": cmd_reorder}


def _defaults_help():
    lines = ["config sections and defaults:"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        lines += [f"    {k} = {v}" for k, v in keys.items()]
    return "\n".join(lines)


def build_parser():
    def common(suppress):
        c = argparse.ArgumentParser(add_help=False)
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        c.add_argument("--config", default=d(None),
                       help="INI config file (unknown keys are errors)")
        c.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
        c.add_argument("--out", default=d("out"), help="output directory (default ./out)")
        c.add_argument("--workers", type=int, default=d(1),
                       help="parallel workers for replicates/folds (default 1)")
        return c

    p = argparse.ArgumentParser(prog="gapclt", parents=[common(False)],
                                description="Pooled FCN output experiments.",
                                epilog=_defaults_help(),
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"simulate": "simulate a linear process to CSV",
             "theory": "closed-form one-layer correlations over a theta grid",
             "clt": "Monte Carlo check of the Gaussian limit of GAP outputs",
             "estimate": "Bartlett long-run covariance of network outputs",
             "train": "train an FCN classifier with GAP/WGAP pooling",
             "reorder": "greedy neuron ordering of a correlation matrix"}
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common(True)], help=helps[name],
                            epilog=_defaults_help(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "reorder":
            sp.add_argument("matrix", nargs="?", default=None, help="matrix CSV")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not hasattr(args, "matrix"):
        args.matrix = None
    try:
        if args.workers < 1:
            raise FormatError("--workers must be at least 1")
        cfg = Config(args.config)
        ensure_dir(args.out)
        files = COMMANDS[args.command](args, cfg)
        write_metadata(os.path.join(args.out, "manifest.txt"),
                       {"subcommand": args.command, "config": args.config or "",
                        "config_sha256": cfg.sha256(), "seed": args.seed,
                        "version": __version__, "artifacts": " ".join(files)})
    except (GapCltError, ValueError, OSError, MemoryError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
