"""Release acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL/SKIP line that is printed in the terminal
summary. Criterion 4 needs the MNIST IDX files in ``$CLAW_DATA_DIR``;
criterion 5 is long-running and only runs with ``CLAW_FULL_REPRO=1``.
"""

import itertools
import math
import os
import struct
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from claw import tensor as T
from claw.adaptive import (ELOG_EPS, AdaptiveVariationalLayer, gaussian_kl, kl_to_logscale_prior,
                           sample_forward)
from claw.config import DATA_DIR_ENV, from_mapping
from claw.coreset import coverage_radius, kcenter_coreset
from claw.data import load_idx
from claw.metrics import avg_accuracy_curve, paired_ttest, retention_curve
from claw.runner import run_all, run_experiment
from claw.tensor import Tensor
from claw.models import ClawModel
from claw.trainers import elbo

from helpers import numeric_grad, record, rel_err

pytestmark = pytest.mark.acceptance


def _seed_means(runs):
    by = {}
    for r in runs:
        by.setdefault(r.method, []).append((retention_curve(r.grid)[-1], avg_accuracy_curve(r.grid)[-1]))
    return {m: tuple(np.mean(v, axis=0)) for m, v in by.items()}, by


# --- 1 --------------------------------------------------------------------

def _op_gradchecks():
    rng = np.random.default_rng(0)
    worst = 0.0
    cases = {
        "add": lambda a, b: T.add(a, b), "sub": lambda a, b: T.sub(a, b),
        "mul": lambda a, b: T.mul(a, b), "div": lambda a, b: T.div(a, b),
        "matmul": lambda a, b: T.matmul(a, b),
    }
    for name, fn in cases.items():
        a = rng.normal(size=(3, 3))
        b = rng.uniform(0.5, 2.0, size=(3, 3))
        w = rng.normal(size=(3, 3))
        at, bt = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        T.sum(T.mul(fn(at, bt), w)).backward()
        f = lambda: float(np.sum(fn(Tensor(a), Tensor(b)).data * w))  # noqa: E731
        worst = max(worst, rel_err(at.grad, numeric_grad(f, a)), rel_err(bt.grad, numeric_grad(f, b)))
    unary = ["relu", "sigmoid", "log", "exp", "sqrt", "neg", "softplus", "square", "sum", "mean"]
    for name in unary:
        x = rng.uniform(0.2, 2.0, size=(3, 4)) if name in ("log", "sqrt") else rng.normal(size=(3, 4))
        if name == "relu":
            x[np.abs(x) < 1e-3] = 0.5
        op = {"softplus": T.softplus, "square": T.square, "sum": lambda t: T.sum(t, axis=0),
              "mean": lambda t: T.mean(t, axis=1)}.get(name, lambda t, k=name: T.elementwise(k, t))
        xt = Tensor(x, requires_grad=True)
        out = op(xt)
        w = rng.normal(size=out.shape)
        T.sum(T.mul(out, w)).backward()
        worst = max(worst, rel_err(xt.grad, numeric_grad(lambda: float(np.sum(op(Tensor(x)).data * w)), x)))
    z, y = rng.normal(size=(4, 3)), np.array([0, 2, 1, 1])
    zt = Tensor(z, requires_grad=True)
    T.softmax_cross_entropy(zt, y).backward()
    worst = max(worst, rel_err(zt.grad, numeric_grad(lambda: T.softmax_cross_entropy(z, y).item(), z)))
    return worst


def _claw_loss_gradcheck():
    """Every parameter of a 2-neuron CLAW net against central differences of the full minibatch loss."""
    rng = np.random.default_rng(1)
    model = ClawModel(3, [2], 2, "single", seed=0)
    for layer in model.path(0):
        layer.a.data[...] = rng.normal(size=layer.n_out)
        layer.s.data[...] = rng.uniform(1.5, 3.0, layer.n_out)
        layer.p.data[...] = rng.uniform(0.2, 0.8, layer.n_out)
        layer.bias_gamma.data[...] = rng.normal(size=layer.n_out)
    x, y = rng.normal(size=(6, 3)), rng.integers(0, 2, 6)
    eps = [[rng.standard_normal(l.n_out) for l in model.path(0)]]
    loss = lambda: elbo(model, x, y, 0, None, 60, 1, eps=eps)  # noqa: E731
    loss().backward()
    worst = 0.0
    for layer in model.path(0):
        for t in layer.parameters().values():
            worst = max(worst, rel_err(t.grad, numeric_grad(lambda: loss().item(), t.data)))
    return worst


def test_criterion_1_numerical_core():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    mm = 0.0
    for m, k, n in [(4, 5, 3), (16, 16, 16), (1, 7, 9)]:
        A, B = rng.normal(size=(m, k)), rng.normal(size=(k, n))
        ref = np.array([[sum(A[i, r] * B[r, j] for r in range(k)) for j in range(n)] for i in range(m)])
        mm = max(mm, float(np.max(np.abs(T.matmul(A, B).data - ref))))
    grad = max(_op_gradchecks(), _claw_loss_gradcheck())
    elapsed = time.perf_counter() - t0
    ok = grad < 1e-4 and mm < 1e-12 and elapsed < 30
    record(1, ok, f"max grad rel err {grad:.2e} (<1e-4), matmul err {mm:.1e} (<1e-12), {elapsed:.1f}s (<30s)")
    assert ok


# --- 2 --------------------------------------------------------------------

def test_criterion_2_claw_math():
    t0 = time.perf_counter()
    quad, _ = integrate.quad(lambda x: stats.norm.pdf(x) * math.log(x), 0, 40, limit=200)
    elog_err = abs(ELOG_EPS - 2 * quad)

    rng = np.random.default_rng(3)
    layer = AdaptiveVariationalLayer(3, 4, "identity", rng)
    layer.p.data[...] = rng.uniform(0.1, 0.9, 4)
    layer.a.data[...] = rng.normal(size=4)
    layer.s.data[...] = rng.uniform(1.5, 4.0, 4)
    kl_to_logscale_prior(layer).backward()
    kl_grad = max(rel_err(getattr(layer, k).grad,
                          numeric_grad(lambda: kl_to_logscale_prior(layer).item(), getattr(layer, k).data))
                  for k in ("p", "a", "s"))

    mc_worst = 0.0
    for _ in range(10):
        mq, mp = rng.uniform(-1, 1, 2)
        vq, vp = rng.uniform(0.25, 4.0, 2)
        exact = gaussian_kl(Tensor(np.array([mq])), Tensor(np.array([vq])), np.array([mp]), np.array([vp])).item()
        w = mq + math.sqrt(vq) * rng.standard_normal(10**6)
        mc = np.mean(stats.norm.logpdf(w, mq, math.sqrt(vq)) - stats.norm.logpdf(w, mp, math.sqrt(vp)))
        mc_worst = max(mc_worst, abs(exact - mc))

    fresh = AdaptiveVariationalLayer(5, 3, "relu", np.random.default_rng(4))
    x = rng.normal(size=(8, 5))
    dense = np.maximum(x @ fresh.gamma.data + fresh.bias_gamma.data, 0)
    neutral = all(np.array_equal(sample_forward(fresh, x, rng.normal(size=3)).data, dense) for _ in range(5))

    one = AdaptiveVariationalLayer(1, 1, "identity")
    one.gamma.data[...], one.p.data[...], one.a.data[...], one.s.data[...] = 1.0, 0.3, 0.8, 3.0
    n = 10**4
    out = sample_forward(one, np.ones((n, 1)), rng.standard_normal((n, 1))).data[:, 0]
    b = 3.0 / (1 + math.exp(-0.8)) - 1
    mean, var = 1 + 0.3 * b, b * b * 0.21
    z_mean = abs(out.mean() - mean) / math.sqrt(var / n)
    z_var = abs(out.var(ddof=1) - var) / (var * math.sqrt(2 / (n - 1)))
    elapsed = time.perf_counter() - t0

    ok = (elog_err < 1e-4 and kl_grad < 1e-6 and mc_worst < 1e-2 and neutral
          and z_mean < 4 and z_var < 4 and elapsed < 120)
    record(2, ok, f"ELOG err {elog_err:.1e}, KL grad rel err {kl_grad:.1e}, MC KL err {mc_worst:.1e}, "
                  f"neutral {'exact' if neutral else 'BROKEN'}, moments {z_mean:.1f}/{z_var:.1f} sigma, {elapsed:.0f}s")
    assert ok


# --- 3 and 6 --------------------------------------------------------------

SYNTH = {"benchmark": "split-synthetic", "seeds": [0, 1, 2], "plots": False}


@pytest.fixture(scope="module")
def synthetic_runs():
    t0 = time.perf_counter()
    runs = run_all(from_mapping({**SYNTH, "method": ["claw", "finetune"]}))
    return runs, time.perf_counter() - t0


def test_criterion_3_forgetting(synthetic_runs):
    runs, elapsed = synthetic_runs
    means, per_seed = _seed_means(runs)
    (c_ret, c_avg), (f_ret, f_avg) = means["claw"], means["finetune"]
    ok = f_ret < 0.70 and c_ret >= 0.90 and c_avg - f_avg >= 0.10 and elapsed < 600
    record(3, ok, f"3-seed means: finetune retention {f_ret:.3f} (<0.70), claw retention {c_ret:.3f} (>=0.90), "
                  f"avg@5 claw {c_avg:.3f} vs finetune {f_avg:.3f} (gap {c_avg - f_avg:+.3f}, >=0.10), {elapsed:.0f}s")
    # the harness-level direction holds seed by seed as well
    assert all(c[0] > f[0] for c, f in zip(per_seed["claw"], per_seed["finetune"]))
    assert ok


def test_criterion_6_ablation_direction(synthetic_runs):
    runs, _ = synthetic_runs
    claw = _seed_means(runs)[0]["claw"][1]
    ablated = {}
    for mode in ("never_adapt", "fixed_s"):
        ablated[mode] = _seed_means(run_all(from_mapping({**SYNTH, "method": "claw", "ablation": mode})))[0]
        ablated[mode] = ablated[mode][f"claw-{mode}"][1]
    ok = claw >= ablated["never_adapt"] and claw >= ablated["fixed_s"]
    record(6, ok, f"3-seed avg@5: claw {claw:.4f}, never_adapt {ablated['never_adapt']:.4f}, "
                  f"fixed_s {ablated['fixed_s']:.4f}")
    assert ok


# --- 4 and 5 --------------------------------------------------------------

def _mnist_dir():
    d = os.environ.get(DATA_DIR_ENV)
    if d and any((Path(d) / f"t10k-labels-idx1-ubyte{ext}").exists() for ext in ("", ".gz")):
        return d
    return None


def test_criterion_4_split_mnist_desk():
    data = _mnist_dir()
    if data is None:
        record(4, False, f"MNIST IDX files not found; set {DATA_DIR_ENV} to a directory holding them")
        pytest.fail(f"criterion 4 needs the MNIST IDX files in ${DATA_DIR_ENV}")
    t0 = time.perf_counter()
    cfg = from_mapping({"method": ["claw", "vcl"], "benchmark": "split-mnist", "data_dir": data,
                        "seeds": [0, 1, 2], "subset_per_task": 2000, "subset_test": 500, "plots": False})
    means, _ = _seed_means(run_all(cfg))
    elapsed = time.perf_counter() - t0
    c, v = means["claw"][1], means["vcl"][1]
    ok = c >= 0.95 and c >= v - 0.005 and elapsed < 1800
    record(4, ok, f"avg@5 claw {c:.4f} (>=0.95), vcl {v:.4f} (claw >= vcl - 0.005), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_full_scale():
    data = _mnist_dir()
    if os.environ.get("CLAW_FULL_REPRO") != "1" or data is None:
        record(5, None, "long-running, not CI-gated; set CLAW_FULL_REPRO=1 and provide MNIST to run")
        pytest.skip("full-scale reproduction is opt-in")
    seeds = list(range(10))
    split = _seed_means(run_all(from_mapping({"method": "claw", "benchmark": "split-mnist", "data_dir": data,
                                              "seeds": seeds, "plots": False})))[0]["claw"][1]
    perm = _seed_means(run_all(from_mapping({"method": ["claw", "ewc"], "benchmark": "permuted-mnist",
                                             "data_dir": data, "seeds": seeds, "plots": False})))[0]
    gap = perm["claw"][1] - perm["ewc"][1]
    ok = abs(split - 0.991) <= 0.015 and gap >= 0.03
    record(5, ok, f"split-mnist claw {split:.4f} (0.991 +/- 0.015), permuted claw - ewc {gap:+.4f} (>= 0.03)")
    assert ok


# --- 7 --------------------------------------------------------------------

def test_criterion_7_harness_contracts(tmp_path):
    rng = np.random.default_rng(5)
    kc_ok = True
    for _ in range(10):
        X = rng.normal(size=(20, 2))
        opt = min(coverage_radius(X, c) for c in itertools.combinations(range(20), 3))
        kc_ok &= coverage_radius(X, kcenter_coreset(X, 3)) <= 2 * opt + 1e-12

    a = [0.991, 0.987, 0.993, 0.989, 0.990, 0.992, 0.988, 0.994, 0.986, 0.990]
    b = [0.970, 0.975, 0.968, 0.972, 0.969, 0.974, 0.971, 0.966, 0.973, 0.970]
    res = paired_ttest(a, b)
    t_err = abs(res.t_stat - 12.291540473558014)
    # the 5% two-tailed critical value for 9 dof from the t table
    d = np.array([1.0, -1.0] * 5)
    d = d / d.std(ddof=1) + 2.262157 / np.sqrt(10)
    table_err = abs(paired_ttest(d, np.zeros(10)).p_value - 0.05)

    (tmp_path / "img").write_bytes(struct.pack(">IIII", 0x00000803, 10000, 28, 28) + bytes(10000 * 784))
    (tmp_path / "lab").write_bytes(struct.pack(">II", 0x00000801, 10000) + bytes(range(10)) * 1000)
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    idx_ok = (len(ds), ds.dim) == (10000, 784)

    cfg = {"method": ["claw", "finetune"], "benchmark": "split-synthetic", "seeds": [0, 1], "n_tasks": 3,
           "epochs": 2, "plots": False}
    first = run_experiment(from_mapping({**cfg, "out_dir": str(tmp_path / "a")}))
    second = run_experiment(from_mapping({**cfg, "out_dir": str(tmp_path / "b")}))
    same = (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()

    ok = kc_ok and t_err < 1e-6 and table_err < 1e-6 and idx_ok and same
    record(7, ok, f"k-center 2-approx {'ok' if kc_ok else 'VIOLATED'}, t-stat err {t_err:.1e}, "
                  f"table p err {table_err:.1e}, IDX header {'ok' if idx_ok else 'BAD'}, "
                  f"reruns {'byte-identical' if same else 'DIFFER'}")
    assert ok
