"""Acceptance suite: each criterion runs at its stated size and tolerance.

Every check prints one ``ACCEPTANCE <label>: PASS|FAIL`` line, and the
terminal summary repeats them all. Runtime budgets are measured on the
machine running the suite.
"""

from __future__ import annotations

import csv
import json
import time

import numpy as np
import pytest

from oracles import dense_direction, dense_loss, dense_projection
from ttqst.diagnostics import closed_form_suite
from ttqst.harness import ExperimentConfig, run
from ttqst.measurement import build_record, haar_ensemble, population_probabilities
from ttqst.recovery import IHTConfig, gradient, iht_run, initialize_near, loss
from ttqst.tt import (
    TensorTrain,
    contract_to_dense,
    left_canonicalize,
    matrix_to_mpo,
    max_ranks,
    mps_to_mpo,
    random_unit_mps,
    tt_svd,
)

pytestmark = pytest.mark.acceptance

EMBEDDING = dict(
    experiment="embedding_sweep", d=2, n_range=list(range(2, 11)), r=[2], Q=1,
    trials=50, samples=200, field="real", mpo_kind="lifted_mps", master_seed=0,
)
RECOVERY = dict(
    experiment="recovery_sweep", d=2, n_range=[4, 6, 8], r=[2], M_values=[250, 1000, 4000],
    trials=10, master_seed=0, solver={"init_lambda": 0.7},
    # improvement factor frozen from the pilot run
    thresholds={"improvement_factor": 2.0},
)
DIAGNOSTICS = dict(experiment="diagnostics", samples=100_000, master_seed=0)


def gaussian_cores(n, d, r, rng, field="real"):
    ranks = max_ranks((d,) * n, r)
    cores = []
    for k in range(n):
        shape = (ranks[k], d, ranks[k + 1])
        c = rng.standard_normal(shape)
        if field == "complex":
            c = c + 1j * rng.standard_normal(shape)
        cores.append(c)
    return TensorTrain(tuple(cores))


def timed_run(cfg: dict, out):
    start = time.perf_counter()
    outcome = run(ExperimentConfig.from_dict({**cfg, "output_dir": str(out)}))
    return outcome, time.perf_counter() - start


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def embedding_run(tmp_path_factory):
    return timed_run(EMBEDDING, tmp_path_factory.mktemp("embedding"))


@pytest.fixture(scope="module")
def recovery_run(tmp_path_factory):
    return timed_run(RECOVERY, tmp_path_factory.mktemp("recovery"))


@pytest.fixture(scope="module")
def diagnostics_run(tmp_path_factory):
    return timed_run(DIAGNOSTICS, tmp_path_factory.mktemp("diagnostics"))


def test_1_tt_round_trip(criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    start = time.perf_counter()
    for case in range(100):
        n, r = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        field = "complex" if case % 2 else "real"
        t = contract_to_dense(gaussian_cores(n, 2, r, rng, field))
        back = contract_to_dense(tt_svd(t, (2,) * n, max_rank=r))
        worst = max(worst, np.linalg.norm(back - t) / np.linalg.norm(t))
    elapsed = time.perf_counter() - start
    ok_err = criterion("1 tt round trip error", worst <= 1e-10, f"max rel error {worst:.2e} (<= 1e-10)")
    ok_time = criterion("1 tt round trip runtime", elapsed < 10, f"{elapsed:.2f} s (< 10 s)")
    assert ok_err and ok_time


def test_2_canonical_invariant(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for case in range(100):
        n, r = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        d = int(rng.integers(2, 4))
        t = gaussian_cores(n, d, r, rng, "complex" if case % 2 else "real")
        out = left_canonicalize(t)
        for core in out.cores[:-1]:
            left = core.reshape(-1, core.shape[2])
            gram = left.conj().T @ left
            worst = max(worst, float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
        np.testing.assert_allclose(contract_to_dense(out), contract_to_dense(t), rtol=1e-10, atol=1e-10)
    assert criterion("2 canonical invariant", worst <= 1e-10, f"max |L^H L - I| {worst:.2e} (<= 1e-10)")


def test_3_closure_and_simplex(criterion):
    worst_closure, worst_sum = 0.0, 0.0
    for n in range(1, 11):
        D = 2**n
        states = [
            random_unit_mps(n, 2, 2, n),
            contract_to_dense(random_unit_mps(n, 2, 3, n + 50, "complex")),
        ]
        mps = random_unit_mps(n, 2, 2, n + 100, "complex")
        states.append(mps_to_mpo(mps))
        if D <= 64:
            g = np.random.default_rng(n).standard_normal((D, D))
            rho = g @ g.T
            states.append(matrix_to_mpo(rho / np.trace(rho), (2,) * n))
        for field in ("real", "complex"):
            for seed in range(3):
                e = haar_ensemble(D, seed, field=field)
                phi = e.vectors
                worst_closure = max(worst_closure, float(np.max(np.abs(phi.conj().T @ phi - np.eye(D)))))
                for s in states:
                    worst_sum = max(worst_sum, abs(float(np.sum(population_probabilities(e, s))) - 1.0))
            rec = build_record(states[0], 3, 100, field=field, seed=n)
            for which in ("population", "empirical"):
                worst_sum = max(worst_sum, float(np.max(np.abs(rec.blocks(which).sum(axis=1) - 1.0))))
    ok_c = criterion("3 haar closure", worst_closure <= 1e-12, f"max |Phi^H Phi - I| {worst_closure:.2e} (<= 1e-12)")
    ok_s = criterion("3 block sums", worst_sum <= 1e-12, f"max |sum - 1| {worst_sum:.2e} (<= 1e-12)")
    assert ok_c and ok_s


def test_4_embedding_band(embedding_run, criterion):
    outcome, _ = embedding_run
    rows = read_csv(outcome.output_dir / "embedding_summary.csv")
    ratios = {int(r["n"]): float(r["ratio"]) for r in rows}
    assert sorted(ratios) == list(range(2, 11))
    outside = {n: round(v, 3) for n, v in ratios.items() if not 0.5 <= v <= 1.5}
    detail = "ratios " + ", ".join(f"n={n}:{v:.3f}" for n, v in ratios.items())
    assert criterion("4 embedding ratio band [0.5, 1.5]", not outside, f"{detail}; outside {outside}")


def test_4_embedding_trend(embedding_run, criterion):
    outcome, _ = embedding_run
    rows = read_csv(outcome.output_dir / "embedding_summary.csv")
    ratios = {int(r["n"]): float(r["ratio"]) for r in rows}
    gap10, gap4 = abs(ratios[10] - 1), abs(ratios[4] - 1)
    assert criterion("4 embedding approaches reference", gap10 < gap4, f"|r10-1|={gap10:.3f} vs |r4-1|={gap4:.3f}")


def test_4_embedding_runtime(embedding_run, criterion):
    outcome, elapsed = embedding_run
    assert outcome.failures == []
    assert criterion("4 embedding runtime", elapsed <= 600, f"{elapsed:.0f} s (<= 600 s)")


def test_5_closed_form_suite(criterion):
    start = time.perf_counter()
    report = closed_form_suite(samples=100_000, seed=0)
    elapsed = time.perf_counter() - start
    for c in report.checks:
        criterion(
            f"5 {c.name} {json.dumps(c.params, sort_keys=True)}",
            c.passed,
            f"estimate={c.estimate:.6g} closed_form={c.closed_form:.6g} se={c.se:.3g} rule={c.rule}",
        )
    names = {c.name for c in report.checks}
    assert names >= {"second_moment", "haar_entry_moment", "noise_energy", "dkw"}
    ok_time = criterion("5 closed-form runtime", elapsed <= 300, f"{elapsed:.1f} s (<= 300 s)")
    assert report.passed and ok_time


def test_6_finite_differences(criterion):
    worst = 0.0
    h = 1e-5
    for case in range(20):
        n = 3 if case < 10 else 4
        rng = np.random.default_rng(600 + case)
        u_star = contract_to_dense(random_unit_mps(n, 2, 2, case))
        rec = build_record(u_star, 1 + case % 2, 100 * (1 + case % 3), seed=case)
        u = rng.standard_normal(2**n)
        u /= np.linalg.norm(u)
        fd = np.array([(loss(u + h * e, rec) - loss(u - h * e, rec)) / (2 * h) for e in np.eye(u.size)])
        worst = max(worst, float(np.max(np.abs(gradient(u, rec) - fd)) / np.max(np.abs(fd))))
    assert criterion("6 gradient finite differences", worst <= 1e-6, f"max rel error {worst:.2e} (<= 1e-6)")


def test_7_dense_oracle(criterion):
    worst = 0.0
    for n, r in [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)]:
        u_star = contract_to_dense(random_unit_mps(n, 2, min(r, 2), 700 + n))
        rec = build_record(u_star, 1, 500, seed=n * 10 + r)
        init = initialize_near(u_star, 0.7, n + r)
        cfg = IHTConfig(max_rank=r, max_iters=50, stop_tol=0.0, keep_iterates=True)
        res = iht_run(rec, cfg, init)
        assert res.iterations_run == 50
        mu = 0.01 * 2**n
        v = init.copy()
        for t in range(1, 51):
            g_dense = dense_direction(v, rec.vectors, rec.empirical)
            worst = max(worst, float(np.max(np.abs(gradient(v, rec) - 2 * g_dense))))
            v = dense_projection(v - mu * g_dense, n, r)
            worst = max(worst, float(np.max(np.abs(res.iterates[t] - v))))
            worst = max(worst, abs(res.loss_curve[t] - dense_loss(v, rec.vectors, rec.empirical)))
    assert criterion("7 dense oracle over 50 steps", worst <= 1e-9, f"max deviation {worst:.2e} (<= 1e-9)")


def _summary(outcome):
    rows = read_csv(outcome.output_dir / "recovery_summary.csv")
    return {(int(r["n"]), int(r["M"])): r for r in rows}


def test_8a_final_below_initial(recovery_run, criterion):
    s = _summary(recovery_run[0])
    parts, ok = [], True
    for n in (4, 6, 8):
        row = s[(n, 1000)]
        ini, fin = float(row["mean_initial_distance"]), float(row["mean_final_distance"])
        ok &= fin < ini
        parts.append(f"n={n}: {ini:.4f} -> {fin:.4f}")
    assert criterion("8a final < initial (M=1000)", ok, "; ".join(parts))


def test_8a_improvement_factor(recovery_run, criterion):
    outcome = recovery_run[0]
    manifest = json.loads((outcome.output_dir / "manifest.json").read_text())
    factor = manifest["config"]["thresholds"]["improvement_factor"]
    s = _summary(outcome)
    parts, ok = [], True
    for n in (4, 6, 8):
        row = s[(n, 1000)]
        ratio = float(row["mean_initial_distance"]) / float(row["mean_final_distance"])
        ok &= ratio >= factor
        parts.append(f"n={n}: {ratio:.2f}")
    assert criterion(f"8a improvement factor >= {factor}", ok, "; ".join(parts))


def test_8b_more_shots_help(recovery_run, criterion):
    s = _summary(recovery_run[0])
    lo, hi = float(s[(8, 250)]["mean_final_distance"]), float(s[(8, 4000)]["mean_final_distance"])
    assert criterion("8b n=8 final(M=4000) <= final(M=250)", hi <= lo, f"{hi:.4f} vs {lo:.4f}")


def test_8c_nondecreasing_in_n(recovery_run, criterion):
    s = _summary(recovery_run[0])
    finals = [float(s[(n, 1000)]["mean_final_distance"]) for n in (4, 6, 8)]
    ok = all(a <= b for a, b in zip(finals, finals[1:]))
    detail = ", ".join(f"n={n}:{f:.4f}" for n, f in zip((4, 6, 8), finals))
    assert criterion("8c final distance nondecreasing in n (M=1000)", ok, detail)


def test_8_runtime(recovery_run, criterion):
    outcome, elapsed = recovery_run
    assert outcome.failures == []
    assert criterion("8 recovery runtime", elapsed <= 1800, f"{elapsed:.0f} s (<= 1800 s)")


@pytest.mark.parametrize(
    "name,cfg,fixture",
    [
        ("embedding", EMBEDDING, "embedding_run"),
        ("recovery", RECOVERY, "recovery_run"),
        ("diagnostics", DIAGNOSTICS, "diagnostics_run"),
    ],
)
def test_9_determinism(name, cfg, fixture, request, tmp_path, criterion):
    first = request.getfixturevalue(fixture)[0].output_dir
    second = timed_run(cfg, tmp_path / "again")[0].output_dir
    csvs = sorted(p.name for p in first.glob("*.csv"))
    same = all((first / f).read_bytes() == (second / f).read_bytes() for f in csvs)
    assert csvs
    assert criterion(f"9 determinism {name}", same, f"compared {', '.join(csvs)}")
