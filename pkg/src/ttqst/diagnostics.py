"""Numerical checks of embedding, RIP and Monte Carlo moment facts.

Every check here is a pure function of its arguments and a master seed.
Monte Carlo comparisons report an estimate, a closed-form value and a
standard error, and pass when ``|estimate - closed_form| <= 3 * SE``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from ttqst.measurement import (
    MeasurementEnsemble,
    apply_linear_map,
    build_record,
    haar_ensemble,
    haar_unitary,
    make_ensemble,
    sample_counts,
)
from ttqst.seeding import make_rng, sub_seed
from ttqst.tt import (
    CapacityError,
    TensorTrain,
    contract_to_dense,
    mpo_to_matrix,
    mps_to_mpo,
    random_tt,
    random_unit_mps,
)

EMBEDDING_MAX_DIM = 1 << 12
RIP_MAX_DIM = 1 << 10
MOMENT_MAX_DIM = 1 << 10
SIGMAS = 3.0
_CHUNK = 10_000


# ---------------------------------------------------------------- embedding


@dataclass
class EmbeddingSweepResult:
    """Minimum ``||A^Q(rho)||_2`` over sampled unit-norm MPOs, per ``n``.

    ``minima[i, t]`` is the minimum found in trial ``t`` at ``n_values[i]``;
    ``min_norms`` averages it over trials. The reference is ``sqrt(QK) / d^n``,
    which is ``d^{-n/2}`` for a single complete POVM.
    """

    d: int
    r: int
    Q: int
    K: int | None
    field: str
    mpo_kind: str
    n_values: list[int]
    min_norms: np.ndarray
    reference: np.ndarray
    minima: np.ndarray
    trials: int
    samples_per_trial: int
    seed: int

    @property
    def ratios(self) -> np.ndarray:
        return self.min_norms / self.reference

    @property
    def stderr(self) -> np.ndarray:
        if self.trials < 2:
            return np.zeros(len(self.n_values))
        return self.minima.std(axis=1, ddof=1) / math.sqrt(self.trials)

    def rows(self) -> list[dict[str, Any]]:
        return [
            {
                "n": n,
                "mean_min_norm": float(self.min_norms[i]),
                "reference": float(self.reference[i]),
                "ratio": float(self.ratios[i]),
                "stderr": float(self.stderr[i]),
            }
            for i, n in enumerate(self.n_values)
        ]


def embedding_norm(ensembles: Sequence[MeasurementEnsemble], rho: TensorTrain | np.ndarray) -> float:
    """``||A^Q(rho)||_2`` for the stacked map of ``ensembles``."""
    return float(np.sqrt(sum(np.sum(np.abs(apply_linear_map(e, rho)) ** 2) for e in ensembles)))


def sample_unit_mpo(n: int, d: int, r: int, seed: int, field: str = "real", kind: str = "generic") -> TensorTrain:
    """Random unit-Frobenius-norm MPO with bond dimension ``r**2``.

    ``generic`` draws i.i.d. Gaussian cores over ``d**2``-dimensional modes at
    rank ``r**2``; ``lifted_mps`` returns ``u u^H`` for a random rank-``r``
    MPS ``u``.
    """
    if kind == "generic":
        return random_tt((d * d,) * n, r * r, seed, field)
    if kind == "lifted_mps":
        return mps_to_mpo(random_unit_mps(n, d, r, seed, field))
    raise ValueError(f"unknown MPO kind {kind!r}")


def embedding_trial(args: tuple) -> float:
    """Minimum embedding norm of one trial; ``args`` is ``(d, n, r, Q, K, samples, field, kind, seed)``."""
    d, n, r, Q, K, samples, field, kind, trial_seed = args
    D = d**n
    ensembles = [haar_ensemble(D, sub_seed(trial_seed, "ensemble", i), field, K) for i in range(Q)]
    best = math.inf
    for s in range(samples):
        rho = sample_unit_mpo(n, d, r, sub_seed(trial_seed, "mpo", s), field, kind)
        best = min(best, embedding_norm(ensembles, rho))
    return best


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def min_embedding_norm_sweep(
    d: int,
    r: int,
    n_range: Sequence[int],
    Q: int = 1,
    trials: int = 50,
    samples: int = 200,
    seed: int = 0,
    field: str = "real",
    mpo_kind: str = "generic",
    K: int | None = None,
    jobs: int = 1,
) -> EmbeddingSweepResult:
    """Average over trials of the minimum embedding norm among sampled MPOs.

    Each trial draws ``Q`` Haar ensembles and ``samples`` unit-norm MPOs (see
    :func:`sample_unit_mpo`). The minimum over samples only bounds the true
    infimum over the MPO set from above.

    Raises:
        CapacityError: ``d**n`` exceeds 4096 for some ``n``.
    """
    n_values = [int(n) for n in n_range]
    if not n_values or min(n_values) < 1:
        raise ValueError("n_range must contain positive site counts")
    if Q < 1 or trials < 1 or samples < 1:
        raise ValueError("Q, trials and samples must be positive")
    for n in n_values:
        if d**n > EMBEDDING_MAX_DIM:
            raise CapacityError(f"d^n = {d**n} exceeds the embedding guard {EMBEDDING_MAX_DIM}")
    tasks = [
        (d, n, r, Q, K, samples, field, mpo_kind, sub_seed(seed, f"embedding/n={n}", t))
        for n in n_values
        for t in range(trials)
    ]
    minima = np.array(_map(embedding_trial, tasks, jobs)).reshape(len(n_values), trials)
    ref = np.array([math.sqrt(Q * (K if K is not None else d**n)) / d**n for n in n_values])
    return EmbeddingSweepResult(
        d=d,
        r=r,
        Q=Q,
        K=K,
        field=field,
        mpo_kind=mpo_kind,
        n_values=n_values,
        min_norms=minima.mean(axis=1),
        reference=ref,
        minima=minima,
        trials=trials,
        samples_per_trial=samples,
        seed=seed,
    )


# ---------------------------------------------------------------- RIP


@dataclass
class RIPEstimate:
    """Empirical lower estimate of a RIP constant.

    ``deviations`` holds ``| ||A(rho)||^2 / K - 1 |`` per sampled unit MPO.
    """

    kind: str
    K: int
    delta_hat: float
    sample_count: int
    deviations: np.ndarray


def rip_deviation_estimate(
    d: int,
    n: int,
    r: int,
    K: int,
    samples: int,
    seed: int,
    kind: str = "gaussian_dense",
    field: str = "complex",
) -> RIPEstimate:
    """Largest deviation of ``||A(rho)||^2 / K`` from 1 over sampled MPOs.

    ``r`` is the MPO bond dimension of the sampled states; entries of the
    Gaussian ensemble have unit variance, so ``E||A(rho)||^2 = K`` for the
    dense kind.
    """
    if kind not in ("gaussian_dense", "gaussian_rank_one"):
        raise ValueError("RIP estimates use Gaussian ensembles")
    D = d**n
    if D > RIP_MAX_DIM:
        raise CapacityError(f"d^n = {D} exceeds the RIP guard {RIP_MAX_DIM}")
    if K < 1 or samples < 1:
        raise ValueError("K and samples must be positive")
    e = make_ensemble(kind, D, sub_seed(seed, "rip/ensemble"), field, K)
    devs = np.empty(samples)
    for s in range(samples):
        rho = random_tt((d * d,) * n, r, sub_seed(seed, "rip/mpo", s), field)
        y = apply_linear_map(e, rho)
        devs[s] = abs(float(np.sum(np.abs(y) ** 2)) / K - 1.0)
    return RIPEstimate(kind, K, float(devs.max()), samples, devs)


# ---------------------------------------------------------------- closed-form checks


@dataclass
class CheckResult:
    """One Monte Carlo estimate compared against a closed form.

    ``rule`` is ``"two_sided"`` (``|est - cf| <= 3 SE``) or ``"upper"``
    (``est <= cf + 3 SE``). ``se`` is floored at ``1e-12 * max(1, |cf|)`` so
    deterministic estimates compare at round-off scale.
    """

    name: str
    params: dict[str, Any]
    estimate: float
    closed_form: float
    se: float
    rule: str = "two_sided"
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        self.se = max(float(self.se), 1e-12 * max(1.0, abs(self.closed_form)))
        self.estimate = float(self.estimate)
        self.closed_form = float(self.closed_form)
        if self.rule == "two_sided":
            self.passed = abs(self.estimate - self.closed_form) <= SIGMAS * self.se
        elif self.rule == "upper":
            self.passed = self.estimate <= self.closed_form + SIGMAS * self.se
        else:
            raise ValueError(f"unknown rule {self.rule!r}")

    @property
    def z(self) -> float:
        return (self.estimate - self.closed_form) / self.se


@dataclass
class DiagnosticsReport:
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "params", "estimate", "closed_form", "se", "rule", "pass"])
        for c in self.checks:
            w.writerow(
                [c.name, json.dumps(c.params, sort_keys=True), repr(c.estimate), repr(c.closed_form), repr(c.se), c.rule, int(c.passed)]
            )
        return buf.getvalue()


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _chunks(total: int, size: int = _CHUNK):
    i = 0
    while i < total:
        yield i, min(size, total - i)
        i += size


def _haar_columns(D: int, trials: int, seed: int) -> np.ndarray:
    """First columns of ``trials`` independent complex Haar unitaries, ``(trials, D)``."""
    out = np.empty((trials, D), dtype=np.complex128)
    for j, (start, size) in enumerate(_chunks(trials)):
        out[start : start + size] = haar_unitary(D, "complex", sub_seed(seed, "haar_batch", j), count=size)[:, :, 0]
    return out


def _density(state: np.ndarray | TensorTrain, D: int) -> np.ndarray:
    if isinstance(state, TensorTrain):
        state = contract_to_dense(state) if state.size == D else mpo_to_matrix(state)
    state = np.asarray(state)
    if state.shape == (D,):
        return np.outer(state, state.conj())
    if state.shape == (D, D):
        return state
    raise ValueError(f"state shape {state.shape} does not match dimension {D}")


def second_moment_check(
    d: int,
    n: int,
    state: np.ndarray | TensorTrain,
    trials: int = 100_000,
    seed: int = 0,
    field: str = "complex",
    formula: str = "pure_state",
) -> CheckResult:
    """Monte Carlo ``E[p_k^2]`` over complex Haar POVMs.

    ``formula="pure_state"`` compares with
    ``1/D^2 + (D-1)/(D^2 (D+1)) ||rho||_F^2``, which is exact for pure states.
    ``formula="exact"`` uses ``(tr(rho)^2 + ||rho||_F^2) / (D (D+1))``, valid for
    every unit-trace state.

    Raises:
        ValueError: ``field`` is not complex or the state is not unit-trace
            Hermitian.
    """
    if field != "complex":
        raise ValueError("the second-moment formula holds for complex Haar measurements only")
    D = d**n
    if D > MOMENT_MAX_DIM:
        raise CapacityError(f"d^n = {D} exceeds the moment-check guard")
    rho = _density(state, D)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10 or abs(np.trace(rho) - 1) > 1e-10:
        raise ValueError("state must be a unit-trace Hermitian operator")
    phi = _haar_columns(D, trials, seed)
    p = np.einsum("ta,ab,tb->t", phi.conj(), rho, phi).real
    est, se = _mean_se(p**2)
    fro2 = float(np.sum(np.abs(rho) ** 2))
    if formula == "pure_state":
        cf = 1 / D**2 + (D - 1) / (D**2 * (D + 1)) * fro2
    elif formula == "exact":
        cf = (1.0 + fro2) / (D * (D + 1))
    else:
        raise ValueError(f"unknown formula {formula!r}")
    params = {"d": d, "n": n, "trials": trials, "seed": seed, "formula": formula, "frobenius_sq": fro2}
    return CheckResult("second_moment", params, est, cf, se)


def noise_energy_check(
    d: int,
    n: int,
    state: np.ndarray | TensorTrain | None,
    Q: int,
    M: int,
    trials: int = 100_000,
    seed: int = 0,
    field: str = "real",
    probabilities: np.ndarray | None = None,
) -> tuple[CheckResult, CheckResult]:
    """Mean shot-noise energy ``||p_hat - p||^2`` for fixed POVMs.

    The ``Q`` ensembles are drawn once from ``seed``; shots are resampled
    ``trials`` times. Returns the two-sided check against
    ``sum p (1-p) / M`` and the one-sided check against ``Q / M``. Passing
    ``probabilities`` (shape ``(Q, K)``) bypasses the state and ensembles.
    """
    if probabilities is None:
        if d**n > MOMENT_MAX_DIM:
            raise CapacityError(f"d^n = {d**n} exceeds the moment-check guard")
        rec = build_record(state, Q, None, field, sub_seed(seed, "noise/record"), dim=d**n)
        blocks = rec.blocks("population")
    else:
        blocks = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
        Q = blocks.shape[0]
    energy = np.zeros(trials)
    for i, p in enumerate(blocks):
        p = p / p.sum()
        rng = make_rng(sub_seed(seed, "noise/shots", i))
        for start, size in _chunks(trials):
            counts = sample_counts(p, M, rng, size=size)
            energy[start : start + size] += np.sum((counts / M - p) ** 2, axis=1)
    est, se = _mean_se(energy)
    cf = float(np.sum(blocks * (1 - blocks)) / M)
    params = {"d": d, "n": n, "Q": Q, "M": M, "trials": trials, "seed": seed}
    return (
        CheckResult("noise_energy", params, est, cf, se),
        CheckResult("noise_energy_bound", params, est, Q / M, se, rule="upper"),
    )


def haar_moment_closed_form(D: int, order: int) -> float:
    """``E|u_11|^{2 order} = order! / (D (D+1) ... (D+order-1))`` for complex Haar."""
    return math.factorial(order) / math.prod(range(D, D + order))


def haar_entry_moment_check(D: int, order_d: int, trials: int = 100_000, seed: int = 0) -> CheckResult:
    """Monte Carlo ``E|u_11|^{2 order_d}`` over complex Haar unitaries."""
    if order_d < 1:
        raise ValueError("order_d must be >= 1")
    u11 = _haar_columns(D, trials, seed)[:, 0]
    est, se = _mean_se(np.abs(u11) ** (2 * order_d))
    params = {"D": D, "order": order_d, "trials": trials, "seed": seed}
    return CheckResult("haar_entry_moment", params, est, haar_moment_closed_form(D, order_d), se)


def dkw_bound(M: int, epsilon: float) -> float:
    return min(1.0, 2.0 * math.exp(-M * epsilon**2 / 2.0))


def dkw_check(p: np.ndarray, M: int, epsilon: float, trials: int = 100_000, seed: int = 0) -> CheckResult:
    """Rate of ``max_k |p_hat_k - p_k| >= epsilon`` against ``2 exp(-M eps^2 / 2)``.

    The comparison is one-sided: the observed rate may sit anywhere below the
    bound.
    """
    p = np.asarray(p, dtype=np.float64)
    rng = make_rng(sub_seed(seed, "dkw"))
    hits = np.zeros(trials, dtype=bool)
    for start, size in _chunks(trials):
        counts = sample_counts(p, M, rng, size=size)
        hits[start : start + size] = np.max(np.abs(counts / M - p), axis=1) >= epsilon
    est, se = _mean_se(hits.astype(np.float64))
    params = {"K": int(p.size), "M": M, "epsilon": epsilon, "trials": trials, "seed": seed}
    return CheckResult("dkw", params, est, dkw_bound(M, epsilon), se, rule="upper")


def closed_form_suite(samples: int = 100_000, seed: int = 0) -> DiagnosticsReport:
    """Run every closed-form Monte Carlo check at ``samples`` draws each."""
    report = DiagnosticsReport()
    for n in (1, 2, 3):
        psi = random_unit_mps(n, 2, 2, sub_seed(seed, "suite/state", n), field="complex").to_dense()
        report.add(second_moment_check(2, n, psi, samples, sub_seed(seed, "suite/second_moment", n)))
    for D in (2, 4, 8):
        for order in (1, 2, 3):
            report.add(haar_entry_moment_check(D, order, samples, sub_seed(seed, f"suite/haar/{D}", order)))
    D = 16
    mixed = np.eye(D) / D
    pure = random_unit_mps(4, 2, 2, sub_seed(seed, "suite/noise_state")).to_dense()
    for label, state, Q in (("uniform", mixed, 1), ("pure", pure, 2)):
        for c in noise_energy_check(2, 4, state, Q, 100, samples, sub_seed(seed, f"suite/noise/{label}")):
            c.params["state"] = label
            report.add(c)
    uniform8 = np.full(8, 1 / 8)
    for eps in (0.2, 0.1):
        report.add(dkw_check(uniform8, 500, eps, samples, sub_seed(seed, "suite/dkw", int(eps * 100))))
    return report
