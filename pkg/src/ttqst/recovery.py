"""Projected gradient (IHT) recovery of a real MPS from rank-one measurements.

The solver variable is a dense real vector ``u`` of length ``D = d**n``; after
every gradient step it is projected back onto MPS of bounded rank by a TT-SVD
sweep. Losses and distances are recorded each iteration.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ttqst.measurement import MeasurementRecord, RANK_ONE_KINDS
from ttqst.seeding import make_rng, sub_seed
from ttqst.tt import TensorTrain, contract_to_dense, tt_svd, tt_to_dict

_LOSS_FLOOR = 1e-30


class DivergenceError(RuntimeError):
    """Raised when the IHT loss becomes non-finite or blows up."""

    def __init__(self, iteration: int, loss: float, initial_loss: float):
        self.iteration = iteration
        self.loss = loss
        self.initial_loss = initial_loss
        super().__init__(f"IHT diverged at iterate {iteration}: loss {loss!r} (initial {initial_loss!r})")


@dataclass(frozen=True)
class IHTConfig:
    """Solver settings.

    ``step_size=None`` means ``0.01 * D``. ``stop_tol`` bounds the relative
    loss change between consecutive iterates. ``halve_on_increase`` is a
    diagnostic mode that halves the step and retries whenever the loss goes up.
    """

    max_rank: int = 2
    step_size: float | None = None
    max_iters: int = 5000
    stop_tol: float = 1e-9
    seed: int = 0
    init_lambda: float = 0.7
    local_dim: int = 2
    renormalize: bool = False
    halve_on_increase: bool = False
    divergence_factor: float = 1e6
    keep_iterates: bool = False

    def __post_init__(self) -> None:
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.init_lambda < 0:
            raise ValueError("init_lambda must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.local_dim < 2:
            raise ValueError("local_dim must be >= 2")

    def resolved_step(self, D: int) -> float:
        return 0.01 * D if self.step_size is None else float(self.step_size)


@dataclass
class RecoveryResult:
    final_state: TensorTrain
    final_vector: np.ndarray
    loss_curve: list[float]
    distance_curve: list[float]
    iterations_run: int
    converged: bool
    step_size: float
    config: IHTConfig
    iterates: list[np.ndarray] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "loss_curve": list(self.loss_curve),
            "distance_curve": list(self.distance_curve),
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "step_size": self.step_size,
            "config": dataclasses.asdict(self.config),
            "final_state": tt_to_dict(self.final_state),
        }


def _measurement_matrix(record: MeasurementRecord) -> np.ndarray:
    if any(e.kind not in RANK_ONE_KINDS for e in record.ensembles):
        raise ValueError("the MPS loss needs rank-one measurements")
    if record.field != "real":
        raise ValueError("the solver works with real measurement vectors")
    return record.vectors


def loss(u: np.ndarray, record: MeasurementRecord) -> float:
    """``0.5 * sum_i (|phi_i^T u|^2 - p_hat_i)^2``."""
    phi = _measurement_matrix(record)
    resid = (phi.T @ u) ** 2 - record.empirical
    return 0.5 * float(resid @ resid)


def _residual_direction(u: np.ndarray, phi: np.ndarray, p_hat: np.ndarray) -> tuple[np.ndarray, float]:
    # returns sum_i (|phi_i^T u|^2 - p_hat_i) phi_i phi_i^T u and the loss
    proj = phi.T @ u
    resid = proj**2 - p_hat
    return phi @ (resid * proj), 0.5 * float(resid @ resid)


def gradient(u: np.ndarray, record: MeasurementRecord) -> np.ndarray:
    """Exact gradient of :func:`loss`, ``2 * sum_i (|phi_i^T u|^2 - p_hat_i) phi_i phi_i^T u``."""
    direction, _ = _residual_direction(np.asarray(u, dtype=np.float64), _measurement_matrix(record), record.empirical)
    return 2.0 * direction


def recovery_distance(u_hat: np.ndarray, u_star: np.ndarray) -> float:
    """Sign-invariant squared distance ``min(|u_hat - u*|^2, |u_hat + u*|^2)``."""
    u_hat = np.asarray(u_hat)
    u_star = np.asarray(u_star)
    if u_hat.shape != u_star.shape:
        raise ValueError("vectors must have matching shapes")
    return float(min(np.sum(np.abs(u_hat - u_star) ** 2), np.sum(np.abs(u_hat + u_star) ** 2)))


def initialize_near(u_star: np.ndarray, lam: float, seed: int) -> np.ndarray:
    """``(u* + lam v) / |u* + lam v|`` with ``v`` uniform on the unit sphere.

    If the sum nearly cancels (norm below 1e-12), ``v`` is redrawn from the
    next sub-seed of ``seed``.
    """
    u_star = np.asarray(u_star, dtype=np.float64)
    if abs(np.linalg.norm(u_star) - 1.0) > 1e-10:
        raise ValueError("u_star must have unit norm")
    if lam == 0:
        return u_star.copy()
    attempt = 0
    while True:
        rng = make_rng(seed if attempt == 0 else sub_seed(seed, "initialize_near/retry", attempt))
        v = rng.standard_normal(u_star.size)
        v /= np.linalg.norm(v)
        w = u_star + lam * v
        nrm = np.linalg.norm(w)
        if nrm >= 1e-12:
            return w / nrm
        attempt += 1


def project(u: np.ndarray, mode_dims: tuple[int, ...], max_rank: int) -> tuple[np.ndarray, TensorTrain]:
    """Approximate projection onto MPS of rank ``max_rank`` via TT-SVD."""
    t = tt_svd(u, mode_dims, max_rank=max_rank)
    return contract_to_dense(t), t


def _mode_dims(D: int, d: int) -> tuple[int, ...]:
    n = round(math.log(D, d))
    if d**n != D:
        raise ValueError(f"dimension {D} is not a power of the local dimension {d}")
    return (d,) * n


def iht_step(
    u: np.ndarray, record: MeasurementRecord, step: float, mode_dims: tuple[int, ...], max_rank: int
) -> np.ndarray:
    """One update ``P(u - step * sum_i (|phi_i^T u|^2 - p_hat_i) phi_i phi_i^T u)``."""
    direction, _ = _residual_direction(u, _measurement_matrix(record), record.empirical)
    return project(u - step * direction, mode_dims, max_rank)[0]


def iht_run(
    record: MeasurementRecord,
    cfg: IHTConfig,
    init: np.ndarray,
    truth: np.ndarray | None = None,
) -> RecoveryResult:
    """Run iterative hard thresholding from ``init``.

    The update direction is the residual-weighted sum of rank-one terms (half
    the exact gradient), scaled by ``cfg.step_size``. Iteration stops when the
    relative loss change drops below ``cfg.stop_tol`` or after
    ``cfg.max_iters`` steps.

    Raises:
        DivergenceError: the loss became non-finite or exceeded
            ``cfg.divergence_factor`` times the initial loss.
    """
    phi = _measurement_matrix(record)
    p_hat = record.empirical
    D = record.dim
    u = np.asarray(init, dtype=np.float64).copy()
    if u.shape != (D,):
        raise ValueError(f"init must have shape ({D},)")
    dims = _mode_dims(D, cfg.local_dim)
    step = cfg.resolved_step(D)

    direction, cur = _residual_direction(u, phi, p_hat)
    initial = cur
    losses = [cur]
    dists = [] if truth is None else [recovery_distance(u, truth)]
    iterates = [u.copy()] if cfg.keep_iterates else []
    converged = cur <= _LOSS_FLOOR
    it = 0
    state = None
    while not converged and it < cfg.max_iters:
        it += 1
        trial_step = step
        while True:
            cand, cand_tt = project(u - trial_step * direction, dims, cfg.max_rank)
            if cfg.renormalize:
                nrm = np.linalg.norm(cand)
                if nrm > 0:
                    cand = cand / nrm
                    cand_tt = cand_tt.scaled(1.0 / nrm)
            cand_dir, cand_loss = _residual_direction(cand, phi, p_hat)
            if not math.isfinite(cand_loss) or cand_loss > cfg.divergence_factor * max(initial, _LOSS_FLOOR):
                raise DivergenceError(it, cand_loss, initial)
            if cfg.halve_on_increase and cand_loss > cur and trial_step > 1e-12 * step:
                trial_step *= 0.5
                continue
            break
        if cfg.halve_on_increase:
            step = trial_step
        prev = cur
        u, direction, cur, state = cand, cand_dir, cand_loss, cand_tt
        losses.append(cur)
        if truth is not None:
            dists.append(recovery_distance(u, truth))
        if cfg.keep_iterates:
            iterates.append(u.copy())
        if abs(cur - prev) / max(prev, _LOSS_FLOOR) < cfg.stop_tol:
            converged = True

    if state is None:
        state = tt_svd(u, dims)
    return RecoveryResult(
        final_state=state,
        final_vector=u,
        loss_curve=losses,
        distance_curve=dists,
        iterations_run=it,
        converged=converged,
        step_size=step,
        config=cfg,
        iterates=iterates,
    )
