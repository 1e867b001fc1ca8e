"""Random measurement ensembles, population measurements and shot sampling."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence, Union

import numpy as np

from ttqst.seeding import make_rng, sub_seed
from ttqst.tt import (
    MAX_DENSE_ENTRIES,
    CapacityError,
    TensorTrain,
    _local_dims,
    contract_to_dense,
    mpo_to_matrix,
    mpo_trace,
)

KINDS = ("haar_rank_one", "gaussian_rank_one", "gaussian_dense")
RANK_ONE_KINDS = ("haar_rank_one", "gaussian_rank_one")

State = Union[np.ndarray, TensorTrain]


def _gaussian(rng: np.random.Generator, shape: tuple[int, ...], field: str) -> np.ndarray:
    if field == "real":
        return rng.standard_normal(shape)
    if field == "complex":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    raise ValueError(f"unknown field {field!r}")


def haar_unitary(D: int, field: str = "complex", seed: int = 0, count: int | None = None) -> np.ndarray:
    """Haar-distributed unitary (complex) or orthogonal (real) matrix.

    QR of an i.i.d. Gaussian matrix, with the phase of each diagonal entry of
    R divided out of the matching column of Q. ``count`` draws a stack of
    independent matrices with shape ``(count, D, D)``.
    """
    if D < 1:
        raise ValueError("dimension must be >= 1")
    rng = make_rng(seed)
    shape = (D, D) if count is None else (int(count), D, D)
    z = _gaussian(rng, shape, field)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mags = np.abs(diag)
    phase = np.where(mags > 0, diag / np.where(mags > 0, mags, 1.0), 1.0)
    return q * phase[..., None, :]


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """One measurement ensemble defining a linear map on ``D x D`` matrices.

    Rank-one kinds keep the ``D x K`` matrix of vectors (``A_k = v_k v_k^H``);
    ``gaussian_dense`` keeps the ``K x D x D`` stack of matrices.
    """

    kind: str
    dim: int
    seed: int | None
    field: str
    vectors: np.ndarray | None = None
    matrices: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind in RANK_ONE_KINDS:
            if self.vectors is None or self.vectors.shape[0] != self.dim:
                raise ValueError("rank-one ensembles need a D x K vector matrix")
        elif self.matrices is None or self.matrices.shape[1:] != (self.dim, self.dim):
            raise ValueError("gaussian_dense ensembles need a K x D x D matrix stack")

    @property
    def K(self) -> int:
        return self.vectors.shape[1] if self.vectors is not None else self.matrices.shape[0]


def haar_ensemble(D: int, seed: int, field: str = "real", K: int | None = None) -> MeasurementEnsemble:
    """Rank-one POVM from the first ``K`` (default all) columns of a Haar matrix."""
    u = haar_unitary(D, field, seed)
    if K is not None:
        if not 1 <= K <= D:
            raise ValueError("K must lie in [1, D]")
        u = u[:, :K]
    return MeasurementEnsemble("haar_rank_one", D, seed, field, vectors=u)


def identity_ensemble(D: int, field: str = "real") -> MeasurementEnsemble:
    """Computational-basis POVM (Phi = I), for diagnostics."""
    dtype = np.complex128 if field == "complex" else np.float64
    return MeasurementEnsemble("haar_rank_one", D, None, field, vectors=np.eye(D, dtype=dtype))


def gaussian_rank_one_ensemble(D: int, K: int, seed: int, field: str = "complex") -> MeasurementEnsemble:
    vecs = _gaussian(make_rng(seed), (D, K), field)
    return MeasurementEnsemble("gaussian_rank_one", D, seed, field, vectors=vecs)


def gaussian_dense_ensemble(D: int, K: int, seed: int, field: str = "complex") -> MeasurementEnsemble:
    """``K`` matrices with i.i.d. standard (unit-variance) Gaussian entries."""
    if K * D * D > MAX_DENSE_ENTRIES:
        raise CapacityError(f"{K} dense {D}x{D} measurement matrices exceed the storage guard")
    mats = _gaussian(make_rng(seed), (K, D, D), field)
    return MeasurementEnsemble("gaussian_dense", D, seed, field, matrices=mats)


def make_ensemble(kind: str, D: int, seed: int, field: str, K: int | None = None) -> MeasurementEnsemble:
    if kind == "haar_rank_one":
        return haar_ensemble(D, seed, field, K)
    if K is None:
        raise ValueError(f"{kind} ensembles need an explicit K")
    if kind == "gaussian_rank_one":
        return gaussian_rank_one_ensemble(D, K, seed, field)
    if kind == "gaussian_dense":
        return gaussian_dense_ensemble(D, K, seed, field)
    raise ValueError(f"unknown ensemble kind {kind!r}")


def closure_error(e: MeasurementEnsemble) -> float:
    """``max |Phi^H Phi - I|`` for a rank-one ensemble."""
    phi = e.vectors
    return float(np.max(np.abs(phi.conj().T @ phi - np.eye(phi.shape[1]))))


def _half_operator(cores: Sequence[np.ndarray], dims: Sequence[int]) -> np.ndarray:
    """Contract MPO cores into ``(r_left, r_right, D_part, D_part)`` operators."""
    m = len(cores)
    x = cores[0]
    for c in cores[1:]:
        x = np.tensordot(x, c, axes=(-1, 0))
    rl, rr = x.shape[0], x.shape[-1]
    # split each s = i + d*j into axes (j, i)
    x = x.reshape((rl,) + tuple(v for d in dims for v in (d, d)) + (rr,))
    rows = [2 + 2 * k for k in reversed(range(m))]
    cols = [1 + 2 * k for k in reversed(range(m))]
    part = math.prod(dims)
    return x.transpose([0, x.ndim - 1] + rows + cols).reshape(rl, rr, part, part)


def _mpo_quadratic_forms(phi: np.ndarray, t: TensorTrain) -> np.ndarray:
    """``phi_k^H rho phi_k`` for every column, splitting the MPO at its middle bond.

    Writing ``rho = sum_c L_c (x) R_c`` across the middle bond turns the batch
    of quadratic forms into two matrix products of cost ``O(r * sqrt(D) * D * K)``
    instead of the ``O(D^2 K)`` of a dense ``rho @ phi``.
    """
    dims = _local_dims(t)
    n = len(dims)
    D = math.prod(dims)
    if phi.shape[0] != D:
        raise ValueError(f"ensemble dimension {phi.shape[0]} does not match MPO dimension {D}")
    if n == 1:
        rho = mpo_to_matrix(t)
        return np.einsum("ak,ak->k", phi.conj(), rho @ phi)
    m = n // 2
    left = _half_operator(t.cores[:m], dims[:m])[0]  # (c, a, b)
    right = _half_operator(t.cores[m:], dims[m:])[:, 0]  # (c, y, x)
    r = left.shape[0]
    d_left, d_right = math.prod(dims[:m]), math.prod(dims[m:])
    K = phi.shape[1]
    f3 = phi.reshape(d_left, d_right, K, order="F")
    g = left.transpose(1, 0, 2).reshape(d_left * r, d_left) @ f3.reshape(d_left, d_right * K)
    g = g.reshape(d_left, r * d_right, K)
    h = np.matmul(right.transpose(1, 0, 2).reshape(d_right, r * d_right), g)
    return np.einsum("ayk,ayk->k", f3.conj(), h)


def apply_linear_map(e: MeasurementEnsemble, x: np.ndarray | TensorTrain) -> np.ndarray:
    """Measurement vector with entries ``<A_k, x> = trace(A_k^H x)``.

    ``x`` is a dense ``D x D`` matrix or an MPO tensor train; it need not be
    PSD or Hermitian.
    """
    if isinstance(x, TensorTrain):
        if e.kind in RANK_ONE_KINDS:
            return _mpo_quadratic_forms(e.vectors, x)
        x = mpo_to_matrix(x)
    x = np.asarray(x)
    if x.shape != (e.dim, e.dim):
        raise ValueError(f"expected a {e.dim}x{e.dim} matrix, got shape {x.shape}")
    if e.kind in RANK_ONE_KINDS:
        phi = e.vectors
        return np.einsum("ak,ak->k", phi.conj(), x @ phi)
    return np.tensordot(e.matrices.conj(), x, axes=([1, 2], [0, 1]))


def _state_kind(state: State, D: int) -> str:
    if isinstance(state, TensorTrain):
        if state.size == D:
            return "pure_tt"
        if state.size == D * D:
            return "mpo"
        raise ValueError(f"tensor train of size {state.size} does not match dimension {D}")
    arr = np.asarray(state)
    if arr.shape == (D,):
        return "pure"
    if arr.shape == (D, D):
        return "density"
    raise ValueError(f"state of shape {arr.shape} does not match dimension {D}")


def population_probabilities(e: MeasurementEnsemble, state: State, atol: float = 1e-10) -> np.ndarray:
    """Outcome probabilities ``p_k = phi_k^H rho phi_k`` of a rank-one ensemble.

    ``state`` may be a unit pure-state vector (dense or MPS) or a unit-trace
    density matrix (dense or MPO). Results are clipped to ``[0, 1]`` to absorb
    round-off.
    """
    if e.kind not in RANK_ONE_KINDS:
        raise ValueError("population probabilities need a rank-one ensemble")
    kind = _state_kind(state, e.dim)
    if kind in ("pure", "pure_tt"):
        u = contract_to_dense(state) if kind == "pure_tt" else np.asarray(state)
        nrm = float(np.linalg.norm(u))
        if abs(nrm - 1.0) > atol:
            raise ValueError(f"pure state must have unit norm, got {nrm}")
        q = np.abs(e.vectors.conj().T @ u) ** 2
    else:
        tr = mpo_trace(state) if kind == "mpo" else np.trace(state)
        if abs(tr - 1.0) > atol:
            raise ValueError(f"density operator must have unit trace, got {tr}")
        q = apply_linear_map(e, state).real
    return np.clip(q, 0.0, 1.0)


def _validated_probabilities(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be 1-D and nonempty")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, not 1")
    return p / total


def sample_counts(p: np.ndarray, M: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Multinomial(M, p) counts from an existing generator; ``size`` batches draws."""
    if M < 1:
        raise ValueError("shot count M must be >= 1")
    return rng.multinomial(int(M), _validated_probabilities(p), size=size).astype(np.int64)


def sample_empirical(p: np.ndarray, M: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``M`` shots; returns ``(counts, counts / M)``."""
    counts = sample_counts(p, M, make_rng(seed))
    return counts, counts / M


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Population and empirical measurements of one state under ``Q`` ensembles.

    ``shots`` is ``None`` for a noiseless record, whose empirical vector equals
    the population and which carries no counts.
    """

    ensembles: tuple[MeasurementEnsemble, ...]
    population: np.ndarray
    empirical: np.ndarray
    shots: int | None
    counts: np.ndarray | None
    seed: int
    shot_seed: int | None = None

    @property
    def Q(self) -> int:
        return len(self.ensembles)

    @property
    def K(self) -> int:
        return self.ensembles[0].K

    @property
    def dim(self) -> int:
        return self.ensembles[0].dim

    @property
    def field(self) -> str:
        return self.ensembles[0].field

    @property
    def residual(self) -> np.ndarray:
        """Measurement noise ``p_hat - p``."""
        return self.empirical - self.population

    @cached_property
    def vectors(self) -> np.ndarray:
        """All measurement vectors stacked into a ``D x QK`` matrix."""
        return np.concatenate([e.vectors for e in self.ensembles], axis=1)

    def blocks(self, which: str = "population") -> np.ndarray:
        return getattr(self, which).reshape(self.Q, self.K)

    def noiseless(self) -> MeasurementRecord:
        return dataclasses.replace(self, empirical=self.population.copy(), shots=None, counts=None)


def _state_dim(state: State) -> int:
    if isinstance(state, TensorTrain):
        return state.size
    return np.asarray(state).shape[0]


def build_record(
    state: State,
    Q: int,
    M: int | None,
    field: str = "real",
    seed: int = 0,
    *,
    dim: int | None = None,
    shot_seed: int | None = None,
) -> MeasurementRecord:
    """Measure ``state`` with ``Q`` independent Haar POVMs, ``M`` shots each.

    Ensemble ``i`` uses sub-seed ``(seed, "ensemble", i)`` and its shots use
    ``(shot_seed, "shots", i)``, where ``shot_seed`` defaults to ``seed``.
    ``M=None`` gives a noiseless record. ``dim`` disambiguates an MPO tensor
    train (whose size is ``D**2``).
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if M is not None and M < 1:
        raise ValueError("M must be >= 1")
    D = dim if dim is not None else _state_dim(state)
    if D * D > MAX_DENSE_ENTRIES:
        raise CapacityError(f"dimension {D} exceeds the dense measurement guard")
    shot_seed = seed if shot_seed is None else shot_seed
    ensembles, pops, emps, counts = [], [], [], []
    for i in range(Q):
        e = haar_ensemble(D, sub_seed(seed, "ensemble", i), field)
        p = population_probabilities(e, state)
        ensembles.append(e)
        pops.append(p)
        if M is None:
            emps.append(p.copy())
        else:
            c = sample_counts(p / p.sum(), M, make_rng(sub_seed(shot_seed, "shots", i)))
            counts.append(c)
            emps.append(c / M)
    return MeasurementRecord(
        ensembles=tuple(ensembles),
        population=np.concatenate(pops),
        empirical=np.concatenate(emps),
        shots=M,
        counts=None if M is None else np.stack(counts),
        seed=seed,
        shot_seed=shot_seed,
    )


def _encode(arr: np.ndarray) -> list:
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).tolist()
    return arr.tolist()


def _decode(data: Any, field: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1] if field == "complex" else arr


def record_to_dict(record: MeasurementRecord, embed_vectors: bool = False) -> dict[str, Any]:
    """JSON-ready record; ensemble vectors are regenerated from seeds unless embedded."""
    ens = []
    for e in record.ensembles:
        entry: dict[str, Any] = {"kind": e.kind, "seed": e.seed, "K": e.K}
        if embed_vectors or e.seed is None:
            entry["vectors"] = _encode(e.vectors)
        ens.append(entry)
    return {
        "D": record.dim,
        "Q": record.Q,
        "M": record.shots,
        "field": record.field,
        "seed": record.seed,
        "shot_seed": record.shot_seed,
        "ensembles": ens,
        "population": record.population.tolist(),
        "counts": None if record.counts is None else record.counts.tolist(),
    }


def record_from_dict(data: dict[str, Any]) -> MeasurementRecord:
    D, field = int(data["D"]), data["field"]
    ensembles = []
    for entry in data["ensembles"]:
        if "vectors" in entry:
            vecs = _decode(entry["vectors"], field)
            ensembles.append(MeasurementEnsemble(entry["kind"], D, entry["seed"], field, vectors=vecs))
        else:
            ensembles.append(make_ensemble(entry["kind"], D, int(entry["seed"]), field, entry.get("K")))
    population = np.asarray(data["population"], dtype=np.float64)
    M = data["M"]
    if M is None:
        counts, empirical = None, population.copy()
    else:
        counts = np.asarray(data["counts"], dtype=np.int64)
        empirical = (counts / M).ravel()
    return MeasurementRecord(tuple(ensembles), population, empirical, M, counts, int(data["seed"]), data.get("shot_seed"))
