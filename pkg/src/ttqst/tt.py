"""Tensor trains: the shared representation of MPS vectors and MPO matrices.

A :class:`TensorTrain` stores ``n`` order-3 cores, core ``l`` having shape
``(r_{l-1}, mode_dims[l], r_l)`` with ``r_0 = r_n = 1``. Entry
``(s_1, ..., s_n)`` of the represented tensor is the matrix product
``X_1[:, s_1, :] @ ... @ X_n[:, s_n, :]``.

Index conventions used throughout the package:

* A dense vector of length ``prod(mode_dims)`` linearizes the multi-index with
  site 1 varying fastest: ``s_1 + d_1*s_2 + d_1*d_2*s_3 + ...``.
* An MPO over local dimension ``d`` has mode dims ``d**2`` and packs the
  (row, column) pair of a site as ``s = i + d*j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ttqst.seeding import make_rng

MAX_DENSE_ENTRIES = 1 << 24
_PHASE_THRESHOLD = 1e-12


class CapacityError(ValueError):
    """Raised when a dense intermediate would exceed the desk-scale guard."""


def _check_capacity(size: int, what: str = "dense tensor") -> None:
    if size > MAX_DENSE_ENTRIES:
        raise CapacityError(f"{what} with {size} entries exceeds the limit of {MAX_DENSE_ENTRIES}")


def _dtype_for(*arrays: Any) -> type:
    return np.complex128 if any(np.iscomplexobj(a) for a in arrays) else np.float64


@dataclass(frozen=True, eq=False)
class TensorTrain:
    """Immutable tensor train.

    Args:
        cores: Sequence of order-3 arrays with matching bond dimensions.
        canonical: ``"left"`` when every core but the last has an isometric
            left unfolding, ``"none"`` otherwise. The flag is trusted, not
            re-verified; :func:`is_left_orthonormal` checks it.
    """

    cores: tuple[np.ndarray, ...]
    canonical: str = "none"

    def __post_init__(self) -> None:
        if len(self.cores) == 0:
            raise ValueError("a tensor train needs at least one core")
        dtype = _dtype_for(*self.cores)
        cores = []
        for k, c in enumerate(self.cores):
            arr = np.array(c, dtype=dtype, copy=True)
            if arr.ndim != 3:
                raise ValueError(f"core {k} has ndim {arr.ndim}, expected 3")
            arr.setflags(write=False)
            cores.append(arr)
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between core {k} ({cores[k].shape}) and core {k + 1} ({cores[k + 1].shape})"
                )
        if self.canonical not in ("none", "left"):
            raise ValueError(f"unknown canonical flag {self.canonical!r}")
        object.__setattr__(self, "cores", tuple(cores))

    @property
    def n(self) -> int:
        return len(self.cores)

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def dtype(self) -> np.dtype:
        return self.cores[0].dtype

    @property
    def field(self) -> str:
        return "complex" if np.iscomplexobj(self.cores[0]) else "real"

    @property
    def size(self) -> int:
        return math.prod(self.mode_dims)

    def to_dense(self) -> np.ndarray:
        return contract_to_dense(self)

    def norm(self) -> float:
        if self.canonical == "left":
            return float(np.linalg.norm(self.cores[-1]))
        return math.sqrt(max(inner_product(self, self).real, 0.0))

    def scaled(self, factor: complex) -> TensorTrain:
        """Multiply the represented tensor by ``factor`` (applied to the last core)."""
        cores = list(self.cores)
        cores[-1] = cores[-1] * factor
        return TensorTrain(tuple(cores), canonical=self.canonical)

    def normalized(self) -> TensorTrain:
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero tensor train")
        return self.scaled(1.0 / nrm)

    def __neg__(self) -> TensorTrain:
        return self.scaled(-1.0)


def zero_tt(mode_dims: Sequence[int], field: str = "real") -> TensorTrain:
    dtype = np.complex128 if field == "complex" else np.float64
    return TensorTrain(tuple(np.zeros((1, d, 1), dtype=dtype) for d in mode_dims))


def _dense_tensor(t: TensorTrain) -> np.ndarray:
    """C-ordered array of shape ``t.mode_dims`` holding the represented tensor."""
    _check_capacity(t.size)
    res = t.cores[0].reshape(t.mode_dims[0], -1)
    for core in t.cores[1:]:
        r, d, r2 = core.shape
        res = (res @ core.reshape(r, d * r2)).reshape(-1, r2)
    return res.reshape(t.mode_dims)


def contract_to_dense(t: TensorTrain) -> np.ndarray:
    """Expand ``t`` into a dense vector (site 1 fastest)."""
    return _dense_tensor(t).ravel(order="F")


def _as_tensor(v: np.ndarray, mode_dims: Sequence[int]) -> np.ndarray:
    return np.ascontiguousarray(np.reshape(v, tuple(mode_dims), order="F"))


def _truncation_rank(s: np.ndarray, max_rank: int | None, tol: float) -> int:
    keep = max(1, int(np.count_nonzero(s > tol * s[0])))
    if max_rank is not None:
        keep = min(keep, int(max_rank))
    return keep


def _fix_phase(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # first entry above threshold of every column of u becomes real positive
    idx = np.argmax(np.abs(u) > _PHASE_THRESHOLD, axis=0)
    pivots = u[idx, np.arange(u.shape[1])]
    mags = np.abs(pivots)
    phase = np.where(mags > 0, pivots / np.where(mags > 0, mags, 1.0), 1.0)
    return u * phase.conj(), vh * phase[:, None]


def tt_svd(
    v: np.ndarray,
    mode_dims: Sequence[int],
    max_rank: int | None = None,
    tol: float = 1e-12,
    *,
    return_discarded: bool = False,
):
    """Compress a dense vector into a left-canonical tensor train.

    Sweeps left to right, keeping at each bond
    ``min(max_rank, #{sigma > tol * sigma_max})`` singular values.

    Args:
        v: Dense vector, site 1 fastest.
        mode_dims: Mode sizes whose product equals ``v.size``.
        max_rank: Uniform cap on interior ranks, or ``None`` for no cap.
        tol: Relative singular value cutoff per sweep step.
        return_discarded: Also return the singular values dropped at each step.

    Returns:
        The tensor train, or ``(tt, discarded)`` when ``return_discarded``.
        The zero vector yields an all-zero train with unit ranks and
        ``canonical="none"``.
    """
    v = np.asarray(v)
    dims = tuple(int(d) for d in mode_dims)
    if v.ndim != 1:
        raise ValueError("tt_svd expects a 1-D vector")
    if math.prod(dims) != v.size:
        raise ValueError(f"mode dims {dims} do not match vector length {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    dtype = _dtype_for(v)
    discarded: list[np.ndarray] = []
    if not np.any(v):
        out = zero_tt(dims, "complex" if dtype is np.complex128 else "real")
        if return_discarded:
            return out, [np.zeros(0) for _ in dims[:-1]]
        return out

    rest = _as_tensor(v.astype(dtype, copy=False), dims).reshape(1, -1)
    cores = []
    r_prev = 1
    for d in dims[:-1]:
        mat = rest.reshape(r_prev * d, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = _truncation_rank(s, max_rank, tol)
        discarded.append(s[keep:].copy())
        u, vh = _fix_phase(u[:, :keep], vh[:keep])
        cores.append(u.reshape(r_prev, d, keep))
        rest = s[:keep, None] * vh
        r_prev = keep
    cores.append(rest.reshape(r_prev, dims[-1], 1))
    out = TensorTrain(tuple(cores), canonical="left")
    if return_discarded:
        return out, discarded
    return out


def _positive_diagonal(q: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diag = np.diagonal(r)
    mags = np.abs(diag)
    phase = np.where(mags > 0, diag / np.where(mags > 0, mags, 1.0), 1.0)
    return q * phase, phase.conj()[:, None] * r


def left_canonicalize(t: TensorTrain) -> TensorTrain:
    """QR sweep that leaves every core but the last left-orthonormal.

    The dense contraction is unchanged. Ranks larger than ``r_{l-1} * d_l``
    shrink to that bound. R factors carry a real nonnegative diagonal so the
    result is deterministic.
    """
    out = []
    carry = None
    for core in t.cores[:-1]:
        if carry is not None:
            core = np.tensordot(carry, core, axes=(1, 0))
        r, d, r2 = core.shape
        q, rr = np.linalg.qr(core.reshape(r * d, r2))
        q, rr = _positive_diagonal(q, rr)
        out.append(q.reshape(r, d, q.shape[1]))
        carry = rr
    last = t.cores[-1] if carry is None else np.tensordot(carry, t.cores[-1], axes=(1, 0))
    out.append(last)
    return TensorTrain(tuple(out), canonical="left")


def left_orthonormality_error(t: TensorTrain) -> float:
    """Max-entry deviation of ``L(X_l)^H L(X_l)`` from the identity over ``l < n``."""
    err = 0.0
    for core in t.cores[:-1]:
        r, d, r2 = core.shape
        mat = core.reshape(r * d, r2)
        gram = mat.conj().T @ mat
        err = max(err, float(np.max(np.abs(gram - np.eye(r2)))))
    return err


def is_left_orthonormal(t: TensorTrain, tol: float = 1e-10) -> bool:
    return left_orthonormality_error(t) <= tol


def _check_compatible(a: TensorTrain, b: TensorTrain) -> None:
    if a.mode_dims != b.mode_dims:
        raise ValueError(f"mode dims differ: {a.mode_dims} vs {b.mode_dims}")


def inner_product(a: TensorTrain, b: TensorTrain) -> complex | float:
    """``<a, b> = sum(conj(a) * b)`` computed core by core."""
    _check_compatible(a, b)
    env = np.ones((1, 1), dtype=_dtype_for(a.cores[0], b.cores[0]))
    for ca, cb in zip(a.cores, b.cores):
        tmp = np.tensordot(env, cb, axes=(1, 0))
        env = np.tensordot(ca.conj(), tmp, axes=([0, 1], [0, 1]))
    val = env[0, 0]
    return complex(val) if np.iscomplexobj(val) else float(val)


def tt_add(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Sum with block-diagonal cores; interior ranks add exactly."""
    _check_compatible(a, b)
    if a.n == 1:
        return TensorTrain((a.cores[0] + b.cores[0],))
    dtype = _dtype_for(a.cores[0], b.cores[0])
    cores = [np.concatenate([a.cores[0], b.cores[0]], axis=2)]
    for ca, cb in zip(a.cores[1:-1], b.cores[1:-1]):
        ra, d, ra2 = ca.shape
        rb, _, rb2 = cb.shape
        block = np.zeros((ra + rb, d, ra2 + rb2), dtype=dtype)
        block[:ra, :, :ra2] = ca
        block[ra:, :, ra2:] = cb
        cores.append(block)
    cores.append(np.concatenate([a.cores[-1], b.cores[-1]], axis=0))
    return TensorTrain(tuple(cores))


def mps_to_mpo(u: TensorTrain) -> TensorTrain:
    """MPO of ``u u^H``: site cores are ``U^{i} (x) conj(U^{j})`` with ``s = i + d*j``."""
    cores = []
    for c in u.cores:
        ra, d, rc = c.shape
        x = np.einsum("aic,bjd->abjicd", c, c.conj())
        cores.append(x.reshape(ra * ra, d * d, rc * rc))
    return TensorTrain(tuple(cores))


def _local_dims(t: TensorTrain) -> tuple[int, ...]:
    dims = []
    for m in t.mode_dims:
        d = math.isqrt(m)
        if d * d != m:
            raise ValueError(f"mode dim {m} is not a perfect square; not an MPO")
        dims.append(d)
    return tuple(dims)


def mpo_to_matrix(t: TensorTrain) -> np.ndarray:
    """Dense ``D x D`` matrix of an MPO (row multi-index with site 1 fastest)."""
    dims = _local_dims(t)
    n = len(dims)
    big = math.prod(dims)
    _check_capacity(big * big, "dense MPO matrix")
    x = _dense_tensor(t)
    # split each s = i + d*j into axes (j, i)
    x = x.reshape(tuple(v for d in dims for v in (d, d)))
    rows = [2 * k + 1 for k in reversed(range(n))]
    cols = [2 * k for k in reversed(range(n))]
    return x.transpose(rows + cols).reshape(big, big)


def mpo_trace(t: TensorTrain) -> complex | float:
    """Trace of an MPO without expanding it."""
    dims = _local_dims(t)
    env = np.ones((1, 1), dtype=t.dtype)
    for core, d in zip(t.cores, dims):
        diag = sum(core[:, i + d * i, :] for i in range(d))
        env = env @ diag
    val = env[0, 0]
    return complex(val) if np.iscomplexobj(val) else float(val)


def matrix_to_mpo(
    rho: np.ndarray, local_dims: Sequence[int], max_rank: int | None = None, tol: float = 1e-12
) -> TensorTrain:
    """Inverse of :func:`mpo_to_matrix`, compressed with :func:`tt_svd`."""
    rho = np.asarray(rho)
    dims = tuple(int(d) for d in local_dims)
    n = len(dims)
    big = math.prod(dims)
    if rho.shape != (big, big):
        raise ValueError(f"matrix shape {rho.shape} does not match local dims {dims}")
    x = rho.reshape(tuple(reversed(dims)) + tuple(reversed(dims)))
    # axis of i_l is n-1-l, axis of j_l is 2n-1-l
    order = [a for k in range(n) for a in (2 * n - 1 - k, n - 1 - k)]
    x = x.transpose(order).reshape(tuple(d * d for d in dims))
    return tt_svd(x.ravel(order="F"), [d * d for d in dims], max_rank=max_rank, tol=tol)


def random_unit_mps(n: int, d: int, r: int, seed: int, field: str = "real") -> TensorTrain:
    """Unit-norm MPS from a Gaussian vector truncated by :func:`tt_svd`."""
    if n < 1 or d < 1 or r < 1:
        raise ValueError("n, d and r must be positive")
    if n * math.log2(d) > 24:
        raise CapacityError(f"d**n = {d}**{n} exceeds the dense guard of 2**24")
    rng = make_rng(seed)
    size = d**n
    if field == "complex":
        v = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)
    elif field == "real":
        v = rng.standard_normal(size)
    else:
        raise ValueError(f"unknown field {field!r}")
    return tt_svd(v, (d,) * n, max_rank=r).normalized()


def max_ranks(mode_dims: Sequence[int], cap: int | None = None) -> tuple[int, ...]:
    """Largest ranks a tensor with these mode dims can have, optionally capped."""
    dims = list(mode_dims)
    out = [1]
    for k in range(1, len(dims)):
        r = min(math.prod(dims[:k]), math.prod(dims[k:]))
        out.append(r if cap is None else min(r, cap))
    out.append(1)
    return tuple(out)


def random_tt(mode_dims: Sequence[int], max_rank: int, seed: int, field: str = "real") -> TensorTrain:
    """Unit-norm train with i.i.d. Gaussian cores, left-canonicalized.

    Ranks are ``min(max_rank, dimension-forced maximum)`` at every bond.
    """
    rng = make_rng(seed)
    ranks = max_ranks(mode_dims, max_rank)
    cores = []
    for k, d in enumerate(mode_dims):
        shape = (ranks[k], d, ranks[k + 1])
        c = rng.standard_normal(shape)
        if field == "complex":
            c = (c + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        cores.append(c)
    return left_canonicalize(TensorTrain(tuple(cores))).normalized()


def _encode(arr: np.ndarray) -> list:
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).tolist()
    return arr.tolist()


def _decode(data: list, field: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if field == "complex":
        return arr[..., 0] + 1j * arr[..., 1]
    return arr


def tt_to_dict(t: TensorTrain) -> dict[str, Any]:
    """JSON-ready container; complex entries become ``[re, im]`` pairs."""
    return {
        "n": t.n,
        "mode_dims": list(t.mode_dims),
        "ranks": list(t.ranks),
        "field": t.field,
        "canonical": t.canonical,
        "cores": [_encode(c) for c in t.cores],
    }


def tt_from_dict(data: dict[str, Any]) -> TensorTrain:
    field = data.get("field", "real")
    cores = tuple(_decode(c, field) for c in data["cores"])
    t = TensorTrain(cores, canonical=data.get("canonical", "none"))
    if list(t.mode_dims) != list(data["mode_dims"]) or list(t.ranks) != list(data["ranks"]):
        raise ValueError("serialized shape metadata does not match the cores")
    return t
