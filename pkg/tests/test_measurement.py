from __future__ import annotations

import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttqst.measurement import (
    apply_linear_map,
    build_record,
    closure_error,
    gaussian_dense_ensemble,
    gaussian_rank_one_ensemble,
    haar_ensemble,
    haar_unitary,
    identity_ensemble,
    population_probabilities,
    record_from_dict,
    record_to_dict,
    sample_counts,
    sample_empirical,
)
from ttqst.seeding import make_rng, stream, sub_seed
from ttqst.tt import CapacityError, contract_to_dense, mpo_to_matrix, mps_to_mpo, random_tt, random_unit_mps


class TestSeeding:
    def test_stable_value(self):
        key = hashlib.blake2b(b"7|shots|3", digest_size=8).digest()
        assert sub_seed(7, "shots", 3) == int.from_bytes(key, "little")

    def test_distinct_keys(self):
        assert sub_seed(0, "x", 0) != sub_seed(0, "x", 1)
        assert sub_seed(0, "x", 0) != sub_seed(1, "x", 0)
        assert sub_seed(0, "x", 0) != sub_seed(0, "y", 0)

    def test_range(self):
        assert 0 <= sub_seed(2**63, "tag", 10**9) < 2**64

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            sub_seed(-1, "x")
        with pytest.raises(ValueError):
            make_rng(-3)

    def test_streams_reproducible(self):
        a = stream(5, "t", 2).standard_normal(4)
        b = stream(5, "t", 2).standard_normal(4)
        np.testing.assert_array_equal(a, b)


class TestHaar:
    def test_scalar_unit_modulus(self):
        u = haar_unitary(1, "complex", 3)
        assert u.shape == (1, 1)
        assert abs(abs(u[0, 0]) - 1) <= 1e-15

    @pytest.mark.parametrize("field", ["real", "complex"])
    def test_unitary(self, field):
        u = haar_unitary(16, field, 0)
        assert np.max(np.abs(u.conj().T @ u - np.eye(16))) <= 1e-12
        assert np.all(np.abs(np.linalg.norm(u, axis=0) - 1) <= 1e-12)

    def test_real_is_orthogonal(self):
        assert not np.iscomplexobj(haar_unitary(8, "real", 1))

    def test_batched_matches_shape(self):
        u = haar_unitary(4, "complex", 0, count=5)
        assert u.shape == (5, 4, 4)
        eye = np.eye(4)
        for m in u:
            assert np.max(np.abs(m.conj().T @ m - eye)) <= 1e-12

    def test_fourth_moment(self):
        # E|u_11|^4 = 2 / (D (D+1)) for complex Haar
        u = haar_unitary(8, "complex", 11, count=100_000)[:, 0, 0]
        x = np.abs(u) ** 4
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - 2 / 72) <= 3 * se

    def test_phase_correction_matters(self):
        # without the R-diagonal correction the first row's real parts are biased;
        # with it the mean of u_11 over draws is zero
        u = haar_unitary(2, "complex", 2, count=50_000)[:, 0, 0]
        assert abs(u.mean()) < 4 * math.sqrt(0.5 / u.size)

    @pytest.mark.parametrize("D", [2, 16, 256, 1024])
    def test_ensemble_closure(self, D):
        e = haar_ensemble(D, seed=D)
        assert e.K == D
        assert closure_error(e) <= 1e-12
        frame = e.vectors @ e.vectors.conj().T
        assert np.max(np.abs(frame - np.eye(D))) <= 1e-10


class TestPopulation:
    def test_identity_basis_state(self):
        e = identity_ensemble(8)
        state = np.zeros(8)
        state[3] = 1
        np.testing.assert_array_equal(population_probabilities(e, state), np.eye(8)[3])

    @pytest.mark.parametrize("field", ["real", "complex"])
    def test_maximally_mixed(self, field):
        e = haar_ensemble(16, 4, field)
        p = population_probabilities(e, np.eye(16) / 16)
        np.testing.assert_allclose(p, np.full(16, 1 / 16), atol=1e-15)

    def test_tt_matches_dense(self):
        u = random_unit_mps(6, 2, 2, 1)
        e = haar_ensemble(64, 2)
        v = contract_to_dense(u)
        dense = np.abs(e.vectors.T @ v) ** 2
        np.testing.assert_allclose(population_probabilities(e, u), dense, atol=1e-10)
        rho = mps_to_mpo(u)
        np.testing.assert_allclose(population_probabilities(e, rho), dense, atol=1e-10)
        np.testing.assert_allclose(population_probabilities(e, mpo_to_matrix(rho)), dense, atol=1e-10)

    @pytest.mark.parametrize("n", [1, 3, 5])
    def test_mpo_path_complex(self, n):
        u = random_unit_mps(n, 2, 2, n, "complex")
        e = haar_ensemble(2**n, 7, "complex")
        v = contract_to_dense(u)
        np.testing.assert_allclose(
            population_probabilities(e, mps_to_mpo(u)), np.abs(e.vectors.conj().T @ v) ** 2, atol=1e-12
        )

    def test_simplex(self):
        e = haar_ensemble(128, 5)
        p = population_probabilities(e, random_unit_mps(7, 2, 3, 0))
        assert np.all((p >= 0) & (p <= 1))
        assert abs(p.sum() - 1) <= 1e-12

    def test_non_unit_trace_rejected(self):
        e = haar_ensemble(4, 0)
        with pytest.raises(ValueError):
            population_probabilities(e, np.eye(4) / 2)
        with pytest.raises(ValueError):
            population_probabilities(e, np.ones(4))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            population_probabilities(haar_ensemble(4, 0), np.ones(8) / math.sqrt(8))


class TestLinearMap:
    def test_zero(self):
        e = gaussian_dense_ensemble(4, 6, 0)
        np.testing.assert_array_equal(apply_linear_map(e, np.zeros((4, 4))), np.zeros(6))

    def test_dense_identity(self):
        e = gaussian_dense_ensemble(8, 5, 1)
        expected = np.array([np.trace(a.conj().T) / 8 for a in e.matrices])
        np.testing.assert_allclose(apply_linear_map(e, np.eye(8) / 8), expected, atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), kind=st.sampled_from(["haar", "rank_one", "dense"]))
    def test_linearity(self, seed, kind):
        D = 8
        e = {
            "haar": lambda: haar_ensemble(D, seed, "complex"),
            "rank_one": lambda: gaussian_rank_one_ensemble(D, 12, seed),
            "dense": lambda: gaussian_dense_ensemble(D, 12, seed),
        }[kind]()
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
        x2 = rng.standard_normal((D, D))
        np.testing.assert_allclose(
            apply_linear_map(e, x1 + x2), apply_linear_map(e, x1) + apply_linear_map(e, x2), atol=1e-12
        )

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_generic_mpo_matches_dense(self, n):
        # non-Hermitian MPO input through the mid-bond path
        rho = random_tt((4,) * n, 3, n, "complex")
        e = haar_ensemble(2**n, 1, "complex")
        np.testing.assert_allclose(
            apply_linear_map(e, rho), apply_linear_map(e, mpo_to_matrix(rho)), atol=1e-13
        )

    def test_dense_ensemble_accepts_mpo(self):
        rho = random_tt((4,) * 3, 2, 0, "complex")
        e = gaussian_dense_ensemble(8, 4, 0)
        np.testing.assert_allclose(apply_linear_map(e, rho), apply_linear_map(e, mpo_to_matrix(rho)))

    def test_capacity(self):
        with pytest.raises(CapacityError):
            gaussian_dense_ensemble(1024, 32, 0)


class TestSampling:
    def test_degenerate(self):
        p = np.zeros(6)
        p[0] = 1
        counts, emp = sample_empirical(p, 37, 0)
        np.testing.assert_array_equal(counts, [37, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(emp, p)

    def test_large_M_close(self):
        _, emp = sample_empirical(np.full(4, 0.25), 10**6, 1)
        assert np.max(np.abs(emp - 0.25)) <= 0.005

    def test_deterministic(self):
        p = np.random.default_rng(0).dirichlet(np.ones(10))
        a, _ = sample_empirical(p, 100, 9)
        b, _ = sample_empirical(p, 100, 9)
        np.testing.assert_array_equal(a, b)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            sample_empirical(np.array([1.2, -0.2]), 10, 0)

    def test_sum_tolerance(self):
        sample_empirical(np.array([0.5, 0.5 + 5e-10]), 10, 0)
        with pytest.raises(ValueError):
            sample_empirical(np.array([0.5, 0.51]), 10, 0)

    def test_batched_totals(self):
        p = np.random.default_rng(1).dirichlet(np.ones(5))
        c = sample_counts(p, 50, make_rng(0), size=200)
        assert c.shape == (200, 5)
        assert np.all(c.sum(axis=1) == 50)

    def test_unbiased(self):
        # |mean p_hat_k - p_k| <= 4 sqrt(p(1-p)/(M T)) over T resamplings
        p = np.random.default_rng(2).dirichlet(np.ones(8))
        M, T = 50, 10_000
        mean = sample_counts(p, M, make_rng(3), size=T).mean(axis=0) / M
        assert np.all(np.abs(mean - p) <= 4 * np.sqrt(p * (1 - p) / (M * T)))

    def test_marginals_are_binomial(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        M, T = 20, 20_000
        c = sample_counts(p, M, make_rng(4), size=T)
        np.testing.assert_allclose(c.var(axis=0), M * p * (1 - p), rtol=0.05)


class TestRecord:
    def test_noise_limit(self):
        u = np.random.default_rng(0).standard_normal(4)
        u /= np.linalg.norm(u)
        rec = build_record(u, 1, 10**7, seed=1)
        assert np.max(np.abs(rec.residual)) <= 2e-3

    def test_blocks(self):
        u = contract_to_dense(random_unit_mps(4, 2, 2, 0))
        rec = build_record(u, 3, 100, seed=2)
        np.testing.assert_allclose(rec.blocks("population").sum(axis=1), 1, atol=1e-12)
        assert np.all(rec.counts.sum(axis=1) == 100)
        np.testing.assert_array_equal(rec.empirical, (rec.counts / 100).ravel())
        assert rec.vectors.shape == (16, 48)

    def test_ensembles_independent(self):
        u = contract_to_dense(random_unit_mps(3, 2, 1, 0))
        rec = build_record(u, 2, 10, seed=0)
        assert not np.allclose(rec.ensembles[0].vectors, rec.ensembles[1].vectors)

    def test_shot_seed_keeps_ensembles(self):
        u = contract_to_dense(random_unit_mps(4, 2, 2, 0))
        a = build_record(u, 1, 100, seed=5, shot_seed=1)
        b = build_record(u, 1, 100, seed=5, shot_seed=2)
        np.testing.assert_array_equal(a.vectors, b.vectors)
        assert not np.array_equal(a.counts, b.counts)

    def test_noise_energy_bound(self):
        u = contract_to_dense(random_unit_mps(8, 2, 2, 3))
        energy = [np.sum(build_record(u, 1, 1000, seed=s).residual ** 2) for s in range(100)]
        assert np.mean(energy) <= 1e-3

    def test_noiseless(self):
        u = contract_to_dense(random_unit_mps(4, 2, 2, 0))
        rec = build_record(u, 1, None, seed=0)
        assert rec.shots is None and rec.counts is None
        np.testing.assert_array_equal(rec.residual, 0)

    def test_mpo_state_needs_dim(self):
        rho = mps_to_mpo(random_unit_mps(3, 2, 2, 0))
        rec = build_record(rho, 1, 50, "complex", 0, dim=8)
        assert rec.dim == 8

    @pytest.mark.parametrize("embed", [False, True])
    def test_json_round_trip(self, embed):
        u = contract_to_dense(random_unit_mps(4, 2, 2, 0))
        rec = build_record(u, 2, 100, seed=3)
        data = json.loads(json.dumps(record_to_dict(rec, embed_vectors=embed)))
        assert ("vectors" in data["ensembles"][0]) == embed
        back = record_from_dict(data)
        np.testing.assert_array_equal(back.vectors, rec.vectors)
        np.testing.assert_array_equal(back.counts, rec.counts)
        np.testing.assert_array_equal(back.empirical, rec.empirical)
