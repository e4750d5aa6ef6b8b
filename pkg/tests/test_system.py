import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remest import (
    CommAbstraction,
    DegenerateDecompositionError,
    NonRealEigenvalueError,
    ScalarPlant,
    VectorPlant,
    geometric_sum,
    induced_l1_norm,
    jordan_decompose,
    propagate_interval,
    step_state,
)


def make_plant(a=1.0, w=0.0, t=1, lo=0.0, hi=1.0):
    return ScalarPlant(a=a, w_max=w, t_samp=t, x0_lo=lo, x0_hi=hi)


class TestGeometricSum:
    def test_unit_ratio(self):
        assert geometric_sum(1.0, 7) == 7.0
        assert geometric_sum(1.0 + 1e-14, 7) == 7.0

    def test_generic(self):
        assert geometric_sum(2.0, 3) == 7.0
        assert geometric_sum(0.5, 2) == pytest.approx(1.5)
        assert geometric_sum(3.0, 0) == 0.0

    def test_overflow_saturates(self):
        assert geometric_sum(2.0, 100_000) == math.inf

    def test_negative_terms_rejected(self):
        with pytest.raises(ValueError):
            geometric_sum(2.0, -1)


class TestPropagateInterval:
    def test_pure_scaling(self):
        assert propagate_interval(0, 1, make_plant(a=2, w=0), 3) == (0.0, 8.0)

    def test_unit_growth_noise(self):
        plant = make_plant(a=1, w=2)
        assert propagate_interval(-1, 1, plant, 5) == (-6.0, 6.0)

    def test_mixed(self):
        plant = make_plant(a=2, w=1)
        lo, hi = propagate_interval(0, 1, plant, 2)
        assert lo == pytest.approx(-1.5)
        assert hi == pytest.approx(5.5)

    def test_zero_steps_identity(self):
        assert propagate_interval(-2, 3, make_plant(a=5, w=1), 0) == (-2.0, 3.0)

    @given(
        lo=st.floats(-10, 10),
        widen=st.floats(0, 5),
        extra_w=st.floats(0, 3),
        a=st.floats(0, 3),
        w=st.floats(0, 2),
        steps=st.integers(0, 12),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_inputs(self, lo, widen, extra_w, a, w, steps):
        hi = lo + 1.0
        base = propagate_interval(lo, hi, make_plant(a=a, w=w), steps)
        wider = propagate_interval(lo - widen, hi + widen, make_plant(a=a, w=w), steps)
        noisier = propagate_interval(lo, hi, make_plant(a=a, w=w + extra_w), steps)
        assert wider[0] <= base[0] and wider[1] >= base[1]
        assert noisier[0] <= base[0] and noisier[1] >= base[1]

    @given(
        a=st.floats(0, 3),
        k=st.integers(1, 5),
        s=st.integers(1, 5),
    )
    @settings(max_examples=100, deadline=None)
    def test_noiseless_composition(self, a, k, s):
        plant = make_plant(a=a, w=0)
        lo, hi = -0.7, 1.3
        for _ in range(k):
            lo, hi = propagate_interval(lo, hi, plant, s)
        once = propagate_interval(-0.7, 1.3, plant, k * s)
        assert lo == pytest.approx(once[0], rel=1e-9, abs=1e-12)
        assert hi == pytest.approx(once[1], rel=1e-9, abs=1e-12)

    def test_trajectory_containment_fuzz(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            a = rng.uniform(0, 2.5)
            w = rng.uniform(0, 2)
            steps = int(rng.integers(1, 12))
            plant = make_plant(a=a, w=w, t=steps)
            lo0, hi0 = sorted(rng.uniform(-3, 3, 2))
            lo, hi = propagate_interval(lo0, hi0, plant, steps)
            # 50 random trajectories per configuration (10^4 total steps)
            x = rng.uniform(lo0, hi0, 50)
            for _ in range(steps):
                x = a * x + rng.uniform(-w / 2, w / 2, 50)
            assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)


class TestStepState:
    def test_noiseless(self):
        assert step_state(1.0, make_plant(a=2), 0.0) == 2.0

    def test_noise_only(self):
        assert step_state(0.0, make_plant(a=5, w=1), 0.3) == pytest.approx(0.3)

    def test_arithmetic(self):
        assert step_state(1.5, make_plant(a=1.2, w=1), -0.5) == pytest.approx(1.3)

    def test_disturbance_bound_enforced(self):
        with pytest.raises(ValueError):
            step_state(0.0, make_plant(a=1, w=1), 0.51)


class TestPlantValidation:
    def test_scalar_invariants(self):
        with pytest.raises(ValueError):
            ScalarPlant(a=-0.1, w_max=0, t_samp=1, x0_lo=0, x0_hi=1)
        with pytest.raises(ValueError):
            ScalarPlant(a=1, w_max=-1, t_samp=1, x0_lo=0, x0_hi=1)
        with pytest.raises(ValueError):
            ScalarPlant(a=1, w_max=0, t_samp=0, x0_lo=0, x0_hi=1)
        with pytest.raises(ValueError):
            ScalarPlant(a=1, w_max=0, t_samp=1, x0_lo=1, x0_hi=0)

    def test_comm_abstraction(self):
        comm = CommAbstraction(r_bits=4, d_latency=3, p_e=0.1)
        comm.check_against(make_plant(t=5))
        with pytest.raises(ValueError):
            comm.check_against(make_plant(t=2))
        with pytest.raises(ValueError):
            CommAbstraction(r_bits=0, d_latency=1, p_e=0.0)
        with pytest.raises(ValueError):
            CommAbstraction(r_bits=1, d_latency=1, p_e=1.5)

    def test_vector_rejects_complex_spectrum(self):
        with pytest.raises(NonRealEigenvalueError):
            VectorPlant(
                a_mat=[[0.0, 1.0], [-1.0, 0.0]],
                w_max=[0.0, 0.0],
                t_samp=2,
                x0_box=[[-1, 1], [-1, 1]],
            )


class TestJordan:
    def test_already_diagonal(self):
        plant = VectorPlant(
            a_mat=[[2.0, 0.0], [0.0, 0.5]],
            w_max=[0.0, 0.0],
            t_samp=1,
            x0_box=[[-1, 1], [-1, 1]],
        )
        phi, j_mat = jordan_decompose(plant)
        assert np.allclose(phi, np.eye(2))
        assert np.allclose(j_mat, np.diag([2.0, 0.5]))

    def test_double_integrator_power_is_jordan_block(self):
        plant = VectorPlant(
            a_mat=[[1.0, 0.1], [0.0, 1.0]],
            w_max=[0.0, 1.0],
            t_samp=10,
            x0_box=[[-1, 1], [-1, 1]],
        )
        phi, j_mat = jordan_decompose(plant)
        assert np.allclose(phi, np.eye(2))
        assert np.array_equal(j_mat, np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_defective_needs_user_data(self):
        plant = VectorPlant(
            a_mat=[[0.0, 1.0], [-0.25, 1.0]],
            w_max=[0.0, 0.0],
            t_samp=1,
            x0_box=[[-1, 1], [-1, 1]],
        )
        with pytest.raises(DegenerateDecompositionError):
            jordan_decompose(plant)

    def test_user_supplied_pair_used(self):
        a_mat = np.array([[0.0, 1.0], [-0.25, 1.0]])
        # a_mat is its own sample transition at t_samp=1; eigenvalue 0.5 is
        # defective, with Jordan chain v1 = (2, 1), (a_mat - 0.5 I) v2 = v1
        j_mat = np.array([[0.5, 1.0], [0.0, 0.5]])
        p_cols = np.array([[2.0, 0.0], [1.0, 2.0]])  # a_mat = P J P^-1
        assert np.allclose(p_cols @ j_mat @ np.linalg.inv(p_cols), a_mat)
        phi = np.linalg.inv(p_cols)
        plant = VectorPlant(
            a_mat=a_mat,
            w_max=[0.0, 0.0],
            t_samp=1,
            x0_box=[[-1, 1], [-1, 1]],
            jordan=(phi, j_mat),
        )
        got_phi, got_j = jordan_decompose(plant)
        assert np.allclose(got_phi, phi)
        assert np.allclose(got_j, j_mat)

    def test_user_pair_validated(self):
        with pytest.raises(DegenerateDecompositionError):
            VectorPlant(
                a_mat=[[2.0, 0.0], [0.0, 0.5]],
                w_max=[0.0, 0.0],
                t_samp=1,
                x0_box=[[-1, 1], [-1, 1]],
                jordan=(np.eye(2), np.array([[2.0, 0.0], [0.0, 0.7]])),
            )

    def test_roundtrip_random_distinct_eigenvalues(self):
        rng = np.random.default_rng(3)
        done = 0
        while done < 50:
            lam = rng.uniform(-1.5, 1.5, 3)
            if np.abs(np.subtract.outer(lam, lam) + np.eye(3)).min() < 0.05:
                continue
            basis = rng.uniform(-1, 1, (3, 3))
            if abs(np.linalg.det(basis)) < 0.1:
                continue
            a_mat = basis @ np.diag(lam) @ np.linalg.inv(basis)
            plant = VectorPlant(
                a_mat=a_mat,
                w_max=[0.0, 0.0, 0.0],
                t_samp=int(rng.integers(1, 4)),
                x0_box=[[-1, 1]] * 3,
            )
            phi, j_mat = jordan_decompose(plant)
            m = plant.sample_transition()
            err = np.abs(np.linalg.solve(phi, j_mat @ phi) - m).max()
            assert err <= 1e-8 * (1.0 + np.abs(m).max())
            done += 1


class TestInducedNorm:
    def test_identity(self):
        assert induced_l1_norm(np.eye(2)) == 1.0

    def test_column_sums(self):
        assert induced_l1_norm(np.array([[1.0, 1.0], [0.0, 1.0]])) == 2.0

    def test_scalar_abs(self):
        assert induced_l1_norm(np.array([[-3.0]])) == 3.0

    def test_bound_chain(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            m = rng.normal(size=(3, 3))
            v = rng.normal(size=3)
            assert np.abs(m @ v).sum() <= induced_l1_norm(m) * np.abs(v).sum() + 1e-12
