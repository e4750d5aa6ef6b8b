import itertools
import math

import mpmath
import numpy as np
import pytest

from remest import (
    BecChannel,
    ErasedWord,
    Gf2Code,
    RateAboveCapacityError,
    code_error_prob,
    decode_erasures,
    min_feasible_blocklength,
    normal_approx_blocklength,
    normal_approx_pe,
    pack_bins,
    q_func,
    q_inv,
    random_code,
    simulated_pe_model,
    transmit,
    uncoded_error_prob,
    unpack_bins,
)


class TestBecChannel:
    def test_capacity_dispersion(self):
        ch = BecChannel(0.3)
        assert ch.capacity == pytest.approx(0.7)
        assert ch.dispersion == pytest.approx(0.21)
        assert ch.capacity + ch.zeta == 1.0

    def test_dispersion_cap(self):
        for zeta in np.linspace(0, 1, 21):
            assert BecChannel(zeta).dispersion <= 0.25 + 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            BecChannel(-0.1)
        with pytest.raises(ValueError):
            BecChannel(1.1)


class TestUncoded:
    def test_perfect(self):
        assert uncoded_error_prob(BecChannel(0.0), 100) == 0.0

    def test_useless(self):
        assert uncoded_error_prob(BecChannel(1.0), 1) == 1.0

    def test_half(self):
        assert uncoded_error_prob(BecChannel(0.5), 3) == pytest.approx(0.875)


class TestTransmit:
    def test_identity_channel(self):
        rng = np.random.default_rng(0)
        word = rng.integers(0, 2, 50, dtype=np.uint8)
        out = transmit(word, BecChannel(0.0), rng)
        assert not out.erased.any()
        assert np.array_equal(out.bits, word)

    def test_total_erasure(self):
        rng = np.random.default_rng(0)
        out = transmit(np.ones(20, dtype=np.uint8), BecChannel(1.0), rng)
        assert out.erased.all()

    def test_erasure_fraction(self):
        rng = np.random.default_rng(7)
        word = np.zeros(100_000, dtype=np.uint8)
        out = transmit(word, BecChannel(0.5), rng)
        frac = out.erased.mean()
        assert 0.49 <= frac <= 0.51


class TestRandomCode:
    def test_deterministic_given_seed(self):
        a = random_code(np.random.default_rng(99), 4, 9)
        b = random_code(np.random.default_rng(99), 4, 9)
        assert np.array_equal(a.gen, b.gen)

    def test_pinned_regression(self):
        gen = random_code(np.random.default_rng(2024), 2, 5).gen
        assert np.array_equal(gen, np.array([[1, 1, 1, 0, 0], [0, 0, 1, 1, 1]]))

    def test_single_entry_frequency(self):
        zeros = sum(
            int(random_code(np.random.default_rng(seed), 1, 1).gen[0, 0] == 0)
            for seed in range(10_000)
        )
        assert abs(zeros / 10_000 - 0.5) <= 0.02

    def test_ensemble_entry_means(self):
        rng = np.random.default_rng(5)
        total = np.zeros((2, 4))
        for _ in range(10_000):
            total += random_code(rng, 2, 4).gen
        assert np.all(np.abs(total / 10_000 - 0.5) <= 0.02)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        code = random_code(rng, 4, 10)
        for _ in range(50):
            u = rng.integers(0, 2, 4, dtype=np.uint8)
            v = rng.integers(0, 2, 4, dtype=np.uint8)
            assert np.array_equal(
                code.encode(u ^ v), code.encode(u) ^ code.encode(v)
            )

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            random_code(np.random.default_rng(0), 3, 2)
        with pytest.raises(ValueError):
            Gf2Code(np.zeros((3, 2), dtype=np.uint8))


class TestDecodeErasures:
    def test_identity_no_erasures(self):
        code = Gf2Code(np.eye(2, dtype=np.uint8))
        recv = ErasedWord([1, 0], [False, False])
        assert np.array_equal(decode_erasures(code, recv), [1, 0])

    def test_identity_one_erasure_fails(self):
        code = Gf2Code(np.eye(2, dtype=np.uint8))
        recv = ErasedWord([1, 0], [True, False])
        assert decode_erasures(code, recv) is None

    def test_repetition_code(self):
        code = Gf2Code(np.array([[1, 1, 1]], dtype=np.uint8))
        for pattern in itertools.product([False, True], repeat=3):
            erased = np.array(pattern)
            if erased.all():
                continue
            recv = ErasedWord([1, 1, 1], erased)
            assert np.array_equal(decode_erasures(code, recv), [1])
        assert decode_erasures(code, ErasedWord([1, 1, 1], [True] * 3)) is None

    def test_length_mismatch(self):
        code = Gf2Code(np.eye(2, dtype=np.uint8))
        with pytest.raises(ValueError):
            decode_erasures(code, ErasedWord([1, 0, 1], [False] * 3))

    def test_never_wrong_fuzz(self):
        rng = np.random.default_rng(17)
        decoded_count = 0
        for _ in range(2000):
            r = int(rng.integers(1, 7))
            n = int(rng.integers(r, 13))
            code = random_code(rng, r, n)
            msg = rng.integers(0, 2, r, dtype=np.uint8)
            recv = transmit(code.encode(msg), BecChannel(rng.uniform(0, 0.8)), rng)
            out = decode_erasures(code, recv)
            if out is not None:
                decoded_count += 1
                assert np.array_equal(out, msg)
        assert decoded_count > 100  # fuzz actually exercised the success path


def brute_force_error_prob(r: int, n: int, zeta: float) -> float:
    """Exhaustive oracle through the real decoder: all generators x patterns."""
    total = 0.0
    msg = np.zeros(r, dtype=np.uint8)  # decodability does not depend on the message
    for gbits in itertools.product([0, 1], repeat=r * n):
        code = Gf2Code(np.array(gbits, dtype=np.uint8).reshape(r, n))
        word = code.encode(msg)
        for pattern in itertools.product([False, True], repeat=n):
            erased = np.array(pattern)
            weight = zeta ** erased.sum() * (1 - zeta) ** (n - erased.sum())
            if decode_erasures(code, ErasedWord(word, erased)) is None:
                total += weight
    return total / 2 ** (r * n)


class TestCodeErrorProb:
    def test_single_bit_single_use(self):
        assert code_error_prob(1, 1, BecChannel(0.5), "exact_small") == pytest.approx(
            0.75
        )

    def test_two_block_pinned(self):
        # frozen from the exhaustive oracle below: 9/16
        value = code_error_prob(1, 2, BecChannel(0.5), "exact_small")
        assert value == pytest.approx(0.5625)
        assert value == pytest.approx(brute_force_error_prob(1, 2, 0.5))

    @pytest.mark.parametrize("r,n", [(1, 1), (1, 3), (2, 3), (2, 4), (3, 4)])
    @pytest.mark.parametrize("zeta", [0.1, 0.5, 0.9])
    def test_exact_matches_brute_force(self, r, n, zeta):
        assert code_error_prob(r, n, BecChannel(zeta), "exact_small") == pytest.approx(
            brute_force_error_prob(r, n, zeta), abs=1e-12
        )

    def test_perfect_channel_nonzero_floor(self):
        # zeta = 0 still fails when the random generator is rank deficient
        value = code_error_prob(2, 2, BecChannel(0.0), "exact_small")
        assert value == pytest.approx(1.0 - 0.5 * 0.75)

    def test_monte_carlo_agrees_with_exact(self):
        for r, n, zeta in [(1, 4, 0.5), (2, 6, 0.1), (3, 8, 0.5), (4, 10, 0.9)]:
            exact = code_error_prob(r, n, BecChannel(zeta), "exact_small")
            rng = np.random.default_rng((r, n))
            mc = code_error_prob(r, n, BecChannel(zeta), "monte_carlo", 50_000, rng)
            se = math.sqrt(exact * (1 - exact) / 50_000)
            assert abs(mc - exact) <= 3 * se + 1e-9

    def test_monte_carlo_wide_blocklength_path(self):
        # n > 63 exercises the unpacked fallback
        rng = np.random.default_rng(8)
        value = code_error_prob(2, 70, BecChannel(0.5), "monte_carlo", 2000, rng)
        exact_rankstats = code_error_prob(2, 20, BecChannel(0.5), "exact_small")
        assert value <= exact_rankstats  # longer code, far more reliable

    def test_monotone_in_blocklength(self):
        ch = BecChannel(0.5)
        values = [code_error_prob(3, n, ch, "exact_small") for n in range(3, 16)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_budget_guard(self):
        with pytest.raises(ValueError):
            code_error_prob(3, 25, BecChannel(0.5), "exact_small")
        with pytest.raises(ValueError):
            code_error_prob(13, 15, BecChannel(0.5), "exact_small")


class TestQFunction:
    def test_symmetry_point(self):
        assert q_func(0.0) == 0.5
        assert q_inv(0.5) == 0.0

    def test_tail_value_against_quadrature(self):
        # independent high-precision oracle for the normal upper tail
        mpmath.mp.dps = 40
        oracle = float(mpmath.quad(
            lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi), [5, mpmath.inf]
        ))
        assert q_func(5.0) == pytest.approx(oracle, rel=1e-9)
        assert q_func(5.0) == pytest.approx(2.8665e-7, rel=1e-3)

    def test_symmetric_identity(self):
        for x in (-3.2, -0.4, 1.7):
            assert q_func(x) + q_func(-x) == pytest.approx(1.0, abs=1e-14)

    def test_round_trip(self):
        for x in np.linspace(-6, 6, 121):
            assert abs(q_inv(q_func(x)) - x) <= 1e-8

    def test_domain(self):
        with pytest.raises(ValueError):
            q_inv(0.0)
        with pytest.raises(ValueError):
            q_inv(1.0)


class TestNormalApprox:
    def test_known_point(self):
        assert normal_approx_pe(100, 25, BecChannel(0.5)) == pytest.approx(
            q_func(5.0), rel=1e-12
        )

    def test_rate_at_capacity_rejected(self):
        with pytest.raises(RateAboveCapacityError):
            normal_approx_pe(50, 25, BecChannel(0.5))

    def test_near_capacity_limit(self):
        # rate just below capacity: tail argument ~ 0+, failure prob ~ 1/2
        assert normal_approx_pe(10_001, 5000, BecChannel(0.5)) == pytest.approx(
            0.5, abs=1e-2
        )

    def test_zero_dispersion_channel(self):
        assert normal_approx_pe(5, 2, BecChannel(0.0)) == 0.0

    def test_strictly_decreasing_in_n(self):
        ch = BecChannel(0.4)
        values = [normal_approx_pe(n, 8, ch) for n in range(15, 60)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_increasing_in_zeta(self):
        values = [
            normal_approx_pe(40, 8, BecChannel(z)) for z in (0.1, 0.3, 0.5, 0.7)
        ]
        assert all(a < b for a, b in zip(values, values[1:]))


class TestBlocklengthInverse:
    def test_known_inverse(self):
        target = q_func(5.0)
        assert normal_approx_blocklength(target, 25, BecChannel(0.5)) == 100

    def test_loose_target_gives_min_feasible(self):
        ch = BecChannel(0.5)
        n = normal_approx_blocklength(0.4999, 25, ch)
        assert n >= min_feasible_blocklength(25, ch)
        # a target this close to 1/2 is met within a few bits of the rate limit
        assert n <= min_feasible_blocklength(25, ch) + 2

    def test_exact_smallest(self):
        rng = np.random.default_rng(31)
        for _ in range(40):
            r = int(rng.integers(1, 60))
            zeta = rng.uniform(0.05, 0.9)
            p = 10 ** rng.uniform(-8, -0.4)
            if p >= 0.5:
                continue
            ch = BecChannel(zeta)
            n = normal_approx_blocklength(p, r, ch)
            assert normal_approx_pe(n, r, ch) <= p
            if n - 1 >= min_feasible_blocklength(r, ch):
                assert normal_approx_pe(n - 1, r, ch) > p

    def test_target_domain(self):
        with pytest.raises(ValueError):
            normal_approx_blocklength(0.6, 4, BecChannel(0.5))
        with pytest.raises(RateAboveCapacityError):
            normal_approx_blocklength(0.1, 4, BecChannel(1.0))


class TestSimulatedPeModel:
    def test_deterministic_and_cached(self):
        model = simulated_pe_model(2, BecChannel(0.5), trials=5000, seed=4)
        first = model(6)
        assert model(6) == first
        again = simulated_pe_model(2, BecChannel(0.5), trials=5000, seed=4)
        assert again(6) == first

    def test_tracks_exact(self):
        model = simulated_pe_model(2, BecChannel(0.5), trials=50_000, seed=1)
        exact = code_error_prob(2, 8, BecChannel(0.5), "exact_small")
        se = math.sqrt(exact * (1 - exact) / 50_000)
        assert abs(model(8) - exact) <= 3 * se + 1e-9


class TestMessagePacking:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            widths = tuple(int(b) for b in rng.integers(1, 9, rng.integers(1, 4)))
            bins = tuple(int(rng.integers(0, 1 << w)) for w in widths)
            assert unpack_bins(pack_bins(bins, widths), widths) == bins

    def test_msb_first(self):
        assert np.array_equal(pack_bins((5,), (4,)), [0, 1, 0, 1])

    def test_validation(self):
        with pytest.raises(ValueError):
            pack_bins((4,), (2,))
        with pytest.raises(ValueError):
            unpack_bins(np.array([0, 1], dtype=np.uint8), (3,))
