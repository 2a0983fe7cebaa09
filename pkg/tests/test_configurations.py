"""Configuration combinatorics: overlaps, projections, fibers, sequences."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledsk.bits import popcounts
from coupledsk.configurations import (
    OverlapConstraint,
    SearchExhaustedError,
    SpinConfig,
    admissible_sequence,
    construct_u_prime,
    fiber_count,
    hamming,
    nearest_admissible,
    overlap,
    pair_count,
    project_pi,
    window_pair_count,
)


class TestOverlapHamming:
    def test_equal_and_opposite(self):
        s = SpinConfig(4, 0b0110)
        assert overlap(s, s) == 1
        assert hamming(s, s) == 0
        flipped = SpinConfig(4, s.bits ^ 0b1111)
        assert overlap(s, flipped) == -1
        assert hamming(s, flipped) == 1

    def test_single_flip(self):
        s1 = SpinConfig(4, 0b0000)
        s2 = SpinConfig(4, 0b0100)
        assert overlap(s1, s2) == Fraction(1, 2)
        assert hamming(s1, s2) == Fraction(1, 4)

    def test_identity_exhaustive(self):
        # exact in rational arithmetic for every pair at small n
        for n in (4, 6):
            for b1 in range(1 << n):
                s1 = SpinConfig(n, b1)
                for b2 in range(1 << n):
                    s2 = SpinConfig(n, b2)
                    assert overlap(s1, s2) == 1 - 2 * hamming(s1, s2)
        # and at n = 8 via the popcount identity r = (n - 2d)/n
        n = 8
        masks = np.arange(1 << n, dtype=np.int64)
        d = popcounts(n)[masks[:, None] ^ masks[None, :]]
        np.testing.assert_allclose((n - 2 * d) / n, 1.0 - 2.0 * (d / n), atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            overlap(SpinConfig(3, 0), SpinConfig(4, 0))

    def test_render(self):
        assert SpinConfig(4, 0b0001).render() == "-+++"


class TestOverlapConstraint:
    def test_parity_enforced(self):
        with pytest.raises(ValueError, match="parity"):
            OverlapConstraint(4, 1)
        with pytest.raises(ValueError, match="parity"):
            OverlapConstraint(3, 0)

    def test_fields(self):
        c = OverlapConstraint(6, 2)
        assert c.d == 2
        assert c.u == pytest.approx(1 / 3)
        assert c.u_fraction == Fraction(1, 3)

    def test_window_range(self):
        c = OverlapConstraint(6, 0, eps=1 / 3)
        assert c.window_disagreement_range() == (2, 4)
        full = OverlapConstraint(6, 0, eps=2.0)
        assert full.window_disagreement_range() == (0, 6)


class TestNearestAdmissible:
    def test_even_exact(self):
        assert nearest_admissible(4, 0.0).k == 0

    def test_odd_tie_positive(self):
        c = nearest_admissible(3, 0.0)
        assert c.k == 1
        assert abs(c.u - 0.0) <= 1 / 3

    def test_scan_oracle(self):
        # frozen from scanning all admissible k at n = 6
        assert nearest_admissible(6, 0.3).k == 2
        best = min(range(-6, 7, 2), key=lambda k: (abs(k / 6 - 0.3), abs(k)))
        assert best == 2

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(1, 16), u=st.floats(-1.0, 1.0))
    def test_guarantee(self, n, u):
        c = nearest_admissible(n, u)
        assert (c.k - n) % 2 == 0
        assert abs(c.u - u) <= 1.0 / n + 1e-12


class TestPairCount:
    def test_alignment(self):
        assert pair_count(OverlapConstraint(4, 4)) == 16

    @pytest.mark.parametrize(
        "n,k,expected", [(2, 0, 8), (4, 2, 64)]
    )
    def test_enumeration_oracle(self, n, k, expected):
        c = OverlapConstraint(n, k)
        brute = sum(
            1
            for a in range(1 << n)
            for b in range(1 << n)
            if bin(a ^ b).count("1") == c.d
        )
        assert pair_count(c) == brute == expected

    def test_all_admissible_small_sizes(self):
        for n in range(1, 9):
            pop = popcounts(n)
            xor = np.arange(1 << n)[:, None] ^ np.arange(1 << n)[None, :]
            for k in range(-n, n + 1, 2):
                c = OverlapConstraint(n, k)
                assert pair_count(c) == int(np.sum(pop[xor] == c.d))


class TestProjectPi:
    def test_exact_overlap_unchanged(self):
        s1 = SpinConfig(4, 0b0101)
        s2 = SpinConfig(4, 0b0110)  # d = 2, overlap 0
        c = OverlapConstraint(4, 0, eps=0.5)
        assert project_pi(s1, s2, c).bits == s2.bits

    def test_documented_flip(self):
        # one disagreement, target two: flip the lowest agreeing coordinate
        s1 = SpinConfig(4, 0b0000)
        s2 = SpinConfig(4, 0b0001)
        c = OverlapConstraint(4, 0, eps=0.5)
        out = project_pi(s1, s2, c)
        assert out.bits == 0b0011
        assert overlap(s1, out) == 0
        assert hamming(s2, out) == Fraction(1, 4)

    def test_outside_window_rejected(self):
        s1 = SpinConfig(4, 0b0000)
        s2 = SpinConfig(4, 0b1111)
        with pytest.raises(ValueError, match="window"):
            project_pi(s1, s2, OverlapConstraint(4, 4, eps=0.25))

    @pytest.mark.parametrize("eps", [1 / 3, 2 / 3])
    def test_exhaustive_postconditions(self, eps):
        n = 6
        c = OverlapConstraint(n, 0, eps=eps)
        for b1 in range(1 << n):
            s1 = SpinConfig(n, b1)
            for b2 in range(1 << n):
                s2 = SpinConfig(n, b2)
                if not c.contains((b1 ^ b2).bit_count()):
                    continue
                p = project_pi(s1, s2, c)
                assert overlap(s1, p) == c.u_fraction
                assert hamming(s2, p) <= Fraction(eps).limit_denominator(3) / 2
                # idempotence
                assert project_pi(s1, p, c).bits == p.bits


class TestFiberCount:
    def test_zero_width_fiber_is_singleton(self):
        s1 = SpinConfig(4, 0b0000)
        s2 = SpinConfig(4, 0b0011)
        rep = fiber_count(s1, s2, OverlapConstraint(4, 0), eps=0.0)
        assert rep.count == 1

    def test_entropy_bound_and_partition(self):
        n = 6
        c = OverlapConstraint(n, 0)
        eps = 1 / 3
        s1 = SpinConfig(n, 0b010110)
        total = 0
        window_card = None
        for b2 in range(1 << n):
            if (s1.bits ^ b2).bit_count() != c.d:
                continue
            rep = fiber_count(s1, SpinConfig(n, b2), c, eps)
            assert rep.count <= rep.bound
            total += rep.count
            window_card = rep.window_card
        # projection is total on the window: fibers partition it
        assert total == window_card == window_pair_count(
            OverlapConstraint(n, 0, eps=eps)
        ) // (1 << n)

    @pytest.mark.parametrize("n", [6, 8])
    def test_bound_across_widths(self, n):
        c = nearest_admissible(n, 0.0)
        s1 = SpinConfig(n, 0)
        s2 = SpinConfig(n, (1 << c.d) - 1)
        for eps in (0.0, 2 / n, 4 / n):
            rep = fiber_count(s1, s2, c, eps)
            assert rep.count <= rep.bound


class TestConstructUPrime:
    def test_alternating_sequence(self):
        def seq(m: int) -> Fraction:
            return Fraction(0) if m % 2 == 0 else Fraction(1, m)

        res = construct_u_prime(2, seq, m_max=20, u=0.0)
        assert res.value == 0
        assert set(range(2, 21, 2)) <= set(res.recurrence)

    def test_constant_sequence(self):
        res = construct_u_prime(3, lambda m: Fraction(1), m_max=10, u=1.0)
        assert res.value == 1
        assert res.constraint.k == 3

    def test_parity_forced(self):
        res = construct_u_prime(5, admissible_sequence(0.2), m_max=40, u=0.2)
        assert (res.constraint.k - 5) % 2 == 0
        assert abs(float(res.value) - 0.2) <= 2 / 5 + 1e-12

    def test_search_exhausted(self):
        vals = {1: Fraction(1), 2: Fraction(0), 3: Fraction(-1, 3), 4: Fraction(0)}

        def seq(m: int) -> Fraction:
            return vals[m]

        with pytest.raises(SearchExhaustedError):
            construct_u_prime(2, seq, m_max=2, u=0.0)

    def test_precondition_checked(self):
        with pytest.raises(ValueError, match="1/M"):
            construct_u_prime(2, lambda m: Fraction(1), m_max=6, u=0.0)
