import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftnpolar.polar import (
    LLR_MAX,
    PolarCode,
    SCDecoder,
    encode,
    generator_matrix,
    polarize,
    sc_decode,
    select_frozen,
    transform,
)


def dense_encode(d):
    """GF(2) product with the explicit Kronecker-power matrix."""
    d = np.asarray(d, dtype=int)
    return (d @ generator_matrix(d.size).astype(int)) % 2


# -- independent SC reference ---------------------------------------------------
# LLR of bit i given the decided prefix, recomputed top-down for every bit with
# no shared state. O(N^2) per frame; only meant for tiny codes.

def _f(a, b):
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def bit_llr(llr, i, prefix):
    n = len(llr)
    if n == 1:
        return float(llr[0])
    half = n // 2
    a, b = np.asarray(llr[:half]), np.asarray(llr[half:])
    if i < half:
        return bit_llr(_f(a, b), i, prefix[:half])
    v1 = dense_encode(prefix[:half]) if half > 1 else np.asarray(prefix[:1])
    return bit_llr(np.where(v1 == 1, -a, a) + b, i - half, prefix[half:])


def sc_by_exhaustion(llr, code):
    """The SC output is the unique message whose every free bit equals the
    decision taken on its own prefix; find it by trying all 2^M messages."""
    free = code.info_positions
    found = []
    for msg in itertools.product([0, 1], repeat=code.m):
        d = np.zeros(code.n, dtype=int)
        d[free] = msg
        ok = all(int(bit_llr(llr, i, d[:i].tolist() + [0] * (code.n - i)) < 0) == d[i]
                 for i in free)
        if ok:
            found.append(np.array(msg))
    assert len(found) == 1
    return found[0]


class TestPolarize:
    def test_single_channel(self):
        np.testing.assert_array_equal(polarize(1, 0.5), [0.5])

    def test_worked_example(self):
        assert polarize(4, 0.5).tolist() == [0.0625, 0.4375, 0.5625, 0.9375]

    def test_two_channels(self):
        assert polarize(2, 0.5).tolist() == [0.25, 0.75]

    @pytest.mark.parametrize("n", [0, 3, 6, 1000])
    def test_non_power_of_two(self, n):
        with pytest.raises(ValueError):
            polarize(n, 0.5)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 12), st.floats(0.01, 0.99))
    def test_capacity_conservation(self, s, eps):
        # every level of the recursion conserves the total
        for level in range(s + 1):
            cap = polarize(2 ** level, eps)
            assert cap.sum() == pytest.approx(2 ** level * (1 - eps), abs=1e-9)
            assert np.all((cap >= 0) & (cap <= 1))

    @pytest.mark.parametrize("n", [2, 8, 64, 1024])
    def test_extremes_at_the_ends(self, n):
        cap = polarize(n, 0.5)
        assert cap[0] == cap.min()
        assert cap[-1] == cap.max()


class TestSelectFrozen:
    def test_worked_example(self):
        frozen = select_frozen(polarize(4, 0.5), 2)
        assert np.flatnonzero(~frozen).tolist() == [2, 3]  # 1-based {3, 4}

    def test_all_free_and_all_frozen(self):
        cap = polarize(16, 0.5)
        assert not select_frozen(cap, 16).any()
        assert select_frozen(cap, 0).all()

    def test_m_larger_than_n(self):
        with pytest.raises(ValueError):
            select_frozen(polarize(4, 0.5), 5)

    def test_ties_go_to_the_larger_index(self):
        frozen = select_frozen(np.array([0.5, 0.5, 0.5, 0.1]), 2)
        assert np.flatnonzero(~frozen).tolist() == [1, 2]

    @pytest.mark.parametrize("n,m", [(8, 4), (256, 100), (1024, 512)])
    def test_free_dominate_frozen(self, n, m):
        code = PolarCode(n, m)
        assert code.frozen.sum() == n - m
        assert code.capacities[~code.frozen].min() >= code.capacities[code.frozen].max()


class TestEncode:
    code = PolarCode(4, 2, 0.5)

    def test_message_11_scatters_to_0011(self):
        d = np.zeros(4, dtype=np.uint8)
        d[~self.code.frozen] = [1, 1]
        assert d.tolist() == [0, 0, 1, 1]

    def test_dense_product_oracle(self):
        x = encode([1, 1], self.code)
        np.testing.assert_array_equal(x, dense_encode([0, 0, 1, 1]))
        assert x.tolist() == [0, 1, 0, 1]

    def test_zero_message(self):
        code = PolarCode(64, 32)
        assert not encode(np.zeros(32, dtype=np.uint8), code).any()

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            encode([1, 0, 1], self.code)

    @pytest.mark.parametrize("n", [1, 2, 8, 32, 128])
    def test_butterfly_equals_matrix_product(self, n):
        rng = np.random.default_rng(n)
        d = rng.integers(0, 2, (20, n))
        np.testing.assert_array_equal(transform(d), (d @ generator_matrix(n)) % 2)

    def test_involution(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            n = 2 ** int(rng.integers(0, 9))
            d = rng.integers(0, 2, n, dtype=np.uint8)
            np.testing.assert_array_equal(transform(transform(d)), d)

    def test_batched(self):
        code = PolarCode(32, 16)
        rng = np.random.default_rng(1)
        u = rng.integers(0, 2, (5, 16), dtype=np.uint8)
        batch = encode(u, code)
        for row, x in zip(u, batch):
            np.testing.assert_array_equal(encode(row, code), x)


class TestSCDecode:
    @pytest.mark.parametrize("n,m", [(4, 2), (8, 4), (1024, 512)])
    def test_noiseless_round_trip(self, n, m):
        code = PolarCode(n, m)
        rng = np.random.default_rng(n)
        u = rng.integers(0, 2, (1000, m), dtype=np.uint8)
        llr = LLR_MAX * (1.0 - 2.0 * encode(u, code))
        u_hat, _ = SCDecoder(code).decode(llr)
        np.testing.assert_array_equal(u_hat, u)

    def test_all_frozen_decodes_to_zero(self):
        code = PolarCode(16, 0)
        rng = np.random.default_rng(2)
        u_hat, d_hat = sc_decode(rng.normal(size=16) * 5, code)
        assert u_hat.size == 0
        assert not d_hat.any()

    def test_matches_exhaustive_oracle(self):
        code = PolarCode(8, 4)
        rng = np.random.default_rng(11)
        dec = SCDecoder(code)
        for _ in range(200):
            u = rng.integers(0, 2, 4, dtype=np.uint8)
            x = encode(u, code)
            llr = 2 * ((1.0 - 2.0 * x) + rng.normal(0, 0.8, 8)) / 0.64
            u_hat, _ = dec.decode(llr)
            np.testing.assert_array_equal(u_hat, sc_by_exhaustion(llr, code))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sc_decode(np.zeros(7), PolarCode(8, 4))

    def test_infinite_llrs_are_clamped(self):
        code = PolarCode(8, 4)
        u = np.array([1, 0, 1, 1], dtype=np.uint8)
        llr = np.where(encode(u, code) == 0, np.inf, -np.inf)
        u_hat, _ = sc_decode(llr, code)
        np.testing.assert_array_equal(u_hat, u)

    def test_exact_f_agrees_when_noiseless(self):
        code = PolarCode(64, 32)
        u = np.random.default_rng(3).integers(0, 2, 32, dtype=np.uint8)
        llr = 8.0 * (1.0 - 2.0 * encode(u, code))
        u_hat, _ = sc_decode(llr, code, exact_f=True)
        np.testing.assert_array_equal(u_hat, u)

    def test_deterministic(self):
        code = PolarCode(128, 64)
        llr = np.random.default_rng(4).normal(1.0, 2.0, 128)
        a = sc_decode(llr, code)
        b = sc_decode(llr.copy(), code)
        np.testing.assert_array_equal(a[1], b[1])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.data())
    def test_round_trip_any_rate(self, s, data):
        n = 2 ** s
        m = data.draw(st.integers(0, n))
        code = PolarCode(n, m)
        u = np.array(data.draw(st.lists(st.integers(0, 1), min_size=m, max_size=m)),
                     dtype=np.uint8)
        u_hat, _ = sc_decode(5.0 * (1.0 - 2.0 * encode(u, code)), code)
        np.testing.assert_array_equal(u_hat, u)
