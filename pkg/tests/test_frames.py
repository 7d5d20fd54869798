"""Grid geometry, alphabets, Gray bit mapping, and seeded substreams."""

import numpy as np
import pytest

from ddlink.errors import ConfigurationError, ShapeError
from ddlink.frames import (
    Constellation,
    SeedSpec,
    make_config,
    map_bits,
    psk_constellation,
    roots_of_unity_sum,
    slice_symbols,
)


def test_reference_geometry_products(cfg):
    assert cfg.B == pytest.approx(390e3)
    assert cfg.T == pytest.approx(16 / 30e3)
    assert cfg.MN == 208


@pytest.mark.parametrize("M,N", [(0, 16), (13, 0), (-1, 4)])
def test_bad_grid_sizes_rejected(M, N):
    with pytest.raises(ConfigurationError):
        make_config(M, N, 30e3, 2.4e9)


def test_nonpositive_rates_rejected():
    with pytest.raises(ConfigurationError):
        make_config(13, 16, 0.0, 2.4e9)
    with pytest.raises(ConfigurationError):
        make_config(13, 16, 30e3, -1.0)


def test_qpsk_points(qpsk):
    assert qpsk.order == 4
    assert np.allclose(np.abs(qpsk.points), 1.0)
    assert abs(qpsk.points.mean()) < 1e-12
    assert np.allclose(qpsk.points, np.exp(2j * np.pi * np.arange(4) / 4))


def test_lumpy_alphabet_warns():
    with pytest.warns(UserWarning, match="unit-modulus zero-mean"):
        Constellation(np.array([1.0 + 0j, 1j]))  # mean (1+j)/2 != 0


def test_tiny_alphabet_rejected():
    with pytest.raises(ConfigurationError):
        Constellation(np.array([1.0 + 0j]))


def test_bit_mapping_needs_power_of_two_order():
    const = psk_constellation(3)  # valid alphabet, but 3 has no bit labels
    with pytest.raises(ConfigurationError):
        map_bits(np.zeros(4, dtype=np.uint8), const)


def test_documented_gray_labels(qpsk):
    got = map_bits(np.array([0, 0, 0, 1, 1, 1, 1, 0]), qpsk)
    assert np.allclose(got, [1.0, 1.0j, -1.0, -1.0j])


def test_gray_neighbours_differ_in_one_bit(qpsk):
    decoded = [slice_symbols(qpsk.points[i : i + 1], qpsk)[1] for i in range(4)]
    for i in range(4):
        flips = int(np.sum(decoded[i] != decoded[(i + 1) % 4]))
        assert flips == 1, f"points {i} and {(i + 1) % 4} differ in {flips} bits"


def test_bit_round_trip(qpsk):
    rng = np.random.default_rng(7)
    bits = rng.integers(0, 2, size=416).astype(np.uint8)
    symbols = map_bits(bits, qpsk)
    hard, decoded = slice_symbols(symbols, qpsk)
    assert np.array_equal(decoded, bits)
    assert np.allclose(hard, symbols)


def test_slicing_survives_small_noise(qpsk):
    rng = np.random.default_rng(8)
    bits = rng.integers(0, 2, size=200).astype(np.uint8)
    symbols = map_bits(bits, qpsk)
    noisy = symbols + 0.05 * (rng.standard_normal(100) + 1j * rng.standard_normal(100))
    _, decoded = slice_symbols(noisy, qpsk)
    assert np.array_equal(decoded, bits)


def test_map_bits_validation(qpsk):
    with pytest.raises(ConfigurationError):
        map_bits(np.array([0, 2]), qpsk)
    with pytest.raises(ShapeError):
        map_bits(np.array([0, 1, 0]), qpsk)  # not a multiple of 2 bits
    with pytest.raises(ShapeError):
        slice_symbols(np.ones((2, 2), dtype=complex), qpsk)


@pytest.mark.parametrize("n", [1, 2, 3, 8, 13, 16, 64])
def test_roots_of_unity_closed_form(n):
    for k in range(0, 2 * n + 1):
        expected = float(n) if k % n == 0 else 0.0
        assert abs(roots_of_unity_sum(n, k) - expected) < 1e-9


def test_roots_of_unity_rejects_bad_order():
    with pytest.raises(ConfigurationError):
        roots_of_unity_sum(0, 1)


def test_seed_streams_reproduce():
    seeds = SeedSpec(123)
    a = seeds.rng(5, "paths:nu=815").standard_normal(8)
    b = seeds.rng(5, "paths:nu=815").standard_normal(8)
    assert np.array_equal(a, b)


def test_seed_streams_separate_by_tag_and_trial():
    seeds = SeedSpec(123)
    base = seeds.rng(5, "paths:nu=815").standard_normal(8)
    assert not np.allclose(base, seeds.rng(5, "noise:nu=815").standard_normal(8))
    assert not np.allclose(base, seeds.rng(6, "paths:nu=815").standard_normal(8))
    assert not np.allclose(base, SeedSpec(124).rng(5, "paths:nu=815").standard_normal(8))


def test_negative_trial_index_rejected():
    with pytest.raises(ConfigurationError):
        SeedSpec(1).rng(-1, "x")
