"""MMSE detection routes and the one-tap OFDM front-end."""

import numpy as np
import pytest

from ddlink.channel import SupportMask, apply_channel, single_tap
from ddlink.equalization import (
    build_G,
    mmse_detect,
    mmse_soft,
    mmse_soft_from_taps,
    ofdm_equalize_soft,
    ofdm_one_tap,
    ofdm_transfer_estimate,
    ofdm_true_diagonal,
    spectral_radius_check,
    time_channel_matrix,
)
from ddlink.errors import DegeneratePilotError, NumericalError, ShapeError
from ddlink.frames import slice_symbols
from ddlink.modulation import basis_matrix, modulate, pilot_frame, scheme_from_tag

TAGS = ("ofdm", "afdm", "otsm", "zak-otfs")


def test_time_operator_matches_sample_route(random_taps):
    rng = np.random.default_rng(51)
    taps = random_taps(rng, SupportMask(3, 3))
    MN = 24
    x = rng.standard_normal(MN) + 1j * rng.standard_normal(MN)
    H = time_channel_matrix(taps, MN)
    assert np.allclose(H @ x, apply_channel(taps, x), atol=1e-12)


def test_time_operator_box_must_fit(random_taps):
    rng = np.random.default_rng(52)
    taps = random_taps(rng, SupportMask(3, 3))
    with pytest.raises(ShapeError):
        time_channel_matrix(taps, 6)


@pytest.mark.parametrize("tag", TAGS)
def test_frame_matrix_agrees_with_sample_route(cfg, qpsk, tag, random_taps):
    rng = np.random.default_rng(53)
    scheme = scheme_from_tag(tag, cfg)
    taps = random_taps(rng, SupportMask(4, 4))
    s = qpsk.points[rng.integers(0, 4, size=cfg.MN)]
    direct = apply_channel(taps, modulate(scheme, s))
    assert np.allclose(build_G(taps, scheme).values @ s, direct, atol=1e-10)


def test_scalar_mmse_closed_form():
    g = 0.8 - 0.3j
    y = np.array([1.0 + 2.0j])
    sigma2 = 0.5
    got = mmse_soft(np.array([[g]]), y, sigma2)
    assert got[0] == pytest.approx(np.conj(g) * y[0] / (abs(g) ** 2 + sigma2))


def test_mmse_matches_normal_equations_oracle():
    rng = np.random.default_rng(54)
    MN = 12
    G = rng.standard_normal((MN, MN)) + 1j * rng.standard_normal((MN, MN))
    y = rng.standard_normal(MN) + 1j * rng.standard_normal(MN)
    sigma2 = 0.3
    # (G^H G + s I)^(-1) G^H y is the same estimate through the other identity
    oracle = np.linalg.solve(G.conj().T @ G + sigma2 * np.eye(MN), G.conj().T @ y)
    assert np.allclose(mmse_soft(G, y, sigma2), oracle, atol=1e-9)


@pytest.mark.parametrize("tag", TAGS)
def test_taps_route_equals_dense_route(cfg, tag, random_taps):
    rng = np.random.default_rng(55)
    scheme = scheme_from_tag(tag, cfg)
    taps = random_taps(rng, SupportMask(3, 4))
    y = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
    dense = mmse_soft(build_G(taps, scheme), y, 0.1)
    fast = mmse_soft_from_taps(taps, scheme, y, 0.1)
    assert np.abs(dense - fast).max() < 1e-10


def test_high_snr_detection_recovers_symbols(cfg, qpsk):
    rng = np.random.default_rng(56)
    scheme = scheme_from_tag("zak-otfs", cfg)
    taps = single_tap(SupportMask(2, 2), 1, 1, 1.0)  # unitary single shift
    s = qpsk.points[rng.integers(0, 4, size=cfg.MN)]
    y = apply_channel(taps, modulate(scheme, s))
    hard = mmse_detect(build_G(taps, scheme), y, 1e-8, qpsk)
    assert np.array_equal(hard, s)


def test_singular_normal_equations_raise():
    with pytest.raises(NumericalError, match="condition"):
        mmse_soft(np.zeros((4, 4), dtype=complex), np.ones(4, dtype=complex), 0.0)


def test_negative_noise_rejected():
    with pytest.raises(NumericalError):
        mmse_soft(np.eye(2, dtype=complex), np.ones(2, dtype=complex), -1.0)


def test_mmse_shape_checks(cfg, random_taps):
    rng = np.random.default_rng(57)
    G = build_G(random_taps(rng, SupportMask(2, 2)), scheme_from_tag("ofdm", cfg))
    with pytest.raises(ShapeError):
        mmse_soft(G, np.ones(cfg.MN - 1, dtype=complex), 0.1)


def test_channel_matrix_shape_guard(cfg, random_taps):
    from ddlink.equalization import ChannelMatrix

    rng = np.random.default_rng(58)
    taps = random_taps(rng, SupportMask(2, 2))
    with pytest.raises(ShapeError):
        ChannelMatrix(values=np.eye(4, dtype=complex),
                      scheme=scheme_from_tag("ofdm", cfg), taps=taps)


# ---------------------------------------------------------------------------
# one-tap OFDM processing


def test_transfer_estimate_exact_on_flat_channel(cfg, qpsk):
    scheme = scheme_from_tag("ofdm", cfg)
    taps = single_tap(SupportMask(0, 0), 0, 0, 0.7 - 0.2j)
    pf = pilot_frame(scheme, constellation=qpsk, rng=np.random.default_rng(59))
    diag = ofdm_transfer_estimate(scheme, apply_channel(taps, pf.samples), pf.symbols)
    assert np.allclose(diag, 0.7 - 0.2j, atol=1e-10)


def test_true_diagonal_matches_definition(cfg, random_taps):
    rng = np.random.default_rng(60)
    scheme = scheme_from_tag("ofdm", cfg)
    taps = random_taps(rng, SupportMask(3, 3))
    H = time_channel_matrix(taps, cfg.MN)
    Phi = basis_matrix(scheme)
    expected = np.array([Phi[:, i].conj() @ H @ Phi[:, i] for i in range(cfg.MN)])
    assert np.allclose(ofdm_true_diagonal(scheme, taps), expected, atol=1e-12)


def test_one_tap_cannot_undo_doppler_coupling(cfg, qpsk):
    # a half-subcarrier Doppler couples neighbours; even the true diagonals
    # leave symbol errors, while the full-frame detector removes all of them
    rng = np.random.default_rng(61)
    scheme = scheme_from_tag("ofdm", cfg)
    taps = single_tap(SupportMask(0, 8), 0, 8, 1.0)
    s = qpsk.points[rng.integers(0, 4, size=cfg.MN)]
    y = apply_channel(taps, modulate(scheme, s))
    soft = ofdm_equalize_soft(scheme, y, ofdm_true_diagonal(scheme, taps), 1e-6)
    hard, _ = slice_symbols(soft, qpsk)
    assert np.count_nonzero(hard != s) > 10
    full = mmse_detect(build_G(taps, scheme), y, 1e-6, qpsk)
    assert np.count_nonzero(full != s) == 0


def test_zero_diagonal_yields_finite_zero_output(cfg):
    scheme = scheme_from_tag("ofdm", cfg)
    soft = ofdm_equalize_soft(scheme, np.ones(cfg.MN, dtype=complex),
                              np.zeros(cfg.MN, dtype=complex), 0.0)
    assert np.all(soft == 0) and np.all(np.isfinite(soft))


def test_zero_reference_symbols_rejected(cfg):
    scheme = scheme_from_tag("ofdm", cfg)
    with pytest.raises(DegeneratePilotError):
        ofdm_transfer_estimate(scheme, np.ones(cfg.MN, dtype=complex),
                               np.zeros(cfg.MN, dtype=complex))


def test_one_tap_is_ofdm_only(cfg):
    taps = single_tap(SupportMask(0, 0), 0, 0, 1.0)
    with pytest.raises(ShapeError):
        ofdm_true_diagonal(scheme_from_tag("zak-otfs", cfg), taps)
    with pytest.raises(ShapeError):
        ofdm_transfer_estimate(scheme_from_tag("otsm", cfg),
                               np.ones(cfg.MN, dtype=complex),
                               np.ones(cfg.MN, dtype=complex))


def test_one_tap_pipeline_on_flat_channel(cfg, qpsk):
    rng = np.random.default_rng(62)
    scheme = scheme_from_tag("ofdm", cfg)
    taps = single_tap(SupportMask(0, 0), 0, 0, 0.9 * np.exp(0.4j))
    pf = pilot_frame(scheme, constellation=qpsk, rng=rng)
    s = qpsk.points[rng.integers(0, 4, size=cfg.MN)]
    hard = ofdm_one_tap(scheme, qpsk, apply_channel(taps, modulate(scheme, s)),
                        pf.symbols, apply_channel(taps, pf.samples), 1e-4)
    assert np.array_equal(hard, s)


def test_spectral_radius_of_unitary_channel_is_one(cfg):
    taps = single_tap(SupportMask(1, 1), 0, 1, 1.0)
    G = build_G(taps, scheme_from_tag("zak-otfs", cfg))
    assert spectral_radius_check(G) == pytest.approx(1.0, rel=1e-10)
