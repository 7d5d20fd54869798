"""Detection front-ends: full MMSE over the frame and one-tap OFDM.

The frame-level channel matrix G applies the discrete delay-Doppler channel
to a symbol frame, G[n, i] = sum_{k,l} h[k,l] phi_i[(n-k) mod MN]
exp(2j*pi*l*(n-k)/MN). MMSE detection solves
s_soft = G^H (G G^H + sigma2 I)^{-1} y. Because every basis here is unitary,
G G^H equals H H^H for the basis-free time-domain operator H, which the
simulator exploits to skip forming G in its hot loop; the two routes agree
to rounding (see tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .channel import DDTaps
from .errors import DegeneratePilotError, NumericalError, ShapeError
from .frames import Constellation, slice_symbols
from .modulation import BasisScheme, basis_matrix, project


def time_channel_matrix(taps: DDTaps, MN: int) -> np.ndarray:
    """Dense MN x MN operator sending a sample frame through the channel.

    H[(m+k) mod MN, m] accumulates h[k,l] * exp(2j*pi*l*m/MN); applying H to
    x reproduces the noiseless channel output sample for sample.
    """
    if taps.k_max >= MN or taps.l_max >= MN / 2:
        raise ShapeError("tap box does not fit the frame torus")
    H = np.zeros((MN, MN), dtype=complex)
    m = np.arange(MN)
    for k, l, h in taps.items():
        H[(m + k) % MN, m] += h * np.exp(2j * np.pi * l * m / MN)
    return H


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """Frame-level channel matrix together with its provenance."""

    values: np.ndarray
    scheme: BasisScheme
    taps: DDTaps

    def __post_init__(self) -> None:
        MN = self.scheme.config.MN
        if self.values.shape != (MN, MN):
            raise ShapeError(f"channel matrix must be ({MN}, {MN}), got {self.values.shape}")


def build_G(taps: DDTaps, scheme: BasisScheme) -> ChannelMatrix:
    """Assemble G = H * Phi for the scheme's synthesis matrix Phi."""
    MN = scheme.config.MN
    H = time_channel_matrix(taps, MN)
    return ChannelMatrix(values=H @ basis_matrix(scheme), scheme=scheme, taps=taps)


def _regularized_solve(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    try:
        return cho_solve(cho_factor(A, lower=True, check_finite=False), y,
                         check_finite=False)
    except LinAlgError as exc:
        cond = float(np.linalg.cond(A))
        raise NumericalError(
            f"MMSE normal equations not positive definite (condition ~{cond:.3e}); "
            "the channel matrix is numerically singular at this noise level"
        ) from exc


def mmse_soft(G: ChannelMatrix | np.ndarray, y: np.ndarray, sigma2: float) -> np.ndarray:
    """Linear MMSE soft symbol estimates G^H (G G^H + sigma2 I)^{-1} y."""
    values = G.values if isinstance(G, ChannelMatrix) else np.asarray(G, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if y.shape != (values.shape[0],):
        raise ShapeError(f"y must have shape ({values.shape[0]},), got {y.shape}")
    if sigma2 < 0:
        raise NumericalError(f"sigma2 must be >= 0, got {sigma2}")
    A = values @ values.conj().T
    A[np.diag_indices_from(A)] += sigma2
    return values.conj().T @ _regularized_solve(A, y)


def mmse_detect(
    G: ChannelMatrix | np.ndarray,
    y: np.ndarray,
    sigma2: float,
    constellation: Constellation,
) -> np.ndarray:
    """MMSE estimate sliced to hard constellation decisions."""
    hard, _ = slice_symbols(mmse_soft(G, y, sigma2), constellation)
    return hard


def mmse_soft_from_taps(
    taps: DDTaps, scheme: BasisScheme, y: np.ndarray, sigma2: float
) -> np.ndarray:
    """Same estimate as ``mmse_soft(build_G(taps, scheme), y, sigma2)`` without
    forming G: G G^H = H H^H and G^H z = Phi^H (H^H z) for unitary Phi."""
    MN = scheme.config.MN
    H = time_channel_matrix(taps, MN)
    A = H @ H.conj().T
    A[np.diag_indices_from(A)] += sigma2
    z = _regularized_solve(A, np.asarray(y, dtype=complex))
    return basis_matrix(scheme).conj().T @ (H.conj().T @ z)


# ---------------------------------------------------------------------------
# OFDM one-tap processing


def ofdm_transfer_estimate(
    scheme: BasisScheme, y_ref: np.ndarray, ref_symbols: np.ndarray
) -> np.ndarray:
    """Per-subcarrier channel diagonals from a fully known frame."""
    if scheme.kind != "ofdm":
        raise ShapeError(f"one-tap processing is OFDM-only, got {scheme.kind!r}")
    ref_symbols = np.asarray(ref_symbols, dtype=complex)
    if np.any(ref_symbols == 0):
        raise DegeneratePilotError("reference symbols contain zeros; cannot divide")
    return project(scheme, y_ref) / ref_symbols


def ofdm_true_diagonal(scheme: BasisScheme, taps: DDTaps) -> np.ndarray:
    """Exact transfer-domain diagonals phi_i^H H phi_i of the true channel.

    Even perfect knowledge of these cannot undo inter-carrier coupling; that
    limitation is the point of keeping OFDM on a one-tap equalizer.
    """
    if scheme.kind != "ofdm":
        raise ShapeError(f"one-tap processing is OFDM-only, got {scheme.kind!r}")
    MN = scheme.config.MN
    H = time_channel_matrix(taps, MN)
    Phi = basis_matrix(scheme)
    return np.einsum("ni,ni->i", Phi.conj(), H @ Phi)


def ofdm_equalize_soft(
    scheme: BasisScheme, y: np.ndarray, diagonal: np.ndarray, sigma2: float
) -> np.ndarray:
    """One-tap MMSE: conj(d_i) / (|d_i|^2 + sigma2) applied per subcarrier."""
    diagonal = np.asarray(diagonal, dtype=complex)
    denom = np.abs(diagonal) ** 2 + sigma2
    weight = np.where(denom > 0, np.conj(diagonal) / np.where(denom > 0, denom, 1.0), 0.0)
    return weight * project(scheme, y)


def ofdm_one_tap(
    scheme: BasisScheme,
    constellation: Constellation,
    y: np.ndarray,
    ref_symbols: np.ndarray,
    y_ref: np.ndarray,
    sigma2: float,
) -> np.ndarray:
    """Estimate diagonals from a known reference frame, equalize, and slice."""
    diagonal = ofdm_transfer_estimate(scheme, y_ref, ref_symbols)
    soft = ofdm_equalize_soft(scheme, y, diagonal, sigma2)
    hard, _ = slice_symbols(soft, constellation)
    return hard


def spectral_radius_check(G: ChannelMatrix) -> float:
    """Largest singular value of G; handy when judging conditioning."""
    return float(np.linalg.norm(G.values, 2))
