"""Orthonormal modulation bases on the MN-sample frame grid.

Four families share one interface: classic OFDM (block subcarriers), AFDM
(quadratic chirps with exact rational chirp rates), OTSM (Walsh sequences in
natural Hadamard order spread over Doppler blocks), and Zak-OTFS pulsones.
Each basis is an MN x MN unitary; columns are the basis waveforms.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    ConfigurationError,
    DegeneratePilotError,
    ShapeError,
    UnsupportedConfigurationError,
)
from .frames import Constellation, FrameConfig

#: scheme tags accepted throughout the package
SCHEME_KINDS = ("ofdm", "afdm", "otsm", "zak-otfs")


def _as_fraction(value, name: str) -> Fraction:
    if isinstance(value, float):
        raise ConfigurationError(
            f"{name} must be exact (int, Fraction, string, or (num, den) pair), not float"
        )
    if isinstance(value, tuple):
        return Fraction(*value)
    return Fraction(value)


@dataclass(frozen=True)
class BasisScheme:
    """One concrete modulation basis bound to a frame geometry.

    ``c1``/``c2`` are the AFDM chirp rates, stored as exact fractions so all
    phases reduce to rational multiples of 2*pi; they are None for the other
    kinds.
    """

    kind: str
    config: FrameConfig
    c1: Fraction | None = None
    c2: Fraction | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEME_KINDS:
            raise ConfigurationError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "otsm" and (self.config.N & (self.config.N - 1)) != 0:
            raise UnsupportedConfigurationError(
                f"OTSM needs a power-of-two Doppler count, got N={self.config.N}"
            )
        if self.kind == "afdm":
            if self.c1 is None or self.c2 is None:
                raise ConfigurationError("AFDM needs both chirp rates c1 and c2")
        elif self.c1 is not None or self.c2 is not None:
            raise ConfigurationError(f"chirp rates only apply to AFDM, not {self.kind!r}")

    @property
    def tag(self) -> str:
        return self.kind


def ofdm_scheme(config: FrameConfig) -> BasisScheme:
    return BasisScheme("ofdm", config)


def zak_otfs_scheme(config: FrameConfig) -> BasisScheme:
    return BasisScheme("zak-otfs", config)


def otsm_scheme(config: FrameConfig) -> BasisScheme:
    return BasisScheme("otsm", config)


def afdm_scheme(config: FrameConfig, c1=None, c2=None) -> BasisScheme:
    """AFDM with exact rational chirp rates; defaults to c1 = c2 = 1/(2*MN)."""
    default = Fraction(1, 2 * config.MN)
    c1 = default if c1 is None else _as_fraction(c1, "c1")
    c2 = default if c2 is None else _as_fraction(c2, "c2")
    return BasisScheme("afdm", config, c1=c1, c2=c2)


def dft_p_fdma_scheme(config: FrameConfig, delta: int) -> BasisScheme:
    """AFDM specialization with c1 = c2 = delta/MN, gcd(delta, MN) = 1."""
    if not isinstance(delta, int) or delta < 1:
        raise ConfigurationError(f"delta must be a positive integer, got {delta!r}")
    if math.gcd(delta, config.MN) != 1:
        raise ConfigurationError(
            f"delta={delta} shares a factor with MN={config.MN}; the map would not permute"
        )
    c = Fraction(delta, config.MN)
    return BasisScheme("afdm", config, c1=c, c2=c)


def scheme_from_tag(tag: str, config: FrameConfig, c1=None, c2=None) -> BasisScheme:
    tag = tag.lower()
    if tag == "ofdm":
        return ofdm_scheme(config)
    if tag == "afdm":
        return afdm_scheme(config, c1=c1, c2=c2)
    if tag == "otsm":
        return otsm_scheme(config)
    if tag in ("zak-otfs", "zak_otfs", "zak"):
        return zak_otfs_scheme(config)
    raise ConfigurationError(f"unknown scheme tag {tag!r}; expected one of {SCHEME_KINDS}")


def _phase_grid(numerator: np.ndarray, denominator: int) -> np.ndarray:
    # exp(2j*pi*num/den) with the numerator already reduced mod den, so the
    # float angle stays in [0, 2*pi) and picks up no accumulation error
    return np.exp((2j * np.pi / denominator) * numerator)


def _ofdm_matrix(cfg: FrameConfig) -> np.ndarray:
    M, MN = cfg.M, cfg.MN
    n = np.arange(MN)[:, None]
    i = np.arange(MN)[None, :]
    same_block = (n // M) == (i // M)
    num = (n * i) % M
    return same_block * _phase_grid(num, M) / math.sqrt(M)


def _zak_matrix(cfg: FrameConfig) -> np.ndarray:
    M, N, MN = cfg.M, cfg.N, cfg.MN
    n = np.arange(MN)[:, None]
    i = np.arange(MN)[None, :]
    same_residue = (n % M) == (i % M)
    num = ((n // M) * (i // M)) % N
    return same_residue * _phase_grid(num, N) / math.sqrt(N)


def _otsm_matrix(cfg: FrameConfig) -> np.ndarray:
    M, N, MN = cfg.M, cfg.N, cfg.MN
    n = np.arange(MN)[:, None]
    i = np.arange(MN)[None, :]
    same_residue = (n % M) == (i % M)
    common_bits = np.bitwise_count((n // M) & (i // M))
    sign = 1.0 - 2.0 * (common_bits & 1)
    return (same_residue * sign / math.sqrt(N)).astype(complex)


def _afdm_matrix(cfg: FrameConfig, c1: Fraction, c2: Fraction) -> np.ndarray:
    MN = cfg.MN
    den = math.lcm(c1.denominator, c2.denominator, MN)
    a1 = c1.numerator * (den // c1.denominator)
    a2 = c2.numerator * (den // c2.denominator)
    ac = den // MN
    worst = (MN - 1) ** 2
    bound = (abs(a1) + abs(a2) + abs(ac)) * worst
    if bound >= 2**62:  # keep the vectorized int64 path exact
        raise ConfigurationError(
            f"chirp rates too extreme for exact integer phases (bound {bound:.3g})"
        )
    n = np.arange(MN, dtype=np.int64)[:, None]
    i = np.arange(MN, dtype=np.int64)[None, :]
    num = (a1 * n * n + a2 * i * i + ac * n * i) % den
    return _phase_grid(num, den) / math.sqrt(MN)


@functools.lru_cache(maxsize=64)
def basis_matrix(scheme: BasisScheme) -> np.ndarray:
    """The MN x MN synthesis matrix; column i is basis waveform i. Cached."""
    if scheme.kind == "ofdm":
        mat = _ofdm_matrix(scheme.config)
    elif scheme.kind == "zak-otfs":
        mat = _zak_matrix(scheme.config)
    elif scheme.kind == "otsm":
        mat = _otsm_matrix(scheme.config)
    else:
        mat = _afdm_matrix(scheme.config, scheme.c1, scheme.c2)
    mat.setflags(write=False)
    return mat


def basis_element(scheme: BasisScheme, i: int) -> np.ndarray:
    """Basis waveform i as a length-MN vector."""
    MN = scheme.config.MN
    if not (0 <= i < MN):
        raise ConfigurationError(f"basis index {i} outside [0, {MN})")
    return basis_matrix(scheme)[:, i].copy()


def modulate(scheme: BasisScheme, symbols: np.ndarray) -> np.ndarray:
    """Synthesize the sample frame x[n] = sum_i s[i] * phi_i[n]."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape != (scheme.config.MN,):
        raise ShapeError(
            f"symbol frame must have shape ({scheme.config.MN},), got {symbols.shape}"
        )
    return basis_matrix(scheme) @ symbols


def project(scheme: BasisScheme, samples: np.ndarray) -> np.ndarray:
    """Analysis side: inner products <phi_i, y> for every basis index."""
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (scheme.config.MN,):
        raise ShapeError(
            f"sample frame must have shape ({scheme.config.MN},), got {samples.shape}"
        )
    return basis_matrix(scheme).conj().T @ samples


def gram_deviation(matrix: np.ndarray) -> tuple[float, tuple[int, int]]:
    """Max |M^H M - I| and the (row, col) where it occurs."""
    gram = matrix.conj().T @ matrix
    gram -= np.eye(matrix.shape[1])
    flat = np.abs(gram)
    loc = np.unravel_index(np.argmax(flat), flat.shape)
    return float(flat[loc]), (int(loc[0]), int(loc[1]))


def gram_check(scheme: BasisScheme) -> float:
    """Worst-case orthonormality defect of the basis; ~1e-15 when healthy."""
    return gram_deviation(basis_matrix(scheme))[0]


def center_pilot_index(config: FrameConfig) -> int:
    """Index of the delay-Doppler bin at the middle of the grid."""
    return (config.M // 2) + config.M * (config.N // 2)


@dataclass(frozen=True)
class PilotFrame:
    """A transmitted reference frame plus whatever symbol content it carries.

    ``symbols`` is the symbol-domain view (a scaled delta for single-bin
    pilots, the full known alphabet draw for OFDM); ``index`` is the pilot
    bin for single-bin pilots and None otherwise.
    """

    samples: np.ndarray
    symbols: np.ndarray
    index: int | None


def pilot_frame(
    scheme: BasisScheme,
    constellation: Constellation | None = None,
    rng: np.random.Generator | None = None,
    index: int | None = None,
) -> PilotFrame:
    """Build the reference frame used for pilot-based estimation.

    Single-bin schemes transmit sqrt(MN) * phi_i on one delay-Doppler bin
    (default: the grid center) so the pilot frame carries the same energy MN
    as a data frame. OFDM has no usable single-bin pilot and instead sends a
    fully known frame drawn from the data constellation.
    """
    MN = scheme.config.MN
    if scheme.kind == "ofdm":
        if constellation is None or rng is None:
            raise ConfigurationError("OFDM pilot needs a constellation and an rng")
        if index is not None:
            raise ConfigurationError("OFDM uses a full known frame, not a pilot bin")
        symbols = constellation.points[rng.integers(0, constellation.order, size=MN)]
        return PilotFrame(samples=modulate(scheme, symbols), symbols=symbols, index=None)
    i = center_pilot_index(scheme.config) if index is None else index
    if not (0 <= i < MN):
        raise ConfigurationError(f"pilot index {i} outside [0, {MN})")
    symbols = np.zeros(MN, dtype=complex)
    symbols[i] = math.sqrt(MN)
    samples = math.sqrt(MN) * basis_element(scheme, i)
    if not np.any(samples):
        raise DegeneratePilotError("pilot frame has no energy")
    return PilotFrame(samples=samples, symbols=symbols, index=i)
