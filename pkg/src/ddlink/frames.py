"""Frame geometry, PSK constellations, bit mapping, and deterministic seeding.

A frame is a length-MN complex vector sampled at rate B = M*delta_f over a
duration T = N/delta_f, so the time-bandwidth product B*T equals MN and the
delay-Doppler grid has M delay bins of width 1/B and N Doppler bins of width
1/T.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError

SPEED_OF_LIGHT = 299_792_458.0  # m/s, used by channel evolution


@dataclass(frozen=True)
class FrameConfig:
    """Grid geometry for one transmission frame.

    Attributes
    ----------
    M, N : int
        Delay and Doppler bin counts. The frame carries MN = M*N samples.
    delta_f : float
        Subcarrier spacing in Hz. Bandwidth is B = M*delta_f and frame
        duration T = N/delta_f.
    f_c : float
        Carrier frequency in Hz, used only by channel evolution.
    """

    M: int
    N: int
    delta_f: float
    f_c: float

    def __post_init__(self) -> None:
        if not (isinstance(self.M, int) and isinstance(self.N, int)):
            raise ConfigurationError("M and N must be integers")
        if self.M < 1 or self.N < 1:
            raise ConfigurationError(f"M and N must be >= 1, got M={self.M}, N={self.N}")
        if not (self.delta_f > 0 and math.isfinite(self.delta_f)):
            raise ConfigurationError(f"delta_f must be positive and finite, got {self.delta_f}")
        if not (self.f_c > 0 and math.isfinite(self.f_c)):
            raise ConfigurationError(f"f_c must be positive and finite, got {self.f_c}")

    @property
    def B(self) -> float:
        """Bandwidth in Hz."""
        return self.M * self.delta_f

    @property
    def T(self) -> float:
        """Frame duration in seconds."""
        return self.N / self.delta_f

    @property
    def MN(self) -> int:
        """Samples per frame; equals the time-bandwidth product B*T."""
        return self.M * self.N


def make_config(M: int, N: int, delta_f: float, f_c: float) -> FrameConfig:
    """Validate and freeze a frame geometry."""
    return FrameConfig(M=M, N=N, delta_f=float(delta_f), f_c=float(f_c))


class Constellation:
    """A finite symbol alphabet with Gray bit labels.

    The data-based estimator is unbiased only for i.i.d. unit-energy
    zero-mean alphabets, so construction warns when either property fails.
    """

    #: tolerance on unit modulus and zero mean
    TOL = 1e-12

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=complex)
        if points.ndim != 1 or points.size < 2:
            raise ConfigurationError("a constellation needs at least 2 points in a 1-d array")
        self.points = points
        self.points.setflags(write=False)
        self.order = points.size
        radius_err = float(np.max(np.abs(np.abs(points) - 1.0)))
        mean_mag = float(abs(points.mean()))
        if radius_err > self.TOL or mean_mag > self.TOL:
            warnings.warn(
                "constellation is not unit-modulus zero-mean; the unbiasedness "
                "hypothesis behind data-based estimation is violated "
                f"(radius error {radius_err:.3g}, mean magnitude {mean_mag:.3g})",
                UserWarning,
                stacklevel=2,
            )

    @property
    def bits_per_symbol(self) -> int:
        b = self.order.bit_length() - 1
        if (1 << b) != self.order:
            raise ConfigurationError(
                f"bit mapping needs a power-of-two order, got {self.order}"
            )
        return b

    def __len__(self) -> int:
        return self.order

    def __repr__(self) -> str:
        return f"Constellation(order={self.order})"


def psk_constellation(order: int) -> Constellation:
    """Unit-circle alphabet with points exp(2j*pi*m/order), m = 0..order-1."""
    if not isinstance(order, int) or order < 2:
        raise ConfigurationError(f"PSK order must be an integer >= 2, got {order!r}")
    m = np.arange(order)
    return Constellation(np.exp(2j * np.pi * m / order))


def _gray_tables(bits: int) -> tuple[np.ndarray, np.ndarray]:
    # value -> gray index, and its inverse
    values = np.arange(1 << bits)
    gray = values ^ (values >> 1)
    inverse = np.empty_like(gray)
    inverse[gray] = values
    return gray, inverse


def map_bits(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Map a bit vector to symbols, Gray-labelled, MSB first within a symbol.

    For 4-PSK the groups 00, 01, 11, 10 map to 1, j, -1, -j.
    """
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ShapeError("bits must be a 1-d vector")
    if not np.all((bits == 0) | (bits == 1)):
        raise ConfigurationError("bits must contain only 0 and 1")
    b = constellation.bits_per_symbol
    if bits.size % b != 0:
        raise ShapeError(f"bit count {bits.size} is not a multiple of {b}")
    groups = bits.reshape(-1, b).astype(np.int64)
    weights = 1 << np.arange(b - 1, -1, -1)
    values = groups @ weights
    gray, _ = _gray_tables(b)
    return constellation.points[gray[values]]


def slice_symbols(
    soft: np.ndarray, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Hard-decide each soft value to the nearest constellation point.

    Ties resolve to the lowest point index, so the decision is deterministic.
    Returns the hard symbols and the corresponding Gray-decoded bit vector.
    """
    soft = np.asarray(soft, dtype=complex)
    if soft.ndim != 1:
        raise ShapeError("soft symbols must be a 1-d vector")
    dist = np.abs(soft[:, None] - constellation.points[None, :])
    idx = np.argmin(dist, axis=1)  # argmin takes the first minimum: lowest index
    hard = constellation.points[idx]
    b = constellation.bits_per_symbol
    _, inverse = _gray_tables(b)
    values = inverse[idx]
    shifts = np.arange(b - 1, -1, -1)
    bits = ((values[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return hard, bits.reshape(-1)


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus the derivation rule for independent substreams.

    A stream is keyed by (master_seed, trial_index, stream_tag). The tag is
    hashed with BLAKE2s so the mapping is stable across runs and platforms,
    and the triple feeds one ``numpy.random.SeedSequence``. Streams for
    different triples are independent; the same triple always reproduces the
    same stream.
    """

    master_seed: int

    def rng(self, trial_index: int, stream_tag: str) -> np.random.Generator:
        if trial_index < 0:
            raise ConfigurationError(f"trial_index must be >= 0, got {trial_index}")
        digest = hashlib.blake2s(stream_tag.encode("utf-8"), digest_size=8).digest()
        tag_word = int.from_bytes(digest, "little")
        entropy = (self.master_seed & 0xFFFFFFFFFFFFFFFF, trial_index, tag_word)
        return np.random.default_rng(np.random.SeedSequence(entropy))


def roots_of_unity_sum(n: int, k: int) -> complex:
    """Directly summed sum_{m=0}^{n-1} exp(2j*pi*k*m/n).

    Equals n when k is a multiple of n and 0 otherwise; kept as an explicit
    summation so tests can compare it against that closed form.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    m = np.arange(n)
    return complex(np.exp(2j * np.pi * k * m / n).sum())
