"""Cross-ambiguity surfaces and ambiguity-based channel estimation.

The discrete cross-ambiguity of a received frame y against a reference x,

    A[k, l] = (1/MN) * sum_n y[n] * conj(x[(n-k) mod MN]) * exp(-2j*pi*l*(n-k)/MN),

is itself the channel estimate: in the noiseless case it equals the true
taps twisted-convolved with the self-ambiguity of x, and for i.i.d.
unit-energy zero-mean symbol frames that self-ambiguity is a thumbtack in
expectation, so reading A off over the tap support box is an unbiased
estimator whether x is a pilot or re-modulated data decisions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .channel import DDTaps, SupportMask
from .errors import DegeneratePilotError, ShapeError
from .frames import Constellation
from .modulation import BasisScheme, modulate


@dataclass(frozen=True, eq=False)
class AmbiguitySurface:
    """Full-torus ambiguity values; entry [k, l] covers k, l in 0..MN-1.

    Both axes are periodic, so signed Doppler shifts live at l mod MN.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"surface must be square, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def MN(self) -> int:
        return self.values.shape[0]

    def at(self, k: int, l: int) -> complex:
        return complex(self.values[k % self.MN, l % self.MN])

    @property
    def origin(self) -> complex:
        return complex(self.values[0, 0])

    def max_off_origin(self) -> float:
        mags = np.abs(self.values).copy()
        mags[0, 0] = 0.0
        return float(mags.max())

    def restrict(self, mask: SupportMask) -> DDTaps:
        """Read the surface off over a support box with signed Doppler."""
        k_idx = mask.k_values % self.MN
        l_idx = mask.l_values % self.MN
        return DDTaps(mask.k_max, mask.l_max, self.values[np.ix_(k_idx, l_idx)])


def _check_reference(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ShapeError("reference frame must be 1-d")
    if not np.any(x):
        raise DegeneratePilotError("reference frame is identically zero")
    return x


def _ambiguity_rows(y: np.ndarray, x: np.ndarray, k_values: np.ndarray) -> np.ndarray:
    # row k holds the length-MN DFT over m of y[(m+k) mod MN] * conj(x[m])
    MN = x.size
    m = np.arange(MN)
    shifted = y[(m[None, :] + k_values[:, None]) % MN]
    return np.fft.fft(shifted * np.conj(x)[None, :], axis=1) / MN


def cross_ambiguity(y: np.ndarray, x: np.ndarray) -> AmbiguitySurface:
    """Full cross-ambiguity surface of y against reference x."""
    x = _check_reference(x)
    y = np.asarray(y, dtype=complex)
    if y.shape != x.shape:
        raise ShapeError(f"y and x must have equal shapes, got {y.shape} vs {x.shape}")
    rows = _ambiguity_rows(y, x, np.arange(x.size))
    return AmbiguitySurface(rows)


def self_ambiguity(x: np.ndarray) -> AmbiguitySurface:
    return cross_ambiguity(x, x)


def estimate_taps(
    y: np.ndarray,
    x_ref: np.ndarray,
    mask: SupportMask,
    threshold: float | None = None,
) -> DDTaps:
    """Channel estimate: the cross-ambiguity read off over the support box.

    No denoising happens by default. ``threshold`` optionally zeroes taps
    whose magnitude falls below threshold * max |tap|.
    """
    x_ref = _check_reference(x_ref)
    y = np.asarray(y, dtype=complex)
    if y.shape != x_ref.shape:
        raise ShapeError(f"y and x_ref must have equal shapes, got {y.shape} vs {x_ref.shape}")
    MN = x_ref.size
    if mask.k_max >= MN or mask.l_max >= MN / 2:
        raise ShapeError("support box does not fit the frame torus")
    rows = _ambiguity_rows(y, x_ref, mask.k_values)
    values = rows[:, mask.l_values % MN]
    if threshold is not None:
        floor = threshold * float(np.abs(values).max())
        values = np.where(np.abs(values) >= floor, values, 0.0)
    return DDTaps(mask.k_max, mask.l_max, values)


def twisted_convolve_discrete(taps: DDTaps, surface: AmbiguitySurface) -> AmbiguitySurface:
    """Discrete twisted convolution of sparse taps with a full surface:

    out[k, l] = sum_{k',l'} h[k',l'] * A[(k-k') mod MN, (l-l') mod MN]
                * exp(2j*pi*l'*(k-k')/MN)
    """
    MN = surface.MN
    if taps.k_max >= MN or taps.l_max >= MN / 2:
        raise ShapeError("tap box does not fit the surface torus")
    k = np.arange(MN)
    out = np.zeros((MN, MN), dtype=complex)
    for kp, lp, h in taps.items():
        phase = np.exp(2j * np.pi * lp * ((k - kp) % MN) / MN)
        out += h * np.roll(surface.values, (kp, lp), axis=(0, 1)) * phase[:, None]
    return AmbiguitySurface(out)


@dataclass(frozen=True)
class ThumbtackDiagnostic:
    """Monte-Carlo evidence that E[A_x] is a thumbtack for a scheme.

    ``checkpoints`` pairs trial counts with the max off-origin magnitude of
    the running mean surface, so the 1/sqrt(trials) decay is inspectable.
    """

    mean_surface: AmbiguitySurface
    trials: int
    origin_max_error: float
    max_off_origin: float
    checkpoints: tuple[tuple[int, float], ...]

    def decay_slope(self) -> float:
        """Least-squares slope of log10(floor) against log10(trials)."""
        counts = np.array([c for c, _ in self.checkpoints], dtype=float)
        floors = np.array([f for _, f in self.checkpoints], dtype=float)
        if counts.size < 2:
            raise ValueError("need at least two checkpoints to fit a slope")
        return float(np.polyfit(np.log10(counts), np.log10(floors), 1)[0])


def expected_thumbtack(
    scheme: BasisScheme,
    constellation: Constellation,
    trials: int,
    rng: np.random.Generator,
    checkpoint_counts: tuple[int, ...] | None = None,
) -> ThumbtackDiagnostic:
    """Average the self-ambiguity of random data frames.

    Draws i.i.d. symbols uniformly from the constellation, modulates, and
    accumulates A_x. The origin is 1 for every frame by construction
    (unit-energy symbols on an orthonormal basis); off-origin entries only
    vanish in the mean, at the Monte-Carlo rate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    MN = scheme.config.MN
    if checkpoint_counts is None:
        checkpoint_counts = tuple(
            sorted({min(trials, 10**e) for e in range(1, 1 + math.ceil(math.log10(trials)))}
                   | {trials}))
    running = np.zeros((MN, MN), dtype=complex)
    origin_max_error = 0.0
    checkpoints = []
    pending = sorted(set(checkpoint_counts))
    for t in range(1, trials + 1):
        symbols = constellation.points[rng.integers(0, constellation.order, size=MN)]
        surface = self_ambiguity(modulate(scheme, symbols))
        running += surface.values
        origin_max_error = max(origin_max_error, abs(surface.origin - 1.0))
        if pending and t == pending[0]:
            pending.pop(0)
            mean = np.abs(running) / t
            mean[0, 0] = 0.0
            checkpoints.append((t, float(mean.max())))
    mean_surface = AmbiguitySurface(running / trials)
    return ThumbtackDiagnostic(
        mean_surface=mean_surface,
        trials=trials,
        origin_max_error=origin_max_error,
        max_off_origin=mean_surface.max_off_origin(),
        checkpoints=tuple(checkpoints),
    )


def surface_to_csv(surface: AmbiguitySurface, path) -> None:
    """Write a full surface as rows of (k, l, re, im, abs)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "l", "re", "im", "abs"])
        for k in range(surface.MN):
            for l in range(surface.MN):
                value = surface.values[k, l]
                writer.writerow([
                    k, l,
                    f"{value.real:.12e}", f"{value.imag:.12e}", f"{abs(value):.12e}",
                ])
