"""Doubly-selective channels on the delay-Doppler grid.

A physical channel is a finite set of paths (delay, Doppler, complex gain).
Passing it through the transmit pulse and its matched filter by twisted
convolution, then sampling on the (1/B, 1/T) grid, yields the discrete taps
h[k, l] that the rest of the simulator works with:

    y[n] = sum_{k,l} h[k,l] * x[(n-k) mod MN] * exp(2j*pi*l*(n-k)/MN) + w[n]
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.integrate import quad

from .errors import ConfigurationError, NumericalError, ShapeError
from .frames import SPEED_OF_LIGHT, FrameConfig

# Vehicular-A power-delay profile (excess delay in us, relative power in dB)
VEH_A_DELAYS_US = (0.0, 0.31, 0.71, 1.09, 1.73, 2.51)
VEH_A_POWERS_DB = (0.0, -1.0, -9.0, -10.0, -15.0, -20.0)


# ---------------------------------------------------------------------------
# path sets


@dataclass(frozen=True, eq=False)
class PathSet:
    """Sparse physical channel: parallel arrays of delay, Doppler, and gain.

    ``tau_max`` always equals the largest delay present; ``nu_max`` is the
    configured Doppler bound, which must dominate every per-path Doppler.
    Delays may dip slightly below zero: aging a zero-delay path with a
    negative Doppler shortens its delay.
    """

    delays: np.ndarray
    dopplers: np.ndarray
    gains: np.ndarray
    tau_max: float
    nu_max: float

    def __post_init__(self) -> None:
        d = np.asarray(self.delays, dtype=float)
        nu = np.asarray(self.dopplers, dtype=float)
        g = np.asarray(self.gains, dtype=complex)
        if not (d.ndim == nu.ndim == g.ndim == 1 and d.size == nu.size == g.size):
            raise ShapeError("delays, dopplers, gains must be 1-d arrays of equal length")
        if not np.all(np.isfinite(d)):
            raise ConfigurationError("path delays must be finite")
        expect_tau = float(d.max()) if d.size else 0.0
        if abs(self.tau_max - expect_tau) > 1e-15 + 1e-9 * abs(expect_tau):
            raise ConfigurationError(
                f"tau_max={self.tau_max!r} must equal the largest delay {expect_tau!r}"
            )
        if d.size and np.abs(nu).max() > self.nu_max * (1 + 1e-9) + 1e-12:
            raise ConfigurationError("a path Doppler exceeds the configured nu_max bound")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "dopplers", nu)
        object.__setattr__(self, "gains", g)

    @property
    def P(self) -> int:
        return self.delays.size


def make_path_set(delays, dopplers, gains, nu_max: float) -> PathSet:
    delays = np.asarray(delays, dtype=float)
    tau_max = float(delays.max()) if delays.size else 0.0
    return PathSet(delays, np.asarray(dopplers, float), np.asarray(gains, complex),
                   tau_max=tau_max, nu_max=float(nu_max))


def load_power_delay_profile(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column text table: excess delay in us, relative power in dB.

    Blank lines and '#' comments are ignored.
    """
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape[1] != 2:
        raise ConfigurationError(
            f"profile table needs exactly 2 columns (delay_us, power_db), got {table.shape[1]}"
        )
    if table.shape[0] == 0:
        raise ConfigurationError("profile table is empty")
    return table[:, 0].copy(), table[:, 1].copy()


def default_profile() -> tuple[np.ndarray, np.ndarray]:
    """The bundled Vehicular-A table."""
    ref = resources.files("ddlink") / "data" / "veh_a.txt"
    with resources.as_file(ref) as path:
        return load_power_delay_profile(path)


def veh_a_paths(
    rng: np.random.Generator,
    nu_max: float,
    profile: tuple[np.ndarray, np.ndarray] | None = None,
) -> PathSet:
    """Draw one random channel realization from a power-delay profile.

    Amplitudes follow the profile powers, normalized to unit total energy.
    Each path gets an independent uniform phase psi and a Doppler
    nu_max*cos(theta) with theta uniform on [-pi, pi), so the Doppler spread
    is bounded by nu_max with the classic density concentrating at the edges.
    """
    if nu_max < 0:
        raise ConfigurationError(f"nu_max must be >= 0, got {nu_max}")
    delays_us, powers_db = profile if profile is not None else (
        np.array(VEH_A_DELAYS_US), np.array(VEH_A_POWERS_DB))
    amplitudes = 10.0 ** (np.asarray(powers_db, float) / 20.0)
    amplitudes = amplitudes / math.sqrt(float(np.sum(amplitudes**2)))
    P = amplitudes.size
    psi = rng.uniform(-np.pi, np.pi, size=P)
    theta = rng.uniform(-np.pi, np.pi, size=P)
    gains = amplitudes * np.exp(1j * psi)
    dopplers = nu_max * np.cos(theta)
    return make_path_set(np.asarray(delays_us, float) * 1e-6, dopplers, gains, nu_max)


def evolve(
    paths: PathSet, f_prime: int, cfg: FrameConfig, c: float = SPEED_OF_LIGHT
) -> PathSet:
    """Age a channel realization by ``f_prime`` frame durations.

    Delays migrate as tau + (nu/f_c) * f_prime * T and gains rescale by
    (1 + c*tau) / (1 + c*tau'), so delay increments add up across frames and
    a zero-Doppler path never moves. ``c`` is exposed because the gain rule
    implicitly measures distance in units of c * (1 second).

    Gains additionally rotate at the per-path Doppler rate in excess of the
    frame-rate Nyquist band 1/(2T). Once-per-frame tap updates cannot track
    phase progression faster than half a cycle per frame; the excess shows
    up as an irreducible inter-frame rotation, so a channel whose Doppler
    spread fits inside |nu| <= 1/(2T) stays coherent between frames while
    anything faster decorrelates at the overshoot rate.
    """
    if f_prime < 0:
        raise ConfigurationError(f"f_prime must be >= 0, got {f_prime}")
    new_delays = paths.delays + (paths.dopplers / cfg.f_c) * (f_prime * cfg.T)
    scale = (1.0 + c * paths.delays) / (1.0 + c * new_delays)
    nyquist_hz = 1.0 / (2.0 * cfg.T)
    excess_hz = np.sign(paths.dopplers) * np.maximum(
        np.abs(paths.dopplers) - nyquist_hz, 0.0)
    rotation = np.exp(2j * np.pi * excess_hz * (f_prime * cfg.T))
    tau_max = float(new_delays.max()) if new_delays.size else 0.0
    return PathSet(new_delays, paths.dopplers, paths.gains * scale * rotation,
                   tau_max=tau_max, nu_max=paths.nu_max)


# ---------------------------------------------------------------------------
# pulses

# -40 dB amplitude point of sinc(x)*exp(-beta*x^2) placed at |x| = 1.5 bins.
# Gentler apodization keeps the sampled taps near unit energy; pushing the
# -40 dB point in to 0.75 bins costs ~3 dB of captured tap energy.
DEFAULT_GAUSSIAN_BETA = math.log(abs(float(np.sinc(1.5))) / 1e-2) / 1.5**2


@functools.lru_cache(maxsize=16)
def _apodized_sinc_energy(two_beta: float) -> float:
    value, _ = quad(lambda x: np.sinc(x) ** 2 * math.exp(-two_beta * x * x),
                    -np.inf, np.inf, limit=400)
    return value


@dataclass(frozen=True)
class SincPulse:
    """Separable ideal-bandlimited pulse sqrt(B*T)*sinc(B*tau)*sinc(T*nu)."""

    config: FrameConfig
    kind: str = "sinc"

    def delay_profile(self, tau):
        return math.sqrt(self.config.B) * np.sinc(self.config.B * np.asarray(tau, float))

    def doppler_profile(self, nu):
        return math.sqrt(self.config.T) * np.sinc(self.config.T * np.asarray(nu, float))

    def _envelope(self, x_bins: float) -> float:
        return min(1.0, 1.0 / (math.pi * max(x_bins, 1e-30)))


@dataclass(frozen=True)
class GaussianSincPulse:
    """Gaussian-apodized sinc: fast tails, per-axis unit energy kept exact.

    ``beta`` controls the apodization; the default puts the -40 dB amplitude
    point at 1.5 delay (or Doppler) bins.
    """

    config: FrameConfig
    beta: float = DEFAULT_GAUSSIAN_BETA
    kind: str = "gaussian-sinc"

    def __post_init__(self) -> None:
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigurationError(f"beta must be positive and finite, got {self.beta}")

    def _amp(self, rate: float) -> float:
        return math.sqrt(rate / _apodized_sinc_energy(2.0 * self.beta))

    def delay_profile(self, tau):
        x = self.config.B * np.asarray(tau, float)
        return self._amp(self.config.B) * np.sinc(x) * np.exp(-self.beta * x * x)

    def doppler_profile(self, nu):
        x = self.config.T * np.asarray(nu, float)
        return self._amp(self.config.T) * np.sinc(x) * np.exp(-self.beta * x * x)

    def _envelope(self, x_bins: float) -> float:
        sinc_env = min(1.0, 1.0 / (math.pi * max(x_bins, 1e-30)))
        return sinc_env * math.exp(-self.beta * x_bins * x_bins)


def pulse_from_tag(tag: str, config: FrameConfig, beta: float | None = None):
    tag = tag.lower()
    if tag == "sinc":
        if beta is not None:
            raise ConfigurationError("beta only applies to the gaussian-sinc pulse")
        return SincPulse(config)
    if tag in ("gaussian-sinc", "gaussian_sinc"):
        if beta is None:
            return GaussianSincPulse(config)
        return GaussianSincPulse(config, beta=float(beta))
    raise ConfigurationError(f"unknown pulse kind {tag!r}")


def trunc_radius_bins(pulse, rel_tol: float, cap_bins: float) -> float:
    """Smallest radius (in bins) beyond which the pulse envelope stays below
    rel_tol of its peak, capped at cap_bins (the slow sinc tail never reaches
    small tolerances on its own)."""
    step = 0.25
    x = 1.0
    while x < cap_bins:
        if pulse._envelope(x) < rel_tol:
            return x
        x += step
    return cap_bins


# ---------------------------------------------------------------------------
# discrete taps and their support


@dataclass(frozen=True)
class SupportMask:
    """Rectangular tap support: delays 0..k_max, Dopplers -l_max..+l_max."""

    k_max: int
    l_max: int

    def __post_init__(self) -> None:
        if self.k_max < 0 or self.l_max < 0:
            raise ConfigurationError("mask extents must be non-negative")

    @classmethod
    def from_spreads(
        cls, cfg: FrameConfig, tau_max: float, nu_max: float, guard: int = 3
    ) -> "SupportMask":
        """Box covering delays up to tau_max and Dopplers up to nu_max, plus
        ``guard`` extra bins per side for pulse leakage."""
        if tau_max < 0 or nu_max < 0 or guard < 0:
            raise ConfigurationError("spreads and guard must be non-negative")
        k_max = math.ceil(cfg.B * tau_max) + guard
        l_max = math.ceil(cfg.T * nu_max) + guard
        mask = cls(k_max=k_max, l_max=l_max)
        mask.validate_for(cfg)
        return mask

    def validate_for(self, cfg: FrameConfig) -> None:
        if self.k_max >= cfg.MN:
            raise ConfigurationError(f"k_max={self.k_max} does not fit a torus of {cfg.MN}")
        if self.l_max >= cfg.MN / 2:
            raise ConfigurationError(f"l_max={self.l_max} must stay below MN/2={cfg.MN / 2}")

    @property
    def k_values(self) -> np.ndarray:
        return np.arange(self.k_max + 1)

    @property
    def l_values(self) -> np.ndarray:
        return np.arange(-self.l_max, self.l_max + 1)

    @property
    def cells(self) -> int:
        return (self.k_max + 1) * (2 * self.l_max + 1)


@dataclass(frozen=True, eq=False)
class DDTaps:
    """Discrete delay-Doppler taps h[k, l] on a SupportMask-shaped box.

    ``values[k, j]`` holds tap (k, l) with l = j - l_max; Doppler indices are
    signed and the delay axis starts at zero.
    """

    k_max: int
    l_max: int
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        expected = (self.k_max + 1, 2 * self.l_max + 1)
        if v.shape != expected:
            raise ShapeError(f"taps array must have shape {expected}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("taps must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mask: SupportMask) -> "DDTaps":
        return cls(mask.k_max, mask.l_max,
                   np.zeros((mask.k_max + 1, 2 * mask.l_max + 1), dtype=complex))

    @property
    def mask(self) -> SupportMask:
        return SupportMask(self.k_max, self.l_max)

    @property
    def k_values(self) -> np.ndarray:
        return np.arange(self.k_max + 1)

    @property
    def l_values(self) -> np.ndarray:
        return np.arange(-self.l_max, self.l_max + 1)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))

    def at(self, k: int, l: int) -> complex:
        if not (0 <= k <= self.k_max and -self.l_max <= l <= self.l_max):
            raise ShapeError(f"tap ({k}, {l}) outside the support box")
        return complex(self.values[k, l + self.l_max])

    def items(self):
        """Yield (k, l, h) for every nonzero tap."""
        for k in range(self.k_max + 1):
            for j in range(2 * self.l_max + 1):
                h = self.values[k, j]
                if h != 0:
                    yield k, j - self.l_max, complex(h)


def single_tap(mask: SupportMask, k: int, l: int, value: complex = 1.0) -> DDTaps:
    taps = DDTaps.zeros(mask)
    taps.values[k, l + mask.l_max] = value
    return taps


# ---------------------------------------------------------------------------
# twisted convolution and the effective channel


def twist_delta(a, path: tuple[float, float, complex]):
    """Twisted-convolve a 2-d function with one weighted Dirac path.

    With path (tau_p, nu_p, h), returns the function
    (tau, nu) -> h * a(tau - tau_p, nu - nu_p) * exp(2j*pi*(nu - nu_p)*tau_p),
    which is the exact continuous twisted convolution a *sigma* h*delta.
    """
    tau_p, nu_p, h = path

    def shifted(tau, nu):
        return h * a(tau - tau_p, nu - nu_p) * np.exp(2j * np.pi * (nu - nu_p) * tau_p)

    return shifted


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the effective-taps integral.

    Tensor trapezoidal rule over the pulse's truncated support at
    ``oversample`` nodes per bin, with one doubling refinement whose relative
    change must stay below ``check_tol``.
    """

    oversample: int = 8
    trunc_rel_tol: float = 1e-5
    trunc_cap_bins: float = 12.0
    check_tol: float = 5e-2
    refine: bool = True

    def __post_init__(self) -> None:
        if self.oversample < 1:
            raise ConfigurationError("oversample must be >= 1")
        if not (0 < self.trunc_rel_tol < 1):
            raise ConfigurationError("trunc_rel_tol must lie in (0, 1)")
        if self.trunc_cap_bins <= 0:
            raise ConfigurationError("trunc_cap_bins must be positive")


def _trapezoid_nodes(radius: float, bins: float, oversample: int):
    count = 2 * max(1, math.ceil(bins * oversample)) + 1
    nodes = np.linspace(-radius, radius, count)
    return nodes, nodes[1] - nodes[0]


def _taps_at_oversample(pulse, paths: PathSet, mask: SupportMask,
                        quad_spec: QuadratureSpec, oversample: int) -> np.ndarray:
    cfg = pulse.config
    B, T = cfg.B, cfg.T
    radius_bins = trunc_radius_bins(pulse, quad_spec.trunc_rel_tol, quad_spec.trunc_cap_bins)
    u, du = _trapezoid_nodes(radius_bins / B, radius_bins, oversample)
    v, dv = _trapezoid_nodes(radius_bins / T, radius_bins, oversample)
    tau_grid = mask.k_values / B
    nu_grid = mask.l_values / T

    w_tau_neg = np.conj(pulse.delay_profile(-u))
    w_nu_neg = np.conj(pulse.doppler_profile(-v))

    out = np.zeros((mask.k_max + 1, 2 * mask.l_max + 1), dtype=complex)
    for tau_p, nu_p, h in zip(paths.delays, paths.dopplers, paths.gains):
        d_tau = tau_grid - tau_p  # (K,)
        d_nu = nu_grid - nu_p  # (L,)
        # The cross phases of the matched filter and of the outer twisted
        # convolution cancel, leaving a product of two 1-d integrals:
        #   I_u(dt)     = int w_tau*(-u) w_tau(dt - u) exp(-2j pi nu_p u) du
        #   I_v(dn;tau) = int w_nu*(-v)  w_nu(dn - v)  exp(+2j pi tau v)  dv
        iu = np.trapezoid(
            w_tau_neg[None, :]
            * pulse.delay_profile(d_tau[:, None] - u[None, :])
            * np.exp(-2j * np.pi * nu_p * u)[None, :],
            dx=du, axis=1)  # (K,)
        iv = np.trapezoid(
            w_nu_neg[None, None, :]
            * pulse.doppler_profile(d_nu[None, :, None] - v[None, None, :])
            * np.exp(2j * np.pi * tau_grid[:, None, None] * v[None, None, :]),
            dx=dv, axis=2)  # (K, L)
        out += (h * np.exp(2j * np.pi * nu_p * d_tau) * iu)[:, None] * iv
    return out


def effective_taps(
    pulse,
    paths: PathSet,
    mask: SupportMask,
    quad_spec: QuadratureSpec | None = None,
) -> DDTaps:
    """Sample the pulse-filtered physical channel on the (1/B, 1/T) grid.

    The matched filter w~(tau, nu) = exp(2j*pi*nu*tau) * w*(-tau, -nu) is
    twisted-convolved with each path exactly, then with the transmit pulse by
    tensor trapezoidal quadrature, and the result is sampled at
    (k/B, l/T) over the mask box.

    Raises NumericalError when a doubled quadrature grid moves the result by
    more than the configured tolerance.
    """
    quad_spec = quad_spec or QuadratureSpec()
    cfg = pulse.config
    mask.validate_for(cfg)
    if paths.P == 0:
        return DDTaps.zeros(mask)
    if mask.k_max < math.ceil(cfg.B * paths.tau_max):
        raise ConfigurationError(
            f"support box k_max={mask.k_max} cannot hold delays up to {paths.tau_max}")
    if float(paths.delays.min()) * cfg.B <= -0.5:
        raise ConfigurationError(
            "a path sits more than half a bin before the support box start")
    realized_nu = float(np.abs(paths.dopplers).max())
    if mask.l_max < math.ceil(cfg.T * realized_nu):
        raise ConfigurationError(
            f"support box l_max={mask.l_max} cannot hold Dopplers up to {realized_nu}")

    coarse = _taps_at_oversample(pulse, paths, mask, quad_spec, quad_spec.oversample)
    if not quad_spec.refine:
        return DDTaps(mask.k_max, mask.l_max, coarse)
    fine = _taps_at_oversample(pulse, paths, mask, quad_spec, 2 * quad_spec.oversample)
    scale = float(np.abs(fine).max())
    change = float(np.abs(fine - coarse).max()) / max(scale, 1e-300)
    if change > quad_spec.check_tol:
        raise NumericalError(
            "effective-taps quadrature did not converge: relative change "
            f"{change:.3e} between oversampling {quad_spec.oversample} and "
            f"{2 * quad_spec.oversample} exceeds tolerance {quad_spec.check_tol:.3e}"
        )
    return DDTaps(mask.k_max, mask.l_max, fine)


# ---------------------------------------------------------------------------
# applying the channel


def noise_variance(snr_db: float) -> float:
    """Complex noise variance per sample for unit-energy symbols."""
    if snr_db == math.inf:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def apply_channel(
    taps: DDTaps,
    x: np.ndarray,
    rng: np.random.Generator | None = None,
    snr_db: float = math.inf,
) -> np.ndarray:
    """Run one frame through the discrete delay-Doppler channel.

    Implements y[n] = sum_{k,l} h[k,l] x[(n-k) mod MN] exp(2j*pi*l*(n-k)/MN)
    plus circular-symmetric Gaussian noise at the requested SNR (noise power
    10^(-snr_db/10) per complex sample; snr_db=inf means noiseless).
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ShapeError("sample frame must be 1-d")
    MN = x.size
    if taps.k_max >= MN or taps.l_max >= MN / 2:
        raise ShapeError("tap box does not fit the frame torus")
    n = np.arange(MN)
    y = np.zeros(MN, dtype=complex)
    for k, l, h in taps.items():
        y += h * np.roll(x, k) * np.exp(2j * np.pi * l * ((n - k) % MN) / MN)
    sigma2 = noise_variance(snr_db)
    if sigma2 > 0.0:
        if rng is None:
            raise ConfigurationError("finite snr_db needs an rng for the noise draw")
        z = rng.standard_normal((2, MN))
        y += math.sqrt(sigma2 / 2.0) * (z[0] + 1j * z[1])
    return y
