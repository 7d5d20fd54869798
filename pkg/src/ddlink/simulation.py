"""Link-level Monte-Carlo experiments over doubly-selective channels.

One trial draws a channel realization, ages it across a pilot frame plus a
chain of data frames, and runs every configured scheme / estimation mode /
SNR point against the same realization and the same noise streams. That
pairing keeps scheme and mode comparisons low-variance: differences between
curves come from the schemes, not from independent channel draws.

Estimation modes:
  pilot    detect the first data frame with the pilot-frame estimate
  data     decision-directed chain: re-estimate from each decided frame,
           use that estimate on the next frame
  perfect  genie detection of the first data frame with the true taps

The pilot-mode record equals the first link of the data chain by
construction, so a data chain of length 1 reproduces pilot-based operation
with a different overhead accounting.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .ambiguity import estimate_taps, self_ambiguity
from .channel import (
    DDTaps,
    QuadratureSpec,
    SupportMask,
    apply_channel,
    default_profile,
    effective_taps,
    evolve,
    load_power_delay_profile,
    noise_variance,
    pulse_from_tag,
    veh_a_paths,
)
from .equalization import (
    mmse_soft_from_taps,
    ofdm_equalize_soft,
    ofdm_transfer_estimate,
    ofdm_true_diagonal,
    time_channel_matrix,
)
from .errors import (
    ConfigurationError,
    NumericalError,
    ShapeError,
    UnsupportedConfigurationError,
)
from .frames import (
    FrameConfig,
    SeedSpec,
    make_config,
    map_bits,
    psk_constellation,
    slice_symbols,
)
from .modulation import (
    BasisScheme,
    afdm_scheme,
    basis_matrix,
    modulate,
    pilot_frame,
    scheme_from_tag,
)

MODES = ("pilot", "data", "perfect")


# ---------------------------------------------------------------------------
# experiment description


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete, serializable description of one sweep."""

    name: str = "experiment"
    M: int = 13
    N: int = 16
    delta_f_hz: float = 30e3
    f_c_hz: float = 2.4e9
    constellation_order: int = 4
    schemes: tuple[str, ...] = ("zak-otfs", "afdm", "otsm", "ofdm")
    modes: tuple[str, ...] = ("perfect", "pilot", "data")
    data_frames: tuple[int, ...] = (3,)
    snr_dbs: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    nu_maxes_hz: tuple[float, ...] = (815.0,)
    trials: int = 2000
    seed: int = 1
    pulse: str = "gaussian-sinc"
    pulse_beta: float | None = None
    guard_bins: int = 3
    profile_path: str | None = None
    afdm_c1: str | None = None
    afdm_c2: str | None = None
    quad_oversample: int = 8

    def __post_init__(self) -> None:
        if not self.schemes:
            raise ConfigurationError("at least one scheme is required")
        for mode in self.modes:
            if mode not in MODES:
                raise ConfigurationError(f"unknown mode {mode!r}; choose from {MODES}")
        if not self.modes:
            raise ConfigurationError("at least one mode is required")
        if "data" in self.modes:
            if not self.data_frames:
                raise ConfigurationError("data mode needs at least one chain length")
            if list(self.data_frames) != sorted(set(self.data_frames)):
                raise ConfigurationError("data_frames must be strictly increasing")
            if self.data_frames[0] < 1:
                raise ConfigurationError("chain lengths must be >= 1")
        if not self.snr_dbs:
            raise ConfigurationError("at least one SNR point is required")
        if not self.nu_maxes_hz or any(nu <= 0 for nu in self.nu_maxes_hz):
            raise ConfigurationError("nu_maxes_hz must be positive")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if self.guard_bins < 0:
            raise ConfigurationError("guard_bins must be >= 0")

    def config(self) -> FrameConfig:
        return make_config(self.M, self.N, self.delta_f_hz, self.f_c_hz)

    def constellation(self):
        return psk_constellation(self.constellation_order)

    def to_mapping(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {', '.join(unknown)}")
        kwargs = {}
        for name, value in mapping.items():
            if isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
        return cls(**kwargs)


def mode_overhead(mode: str, chain_length: int | None = None) -> float:
    """Fraction of airtime spent on reference frames.

    A pilot frame accompanies one data frame (1/2), a decision-directed
    chain amortizes it over F data frames (1/(F+1)), a genie spends nothing.
    """
    if mode == "perfect":
        return 0.0
    if mode == "pilot":
        return 0.5
    if mode == "data":
        if chain_length is None or chain_length < 1:
            raise ConfigurationError("data mode needs the chain length")
        return 1.0 / (chain_length + 1.0)
    raise ConfigurationError(f"unknown mode {mode!r}")


def spectral_efficiency(ber: float, overhead: float, order: int) -> float:
    """(1 - overhead) * (1 - BER) * log2(order) bits/s/Hz at BT = MN."""
    if not 0.0 <= ber <= 1.0:
        raise ConfigurationError(f"ber must lie in [0, 1], got {ber}")
    if not 0.0 <= overhead < 1.0:
        raise ConfigurationError(f"overhead must lie in [0, 1), got {overhead}")
    return (1.0 - overhead) * (1.0 - ber) * math.log2(order)


def tap_nmse(estimate: DDTaps, truth: DDTaps) -> float:
    """Normalized squared tap error, ||est - true||^2 / ||true||^2."""
    if estimate.values.shape != truth.values.shape:
        raise ShapeError("estimate and truth cover different support boxes")
    denom = truth.energy
    if denom <= 0.0:
        raise NumericalError("true taps carry no energy; NMSE is undefined")
    return float(np.sum(np.abs(estimate.values - truth.values) ** 2) / denom)


# ---------------------------------------------------------------------------
# feasibility of data-based estimation


@dataclass(frozen=True)
class FeasibilityReport:
    """Margins of the estimation feasibility window for one geometry.

    The subcarrier spacing must clear 2 * N * nu_max (Doppler aliasing
    across the frame) while staying under 1 / (M * tau_max) (delay spread
    within one symbol), or estimates stop identifying the channel.
    """

    lower_hz: float
    delta_f_hz: float
    upper_hz: float

    @property
    def satisfied(self) -> bool:
        return self.lower_hz <= self.delta_f_hz <= self.upper_hz

    def __str__(self) -> str:
        word = "satisfied" if self.satisfied else "violated"
        return (
            f"{_khz(self.lower_hz)} kHz <= {_khz(self.delta_f_hz)} kHz "
            f"<= {_khz(self.upper_hz)} kHz ({word})"
        )


def _khz(value_hz: float) -> str:
    return f"{value_hz / 1e3:.5g}"


def check_feasibility(cfg: FrameConfig, tau_max: float, nu_max: float) -> FeasibilityReport:
    if tau_max <= 0 or nu_max <= 0:
        raise ConfigurationError("tau_max and nu_max must be positive")
    return FeasibilityReport(
        lower_hz=2.0 * cfg.N * nu_max,
        delta_f_hz=cfg.delta_f,
        upper_hz=1.0 / (cfg.M * tau_max),
    )


# ---------------------------------------------------------------------------
# pilot support validation


_PILOT_SUPPORT_OK: set[tuple] = set()


def validate_pilot_support(scheme: BasisScheme, mask: SupportMask) -> None:
    """Reject scheme/box combinations whose pilot cannot separate the taps.

    Restricting the cross-ambiguity to the support box is only unbiased when
    the pilot's self-ambiguity vanishes on the box difference set
    {(k - k', l - l')} away from the origin. Checked numerically once per
    combination and cached.
    """
    if scheme.kind == "ofdm":
        return
    key = (scheme.kind, scheme.c1, scheme.c2, scheme.config.M, scheme.config.N,
           mask.k_max, mask.l_max)
    if key in _PILOT_SUPPORT_OK:
        return
    surface = self_ambiguity(pilot_frame(scheme).samples)
    worst = 0.0
    for k in range(-mask.k_max, mask.k_max + 1):
        for l in range(-2 * mask.l_max, 2 * mask.l_max + 1):
            if k == 0 and l == 0:
                continue
            worst = max(worst, abs(surface.at(k, l)))
    if worst > 1e-8:
        hint = (
            "need k_max < M and 2*l_max < N for impulse-train pilots"
            if scheme.kind in ("zak-otfs", "otsm")
            else "pick chirp rates whose ambiguity ridge clears the box"
        )
        raise UnsupportedConfigurationError(
            f"{scheme.kind} pilot self-ambiguity leaks {worst:.3e} inside the "
            f"support difference box of k_max={mask.k_max}, l_max={mask.l_max}; {hint}"
        )
    _PILOT_SUPPORT_OK.add(key)


# ---------------------------------------------------------------------------
# running trials


class FrameRecord(NamedTuple):
    frame: int
    bit_errors: int
    bit_count: int
    nmse: float | None


@dataclass(frozen=True)
class TrialResult:
    """Per-trial records keyed by (scheme, mode, nu_max, snr_db).

    A value of None marks a cell that failed numerically in this trial;
    aggregation skips it and reports the reduced trial count."""

    trial_index: int
    records: dict[tuple[str, str, float, float], tuple[FrameRecord, ...] | None]


def _scheme_for(spec: ExperimentSpec, cfg: FrameConfig, tag: str,
                mask: SupportMask) -> BasisScheme:
    tag = tag.lower()
    if tag != "afdm":
        return scheme_from_tag(tag, cfg)
    if spec.afdm_c1 is not None:
        c1 = Fraction(spec.afdm_c1)
        c2 = Fraction(spec.afdm_c2) if spec.afdm_c2 is not None else c1
    else:
        # smallest chirp rate whose pilot ambiguity ridge clears the
        # support difference box: slope 2*MN*c1 = 2*l_max + 1
        c1 = Fraction(2 * mask.l_max + 1, 2 * cfg.MN)
        c2 = c1
    return afdm_scheme(cfg, c1=c1, c2=c2)


def _perfect_factor(base: np.ndarray, sigma2: float):
    A = base.copy()
    A[np.diag_indices_from(A)] += sigma2
    try:
        return cho_factor(A, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(
            "true-channel normal equations are singular at this noise level"
        ) from exc


def run_trial(spec: ExperimentSpec, trial_index: int) -> TrialResult:
    """One Monte-Carlo trial across every configured sweep point."""
    cfg = spec.config()
    const = spec.constellation()
    seeds = SeedSpec(spec.seed)
    pulse = pulse_from_tag(spec.pulse, cfg, beta=spec.pulse_beta)
    profile = (load_power_delay_profile(spec.profile_path)
               if spec.profile_path is not None else default_profile())
    quad_spec = QuadratureSpec(oversample=spec.quad_oversample)
    want_pilot = "pilot" in spec.modes
    want_data = "data" in spec.modes
    want_perfect = "perfect" in spec.modes
    need_estimates = want_pilot or want_data
    chain_len = max(spec.data_frames) if want_data else 1

    records: dict[tuple, tuple[FrameRecord, ...] | None] = {}
    for nu in spec.nu_maxes_hz:
        rng_paths = seeds.rng(trial_index, f"paths:nu={nu:.6g}")
        paths0 = veh_a_paths(rng_paths, nu, profile=profile)
        mask = SupportMask.from_spreads(cfg, paths0.tau_max, nu, guard=spec.guard_bins)
        trajectory = [effective_taps(pulse, evolve(paths0, f, cfg), mask, quad_spec)
                      for f in range(chain_len + 1)]
        if want_perfect:
            H_true = time_channel_matrix(trajectory[1], cfg.MN)
            normal_base = H_true @ H_true.conj().T
            perfect_factors: dict[float, object] = {}
        for tag in spec.schemes:
            scheme = _scheme_for(spec, cfg, tag, mask)
            validate_pilot_support(scheme, mask)
            is_ofdm = scheme.kind == "ofdm"
            synthesis = basis_matrix(scheme)
            rng_pilot = seeds.rng(trial_index, f"pilot:{tag}:nu={nu:.6g}")
            pilot = (pilot_frame(scheme, constellation=const, rng=rng_pilot)
                     if is_ofdm else pilot_frame(scheme))
            true_diag = (ofdm_true_diagonal(scheme, trajectory[1])
                         if is_ofdm and want_perfect else None)
            for snr in spec.snr_dbs:
                try:
                    _run_cell(spec, records, tag, nu, snr, scheme, pilot, mask,
                              trajectory, const, seeds, trial_index, chain_len,
                              need_estimates, want_pilot, want_data, want_perfect,
                              is_ofdm, synthesis, true_diag,
                              normal_base if want_perfect else None,
                              H_true if want_perfect else None,
                              perfect_factors if want_perfect else None)
                except NumericalError:
                    # a numerically dead cell must not sink the whole sweep;
                    # the aggregate reports it with a reduced trial count
                    for mode in spec.modes:
                        records.setdefault((tag, mode, nu, snr), None)
    return TrialResult(trial_index=trial_index, records=records)


def _run_cell(spec, records, tag, nu, snr, scheme, pilot, mask, trajectory,
              const, seeds, trial_index, chain_len, need_estimates, want_pilot,
              want_data, want_perfect, is_ofdm, synthesis, true_diag,
              normal_base, H_true, perfect_factors) -> None:
    cfg = scheme.config
    bits_per_symbol = const.bits_per_symbol
    sigma2 = noise_variance(snr)
    rng_data = seeds.rng(trial_index, f"data:{tag}:nu={nu:.6g}:snr={snr:.6g}")
    rng_noise = seeds.rng(trial_index, f"noise:{tag}:nu={nu:.6g}:snr={snr:.6g}")
    sent_bits = [rng_data.integers(0, 2, size=cfg.MN * bits_per_symbol)
                 for _ in range(chain_len)]
    x_frames = [modulate(scheme, map_bits(b, const)) for b in sent_bits]
    y_pilot = apply_channel(trajectory[0], pilot.samples, rng=rng_noise, snr_db=snr)
    y_frames = [apply_channel(trajectory[f + 1], x_frames[f], rng=rng_noise, snr_db=snr)
                for f in range(chain_len)]

    chain: list[FrameRecord] = []
    pilot_nmse = None
    if need_estimates:
        # Estimated taps carry an a-priori-known error power: every mask bin
        # picks up sigma2/MN of receiver noise, and estimates formed from
        # data symbols add the self-ambiguity floor of ~1/MN per bin. The
        # equalizer regularizes with that mismatch on top of the noise, which
        # keeps near-ZF inversion from amplifying the estimation floor.
        mismatch = mask.cells / cfg.MN
        sigma2_pilot_est = sigma2 * (1.0 + mismatch)
        sigma2_data_est = sigma2 * (1.0 + mismatch) + mismatch
        estimate = estimate_taps(y_pilot, pilot.samples, mask)
        # Scored against the frame it equalizes, so inter-frame decoherence
        # shows up as estimation error rather than hiding in the BER alone.
        pilot_nmse = tap_nmse(estimate, trajectory[1])
        diag = (ofdm_transfer_estimate(scheme, y_pilot, pilot.symbols)
                if is_ofdm else None)
        for f in range(1, chain_len + 1):
            y = y_frames[f - 1]
            sigma2_eq = sigma2_pilot_est if f == 1 else sigma2_data_est
            if is_ofdm:
                soft = ofdm_equalize_soft(scheme, y, diag, sigma2_eq)
            else:
                soft = mmse_soft_from_taps(estimate, scheme, y, sigma2_eq)
            hard, hard_bits = slice_symbols(soft, const)
            errors = int(np.count_nonzero(hard_bits != sent_bits[f - 1]))
            decided = modulate(scheme, hard)
            estimate = estimate_taps(y, decided, mask)
            if is_ofdm:
                diag = ofdm_transfer_estimate(scheme, y, hard)
            chain.append(FrameRecord(f, errors, sent_bits[f - 1].size,
                                     tap_nmse(estimate, trajectory[f])))

    if want_pilot:
        records[(tag, "pilot", nu, snr)] = (
            FrameRecord(1, chain[0].bit_errors, chain[0].bit_count, pilot_nmse),)
    if want_data:
        records[(tag, "data", nu, snr)] = tuple(chain)
    if want_perfect:
        if is_ofdm:
            soft = ofdm_equalize_soft(scheme, y_frames[0], true_diag, sigma2)
        else:
            if sigma2 not in perfect_factors:
                perfect_factors[sigma2] = _perfect_factor(normal_base, sigma2)
            z = cho_solve(perfect_factors[sigma2], y_frames[0], check_finite=False)
            soft = synthesis.conj().T @ (H_true.conj().T @ z)
        hard, hard_bits = slice_symbols(soft, const)
        errors = int(np.count_nonzero(hard_bits != sent_bits[0]))
        records[(tag, "perfect", nu, snr)] = (
            FrameRecord(1, errors, sent_bits[0].size, None),)


def run_trials(
    spec: ExperimentSpec,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> list[TrialResult]:
    """Run all trials, optionally across processes. Output order is by trial
    index regardless of worker count, so downstream aggregation is stable."""
    runner = functools.partial(run_trial, spec)
    results: list[TrialResult] = []
    if workers > 1:
        chunk = max(1, spec.trials // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(runner, range(spec.trials), chunksize=chunk):
                results.append(result)
                if progress is not None:
                    progress(len(results), spec.trials)
    else:
        for trial in range(spec.trials):
            results.append(runner(trial))
            if progress is not None:
                progress(len(results), spec.trials)
    return results


# ---------------------------------------------------------------------------
# aggregation and CSV output

CSV_COLUMNS = ("scheme", "mode", "data_frames", "nu_max_hz", "snr_db", "frame",
               "trials", "ber", "ber_ci95", "nmse_db", "se_bits_per_s_per_hz")


def _pooled_row(
    tag: str,
    mode: str,
    chain_length: int | None,
    nu: float,
    snr: float,
    frame_label: str,
    per_trial: list[tuple[FrameRecord, ...]],
    frames: list[int],
    overhead: float,
    order: int,
) -> dict:
    valid = [recs for recs in per_trial if recs is not None]
    base = {
        "scheme": tag,
        "mode": mode,
        "data_frames": chain_length,
        "nu_max_hz": nu,
        "snr_db": snr,
        "frame": frame_label,
        "trials": len(valid),
        "ber": None,
        "ber_ci95": None,
        "nmse_db": None,
        "se_bits_per_s_per_hz": None,
    }
    if not valid:
        return base
    total_errors = 0
    total_bits = 0
    trial_bers = np.empty(len(valid))
    nmses: list[float] = []
    for t, recs in enumerate(valid):
        selected = [recs[f - 1] for f in frames]
        errors = sum(r.bit_errors for r in selected)
        bits = sum(r.bit_count for r in selected)
        total_errors += errors
        total_bits += bits
        trial_bers[t] = errors / bits
        nmses.extend(r.nmse for r in selected if r.nmse is not None)
    ber = total_errors / total_bits
    if len(valid) > 1:
        ci = 1.96 * float(np.std(trial_bers, ddof=1)) / math.sqrt(len(valid))
    else:
        ci = 0.0
    if nmses:
        mean_nmse = float(np.mean(nmses))
        if mean_nmse > 0.0:
            base["nmse_db"] = 10.0 * math.log10(mean_nmse)
    base["ber"] = ber
    base["ber_ci95"] = ci
    base["se_bits_per_s_per_hz"] = spectral_efficiency(ber, overhead, order)
    return base


def aggregate(spec: ExperimentSpec, trial_results: list[TrialResult]) -> list[dict]:
    """Reduce per-trial records to one row per sweep point (plus per-frame
    rows inside each decision-directed chain)."""
    results = sorted(trial_results, key=lambda r: r.trial_index)
    if len(results) != spec.trials:
        raise ShapeError(f"expected {spec.trials} trial results, got {len(results)}")
    order = spec.constellation_order
    rows: list[dict] = []
    for tag in spec.schemes:
        for mode in spec.modes:
            chain_lengths = spec.data_frames if mode == "data" else (None,)
            for F in chain_lengths:
                overhead = mode_overhead(mode, F)
                for nu in spec.nu_maxes_hz:
                    for snr in spec.snr_dbs:
                        per_trial = [r.records[(tag, mode, nu, snr)] for r in results]
                        if mode == "data":
                            frames = list(range(1, F + 1))
                            rows.append(_pooled_row(tag, mode, F, nu, snr, "all",
                                                    per_trial, frames, overhead, order))
                            for f in frames:
                                rows.append(_pooled_row(tag, mode, F, nu, snr, str(f),
                                                        per_trial, [f], overhead, order))
                        else:
                            rows.append(_pooled_row(tag, mode, None, nu, snr, "all",
                                                    per_trial, [1], overhead, order))
    return rows


def _format_cell(column: str, value) -> str:
    if value is None:
        return ""
    if column in ("scheme", "mode", "frame"):
        return str(value)
    if column in ("data_frames", "trials"):
        return str(int(value))
    return f"{value:.12g}"


def write_results_csv(rows: list[dict], path) -> None:
    """Deterministic CSV: fixed column order, fixed float formatting, LF
    newlines. Reruns of the same spec produce byte-identical files."""
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_format_cell(c, row[c]) for c in CSV_COLUMNS))
    payload = "\n".join(lines) + "\n"
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def run_experiment(
    spec: ExperimentSpec,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> list[dict]:
    return aggregate(spec, run_trials(spec, workers=workers, progress=progress))
