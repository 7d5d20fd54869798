"""Command-line driver: validation suite, ambiguity heatmaps, sweep runner.

Sweeps are described by small YAML files (see `ExperimentSpec` for the
schema; every key is optional and defaults to the reference geometry).
Each sweep writes `results.csv` plus a `manifest.json` that captures the
fully resolved experiment; re-running from the manifest reproduces the CSV
byte for byte.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import re
import sys
from dataclasses import replace
from fractions import Fraction
from importlib import resources
from typing import NamedTuple

import numpy as np
import yaml

from . import __version__
from .ambiguity import (
    cross_ambiguity,
    expected_thumbtack,
    self_ambiguity,
    surface_to_csv,
    twisted_convolve_discrete,
)
from .channel import DDTaps, SupportMask, apply_channel, default_profile, \
    load_power_delay_profile
from .equalization import build_G
from .errors import ConfigurationError
from .frames import make_config, psk_constellation, roots_of_unity_sum
from .modulation import basis_matrix, gram_deviation, gram_check, modulate, \
    scheme_from_tag
from .simulation import (
    ExperimentSpec,
    check_feasibility,
    run_experiment,
    write_results_csv,
)

SHIPPED_SPEC_NAMES = ("fig3a", "fig4", "fig5")
SCHEME_CHOICES = ("ofdm", "afdm", "otsm", "zak-otfs")


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _random_taps(rng: np.random.Generator, mask: SupportMask) -> DDTaps:
    shape = (mask.k_max + 1, 2 * mask.l_max + 1)
    values = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return DDTaps(mask.k_max, mask.l_max, values / math.sqrt(2.0 * values.size))


def validation_checks(seed: int = 0, thumbtack_trials: int = 2000) -> list[CheckResult]:
    """The fast self-test battery behind `ddlink validate`."""
    cfg = make_config(13, 16, 30e3, 2.4e9)
    const = psk_constellation(4)
    schemes = {tag: scheme_from_tag(tag, cfg) for tag in SCHEME_CHOICES}
    checks: list[CheckResult] = []

    worst = max(gram_check(s) for s in schemes.values())
    checks.append(CheckResult(
        "orthonormality", worst < 1e-10,
        f"max Gram deviation {worst:.3e} across {len(schemes)} schemes"))

    worst = 0.0
    for n in range(1, 65):
        for k in range(0, 2 * n + 1):
            expected = float(n) if k % n == 0 else 0.0
            worst = max(worst, abs(roots_of_unity_sum(n, k) - expected))
    checks.append(CheckResult(
        "roots-of-unity identity", worst < 1e-9,
        f"max deviation {worst:.3e} for orders up to 64"))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        tag = SCHEME_CHOICES[rng.integers(0, len(SCHEME_CHOICES))]
        mask = SupportMask(int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        taps = _random_taps(rng, mask)
        x = modulate(schemes[tag], const.points[rng.integers(0, 4, size=cfg.MN)])
        lhs = cross_ambiguity(apply_channel(taps, x), x).values
        rhs = twisted_convolve_discrete(taps, self_ambiguity(x)).values
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    checks.append(CheckResult(
        "estimator = taps (twisted) self-ambiguity", worst < 1e-10,
        f"max abs deviation {worst:.3e} over 10 random draws"))

    worst = 0.0
    for tag, scheme in schemes.items():
        mask = SupportMask(4, 4)
        taps = _random_taps(rng, mask)
        s = const.points[rng.integers(0, 4, size=cfg.MN)]
        direct = apply_channel(taps, modulate(scheme, s))
        via_matrix = build_G(taps, scheme).values @ s
        rel = float(np.linalg.norm(direct - via_matrix) / np.linalg.norm(via_matrix))
        worst = max(worst, rel)
    checks.append(CheckResult(
        "sample-domain vs matrix channel", worst < 1e-10,
        f"max relative deviation {worst:.3e} across schemes"))

    floor_bound = 3.0 / math.sqrt(thumbtack_trials)
    worst_origin = 0.0
    worst_floor = 0.0
    for tag, scheme in schemes.items():
        diag = expected_thumbtack(scheme, const, thumbtack_trials,
                                  np.random.default_rng(seed + 7))
        worst_origin = max(worst_origin, diag.origin_max_error)
        worst_floor = max(worst_floor, diag.max_off_origin)
    checks.append(CheckResult(
        "mean self-ambiguity is a thumbtack", worst_origin < 1e-12
        and worst_floor < floor_bound,
        f"origin error {worst_origin:.3e}, off-origin floor {worst_floor:.4f} "
        f"(bound {floor_bound:.4f}) at {thumbtack_trials} frames"))

    corrupted = basis_matrix(schemes["zak-otfs"]).copy()
    corrupted[0, 0] = -corrupted[0, 0]
    deviation, where = gram_deviation(corrupted)
    checks.append(CheckResult(
        "corrupted basis is caught", deviation > 1e-3,
        f"sign flip detected: Gram deviation {deviation:.3e} at {where}"))

    return checks


def cmd_validate(args: argparse.Namespace) -> int:
    checks = validation_checks(seed=args.seed)
    width = max(len(c.name) for c in checks)
    failures = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {check.name:<{width}}  {check.detail}")
        failures += 0 if check.passed else 1
    if failures:
        print(f"{failures} of {len(checks)} checks failed")
        return 1
    print(f"all {len(checks)} checks passed")
    return 0


def cmd_ambiguity(args: argparse.Namespace) -> int:
    cfg = make_config(13, 16, 30e3, 2.4e9)
    scheme = scheme_from_tag(args.scheme, cfg)
    const = psk_constellation(4)
    rng = np.random.default_rng(args.seed)
    diag = expected_thumbtack(scheme, const, args.trials, rng)
    surface_to_csv(diag.mean_surface, args.out)
    print(f"{args.scheme}: {args.trials} frame(s), origin error "
          f"{diag.origin_max_error:.3e}, max off-origin mean "
          f"{diag.max_off_origin:.4f} -> {args.out}")
    return 0


def _resolve_spec_source(token: str) -> dict:
    """A spec token is a YAML path, a shipped spec name, or a manifest path."""
    if os.path.exists(token):
        with open(token, "r", encoding="utf-8") as fh:
            if token.endswith(".json"):
                manifest = json.load(fh)
                return manifest["experiment"]
            loaded = yaml.safe_load(fh)
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"spec file {token!r} must be a mapping")
            return loaded
    if re.fullmatch(r"[a-z0-9_\-]+", token):
        ref = resources.files("ddlink").joinpath(f"specs/{token}.yaml")
        if ref.is_file():
            loaded = yaml.safe_load(ref.read_text(encoding="utf-8"))
            assert isinstance(loaded, dict)
            return loaded
    raise ConfigurationError(
        f"cannot resolve experiment spec {token!r}: not a file and not one of "
        f"the shipped specs {SHIPPED_SPEC_NAMES}")


def _resolve_workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("DDLINK_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"DDLINK_WORKERS must be an integer, got {env!r}") from exc
    return 1


def _atomic_write_text(path: str, payload: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def cmd_sweep(args: argparse.Namespace) -> int:
    mapping = _resolve_spec_source(args.spec if args.spec else args.manifest)
    spec = ExperimentSpec.from_mapping(mapping)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    workers = _resolve_workers(args)
    os.makedirs(args.out, exist_ok=True)

    cfg = spec.config()
    delays_us, _ = (load_power_delay_profile(spec.profile_path)
                    if spec.profile_path else default_profile())
    tau_max = float(np.max(delays_us)) * 1e-6
    for nu in spec.nu_maxes_hz:
        report = check_feasibility(cfg, tau_max, nu)
        print(f"[{spec.name}] estimation window at nu_max={nu:g} Hz: {report}")

    step = max(1, spec.trials // 20)

    def progress(done: int, total: int) -> None:
        if done % step == 0 or done == total:
            print(f"[{spec.name}] trial {done}/{total}", file=sys.stderr, flush=True)

    rows = run_experiment(spec, workers=workers, progress=progress)

    results_path = os.path.join(args.out, "results.csv")
    write_results_csv(rows, results_path)
    degraded = [row for row in rows if row["trials"] < spec.trials]
    manifest = {
        "kind": "ddlink-sweep-manifest",
        "format_version": 1,
        "package_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "workers": workers,
        "experiment": spec.to_mapping(),
        "outputs": {"results_csv": "results.csv"},
        "degraded_cells": [
            {k: row[k] for k in ("scheme", "mode", "data_frames", "nu_max_hz",
                                 "snr_db", "frame", "trials")}
            for row in degraded
        ],
    }
    manifest_path = os.path.join(args.out, "manifest.json")
    _atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
    print(f"[{spec.name}] wrote {len(rows)} rows -> {results_path}")
    if degraded:
        print(f"[{spec.name}] {len(degraded)} cell(s) ran with reduced trial "
              f"counts; see manifest degraded_cells")
    print(f"[{spec.name}] manifest -> {manifest_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddlink",
        description="Delay-Doppler link simulator: validate, inspect, sweep.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_val = sub.add_parser("validate", help="run the numerical self-test battery")
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)

    p_amb = sub.add_parser("ambiguity",
                           help="write a CSV heatmap of the data self-ambiguity")
    p_amb.add_argument("--scheme", required=True, choices=SCHEME_CHOICES)
    p_amb.add_argument("--seed", type=int, default=0)
    p_amb.add_argument("--trials", type=int, default=1,
                       help="frames to average (1 = single frame)")
    p_amb.add_argument("--out", required=True, help="output CSV path")
    p_amb.set_defaults(func=cmd_ambiguity)

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo experiment")
    source = p_sweep.add_mutually_exclusive_group(required=True)
    source.add_argument("--spec",
                        help="YAML experiment file or shipped spec name "
                             f"{SHIPPED_SPEC_NAMES}")
    source.add_argument("--manifest",
                        help="manifest.json from a previous run to reproduce")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="override the spec's master seed")
    p_sweep.add_argument("--trials", type=int, default=None,
                         help="override the spec's trial count")
    p_sweep.add_argument("--workers", type=int, default=None,
                         help="worker processes (default: DDLINK_WORKERS or 1)")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
