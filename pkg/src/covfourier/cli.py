"""Command-line driver.

Configuration is a plain ``key = value`` file (``#`` starts a comment);
values are JSON where that parses (numbers, lists, nested lists for
matrices) and bare strings otherwise. ``--set key=value`` overrides file
entries and ``COVFOURIER_SEED`` overrides the seed.

Exit status: 0 on success, 2 on validation errors, 3 on numerical errors.
Errors are also reported as one JSON object on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import io
from .core import TimeGrid, upper_pairs
from .errors import ConfigError, NumericalError, ValidationError
from .fourier import (
    ClampPolicy,
    GFunctionSpec,
    GKind,
    estimate_spot_covariance,
    fejer_identities,
    fejer_kernel,
    fourier_coefficients,
    select_mode_count,
)
from .mc import ConstantDesign, clt_fourier_experiment, clt_spot_experiment
from .second_pass import SecondPassConfig, estimate_parameters_over_m
from .simulator import BatesParams, simulate_bates

logger = logging.getLogger("covfourier")

MODES = ("simulate", "estimate-spot", "estimate-params", "mc-clt", "kernel-table")
_MODEL_KEYS = tuple(f.name for f in fields(BatesParams))
_SECOND_PASS_KEYS = tuple(f.name for f in fields(SecondPassConfig))


@dataclass
class RunConfig:
    """Everything a run needs. Keys in config files mirror these field names."""

    mode: str = ""
    seed: int = 0
    output_dir: str = "."
    # simulation grid and model
    n: Optional[int] = None
    T: float = 1.0
    model: str = "bates"  # or "constant" (uses x0)
    model_params: dict = field(default_factory=dict)
    # first pass
    g_kind: str = "cosine"
    g_r: float = 2.0
    g_s: float = 0.0
    gamma: float = 2.0
    K: float = 3.0
    N: Optional[int] = None
    clamp: str = "clamp"  # or "error"
    clamp_eps: float = 1e-10
    # second pass
    second_pass: dict = field(default_factory=dict)
    m_values: Optional[List[int]] = None
    # inputs
    input: Optional[str] = None
    reference: Optional[str] = None
    # Monte Carlo
    experiment: str = "fourier"  # or "spot"
    mc_x: float = 0.09
    reps: int = 512
    # kernel table
    kernel_N: List[int] = field(default_factory=lambda: [10])
    kernel_samples: int = 201

    # --- construction ------------------------------------------------------------

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        own = {f.name for f in fields(cls)} - {"model_params", "second_pass"}
        cfg = cls()
        for key, val in values.items():
            if key in own:
                setattr(cfg, key, val)
            elif key in _MODEL_KEYS:
                cfg.model_params[key] = val
            elif key in _SECOND_PASS_KEYS:
                cfg.second_pass[key] = val
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        return cfg

    # --- derived objects ---------------------------------------------------------

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        try:
            self.seed = int(self.seed)
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        if not self.gamma > 1:
            raise ConfigError(f"gamma must satisfy gamma > 1 (got {self.gamma})")
        if not self.K > 0:
            raise ConfigError(f"K must be positive (got {self.K})")
        if self.N is not None and int(self.N) < 1:
            raise ConfigError("N must be a positive integer")
        if self.clamp not in ("clamp", "error"):
            raise ConfigError("clamp must be 'clamp' or 'error'")
        if self.model not in ("bates", "constant"):
            raise ConfigError("model must be 'bates' or 'constant'")
        if self.mode == "simulate" and self.n is None:
            raise ConfigError("mode simulate requires n")
        if self.mode in ("estimate-spot", "estimate-params") and not self.input:
            raise ConfigError(f"mode {self.mode} requires input")
        if self.mode == "mc-clt":
            if self.experiment not in ("fourier", "spot"):
                raise ConfigError("experiment must be 'fourier' or 'spot'")
            if self.n is None:
                raise ConfigError("mode mc-clt requires n")
            if int(self.reps) < 64:
                raise ConfigError("reps must be at least 64")
            if not self.mc_x > 0:
                raise ConfigError("mc_x must be positive")
        if self.mode == "kernel-table":
            ks = self.kernel_N if isinstance(self.kernel_N, list) else [self.kernel_N]
            if not ks or any(int(k) < 1 for k in ks):
                raise ConfigError("kernel_N must hold positive integers")
            self.kernel_N = [int(k) for k in ks]
        self.g_spec()
        self.second_pass_config()
        if self.mode == "simulate":
            self.bates_params()
        return self

    def g_spec(self, d: int = 2) -> GFunctionSpec:
        try:
            kind = GKind(self.g_kind)
        except ValueError:
            raise ConfigError(f"unknown g kind {self.g_kind!r}") from None
        if kind is GKind.POWER:
            return GFunctionSpec.power(float(self.g_r), float(self.g_s), d)
        return GFunctionSpec(kind, d)

    def clamp_policy(self) -> ClampPolicy:
        return ClampPolicy.error() if self.clamp == "error" else ClampPolicy.clamp(self.clamp_eps)

    def second_pass_config(self) -> SecondPassConfig:
        kw = dict(self.second_pass)
        if "jump_components" in kw:
            jc = kw["jump_components"]
            kw["jump_components"] = tuple(int(c) - 1 for c in (jc if isinstance(jc, list) else [jc]))
        return SecondPassConfig(**kw)

    def bates_params(self) -> BatesParams:
        kw = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in self.model_params.items()}
        if self.model == "constant":
            if "x0" not in kw:
                raise ConfigError("model constant requires x0")
            return BatesParams.constant_covariance(kw.pop("x0")).with_(**kw)
        return BatesParams.reference(**kw)

    def mode_count(self, n: int, T: float) -> int:
        if self.N is not None:
            return int(self.N)
        return select_mode_count(n, self.gamma, self.K, T)


# --- config parsing -----------------------------------------------------------------

def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, val = line.split("=", 1)
        out[key.strip()] = _parse_value(val)
    return out


def load_config(path: Optional[str], overrides: Sequence[str] = (), mode: Optional[str] = None,
                env=None) -> RunConfig:
    values = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8")))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        values[key.strip()] = _parse_value(val)
    if mode:
        values["mode"] = mode
    env = os.environ if env is None else env
    if env.get("COVFOURIER_SEED"):
        values["seed"] = _parse_value(env["COVFOURIER_SEED"])
    try:
        return RunConfig.from_mapping(values).validate()
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from None


# --- modes ----------------------------------------------------------------------------

def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def run_simulate(cfg: RunConfig) -> List[Path]:
    params = cfg.bates_params()
    grid = TimeGrid(int(cfg.n), float(cfg.T))
    sim = simulate_bates(params, grid, cfg.seed)
    return [
        io.write_observations_csv(_out(cfg, "observations.csv"), sim.y_path),
        io.write_matrix_path_csv(_out(cfg, "covariance.csv"), sim.x_path),
        io.write_jumps_csv(_out(cfg, "jumps.csv"), grid, sim.y_jumps, sim.x_jumps),
    ]


def run_estimate_spot(cfg: RunConfig) -> List[Path]:
    y = io.parse_observations_csv(cfg.input)
    spec = cfg.g_spec(y.d)
    N = cfg.mode_count(y.grid.n, y.grid.T)
    est = estimate_spot_covariance(y, spec, N, cfg.clamp_policy())
    paths = [io.write_spot_csv(_out(cfg, "spot.csv"), est.x_path, est.clamped)]
    if cfg.reference:
        ref = io.read_matrix_path_csv(cfg.reference)
        ref_grid = TimeGrid(y.grid.n, y.grid.T)
        if len(ref) != ref_grid.count:
            raise ValidationError("reference covariance must be sampled on the observation grid")
        truth = ref.values[ref_grid.nearest_index(est.eval_times)]
        pairs = list(upper_pairs(y.d))
        header = ["time"]
        for i, j in pairs:
            header += [f"x{i + 1}{j + 1}_hat", f"x{i + 1}{j + 1}_true", f"x{i + 1}{j + 1}_abs_error"]
        rows = []
        for k, t in enumerate(est.eval_times):
            row = [float(t)]
            for i, j in pairs:
                h, tr = float(est.x_path.values[k, i, j]), float(truth[k, i, j])
                row += [h, tr, abs(h - tr)]
            rows.append(row)
        paths.append(io.write_table(_out(cfg, "spot_comparison.csv"), header, rows))
    return paths


def run_estimate_params(cfg: RunConfig) -> List[Path]:
    y = io.parse_observations_csv(cfg.input)
    spec = cfg.g_spec(y.d)
    sp = cfg.second_pass_config()
    N = cfg.mode_count(y.grid.n, y.grid.T)
    m_values = cfg.m_values or [sp.resolve_m(y.grid.n)]
    m_values = [int(m) for m in (m_values if isinstance(m_values, list) else [m_values])]
    coeffs = fourier_coefficients(y, spec, N)
    ests = estimate_parameters_over_m(coeffs, spec, y, m_values, sp, cfg.clamp_policy())
    d = y.d
    pairs = list(upper_pairs(d))
    header = ["m"] + [f"alpha{i + 1}{j + 1}" for i, j in pairs] + [f"rho{i + 1}" for i in range(d)]
    keys = sorted({k for e in ests for k in e.objective_values})
    header += [f"residual_{k}" for k in keys] + ["clamp_count"]
    rows = []
    for e in ests:
        row = [e.m] + [float(e.alpha_hat[i, j]) for i, j in pairs] + [float(v) for v in e.rho_hat]
        row += [float(e.objective_values.get(k, float("nan"))) for k in keys] + [e.clamp_count]
        rows.append(row)
    return [io.write_table(_out(cfg, "params.csv"), header, rows)]


def run_mc_clt(cfg: RunConfig) -> List[Path]:
    design = ConstantDesign([[float(cfg.mc_x)]], float(cfg.T))
    n, reps = int(cfg.n), int(cfg.reps)
    if cfg.experiment == "fourier":
        spec = cfg.g_spec(1)
        report = clt_fourier_experiment(design, spec, n, cfg.mode_count(n, cfg.T), reps, cfg.seed)
    else:
        spec = cfg.g_spec(1)
        report = clt_spot_experiment(design, spec, n, cfg.gamma, cfg.K, reps=reps, seed=cfg.seed)
    logger.info("%s finished in %.2f s", report.name, report.wall_clock)
    # wall clock goes to the log only so repeated runs give identical files
    text = "\n".join(l for l in report.summary_text().splitlines() if not l.startswith("wall_clock")) + "\n"
    summary = _out(cfg, f"mc_{report.name}_summary.txt")
    summary.write_text(text, encoding="utf-8")
    return [report.write_csv(_out(cfg, f"mc_{report.name}.csv")), summary]


def run_kernel_table(cfg: RunConfig) -> List[Path]:
    samples_rows, ident_rows = [], []
    xs = np.linspace(-np.pi, np.pi, int(cfg.kernel_samples))
    for N in cfg.kernel_N:
        vals = fejer_kernel(xs, N)
        samples_rows += [[N, float(x), float(v)] for x, v in zip(xs, vals)]
        ids = fejer_identities(N)
        ident_rows.append([N, ids["integral"], ids["integral_closed_form"], ids["second_moment"],
                           ids["second_moment_closed_form"], ids["max_abs_at_zeros"]])
    return [
        io.write_table(_out(cfg, "kernel_samples.csv"), ["N", "x", "F_N"], samples_rows),
        io.write_table(
            _out(cfg, "kernel_identities.csv"),
            ["N", "integral", "integral_closed_form", "second_moment", "second_moment_closed_form",
             "max_abs_at_zeros"],
            ident_rows,
        ),
    ]


_RUNNERS = {
    "simulate": run_simulate,
    "estimate-spot": run_estimate_spot,
    "estimate-params": run_estimate_params,
    "mc-clt": run_mc_clt,
    "kernel-table": run_kernel_table,
}


def run(cfg: RunConfig) -> List[Path]:
    """Execute one validated configuration and return the artifact paths."""
    return _RUNNERS[cfg.mode](cfg)


def _error_record(exc: Exception, status: int) -> str:
    return json.dumps({
        "status": status,
        "category": "validation" if status == 2 else "numerical",
        "error": type(exc).__name__,
        "message": str(exc),
        **({"row": exc.row} if getattr(exc, "row", None) is not None else {}),
    })


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covfourier", description="Fourier-Fejer spot covariance estimation")
    p.add_argument("mode", nargs="?", choices=MODES, help="overrides the mode key of the config")
    p.add_argument("-c", "--config", help="key = value configuration file")
    p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("-o", "--output-dir", help="directory for artifacts")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    try:
        cfg = load_config(args.config, overrides, args.mode)
        for p in run(cfg):
            print(p)
    except ValidationError as exc:
        print(_error_record(exc, 2), file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(_error_record(exc, 3), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
