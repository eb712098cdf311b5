"""
Command-line driver: configuration, run orchestration and file output.

Usage::

    lambdaspec {summary|spectrum|oracle|compare|selftest}
               (--config PATH | --preset NAME) [--out DIR] [--no-metadata]

Frequencies in every file are ``(omega - omega_L1) / nu``. Outputs are
deterministic: the same configuration and version give byte-identical
files. The only time-dependent content is the ``metadata`` block of the
JSON outputs, which ``--no-metadata`` removes.

Exit codes: 0 success, 2 configuration, 3 I/O, 4 heating regime,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from .core import InvalidArgument, NumericalFailure
from .model import ModelParams, build_expansion, detuning_sign_audit
from .oracle import build_full_liouvillian, fit_lorentzian, oracle_spectrum, steady_state
from .perturbation import (
    HeatingRegimeError,
    closed_form_s,
    correct_eigenspace,
    phonon_coefficients,
    phonon_effective_eigensystem,
    resolvent_s,
)
from .spectrum import (
    Component,
    closed_form_f,
    composite_weights,
    compute_spectrum,
    elastic_peak_weight,
    g_weights,
    sideband_closed_form,
    trace_formula_f,
    vanishing_order_checks,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_REGIME, EXIT_NUMERICAL = 0, 2, 3, 4, 5
PRESETS = ("fig2a", "fig2b", "fig3a", "fig3b", "fig3c", "fig4")
SUBCOMMANDS = ("summary", "spectrum", "oracle", "compare", "selftest")
GENERIC_PSI = 0.4

_PARAM_FIELDS = [f.name for f in dataclasses.fields(ModelParams)]
_REQUIRED = ("omega1", "omega2", "delta", "gamma1", "gamma2", "eta1", "eta2")


class ConfigError(Exception):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    """Uniform frequency grid plus optional refined sideband windows.

    The windows are centred on ``+-(1 + nu_bar)`` and span
    ``refine_halfwidths`` sideband half-widths on either side.
    """

    omega_min: float = -50.0
    omega_max: float = 50.0
    points: int = 2001
    refine_sidebands: bool = True
    refine_points: int = 201
    refine_halfwidths: float = 10.0


@dataclass(frozen=True)
class OracleConfig:
    """Settings of the full master-equation reference.

    ``n_max=None`` reuses the model truncation. ``points`` is the size of
    the uniform part of the oracle grid; the refined sideband windows are
    added on top.
    """

    enabled: bool = True
    n_max: int | None = None
    quadrature_nodes: int = 16
    points: int = 201
    workers: int = 1


@dataclass(frozen=True)
class OutputConfig:
    spectrum_csv: str = "spectrum.csv"
    summary_json: str = "summary.json"
    plot_script: str = "plot.gp"
    oracle_csv: str = "oracle.csv"
    compare_json: str = "compare.json"
    selftest_json: str = "selftest.json"


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``caption_n_bar`` is an externally quoted phonon number that ``compare``
    sets against the closed-form value.
    """

    params: ModelParams
    grid: GridConfig = field(default_factory=GridConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    label: str = ""
    caption_n_bar: float | None = None


def _number(value, path: str, *, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer:
        if int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true or false, got {value!r}")
    return value


def _section(data: dict, key: str, cls, converters: dict[str, Callable]):
    raw = data.get(key, {})
    if not isinstance(raw, dict):
        raise ConfigError(key, "expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    values = {}
    for k, v in raw.items():
        if k not in names:
            raise ConfigError(f"{key}.{k}", "unknown key")
        values[k] = converters[k](v, f"{key}.{k}")
    return cls(**values)


def default_n_max(params: ModelParams) -> int:
    """``max(15, ceil(8 n_bar))`` from the closed-form phonon number.

    Parameters in the heating regime keep 15; the run reports the regime.
    """
    s_p, s_m = closed_form_s(params, 1.0), closed_form_s(params, -1.0)
    a_p, a_m = 2 * s_p.real, 2 * s_m.real
    if not a_m > a_p:
        return 15
    return max(15, math.ceil(8 * a_p / (a_m - a_p)))


def config_from_dict(data: Any, source: str = "<config>") -> RunConfig:
    """Validate a decoded JSON object and fill in defaults."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", f"{source} must hold a JSON object")
    sections = {"grid", "oracle", "outputs", "caption", "label"}
    for k in data:
        if k not in sections and k not in _PARAM_FIELDS:
            raise ConfigError(k, "unknown key")
    for k in _REQUIRED:
        if k not in data:
            raise ConfigError(k, "missing required field")

    values: dict[str, Any] = {}
    for k in _PARAM_FIELDS:
        if k not in data:
            continue
        v = data[k]
        if k == "pattern":
            if isinstance(v, str):
                if v not in ("isotropic", "dipole"):
                    raise ConfigError(k, f"expected 'isotropic', 'dipole' or a number, got {v!r}")
                values[k] = v
            else:
                values[k] = _number(v, k)
        elif k == "n_max":
            values[k] = _number(v, k, integer=True)
            if values[k] < 1:
                raise ConfigError(k, "must be >= 1")
        else:
            values[k] = _number(v, k)
    for k in ("gamma1", "gamma2", "eta1", "eta2"):
        if values[k] < 0:
            raise ConfigError(k, "must be non-negative")
    try:
        params = ModelParams(**values)
        if "n_max" not in values:
            params = params.with_(n_max=default_n_max(params))
    except InvalidArgument as exc:
        raise ConfigError("<params>", str(exc)) from None

    num = lambda v, p: _number(v, p)  # noqa: E731
    intg = lambda v, p: _number(v, p, integer=True)  # noqa: E731
    grid = _section(data, "grid", GridConfig, {
        "omega_min": num, "omega_max": num, "points": intg,
        "refine_sidebands": _bool, "refine_points": intg, "refine_halfwidths": num,
    })
    if not grid.omega_min < grid.omega_max:
        raise ConfigError("grid.omega_max", "must exceed grid.omega_min")
    if grid.points < 2:
        raise ConfigError("grid.points", "must be >= 2")
    if grid.refine_points < 3:
        raise ConfigError("grid.refine_points", "must be >= 3")
    if not grid.refine_halfwidths > 0:
        raise ConfigError("grid.refine_halfwidths", "must be positive")

    def opt_int(v, p):
        return None if v is None else intg(v, p)

    oracle = _section(data, "oracle", OracleConfig, {
        "enabled": _bool, "n_max": opt_int, "quadrature_nodes": intg,
        "points": intg, "workers": intg,
    })
    if oracle.n_max is not None and oracle.n_max < 1:
        raise ConfigError("oracle.n_max", "must be >= 1")
    if oracle.quadrature_nodes < 1:
        raise ConfigError("oracle.quadrature_nodes", "must be >= 1")
    if oracle.points < 2:
        raise ConfigError("oracle.points", "must be >= 2")
    if oracle.workers < 1:
        raise ConfigError("oracle.workers", "must be >= 1")

    def fname(v, p):
        if not isinstance(v, str) or not v or "/" in v or "\\" in v:
            raise ConfigError(p, "expected a plain file name")
        return v

    outputs = _section(data, "outputs", OutputConfig,
                       {f.name: fname for f in dataclasses.fields(OutputConfig)})

    caption = data.get("caption", {})
    if not isinstance(caption, dict):
        raise ConfigError("caption", "expected an object")
    for k in caption:
        if k != "n_bar":
            raise ConfigError(f"caption.{k}", "unknown key")
    cap = caption.get("n_bar")
    if cap is not None:
        cap = _number(cap, "caption.n_bar")
    label = data.get("label", "")
    if not isinstance(label, str):
        raise ConfigError("label", "expected a string")
    return RunConfig(params, grid, oracle, outputs, label, cap)


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a UTF-8 JSON configuration file.

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigError
        If the content is not valid JSON or fails validation.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(data, str(path))


def load_preset(name: str) -> RunConfig:
    """Configuration shipped with the package under ``presets/``."""
    if name not in PRESETS:
        raise ConfigError("--preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("lambdaspec").joinpath("presets", f"{name}.json").read_text("utf-8")
    return config_from_dict(json.loads(text), name)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, obj: dict) -> None:
    text = json.dumps(_jsonable(obj), indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    """Comma-separated floats with 17 significant digits and LF endings."""
    rows = np.column_stack([np.asarray(c, float) for c in columns])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.16e}" for v in row) + "\n")


def _metadata() -> dict:
    return {
        "tool": "lambdaspec",
        "version": __version__,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _params_dict(p: ModelParams) -> dict:
    return dataclasses.asdict(p)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


def sideband_windows(coeffs, grid: GridConfig) -> list[np.ndarray]:
    """Refined grids around the Stokes and anti-Stokes centres."""
    span = grid.refine_halfwidths * coeffs.sideband_halfwidth
    return [
        np.linspace(c - span, c + span, grid.refine_points)
        for c in (-(1 + coeffs.nu_bar), 1 + coeffs.nu_bar)
    ]


def build_grid(grid: GridConfig, coeffs, points: int | None = None) -> np.ndarray:
    """Uniform grid merged with the sideband windows, strictly increasing."""
    base = np.linspace(grid.omega_min, grid.omega_max, points or grid.points)
    if not grid.refine_sidebands:
        return base
    parts = [base] + [
        w[(w > grid.omega_min) & (w < grid.omega_max)] for w in sideband_windows(coeffs, grid)
    ]
    return np.unique(np.concatenate(parts))


def _lambda_I_list(exp) -> list[complex]:
    ev = exp.decomposition.eigenvalues
    keyed = sorted(ev, key=lambda z: (round(z.imag, 9), round(z.real, 9)))
    return [complex(z) for z in keyed]


def run_summary(cfg: RunConfig) -> dict:
    """Phonon coefficients, sideband height, elastic weight and ``lambda_I``."""
    p = cfg.params
    exp = build_expansion(p)
    coeffs = phonon_coefficients(exp)
    sb = sideband_closed_form(p, coeffs)
    state = correct_eigenspace(exp, 0.0)
    return {
        "label": cfg.label,
        "n_bar": coeffs.n_bar,
        "A_plus": coeffs.A_plus,
        "A_minus": coeffs.A_minus,
        "gamma_S": coeffs.gamma_S,
        "nu_bar": coeffs.nu_bar,
        "s0": sb.s0,
        "elastic_weight": elastic_peak_weight(exp, state),
        "lambda_I": _lambda_I_list(exp),
        "sideband_center": sb.center,
        "sideband_halfwidth": sb.halfwidth,
        "sideband_peak": sb.peak,
        "params": _params_dict(p),
    }


def _plot_script(cfg: RunConfig, summary: dict) -> str:
    c = -(1 + summary["nu_bar"])
    span = cfg.grid.refine_halfwidths * summary["sideband_halfwidth"]
    csv = cfg.outputs.spectrum_csv
    title = cfg.label or "spectrum"
    return "\n".join([
        "# gnuplot script: full spectrum with the Stokes sideband as inset",
        "set terminal pngcairo size 900,650",
        f"set output '{title}.png'",
        "set datafile separator ','",
        "set key top right",
        "set multiplot",
        f"set title '{title}'",
        "set xlabel '(omega - omega_L1) / nu'",
        "set ylabel 'S(omega) [arb. units]'",
        f"set xrange [{cfg.grid.omega_min!r}:{cfg.grid.omega_max!r}]",
        f"plot '{csv}' using 1:3 skip 1 with lines lw 2 dt 1 title 'sidebands', \\",
        f"     '{csv}' using 1:4 skip 1 with lines lw 1 dt 2 title 'Mollow-type'",
        "unset title",
        "set origin 0.12,0.45",
        "set size 0.38,0.42",
        "set key off",
        "unset xlabel",
        "unset ylabel",
        f"set xrange [{c - span!r}:{c + span!r}]",
        f"set arrow 1 from {c!r}, graph 0 to {c!r}, graph 1 nohead dt 3",
        f"set arrow 2 from -1, graph 0 to -1, graph 1 nohead dt 2",
        f"plot '{csv}' using 1:3 skip 1 with lines lw 2 dt 1, \\",
        f"     '{csv}' using 1:4 skip 1 with lines lw 1 dt 2",
        "unset multiplot",
        "",
    ])


def run_spectrum(cfg: RunConfig, out: Path, metadata: bool) -> dict:
    summary = run_summary(cfg)
    coeffs = phonon_coefficients(build_expansion(cfg.params))
    omega = build_grid(cfg.grid, coeffs)
    res = compute_spectrum(cfg.params, omega)
    write_csv(out / cfg.outputs.spectrum_csv, ["omega", "S_total", "S_SB", "S_M"],
              [res.omega_grid, res.S_total, res.S_SB, res.S_M])
    if metadata:
        summary["metadata"] = _metadata()
    write_json(out / cfg.outputs.summary_json, summary)
    (out / cfg.outputs.plot_script).write_text(_plot_script(cfg, summary), encoding="utf-8")
    return summary


def _oracle_setup(cfg: RunConfig):
    o = cfg.oracle
    p = cfg.params if o.n_max is None else cfg.params.with_(n_max=o.n_max)
    full = build_full_liouvillian(p, o.quadrature_nodes)
    return p, full, steady_state(full)


def _oracle_grid(cfg: RunConfig) -> np.ndarray:
    coeffs = phonon_coefficients(build_expansion(cfg.params))
    return build_grid(cfg.grid, coeffs, points=cfg.oracle.points)


def run_oracle(cfg: RunConfig, out: Path) -> dict:
    if not cfg.oracle.enabled:
        raise ConfigError("oracle.enabled", "oracle runs are disabled for this configuration")
    _, full, rho = _oracle_setup(cfg)
    omega = _oracle_grid(cfg)
    res = oracle_spectrum(full, rho, omega, workers=cfg.oracle.workers)
    if res.errors:
        raise NumericalFailure(f"oracle solve failed at {len(res.errors)} frequencies")
    write_csv(out / cfg.outputs.oracle_csv, ["omega", "S_oracle"], [res.omega, res.S])
    return {"elastic_weight": res.elastic_weight, "top_population": res.top_population}


def _mean_phonon(p: ModelParams, rho: np.ndarray) -> float:
    M = p.n_max + 1
    num = np.kron(np.eye(3), np.diag(np.arange(M, dtype=float)))
    return float(np.real(np.trace(num @ rho)))


def run_compare(cfg: RunConfig, metadata: bool) -> dict:
    """Perturbative results against the oracle and any quoted phonon number."""
    p = cfg.params
    exp = build_expansion(p)
    coeffs = phonon_coefficients(exp)
    sb = sideband_closed_form(p, coeffs)
    summary = run_summary(cfg)
    report: dict[str, Any] = {
        "label": cfg.label,
        "perturbative": {k: summary[k] for k in (
            "n_bar", "gamma_S", "nu_bar", "s0", "sideband_center", "sideband_halfwidth",
            "sideband_peak", "elastic_weight")},
    }
    if cfg.caption_n_bar is not None:
        gap = (cfg.caption_n_bar - coeffs.n_bar) / coeffs.n_bar
        report["caption"] = {
            "n_bar_quoted": cfg.caption_n_bar,
            "n_bar_closed_form": coeffs.n_bar,
            "relative_gap": gap,
            "discrepancy": abs(gap) > 0.1,
            "note": (
                "quoted phonon number differs from the closed-form value A_+/(A_- - A_+) "
                "by more than 10%" if abs(gap) > 0.1 else
                "quoted phonon number agrees with the closed-form value within 10%"
            ),
        }
    else:
        report["caption"] = None

    if not cfg.oracle.enabled:
        report["oracle"] = {"skipped": "oracle disabled in configuration"}
    else:
        po, full, rho = _oracle_setup(cfg)
        omega = _oracle_grid(cfg)
        t0 = time.perf_counter()
        orc = oracle_spectrum(full, rho, omega, workers=cfg.oracle.workers)
        pert = compute_spectrum(p, omega)
        elapsed = time.perf_counter() - t0
        ok = np.isfinite(orc.S)
        n_or = _mean_phonon(po, rho.matrix)
        sides = {}
        for name, win in zip(("stokes", "anti_stokes"), sideband_windows(coeffs, cfg.grid)):
            c = float(win[len(win) // 2])
            po_c = oracle_spectrum(full, rho, [c]).S[0]
            pp_c = float(compute_spectrum(p, [c]).S_total[0])
            wo = oracle_spectrum(full, rho, win, workers=cfg.oracle.workers).S
            fit = fit_lorentzian(win, wo, c, sb.halfwidth)
            sides[name] = {
                "center_predicted": c,
                "peak_perturbative": pp_c,
                "peak_oracle": float(po_c),
                "peak_relative_deviation": abs(po_c - pp_c) / abs(pp_c),
                "fit_center": fit.center,
                "fit_halfwidth": fit.halfwidth,
                "halfwidth_predicted": sb.halfwidth,
                "gamma_S": coeffs.gamma_S,
                "fit_halfwidth_over_gamma_S": fit.halfwidth / coeffs.gamma_S,
            }
        scale = float(np.max(np.abs(pert.S_total)))
        dev = np.abs(orc.S[ok] - pert.S_total[ok]) / scale
        report["oracle"] = {
            "n_max": po.n_max,
            "quadrature_nodes": cfg.oracle.quadrature_nodes,
            "grid_points": int(omega.size),
            "failed_points": len(orc.errors),
            "n_bar_oracle": n_or,
            "n_bar_relative_deviation": abs(n_or - coeffs.n_bar) / coeffs.n_bar,
            "elastic_weight_oracle": orc.elastic_weight,
            "elastic_relative_deviation": (
                abs(orc.elastic_weight - summary["elastic_weight"]) / summary["elastic_weight"]
                if summary["elastic_weight"] > 0 else None
            ),
            "top_fock_population": orc.top_population,
            "truncation_warning": orc.truncation_warning,
            "max_deviation_over_grid": float(dev.max()) if dev.size else None,
            "sidebands": sides,
            "elapsed_s": elapsed,
        }
    report["params"] = _params_dict(p)
    if metadata:
        report["metadata"] = _metadata()
    return report


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)


def _rel(a, b) -> float:
    return float(abs(a - b) / max(abs(b), 1e-300))


def selftest_checks(cfg: RunConfig) -> list[Check]:
    """Vanishing-order checks and module invariants for one parameter set."""
    p = cfg.params
    exp = build_expansion(p)
    coeffs = phonon_coefficients(exp)
    sb = sideband_closed_form(p, coeffs)
    dec = exp.decomposition
    checks: list[Check] = []

    bio = np.array([[np.trace(l.matrix @ r.matrix) for r in dec.right] for l in dec.left])
    checks.append(Check("biorthonormal internal eigen-elements", float(np.abs(bio - np.eye(9)).max()), 1e-10))
    L0 = exp.L0.apply
    X = np.random.default_rng(0).standard_normal((3 * (p.n_max + 1),) * 2)
    checks.append(Check("L0 trace preserving", float(abs(np.trace(L0(X)))), 1e-10))

    for nu in (1.0, -1.0):
        checks.append(Check(f"s({nu:+g}) closed form vs resolvent",
                            _rel(closed_form_s(p, nu), resolvent_s(exp, nu)), 1e-9))
    for lam in (1j, -1j):
        checks.append(Check(f"f({lam.imag:+g}i) closed form vs trace formula",
                            _rel(closed_form_f(p, lam), trace_formula_f(exp, lam)), 1e-9))
    n = coeffs.n_bar
    checks.append(Check("detailed balance n/(1+n) = A+/A-",
                        _rel(n / (1 + n), coeffs.A_plus / coeffs.A_minus), 1e-12))
    checks.append(Check("balanced sideband weights n|f+|^2 = (n+1)|f-|^2",
                        _rel(n * abs(sb.f_plus) ** 2, (n + 1) * abs(sb.f_minus) ** 2), 1e-10))
    checks.append(Check("sideband height from two closed forms", _rel(sb.s0_alt, sb.s0), 1e-9))

    terms = g_weights(exp, coeffs)
    peaks = [t.peak for t in terms if t.component is Component.SIDEBAND]
    checks.append(Check("equal sideband heights", abs(peaks[0] - peaks[1]) / sb.s0, 1e-8))

    modes = phonon_effective_eigensystem(coeffs, 40, range(4), range(-2, 3))
    err = max(abs(m.eigenvalue - m.closed_form) for m in modes)
    checks.append(Check("effective phonon eigenvalues (n_max=40)",
                        err / max(abs(coeffs.gamma_S), abs(coeffs.nu_bar)), 1e-8))

    state = correct_eigenspace(exp, 0.0)
    secular = correct_eigenspace(exp, 0.0, secular=True)
    checks.append(Check("stationary state shortcut vs secular solve",
                        float(np.abs(state.rho2.matrix - secular.rho2.matrix).max()
                              / max(np.abs(secular.rho2.matrix).max(), 1e-300)), 1e-8))
    checks.append(Check("trace of rho1, rho2",
                        float(max(abs(np.trace(state.rho1.matrix)), abs(np.trace(state.rho2.matrix)))),
                        1e-12))
    for lam0 in (0.0, 1j, -1j):
        st = state if lam0 == 0 else correct_eigenspace(exp, lam0)
        checks.append(Check(f"lambda1 vanishes at lambda0={lam0.imag:+g}i",
                            abs(st.lambda1) / coeffs.gamma_S, 1e-8))

    rows = composite_weights(exp, state)
    comp = {(round(r["lambda0"].real, 6), round(r["lambda0"].imag, 6)): r["f1"] + r["f2"] for r in rows}
    gmax = max(abs(t.weight) for t in terms)
    diff = 0.0
    for t in terms:
        lam0 = t.lambda_I + 1j * t.ell
        diff = max(diff, abs(comp[(round(lam0.real, 6), round(lam0.imag, 6))] - t.weight))
    checks.append(Check("factorized vs composite pole weights", diff / gmax, 1e-6))

    # at psi = pi/2 the first-order detector term vanishes identically, so
    # the checks are repeated at a generic angle
    for psi in (p.psi, GENERIC_PSI):
        e = exp if psi == p.psi else build_expansion(p.with_(psi=psi))
        rep = vanishing_order_checks(e, state if psi == p.psi else None)
        tag = f"(psi={psi:.4g})"
        checks.append(Check(f"zero-order trace term S0 {tag}", rep.S0_max, rep.tol))
        checks.append(Check(f"first-order trace terms S1 {tag}", rep.S1_max, rep.tol))
        for k, v in rep.six_max.items():
            checks.append(Check(f"second-order term {k} {tag}", v, rep.tol))
        checks.append(Check(f"psi shift invariance {tag}", rep.psi_shift, rep.tol))
        checks.append(Check(f"beta swap invariance {tag}", rep.beta_swap, rep.tol))

    audit = detuning_sign_audit(p)
    checks.append(Check("detuning sign audit", 0.0 if audit["chosen"] == audit["library_sign"] else 1.0, 0.0))
    return checks


def run_selftest(cfg: RunConfig, out: Path | None, metadata: bool) -> bool:
    checks = selftest_checks(cfg)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.value:.3e} (tol {c.tol:.0e})")
    ok = all(c.passed for c in checks)
    print(f"selftest: {sum(c.passed for c in checks)}/{len(checks)} passed")
    if out is not None:
        rep = {
            "label": cfg.label,
            "passed": ok,
            "checks": [{"name": c.name, "value": c.value, "tol": c.tol, "passed": c.passed}
                       for c in checks],
        }
        if metadata:
            rep["metadata"] = _metadata()
        write_json(out / cfg.outputs.selftest_json, rep)
    return ok


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lambdaspec",
        description="Resonance-fluorescence spectrum of a trapped, dark-state cooled Lambda atom.",
    )
    parser.add_argument("command", choices=SUBCOMMANDS)
    src = parser.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON configuration file")
    src.add_argument("--preset", choices=PRESETS, help="packaged configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--no-metadata", action="store_true",
                        help="omit the time-dependent metadata block from JSON outputs")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def run(cfg: RunConfig, command: str, out: Path, metadata: bool = True) -> int:
    """Execute one subcommand; returns the process exit code."""
    if command == "summary":
        summary = run_summary(cfg)
        if metadata:
            summary["metadata"] = _metadata()
        write_json(out / cfg.outputs.summary_json, summary)
        print(json.dumps(_jsonable({k: summary[k] for k in (
            "n_bar", "A_plus", "A_minus", "gamma_S", "nu_bar", "s0", "elastic_weight")}), indent=2))
    elif command == "spectrum":
        run_spectrum(cfg, out, metadata)
    elif command == "oracle":
        run_oracle(cfg, out)
    elif command == "compare":
        write_json(out / cfg.outputs.compare_json, run_compare(cfg, metadata))
    elif command == "selftest":
        return EXIT_OK if run_selftest(cfg, out, metadata) else EXIT_NUMERICAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = parse_config(args.config)
        elif args.preset or args.command == "selftest":
            cfg = load_preset(args.preset or "fig2a")
        else:
            raise ConfigError("--config", "a configuration file or --preset is required")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return run(cfg, args.command, out, metadata=not args.no_metadata)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HeatingRegimeError as exc:
        print(f"heating regime: {exc}", file=sys.stderr)
        print(f"  A_plus  = {exc.A_plus:.6e}\n  A_minus = {exc.A_minus:.6e}\n"
              f"  gamma_S = {exc.A_minus - exc.A_plus:.6e}", file=sys.stderr)
        return EXIT_REGIME
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
