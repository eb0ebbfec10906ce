"""Scenario configuration, batch runs and the summary table."""

from __future__ import annotations

import configparser
import math
import os
import re
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import assemble_generator, build_mesh, interpolate
from .exceptions import ConfigError, FitError, KVBeamError
from .frequency_domain import (
    ResolventSweep,
    SpectrumReport,
    boundedness_certificate,
    resolvent_sweep,
    spectrum,
)
from .model import BeamParameters, ContinuousState, DampingConfiguration, DampingProfile, Side
from .time_domain import DecayFit, Trajectory, default_window, fit_decay_exponent, simulate

CATALOG = ("mode1", "mode1-mixed", "bump-left", "random-smooth")
SIDES = ("shear", "bending", "none", "both")

#: Acceptance windows used by the verdict column.
DECAY_WINDOW = (0.35, 0.65)
BETA_WINDOW = (1.6, 2.4)
CLAIMED_DECAY = 0.5
CLAIMED_BETA = 2.0


class ScenarioError(KVBeamError):
    """A scenario failed at run time; the original error is ``__cause__``."""

    def __init__(self, name, cause):
        super().__init__(f"scenario '{name}': {type(cause).__name__}: {cause}")
        self.scenario = name


class HypothesisWarning(UserWarning):
    """A scenario lies outside the single-damping, alpha < 1 setting."""


@dataclass(frozen=True)
class Scenario:
    name: str
    damping_side: str
    rho1: float = 1.0
    rho2: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    damping_scale: float = 1.0
    damping_exponent: float = 0.5
    mesh_n: int = 128
    dt: float = 0.01
    t_end: float = 1.0e4
    sample_every: int = 10
    omega_lo: float = 10.0
    omega_hi: float | None = None
    sweep_points: int | None = None
    initial_data: str = "mode1-mixed"
    seed: int = 0

    @property
    def params(self):
        return BeamParameters(self.rho1, self.rho2, self.kappa1, self.kappa2)

    @property
    def exploratory(self):
        """True outside the setting with exactly one damping and alpha < 1."""
        return self.damping_side not in ("shear", "bending") or self.damping_exponent >= 1.0

    @property
    def alpha(self):
        return math.nan if self.damping_side == "none" else self.damping_exponent

    def damping(self):
        strict = not self.exploratory
        if self.damping_side == "none":
            return DampingConfiguration()
        if self.damping_side == "both":
            return DampingConfiguration(
                DampingProfile.power_law(Side.SHEAR, self.damping_scale, self.damping_exponent, validate=False),
                DampingProfile.power_law(Side.BENDING, self.damping_scale, self.damping_exponent, validate=False),
            )
        return DampingConfiguration.single(
            self.damping_side, self.damping_scale, self.damping_exponent, validate=strict
        )


_FLOAT_KEYS = ("rho1", "rho2", "kappa1", "kappa2", "damping_scale", "damping_exponent", "dt", "t_end", "omega_lo", "omega_hi")
_INT_KEYS = ("mesh_n", "sample_every", "sweep_points", "seed")
_STR_KEYS = ("damping_side", "initial_data")
_KEYS = set(_FLOAT_KEYS + _INT_KEYS + _STR_KEYS)
_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_ENTRY = re.compile(r"^\s*([A-Za-z0-9_]+)\s*[=:]")


def _line_index(text):
    """Map ``(section, key)`` and ``section`` to 1-based line numbers."""
    where, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault(section, lineno)
            continue
        m = _ENTRY.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).lower()), lineno)
    return where


def parse_config(text):
    """Parse a scenario document into validated :class:`Scenario` objects.

    One ``[scenario.NAME]`` section per scenario; unknown keys are rejected.
    Exponents >= 1 and sides ``none``/``both`` are accepted with a
    :class:`HypothesisWarning` and mark the scenario exploratory.
    """
    parser = configparser.ConfigParser(strict=True, interpolation=None, default_section="\x00defaults")
    try:
        parser.read_string(text)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate scenario name '{exc.section}'", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key in [{exc.section}]", line=exc.lineno, field=exc.option) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None

    lines = _line_index(text)
    scenarios = []
    for section in parser.sections():
        if not section.startswith("scenario.") or not section[len("scenario."):]:
            raise ConfigError(f"sections must be named [scenario.NAME], got [{section}]", line=lines.get(section))
        name = section[len("scenario."):]
        values = {}
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in _KEYS:
                raise ConfigError("unknown key", line=line, field=key)
            values[key] = _convert(key, raw.strip(), line)
        if "damping_side" not in values:
            raise ConfigError(f"[{section}] is missing damping_side", line=lines.get(section), field="damping_side")
        scenario = Scenario(name=name, **values)
        _check(scenario, lambda k: lines.get((section, k), lines.get(section)))
        if scenario.exploratory:
            warnings.warn(
                f"scenario '{name}' is outside the single-damping, alpha < 1 setting; "
                "it runs as exploratory and makes no claim",
                HypothesisWarning,
                stacklevel=2,
            )
        scenarios.append(scenario)
    if not scenarios:
        raise ConfigError("no [scenario.NAME] sections found")
    return scenarios


def _convert(key, raw, line):
    try:
        if key in _FLOAT_KEYS:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
        if key in _INT_KEYS:
            return int(raw)
    except ValueError:
        kind = "a float" if key in _FLOAT_KEYS else "an integer"
        raise ConfigError(f"expected {kind}, got {raw!r}", line=line, field=key) from None
    return raw


def _check(s, line_of):
    def fail(key, message):
        raise ConfigError(message, line=line_of(key), field=key)

    for key in ("rho1", "rho2", "kappa1", "kappa2", "damping_scale", "dt", "t_end", "omega_lo"):
        if not getattr(s, key) > 0:
            fail(key, "must be positive")
    if s.damping_side not in SIDES:
        fail("damping_side", f"must be one of {', '.join(SIDES)}")
    if s.damping_exponent < 0:
        fail("damping_exponent", "must be >= 0")
    if s.mesh_n < 4 or s.mesh_n % 2:
        fail("mesh_n", "must be an even integer >= 4")
    if s.sample_every < 1:
        fail("sample_every", "must be >= 1")
    if s.omega_hi is not None and s.omega_hi <= s.omega_lo:
        fail("omega_hi", "must exceed omega_lo")
    if s.sweep_points is not None and s.sweep_points < 8:
        fail("sweep_points", "must be >= 8")
    if s.initial_data not in CATALOG:
        fail("initial_data", f"must be one of {', '.join(CATALOG)}")
    if s.t_end < s.dt * s.sample_every:
        fail("t_end", "shorter than one sample interval")


# -- initial data ------------------------------------------------------------


def _sine(k):
    c = 0.5 * k * np.pi
    return (lambda x: np.sin(c * (np.asarray(x) + 1.0)), lambda x: c * np.cos(c * (np.asarray(x) + 1.0)))


def _sin_pi():
    return (lambda x: np.sin(np.pi * np.asarray(x)), lambda x: np.pi * np.cos(np.pi * np.asarray(x)))


def _bump(center=-0.5, radius=0.4):
    def f(x):
        z = (np.asarray(x, dtype=float) - center) / radius
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
        return out if out.ndim else float(out)

    def df(x):
        z = (np.asarray(x, dtype=float) - center) / radius
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        zi = z[inside]
        out[inside] = np.exp(-1.0 / (1.0 - zi**2)) * (-2.0 * zi / (1.0 - zi**2) ** 2) / radius
        return out if out.ndim else float(out)

    return f, df


def _series(coefs):
    terms = [_sine(k + 1) for k in range(len(coefs))]

    def f(x):
        return sum(c * t[0](x) for c, t in zip(coefs, terms))

    def df(x):
        return sum(c * t[1](x) for c, t in zip(coefs, terms))

    return f, df


def initial_state(name, seed=0):
    """Smooth clamped initial data from the catalog."""
    zero = ContinuousState.zero()
    if name == "mode1":
        w, dw = _sin_pi()
        return ContinuousState(w, dw, zero.phi, zero.dphi, zero.v, zero.dv, zero.psi, zero.dpsi)
    if name == "mode1-mixed":
        w, dw = _sin_pi()

        def phi(x):
            x = np.asarray(x)
            return np.sin(np.pi * x) * (1.0 - x**2)

        def dphi(x):
            x = np.asarray(x)
            return np.pi * np.cos(np.pi * x) * (1.0 - x**2) - 2.0 * x * np.sin(np.pi * x)

        return ContinuousState(w, dw, phi, dphi, zero.v, zero.dv, zero.psi, zero.dpsi)
    if name == "bump-left":
        b, db = _bump()
        return ContinuousState(b, db, b, db, zero.v, zero.dv, zero.psi, zero.dpsi)
    if name == "random-smooth":
        rng = np.random.default_rng(seed)
        fields = []
        for _ in range(4):
            modes = int(rng.integers(1, 7))
            fields.extend(_series(rng.standard_normal(modes) / np.arange(1, modes + 1) ** 2))
        return ContinuousState(*fields)
    raise ConfigError(f"unknown initial data '{name}'", field="initial_data")


# -- running -------------------------------------------------------------------


@dataclass
class ScenarioResult:
    scenario: Scenario
    decay: DecayFit | None
    decay_note: str
    fitted_beta: float
    beta_residual: float
    fit_range: tuple
    certificate: float
    certificate_omega: float
    spectral_abscissa: float
    axis_clearance: float
    conjugate_closed: bool
    initial_graph_norm: float
    energy_drift: float
    provenance: dict = field(default_factory=dict)

    @property
    def verdict(self):
        if self.scenario.exploratory:
            return "outside the single-damping alpha<1 hypotheses - no claim"
        if self.decay is None:
            return "inconclusive (window policy)"
        ok = (
            DECAY_WINDOW[0] <= self.decay.exponent <= DECAY_WINDOW[1]
            and BETA_WINDOW[0] <= self.fitted_beta <= BETA_WINDOW[1]
            and self.spectral_abscissa < 0
        )
        return "consistent with t^-1/2" if ok else "not consistent with t^-1/2"


def _atomic_write(path, writer):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_scenario(s, out_dir=None):
    """Assemble, simulate, sweep and fit one scenario; write raw files if ``out_dir`` is set."""
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        mesh = build_mesh(s.mesh_n)
        params = s.params
        damping = s.damping()
        sys = assemble_generator(mesh, params, damping, strict=not s.exploratory)
        eigen = spectrum(sys)
        u0 = interpolate(mesh, initial_state(s.initial_data, s.seed))
        traj = simulate(sys, u0, s.t_end, s.dt, s.sample_every)
        omega_hi = s.omega_hi if s.omega_hi is not None else sys.resolved_omega_max
        sweep = resolvent_sweep(sys, s.omega_lo, omega_hi, s.sweep_points, eigen=eigen)
    except KVBeamError as exc:
        raise ScenarioError(s.name, exc) from exc

    e0 = traj.energies[0]
    drift = float(np.max(np.abs(traj.energies - e0)) / e0) if e0 > 0 else 0.0
    decay, note = None, ""
    if damping.is_conservative:
        note = "skipped: conservative"
    elif traj.h_norms[0] == 0:
        note = "fit error: zero initial data"
    else:
        floor = 1.0 / abs(eigen.spectral_abscissa) if eigen.spectral_abscissa < 0 else None
        window = default_window(traj, params.wave_speed, floor_time=floor)
        if window is None:
            note = "inconclusive (window policy)"
        else:
            try:
                decay = fit_decay_exponent(traj, window)
            except FitError as exc:
                note = f"fit error: {exc}"
    cert = boundedness_certificate(sweep, CLAIMED_BETA)
    result = ScenarioResult(
        scenario=s,
        decay=decay,
        decay_note=note,
        fitted_beta=sweep.fitted_beta,
        beta_residual=sweep.residual,
        fit_range=sweep.fit_range,
        certificate=cert.value,
        certificate_omega=cert.omega,
        spectral_abscissa=eigen.spectral_abscissa,
        axis_clearance=eigen.imaginary_axis_clearance,
        conjugate_closed=eigen.conjugate_closed(),
        initial_graph_norm=traj.initial_graph_norm,
        energy_drift=drift,
        provenance={"version": __version__, "started": started},
    )
    if out_dir is not None:
        target = Path(out_dir) / s.name
        target.mkdir(parents=True, exist_ok=True)
        _atomic_write(target / "trajectory.csv", traj.to_csv)
        _atomic_write(target / "sweep.csv", sweep.to_csv)
        _atomic_write(target / "spectrum.csv", eigen.to_csv)
        result.provenance["finished"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        _atomic_write(target / "result.txt", lambda p: write_result(result, p))
    return result


def run_all(scenarios, out_dir=None, jobs=1):
    """Run scenarios (in parallel when ``jobs > 1``), returned in input order."""
    if jobs <= 1 or len(scenarios) <= 1:
        return [run_scenario(s, out_dir) for s in scenarios]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_scenario, s, out_dir) for s in scenarios]
        return [f.result() for f in futures]


# -- result files -------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_result(result, path):
    s = result.scenario
    rows = [("scenario." + k, v) for k, v in asdict(s).items()]
    rows += [("exploratory", s.exploratory), ("alpha", s.alpha)]
    d = result.decay
    rows += [
        ("decay.exponent", d.exponent if d else None),
        ("decay.constant", d.constant if d else None),
        ("decay.window_lo", d.window[0] if d else None),
        ("decay.window_hi", d.window[1] if d else None),
        ("decay.residual", d.residual if d else None),
        ("decay.bound_ratio", d.bound_ratio if d else None),
        ("decay.note", result.decay_note),
        ("sweep.fitted_beta", result.fitted_beta),
        ("sweep.residual", result.beta_residual),
        ("sweep.fit_lo", result.fit_range[0]),
        ("sweep.fit_hi", result.fit_range[1]),
        ("sweep.certificate", result.certificate),
        ("sweep.certificate_omega", result.certificate_omega),
        ("spectrum.abscissa", result.spectral_abscissa),
        ("spectrum.axis_clearance", result.axis_clearance),
        ("spectrum.conjugate_closed", result.conjugate_closed),
        ("initial_graph_norm", result.initial_graph_norm),
        ("energy_drift", result.energy_drift),
        ("verdict", result.verdict),
    ]
    rows += [("provenance." + k, v) for k, v in result.provenance.items()]
    with open(path, "w") as fh:
        for key, value in rows:
            fh.write(f"{key} = {_fmt(value)}\n")


def read_result(path):
    """Key-value pairs of a ``result.txt`` file (values as strings)."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    return out


def _num(text):
    return float(text) if text not in ("", None) else math.nan


@dataclass(frozen=True)
class ReportRow:
    """One table row, recomputed from the raw CSVs of a result directory."""

    name: str
    side: str
    alpha: float
    exploratory: bool
    decay_exponent: float
    beta: float
    abscissa: float
    note: str

    @property
    def verdict(self):
        if self.exploratory:
            return "outside the single-damping alpha<1 hypotheses - no claim"
        if math.isnan(self.decay_exponent):
            return "inconclusive (window policy)"
        ok = (
            DECAY_WINDOW[0] <= self.decay_exponent <= DECAY_WINDOW[1]
            and BETA_WINDOW[0] <= self.beta <= BETA_WINDOW[1]
            and self.abscissa < 0
        )
        return "consistent with t^-1/2" if ok else "not consistent with t^-1/2"


def load_row(directory):
    """Rebuild a report row from ``result.txt`` windows and the raw CSVs."""
    directory = Path(directory)
    meta = read_result(directory / "result.txt")
    traj = Trajectory.from_csv(directory / "trajectory.csv", _num(meta["initial_graph_norm"]))
    lo, hi = _num(meta.get("decay.window_lo")), _num(meta.get("decay.window_hi"))
    decay = math.nan
    if not (math.isnan(lo) or math.isnan(hi)):
        decay = fit_decay_exponent(traj, (lo, hi)).exponent
    sweep = ResolventSweep.from_csv(
        directory / "sweep.csv", (_num(meta["sweep.fit_lo"]), _num(meta["sweep.fit_hi"]))
    )
    eigen = SpectrumReport.from_csv(directory / "spectrum.csv")
    return ReportRow(
        name=meta["scenario.name"],
        side=meta["scenario.damping_side"],
        alpha=_num(meta["alpha"]),
        exploratory=meta["exploratory"] == "true",
        decay_exponent=decay,
        beta=sweep.fitted_beta,
        abscissa=eigen.spectral_abscissa,
        note=meta.get("decay.note", ""),
    )


def table_report(rows):
    """Render the summary table; claimed values and measurements are separate columns."""
    rows = [r if isinstance(r, ReportRow) else _row_from_result(r) for r in rows]
    header = (
        "scenario",
        "active damping",
        "alpha",
        "claim: decay exp.",
        "measured decay exp.",
        "claim: beta",
        "measured beta",
        "spectral abscissa",
        "verdict",
    )
    body = []
    for r in rows:
        claim = not r.exploratory
        body.append(
            (
                r.name,
                {"shear": "D1 (D2=0)", "bending": "D2 (D1=0)"}.get(r.side, r.side),
                "-" if math.isnan(r.alpha) else f"{r.alpha:g}",
                f"{CLAIMED_DECAY:g}" if claim else "-",
                "-" if math.isnan(r.decay_exponent) else f"{r.decay_exponent:.3f}",
                f"{CLAIMED_BETA:g}" if claim else "-",
                "-" if math.isnan(r.beta) else f"{r.beta:.3f}",
                f"{r.abscissa:.3e}",
                r.verdict,
            )
        )
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]

    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"

    out = [line(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(b) for b in body]
    return "\n".join(out) + "\n"


def _row_from_result(res):
    s = res.scenario
    return ReportRow(
        name=s.name,
        side=s.damping_side,
        alpha=s.alpha,
        exploratory=s.exploratory,
        decay_exponent=res.decay.exponent if res.decay else math.nan,
        beta=res.fitted_beta,
        abscissa=res.spectral_abscissa,
        note=res.decay_note,
    )


def result_dirs(root):
    """Scenario directories (those holding ``result.txt``) under ``root``, sorted."""
    return sorted(p.parent for p in Path(root).glob("*/result.txt"))


# -- plot scripts -------------------------------------------------------------

_DECAY_GP = """\
set datafile separator ','
set logscale xy
set xlabel 't'
set ylabel '|U(t)|_H'
set title '{name}: energy-norm decay'
set key top right
t0 = {t_mid!r}
h0 = {h_mid!r}
ref(t) = h0 * (t / t0) ** (-0.5)
set arrow from {lo!r}, graph 0 to {lo!r}, graph 1 nohead dashtype 2
set arrow from {hi!r}, graph 0 to {hi!r}, graph 1 nohead dashtype 2
plot 'trajectory.csv' every ::2 using 1:2 with lines title 'h_norm', \\
     ref(x) with lines dashtype 3 title 'slope -1/2'
"""

_SWEEP_GP = """\
set datafile separator ','
set logscale xy
set xlabel 'omega'
set ylabel 'resolvent norm'
set title '{name}: resolvent along the imaginary axis'
set key top left
w0 = {w_mid!r}
r0 = {r_mid!r}
ref(w) = r0 * (w / w0) ** 2
plot 'sweep.csv' every ::1 using 4:2 with linespoints title 'band supremum', \\
     'sweep.csv' every ::1 using 1:5 with points title 'grid value', \\
     ref(x) with lines dashtype 3 title 'slope +2'
"""

_SPECTRUM_GP = """\
set datafile separator ','
set xlabel 'Re lambda'
set ylabel 'Im lambda'
set title '{name}: spectrum of the discrete generator'
plot 'spectrum.csv' every ::1 using 1:2 with points pointtype 7 pointsize 0.4 notitle
"""

PLOT_FILES = ("decay.gp", "resolvent.gp", "spectrum.gp")


def emit_plots(directory):
    """Write gnuplot scripts next to the raw CSVs of one scenario directory.

    Reference slopes are anchored at the geometric midpoint of the fit window
    (decay) and of the resolved frequency range (resolvent).
    """
    directory = Path(directory)
    for name in ("trajectory.csv", "sweep.csv", "spectrum.csv", "result.txt"):
        if not (directory / name).exists():
            raise FileNotFoundError(f"missing {directory / name}")
    meta = read_result(directory / "result.txt")
    label = meta["scenario.name"]
    traj = Trajectory.from_csv(directory / "trajectory.csv", _num(meta["initial_graph_norm"]))
    lo, hi = _num(meta.get("decay.window_lo")), _num(meta.get("decay.window_hi"))
    if math.isnan(lo):
        lo, hi = traj.times[1], traj.times[-1]
    t_mid = math.sqrt(lo * hi)
    h_mid = float(np.interp(t_mid, traj.times, traj.h_norms))
    fit_lo, fit_hi = _num(meta["sweep.fit_lo"]), _num(meta["sweep.fit_hi"])
    sweep = ResolventSweep.from_csv(directory / "sweep.csv", (fit_lo, fit_hi))
    w_mid = math.sqrt(fit_lo * fit_hi)
    ok = sweep.fit_mask()
    if ok.any() and math.isfinite(sweep.fitted_beta):
        slope, icpt = sweep.fitted_beta, np.mean(np.log(sweep.norms[ok])) - sweep.fitted_beta * np.mean(
            np.log(sweep.peak_omegas[ok])
        )
        r_mid = float(math.exp(icpt + slope * math.log(w_mid)))
    else:
        r_mid = 1.0
    scripts = {
        "decay.gp": _DECAY_GP.format(name=label, t_mid=t_mid, h_mid=h_mid, lo=lo, hi=hi),
        "resolvent.gp": _SWEEP_GP.format(name=label, w_mid=w_mid, r_mid=r_mid),
        "spectrum.gp": _SPECTRUM_GP.format(name=label),
    }
    paths = []
    for fname in PLOT_FILES:
        path = directory / fname
        _atomic_write(path, lambda p, text=scripts[fname]: Path(p).write_text(text))
        paths.append(path)
    return paths
