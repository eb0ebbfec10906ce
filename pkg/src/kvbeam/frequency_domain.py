"""Spectrum and imaginary-axis resolvent of the semidiscrete generator.

Norms are measured in the energy geometry: with ``gram = L L^T`` the map
``x -> L^T x`` is an isometry onto Euclidean space, so

    |(i w - A_h)^{-1}|_H = 1 / sigma_min(i w - L^T A_h L^{-T}).

A fixed logarithmic grid almost never lands on a resonance (peak widths
shrink like the damping of the least-damped modes), so sampled pointwise
norms say little about growth. Each grid point therefore owns a logarithmic
band, and the sweep records the supremum over the band, evaluated at the grid
point and at the resonance frequencies ``Im(lambda)`` of the least-damped
eigenvalues inside it. Bands holding no eigenvalue are kept for reference but
excluded from the growth fit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .exceptions import CapabilityError, ConfigurationError, FitError, OnSpectrumError

DENSE_CAP = 4000
POINTS_PER_DECADE = 16
#: Relative size of |Re(lambda)| below which an eigenvalue counts as on the axis.
AXIS_GUARD = 1e-9
SWEEP_COLUMNS = ("omega", "resolvent_norm", "omega^-2*norm", "peak_omega", "grid_norm", "resonant")


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray

    @property
    def spectral_abscissa(self):
        return float(np.max(self.eigenvalues.real))

    @property
    def imaginary_axis_clearance(self):
        return float(np.min(np.abs(self.eigenvalues.real)))

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(self.eigenvalues)))

    def conjugate_closed(self, tol=1e-8):
        """True if every eigenvalue's conjugate is also present (relative ``tol``)."""
        ev = self.eigenvalues
        scale = max(self.spectral_radius, 1.0)
        d = np.abs(np.conj(ev)[:, None] - ev[None, :]).min(axis=1)
        return bool(np.all(d <= tol * scale))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("re", "im"))
            for z in self.eigenvalues:
                writer.writerow((f"{z.real:.17g}", f"{z.imag:.17g}"))

    @classmethod
    def from_csv(cls, path):
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        return cls(data[:, 0] + 1j * data[:, 1])


def spectrum(sys, cap=DENSE_CAP):
    """All eigenvalues of the pencil ``G x = lambda E x``, sorted by (Im, Re)."""
    if sys.dim > cap:
        raise CapabilityError(
            f"dimension {sys.dim} exceeds the dense eigensolver cap {cap}; use a coarser mesh"
        )
    ev = sla.eigvals(sys.rhs.toarray(), sys.lhs.toarray())
    ev = ev[np.lexsort((ev.real, ev.imag))]
    return SpectrumReport(ev)


def _sigma_min(sys, omega):
    Aw = sys.whitened_generator
    shifted = -Aw.astype(complex)
    shifted[np.diag_indices_from(shifted)] += 1j * omega
    return float(sla.svdvals(shifted, check_finite=False)[-1])


def resolvent_norm(sys, omega):
    """``|(i omega - A_h)^{-1}|`` in the energy norm.

    Raises
    ------
    OnSpectrumError
        When ``i omega`` is numerically an eigenvalue; ``nearest`` carries it.
    """
    sigma = _sigma_min(sys, omega)
    scale = max(abs(omega), np.linalg.norm(sys.whitened_generator, 2), 1.0)
    if sigma <= 1e-13 * scale:
        ev = spectrum(sys).eigenvalues
        nearest = ev[np.argmin(np.abs(ev - 1j * omega))]
        raise OnSpectrumError(f"i*{omega:g} is (numerically) an eigenvalue; nearest {nearest:.6g}", nearest)
    return 1.0 / sigma


@dataclass(frozen=True)
class ResolventSweep:
    """Band-supremum resolvent norms on a logarithmic frequency grid.

    ``norms[k]`` is the supremum found in band ``k``, attained at
    ``peak_omegas[k]``; ``grid_norms[k]`` is the plain value at ``omegas[k]``
    (NaN when the grid point sits on an axis eigenvalue).
    """

    omegas: np.ndarray
    norms: np.ndarray
    grid_norms: np.ndarray
    peak_omegas: np.ndarray
    resonant: np.ndarray
    fit_range: tuple
    resolved_omega_max: float
    fitted_beta: float = math.nan
    residual: float = math.nan
    spikes: tuple = field(default=())

    @classmethod
    def from_arrays(cls, omegas, norms, fit_range=None):
        """Sweep built from given values (every point resonant, peaks at the grid)."""
        omegas = np.asarray(omegas, dtype=float)
        norms = np.asarray(norms, dtype=float)
        fr = fit_range or (float(omegas.min()), float(omegas.max()))
        sw = cls(omegas, norms, norms.copy(), omegas.copy(), np.ones(omegas.size, bool), fr, math.inf)
        return sw.with_fit()

    def with_fit(self):
        try:
            beta, resid = fit_resolvent_exponent(self)
        except FitError:
            beta, resid = math.nan, math.nan
        return replace(self, fitted_beta=beta, residual=resid)

    def fit_mask(self, omega_range=None):
        lo, hi = omega_range or self.fit_range
        return (
            self.resonant
            & np.isfinite(self.norms)
            & (self.norms > 0)
            & (self.omegas >= lo * (1 - 1e-12))
            & (self.omegas <= hi * (1 + 1e-12))
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for w, r, pw, g, res in zip(self.omegas, self.norms, self.peak_omegas, self.grid_norms, self.resonant):
                writer.writerow(
                    (f"{w:.17g}", f"{r:.17g}", f"{r / w**2:.17g}", f"{pw:.17g}", f"{g:.17g}", int(res))
                )

    @classmethod
    def from_csv(cls, path, fit_range, resolved_omega_max=math.inf):
        data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
        sw = cls(
            data[:, 0],
            data[:, 1],
            data[:, 4],
            data[:, 3],
            data[:, 5].astype(bool),
            tuple(fit_range),
            resolved_omega_max,
        )
        return sw.with_fit()


def log_grid(omega_lo, omega_hi, points):
    return np.logspace(math.log10(omega_lo), math.log10(omega_hi), points)


def default_points(omega_lo, omega_hi, per_decade=POINTS_PER_DECADE):
    """Grid size giving ``per_decade`` points per decade (at least 8)."""
    return max(8, int(math.ceil(per_decade * math.log10(omega_hi / omega_lo))) + 1)


def resolvent_sweep(sys, omega_lo, omega_hi, points=None, eigen=None, candidates=3):
    """Sweep the resolvent norm over ``[omega_lo, omega_hi]``.

    Parameters
    ----------
    sys : GeneratorSystem
    omega_lo, omega_hi : float
        Positive frequency bounds.
    points : int, optional
        Grid size; default is 16 points per decade.
    eigen : SpectrumReport, optional
        Precomputed spectrum, used to locate resonances.
    candidates : int
        Least-damped eigenvalues probed per band.

    Returns
    -------
    ResolventSweep
    """
    if not (0 < omega_lo < omega_hi):
        raise ConfigurationError("need 0 < omega_lo < omega_hi")
    if points is None:
        points = default_points(omega_lo, omega_hi)
    if points < 8:
        raise ConfigurationError("a sweep needs at least 8 points")
    resolved = sys.resolved_omega_max
    fit_hi = min(omega_hi, resolved)
    if fit_hi <= omega_lo:
        raise ConfigurationError(
            f"no resolved frequencies in [{omega_lo:g}, {omega_hi:g}]: the mesh resolves up to "
            f"{resolved:.4g}; refine the mesh or lower omega_lo"
        )
    eigen = eigen or spectrum(sys)
    ev = eigen.eigenvalues
    scale = max(eigen.spectral_radius, 1.0)
    on_axis = np.abs(ev.real) <= AXIS_GUARD * scale
    poles = np.sort(ev.imag[on_axis & (ev.imag > 0)])

    grid = log_grid(omega_lo, omega_hi, points)
    lg = np.log(grid)
    mids = np.exp(0.5 * (lg[1:] + lg[:-1]))
    # the outer bands are closed at the sweep ends
    lo_edges = np.concatenate(([omega_lo * (1 - 1e-12)], mids))
    hi_edges = np.concatenate((mids, [omega_hi * (1 + 1e-12)]))

    norms = np.empty(points)
    grid_norms = np.empty(points)
    peaks = np.empty(points)
    resonant = np.zeros(points, bool)
    spikes = []
    for k, w in enumerate(grid):
        in_band = ev[(ev.imag >= lo_edges[k]) & (ev.imag < hi_edges[k])]
        resonant[k] = in_band.size > 0
        band_poles = poles[(poles >= lo_edges[k]) & (poles < hi_edges[k])]
        if poles.size and np.min(np.abs(poles - w)) <= 1e-6 * max(w, 1.0):
            grid_norms[k] = math.nan
        else:
            grid_norms[k] = 1.0 / _sigma_min(sys, w)
        if band_poles.size:
            spikes.extend(float(p) for p in band_poles)
            norms[k], peaks[k] = math.inf, float(band_poles[0])
            continue
        best, where = grid_norms[k], w
        for lam in in_band[np.argsort(-in_band.real)][:candidates]:
            val = 1.0 / _sigma_min(sys, lam.imag)
            if not val <= best:
                best, where = val, float(lam.imag)
        norms[k], peaks[k] = best, where

    sweep = ResolventSweep(
        grid, norms, grid_norms, peaks, resonant, (float(omega_lo), float(fit_hi)), float(resolved),
        spikes=tuple(spikes),
    )
    return sweep.with_fit()


def fit_resolvent_exponent(sweep, omega_range=None):
    """Slope ``beta`` of ``log norm`` against ``log peak_omega`` over the fit range.

    Returns
    -------
    beta, residual : float
        Residual is the RMS misfit in natural-log units.
    """
    mask = sweep.fit_mask(omega_range)
    if mask.sum() < 8:
        raise FitError(f"only {int(mask.sum())} usable points in the fit range, need >= 8")
    x, y = np.log(sweep.peak_omegas[mask]), np.log(sweep.norms[mask])
    if np.ptp(x) == 0:
        raise FitError("degenerate frequency range")
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), resid


@dataclass(frozen=True)
class Certificate:
    value: float
    omega: float


def boundedness_certificate(sweep, beta=2.0, omega_range=None):
    """Largest ``omega**(-beta) * norm`` over the fit range and where it occurs."""
    mask = sweep.fit_mask(omega_range)
    if not mask.any():
        return Certificate(math.nan, math.nan)
    scaled = sweep.peak_omegas[mask] ** (-beta) * sweep.norms[mask]
    i = int(np.argmax(scaled))
    return Certificate(float(scaled[i]), float(sweep.peak_omegas[mask][i]))
