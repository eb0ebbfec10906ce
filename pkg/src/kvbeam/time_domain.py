"""Implicit-midpoint integration, energy bookkeeping and decay-rate fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

from .discretization import DiscreteState, GeneratorSystem, _as_vector, graph_norm, h_norm
from .exceptions import ConfigurationError, FitError, InstabilityError

#: Above this dimension the sample propagator is not formed densely.
DENSE_PROPAGATOR_CAP = 4000
#: Points per decade kept by logarithmic thinning.
THIN_PER_DECADE = 20
TRAJECTORY_COLUMNS = ("t", "h_norm", "energy", "dissipation", "normalized_bound")


class Stepper:
    """Implicit midpoint map ``(E - dt/2 G) u+ = (E + dt/2 G) u`` for one ``(sys, dt)``."""

    def __init__(self, sys, dt):
        if not dt > 0:
            raise ConfigurationError(f"dt must be positive, got {dt!r}")
        self.sys = sys
        self.dt = dt
        half = 0.5 * dt * sys.rhs
        self._explicit = (sys.lhs + half).tocsr()
        self._lu = splu(sparse.csc_matrix(sys.lhs - half))

    def _solve(self, b):
        if np.iscomplexobj(b):
            return self._lu.solve(np.ascontiguousarray(b.real)) + 1j * self._lu.solve(
                np.ascontiguousarray(b.imag)
            )
        return self._lu.solve(b)

    def __call__(self, vec):
        return self._solve(self._explicit @ vec)

    def propagator(self, steps):
        """Dense matrix of ``steps`` consecutive midpoint steps."""
        one = self._lu.solve(self._explicit.toarray())
        return np.linalg.matrix_power(one, steps)


@lru_cache(maxsize=8)
def _stepper(sys, dt):
    return Stepper(sys, dt)


def step(sys, u, dt):
    """Advance ``u`` by one implicit midpoint step of size ``dt``."""
    return DiscreteState.from_vector(_stepper(sys, float(dt))(_as_vector(u)))


@dataclass(frozen=True)
class Trajectory:
    """Sampled energy history of one run."""

    times: np.ndarray
    h_norms: np.ndarray
    energies: np.ndarray
    dissipation: np.ndarray
    initial_graph_norm: float

    @property
    def normalized_bound(self):
        """``h_norm * sqrt(t) / |U0|_D(A)`` (zero where the norm is zero)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            out = self.h_norms * np.sqrt(self.times) / self.initial_graph_norm
        return np.where(self.h_norms > 0, out, 0.0)

    def to_csv(self, path):
        rows = zip(self.times, self.h_norms, self.energies, self.dissipation, self.normalized_bound)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)
            for row in rows:
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, initial_graph_norm=None):
        """Read a trajectory; the graph norm is recovered from the bound column if omitted."""
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        t, hn, nb = data["t"], data["h_norm"], data["normalized_bound"]
        if initial_graph_norm is None:
            ok = nb > 0
            initial_graph_norm = float(hn[ok][0] * math.sqrt(t[ok][0]) / nb[ok][0]) if ok.any() else 0.0
        return cls(t, hn, data["energy"], data["dissipation"], initial_graph_norm)


def simulate(sys, u0, t_end, dt, sample_every=1):
    """Integrate ``E dU/dt = G U`` from ``u0`` and record every ``sample_every`` steps.

    The number of steps is ``round(t_end / dt)``; the last sample lands on the
    largest multiple of ``sample_every`` not exceeding it.
    """
    if not (t_end > 0 and dt > 0):
        raise ConfigurationError("t_end and dt must be positive")
    if int(sample_every) != sample_every or sample_every < 1:
        raise ConfigurationError(f"sample_every must be a positive integer, got {sample_every!r}")
    sample_every = int(sample_every)
    n_steps = int(round(t_end / dt))
    n_samples = n_steps // sample_every
    stepper = _stepper(sys, float(dt))

    u = _as_vector(u0).astype(np.result_type(_as_vector(u0), float))
    if sys.dim <= DENSE_PROPAGATOR_CAP:
        P = stepper.propagator(sample_every)

        def advance(vec):
            return P @ vec

    else:

        def advance(vec):
            for _ in range(sample_every):
                vec = stepper(vec)
            return vec

    times = dt * sample_every * np.arange(n_samples + 1)
    norms = np.empty(n_samples + 1)
    diss = np.empty(n_samples + 1)
    norms[0], diss[0] = h_norm(sys, u), sys.dissipation(u)
    for k in range(1, n_samples + 1):
        u = advance(u)
        norms[k] = h_norm(sys, u)
        diss[k] = sys.dissipation(u)
        if not (np.isfinite(norms[k]) and np.isfinite(diss[k])):
            raise InstabilityError(f"non-finite state at t={times[k]:.6g}")
    return Trajectory(times, norms, 0.5 * norms**2, diss, graph_norm(sys, u0).graph_norm)


def dissipation_identity_residual(traj):
    """Energy-balance defect per sample interval.

    ``r_k = (E_{k+1} - E_k)/(t_{k+1} - t_k) - (d_k + d_{k+1})/2``

    Returns
    -------
    residuals : ndarray
    max_abs : float
    """
    if len(traj.times) < 2:
        raise FitError("need at least two samples")
    rate = np.diff(traj.energies) / np.diff(traj.times)
    res = rate - 0.5 * (traj.dissipation[1:] + traj.dissipation[:-1])
    return res, float(np.max(np.abs(res)))


@dataclass(frozen=True)
class DecayFit:
    """``h_norm(t) ~ constant * |U0|_D(A) * t**(-exponent)`` over ``window``."""

    exponent: float
    constant: float
    window: tuple
    residual: float
    n_points: int
    bound_ratio: float = math.nan


def log_thin(times, per_decade=THIN_PER_DECADE):
    """Indices of positive ``times`` closest to a logarithmic grid (sorted, unique)."""
    times = np.asarray(times)
    pos = np.flatnonzero(times > 0)
    if pos.size == 0:
        return pos
    lt = np.log10(times[pos])
    count = max(int(np.ceil((lt[-1] - lt[0]) * per_decade)) + 1, 2)
    targets = np.linspace(lt[0], lt[-1], count)
    idx = np.searchsorted(lt, targets).clip(0, lt.size - 1)
    left = (idx - 1).clip(0)
    closer = np.abs(lt[left] - targets) < np.abs(lt[idx] - targets)
    idx = np.where(closer, left, idx)
    return pos[np.unique(idx)]


def fit_decay_exponent(traj, window, thin=True, per_decade=THIN_PER_DECADE):
    """Least-squares power law ``log h = log C - p log t`` on ``window``.

    Raises
    ------
    FitError
        If the window holds fewer than 10 samples or a non-positive norm.
    """
    t_lo, t_hi = window
    if not (t_lo > 0 and t_hi > t_lo):
        raise FitError(f"invalid window {window!r}")
    inside = np.flatnonzero((traj.times >= t_lo) & (traj.times <= t_hi))
    if inside.size < 10:
        raise FitError(f"window {window!r} holds {inside.size} samples, need >= 10")
    if np.any(traj.h_norms[inside] <= 0):
        raise FitError("non-positive norms inside the fit window")
    if thin:
        inside = inside[log_thin(traj.times[inside], per_decade)]
    lt, lh = np.log(traj.times[inside]), np.log(traj.h_norms[inside])
    slope, intercept = np.polyfit(lt, lh, 1)
    resid = float(np.sqrt(np.mean((lh - (slope * lt + intercept)) ** 2)))
    g = traj.initial_graph_norm
    constant = math.exp(intercept) / g if g > 0 else math.exp(intercept)
    nb = traj.normalized_bound[inside]
    ratio = float(nb.max() / nb.min()) if np.all(nb > 0) else math.inf
    return DecayFit(float(-slope), constant, (float(t_lo), float(t_hi)), resid, int(inside.size), ratio)


def local_slopes(times, norms, half_width=0.25):
    """Decay slope ``-d log h / d log t`` fitted over +-``half_width`` decades."""
    lt, lh = np.log10(times), np.log10(norms)
    out = np.empty_like(lt)
    for i, c in enumerate(lt):
        sel = np.abs(lt - c) <= half_width
        if sel.sum() < 3:
            out[i] = np.nan
            continue
        out[i] = -np.polyfit(lt[sel], lh[sel], 1)[0]
    return out


def default_window(traj, wave_speed, steepening=0.25, floor_time=None):
    """Fit window after the transient and before late steepening.

    ``t_lo = 5 * (2 / wave_speed)``: five crossings of the beam. ``t_hi`` is
    the start of the trailing run of samples whose local slope exceeds the
    window median by more than ``steepening``, capped at ``floor_time`` (the
    time scale ``1/|spectral abscissa|`` of the discrete exponential floor)
    when given. Returns ``None`` when nothing usable is left.
    """
    t_lo = 5.0 * 2.0 / wave_speed
    t_end = traj.times[-1]
    if floor_time is not None and np.isfinite(floor_time):
        t_end = min(t_end, floor_time)
    inside = np.flatnonzero((traj.times >= t_lo) & (traj.times <= t_end) & (traj.h_norms > 0))
    if inside.size < 10:
        return None
    idx = inside[log_thin(traj.times[inside])]
    t, s = traj.times[idx], local_slopes(traj.times[idx], traj.h_norms[idx])
    median = np.nanmedian(s)
    steep = s > (1.0 + steepening) * median
    t_hi = t_end
    j = len(s)
    while j > 0 and steep[j - 1]:
        j -= 1
    if j < len(s):
        t_hi = t[j] if j > 0 else t_lo
    if np.count_nonzero((traj.times >= t_lo) & (traj.times <= t_hi)) < 10:
        return None
    return (t_lo, float(t_hi))
