"""Continuous Timoshenko beam with one-sided Kelvin-Voigt damping.

The beam occupies (-1, 1) with clamped ends. Damping coefficients are zero on
[-1, 0] and equal a positive profile ``a`` on (0, 1] whose degeneracy index

    alpha = sup_{0 < x <= 1} x |a'(x)| / a(x)

must lie in [0, 1).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .exceptions import AccuracyError, DivergenceError, DomainError, HypothesisViolation
from .quadrature import graded_rule

#: Relative slack used by the strict hypothesis inequalities.
HYPOTHESIS_SLACK = 1e-12
#: Default relative tolerance of model-level quadratures.
QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class BeamParameters:
    """Mass density, rotational inertia, shear and bending stiffness."""

    rho1: float = 1.0
    rho2: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0

    def __post_init__(self):
        for name in ("rho1", "rho2", "kappa1", "kappa2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def shear_speed(self):
        return math.sqrt(self.kappa1 / self.rho1)

    @property
    def bending_speed(self):
        return math.sqrt(self.kappa2 / self.rho2)

    @property
    def wave_speed(self):
        """Fastest of the two characteristic speeds."""
        return max(self.shear_speed, self.bending_speed)


class Side(str, enum.Enum):
    """Which stress the Kelvin-Voigt term acts on."""

    SHEAR = "shear"  # D1, on w' + phi
    BENDING = "bending"  # D2, on phi'


class Form(str, enum.Enum):
    VANISHING = "vanishing"
    POWER_LAW = "power_law"
    CUSTOM = "custom"


class DegeneracyIndex(NamedTuple):
    alpha: float
    valid: bool


class HardyCheck(NamedTuple):
    integral: float
    bound: float
    holds: bool


@dataclass(frozen=True)
class DampingProfile:
    """Damping coefficient supported on (0, 1].

    Build instances with :meth:`vanishing`, :meth:`power_law` or
    :meth:`custom`; these validate the hypotheses unless ``validate=False``
    (used for exploratory runs outside the theory, e.g. exponent >= 1).
    """

    which: Side
    form: Form
    scale: float = 0.0
    exponent: float = 0.0
    func: Callable | None = field(default=None, compare=False)
    deriv: Callable | None = field(default=None, compare=False)

    @classmethod
    def vanishing(cls, which):
        return cls(Side(which), Form.VANISHING)

    @classmethod
    def power_law(cls, which, scale=1.0, exponent=0.5, validate=True):
        """``a(x) = scale * x**exponent`` on (0, 1]."""
        if not (math.isfinite(scale) and scale > 0.0):
            raise HypothesisViolation(f"power-law scale must be positive, got {scale!r}")
        if not (math.isfinite(exponent) and exponent >= 0.0):
            raise HypothesisViolation(f"power-law exponent must be >= 0, got {exponent!r}")
        profile = cls(Side(which), Form.POWER_LAW, float(scale), float(exponent))
        if validate:
            profile.validate()
        return profile

    @classmethod
    def custom(cls, which, func, deriv, validate=True):
        """Arbitrary ``a`` with its derivative ``a'`` (both vectorised)."""
        if func is None or deriv is None:
            raise ValueError("custom profiles need both a(x) and a'(x)")
        profile = cls(Side(which), Form.CUSTOM, func=func, deriv=deriv)
        if validate:
            profile.validate()
        return profile

    @property
    def is_vanishing(self):
        return self.form is Form.VANISHING

    def a(self, x):
        """Coefficient on (0, 1]; no support check."""
        x = np.asarray(x, dtype=float)
        if self.form is Form.POWER_LAW:
            return self.scale * x**self.exponent
        if self.form is Form.CUSTOM:
            return np.asarray(self.func(x), dtype=float) * np.ones_like(x)
        return np.zeros_like(x)

    def da(self, x):
        x = np.asarray(x, dtype=float)
        if self.form is Form.POWER_LAW:
            if self.exponent == 0.0:
                return np.zeros_like(x)
            return self.scale * self.exponent * x ** (self.exponent - 1.0)
        if self.form is Form.CUSTOM:
            return np.asarray(self.deriv(x), dtype=float) * np.ones_like(x)
        return np.zeros_like(x)

    def __call__(self, x):
        return evaluate_damping(self, x)

    @property
    def alpha(self):
        if self.is_vanishing:
            return 0.0
        return degeneracy_exponent(self).alpha

    def validate(self):
        """Raise :class:`HypothesisViolation` unless alpha < 1."""
        if self.is_vanishing:
            return
        index = degeneracy_exponent(self)
        if not index.valid:
            raise HypothesisViolation(
                f"degeneracy index {index.alpha:.6g} is not < 1 for {self.which.value} damping"
            )


def geometric_samples(ratio=0.9, cutoff=1e-10, linear=1001):
    """Sample points of (0, 1] used by the degeneracy estimate.

    A geometric sequence ``ratio**k`` reaching below ``cutoff`` is merged
    with a uniform grid so interior extrema are not skipped.
    """
    levels = int(np.ceil(np.log(cutoff) / np.log(ratio)))
    geo = ratio ** np.arange(levels + 1, dtype=float)
    lin = np.linspace(0.0, 1.0, linear)[1:]
    return np.unique(np.concatenate((geo, lin)))


def degeneracy_exponent(profile, ratio=0.9, cutoff=1e-10):
    """Degeneracy index ``alpha = sup x|a'|/a`` of a non-vanishing profile.

    Power laws return their exponent exactly. Custom profiles are sampled on
    :func:`geometric_samples`.

    Raises
    ------
    HypothesisViolation
        If ``a`` is not strictly positive at some sample.
    DivergenceError
        If the ratio is not finite at some sample.
    """
    if profile.is_vanishing:
        raise ValueError("the degeneracy index is undefined for a vanishing profile")
    if profile.form is Form.POWER_LAW:
        alpha = profile.exponent
    else:
        x = geometric_samples(ratio, cutoff)
        a = profile.a(x)
        if not np.all(a > 0.0):
            bad = x[~(a > 0.0)][0]
            raise HypothesisViolation(f"a(x) is not positive at x={bad:.3e}")
        with np.errstate(all="ignore"):
            q = x * np.abs(profile.da(x)) / a
        if not np.all(np.isfinite(q)):
            bad = x[~np.isfinite(q)][0]
            raise DivergenceError(f"x|a'(x)|/a(x) is unbounded near x={bad:.3e}")
        alpha = float(q.max())
    return DegeneracyIndex(alpha, alpha < 1.0 - HYPOTHESIS_SLACK)


def evaluate_damping(profile, x):
    """Coefficient value at ``x`` in [-1, 1]: zero on [-1, 0], ``a`` beyond."""
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0) or np.any(np.isnan(xa)):
        raise DomainError("damping coefficients are defined on [-1, 1] only")
    pos = xa > 0.0
    out = np.zeros_like(xa)
    if np.any(pos):
        out[pos] = profile.a(xa[pos])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DampingConfiguration:
    """The shear (D1) and bending (D2) coefficients together."""

    d1: DampingProfile = DampingProfile.vanishing(Side.SHEAR)
    d2: DampingProfile = DampingProfile.vanishing(Side.BENDING)

    def __post_init__(self):
        if self.d1.which is not Side.SHEAR or self.d2.which is not Side.BENDING:
            raise ValueError("d1 must act on shear and d2 on bending")

    @classmethod
    def single(cls, side, scale=1.0, exponent=0.5, validate=True):
        """Exactly one power-law damping active, on ``side``."""
        side = Side(side)
        profile = DampingProfile.power_law(side, scale, exponent, validate=validate)
        return cls(d1=profile) if side is Side.SHEAR else cls(d2=profile)

    @property
    def active(self):
        return tuple(p for p in (self.d1, self.d2) if not p.is_vanishing)

    @property
    def is_conservative(self):
        return not self.active

    @property
    def single_damping(self):
        """True when exactly one damping is active and alpha < 1."""
        return len(self.active) == 1 and all(p.alpha < 1.0 for p in self.active)


@dataclass(frozen=True)
class ContinuousState:
    """Fields (w, phi, v, psi) and their spatial derivatives as callables."""

    w: Callable
    dw: Callable
    phi: Callable
    dphi: Callable
    v: Callable
    dv: Callable
    psi: Callable
    dpsi: Callable

    @classmethod
    def zero(cls):
        z = _zero
        return cls(z, z, z, z, z, z, z, z)

    def scaled(self, c):
        def s(f):
            return lambda x: c * f(x)

        return ContinuousState(*(s(getattr(self, k)) for k in _STATE_KEYS))

    def boundary_defect(self):
        """Largest |w|, |phi| at the clamped ends (and |v|, |psi| there)."""
        ends = np.array([-1.0, 1.0])
        vals = [np.abs(np.asarray(f(ends), dtype=complex)) for f in (self.w, self.phi, self.v, self.psi)]
        return float(max(np.max(v) for v in vals))


_STATE_KEYS = ("w", "dw", "phi", "dphi", "v", "dv", "psi", "dpsi")


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _quad(f, a, b, rtol, label):
    val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=400)
    if not np.isfinite(val) or err > max(rtol * abs(val), 1e-14):
        raise AccuracyError(f"{label}: quadrature error {err:.2e} exceeds tolerance", estimate=val)
    return val


def energy(state, params, rtol=QUAD_RTOL):
    """Total energy ``(1/2) int kappa1|w'+phi|^2 + kappa2|phi'|^2 + rho1|v|^2 + rho2|psi|^2``."""

    def density(x):
        return (
            params.kappa1 * abs(state.dw(x) + state.phi(x)) ** 2
            + params.kappa2 * abs(state.dphi(x)) ** 2
            + params.rho1 * abs(state.v(x)) ** 2
            + params.rho2 * abs(state.psi(x)) ** 2
        )

    total = _quad(density, -1.0, 0.0, rtol, "energy") + _quad(density, 0.0, 1.0, rtol, "energy")
    return 0.5 * total


def dissipation_rate(state, damping, rtol=QUAD_RTOL):
    """Energy dissipation ``-int D1|v'+psi|^2 + D2|psi'|^2`` (always <= 0)."""
    if damping.is_conservative:
        return 0.0
    d1, d2 = damping.d1, damping.d2

    def density(x):
        out = 0.0
        if not d1.is_vanishing:
            out += float(d1.a(x)) * abs(state.dv(x) + state.psi(x)) ** 2
        if not d2.is_vanishing:
            out += float(d2.a(x)) * abs(state.dpsi(x)) ** 2
        return out

    # H1: both coefficients vanish on [-1, 0].
    return -_quad(density, 0.0, 1.0, rtol, "dissipation")


def hardy_bound_check(profile, ratio=0.25, order=12):
    """Compare ``I = int_0^1 t/a(t) dt`` with ``B = 1/(a(1) (2 - alpha))``.

    The bound follows from ``a(x) >= a(1) x**alpha``; pure power laws attain it.
    """
    if profile.is_vanishing:
        raise ValueError("the Hardy check needs a non-vanishing profile")
    index = degeneracy_exponent(profile)
    if not index.valid:
        raise HypothesisViolation(
            f"int t/a(t) dt may diverge: degeneracy index {index.alpha:.6g} is not < 1"
        )
    nodes, weights = graded_rule(0.0, 1.0, ratio=ratio, order=order)
    integral = float(np.sum(weights * nodes / profile.a(nodes)))
    if not np.isfinite(integral):
        raise DivergenceError("int t/a(t) dt is not finite")
    a1 = float(profile.a(1.0))
    bound = 1.0 / (a1 * (2.0 - index.alpha))
    return HardyCheck(integral, bound, integral <= bound * (1.0 + HYPOTHESIS_SLACK))
