"""Piecewise-linear semidiscretisation of the damped Timoshenko generator.

The state vector stacks interior nodal values ``[w, phi, v, psi]``. The
semidiscrete system reads ``E dU/dt = G U`` with

    E = diag(M, M, rho1 M, rho2 M)
    G = [[0, I_M], [-K, -C]]     (I_M = diag(M, M))

where ``K`` is the elastic form on (w, phi) and ``C`` the Kelvin-Voigt form
on (v, psi). The gram matrix ``diag(K, rho1 M, rho2 M)`` realises the energy
norm, so ``Re <A_h U, U>_H = -p^T C p <= 0`` holds exactly.

Shear strains ``w' + phi`` are by default projected onto element constants
(the classic assumed-strain cure for shear locking). With exact integration
the interpolation error of ``w' + phi`` acts as spurious shear damping on
bending modes, and it dominates the physical damping at moderate frequencies.
Pass ``shear="consistent"`` to get exact integration instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

from .exceptions import ConfigurationError, InputError
from .model import BeamParameters, DampingConfiguration
from .quadrature import gauss_rule

SHEAR_MODES = ("projected", "consistent")
#: Gauss points per element (and per panel of the graded subrule).
GAUSS_ORDER = 4


@dataclass(frozen=True)
class Mesh:
    """Uniform partition of [-1, 1] with x = 0 as a node."""

    n_elements: int
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self):
        return 2.0 / self.n_elements

    @property
    def n_interior(self):
        return self.n_elements - 1

    @property
    def interior_nodes(self):
        return self.nodes[1:-1]

    @property
    def zero_index(self):
        """Index of x = 0 in ``nodes``."""
        return self.n_elements // 2

    def interior_index(self, node):
        """Degree-of-freedom index of mesh node ``node`` (1..n-1)."""
        if not 1 <= node <= self.n_elements - 1:
            raise IndexError(f"node {node} is a boundary node")
        return node - 1


def build_mesh(n_elements):
    """Uniform mesh of [-1, 1]; ``n_elements`` must be even and >= 4."""
    if int(n_elements) != n_elements or n_elements < 4 or n_elements % 2:
        raise ConfigurationError(
            f"n_elements must be an even integer >= 4 so that x=0 is a node, got {n_elements!r}"
        )
    n = int(n_elements)
    nodes = np.linspace(-1.0, 1.0, n + 1)
    nodes[n // 2] = 0.0
    nodes.setflags(write=False)
    return Mesh(n, nodes)


@dataclass(eq=False)
class DiscreteState:
    """Interior nodal coefficients of (w, phi, v, psi)."""

    w: np.ndarray
    phi: np.ndarray
    v: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        sizes = {len(self.w), len(self.phi), len(self.v), len(self.psi)}
        if len(sizes) != 1:
            raise InputError(f"field blocks must have equal length, got {sorted(sizes)}")

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec)
        if vec.ndim != 1 or vec.size % 4:
            raise InputError("state vector length must be a multiple of 4")
        return cls(*np.split(vec.copy(), 4))

    @classmethod
    def zeros(cls, n_interior, dtype=float):
        return cls(*(np.zeros(n_interior, dtype=dtype) for _ in range(4)))

    def as_vector(self):
        return np.concatenate((self.w, self.phi, self.v, self.psi))

    @property
    def size(self):
        return len(self.w)

    def __add__(self, other):
        return DiscreteState.from_vector(self.as_vector() + other.as_vector())

    def __sub__(self, other):
        return DiscreteState.from_vector(self.as_vector() - other.as_vector())

    def __mul__(self, c):
        return DiscreteState.from_vector(c * self.as_vector())

    __rmul__ = __mul__


@dataclass(frozen=True)
class GraphNormReport:
    h_norm: float
    a_image_norm: float

    @property
    def graph_norm(self):
        return self.h_norm + self.a_image_norm


@dataclass(frozen=True, eq=False)
class GeneratorSystem:
    """Assembled matrices of the semidiscrete generator ``A_h = E^{-1} G``.

    ``mesh``, ``params`` and ``damping`` are metadata; systems built by hand
    (tests, synthetic oracles) may leave them unset, in which case every
    frequency counts as resolved.
    """

    gram: sparse.csr_matrix
    lhs: sparse.csr_matrix
    rhs: sparse.csr_matrix
    damping_form: sparse.csr_matrix | None = None
    mesh: Mesh | None = None
    params: BeamParameters | None = None
    damping: DampingConfiguration | None = None
    shear: str = "projected"

    @property
    def dim(self):
        return self.gram.shape[0]

    @property
    def n_interior(self):
        return self.dim // 4

    @property
    def resolved_omega_max(self):
        """Largest frequency resolved with >= 4 nodes per wavelength."""
        if self.mesh is None or self.params is None:
            return np.inf
        return self.params.wave_speed * (self.mesh.n_elements / 4.0) * np.pi

    @cached_property
    def _lhs_lu(self):
        return splu(sparse.csc_matrix(self.lhs))

    def solve_lhs(self, b):
        """Solve ``E y = b`` for real or complex ``b``."""
        if np.iscomplexobj(b):
            return self._lhs_lu.solve(np.ascontiguousarray(b.real)) + 1j * self._lhs_lu.solve(
                np.ascontiguousarray(b.imag)
            )
        return self._lhs_lu.solve(np.asarray(b, dtype=float))

    @cached_property
    def dense_generator(self):
        """``A_h`` as a dense array."""
        return sla.solve(self.lhs.toarray(), self.rhs.toarray())

    @cached_property
    def gram_factor(self):
        """Lower Cholesky factor ``L`` with ``gram = L L^T``."""
        return np.linalg.cholesky(self.gram.toarray())

    @cached_property
    def whitened_generator(self):
        """``L^T A_h L^{-T}``: the generator in an orthonormal energy basis."""
        L = self.gram_factor
        left = L.T @ self.dense_generator
        return sla.solve_triangular(L, left.T, lower=True).T

    def dissipation(self, u):
        """``-p^* C p``, the discrete energy dissipation rate at state ``u``."""
        vec = _as_vector(u)
        if self.damping_form is None:
            return 0.0
        p = vec[2 * self.n_interior :]
        return -float(np.real(np.vdot(p, self.damping_form @ p)))


def _as_vector(u):
    return u.as_vector() if isinstance(u, DiscreteState) else np.asarray(u)


def _element_operators(mesh):
    """Per-element derivative ``B`` and mean ``P`` on interior dofs."""
    n, N, h = mesh.n_elements, mesh.n_interior, mesh.h
    rows, cols, dvals, mvals = [], [], [], []
    for e in range(n):
        for node, sign in ((e, -1.0), (e + 1, 1.0)):
            if 1 <= node <= n - 1:
                rows.append(e)
                cols.append(node - 1)
                dvals.append(sign / h)
                mvals.append(0.5)
    B = sparse.csr_matrix((dvals, (rows, cols)), shape=(n, N))
    P = sparse.csr_matrix((mvals, (rows, cols)), shape=(n, N))
    return B, P


def _point_operators(mesh, points_per_element):
    """Value and derivative of the P1 field at given points of each element.

    ``points_per_element`` is a list (one entry per element) of local
    coordinates in [0, 1]. Returns sparse ``V`` and ``D`` with one row per point.
    """
    n, N, h = mesh.n_elements, mesh.n_interior, mesh.h
    rows, cols, vvals, dvals = [], [], [], []
    r = 0
    for e, local in enumerate(points_per_element):
        for s in local:
            for node, shape, slope in ((e, 1.0 - s, -1.0 / h), (e + 1, s, 1.0 / h)):
                if 1 <= node <= n - 1:
                    rows.append(r)
                    cols.append(node - 1)
                    vvals.append(shape)
                    dvals.append(slope)
            r += 1
    V = sparse.csr_matrix((vvals, (rows, cols)), shape=(r, N))
    D = sparse.csr_matrix((dvals, (rows, cols)), shape=(r, N))
    return V, D


def _element_rule(a, b, graded):
    """Quadrature on [a, b]; graded 3-panel subrule when the element starts at 0."""
    h = b - a
    edges = [0.0, h / 16.0, h / 4.0, h] if graded else [0.0, h]
    nodes, weights = gauss_rule(np.asarray(edges), GAUSS_ORDER)
    return a + nodes, weights


def _damping_rules(mesh):
    """Local coordinates and weights of the quadrature on each element of (0, 1)."""
    out = []
    for e in range(mesh.n_elements):
        a, b = mesh.nodes[e], mesh.nodes[e + 1]
        if b <= 0.0:
            out.append((np.empty(0), np.empty(0)))
            continue
        x, wts = _element_rule(a, b, graded=(e == mesh.zero_index))
        out.append((x, wts))
    return out


def _element_integrals(profile, rules):
    """``int_e D dx`` per element (zero where the coefficient vanishes)."""
    if profile.is_vanishing:
        return np.zeros(len(rules))
    return np.array([np.sum(w * profile.a(x)) if x.size else 0.0 for x, w in rules])


def _projected_shear(mesh, weights):
    """``sum_e weights_e * gamma_e^2`` with element-mean strains ``gamma_e``."""
    B, P = _element_operators(mesh)
    S = sparse.hstack([B, P]).tocsr()
    return (S.T @ sparse.diags(weights) @ S).tocsr()


def _pointwise_shear(mesh, rules, coef=None):
    """``int c (w'+phi)^2`` by the per-element quadrature ``rules``."""
    local = [(x - mesh.nodes[e]) / mesh.h for e, (x, _) in enumerate(rules)]
    V, D = _point_operators(mesh, local)
    S = sparse.hstack([D, V]).tocsr()
    weights = np.concatenate([w * (coef(x) if coef is not None else 1.0) for x, w in rules])
    return (S.T @ sparse.diags(weights) @ S).tocsr()


def assemble_generator(mesh, params, damping, shear="projected", strict=True):
    """Assemble ``E``, ``G`` and the gram matrix of the semidiscrete system.

    Parameters
    ----------
    mesh : Mesh
    params : BeamParameters
    damping : DampingConfiguration
    shear : {"projected", "consistent"}
        Treatment of the shear strain ``w' + phi`` in both the elastic and the
        Kelvin-Voigt terms.
    strict : bool
        Validate the degeneracy hypothesis of every active profile. Disable for
        exploratory regimes (exponent >= 1).

    Returns
    -------
    GeneratorSystem
    """
    if shear not in SHEAR_MODES:
        raise ConfigurationError(f"shear must be one of {SHEAR_MODES}, got {shear!r}")
    if strict:
        for profile in damping.active:
            profile.validate()

    n, N, h = mesh.n_elements, mesh.n_interior, mesh.h
    B, _ = _element_operators(mesh)
    widths = np.full(n, h)
    plain = [_element_rule(mesh.nodes[e], mesh.nodes[e + 1], graded=False) for e in range(n)]

    V, _ = _point_operators(mesh, [(x - mesh.nodes[e]) / h for e, (x, _) in enumerate(plain)])
    M = (V.T @ sparse.diags(np.concatenate([w for _, w in plain])) @ V).tocsr()
    bending = (B.T @ sparse.diags(widths) @ B).tocsr()
    if shear == "projected":
        shear_elastic = _projected_shear(mesh, widths)
    else:
        shear_elastic = _pointwise_shear(mesh, plain)

    Z = sparse.csr_matrix((N, N))
    K = params.kappa1 * shear_elastic + sparse.bmat([[Z, Z], [Z, params.kappa2 * bending]])

    rules = _damping_rules(mesh)
    C = sparse.csr_matrix((2 * N, 2 * N))
    if not damping.d1.is_vanishing:
        if shear == "projected":
            C = C + _projected_shear(mesh, _element_integrals(damping.d1, rules))
        else:
            C = C + _pointwise_shear(mesh, rules, damping.d1.a)
    if not damping.d2.is_vanishing:
        C2 = B.T @ sparse.diags(_element_integrals(damping.d2, rules)) @ B
        C = C + sparse.bmat([[Z, Z], [Z, C2]])
    C = sparse.csr_matrix(C)
    C.eliminate_zeros()

    Mq = sparse.block_diag([M, M]).tocsr()
    Mp = sparse.block_diag([params.rho1 * M, params.rho2 * M]).tocsr()
    zero2 = sparse.csr_matrix((2 * N, 2 * N))
    lhs = sparse.block_diag([Mq, Mp]).tocsr()
    rhs = sparse.bmat([[zero2, Mq], [-K, -C]]).tocsr()
    gram = sparse.block_diag([K, Mp]).tocsr()
    return GeneratorSystem(gram, lhs, rhs, C if C.nnz else None, mesh, params, damping, shear)


def apply_generator(sys, u):
    """``A_h u``: the solution ``y`` of ``E y = G u``."""
    vec = _as_vector(u)
    if vec.shape != (sys.dim,):
        raise InputError(f"state has length {vec.shape}, system expects {sys.dim}")
    return DiscreteState.from_vector(sys.solve_lhs(sys.rhs @ vec))


def h_norm(sys, u):
    """Energy norm ``sqrt(u^* gram u)``; the discrete energy is half its square."""
    vec = _as_vector(u)
    return float(np.sqrt(max(np.real(np.vdot(vec, sys.gram @ vec)), 0.0)))


def graph_norm(sys, u):
    """Graph norm ``|u|_H + |A_h u|_H`` of the generator."""
    return GraphNormReport(h_norm(sys, u), h_norm(sys, apply_generator(sys, u)))


def interpolate(mesh, state, tol=1e-10):
    """Nodal interpolant of a continuous state at the interior nodes."""
    defect = state.boundary_defect()
    if defect > tol:
        raise InputError(f"state violates the clamped boundary conditions by {defect:.3e}")
    x = mesh.interior_nodes
    fields = [np.asarray(f(x)) * np.ones_like(x) for f in (state.w, state.phi, state.v, state.psi)]
    return DiscreteState(*fields)


def export_triplets(matrix, path):
    """Write a sparse matrix as ``row col value`` lines."""
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}\n")
