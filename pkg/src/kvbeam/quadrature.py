"""Gauss-Legendre rules, including geometrically graded ones for integrands
with an algebraic singularity at the left end point."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _leggauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_rule(edges, order=4):
    """Composite Gauss-Legendre rule on consecutive panels.

    Parameters
    ----------
    edges : sequence of float
        Increasing panel end points.
    order : int
        Points per panel.

    Returns
    -------
    nodes, weights : ndarray
    """
    edges = np.asarray(edges, dtype=float)
    g, w = _leggauss(order)
    left, right = edges[:-1, None], edges[1:, None]
    half = 0.5 * (right - left)
    nodes = (0.5 * (left + right) + half * g).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def graded_edges(a, b, ratio=0.25, tiny=1e-14):
    """Panel edges on [a, b] refined geometrically toward ``a``.

    The panels are ``[a + L r^{k+1}, a + L r^k]`` with ``L = b - a`` until the
    innermost width falls below ``tiny * L``; one last panel closes the gap.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    length = b - a
    levels = int(np.ceil(np.log(tiny) / np.log(ratio)))
    offsets = ratio ** np.arange(levels, -1, -1, dtype=float)
    return np.concatenate(([a], a + length * offsets))


def graded_rule(a, b, ratio=0.25, tiny=1e-14, order=12):
    """Graded composite Gauss rule on [a, b], refined toward ``a``."""
    return gauss_rule(graded_edges(a, b, ratio, tiny), order)
