"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from dcflow import ConformalState, Geometry, WeightConfig, generate

MESH_KINDS = [
    ("tetrahedron", ()),
    ("octahedron", ()),
    ("icosahedron", ()),
    ("torus_grid", (3, 3)),
    ("genus2", ()),
]


def make_setup(kind, dims=(), epsilon=1, eta=1.0, geometry=Geometry.EUCLIDEAN):
    """Surface + uniform weights + base state for one mesh kind."""
    surface = generate(kind, *dims)
    weights = WeightConfig.uniform(surface, epsilon, eta)
    if geometry is Geometry.EUCLIDEAN:
        state = ConformalState(geometry, weights.epsilon, np.zeros(surface.vertex_count))
    else:
        state = ConformalState.from_f(geometry, weights.epsilon, np.zeros(surface.vertex_count))
    return surface, weights, state


def random_admissible_state(surface, weights, geometry, rng, scale=0.2, max_tries=200):
    """Random state near the base with every face strictly nondegenerate."""
    from dcflow import curvature

    n = surface.vertex_count
    for _ in range(max_tries):
        u = rng.normal(0.0, scale, size=n)
        if geometry is Geometry.HYPERBOLIC:
            base = ConformalState.from_f(geometry, weights.epsilon, np.zeros(n))
            u = base.u + u
            if np.any((weights.epsilon == 1) & (u >= 0.0)):
                continue
        state = ConformalState(geometry, weights.epsilon, u)
        report = curvature(surface, weights, state, extended=True)
        if not np.any(report.degenerate_corner >= 0):
            return state
    raise RuntimeError("could not sample an admissible state")
