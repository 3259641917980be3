"""Metric layer: factors, edge lengths, inner angles, curvature.

Every vertex carries a conformal exponent f_i.  Euclidean edges get

    l_ij = sqrt(eps_i e^{2 f_i} + eps_j e^{2 f_j} + 2 eta_ij e^{f_i + f_j})

and hyperbolic edges get

    cosh l_ij = C_i C_j + eta_ij S_i S_j,   S_i = e^{f_i},  C_i = sqrt(1 + eps_i S_i^2).

Flows act on a second coordinate u_i: equal to f_i except at hyperbolic
vertices with eps_i = 1, where u_i = -asinh(e^{-f_i}) ranges over the
negative reals.  Hyperbolic evaluation always goes through (S_i, C_i)
computed from f; u is converted first.

A triangle is degenerate when one edge is at least as long as the other
two combined (equality included).  Angles extend continuously across
that wall: the angle at the offending corner becomes pi, the other two
become zero, and every derived quantity (curvature, areas) accepts the
extended values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    BadParameterError,
    DegenerateFaceError,
    DegenerateTriangleError,
    DomainError,
    NumericalDomainError,
    OverflowRangeError,
)
from .surface import TriangulatedSurface, WeightConfig

__all__ = [
    "Geometry",
    "ConformalState",
    "DegeneracyClass",
    "MetricReport",
    "base_state",
    "classify_triangle",
    "coshl_bounds",
    "curvature",
    "edge_length",
    "edge_lengths",
    "extended_triangle_angles",
    "f_to_u",
    "gauss_bonnet_residual",
    "triangle_angles",
    "u_to_f",
    "wall_reachability",
]

# |f| beyond this cannot be exponentiated in double precision.
F_CAP = 700.0

# arccos/arccosh arguments may leave their domain by at most this much
# before we treat it as a real error rather than roundoff.
_TRIG_SLACK = 1e-12


class Geometry(enum.Enum):
    """Background geometry of the triangles."""

    EUCLIDEAN = "euclidean"
    HYPERBOLIC = "hyperbolic"

    @property
    def background_curvature(self) -> float:
        return 0.0 if self is Geometry.EUCLIDEAN else -1.0


def _check_f_range(f: np.ndarray) -> None:
    if np.any(np.abs(f) > F_CAP) or not np.all(np.isfinite(f)):
        raise OverflowRangeError(f"conformal exponent exceeds |f| <= {F_CAP}")


def _logsinh(x: np.ndarray) -> np.ndarray:
    # log(sinh(x)) for x > 0 without overflow.
    return x - np.log(2.0) + np.log1p(-np.exp(-2.0 * x))


def u_to_f(geometry: Geometry, epsilon, u):
    """Convert flow coordinates to conformal exponents.

    Hyperbolic vertices with eps = 1 require u < 0; there
    f = -log(sinh(-u)).  Everywhere else f = u.
    """
    u = np.asarray(u, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.int64)
    if geometry is Geometry.EUCLIDEAN:
        _check_f_range(u)
        return u.copy()
    f = u.astype(np.float64).copy()
    mask = (epsilon == 1) if epsilon.shape else np.full(u.shape, bool(epsilon == 1))
    mask = np.broadcast_to(mask, u.shape)
    if np.any(mask & ~(u < 0.0)):
        raise DomainError("hyperbolic eps=1 coordinates must satisfy u < 0")
    if np.any(mask):
        with np.errstate(divide="ignore"):
            f[mask] = -_logsinh(-u[mask])
    _check_f_range(f)
    return f if f.shape else float(f)


def f_to_u(geometry: Geometry, epsilon, f):
    """Inverse of u_to_f: u = -asinh(e^{-f}) at hyperbolic eps=1 vertices."""
    f = np.asarray(f, dtype=np.float64)
    _check_f_range(f)
    epsilon = np.asarray(epsilon, dtype=np.int64)
    if geometry is Geometry.EUCLIDEAN:
        return f.copy()
    u = f.astype(np.float64).copy()
    mask = (epsilon == 1) if epsilon.shape else np.full(f.shape, bool(epsilon == 1))
    mask = np.broadcast_to(mask, f.shape)
    if np.any(mask):
        u[mask] = -np.arcsinh(np.exp(-f[mask]))
    return u if u.shape else float(u)


@dataclass(frozen=True)
class ConformalState:
    """Flow coordinates u for every vertex, with derived exponents cached.

    The epsilon array travels with the state because the u <-> f
    conversion depends on it vertex by vertex.
    """

    geometry: Geometry
    epsilon: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=np.int64)
        u = np.asarray(self.u, dtype=np.float64)
        if eps.shape != u.shape:
            raise BadParameterError("epsilon and u must have matching shapes")
        if not np.all(np.isfinite(u)):
            raise BadParameterError("u contains non-finite values")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "u", u)
        # Raises DomainError / OverflowRangeError for out-of-range coordinates.
        object.__setattr__(self, "_f", u_to_f(self.geometry, eps, u))

    @property
    def f(self) -> np.ndarray:
        return self._f

    @cached_property
    def scale(self) -> np.ndarray:
        """S_i = e^{f_i} (hyperbolic helper; harmless for Euclidean)."""
        return np.exp(self._f)

    @cached_property
    def coscale(self) -> np.ndarray:
        """C_i = sqrt(1 + eps_i e^{2 f_i}); C = 1 wherever eps = 0."""
        s = self.scale
        c = np.ones_like(s)
        mask = self.epsilon == 1
        c[mask] = np.hypot(1.0, s[mask])
        return c

    @classmethod
    def from_f(cls, geometry: Geometry, epsilon, f) -> "ConformalState":
        return cls(geometry, epsilon, f_to_u(geometry, np.asarray(epsilon), f))

    def with_u(self, u) -> "ConformalState":
        return ConformalState(self.geometry, self.epsilon, u)


def base_state(geometry: Geometry, epsilon) -> ConformalState:
    """Reference state: u = 0 for Euclidean, f = 0 for hyperbolic."""
    epsilon = np.asarray(epsilon, dtype=np.int64)
    if geometry is Geometry.EUCLIDEAN:
        return ConformalState(geometry, epsilon, np.zeros(epsilon.shape))
    return ConformalState.from_f(geometry, epsilon, np.zeros(epsilon.shape))


# ---------------------------------------------------------------------------
# lengths


def edge_length(geometry: Geometry, eps_i, eps_j, eta, f_i, f_j):
    """Length of one edge from the exponents at its ends.  Broadcasts."""
    eps_i = np.asarray(eps_i, dtype=np.float64)
    eps_j = np.asarray(eps_j, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    _check_f_range(f_i)
    _check_f_range(f_j)
    if geometry is Geometry.EUCLIDEAN:
        with np.errstate(over="ignore", invalid="ignore"):
            rad = (
                eps_i * np.exp(2.0 * f_i)
                + eps_j * np.exp(2.0 * f_j)
                + 2.0 * eta * np.exp(f_i + f_j)
            )
        if np.any(~np.isfinite(rad)):
            raise OverflowRangeError("euclidean length overflow")
        if np.any(rad <= 0.0):
            raise NumericalDomainError(
                "non-positive squared length; weight conditions violated"
            )
        out = np.sqrt(rad)
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            s_i, s_j = np.exp(f_i), np.exp(f_j)
            c_i = np.where(eps_i == 1.0, np.hypot(1.0, s_i), 1.0)
            c_j = np.where(eps_j == 1.0, np.hypot(1.0, s_j), 1.0)
            ch = c_i * c_j + eta * s_i * s_j
        if np.any(~np.isfinite(ch)):
            raise OverflowRangeError("hyperbolic length overflow")
        if np.any(ch <= 1.0):
            raise NumericalDomainError(
                "cosh(length) <= 1; weight conditions violated"
            )
        out = np.arccosh(ch)
    return out if out.shape else float(out)


def edge_lengths(
    surface: TriangulatedSurface, weights: WeightConfig, state: ConformalState
) -> np.ndarray:
    """Lengths of all edges in canonical edge order."""
    i, j = surface.edges[:, 0], surface.edges[:, 1]
    f = state.f
    return edge_length(
        state.geometry,
        weights.epsilon[i],
        weights.epsilon[j],
        weights.eta,
        f[i],
        f[j],
    )


# ---------------------------------------------------------------------------
# angles and degeneracy


@dataclass(frozen=True)
class DegeneracyClass:
    """Which corner, if any, a triangle is degenerate at.

    ``corner`` is 0, 1 or 2 in the (i, j, k) order of the triangle ops,
    or None for a nondegenerate triangle.
    """

    corner: int | None = None

    @property
    def is_degenerate(self) -> bool:
        return self.corner is not None


def _opposite_margins(a: np.ndarray) -> np.ndarray:
    # a[..., c] is the length opposite corner c; margin at c is the slack
    # in the triangle inequality whose long side faces c.
    m = np.empty_like(a)
    for c in range(3):
        m[..., c] = a[..., (c + 1) % 3] + a[..., (c + 2) % 3] - a[..., c]
    return m


def _degenerate_corners(a: np.ndarray) -> np.ndarray:
    # At most one margin can be non-positive at a time.
    m = _opposite_margins(a)
    worst = np.argmin(m, axis=-1)
    value = np.take_along_axis(m, worst[..., None], axis=-1)[..., 0]
    return np.where(value <= 0.0, worst, -1)


def _checked_arccos(x: np.ndarray) -> np.ndarray:
    over = np.abs(x) - 1.0
    if np.any(over > _TRIG_SLACK):
        raise NumericalDomainError("angle cosine left [-1, 1] beyond roundoff")
    return np.arccos(np.clip(x, -1.0, 1.0))


def _logcosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def _angles_opposite(geometry: Geometry, a: np.ndarray, deg: np.ndarray) -> np.ndarray:
    """Angles at the three corners given opposite lengths a[..., 0:3].

    Rows flagged in ``deg`` (corner index >= 0) get the extended values
    pi / 0 / 0; the rest go through the cosine rule.
    """
    flat = a.reshape(-1, 3)
    deg_flat = np.asarray(deg).reshape(-1)
    theta = np.zeros_like(flat)
    good = deg_flat < 0
    if np.any(good):
        g = flat[good]
        cos = np.empty_like(g)
        if geometry is Geometry.EUCLIDEAN:
            for c in range(3):
                b1, b2 = g[:, (c + 1) % 3], g[:, (c + 2) % 3]
                cos[:, c] = (b1 * b1 + b2 * b2 - g[:, c] * g[:, c]) / (2.0 * b1 * b2)
        else:
            # cos(theta_c) = (1 + nu - 2*omega) / (1 - nu) with
            # nu = cosh(b1 - b2)/cosh(b1 + b2), omega = cosh(a_c)/cosh(b1 + b2);
            # evaluated through log cosh so large lengths cannot overflow.
            for c in range(3):
                b1, b2 = g[:, (c + 1) % 3], g[:, (c + 2) % 3]
                lc_sum = _logcosh(b1 + b2)
                nu = np.exp(_logcosh(b1 - b2) - lc_sum)
                omega = np.exp(_logcosh(g[:, c]) - lc_sum)
                cos[:, c] = (1.0 + nu - 2.0 * omega) / (1.0 - nu)
        theta[good] = _checked_arccos(cos)
    bad = ~good
    if np.any(bad):
        rows = np.nonzero(bad)[0]
        theta[rows, deg_flat[rows]] = np.pi
    return theta.reshape(a.shape)


def _as_opposite(l_ij, l_ik, l_jk) -> np.ndarray:
    return np.stack(
        [
            np.asarray(l_jk, dtype=np.float64),
            np.asarray(l_ik, dtype=np.float64),
            np.asarray(l_ij, dtype=np.float64),
        ],
        axis=-1,
    )


def classify_triangle(geometry: Geometry, l_ij, l_ik, l_jk) -> DegeneracyClass:
    """Locate the degenerate corner of a triangle, if any.

    The predicate is the same in both geometries: corner q is degenerate
    when the opposite edge is at least as long as the other two combined.
    """
    a = _as_opposite(l_ij, l_ik, l_jk)
    if np.any(a <= 0.0) or np.any(~np.isfinite(a)):
        raise BadParameterError("lengths must be positive and finite")
    corner = int(_degenerate_corners(a))
    return DegeneracyClass(corner=None if corner < 0 else corner)


def triangle_angles(geometry: Geometry, l_ij, l_ik, l_jk):
    """Inner angles (theta_i, theta_j, theta_k) of a nondegenerate triangle."""
    a = _as_opposite(l_ij, l_ik, l_jk)
    deg = _degenerate_corners(a)
    if int(deg) >= 0:
        raise DegenerateTriangleError(
            f"triangle degenerate at corner {int(deg)}; use the extended angles"
        )
    theta = _angles_opposite(geometry, a, deg)
    return float(theta[..., 0]), float(theta[..., 1]), float(theta[..., 2])


def extended_triangle_angles(geometry: Geometry, l_ij, l_ik, l_jk):
    """Angles extended by constants across degenerate shapes.

    Inside the nondegenerate region these are the ordinary angles; at a
    triangle degenerate at q the value is pi at q and 0 at the other two
    corners, which is the continuous limit.
    """
    a = _as_opposite(l_ij, l_ik, l_jk)
    if np.any(a <= 0.0) or np.any(~np.isfinite(a)):
        raise BadParameterError("lengths must be positive and finite")
    deg = _degenerate_corners(a)
    theta = _angles_opposite(geometry, a, deg)
    return float(theta[..., 0]), float(theta[..., 1]), float(theta[..., 2])


def wall_reachability(eps_triple, eta_triple) -> np.ndarray:
    """Per-corner indicator eta_st^2 - eps_s eps_t for one face.

    ``eta_triple[c]`` is the weight of the edge opposite corner c.
    Positive entries mark corners whose degeneracy wall can actually be
    reached by some choice of exponents; non-positive entries make that
    corner's wall empty.
    """
    eps = np.asarray(eps_triple, dtype=np.float64)
    eta = np.asarray(eta_triple, dtype=np.float64)
    out = np.empty(3)
    for c in range(3):
        out[c] = eta[c] ** 2 - eps[(c + 1) % 3] * eps[(c + 2) % 3]
    return out


# ---------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class MetricReport:
    """Everything the metric determines at one state.

    ``angles[f, c]`` is the inner angle at corner c of face f (corners
    follow the sorted vertex order of the face row).  For hyperbolic
    surfaces ``face_areas`` holds the angle deficits pi - sum(angles)
    and ``total_area`` their sum; both are None for Euclidean surfaces.
    ``degenerate_corner`` is -1 for nondegenerate faces, else the corner
    index the face is degenerate at.
    """

    geometry: Geometry
    extended: bool
    lengths: np.ndarray
    angles: np.ndarray
    degenerate_corner: np.ndarray
    curvature: np.ndarray
    face_areas: np.ndarray | None
    total_area: float | None

    @property
    def degenerate_faces(self) -> tuple:
        """(face_index, corner) pairs for every degenerate face."""
        rows = np.nonzero(self.degenerate_corner >= 0)[0]
        return tuple((int(f), int(self.degenerate_corner[f])) for f in rows)


def curvature(
    surface: TriangulatedSurface,
    weights: WeightConfig,
    state: ConformalState,
    extended: bool = False,
) -> MetricReport:
    """Angle sums and curvature K_i = 2 pi - sum of angles at i.

    With ``extended`` set, degenerate faces contribute their constant
    extended angles; otherwise the first degenerate face raises
    DegenerateFaceError.
    """
    lengths = edge_lengths(surface, weights, state)
    a = lengths[surface.face_edges]
    deg = _degenerate_corners(a)
    if not extended and np.any(deg >= 0):
        face = int(np.nonzero(deg >= 0)[0][0])
        raise DegenerateFaceError(face)
    angles = _angles_opposite(state.geometry, a, deg)
    acc = np.bincount(
        surface.faces.ravel(), weights=angles.ravel(), minlength=surface.vertex_count
    )
    k = 2.0 * np.pi - acc
    if state.geometry is Geometry.HYPERBOLIC:
        face_areas = np.pi - angles.sum(axis=1)
        total_area = float(face_areas.sum())
    else:
        face_areas = None
        total_area = None
    return MetricReport(
        geometry=state.geometry,
        extended=extended,
        lengths=lengths,
        angles=angles,
        degenerate_corner=deg,
        curvature=k,
        face_areas=face_areas,
        total_area=total_area,
    )


def gauss_bonnet_residual(report: MetricReport, euler_characteristic: int) -> float:
    """Total curvature minus its topological value; zero in exact arithmetic."""
    total = float(report.curvature.sum())
    area = report.total_area or 0.0
    return total - 2.0 * np.pi * euler_characteristic + report.geometry.background_curvature * area


# ---------------------------------------------------------------------------
# length bounds


def coshl_bounds(eps_j: int, eta: float) -> tuple[float, float]:
    """Two-sided bounds for cosh(l_ij) when eps_i = 1.

    Returns (lam, mu) with
        lam * (C_i C_j + S_i S_j) <= cosh l_ij <= mu * (C_i C_j + S_i S_j)
    valid for every pair of exponents.  Requires the edge weight
    condition between the endpoints, i.e. eta > -1 when eps_j = 1 and
    eta > 0 when eps_j = 0.
    """
    if eps_j not in (0, 1):
        raise BadParameterError("eps_j must be 0 or 1")
    eta = float(eta)
    if eps_j * 1 + eta <= 0.0:
        raise BadParameterError("edge weight condition eps_i eps_j + eta > 0 fails")
    mu = 1.0 + abs(eta)
    if eta > 0.0:
        lam = min(1.0, eta)
    else:
        lam = 0.5 * (1.0 + eta)
    return lam, mu
