"""Direct prescribed-curvature solver.

Damped Newton iteration on the extended potential, whose gradient is
the extended curvature deficit.  The potential is convex, C1 on the
whole coordinate space, and C2 away from the degeneracy walls; in the
interior of a degenerate region the Hessian simply drops the blocks of
the degenerate faces.  When that restricted Hessian loses definiteness
the iteration falls back to plain gradient descent for the step.

The Euclidean Hessian annihilates the all-ones vector, so Newton
systems are solved with a rank-one bump that pins the iteration to the
hyperplane where the coordinate sum equals that of the initial guess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .calculus import curvature_jacobian, surface_energies
from .errors import (
    BadParameterError,
    DomainError,
    MaxIterationsError,
    NoInteriorSolutionError,
    OverflowRangeError,
    QuadratureFailureError,
    TargetInadmissibleError,
)
from .flows import FlowKind, FlowSpec, check_target
from .geometry import ConformalState, Geometry, base_state, curvature
from .surface import TriangulatedSurface, WeightConfig

__all__ = ["SolveReport", "solve_prescribed"]

ARMIJO_CONSTANT = 1e-4
MAX_BACKTRACKS = 40
FULL_STEP_RESIDUAL = 1e-5
STEP_CAP = 10.0


@dataclass(frozen=True)
class SolveReport:
    """Solution state with convergence diagnostics.

    ``certificate`` is the smallest eigenvalue of the curvature
    Jacobian at the solution, restricted to the sum-zero subspace for
    Euclidean geometry; positivity certifies local strict convexity
    and hence local rigidity of the solution.  ``potential_history``
    holds the potential after each accepted step; an entry is nan when
    the from-base integral could not be evaluated at full tolerance.
    """

    state: ConformalState
    residual: float
    iterations: int
    certificate: float
    method: str  # "newton" or "gradient-descent"
    potential_history: tuple[float, ...]


def _restricted_smallest_eigenvalue(geometry, matrix):
    dense = matrix.toarray()
    n = dense.shape[0]
    if geometry is Geometry.EUCLIDEAN:
        projector = np.eye(n) - np.full((n, n), 1.0 / n)
        eigenvalues = np.linalg.eigvalsh(projector @ dense @ projector)
        return float(eigenvalues[1])  # drop the projected-out direction
    return float(np.linalg.eigvalsh(dense)[0])


def _newton_direction(geometry, matrix, gradient):
    dense = matrix.toarray()
    n = dense.shape[0]
    if geometry is Geometry.EUCLIDEAN:
        dense = dense + np.full((n, n), 1.0 / n)
    factor = scipy.linalg.cho_factor(dense)
    return scipy.linalg.cho_solve(factor, -gradient)


def solve_prescribed(
    surface: TriangulatedSurface,
    weights: WeightConfig,
    geometry: Geometry,
    target,
    initial_guess: ConformalState | None = None,
    tolerance: float = 1e-10,
    max_iterations: int = 100,
) -> SolveReport:
    """Find conformal factors whose curvature equals the target.

    Raises TargetInadmissibleError when the target violates the
    admissibility constraints, NoInteriorSolutionError when the
    iteration converges to a generalized solution with degenerate
    faces, and MaxIterationsError when the budget runs out.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (surface.vertex_count,) or not np.all(np.isfinite(target)):
        raise BadParameterError("target must be a finite per-vertex vector")
    probe = FlowSpec(FlowKind.EXTENDED_MODIFIED_RICCI, geometry, target=target)
    validation = check_target(probe, surface)
    if not validation.ok:
        raise TargetInadmissibleError("; ".join(validation.violations))

    if initial_guess is None:
        state = base_state(geometry, weights.epsilon)
    else:
        if initial_guess.geometry is not geometry:
            raise BadParameterError("initial guess geometry mismatch")
        state = initial_guess
    base = base_state(geometry, state.epsilon)
    sum_reference = float(state.u.sum())
    cone_mask = state.epsilon == 1

    def potential_of(candidate):
        value = surface_energies(
            surface, weights, candidate, target=target, base=base, extended=True
        )
        return value.potential

    def admissible_coordinates(u):
        if geometry is Geometry.HYPERBOLIC and np.any(u[cone_mask] >= 0.0):
            return False
        return True

    method = "newton"
    try:
        current = potential_of(state)
    except QuadratureFailureError:
        current = np.inf  # any evaluable candidate beats an unevaluable start
    history = [current if np.isfinite(current) else np.nan]

    for iteration in range(max_iterations + 1):
        report = curvature(surface, weights, state, extended=True)
        gradient = report.curvature - target
        residual = float(np.max(np.abs(gradient)))
        if residual < tolerance:
            if report.degenerate_faces:
                raise NoInteriorSolutionError(
                    "converged to a generalized solution with degenerate faces "
                    f"{tuple(f for f, _ in report.degenerate_faces)}"
                )
            certificate = _restricted_smallest_eigenvalue(
                geometry, curvature_jacobian(surface, weights, state)
            )
            return SolveReport(
                state=state,
                residual=residual,
                iterations=iteration,
                certificate=certificate,
                method=method,
                potential_history=tuple(history),
            )
        if iteration == max_iterations:
            break

        hessian = curvature_jacobian(surface, weights, state, extended=True)
        try:
            direction = _newton_direction(geometry, hessian, gradient)
            method = "newton"
        except scipy.linalg.LinAlgError:
            direction = -gradient
            method = "gradient-descent"
        slope = float(gradient @ direction)

        step_size = float(np.max(np.abs(direction)))
        if residual < FULL_STEP_RESIDUAL and method == "newton" and step_size <= STEP_CAP:
            # quadratic convergence region: the potential differences are
            # below quadrature noise, so take the full step directly
            candidate_u = state.u + direction
            if geometry is Geometry.EUCLIDEAN:
                candidate_u -= (candidate_u.sum() - sum_reference) / len(candidate_u)
            if admissible_coordinates(candidate_u):
                state = state.with_u(candidate_u)
                try:
                    current = potential_of(state)
                    history.append(current)
                except QuadratureFailureError:
                    current = np.inf
                    history.append(np.nan)
                continue

        alpha = min(1.0, STEP_CAP / max(step_size, 1e-12))
        accepted = None
        for _ in range(MAX_BACKTRACKS + 1):
            candidate_u = state.u + alpha * direction
            if geometry is Geometry.EUCLIDEAN:
                candidate_u -= (candidate_u.sum() - sum_reference) / len(candidate_u)
            if admissible_coordinates(candidate_u):
                try:
                    candidate = state.with_u(candidate_u)
                    value = potential_of(candidate)
                except (DomainError, OverflowRangeError, QuadratureFailureError):
                    value = None
                if value is not None and value <= current + ARMIJO_CONSTANT * alpha * slope:
                    accepted = (candidate, value)
                    break
            alpha *= 0.5
        if accepted is None:
            raise MaxIterationsError(
                f"line search stalled at iteration {iteration} "
                f"(residual {residual:.3e})"
            )
        state, current = accepted
        history.append(current)

    raise MaxIterationsError(
        f"no convergence after {max_iterations} iterations "
        f"(residual {residual:.3e})"
    )
