"""Mesh documents, trace files, and the command-line tool.

Mesh documents are JSON: a geometry tag, a vertex count, the face
list, per-vertex epsilon, per-edge eta keyed by the canonical "i-j"
string (i < j), optional conformal factors tagged "u" or "f", and an
optional target curvature array "Kbar".  Unknown keys are rejected so
typos fail loudly.  Numbers are written with 17 significant digits,
which round-trips 64-bit floats exactly; identical invocations produce
byte-identical files.

Exit codes: 0 success, 1 computation failure (non-convergence,
degenerate faces, weight-condition violations), 2 unusable input
(unreadable or malformed documents, bad flags, inadmissible targets).
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadFaceError,
    BadParameterError,
    DegenerateFaceError,
    DomainError,
    MaxIterationsError,
    MeshDocumentError,
    NoInteriorSolutionError,
    NonManifoldVertexError,
    NotClosedSurfaceError,
    OverflowRangeError,
    TargetInadmissibleError,
)
from .flows import FlowKind, FlowSpec, FlowTrace, TerminationReason, run_flow
from .geometry import (
    ConformalState,
    Geometry,
    base_state,
    curvature,
    gauss_bonnet_residual,
)
from .solve import solve_prescribed
from .surface import (
    GENERATOR_KINDS,
    TriangulatedSurface,
    WeightConfig,
    build_surface,
    generate,
    validate_weights,
)

__all__ = [
    "MeshDocument",
    "document_from_objects",
    "dump_document",
    "format_trace",
    "load_document",
    "main",
    "parse_document",
    "write_trace",
]

_EDGE_KEY = re.compile(r"^(\d+)-(\d+)$")
_TOP_KEYS = ("geometry", "vertex_count", "faces", "epsilon", "eta", "factors", "Kbar")
_REQUIRED_KEYS = ("geometry", "vertex_count", "faces", "epsilon", "eta")


# ---------------------------------------------------------------------------
# number and JSON emission with exact round trips


def _format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    value = float(x)
    if not np.isfinite(value):
        raise MeshDocumentError("cannot serialize a non-finite number")
    return format(value, ".17g")


def _emit_json(value, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        rows = ",\n".join(
            f"{pad}  {json.dumps(str(key))}: {_emit_json(item, indent + 1)}"
            for key, item in value.items()
        )
        return "{\n" + rows + "\n" + pad + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        items = list(value)
        if not items:
            return "[]"
        nested = any(isinstance(x, (dict, list, tuple, np.ndarray)) for x in items)
        if not nested:
            return "[" + ", ".join(_format_number(x) for x in items)  + "]"
        rows = ",\n".join(pad + "  " + _emit_json(x, indent + 1) for x in items)
        return "[\n" + rows + "\n" + pad + "]"
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value)
    return _format_number(value)


# ---------------------------------------------------------------------------
# mesh documents


@dataclass(frozen=True)
class MeshDocument:
    """Schema-validated document contents, before surface construction."""

    geometry: Geometry
    vertex_count: int
    faces: tuple
    epsilon: np.ndarray
    eta_map: dict
    factor_kind: str | None
    factor_values: np.ndarray | None
    target: np.ndarray | None

    def build(self):
        """Construct the surface, weights, and optional state.

        Structural errors (non-closed, non-manifold complexes)
        propagate as their own exception types; everything that is a
        property of the document itself raises MeshDocumentError.
        """
        surface = build_surface(self.vertex_count, [list(f) for f in self.faces])
        known = {(int(i), int(j)) for i, j in surface.edges}
        extra = sorted(set(self.eta_map) - known)
        if extra:
            i, j = extra[0]
            raise MeshDocumentError(f"eta key {i}-{j} does not name an edge")
        eta = np.empty(surface.edge_count)
        for e, (i, j) in enumerate(surface.edges):
            key = (int(i), int(j))
            if key not in self.eta_map:
                raise MeshDocumentError(f"eta missing for edge {i}-{j}")
            eta[e] = self.eta_map[key]
        weights = WeightConfig(self.epsilon.copy(), eta)
        state = None
        if self.factor_values is not None:
            try:
                if self.factor_kind == "u":
                    state = ConformalState(self.geometry, weights.epsilon, self.factor_values)
                else:
                    state = ConformalState.from_f(
                        self.geometry, weights.epsilon, self.factor_values
                    )
            except (DomainError, OverflowRangeError, BadParameterError) as exc:
                raise MeshDocumentError(f"factors are not valid coordinates: {exc}")
        target = None if self.target is None else self.target.copy()
        return surface, weights, state, target


def _schema_fail(message: str):
    raise MeshDocumentError(message)


def _int_field(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _schema_fail(f"{name} must be an integer")
    return value


def _float_array(value, name: str, length: int) -> np.ndarray:
    if not isinstance(value, list) or len(value) != length:
        _schema_fail(f"{name} must be a list of {length} numbers")
    out = np.empty(length)
    for k, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            _schema_fail(f"{name}[{k}] must be a number")
        out[k] = float(item)
    if not np.all(np.isfinite(out)):
        _schema_fail(f"{name} contains non-finite values")
    return out


def parse_document(data) -> MeshDocument:
    """Validate raw JSON data (a dict or a JSON string) into a MeshDocument."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise MeshDocumentError(f"document is not valid JSON: {exc}")
    if not isinstance(data, dict):
        _schema_fail("document root must be an object")
    unknown = sorted(set(data) - set(_TOP_KEYS))
    if unknown:
        _schema_fail(f"unknown document keys: {', '.join(unknown)}")
    missing = [key for key in _REQUIRED_KEYS if key not in data]
    if missing:
        _schema_fail(f"missing document keys: {', '.join(missing)}")

    tag = data["geometry"]
    if tag not in ("euclidean", "hyperbolic"):
        _schema_fail(f"geometry must be 'euclidean' or 'hyperbolic', got {tag!r}")
    geometry = Geometry(tag)

    n = _int_field(data["vertex_count"], "vertex_count")
    if n < 3:
        _schema_fail("vertex_count must be at least 3")

    raw_faces = data["faces"]
    if not isinstance(raw_faces, list) or not raw_faces:
        _schema_fail("faces must be a non-empty list")
    faces = []
    for k, row in enumerate(raw_faces):
        if not isinstance(row, list) or len(row) != 3:
            _schema_fail(f"faces[{k}] must be a list of three vertex indices")
        faces.append(tuple(_int_field(v, f"faces[{k}]") for v in row))

    raw_eps = data["epsilon"]
    if not isinstance(raw_eps, list) or len(raw_eps) != n:
        _schema_fail(f"epsilon must be a list of {n} values")
    epsilon = np.empty(n, dtype=np.int64)
    for k, item in enumerate(raw_eps):
        value = _int_field(item, f"epsilon[{k}]")
        if value not in (0, 1):
            _schema_fail(f"epsilon[{k}] must be 0 or 1")
        epsilon[k] = value

    raw_eta = data["eta"]
    if not isinstance(raw_eta, dict):
        _schema_fail("eta must be an object keyed by 'i-j' edge names")
    eta_map = {}
    for key, item in raw_eta.items():
        match = _EDGE_KEY.match(str(key))
        if not match:
            _schema_fail(f"eta key {key!r} is not of the form 'i-j'")
        i, j = int(match.group(1)), int(match.group(2))
        if not (0 <= i < j < n):
            _schema_fail(f"eta key {key!r} must name vertices i < j below {n}")
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            _schema_fail(f"eta[{key!r}] must be a number")
        value = float(item)
        if not np.isfinite(value):
            _schema_fail(f"eta[{key!r}] is not finite")
        eta_map[(i, j)] = value

    factor_kind = None
    factor_values = None
    if "factors" in data:
        raw = data["factors"]
        if not isinstance(raw, dict):
            _schema_fail("factors must be an object with 'kind' and 'values'")
        extra = sorted(set(raw) - {"kind", "values"})
        if extra:
            _schema_fail(f"unknown factors keys: {', '.join(extra)}")
        factor_kind = raw.get("kind")
        if factor_kind not in ("u", "f"):
            _schema_fail("factors kind must be 'u' or 'f'")
        factor_values = _float_array(raw.get("values"), "factors values", n)

    target = None
    if "Kbar" in data:
        target = _float_array(data["Kbar"], "Kbar", n)

    return MeshDocument(
        geometry=geometry,
        vertex_count=n,
        faces=tuple(faces),
        epsilon=epsilon,
        eta_map=eta_map,
        factor_kind=factor_kind,
        factor_values=factor_values,
        target=target,
    )


def load_document(path: str) -> MeshDocument:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise MeshDocumentError(f"cannot read {path}: {exc}")
    return parse_document(text)


def document_from_objects(
    surface: TriangulatedSurface,
    weights: WeightConfig,
    geometry: Geometry,
    state: ConformalState | None = None,
    target=None,
) -> dict:
    """Document payload for a surface; factors always emitted as u."""
    payload = {
        "geometry": geometry.value,
        "vertex_count": surface.vertex_count,
        "faces": [[int(v) for v in row] for row in surface.faces],
        "epsilon": [int(v) for v in weights.epsilon],
        "eta": {f"{i}-{j}": float(weights.eta[e]) for e, (i, j) in enumerate(surface.edges)},
    }
    if state is not None:
        payload["factors"] = {"kind": "u", "values": [float(v) for v in state.u]}
    if target is not None:
        payload["Kbar"] = [float(v) for v in np.asarray(target, dtype=np.float64)]
    return payload


def dump_document(payload: dict) -> str:
    return _emit_json(payload) + "\n"


# ---------------------------------------------------------------------------
# trace files


def format_trace(trace: FlowTrace) -> str:
    """CSV text: t, residual, sum_u, energy_H, calabi_C, u_*, K_*."""
    n = len(trace.rows[0].u)
    header = ["t", "residual", "sum_u", "energy_H", "calabi_C"]
    header += [f"u_{i}" for i in range(n)]
    header += [f"K_{i}" for i in range(n)]
    lines = [",".join(header)]
    for row in trace.rows:
        cells = [
            _format_number(row.t),
            _format_number(row.residual),
            _format_number(row.sum_u),
            format(row.energy, ".17g"),  # may be nan when not evaluable
            _format_number(row.calabi),
        ]
        cells += [_format_number(v) for v in row.u]
        cells += [_format_number(v) for v in row.curvature]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_trace(path: str, trace: FlowTrace) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_trace(trace))


# ---------------------------------------------------------------------------
# command implementations


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_built(path: str):
    """Load + build for commands that need a usable mesh; failures exit 2."""
    doc = load_document(path)
    try:
        surface, weights, state, target = doc.build()
    except (BadFaceError, NotClosedSurfaceError, NonManifoldVertexError, BadParameterError) as exc:
        raise MeshDocumentError(f"document does not describe a valid surface: {exc}")
    return doc, surface, weights, state, target


def _resolve_cli_target(spec: str | None, doc_target, n: int):
    """--target const:x | file:path, falling back to the document's Kbar."""
    if spec is None:
        return doc_target
    if spec.startswith("const:"):
        try:
            return np.full(n, float(spec[len("const:"):]))
        except ValueError:
            raise MeshDocumentError(f"bad constant target {spec!r}")
    if spec.startswith("file:"):
        path = spec[len("file:"):]
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise MeshDocumentError(f"cannot read target file {path}: {exc}")
        return _float_array(data, "target", n)
    raise MeshDocumentError(f"target must look like const:x or file:path, got {spec!r}")


def _cmd_gen(args) -> int:
    kind = "torus_grid" if args.kind == "torus" else args.kind
    try:
        surface = generate(kind, *args.dims)
        geometry = Geometry(args.geometry)
        weights = WeightConfig.uniform(surface, args.epsilon, args.eta)
    except BadParameterError as exc:
        return _fail(str(exc), 2)
    payload = document_from_objects(surface, weights, geometry)
    _write_text(args.out, dump_document(payload))
    return 0


def _cmd_validate(args) -> int:
    try:
        doc = load_document(args.mesh)
    except MeshDocumentError as exc:
        return _fail(str(exc), 2)
    try:
        surface, weights, _, _ = doc.build()
    except MeshDocumentError as exc:
        return _fail(str(exc), 2)
    except (BadFaceError, NotClosedSurfaceError, NonManifoldVertexError, BadParameterError) as exc:
        print(f"manifold: FAIL ({exc})")
        return 1
    print(
        f"surface: {surface.vertex_count} vertices, {surface.edge_count} edges, "
        f"{surface.face_count} faces, chi = {surface.euler_characteristic}"
    )
    print("manifold: ok")
    report = validate_weights(surface, weights)
    if report.edge_violations:
        names = ", ".join(
            f"{surface.edges[e][0]}-{surface.edges[e][1]}" for e in report.edge_violations
        )
        print(f"edge condition: FAIL at {names}")
    else:
        print("edge condition: ok")
    if report.face_violations:
        names = ", ".join(f"face {f} corner {c}" for f, c in report.face_violations)
        print(f"corner condition: FAIL at {names}")
    else:
        print("corner condition: ok")
    return 0 if report.ok else 1


def _cmd_curvature(args) -> int:
    try:
        doc, surface, weights, state, _ = _load_built(args.mesh)
    except MeshDocumentError as exc:
        return _fail(str(exc), 2)
    if state is None:
        state = base_state(doc.geometry, weights.epsilon)
    try:
        report = curvature(surface, weights, state, extended=args.extended)
    except DegenerateFaceError as exc:
        return _fail(f"face {exc.face_index} is degenerate; rerun with --extended", 1)
    payload = {
        "geometry": doc.geometry.value,
        "extended": bool(args.extended),
        "lengths": [float(v) for v in report.lengths],
        "angles": [[float(a) for a in row] for row in report.angles],
        "curvature": [float(v) for v in report.curvature],
        "gauss_bonnet_residual": gauss_bonnet_residual(report, surface.euler_characteristic),
        "degenerate_faces": [[f, c] for f, c in report.degenerate_faces],
        "total_area": None if report.total_area is None else float(report.total_area),
    }
    _write_text(args.out, _emit_json(payload) + "\n")
    return 0


def _cmd_flow(args) -> int:
    try:
        doc, surface, weights, state, doc_target = _load_built(args.mesh)
        target = _resolve_cli_target(args.target, doc_target, surface.vertex_count)
    except MeshDocumentError as exc:
        return _fail(str(exc), 2)
    if state is None:
        state = base_state(doc.geometry, weights.epsilon)
    try:
        spec = FlowSpec(
            FlowKind(args.kind),
            doc.geometry,
            target=target,
            integrator=args.integrator,
            dt=args.dt,
            tolerance=args.tol,
            max_time=args.max_time,
            trace_stride=args.stride,
        )
        trace = run_flow(spec, surface, weights, state)
    except (TargetInadmissibleError, BadParameterError) as exc:
        return _fail(str(exc), 2)
    if args.trace:
        write_trace(args.trace, trace)
    last = trace.rows[-1]
    print(
        f"termination: {trace.termination.value}  t = {_format_number(last.t)}  "
        f"residual = {_format_number(last.residual)}  rows = {len(trace.rows)}"
    )
    return 0 if trace.termination is TerminationReason.CONVERGED else 1


def _cmd_solve(args) -> int:
    try:
        doc, surface, weights, state, doc_target = _load_built(args.mesh)
        target = _resolve_cli_target(args.target, doc_target, surface.vertex_count)
    except MeshDocumentError as exc:
        return _fail(str(exc), 2)
    if target is None:
        return _fail("no target: pass --target or include Kbar in the document", 2)
    try:
        report = solve_prescribed(
            surface,
            weights,
            doc.geometry,
            target,
            initial_guess=state,
            tolerance=args.tol,
            max_iterations=args.max_iterations,
        )
    except (TargetInadmissibleError, BadParameterError) as exc:
        return _fail(str(exc), 2)
    except (NoInteriorSolutionError, MaxIterationsError) as exc:
        return _fail(str(exc), 1)
    print(
        f"solved in {report.iterations} iterations  residual = "
        f"{_format_number(report.residual)}  certificate = "
        f"{_format_number(report.certificate)}  method = {report.method}"
    )
    payload = document_from_objects(
        surface, weights, doc.geometry, state=report.state, target=target
    )
    if args.out:
        _write_text(args.out, dump_document(payload))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcflow",
        description="Curvature flows for discrete conformal structures on closed surfaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a mesh document")
    gen.add_argument("kind", choices=tuple(GENERATOR_KINDS) + ("torus",))
    gen.add_argument("dims", nargs="*", type=int, help="grid sizes for torus_grid")
    gen.add_argument("--epsilon", type=int, default=0, choices=(0, 1))
    gen.add_argument("--eta", type=float, default=1.0)
    gen.add_argument("--geometry", choices=("euclidean", "hyperbolic"), default="euclidean")
    gen.add_argument("--out", default=None)
    gen.set_defaults(handler=_cmd_gen)

    val = sub.add_parser("validate", help="check a mesh document")
    val.add_argument("mesh")
    val.set_defaults(handler=_cmd_validate)

    curv = sub.add_parser("curvature", help="lengths, angles, and curvature")
    curv.add_argument("mesh")
    curv.add_argument("--extended", action="store_true")
    curv.add_argument("--out", default=None)
    curv.set_defaults(handler=_cmd_curvature)

    flow = sub.add_parser("flow", help="run a curvature flow")
    flow.add_argument("mesh")
    flow.add_argument("--kind", default="extended-ricci", choices=[k.value for k in FlowKind])
    flow.add_argument("--target", default=None, help="const:x or file:path")
    flow.add_argument("--integrator", default="euler", choices=("euler", "rk4"))
    flow.add_argument("--dt", type=float, default=1e-2)
    flow.add_argument("--tol", type=float, default=1e-10)
    flow.add_argument("--max-time", type=float, default=500.0)
    flow.add_argument("--stride", type=int, default=10)
    flow.add_argument("--trace", default=None, help="write a CSV trace here")
    flow.set_defaults(handler=_cmd_flow)

    solve = sub.add_parser("solve", help="solve for a prescribed curvature")
    solve.add_argument("mesh")
    solve.add_argument("--target", default=None, help="const:x or file:path")
    solve.add_argument("--tol", type=float, default=1e-10)
    solve.add_argument("--max-iterations", type=int, default=100)
    solve.add_argument("--out", default=None, help="write the solved document here")
    solve.set_defaults(handler=_cmd_solve)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
