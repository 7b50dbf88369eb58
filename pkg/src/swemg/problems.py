"""Benchmark problem catalog and problem-file I/O.

Each problem is declarative: domain geometry, bed elevation as a small
arithmetic expression (or a tabulated 1D profile), a boundary map,
initial data expressions, and the tag of the matching exact-solution
oracle.  The same expression grammar backs the structured-text problem
files, so catalog entries round-trip through dump/load exactly.
"""

from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import BoundaryDataError, MeshError
from .mesh import ChannelSpec, MeshLevel, build_channel_2d, build_uniform_1d
from .physics import BoundarySpec

_FUNCS = {
    "exp": np.exp, "cos": np.cos, "sin": np.sin, "tan": np.tan,
    "sqrt": np.sqrt, "abs": np.abs, "log": np.log, "tanh": np.tanh,
    "max": np.maximum, "min": np.minimum, "where": np.where,
}
_CONSTS = {"pi": math.pi, "e": math.e}

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power, ast.Mod: np.mod}
_CMPOPS = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
           ast.GtE: np.greater_equal, ast.Eq: np.equal, ast.NotEq: np.not_equal}


def _eval_node(node, env):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, env)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return float(node.value)
        raise ValueError(f"literal {node.value!r} not allowed")
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ValueError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left, env),
                                      _eval_node(node.right, env))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return -_eval_node(node.operand, env)
        if isinstance(node.op, ast.UAdd):
            return +_eval_node(node.operand, env)
        raise ValueError("unsupported unary operator")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ValueError("only the whitelisted functions may be called")
        if node.keywords:
            raise ValueError("keyword arguments not allowed")
        args = [_eval_node(a, env) for a in node.args]
        return _FUNCS[node.func.id](*args)
    if isinstance(node, ast.IfExp):
        return np.where(_eval_node(node.test, env),
                        _eval_node(node.body, env),
                        _eval_node(node.orelse, env))
    if isinstance(node, ast.Compare):
        left = _eval_node(node.left, env)
        out = None
        for op, comp in zip(node.ops, node.comparators):
            if type(op) not in _CMPOPS:
                raise ValueError("unsupported comparison")
            right = _eval_node(comp, env)
            piece = _CMPOPS[type(op)](left, right)
            out = piece if out is None else np.logical_and(out, piece)
            left = right
        return out
    if isinstance(node, ast.BoolOp):
        vals = [_eval_node(v, env) for v in node.values]
        op = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        out = vals[0]
        for v in vals[1:]:
            out = op(out, v)
        return out
    raise ValueError(f"unsupported expression element {type(node).__name__}")


def compile_expression(src: str, names=("x", "y", "z")) -> Callable:
    """Compile a restricted arithmetic expression into a vectorized
    callable of the given variable names.

    Supported: numbers, the variables, + - * / ** %, comparisons and
    conditionals (``a if cond else b``), and exp/cos/sin/tan/sqrt/abs/
    log/tanh/max/min/where.
    """
    tree = ast.parse(src, mode="eval")
    _eval_node(tree, {n: 0.0 for n in names})  # validate eagerly

    def fn(*args):
        env = dict(zip(names, args))
        out = _eval_node(tree, env)
        return out

    fn.source = src
    return fn


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative description of one steady-flow benchmark."""
    name: str
    dimension: int
    geometry: Union[tuple, ChannelSpec]
    bed_expr: Optional[str] = None
    bed_table: Optional[tuple] = None       # ((x..), (z..)) 1D only
    boundary: dict = field(default_factory=dict)
    initial_h: str = "1.0"
    initial_qx: str = "0.0"
    initial_qy: str = "0.0"
    oracle: Optional[str] = None
    g: float = 9.81
    eps_init: float = 0.2
    flux: str = "hll"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.dimension == 1 and not (isinstance(self.geometry, tuple)
                                        and len(self.geometry) == 2):
            raise ValueError("1D geometry is an (x_min, x_max) pair")
        if self.dimension == 2 and not isinstance(self.geometry, ChannelSpec):
            raise ValueError("2D geometry must be a ChannelSpec")
        if (self.bed_expr is None) == (self.bed_table is None):
            raise ValueError("give exactly one of bed_expr / bed_table")
        if self.bed_table is not None and self.dimension != 1:
            raise ValueError("tabulated beds are 1D only")
        if self.bed_expr is not None:
            compile_expression(self.bed_expr, ("x", "y"))
        for expr in (self.initial_h, self.initial_qx, self.initial_qy):
            compile_expression(expr, ("x", "y", "z"))
        tags = ("left", "right") if self.dimension == 1 else \
            ("left", "right", "bottom", "top")
        for tag in tags:
            if tag not in self.boundary:
                raise BoundaryDataError(f"missing boundary spec for {tag!r}")
            if not isinstance(self.boundary[tag], BoundarySpec):
                raise BoundaryDataError(f"boundary {tag!r} is not a BoundarySpec")

    def bed(self) -> Callable:
        if self.bed_expr is not None:
            f = compile_expression(self.bed_expr, ("x", "y"))
            if self.dimension == 1:
                return lambda x: np.asarray(f(x, 0.0), dtype=float)
            return lambda x, y: np.asarray(f(x, y), dtype=float)
        xs, zs = (np.asarray(v, dtype=float) for v in self.bed_table)
        return lambda x: np.interp(x, xs, zs)

    def build_mesh(self, cells) -> MeshLevel:
        """Finest mesh with the requested resolution (int in 1D,
        (nx, ny) in 2D)."""
        if self.dimension == 1:
            return build_uniform_1d(self.geometry[0], self.geometry[1],
                                    int(cells), self.bed())
        nx, ny = cells
        return build_channel_2d(self.geometry, int(nx), int(ny), self.bed())

    def initial_state(self, level: MeshLevel) -> np.ndarray:
        """Initial cell data sampled at centroids (z available to the
        expressions as the local bed elevation)."""
        x = level.centroids[:, 0]
        y = level.centroids[:, 1] if level.dim == 2 else np.zeros_like(x)
        z = level.z
        U = np.zeros((level.n_cells, level.m))
        env = (x, y, z)
        U[:, 0] = np.broadcast_to(
            compile_expression(self.initial_h)(*env), x.shape)
        U[:, 1] = np.broadcast_to(
            compile_expression(self.initial_qx)(*env), x.shape)
        if level.m == 3:
            U[:, 2] = np.broadcast_to(
                compile_expression(self.initial_qy)(*env), x.shape)
        return U


_BUMP = "0.2 - 0.05*(x - 10)**2 if 8 < x < 12 else 0.0"
_SUP_IN_Q = -2.5 * math.sqrt(9.81)


def cosine_throat(f_in: float) -> ProblemSpec:
    """Smooth-throat channel flow parameterized by the inflow Froude
    number; boundary regimes dispatch on the local state."""
    q = f_in * math.sqrt(9.81)
    return ProblemSpec(
        name="cosine-throat",
        dimension=2,
        geometry=ChannelSpec.cosine(0.0, 3.0, 1.0, 0.9, 1.5, 1.0),
        bed_expr="0.0",
        boundary={
            "left": BoundarySpec("auto_open", h=1.0, qn=-q, u_tau=0.0),
            "right": BoundarySpec("auto_open", h=1.0),
            "bottom": BoundarySpec("slip_wall"),
            "top": BoundarySpec("slip_wall"),
        },
        initial_h="1.0", initial_qx=repr(q), initial_qy="0.0",
        g=9.81, eps_init=0.2, flux="hllc")


def catalog() -> list:
    """The benchmark suite: smooth subcritical flow, two transcritical
    bump flows, a wet/dry lake, two supercritical wedge channels, the
    cosine throat, a round 2D bump, a dry hill, and a uniform-flow
    smoke test."""
    problems = [
        ProblemSpec(
            name="subcritical-bumps",
            dimension=1,
            geometry=(-10.0, 10.0),
            bed_expr="0.2*exp(-(x + 1)**2/2) + 0.3*exp(-(x - 1.5)**2)",
            boundary={
                "left": BoundarySpec("auto_open", h=1.0, qn=-1.0),
                "right": BoundarySpec("auto_open", h=1.0, qn=1.0),
            },
            initial_h="1.0", initial_qx="1.0",
            oracle="subcritical", flux="hll"),
        ProblemSpec(
            name="transcritical-bump",
            dimension=1,
            geometry=(0.0, 25.0),
            bed_expr=_BUMP,
            boundary={
                "left": BoundarySpec("auto_open", qn=-1.53),
                "right": BoundarySpec("auto_open", h=0.66),
            },
            initial_h="0.66", initial_qx="1.53",
            oracle="transcritical", flux="hll"),
        ProblemSpec(
            name="transcritical-shock",
            dimension=1,
            geometry=(0.0, 25.0),
            bed_expr=_BUMP,
            boundary={
                "left": BoundarySpec("auto_open", qn=-0.18),
                "right": BoundarySpec("auto_open", h=0.33),
            },
            initial_h="0.33", initial_qx="0.18",
            oracle="transcritical-shock", flux="hll"),
        ProblemSpec(
            name="wet-dry-lake",
            dimension=1,
            geometry=(0.0, 20.0),
            bed_expr=_BUMP,
            boundary={
                "left": BoundarySpec("auto_open", h=0.1),
                "right": BoundarySpec("auto_open", h=0.1),
            },
            initial_h="0.22 - z", initial_qx="0.0",
            oracle="lake-at-rest", flux="llf"),
        ProblemSpec(
            name="wedge-channel-5deg",
            dimension=2,
            geometry=ChannelSpec.wedge(0.0, 90.0, 20.0, 5.0, 10.0),
            bed_expr="0.0",
            boundary={
                "left": BoundarySpec("supercritical_inflow", h=1.0,
                                     qn=_SUP_IN_Q, u_tau=0.0),
                "right": BoundarySpec("supercritical_outflow"),
                "bottom": BoundarySpec("slip_wall"),
                "top": BoundarySpec("slip_wall"),
            },
            initial_h="1.0", initial_qx="2.5*sqrt(9.81)",
            eps_init=200.0, flux="hllc"),
        ProblemSpec(
            name="wedge-channel-15deg",
            dimension=2,
            geometry=ChannelSpec.wedge(0.0, 90.0, 20.0, 15.0, 10.0, 30.0),
            bed_expr="0.0",
            boundary={
                "left": BoundarySpec("supercritical_inflow", h=1.0,
                                     qn=_SUP_IN_Q, u_tau=0.0),
                "right": BoundarySpec("supercritical_outflow"),
                "bottom": BoundarySpec("slip_wall"),
                "top": BoundarySpec("slip_wall"),
            },
            initial_h="1.0", initial_qx="2.5*sqrt(9.81)",
            eps_init=200.0, flux="hllc"),
        cosine_throat(2.0),
        ProblemSpec(
            name="round-bump-channel",
            dimension=2,
            geometry=ChannelSpec.rectangle(0.0, 25.0, -5.0, 5.0),
            bed_expr=("0.2 - 0.05*((x - 10)**2 + y**2) "
                      "if (x - 10)**2 + y**2 < 4 else 0.0"),
            boundary={
                "left": BoundarySpec("auto_open", qn=-1.53, u_tau=0.0),
                "right": BoundarySpec("auto_open", h=0.52),
                "bottom": BoundarySpec("reflective_wall"),
                "top": BoundarySpec("reflective_wall"),
            },
            initial_h="0.52", initial_qx="1.53",
            eps_init=2.0, flux="hllc"),
        ProblemSpec(
            name="dry-hill-channel",
            dimension=2,
            geometry=ChannelSpec.rectangle(0.0, 25.0, -5.0, 5.0),
            bed_expr=("1.2 - 0.3*((x - 10)**2 + y**2) "
                      "if (x - 10)**2 + y**2 < 4 else 0.0"),
            boundary={
                "left": BoundarySpec("auto_open", qn=-0.1, u_tau=0.0),
                "right": BoundarySpec("auto_open", h=0.2),
                "bottom": BoundarySpec("reflective_wall"),
                "top": BoundarySpec("reflective_wall"),
            },
            initial_h="max(0.2 - z, 0)", initial_qx="0.0",
            oracle="lake-at-rest", flux="llf"),
        ProblemSpec(
            name="uniform-flow",
            dimension=1,
            geometry=(0.0, 1.0),
            bed_expr="0.0",
            boundary={
                "left": BoundarySpec("auto_open", h=1.0, qn=-1.0),
                "right": BoundarySpec("auto_open", h=1.0, qn=1.0),
            },
            initial_h="1.0", initial_qx="1.0", flux="hll"),
    ]
    return problems


def by_name(name: str) -> ProblemSpec:
    for p in catalog():
        if p.name == name:
            return p
    raise KeyError(f"unknown problem {name!r}")


def dump_problem(spec: ProblemSpec, path) -> None:
    """Write a ProblemSpec as a structured-text problem file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["problem"] = {"name": spec.name, "dimension": str(spec.dimension),
                     "g": repr(spec.g), "eps_init": repr(spec.eps_init),
                     "flux": spec.flux}
    if spec.oracle:
        cp["problem"]["oracle"] = spec.oracle
    if spec.dimension == 1:
        cp["geometry"] = {"kind": "interval",
                          "x_min": repr(spec.geometry[0]),
                          "x_max": repr(spec.geometry[1])}
    else:
        geo = spec.geometry
        d = {"kind": geo.kind, "x_min": repr(geo.x_min), "x_max": repr(geo.x_max)}
        if geo.kind == "rectangle":
            d.update(y_min=repr(geo.y_min), y_max=repr(geo.y_max))
        elif geo.kind == "wedge":
            d.update(half_width=repr(geo.half_width),
                     angle_deg=repr(geo.angle_deg),
                     constrict_start=repr(geo.constrict_start))
            if geo.constrict_end is not None:
                d["constrict_end"] = repr(geo.constrict_end)
        else:
            d.update(width_ref=repr(geo.width_ref), width_min=repr(geo.width_min),
                     throat_center=repr(geo.throat_center),
                     throat_length=repr(geo.throat_length))
        cp["geometry"] = d
    if spec.bed_expr is not None:
        cp["bed"] = {"expr": spec.bed_expr}
    else:
        xs, zs = spec.bed_table
        rows = "; ".join(f"{x!r} {z!r}" for x, z in zip(xs, zs))
        cp["bed"] = {"table": rows}
    cp["initial"] = {"h": spec.initial_h, "qx": spec.initial_qx,
                     "qy": spec.initial_qy}
    for tag, b in spec.boundary.items():
        d = {"kind": b.kind}
        if b.h is not None:
            d["h"] = repr(b.h)
        if b.qn is not None:
            d["qn"] = repr(b.qn)
        if b.u_tau is not None:
            d["u_tau"] = repr(b.u_tau)
        cp[f"boundary.{tag}"] = d
    with open(path, "w") as f:
        cp.write(f)


def load_custom(path) -> ProblemSpec:
    """Load and validate a structured-text problem file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    try:
        pr = cp["problem"]
        dim = int(pr["dimension"])
        geo_s = cp["geometry"]
        kind = geo_s["kind"]
        if kind == "interval":
            geometry = (float(geo_s["x_min"]), float(geo_s["x_max"]))
        elif kind == "rectangle":
            geometry = ChannelSpec.rectangle(
                float(geo_s["x_min"]), float(geo_s["x_max"]),
                float(geo_s["y_min"]), float(geo_s["y_max"]))
        elif kind == "wedge":
            end = geo_s.get("constrict_end")
            geometry = ChannelSpec.wedge(
                float(geo_s["x_min"]), float(geo_s["x_max"]),
                float(geo_s["half_width"]), float(geo_s["angle_deg"]),
                float(geo_s["constrict_start"]),
                float(end) if end is not None else None)
        elif kind == "cosine":
            geometry = ChannelSpec.cosine(
                float(geo_s["x_min"]), float(geo_s["x_max"]),
                float(geo_s["width_ref"]), float(geo_s["width_min"]),
                float(geo_s["throat_center"]), float(geo_s["throat_length"]))
        else:
            raise ValueError(f"unknown geometry kind {kind!r}")

        bed_expr = None
        bed_table = None
        if "expr" in cp["bed"]:
            bed_expr = cp["bed"]["expr"]
        else:
            rows = [r.split() for r in cp["bed"]["table"].split(";") if r.strip()]
            xs = tuple(float(r[0]) for r in rows)
            zs = tuple(float(r[1]) for r in rows)
            bed_table = (xs, zs)

        boundary = {}
        for section in cp.sections():
            if not section.startswith("boundary."):
                continue
            tag = section.split(".", 1)[1]
            s = cp[section]
            boundary[tag] = BoundarySpec(
                kind=s["kind"],
                h=float(s["h"]) if "h" in s else None,
                qn=float(s["qn"]) if "qn" in s else None,
                u_tau=float(s["u_tau"]) if "u_tau" in s else None)

        init = cp["initial"] if "initial" in cp else {}
        return ProblemSpec(
            name=pr["name"], dimension=dim, geometry=geometry,
            bed_expr=bed_expr, bed_table=bed_table, boundary=boundary,
            initial_h=init.get("h", "1.0"), initial_qx=init.get("qx", "0.0"),
            initial_qy=init.get("qy", "0.0"),
            oracle=pr.get("oracle") or None, g=float(pr.get("g", "9.81")),
            eps_init=float(pr.get("eps_init", "0.2")),
            flux=pr.get("flux", "hll"))
    except (KeyError, ValueError, IndexError) as exc:
        if isinstance(exc, (BoundaryDataError, MeshError)):
            raise
        raise ValueError(f"invalid problem file {path}: {exc}") from exc
