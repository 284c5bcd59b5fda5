"""Curvilinear quadrilateral multiblock meshes.

A mesh is a list of blocks (four curved edges each), a list of conforming
interfaces with explicit orientation, and boundary tags for every exterior
side. Everything is deterministic: interfaces are declared, never
discovered by coordinate hashing, and the generators below construct
shared-edge curves once so both sides of an interface evaluate to the
same points.

Block parameter conventions (reference square ``(xi, eta) in [0,1]^2``):

* south edge: eta = 0, parametrized by xi
* east edge:  xi = 1, parametrized by eta
* north edge: eta = 1, parametrized by xi
* west edge:  xi = 0, parametrized by eta
"""

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = [
    "MeshError",
    "CurvedEdge",
    "Block",
    "Interface",
    "MultiblockMesh",
    "line_edge",
    "arc_edge",
    "polynomial_edge",
    "coons_patch",
    "block_grid",
    "unit_square_block",
    "rect_block",
    "bilinear_block",
    "quarter_annulus_block",
    "single_square_mesh",
    "two_block_square_mesh",
    "four_block_square_mesh",
    "generate_circle_mesh",
    "refine_mesh",
    "load_mesh",
    "save_mesh",
    "validate_mesh",
    "SIDES",
]

SIDES = ("s", "e", "n", "w")

_FIT_DEGREE = 16
_ENDPOINT_TOL = 1e-12
_CONFORMITY_TOL = 1e-10


class MeshError(Exception):
    """Raised for malformed mesh files or inconsistent mesh definitions."""


@dataclass(frozen=True)
class CurvedEdge:
    """One curved block side, parametrized over s in [0,1].

    ``kind`` is one of "line", "circular-arc", "polynomial". Arc edges store
    center, radius and an angle span (radians); polynomial edges store
    ascending monomial coefficients for x(s) and y(s).
    """

    kind: str
    start: tuple[float, float]
    end: tuple[float, float]
    center: tuple[float, float] | None = None
    radius: float | None = None
    angles: tuple[float, float] | None = None
    x_coeffs: tuple[float, ...] | None = None
    y_coeffs: tuple[float, ...] | None = None

    def at(self, s):
        """Evaluate the edge at parameter(s) s; returns shape (..., 2)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "line":
            p0 = np.asarray(self.start)
            p1 = np.asarray(self.end)
            return p0 + s[..., None] * (p1 - p0)
        if self.kind == "circular-arc":
            a0, a1 = self.angles
            theta = a0 + s * (a1 - a0)
            cx, cy = self.center
            return np.stack(
                [cx + self.radius * np.cos(theta), cy + self.radius * np.sin(theta)],
                axis=-1,
            )
        if self.kind == "polynomial":
            return np.stack(
                [npoly.polyval(s, self.x_coeffs), npoly.polyval(s, self.y_coeffs)],
                axis=-1,
            )
        raise MeshError(f"unknown edge kind {self.kind!r}")

    def subedge(self, lo: float, hi: float) -> "CurvedEdge":
        """Restriction to [lo,hi], reparametrized to [0,1]. Exact per kind."""
        if self.kind == "line":
            return line_edge(self.at(lo), self.at(hi))
        if self.kind == "circular-arc":
            a0, a1 = self.angles
            return arc_edge(self.center, self.radius, a0 + lo * (a1 - a0), a0 + hi * (a1 - a0))
        if self.kind == "polynomial":
            return polynomial_edge(
                _poly_affine_compose(self.x_coeffs, lo, hi),
                _poly_affine_compose(self.y_coeffs, lo, hi),
            )
        raise MeshError(f"unknown edge kind {self.kind!r}")

    def reversed(self) -> "CurvedEdge":
        """Same point set traversed in the opposite direction."""
        if self.kind == "line":
            return line_edge(self.end, self.start)
        if self.kind == "circular-arc":
            return arc_edge(self.center, self.radius, self.angles[1], self.angles[0])
        return self.subedge(1.0, 0.0)


def line_edge(p0, p1) -> CurvedEdge:
    return CurvedEdge("line", (float(p0[0]), float(p0[1])), (float(p1[0]), float(p1[1])))


def arc_edge(center, radius, angle0, angle1) -> CurvedEdge:
    e = CurvedEdge(
        "circular-arc",
        (0.0, 0.0),
        (0.0, 0.0),
        center=(float(center[0]), float(center[1])),
        radius=float(radius),
        angles=(float(angle0), float(angle1)),
    )
    p0 = e.at(0.0)
    p1 = e.at(1.0)
    return CurvedEdge(
        "circular-arc",
        (float(p0[0]), float(p0[1])),
        (float(p1[0]), float(p1[1])),
        center=e.center,
        radius=e.radius,
        angles=e.angles,
    )


def polynomial_edge(x_coeffs, y_coeffs) -> CurvedEdge:
    xc = tuple(float(c) for c in x_coeffs)
    yc = tuple(float(c) for c in y_coeffs)
    e = CurvedEdge("polynomial", (0.0, 0.0), (0.0, 0.0), x_coeffs=xc, y_coeffs=yc)
    p0 = e.at(0.0)
    p1 = e.at(1.0)
    return CurvedEdge(
        "polynomial",
        (float(p0[0]), float(p0[1])),
        (float(p1[0]), float(p1[1])),
        x_coeffs=xc,
        y_coeffs=yc,
    )


def _poly_affine_compose(coeffs, lo, hi):
    """Coefficients of p(lo + (hi-lo) s) given ascending coefficients of p."""
    coeffs = np.asarray(coeffs, dtype=float)
    r = np.array([coeffs[-1]])
    for k in range(len(coeffs) - 2, -1, -1):
        r = npoly.polyadd(npoly.polymul(r, [lo, hi - lo]), [coeffs[k]])
    return r


def _monomial_interpolate(s, f):
    """Ascending monomial coefficients of the interpolant through (s_i, f_i).

    Newton divided differences expanded by Horner; accurate to machine
    precision for the analytic edge blends used by the mesh refiner.
    """
    s = np.asarray(s, dtype=float)
    c = np.asarray(f, dtype=float).copy()
    m = len(s)
    for k in range(1, m):
        c[k:] = (c[k:] - c[k - 1 : -1]) / (s[k:] - s[:-k])
    a = np.zeros(m)
    a[0] = c[m - 1]
    deg = 0
    for k in range(m - 2, -1, -1):
        upper = a[: deg + 1].copy()
        a[1 : deg + 2] = upper
        a[0] = 0.0
        a[: deg + 1] -= s[k] * upper
        a[0] += c[k]
        deg += 1
    return a


@dataclass(frozen=True)
class Block:
    """Quadrilateral block: edges in (south, east, north, west) order."""

    edges: tuple[CurvedEdge, CurvedEdge, CurvedEdge, CurvedEdge]

    def edge(self, side: str) -> CurvedEdge:
        return self.edges[SIDES.index(side)]


@dataclass(frozen=True)
class Interface:
    """Conforming interface between side_a of block_a and side_b of block_b.

    ``orientation`` is "aligned" when both side parametrizations run in the
    same direction and "reversed" otherwise.
    """

    block_a: int
    side_a: str
    block_b: int
    side_b: str
    orientation: str = "aligned"


@dataclass
class MultiblockMesh:
    blocks: list
    interfaces: list
    boundary_tags: dict = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def tags(self):
        return sorted(set(self.boundary_tags.values()))


def coons_patch(block: Block, xi, eta):
    """Transfinite (Coons) interpolation of the block's four edges.

    Restricted to any boundary of the parameter square it reproduces that
    edge's parametrization. Accepts scalars or broadcastable arrays.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(xi < 0.0) or np.any(xi > 1.0) or np.any(eta < 0.0) or np.any(eta > 1.0):
        raise ValueError("parameters must lie in [0,1]")
    s, e, n, w = block.edges
    c_sw = np.asarray(s.at(0.0))
    c_se = np.asarray(s.at(1.0))
    c_nw = np.asarray(n.at(0.0))
    c_ne = np.asarray(n.at(1.0))
    xi_, eta_ = np.broadcast_arrays(xi, eta)
    xi_b = xi_[..., None]
    eta_b = eta_[..., None]
    p = (
        (1.0 - eta_b) * s.at(xi_)
        + eta_b * n.at(xi_)
        + (1.0 - xi_b) * w.at(eta_)
        + xi_b * e.at(eta_)
        - (
            (1.0 - xi_b) * (1.0 - eta_b) * c_sw
            + xi_b * (1.0 - eta_b) * c_se
            + (1.0 - xi_b) * eta_b * c_nw
            + xi_b * eta_b * c_ne
        )
    )
    return p


def block_grid(block: Block, op) -> np.ndarray:
    """Tensor grid of the operator's nodes mapped into the block.

    Returns an (n^2, 2) array in xi-major order: global index i*n + j holds
    the point (xi_i, eta_j), matching the Kronecker ordering of the 2D
    operators.
    """
    xi, eta = np.meshgrid(op.nodes, op.nodes, indexing="ij")
    pts = coons_patch(block, xi.ravel(), eta.ravel())
    return pts.reshape(-1, 2)


# ---------------------------------------------------------------------------
# block/mesh builders


def unit_square_block() -> Block:
    return rect_block(0.0, 0.0, 1.0, 1.0)


def rect_block(x0, y0, x1, y1) -> Block:
    return Block(
        (
            line_edge((x0, y0), (x1, y0)),
            line_edge((x1, y0), (x1, y1)),
            line_edge((x0, y1), (x1, y1)),
            line_edge((x0, y0), (x0, y1)),
        )
    )


def bilinear_block(c_sw, c_se, c_nw, c_ne) -> Block:
    """Straight-edged quadrilateral (bilinear mapping)."""
    return Block(
        (
            line_edge(c_sw, c_se),
            line_edge(c_se, c_ne),
            line_edge(c_nw, c_ne),
            line_edge(c_sw, c_nw),
        )
    )


def quarter_annulus_block(r_inner=1.0, r_outer=2.0) -> Block:
    """Quarter annulus in the first quadrant; south side is the inner arc.

    The angle runs from pi/2 down to 0 as xi grows so the mapping is
    orientation preserving (positive Jacobian).
    """
    half_pi = 0.5 * np.pi
    south = arc_edge((0.0, 0.0), r_inner, half_pi, 0.0)
    north = arc_edge((0.0, 0.0), r_outer, half_pi, 0.0)
    west = line_edge((0.0, r_inner), (0.0, r_outer))
    east = line_edge((r_inner, 0.0), (r_outer, 0.0))
    return Block((south, east, north, west))


def single_square_mesh(tags=("south", "east", "north", "west")) -> MultiblockMesh:
    blk = unit_square_block()
    boundary = {(0, side): tag for side, tag in zip(SIDES, tags)}
    return MultiblockMesh([blk], [], boundary)


def two_block_square_mesh() -> MultiblockMesh:
    """Unit square split at x = 1/2 into two blocks with one interface."""
    shared = line_edge((0.5, 0.0), (0.5, 1.0))
    left = Block(
        (
            line_edge((0.0, 0.0), (0.5, 0.0)),
            shared,
            line_edge((0.0, 1.0), (0.5, 1.0)),
            line_edge((0.0, 0.0), (0.0, 1.0)),
        )
    )
    right = Block(
        (
            line_edge((0.5, 0.0), (1.0, 0.0)),
            line_edge((1.0, 0.0), (1.0, 1.0)),
            line_edge((0.5, 1.0), (1.0, 1.0)),
            shared,
        )
    )
    interfaces = [Interface(0, "e", 1, "w", "aligned")]
    boundary = {
        (0, "s"): "south",
        (1, "s"): "south",
        (0, "n"): "north",
        (1, "n"): "north",
        (0, "w"): "west",
        (1, "e"): "east",
    }
    return MultiblockMesh([left, right], interfaces, boundary)


def four_block_square_mesh() -> MultiblockMesh:
    """2x2 block decomposition of the unit square."""
    return refine_mesh(single_square_mesh())


def generate_circle_mesh(refinement: int = 0, tag: str = "outer") -> MultiblockMesh:
    """Unit disc: central square plus four ring blocks, quadrisected.

    The base mesh has 5 blocks and 8 interfaces. Each refinement level
    splits every block in four; all exterior (circular-arc) sides carry the
    given boundary tag.
    """
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    g = 0.5
    c45 = np.sqrt(2.0) / 2.0
    sw, se, ne, nw = (-g, -g), (g, -g), (g, g), (-g, g)
    q1, q2, q3, q4 = (c45, c45), (-c45, c45), (-c45, -c45), (c45, -c45)

    c_s = line_edge(sw, se)
    c_e = line_edge(se, ne)
    c_n = line_edge(nw, ne)
    c_w = line_edge(sw, nw)
    center = Block((c_s, c_e, c_n, c_w))

    spoke_q1 = line_edge(ne, q1)
    spoke_q2 = line_edge(nw, q2)
    spoke_q3 = line_edge(sw, q3)
    spoke_q4 = line_edge(se, q4)
    quarter = 0.25 * np.pi
    ring_e = Block((spoke_q4, arc_edge((0, 0), 1.0, -quarter, quarter), spoke_q1, c_e))
    ring_n = Block((spoke_q1, arc_edge((0, 0), 1.0, quarter, 3 * quarter), spoke_q2, line_edge(ne, nw)))
    ring_w = Block((spoke_q2, arc_edge((0, 0), 1.0, 3 * quarter, 5 * quarter), spoke_q3, line_edge(nw, sw)))
    ring_s = Block((spoke_q3, arc_edge((0, 0), 1.0, 5 * quarter, 7 * quarter), spoke_q4, line_edge(sw, se)))

    interfaces = [
        Interface(0, "e", 1, "w", "aligned"),
        Interface(0, "n", 2, "w", "reversed"),
        Interface(0, "w", 3, "w", "reversed"),
        Interface(0, "s", 4, "w", "aligned"),
        Interface(1, "n", 2, "s", "aligned"),
        Interface(2, "n", 3, "s", "aligned"),
        Interface(3, "n", 4, "s", "aligned"),
        Interface(4, "n", 1, "s", "aligned"),
    ]
    boundary = {(k, "e"): tag for k in (1, 2, 3, 4)}
    mesh = MultiblockMesh([center, ring_e, ring_n, ring_w, ring_s], interfaces, boundary)
    for _ in range(refinement):
        mesh = refine_mesh(mesh)
    return mesh


# ---------------------------------------------------------------------------
# refinement

_CHILD_OF_SIDE = {
    # (side, t) -> local child index, with children (i,j) numbered 2*i + j
    "s": (0, 2),
    "n": (1, 3),
    "w": (0, 1),
    "e": (2, 3),
}


def _parameter_curve(block: Block, axis: int, c: float) -> CurvedEdge:
    """Coons-patch parameter line xi = c (axis 0) or eta = c (axis 1).

    Straight and polynomial transverse edges combine exactly; an arc on a
    transverse side forces a polynomial fit of the analytic blend.
    """
    s, e, n, w = block.edges
    c_sw = s.at(0.0)
    c_se = s.at(1.0)
    c_nw = n.at(0.0)
    c_ne = n.at(1.0)
    if axis == 0:
        trans_a, trans_b = w, e  # parametrized by eta
        lo_pt = s.at(c) - ((1.0 - c) * c_sw + c * c_se)
        hi_pt = n.at(c) - ((1.0 - c) * c_nw + c * c_ne)
    else:
        trans_a, trans_b = s, n  # parametrized by xi
        lo_pt = w.at(c) - ((1.0 - c) * c_sw + c * c_nw)
        hi_pt = e.at(c) - ((1.0 - c) * c_se + c * c_ne)

    if trans_a.kind == "line" and trans_b.kind == "line":
        if axis == 0:
            return line_edge(coons_patch(block, c, 0.0), coons_patch(block, c, 1.0))
        return line_edge(coons_patch(block, 0.0, c), coons_patch(block, 1.0, c))

    if trans_a.kind != "circular-arc" and trans_b.kind != "circular-arc":
        ax, ay = _edge_poly_coeffs(trans_a)
        bx, by = _edge_poly_coeffs(trans_b)
        xc = npoly.polyadd((1.0 - c) * ax, c * bx)
        yc = npoly.polyadd((1.0 - c) * ay, c * by)
        xc = npoly.polyadd(xc, [lo_pt[0], hi_pt[0] - lo_pt[0]])
        yc = npoly.polyadd(yc, [lo_pt[1], hi_pt[1] - lo_pt[1]])
        return polynomial_edge(xc, yc)

    # analytic blend with an arc: interpolate at Chebyshev-Lobatto samples
    k = np.arange(_FIT_DEGREE + 1)
    t = 0.5 * (1.0 - np.cos(np.pi * k / _FIT_DEGREE))
    pts = coons_patch(block, c, t) if axis == 0 else coons_patch(block, t, c)
    xc = _monomial_interpolate(t, pts[:, 0])
    yc = _monomial_interpolate(t, pts[:, 1])
    # pin endpoints exactly onto the sampled curve
    for coeffs, vals in ((xc, pts[:, 0]), (yc, pts[:, 1])):
        d0 = vals[0] - coeffs[0]
        d1 = vals[-1] - npoly.polyval(1.0, coeffs)
        coeffs[0] += d0
        coeffs[1] += d1 - d0
    return polynomial_edge(xc, yc)


def _edge_poly_coeffs(edge: CurvedEdge):
    if edge.kind == "line":
        x0, y0 = edge.start
        x1, y1 = edge.end
        return np.array([x0, x1 - x0]), np.array([y0, y1 - y0])
    if edge.kind == "polynomial":
        return np.asarray(edge.x_coeffs, float), np.asarray(edge.y_coeffs, float)
    raise MeshError("arc edges have no polynomial coefficients")


def refine_mesh(mesh: MultiblockMesh) -> MultiblockMesh:
    """Quadrisect every block; interfaces and tags carry over to children.

    Block k yields children 4k + 2*i + j for parameter cell (i, j). The two
    children touching any dividing curve slice the same curve, so new
    interfaces are conforming by construction.
    """
    blocks = []
    interfaces = []
    for k, blk in enumerate(mesh.blocks):
        s, e, n, w = blk.edges
        mid_xi = _parameter_curve(blk, 0, 0.5)  # xi = 1/2, parametrized by eta
        mid_eta = _parameter_curve(blk, 1, 0.5)  # eta = 1/2, parametrized by xi
        for i in (0, 1):
            for j in (0, 1):
                child_s = (s if j == 0 else mid_eta).subedge(0.5 * i, 0.5 * (i + 1))
                child_n = (n if j == 1 else mid_eta).subedge(0.5 * i, 0.5 * (i + 1))
                child_w = (w if i == 0 else mid_xi).subedge(0.5 * j, 0.5 * (j + 1))
                child_e = (e if i == 1 else mid_xi).subedge(0.5 * j, 0.5 * (j + 1))
                blocks.append(Block((child_s, child_e, child_n, child_w)))
        base = 4 * k
        interfaces += [
            Interface(base + 0, "e", base + 2, "w", "aligned"),
            Interface(base + 1, "e", base + 3, "w", "aligned"),
            Interface(base + 0, "n", base + 1, "s", "aligned"),
            Interface(base + 2, "n", base + 3, "s", "aligned"),
        ]
    for itf in mesh.interfaces:
        for t in (0, 1):
            t_b = t if itf.orientation == "aligned" else 1 - t
            child_a = 4 * itf.block_a + _CHILD_OF_SIDE[itf.side_a][t]
            child_b = 4 * itf.block_b + _CHILD_OF_SIDE[itf.side_b][t_b]
            interfaces.append(Interface(child_a, itf.side_a, child_b, itf.side_b, itf.orientation))
    boundary = {}
    for (k, side), tag in mesh.boundary_tags.items():
        for t in (0, 1):
            boundary[(4 * k + _CHILD_OF_SIDE[side][t], side)] = tag
    return MultiblockMesh(blocks, interfaces, boundary)


# ---------------------------------------------------------------------------
# file format

_FORMAT_VERSION = 1


def _edge_to_dict(edge: CurvedEdge) -> dict:
    out = {"kind": edge.kind, "start": list(edge.start), "end": list(edge.end)}
    if edge.kind == "circular-arc":
        out["center"] = list(edge.center)
        out["radius"] = edge.radius
        out["angles"] = list(edge.angles)
    elif edge.kind == "polynomial":
        out["x_coeffs"] = list(edge.x_coeffs)
        out["y_coeffs"] = list(edge.y_coeffs)
    return out


def _edge_from_dict(d: dict, where: str) -> CurvedEdge:
    try:
        kind = d["kind"]
        if kind == "line":
            edge = line_edge(d["start"], d["end"])
        elif kind == "circular-arc":
            edge = arc_edge(d["center"], d["radius"], d["angles"][0], d["angles"][1])
        elif kind == "polynomial":
            edge = polynomial_edge(d["x_coeffs"], d["y_coeffs"])
        else:
            raise MeshError(f"{where}: unknown edge kind {kind!r}")
    except (KeyError, TypeError, IndexError) as exc:
        raise MeshError(f"{where}: malformed edge object ({exc})") from exc
    for name, nominal in (("start", d["start"]), ("end", d["end"])):
        actual = edge.at(0.0 if name == "start" else 1.0)
        if np.max(np.abs(actual - np.asarray(nominal, float))) > _ENDPOINT_TOL:
            raise MeshError(f"{where}: stored {name} {nominal} does not match evaluation {actual.tolist()}")
    return edge


def mesh_to_dict(mesh: MultiblockMesh) -> dict:
    return {
        "version": _FORMAT_VERSION,
        "blocks": [{"edges": [_edge_to_dict(e) for e in blk.edges]} for blk in mesh.blocks],
        "interfaces": [
            {
                "a": [itf.block_a, itf.side_a],
                "b": [itf.block_b, itf.side_b],
                "orientation": itf.orientation,
            }
            for itf in mesh.interfaces
        ],
        "boundaries": [
            {"block": k, "side": side, "tag": tag}
            for (k, side), tag in sorted(mesh.boundary_tags.items())
        ],
    }


def mesh_from_dict(data: dict) -> MultiblockMesh:
    if not isinstance(data, dict) or data.get("version") != _FORMAT_VERSION:
        raise MeshError(f"unsupported mesh format version {data.get('version')!r}")
    try:
        blocks = []
        for k, b in enumerate(data["blocks"]):
            edges = b["edges"]
            if len(edges) != 4:
                raise MeshError(f"block {k}: expected 4 edges, got {len(edges)}")
            blocks.append(Block(tuple(_edge_from_dict(e, f"block {k} edge {SIDES[i]}") for i, e in enumerate(edges))))
        interfaces = []
        for d in data.get("interfaces", []):
            itf = Interface(int(d["a"][0]), str(d["a"][1]), int(d["b"][0]), str(d["b"][1]), d.get("orientation", "aligned"))
            interfaces.append(itf)
        boundary = {}
        for d in data.get("boundaries", []):
            boundary[(int(d["block"]), str(d["side"]))] = str(d["tag"])
    except (KeyError, TypeError, IndexError) as exc:
        raise MeshError(f"malformed mesh file ({exc})") from exc
    mesh = MultiblockMesh(blocks, interfaces, boundary)
    _check_references(mesh)
    return mesh


def _check_references(mesh: MultiblockMesh):
    nb = len(mesh.blocks)
    for itf in mesh.interfaces:
        for blk, side in ((itf.block_a, itf.side_a), (itf.block_b, itf.side_b)):
            if not (0 <= blk < nb) or side not in SIDES:
                raise MeshError(f"interface references unknown side ({blk}, {side!r})")
        if itf.orientation not in ("aligned", "reversed"):
            raise MeshError(f"interface ({itf.block_a},{itf.side_a})-({itf.block_b},{itf.side_b}): bad orientation {itf.orientation!r}")
    for (blk, side) in mesh.boundary_tags:
        if not (0 <= blk < nb) or side not in SIDES:
            raise MeshError(f"boundary tag references unknown side ({blk}, {side!r})")


def load_mesh(path) -> MultiblockMesh:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshError(f"{path}: not valid JSON ({exc})") from exc
    return mesh_from_dict(data)


def save_mesh(mesh: MultiblockMesh, path):
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# validation


def _side_usage(mesh: MultiblockMesh):
    usage = {}
    for idx, itf in enumerate(mesh.interfaces):
        for blk, side in ((itf.block_a, itf.side_a), (itf.block_b, itf.side_b)):
            usage.setdefault((blk, side), []).append(f"interface {idx}")
    for key, tag in mesh.boundary_tags.items():
        usage.setdefault(key, []).append(f"tag {tag!r}")
    return usage


def validate_mesh(mesh: MultiblockMesh, op=None) -> list[str]:
    """Check mesh invariants; returns a list of violation messages."""
    violations = []
    samples = np.linspace(0.0, 1.0, 33)
    for k, blk in enumerate(mesh.blocks):
        for side, edge in zip(SIDES, blk.edges):
            p0 = edge.at(0.0)
            p1 = edge.at(1.0)
            if max(np.max(np.abs(p0 - edge.start)), np.max(np.abs(p1 - edge.end))) > _ENDPOINT_TOL:
                violations.append(f"block {k} side {side}: endpoints do not match parametrization")
            pts = edge.at(samples)
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            if np.any(seg <= 0.0):
                violations.append(f"block {k} side {side}: parametrization not injective (stalls at a sample)")
        s, e, n, w = blk.edges
        corners = [
            (s.at(0.0), w.at(0.0), "sw"),
            (s.at(1.0), e.at(0.0), "se"),
            (n.at(1.0), e.at(1.0), "ne"),
            (n.at(0.0), w.at(1.0), "nw"),
        ]
        for pa, pb, name in corners:
            if np.max(np.abs(pa - pb)) > _ENDPOINT_TOL:
                violations.append(f"block {k}: corner {name} not closed (gap {np.max(np.abs(pa - pb)):.3e})")

    usage = _side_usage(mesh)
    for key, uses in usage.items():
        if len(uses) > 1:
            violations.append(f"block {key[0]} side {key[1]}: used more than once ({', '.join(uses)})")
    for k in range(len(mesh.blocks)):
        for side in SIDES:
            if (k, side) not in usage:
                violations.append(f"block {k} side {side}: neither on an interface nor tagged")

    t = np.asarray(op.nodes) if op is not None else samples
    for idx, itf in enumerate(mesh.interfaces):
        ea = mesh.blocks[itf.block_a].edge(itf.side_a)
        eb = mesh.blocks[itf.block_b].edge(itf.side_b)
        tb = t if itf.orientation == "aligned" else 1.0 - t
        gap = np.max(np.linalg.norm(ea.at(t) - eb.at(tb), axis=-1))
        if gap > _CONFORMITY_TOL:
            violations.append(
                f"interface {idx} ({itf.block_a},{itf.side_a})-({itf.block_b},{itf.side_b}): "
                f"geometric mismatch {gap:.3e}"
            )
    return violations
