"""Global multiblock assembly without duplicated interface unknowns.

Grid points shared by conforming interfaces are merged through a 0/1
embedding matrix E mapping reduced vectors to the stacked per-block
layout. Continuity of the solution is then built into the scheme, and
continuity of the normal derivative is imposed weakly by an interface
penalty added to one designated owner side. The reduced Laplacian

    D_L = H^{-1} E^T H+ Dtilde+ E,    H = E^T H+ E,

satisfies a global discrete Green identity with purely physical boundary
terms, which is the central correctness property this module is tested
against.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .geometry import build_block_operators, side_node_indices
from .mesh import SIDES, MultiblockMesh

__all__ = [
    "InconsistentMeshError",
    "ConfigurationError",
    "EmbeddingOperator",
    "BoundaryStack",
    "GlobalOperators",
    "build_embedding",
    "assemble_interface_sats",
    "assemble_reduced",
    "stack_boundary_operators",
    "build_global_operators",
    "green_residual_global",
    "dump_operator",
]

_MERGE_TOL = 1e-10
_QUADRATURE_MATCH_TOL = 1e-12


class InconsistentMeshError(RuntimeError):
    """Topologically declared duplicates fail the geometric cross-check."""


class ConfigurationError(RuntimeError):
    """Missing or contradictory boundary/solver configuration."""


@dataclass(frozen=True)
class EmbeddingOperator:
    """Sparse 0/1 duplication matrix E with S = E Shat."""

    matrix: sparse.csr_matrix  # N x N_hat
    row_map: np.ndarray  # global index -> reduced index
    representatives: np.ndarray  # reduced index -> smallest global index
    n_full: int
    n_reduced: int

    def prolong(self, u):
        """E u: duplicate reduced values onto the stacked block layout."""
        return np.asarray(u)[..., self.row_map]

    def restrict(self, w):
        """Representative-row restriction; inverse of prolong on continuous
        fields."""
        return np.asarray(w)[..., self.representatives]


def _union(parent, a, b):
    ra, rb = _find(parent, a), _find(parent, b)
    if ra == rb:
        return
    if ra > rb:
        ra, rb = rb, ra
    parent[rb] = ra


def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        parent[a], a = root, parent[a]
    return root


def build_embedding(mesh: MultiblockMesh, grids: list, n: int) -> EmbeddingOperator:
    """Identify duplicate grid points from interface connectivity.

    Duplicates are merged by union-find over the per-side node
    correspondences (corners shared by several interfaces merge
    transitively); the canonical representative of each class is its
    smallest stacked index. Geometry is used only as a cross-check: matched
    nodes farther than 1e-10 apart raise InconsistentMeshError.
    """
    n2 = n * n
    n_full = len(mesh.blocks) * n2
    side_idx = side_node_indices(n)
    coords = np.vstack(grids)
    parent = np.arange(n_full)
    for itf in mesh.interfaces:
        ia = itf.block_a * n2 + side_idx[itf.side_a]
        ib = itf.block_b * n2 + side_idx[itf.side_b]
        if itf.orientation == "reversed":
            ib = ib[::-1]
        gap = np.max(np.linalg.norm(coords[ia] - coords[ib], axis=1))
        if gap > _MERGE_TOL:
            raise InconsistentMeshError(
                f"interface ({itf.block_a},{itf.side_a})-({itf.block_b},{itf.side_b}): "
                f"matched nodes are {gap:.3e} apart"
            )
        for a, b in zip(ia, ib):
            _union(parent, a, b)
    roots = np.array([_find(parent, g) for g in range(n_full)])
    representatives = np.unique(roots)
    row_map = np.searchsorted(representatives, roots)
    matrix = sparse.csr_matrix(
        (np.ones(n_full), (np.arange(n_full), row_map)),
        shape=(n_full, len(representatives)),
    )
    return EmbeddingOperator(
        matrix=matrix,
        row_map=row_map,
        representatives=representatives,
        n_full=n_full,
        n_reduced=len(representatives),
    )


def _side_key(block: int, side: str):
    return (block, SIDES.index(side))


def assemble_interface_sats(mesh: MultiblockMesh, block_ops: list, h_plus: np.ndarray) -> sparse.csr_matrix:
    """Interface-penalized Laplacian Dtilde+ on the non-reduced layout.

    For every interface the lexicographically smaller (block, side) owns the
    penalty  -(H+)^{-1} e_own^T H_own (d_own + d_nb),  with the neighbor
    rows permuted to owner order. Both normal derivatives use their own
    block's outward normal, so the penalized quantity is the jump in the
    normal derivative.
    """
    n = block_ops[0].tensor.n
    n2 = n * n
    n_full = len(mesh.blocks) * n2
    rows, cols, vals = [], [], []
    for itf in mesh.interfaces:
        a = (itf.block_a, itf.side_a)
        b = (itf.block_b, itf.side_b)
        own, nb = (a, b) if _side_key(*a) <= _side_key(*b) else (b, a)
        own_side = block_ops[own[0]].sides[own[1]]
        nb_side = block_ops[nb[0]].sides[nb[1]]
        h_own = own_side.h
        h_nb = nb_side.h if itf.orientation == "aligned" else nb_side.h[::-1]
        mismatch = np.max(np.abs(h_own - h_nb))
        if mismatch > _QUADRATURE_MATCH_TOL * max(1.0, np.max(np.abs(h_own))):
            raise InconsistentMeshError(
                f"interface ({itf.block_a},{itf.side_a})-({itf.block_b},{itf.side_b}): "
                f"boundary quadratures differ by {mismatch:.3e} (non-conforming?)"
            )
        own_rows_global = own[0] * n2 + own_side.nodes
        own_mat = own_side.d.tocoo()
        rows.append(own_rows_global[own_mat.row])
        cols.append(own[0] * n2 + own_mat.col)
        vals.append(h_own[own_mat.row] * own_mat.data)
        nb_mat = nb_side.d.tocoo()
        nb_rows = nb_mat.row if itf.orientation == "aligned" else (n - 1) - nb_mat.row
        rows.append(own_rows_global[nb_rows])
        cols.append(nb[0] * n2 + nb_mat.col)
        vals.append(h_own[nb_rows] * nb_mat.data)
    d_l_plus = sparse.block_diag([bo.d_l for bo in block_ops], format="csr")
    if not rows:
        return d_l_plus
    sat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_full, n_full),
    )
    return (d_l_plus - sparse.diags(1.0 / h_plus) @ sat).tocsr()


def assemble_reduced(emb: EmbeddingOperator, h_plus: np.ndarray, d_l_tilde_plus: sparse.csr_matrix):
    """Reduced inner product and Laplacian:
    H = E^T H+ E (diagonal) and D_L = H^{-1} E^T H+ Dtilde+ E."""
    h_reduced = np.bincount(emb.row_map, weights=h_plus, minlength=emb.n_reduced)
    e = emb.matrix
    d_l_reduced = sparse.diags(1.0 / h_reduced) @ (e.T @ (sparse.diags(h_plus) @ d_l_tilde_plus) @ e)
    return h_reduced, d_l_reduced.tocsr()


@dataclass(frozen=True)
class BoundaryStack:
    """Stacked boundary operators of one tag, acting on reduced vectors."""

    tag: str
    sides: tuple  # ((block, side), ...) in stacking order
    points: np.ndarray  # reduced index of each stacked row
    e: sparse.csr_matrix  # rows x N_hat
    d: sparse.csr_matrix  # rows x N_hat
    h: np.ndarray  # boundary quadrature weights per row


def stack_boundary_operators(mesh: MultiblockMesh, block_ops: list, emb: EmbeddingOperator) -> dict:
    """Per-tag stacks of e, d, H over all tagged sides.

    Rows are ordered by (block, side, node) ascending; e and d are composed
    with the embedding so they act on reduced vectors.
    """
    interface_sides = set()
    for itf in mesh.interfaces:
        interface_sides.add((itf.block_a, itf.side_a))
        interface_sides.add((itf.block_b, itf.side_b))
    exterior = [
        (k, side)
        for k in range(len(mesh.blocks))
        for side in SIDES
        if (k, side) not in interface_sides
    ]
    untagged = [key for key in exterior if key not in mesh.boundary_tags]
    if untagged:
        raise ConfigurationError(f"exterior sides without a boundary tag: {untagged}")

    n2 = block_ops[0].tensor.n ** 2
    by_tag = {}
    for key in sorted(mesh.boundary_tags, key=lambda ks: _side_key(*ks)):
        by_tag.setdefault(mesh.boundary_tags[key], []).append(key)

    out = {}
    e_emb = emb.matrix
    for tag, keys in sorted(by_tag.items()):
        points, e_rows, d_rows, h_rows = [], [], [], []
        for blk, side in keys:
            so = block_ops[blk].sides[side]
            pts = emb.row_map[blk * n2 + so.nodes]
            points.append(pts)
            pad_left = blk * n2
            pad_right = emb.n_full - pad_left - n2
            e_rows.append(_pad_cols(so.e, pad_left, pad_right) @ e_emb)
            d_rows.append(_pad_cols(so.d, pad_left, pad_right) @ e_emb)
            h_rows.append(so.h)
        out[tag] = BoundaryStack(
            tag=tag,
            sides=tuple(keys),
            points=np.concatenate(points),
            e=sparse.vstack(e_rows, format="csr"),
            d=sparse.vstack(d_rows, format="csr"),
            h=np.concatenate(h_rows),
        )
    return out


def _pad_cols(mat: sparse.csr_matrix, left: int, right: int) -> sparse.csr_matrix:
    coo = mat.tocoo()
    return sparse.csr_matrix(
        (coo.data, (coo.row, coo.col + left)), shape=(mat.shape[0], mat.shape[1] + left + right)
    )


@dataclass(frozen=True)
class GlobalOperators:
    """Everything the wave solver needs about the discretized domain."""

    mesh: MultiblockMesh
    op: object
    block_ops: list
    embedding: EmbeddingOperator
    coords: np.ndarray  # reduced grid coordinates (N_hat, 2)
    h_plus: np.ndarray
    d_l_plus: sparse.csr_matrix
    dx_plus: sparse.csr_matrix
    dy_plus: sparse.csr_matrix
    d_l_tilde_plus: sparse.csr_matrix
    h_reduced: np.ndarray
    d_l_reduced: sparse.csr_matrix
    boundary: dict  # tag -> BoundaryStack

    @property
    def n_reduced(self) -> int:
        return self.embedding.n_reduced


def build_global_operators(mesh: MultiblockMesh, op) -> GlobalOperators:
    """Steps 1-5 of the assembly: order the blocks and build E, the
    non-reduced operators, the interface penalties, and the reduced inner
    product and Laplacian."""
    block_ops = [build_block_operators(blk, op, index=k) for k, blk in enumerate(mesh.blocks)]
    grids = [np.column_stack([bo.x, bo.y]) for bo in block_ops]
    emb = build_embedding(mesh, grids, op.n)
    h_plus = np.concatenate([bo.h for bo in block_ops])
    d_l_tilde_plus = assemble_interface_sats(mesh, block_ops, h_plus)
    h_reduced, d_l_reduced = assemble_reduced(emb, h_plus, d_l_tilde_plus)
    boundary = stack_boundary_operators(mesh, block_ops, emb)
    coords = np.vstack(grids)[emb.representatives]
    return GlobalOperators(
        mesh=mesh,
        op=op,
        block_ops=block_ops,
        embedding=emb,
        coords=coords,
        h_plus=h_plus,
        d_l_plus=sparse.block_diag([bo.d_l for bo in block_ops], format="csr"),
        dx_plus=sparse.block_diag([bo.dx for bo in block_ops], format="csr"),
        dy_plus=sparse.block_diag([bo.dy for bo in block_ops], format="csr"),
        d_l_tilde_plus=d_l_tilde_plus,
        h_reduced=h_reduced,
        d_l_reduced=d_l_reduced,
        boundary=boundary,
    )


def green_residual_global(gops: GlobalOperators, u, v) -> float:
    """Relative residual of the reduced (global) Green identity."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    eu = gops.embedding.prolong(u)
    ev = gops.embedding.prolong(v)
    t_lap = u @ (gops.h_reduced * (gops.d_l_reduced @ v))
    t_dx = (gops.dx_plus @ eu) @ (gops.h_plus * (gops.dx_plus @ ev))
    t_dy = (gops.dy_plus @ eu) @ (gops.h_plus * (gops.dy_plus @ ev))
    t_bnd = 0.0
    for stack in gops.boundary.values():
        t_bnd += (stack.e @ u) @ (stack.h * (stack.d @ v))
    scale = 1.0 + max(abs(t_lap), abs(t_dx), abs(t_dy), abs(t_bnd))
    return abs(t_lap + t_dx + t_dy - t_bnd) / scale


def dump_operator(matrix, path):
    """Write a sparse matrix as coordinate-format text: row col value."""
    coo = sparse.coo_matrix(matrix)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.16e}\n")
