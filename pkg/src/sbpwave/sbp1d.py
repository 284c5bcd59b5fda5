"""One-dimensional Gauss-Lobatto SBP operators on the reference interval [0,1].

A diagonal-norm first-derivative SBP operator consists of quadrature
weights H and a differentiation matrix D1 on n = p+1 Gauss-Lobatto nodes
such that

    H D1 + D1^T H = -e_l e_l^T + e_r e_r^T,

the discrete analogue of integration by parts. On Gauss-Lobatto points the
identity holds to machine precision because the quadrature is exact to
degree 2n-3 while D1 differentiates the degree-(n-1) nodal interpolant.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SbpOperator1D",
    "lobatto_nodes_weights",
    "derivative_matrix",
    "make_operator",
    "sbp_residual",
    "second_derivative_variable",
]

_NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class SbpOperator1D:
    """First-derivative SBP operator on [0,1].

    Attributes:
        p: polynomial exactness order (D1 is exact on degrees <= p).
        n: number of nodes (p + 1).
        nodes: ascending Gauss-Lobatto nodes, nodes[0] = 0, nodes[-1] = 1.
        weights: positive quadrature weights (diagonal of the norm H).
        d1: dense n-by-n differentiation matrix.
    """

    p: int
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    d1: np.ndarray

    @property
    def e_l(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[0] = 1.0
        return e

    @property
    def e_r(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[-1] = 1.0
        return e


def lobatto_nodes_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto nodes and weights on [0,1].

    The interior nodes are the roots of P'_{n-1}, found by Newton iteration
    from Chebyshev-Lobatto initial guesses. The quadrature integrates
    monomials of degree <= 2n-3 exactly.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got n={n}")
    x = np.cos(np.pi * np.arange(n) / (n - 1))
    vand = np.zeros((n, n))
    x_prev = x + 1.0
    for _ in range(_NEWTON_MAX_ITER):
        if np.max(np.abs(x - x_prev)) <= 1e-15:
            break
        vand[:, 0] = 1.0
        vand[:, 1] = x
        for k in range(1, n - 1):
            vand[:, k + 1] = ((2 * k + 1) * x * vand[:, k] - k * vand[:, k - 1]) / (k + 1)
        x_prev = x
        x = x_prev - (x * vand[:, n - 1] - vand[:, n - 2]) / (n * vand[:, n - 1])
    else:
        raise RuntimeError(f"Lobatto Newton iteration failed to converge for n={n}")

    weights = 2.0 / ((n - 1) * n * vand[:, n - 1] ** 2)

    # map to [0,1] ascending and symmetrize so mirrored nodes pair exactly:
    # the lower half is stored as 1 - upper, which is exact (Sterbenz) for
    # upper in [1/2, 1], making nodes == 1 - nodes[::-1] hold bitwise
    nodes = (x[::-1] + 1.0) / 2.0
    weights = weights[::-1] / 2.0
    half = n // 2
    upper = 0.5 * (nodes[n - half :] + (1.0 - nodes[:half])[::-1])
    upper[-1] = 1.0
    nodes[n - half :] = upper
    nodes[:half] = (1.0 - upper)[::-1]
    if n % 2:
        nodes[half] = 0.5
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def derivative_matrix(nodes: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the Lagrange interpolant on ``nodes``.

    Row i holds the derivatives of the Lagrange basis functions at node i;
    the diagonal is set by the negative-sum trick so rows annihilate
    constants.
    """
    x = np.asarray(nodes, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("nodes must be a 1D array with at least 2 entries")
    if np.any(np.diff(x) <= 0.0):
        raise ValueError("nodes must be strictly increasing (no duplicates)")
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    wb = 1.0 / dx.prod(axis=1)  # barycentric weights
    d = (wb[None, :] / wb[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def make_operator(p: int) -> SbpOperator1D:
    """Build the order-p Gauss-Lobatto SBP operator (n = p+1 nodes)."""
    if p < 1:
        raise ValueError(f"order must be >= 1, got p={p}")
    n = p + 1
    nodes, weights = lobatto_nodes_weights(n)
    d1 = derivative_matrix(nodes)
    # enforce the exact persymmetry D1[i,j] = -D1[n-1-i,n-1-j] so that
    # mirrored blocks produce bitwise-matching interface operators
    d1 = 0.5 * (d1 - d1[::-1, ::-1])
    nodes.flags.writeable = False
    weights.flags.writeable = False
    d1.flags.writeable = False
    return SbpOperator1D(p=p, n=n, nodes=nodes, weights=weights, d1=d1)


def sbp_residual(op: SbpOperator1D) -> float:
    """Max-norm of H D1 + D1^T H + e_l e_l^T - e_r e_r^T."""
    hd = op.weights[:, None] * op.d1
    res = hd + hd.T
    res[0, 0] += 1.0
    res[-1, -1] -= 1.0
    return float(np.abs(res).max())


def second_derivative_variable(op: SbpOperator1D, b: np.ndarray) -> np.ndarray:
    """Variable-coefficient second derivative D1 diag(b) D1."""
    b = np.asarray(b, dtype=float)
    if b.shape != (op.n,):
        raise ValueError(f"coefficient vector must have length {op.n}, got shape {b.shape}")
    return op.d1 @ (b[:, None] * op.d1)
