"""Semi-discretization and time integration of the acoustic wave equation.

Dirichlet conditions are imposed strongly by a projection (which for unit
selector constraints reduces to zeroing the constrained unknowns), Neumann
and first-order outflow conditions weakly by SAT penalties:

    v_tt = A v + B v_t + F(t),
    A = c^2 P (D_L + SAT_neumann + SAT_outflow) P,
    B = c P (-H^{-1} e3^T H3 e3) P,
    F(t) = P d_s f(t),

with a grid-point Dirac source d_s and a Gaussian pulse f. The operator A
is self-adjoint and negative semidefinite in the reduced inner product, so
the discrete energy

    ||v_t||_H^2 + c^2 ||Dx+ E P v||_{H+}^2 + c^2 ||Dy+ E P v||_{H+}^2

is non-increasing for the homogeneous problem. Time stepping is classical
RK4 with the step chosen as a fraction of the imaginary-axis stability
limit 2*sqrt(2)/sqrt(rho(-A)).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .assembly import ConfigurationError, GlobalOperators

__all__ = [
    "DivergenceError",
    "WaveProblem",
    "SemiDiscreteSystem",
    "WaveState",
    "BOUNDARY_CONDITIONS",
    "forcing",
    "dirac_vector",
    "build_projection",
    "build_system",
    "stable_dt",
    "rk4_step",
    "simulate",
    "discrete_energy",
    "l2_error",
    "convergence_rate",
]

BOUNDARY_CONDITIONS = ("dirichlet", "neumann", "outflow")

_SOURCE_TOL = 1e-10


class DivergenceError(RuntimeError):
    """The time integration produced non-finite values."""


@dataclass(frozen=True)
class WaveProblem:
    """Acoustic wave problem description.

    ``boundary_conditions`` maps every mesh boundary tag to one of
    "dirichlet", "neumann", "outflow". The source sits at a reduced grid
    point and emits a normalized Gaussian pulse of width ``sigma`` centered
    at ``t_source``, scaled by ``amplitude``.
    """

    c: float
    boundary_conditions: dict
    source_xy: tuple = (0.0, 0.0)
    sigma: float = 0.04
    t_source: float = 0.3
    t_end: float = 0.8
    cfl_fraction: float = 0.2
    amplitude: float = 1.0


@dataclass(frozen=True)
class SemiDiscreteSystem:
    problem: WaveProblem
    gops: GlobalOperators
    a: sparse.csr_matrix
    b: sparse.csr_matrix | None  # None when no outflow boundary is present
    projection: sparse.csr_matrix
    mask: np.ndarray  # 1.0 on free points, 0.0 on Dirichlet points
    dirichlet_points: np.ndarray
    d_s: np.ndarray
    f0: np.ndarray  # P d_s
    source_index: int

    @property
    def h_reduced(self) -> np.ndarray:
        return self.gops.h_reduced

    @property
    def n(self) -> int:
        return self.gops.n_reduced


@dataclass
class WaveState:
    v: np.ndarray
    v_t: np.ndarray
    t: float


def forcing(t, sigma, t_source):
    """Gaussian pulse 1/(sigma sqrt(2 pi)) exp(-(t - t_source)^2/(2 sigma^2))."""
    arg = (t - t_source) / sigma
    return math.exp(-0.5 * arg * arg) / (sigma * math.sqrt(2.0 * math.pi))


def dirac_vector(source_xy, coords, h_reduced) -> tuple[np.ndarray, int]:
    """Grid Dirac: one nonzero entry 1/H_ii at the source grid point.

    The source must coincide with a reduced grid point; otherwise the
    nearest grid point is reported.
    """
    coords = np.asarray(coords, float)
    src = np.asarray(source_xy, float)
    dist = np.linalg.norm(coords - src, axis=1)
    i = int(np.argmin(dist))
    if dist[i] > _SOURCE_TOL:
        raise ConfigurationError(
            f"source {tuple(src)} does not coincide with a grid point; "
            f"nearest is ({coords[i, 0]:.12g}, {coords[i, 1]:.12g}) at distance {dist[i]:.3e}"
        )
    d_s = np.zeros(len(coords))
    d_s[i] = 1.0 / h_reduced[i]
    return d_s, i


def build_projection(dirichlet_points, n: int) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Projection P = I - H^{-1} L^T (L H^{-1} L^T)^{-1} L for L made of
    deduplicated unit selector rows.

    With disjoint unit rows the formula collapses, independently of H, to
    the diagonal matrix that zeroes the Dirichlet unknowns: P^2 = P and
    L P = 0 hold exactly.
    """
    mask = np.ones(n)
    pts = np.unique(np.asarray(dirichlet_points, dtype=int))
    mask[pts] = 0.0
    return sparse.diags(mask).tocsr(), mask


def build_system(gops: GlobalOperators, problem: WaveProblem) -> SemiDiscreteSystem:
    """Assemble A, B, P and the source vector for the given problem."""
    if problem.c <= 0.0:
        raise ValueError(f"wave speed must be positive, got c={problem.c}")
    if problem.sigma <= 0.0:
        raise ValueError(f"pulse width must be positive, got sigma={problem.sigma}")
    bcs = dict(problem.boundary_conditions)
    for tag in gops.boundary:
        if tag not in bcs:
            raise ConfigurationError(f"boundary tag {tag!r} has no assigned boundary condition")
        if bcs[tag] not in BOUNDARY_CONDITIONS:
            raise ConfigurationError(f"unknown boundary condition {bcs[tag]!r} for tag {tag!r}")

    n = gops.n_reduced
    dirichlet_points = np.unique(
        np.concatenate(
            [gops.boundary[t].points for t in gops.boundary if bcs[t] == "dirichlet"]
            or [np.array([], dtype=int)]
        )
    ).astype(int)
    projection, mask = build_projection(dirichlet_points, n)
    in_dirichlet = np.zeros(n, dtype=bool)
    in_dirichlet[dirichlet_points] = True

    inv_h = sparse.diags(1.0 / gops.h_reduced)
    sat_a = None
    sat_b = None
    for tag, stack in gops.boundary.items():
        if bcs[tag] == "dirichlet":
            continue
        # points on both a Dirichlet and a SAT side stay with the projection
        keep = np.flatnonzero(~in_dirichlet[stack.points])
        if keep.size == 0:
            continue
        e = stack.e[keep]
        d = stack.d[keep]
        h = sparse.diags(stack.h[keep])
        term_a = inv_h @ (e.T @ h @ d)
        sat_a = term_a if sat_a is None else sat_a + term_a
        if bcs[tag] == "outflow":
            term_b = inv_h @ (e.T @ h @ e)
            sat_b = term_b if sat_b is None else sat_b + term_b

    core = gops.d_l_reduced if sat_a is None else (gops.d_l_reduced - sat_a).tocsr()
    a = (problem.c**2) * (projection @ core @ projection)
    b = None if sat_b is None else (-problem.c) * (projection @ sat_b @ projection)

    d_s, source_index = dirac_vector(problem.source_xy, gops.coords, gops.h_reduced)
    return SemiDiscreteSystem(
        problem=problem,
        gops=gops,
        a=a.tocsr(),
        b=None if b is None else b.tocsr(),
        projection=projection,
        mask=mask,
        dirichlet_points=dirichlet_points,
        d_s=d_s,
        f0=mask * d_s,
        source_index=source_index,
    )


def stable_dt(system: SemiDiscreteSystem, cfl_fraction=None, seed=0, tol=1e-3, max_iter=500) -> float:
    """Time step: cfl_fraction times the RK4 imaginary-axis limit.

    The spectral radius of -A is estimated by power iteration (fixed seed,
    relative tolerance ``tol``); on stagnation the Gershgorin row-sum bound
    is used instead, which is conservative.
    """
    theta = system.problem.cfl_fraction if cfl_fraction is None else cfl_fraction
    if theta <= 0.0:
        raise ValueError(f"CFL fraction must be positive, got {theta}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(system.n)
    x /= np.linalg.norm(x)
    rho = 0.0
    converged = False
    for _ in range(max_iter):
        y = -(system.a @ x)
        rho_new = float(np.linalg.norm(y))
        if rho_new == 0.0:
            break
        x = y / rho_new
        if abs(rho_new - rho) <= tol * rho_new:
            rho = rho_new
            converged = True
            break
        rho = rho_new
    if not converged or rho == 0.0:
        rho = float(np.max(np.abs(system.a).sum(axis=1)))
    if rho == 0.0:
        raise ValueError("system has zero spectral radius; no CFL limit")
    return theta * 2.0 * math.sqrt(2.0) / math.sqrt(rho)


def _acceleration(system: SemiDiscreteSystem, t, v, v_t):
    acc = system.a @ v
    if system.b is not None:
        acc = acc + system.b @ v_t
    if system.problem.amplitude != 0.0:
        acc = acc + (system.problem.amplitude * forcing(t, system.problem.sigma, system.problem.t_source)) * system.f0
    return acc


def rk4_step(system: SemiDiscreteSystem, state: WaveState, dt, step=None) -> WaveState:
    """One classical RK4 step of the first-order form w' = [v_t; A v + B v_t + F]."""
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got dt={dt}")
    t, v, v_t = state.t, state.v, state.v_t
    half = 0.5 * dt
    k1v = v_t
    k1a = _acceleration(system, t, v, v_t)
    k2v = v_t + half * k1a
    k2a = _acceleration(system, t + half, v + half * k1v, k2v)
    k3v = v_t + half * k2a
    k3a = _acceleration(system, t + half, v + half * k2v, k3v)
    k4v = v_t + dt * k3a
    k4a = _acceleration(system, t + dt, v + dt * k3v, k4v)
    sixth = dt / 6.0
    v_new = v + sixth * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    vt_new = v_t + sixth * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(vt_new))):
        where = f" at step {step}" if step is not None else ""
        raise DivergenceError(f"non-finite solution{where}, t={t + dt:.6g}")
    return WaveState(v=v_new, v_t=vt_new, t=t + dt)


def simulate(system: SemiDiscreteSystem, t_end=None, dt=None, initial_state=None, callback=None):
    """Integrate from t=0 to t_end; the step is shrunk to land on t_end.

    ``callback(step, state)`` is invoked for the initial state and after
    every step. Returns (final state, dt used, number of steps).
    """
    t_end = system.problem.t_end if t_end is None else t_end
    if dt is None:
        dt = stable_dt(system)
    n_steps = max(1, math.ceil(t_end / dt - 1e-12))
    dt = t_end / n_steps
    state = initial_state
    if state is None:
        zeros = np.zeros(system.n)
        state = WaveState(v=zeros.copy(), v_t=zeros.copy(), t=0.0)
    if callback is not None:
        callback(0, state)
    for i in range(1, n_steps + 1):
        state = rk4_step(system, state, dt, step=i)
        if callback is not None:
            callback(i, state)
    return state, dt, n_steps


def discrete_energy(state: WaveState, system: SemiDiscreteSystem, gops: GlobalOperators | None = None) -> float:
    """||v_t||_H^2 + c^2 (||Dx+ E P v||_{H+}^2 + ||Dy+ E P v||_{H+}^2)."""
    gops = system.gops if gops is None else gops
    kinetic = state.v_t @ (gops.h_reduced * state.v_t)
    ev = gops.embedding.prolong(system.mask * state.v)
    gx = gops.dx_plus @ ev
    gy = gops.dy_plus @ ev
    c2 = system.problem.c**2
    return float(kinetic + c2 * (gx @ (gops.h_plus * gx) + gy @ (gops.h_plus * gy)))


def l2_error(v, reference, h_reduced, exclude=None) -> float:
    """Quadrature-weighted L2 distance, skipping excluded/flagged points."""
    v = np.asarray(v, float)
    reference = np.asarray(reference, float)
    valid = np.isfinite(reference)
    if exclude is not None:
        valid = valid.copy()
        valid[np.asarray(exclude, dtype=int)] = False
    diff = v[valid] - reference[valid]
    return float(np.sqrt(diff @ (np.asarray(h_reduced)[valid] * diff)))


def convergence_rate(e1, n1, e2, n2) -> float:
    """q = log(e1/e2) / log(sqrt(n2/n1)); NaN when undefined."""
    if e1 <= 0.0 or e2 <= 0.0 or n1 == n2:
        return float("nan")
    return math.log(e1 / e2) / math.log(math.sqrt(n2 / n1))
