import dataclasses
import math

import numpy as np
import pytest
from scipy import sparse

from sbpwave.assembly import ConfigurationError, build_global_operators
from sbpwave.mesh import generate_circle_mesh, single_square_mesh, two_block_square_mesh
from sbpwave.sbp1d import make_operator
from sbpwave.wave import (
    DivergenceError,
    WaveProblem,
    WaveState,
    build_projection,
    build_system,
    convergence_rate,
    dirac_vector,
    discrete_energy,
    forcing,
    l2_error,
    rk4_step,
    simulate,
    stable_dt,
)

ALL_SQUARE_TAGS = ("south", "east", "north", "west")


def _square_problem(**bcs):
    conditions = {tag: bcs.get(tag, "neumann") for tag in ALL_SQUARE_TAGS}
    return WaveProblem(c=1.0, boundary_conditions=conditions, source_xy=(0.0, 0.0))


@pytest.fixture(scope="module")
def square_gops(op5):
    return build_global_operators(single_square_mesh(), op5)


# ---------------------------------------------------------------------------
# projection


def test_projection_without_dirichlet_is_identity():
    p, mask = build_projection([], 25)
    assert (p != sparse.identity(25)).nnz == 0
    assert np.all(mask == 1.0)


def test_projection_zeroes_dirichlet_points(square_gops):
    system = build_system(square_gops, _square_problem(west="dirichlet"))
    assert len(system.dirichlet_points) == 6  # west side of an n=6 block
    assert np.count_nonzero(system.mask == 0.0) == 6
    p = system.projection
    assert abs(p @ p - p).max() <= 1e-14
    # L P = 0 for the unit selector constraint rows
    lp = p.toarray()[system.dirichlet_points, :]
    assert np.abs(lp).max() == 0.0


def test_corner_points_deduplicated(square_gops):
    # two adjacent Dirichlet sides share a corner: one constraint row each
    system = build_system(square_gops, _square_problem(west="dirichlet", south="dirichlet"))
    assert len(system.dirichlet_points) == 11  # 6 + 6 - shared corner


# ---------------------------------------------------------------------------
# system assembly


def test_all_neumann_annihilates_constants(square_gops):
    system = build_system(square_gops, _square_problem())
    ones = np.ones(system.n)
    assert np.abs(system.a @ ones).max() <= 1e-10


def test_all_dirichlet_negative_definite_dense_oracle():
    # dense eigensolve on a tiny mesh: A restricted to the free points of
    # the invariant subspace must be negative definite
    op = make_operator(3)
    gops = build_global_operators(single_square_mesh(), op)
    problem = WaveProblem(
        c=1.0,
        boundary_conditions={t: "dirichlet" for t in ALL_SQUARE_TAGS},
        source_xy=(0.0, 0.0),
    )
    system = build_system(gops, problem)
    free = np.flatnonzero(system.mask)
    a_free = system.a.toarray()[np.ix_(free, free)]
    h_free = gops.h_reduced[free]
    sym = np.diag(np.sqrt(h_free)) @ a_free @ np.diag(1.0 / np.sqrt(h_free))
    eigs = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    assert eigs.max() < 0.0


def test_no_outflow_means_no_damping(square_gops):
    system = build_system(square_gops, _square_problem())
    assert system.b is None
    system = build_system(square_gops, _square_problem(east="outflow"))
    assert system.b is not None and system.b.nnz > 0


def test_missing_or_unknown_bc_raises(square_gops):
    prob = WaveProblem(c=1.0, boundary_conditions={"west": "dirichlet"})
    with pytest.raises(ConfigurationError, match="no assigned"):
        build_system(square_gops, prob)
    bad = _square_problem()
    bad = dataclasses.replace(
        bad, boundary_conditions={**bad.boundary_conditions, "west": "absorbing"}
    )
    with pytest.raises(ConfigurationError, match="unknown boundary condition"):
        build_system(square_gops, bad)


def test_invalid_problem_parameters(square_gops):
    with pytest.raises(ValueError, match="wave speed"):
        build_system(square_gops, dataclasses.replace(_square_problem(), c=-1.0))
    with pytest.raises(ValueError, match="pulse width"):
        build_system(square_gops, dataclasses.replace(_square_problem(), sigma=0.0))


@pytest.mark.parametrize(
    "bcs",
    [
        {},
        {"west": "dirichlet"},
        {"west": "dirichlet", "east": "outflow", "north": "outflow"},
    ],
)
def test_operator_is_h_self_adjoint_and_semibounded(square_gops, bcs):
    system = build_system(square_gops, _square_problem(**bcs))
    h = square_gops.h_reduced
    rng = np.random.default_rng(17)
    a_scale = abs(system.a).max()
    for _ in range(100):
        u = rng.standard_normal(system.n)
        v = rng.standard_normal(system.n)
        lhs = u @ (h * (system.a @ v))
        rhs = (system.a @ u) @ (h * v)
        assert abs(lhs - rhs) <= 1e-10 * a_scale * np.linalg.norm(u) * np.linalg.norm(v)
        quad = u @ (h * (system.a @ u))
        assert quad <= 1e-10 * a_scale * (u @ (h * u))
        if system.b is not None:
            quad_b = u @ (h * (system.b @ u))
            assert quad_b <= 1e-12 * abs(system.b).max() * (u @ (h * u))


# ---------------------------------------------------------------------------
# source terms


def test_dirac_vector_single_entry(square_gops):
    d_s, idx = dirac_vector((0.0, 0.0), square_gops.coords, square_gops.h_reduced)
    nz = np.flatnonzero(d_s)
    assert np.array_equal(nz, [idx])
    assert d_s[idx] == 1.0 / square_gops.h_reduced[idx]
    # the discrete delta integrates to one
    assert square_gops.h_reduced @ d_s == 1.0


def test_dirac_vector_off_grid_reports_nearest(square_gops):
    with pytest.raises(ConfigurationError, match="nearest"):
        dirac_vector((1e-3, 0.0), square_gops.coords, square_gops.h_reduced)


def test_forcing_peak_and_decay():
    sigma, t_s = 0.04, 0.3
    peak = forcing(t_s, sigma, t_s)
    assert abs(peak - 1.0 / (sigma * math.sqrt(2.0 * math.pi))) <= 1e-14
    assert round(peak, 5) == 9.97356
    for dt in (10 * sigma, -10 * sigma):
        assert forcing(t_s + dt, sigma, t_s) < 2e-21 * peak


def test_problem_defaults_match_accuracy_study():
    prob = WaveProblem(c=1.0, boundary_conditions={})
    assert prob.sigma == 0.04
    assert prob.t_source == 0.3
    assert prob.cfl_fraction == 0.2


# ---------------------------------------------------------------------------
# time stepping


def test_stable_dt_rejects_zero_fraction(square_gops):
    system = build_system(square_gops, _square_problem())
    with pytest.raises(ValueError, match="CFL"):
        stable_dt(system, cfl_fraction=0.0)


def test_stable_dt_scales_with_wave_speed(square_gops):
    dt1 = stable_dt(build_system(square_gops, _square_problem()))
    prob2 = dataclasses.replace(_square_problem(), c=2.0)
    dt2 = stable_dt(build_system(square_gops, prob2))
    # A scales as c^2, so doubling c halves dt (power-iteration tolerance)
    assert abs(dt2 - 0.5 * dt1) <= 5e-3 * dt1


def test_stable_dt_shrinks_under_refinement(op5):
    prob = WaveProblem(c=1.0, boundary_conditions={"outer": "dirichlet"})
    dts = []
    for r in (1, 2):
        gops = build_global_operators(generate_circle_mesh(r), op5)
        dts.append(stable_dt(build_system(gops, prob)))
    assert dts[1] <= 0.55 * dts[0]


def test_rk4_zero_system_keeps_state(square_gops):
    system = build_system(square_gops, _square_problem())
    zero = sparse.csr_matrix(system.a.shape)
    frozen = dataclasses.replace(
        system, a=zero, b=None, problem=dataclasses.replace(system.problem, amplitude=0.0)
    )
    v0 = np.arange(frozen.n, dtype=float)
    state = WaveState(v=v0.copy(), v_t=np.zeros(frozen.n), t=0.0)
    out = rk4_step(frozen, state, 0.1)
    assert np.array_equal(out.v, v0)
    assert np.array_equal(out.v_t, np.zeros(frozen.n))


def test_rk4_scalar_amplification_matches_stability_polynomial(square_gops):
    # oracle: R(z) = 1 + z + z^2/2 + z^3/6 + z^4/24 at z = -0.1
    z = -0.1
    expected = 1.0 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
    assert abs(expected - 0.9048375) <= 1e-15
    system = build_system(square_gops, _square_problem())
    lam = -1.0
    frozen = dataclasses.replace(
        system,
        a=sparse.csr_matrix(system.a.shape),
        b=sparse.identity(system.n, format="csr") * lam,
        problem=dataclasses.replace(system.problem, amplitude=0.0),
    )
    state = WaveState(v=np.zeros(frozen.n), v_t=np.ones(frozen.n), t=0.0)
    out = rk4_step(frozen, state, 0.1)
    assert np.abs(out.v_t - expected).max() <= 1e-15


def test_zero_data_stays_zero(square_gops):
    system = build_system(
        square_gops, dataclasses.replace(_square_problem(), amplitude=0.0)
    )
    state, dt, n = simulate(system, t_end=0.05)
    assert n >= 1
    assert np.all(state.v == 0.0)
    assert np.all(state.v_t == 0.0)


def test_divergence_detection(square_gops):
    system = build_system(square_gops, _square_problem())
    state = WaveState(
        v=np.full(system.n, np.inf), v_t=np.zeros(system.n), t=0.0
    )
    with pytest.raises(DivergenceError, match="step 7"):
        rk4_step(system, state, 1e-3, step=7)


# ---------------------------------------------------------------------------
# energy and errors


def test_energy_zero_state(square_gops):
    system = build_system(square_gops, _square_problem())
    state = WaveState(v=np.zeros(system.n), v_t=np.zeros(system.n), t=0.0)
    assert discrete_energy(state, system) == 0.0


def test_energy_constant_all_neumann(square_gops):
    system = build_system(square_gops, _square_problem())
    state = WaveState(v=np.ones(system.n), v_t=np.zeros(system.n), t=0.0)
    assert discrete_energy(state, system) <= 1e-12


def test_energy_monotone_homogeneous_mixed_bcs(op5):
    # smooth nonzero initial data, no forcing, all three condition types
    gops = build_global_operators(two_block_square_mesh(), op5)
    problem = WaveProblem(
        c=1.0,
        boundary_conditions={
            "north": "dirichlet",
            "south": "neumann",
            "west": "outflow",
            "east": "outflow",
        },
        source_xy=(0.0, 0.0),
        amplitude=0.0,
    )
    system = build_system(gops, problem)
    x, y = gops.coords[:, 0], gops.coords[:, 1]
    v0 = system.mask * np.exp(-20 * ((x - 0.5) ** 2 + (y - 0.4) ** 2))
    state = WaveState(v=v0, v_t=np.zeros(system.n), t=0.0)
    dt = stable_dt(system)
    e_prev = discrete_energy(state, system)
    for step in range(1, 101):
        state = rk4_step(system, state, dt, step=step)
        e = discrete_energy(state, system)
        assert e <= e_prev * (1.0 + 1e-10)
        e_prev = e


def test_dirichlet_constraint_invariant(op5):
    gops = build_global_operators(two_block_square_mesh(), op5)
    # put the source on an actual interior grid point
    dist = np.linalg.norm(gops.coords - np.array([0.5, 0.4]), axis=1)
    source = tuple(gops.coords[np.argmin(dist)])
    problem = WaveProblem(
        c=1.0,
        boundary_conditions={
            "north": "dirichlet",
            "south": "neumann",
            "west": "neumann",
            "east": "dirichlet",
        },
        source_xy=source,
        sigma=0.05,
        t_source=0.1,
    )
    system = build_system(gops, problem)
    worst = [0.0]

    def check(step, state):
        worst[0] = max(worst[0], np.abs(state.v[system.dirichlet_points]).max(initial=0.0))

    simulate(system, t_end=0.2, callback=check)
    assert worst[0] <= 1e-12


def test_l2_error_and_rate_basics(square_gops):
    h = square_gops.h_reduced
    v = np.ones(square_gops.n_reduced)
    assert l2_error(v, v, h) == 0.0
    assert math.isnan(convergence_rate(0.0, 100, 1e-3, 400))
    # direct formula evaluation oracle
    q = convergence_rate(1e-2, 100, 1e-3, 400)
    assert abs(q - math.log(10.0) / math.log(2.0)) <= 1e-12
    assert abs(q - 3.3219) <= 1e-4


def test_rate_formula_reproduces_table_pair():
    # finest published pair for the 5th-order operators
    q = convergence_rate(10.0**-3.08, 8681, 10.0**-3.98, 13456)
    assert abs(q - 9.45) <= 0.02


def test_l2_error_exclusion(square_gops):
    h = square_gops.h_reduced
    v = np.zeros(square_gops.n_reduced)
    ref = np.zeros_like(v)
    ref[3] = np.nan  # flagged point is skipped
    ref[5] = 100.0
    assert l2_error(v, ref, h, exclude=[5]) == 0.0
