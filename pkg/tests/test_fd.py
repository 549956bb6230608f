import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbsim.fd import (AirShuffler, BoundaryConditions, ConfigurationError, ConvergenceFailure,
                      SolverDivergence, ThermalState, air_shuffle, apply_diffuser_energy,
                      energy_audit, fd_step, fd_sweep, read_snapshot_csv, shift,
                      write_snapshot_csv)
from sbsim.grid import (DIRECTIONS, OFFSETS, CellClass, DeviceLayout, FloorplanGrid,
                        MaterialParams, build_oriented_fields, classify_cvs)
from sbsim.building import make_device
from sbsim.synth import random_grid

from conftest import slab_fields

EA, IA, IW, EW = (int(c) for c in CellClass)


def fields_for(cells, dx=0.5, z=3.0, params=None):
    g = FloorplanGrid(cells, dx, z)
    return build_oriented_fields(g, classify_cvs(g), params or MaterialParams())


def implicit_solve(fields, T_prev, T_inf, dt, Q=None):
    """Dense backward-Euler solve assembled cell by cell from G and HA."""
    h, w = fields.shape
    ext = fields.exterior
    idx = -np.ones((h, w), dtype=int)
    inside = np.argwhere(~ext)
    for i, (r, c) in enumerate(inside):
        idx[r, c] = i
    n = len(inside)
    A = np.zeros((n, n))
    b = np.zeros(n)
    T_inf = np.broadcast_to(np.asarray(T_inf, dtype=float), (h, w))
    for i, (r, c) in enumerate(inside):
        cap = fields.heat_capacity[r, c] / dt
        A[i, i] += cap
        b[i] += cap * T_prev[r, c] + (0 if Q is None else Q[r, c] / dt)
        for d in DIRECTIONS:
            dr, dc = OFFSETS[d]
            rr, cc = r + dr, c + dc
            ha = fields.HA[d - 1][r, c]
            A[i, i] += ha
            b[i] += ha * T_inf[r, c]
            g = fields.G[d - 1][r, c]
            if g == 0:
                continue
            A[i, i] += g
            if ext[rr, cc]:
                b[i] += g * T_inf[rr, cc]
            else:
                A[i, idx[rr, cc]] -= g
    out = T_inf.copy()
    out[~ext] = np.linalg.solve(A, b)
    out[tuple(inside.T)] = out[~ext]
    return out


def test_shift_directions():
    T = np.arange(9.0).reshape(3, 3)
    assert shift(T, "left")[1, 1] == T[1, 2]
    assert shift(T, "right")[1, 1] == T[1, 0]
    assert shift(T, "up")[1, 1] == T[2, 1]
    assert shift(T, "down")[1, 1] == T[0, 1]
    assert shift(T, "left")[1, 2] == 0
    with pytest.raises(ValueError):
        shift(T, "sideways")


def test_slab_single_step_matches_implicit_solve():
    f = slab_fields(20, k=1.4, rho=2300.0, c=880.0, dx=0.01)
    T_inf = np.zeros((1, 22))
    T_inf[0, 0], T_inf[0, -1] = 10.0, 30.0
    prev = ThermalState.uniform((1, 22), 20.0)
    bc = BoundaryConditions(T_inf, dt=60.0)
    got = fd_step(prev, f, bc, epsilon=1e-12)
    # dense backward-Euler system
    want = implicit_solve(f, prev.T, T_inf, 60.0)
    np.testing.assert_allclose(got.T, want, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-10.0, 35.0), st.floats(60.0, 900.0))
def test_step_matches_implicit_solve_on_random_grids(seed, T_inf, dt):
    rng = np.random.default_rng(seed)
    cells = random_grid(rng, 9, 11)
    f = fields_for(cells)
    T0 = rng.uniform(10.0, 30.0, cells.shape)
    Q = np.where(cells == IA, rng.uniform(-5e4, 5e4, cells.shape), 0.0)
    got = fd_step(ThermalState(T0, T0.copy()), f, BoundaryConditions(T_inf, dt), Q,
                  epsilon=1e-11)
    want = implicit_solve(f, T0, T_inf, dt, Q)
    np.testing.assert_allclose(got.T, want, atol=1e-7)


def test_exterior_cells_pinned():
    cells = random_grid(np.random.default_rng(3), 10, 10)
    f = fields_for(cells)
    s = fd_step(ThermalState.uniform(cells.shape, 20.0), f, BoundaryConditions(-5.0))
    assert (s.T[f.exterior] == -5.0).all()
    assert s.t == 300.0


def test_per_cell_exterior_temperature():
    f = slab_fields(4, 1.0, 1.0, 1.0, 1.0)
    T_inf = np.array([[0.0, 0, 0, 0, 0, 10.0]])
    s = fd_step(ThermalState.uniform((1, 6), 5.0), f, BoundaryConditions(T_inf, 1e12),
                epsilon=1e-12)
    np.testing.assert_allclose(s.T[0], [0, 2, 4, 6, 8, 10], atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.5))
def test_committed_step_respects_epsilon(seed, eps):
    rng = np.random.default_rng(seed)
    cells = random_grid(rng, 12, 12)
    f = fields_for(cells)
    s = fd_step(ThermalState(rng.uniform(0, 40, cells.shape), np.full(cells.shape, 20.0)), f,
                BoundaryConditions(0.0), epsilon=eps)
    assert s.max_delta <= eps
    assert s.sweeps >= 1
    np.testing.assert_array_equal(s.T, s.T_prev)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(5, 30), st.integers(5, 30),
       st.floats(-20.0, 40.0))
def test_energy_balance_closes(seed, h, w, T_inf):
    rng = np.random.default_rng(seed)
    cells = random_grid(rng, h, w)
    f = fields_for(cells, dx=float(rng.uniform(0.25, 1.0)))
    T0 = rng.uniform(5.0, 35.0, cells.shape)
    Q = np.where(cells == IA, rng.uniform(-1e5, 1e5, cells.shape), 0.0)
    s = fd_step(ThermalState(T0, T0.copy()), f, BoundaryConditions(T_inf, 300.0), Q,
                epsilon=1e-10)
    T0[f.exterior] = T_inf
    stored, supplied = energy_audit(f, T0, s.T, Q, T_inf, 300.0)
    scale = max(abs(stored), abs(supplied), 1.0)
    assert abs(stored - supplied) <= 1e-6 * scale


def test_fd_sweep_single_iteration():
    f = slab_fields(3, 1.0, 1.0, 1.0, 1.0)
    s = ThermalState.uniform((1, 5), 0.0)
    T, delta = fd_sweep(s, f, BoundaryConditions(np.array([[3.0, 0, 0, 0, 3.0]]), 1e12))
    # first sweep: end neighbours see the pinned cells, middle sees zeros
    np.testing.assert_allclose(T[0, 1:4], [1.5, 0.0, 1.5], atol=1e-9)
    assert delta == pytest.approx(1.5)


def test_convergence_failure():
    f = slab_fields(20, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConvergenceFailure) as err:
        fd_step(ThermalState.uniform((1, 22), 0.0), f, BoundaryConditions(100.0, 1e12),
                epsilon=1e-9, max_sweeps=5)
    assert err.value.sweeps == 5


def test_divergence_reports_cell():
    cells = random_grid(np.random.default_rng(0), 8, 8)
    f = fields_for(cells)
    prev = np.full(cells.shape, 20.0)
    r, c = np.argwhere(~f.exterior)[0]
    prev[r, c] = np.nan
    with pytest.raises(SolverDivergence) as err:
        fd_step(ThermalState(prev.copy(), prev), f, BoundaryConditions(0.0), floor=1)
    assert err.value.floor == 1


@pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"epsilon": -1.0}])
def test_bad_epsilon(kwargs):
    f = slab_fields(3, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        fd_step(ThermalState.uniform((1, 5), 0.0), f, BoundaryConditions(0.0), **kwargs)


def test_bad_shape_and_timestep():
    f = slab_fields(3, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        fd_step(ThermalState.uniform((2, 5), 0.0), f, BoundaryConditions(0.0))
    with pytest.raises(ConfigurationError):
        BoundaryConditions(0.0, dt=0.0)


def test_h_override_replaces_convection():
    cells = np.full((5, 5), EA, dtype=np.int8)
    cells[1:-1, 1:-1] = IW
    f = fields_for(cells)
    s0 = fd_step(ThermalState.uniform(cells.shape, 20.0), f,
                 BoundaryConditions(0.0, h_override=0.0), epsilon=1e-12)
    np.testing.assert_allclose(s0.T[~f.exterior], 20.0)


# ---------------------------------------------------------------- air shuffle

def zone_labels():
    lab = -np.ones((8, 12), dtype=int)
    lab[1:7, 1:6] = 0
    lab[1:7, 7:11] = 1
    return lab


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.integers(0, 6))
def test_shuffle_permutes_within_zone(seed, p, radius):
    lab = zone_labels()
    rng = np.random.default_rng(seed)
    T = rng.normal(20, 3, lab.shape)
    out = AirShuffler(lab)(T, p, radius, np.random.default_rng(seed + 1))
    np.testing.assert_array_equal(out[lab < 0], T[lab < 0])
    for z in (0, 1):
        np.testing.assert_array_equal(np.sort(out[lab == z]), np.sort(T[lab == z]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_shuffle_partners_inside_window(seed, radius):
    lab = zone_labels()
    src, dst = AirShuffler(lab).pairs(0.5, radius, np.random.default_rng(seed))
    w = lab.shape[1]
    r0, c0 = np.divmod(src, w)
    r1, c1 = np.divmod(dst, w)
    assert (np.maximum(abs(r0 - r1), abs(c0 - c1)) <= radius).all()
    assert (lab.ravel()[src] == lab.ravel()[dst]).all()


def test_shuffle_noop_cases():
    lab = zone_labels()
    T = np.random.default_rng(0).normal(size=lab.shape)
    rng = np.random.default_rng(1)
    np.testing.assert_array_equal(AirShuffler(lab)(T, 0.0, 3, rng), T)
    np.testing.assert_array_equal(AirShuffler(lab)(T, 1.0, 0, rng), T)


def test_shuffle_is_seeded():
    lab = zone_labels()
    T = np.random.default_rng(0).normal(size=lab.shape)
    s = ThermalState(T, T.copy())
    a = air_shuffle(s, lab, 0.3, 2, np.random.default_rng(5)).T
    b = air_shuffle(s, lab, 0.3, 2, np.random.default_rng(5)).T
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ConfigurationError):
        air_shuffle(s, lab, 1.5, 2, np.random.default_rng(5))
    with pytest.raises(ConfigurationError):
        air_shuffle(s, lab, 0.5, -1, np.random.default_rng(5))


# ---------------------------------------------------------------- diffusers, io

def test_diffuser_energy_split_equally():
    layout = DeviceLayout()
    layout["v"] = make_device("v", "VAV", 0, "z", [(1, 1), (1, 2)])
    layout["w"] = make_device("w", "VAV", 0, "z", [])
    out = apply_diffuser_energy({"v": 300.0, "w": 0.0}, layout, [(3, 4)])
    assert out[0][1, 1] == out[0][1, 2] == 150.0
    assert out[0].sum() == 300.0
    with pytest.raises(ConfigurationError):
        apply_diffuser_energy({"w": 1.0}, layout, [(3, 4)])


def test_snapshot_round_trip(tmp_path):
    T = np.random.default_rng(0).normal(20, 5, (4, 6))
    write_snapshot_csv(T, tmp_path / "snap.csv")
    np.testing.assert_allclose(read_snapshot_csv(tmp_path / "snap.csv"), T, atol=5e-7)
