"""Matrix-free operator against a plain-loop reassembly of the same rules."""

import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg

from expwave.grid import StaggeredGrid
from expwave.medium import VelocityModel, homogeneous_model
from expwave.operator import (
    AugmentedOperator,
    DenseForcing,
    PointForcing,
    StateVector,
    WaveOperator,
    assemble_dense,
    build_augmented,
    field_sizes,
    flat_size,
    forcing_for,
    spectral_bounds,
    v_flat_index,
)
from expwave.sources import RickerWavelet, SourceInjection
from expwave.stencils import d1_staggered_weights, d2_centered_weights, free_surface_rows


def make_operator(pml_thickness=0.08, seed=0):
    grid = StaggeredGrid(nx=12, ny=10, dx=0.02, pml_thickness=pml_thickness)
    rng = np.random.default_rng(seed)
    c = 1.5 + 0.8 * rng.random(grid.shape_u)
    return WaveOperator(VelocityModel(grid, c))


def random_state(grid, seed=1):
    rng = np.random.default_rng(seed)
    return StateVector(
        u=rng.standard_normal(grid.shape_u),
        v=rng.standard_normal(grid.shape_u),
        wx=rng.standard_normal(grid.shape_wx),
        wy=rng.standard_normal(grid.shape_wy),
    )


# -- plain-loop reference sweeps (zero samples past every edge) --------------


def loop_d2_x(field, dx):
    w = d2_centered_weights()
    rows, cols = field.shape
    out = np.zeros_like(field)
    for j in range(rows):
        for i in range(cols):
            for o, wt in zip(w.offsets_half, w.weights):
                src = i + o // 2
                if 0 <= src < cols:
                    out[j, i] += wt * field[j, src]
    return out / dx**2


def loop_d2_depth(field, dx):
    w = d2_centered_weights()
    rows, cols = field.shape
    out = np.zeros_like(field)
    for j in range(4, rows):
        for i in range(cols):
            for o, wt in zip(w.offsets_half, w.weights):
                src = j + o // 2
                if 0 <= src < rows:
                    out[j, i] += wt * field[src, i]
    for j in range(4):
        row = free_surface_rows("d2_u", j)
        for i in range(cols):
            out[j, i] = sum(
                wt * field[j + o // 2, i] for o, wt in zip(row.offsets_half, row.weights)
            )
    return out / dx**2


def loop_d1_x_to_half(field, dx):
    w = d1_staggered_weights()
    rows, cols = field.shape
    out = np.zeros((rows, cols - 1))
    for j in range(rows):
        for i in range(cols - 1):
            for o, wt in zip(w.offsets_half, w.weights):
                src = i + (o + 1) // 2
                if 0 <= src < cols:
                    out[j, i] += wt * field[j, src]
    return out / dx


def loop_d1_depth_to_half(field, dx):
    w = d1_staggered_weights()
    rows, cols = field.shape
    out = np.zeros((rows - 1, cols))
    for j in range(3, rows - 1):
        for i in range(cols):
            for o, wt in zip(w.offsets_half, w.weights):
                src = j + (o + 1) // 2
                if 0 <= src < rows:
                    out[j, i] += wt * field[src, i]
    for m in range(3):
        row = free_surface_rows("d1_u_half", Fraction(2 * m + 1, 2))
        for i in range(cols):
            out[m, i] = sum(
                wt * field[m + (o + 1) // 2, i]
                for o, wt in zip(row.offsets_half, row.weights)
            )
    return out / dx


def loop_d1_x_to_node(field, dx):
    w = d1_staggered_weights()
    rows, cols = field.shape
    out = np.zeros((rows, cols + 1))
    for j in range(rows):
        for i in range(cols + 1):
            for o, wt in zip(w.offsets_half, w.weights):
                src = i + (o - 1) // 2
                if 0 <= src < cols:
                    out[j, i] += wt * field[j, src]
    return out / dx


def loop_d1_depth_to_node(field, dx):
    w = d1_staggered_weights()
    rows, cols = field.shape
    out = np.zeros((rows + 1, cols))
    for j in range(4, rows + 1):
        for i in range(cols):
            for o, wt in zip(w.offsets_half, w.weights):
                src = j + (o - 1) // 2
                if 0 <= src < rows:
                    out[j, i] += wt * field[src, i]
    for j in range(4):
        row = free_surface_rows("d1_wy", j)
        for i in range(cols):
            # the table's first weight multiplies the zero boundary sample
            out[j, i] = sum(
                wt * field[j + (o - 1) // 2, i]
                for o, wt in zip(row.offsets_half[1:], row.weights[1:])
            )
    return out / dx


def loop_apply(op, s):
    dx = op.grid.dx
    pml = op.pml
    bxu, byu = pml.beta_x_at_u(), pml.beta_y_at_u()
    stiff = (
        loop_d2_x(s.u, dx)
        + loop_d2_depth(s.u, dx)
        + loop_d1_x_to_node(s.wx, dx)
        + loop_d1_depth_to_node(s.wy, dx)
    )
    dv = op.model.c**2 * stiff - (bxu + byu) * s.v - bxu * byu * s.u
    dv[:, 0] = 0.0
    dv[:, -1] = 0.0
    dv[-1, :] = 0.0
    dwx = (pml.beta_y_at_wx() - pml.beta_x_at_wx()) * loop_d1_x_to_half(s.u, dx)
    dwx -= pml.beta_x_at_wx() * s.wx
    dwy = (pml.beta_x_at_wy() - pml.beta_y_at_wy()) * loop_d1_depth_to_half(s.u, dx)
    dwy -= pml.beta_y_at_wy() * s.wy
    return s.v.copy(), dv, dwx, dwy


def assert_fields_close(got, want, tol=1e-12):
    for g, w in zip(got, want):
        scale = max(1.0, float(np.max(np.abs(w))))
        assert float(np.max(np.abs(g - w))) <= tol * scale


# -- packing ------------------------------------------------------------------


def test_flat_round_trip():
    grid = StaggeredGrid(nx=12, ny=10, dx=0.02)
    s = random_state(grid)
    flat = s.to_flat()
    assert flat.shape == (flat_size(grid),)
    back = StateVector.from_flat(flat, grid)
    assert np.array_equal(back.u, s.u)
    assert np.array_equal(back.wy, s.wy)
    nu, nwx, nwy = field_sizes(grid)
    assert nu == 11 * 13 and nwx == 11 * 12 and nwy == 10 * 13
    with pytest.raises(ValueError):
        StateVector.from_flat(flat[:-1], grid)


def test_flat_round_trip_with_tail():
    grid = StaggeredGrid(nx=12, ny=10, dx=0.02)
    s = random_state(grid)
    s.aug = np.array([1.0, 2.0, 3.0])
    back = StateVector.from_flat(s.to_flat(), grid, p=3)
    assert back.p == 3
    assert np.array_equal(back.aug, s.aug)


def test_v_flat_index_addresses_the_packed_v_block():
    grid = StaggeredGrid(nx=12, ny=10, dx=0.02)
    s = StateVector.zeros(grid)
    s.v[7, 3] = 5.0
    assert s.to_flat()[v_flat_index(grid, (7, 3))] == 5.0
    with pytest.raises(ValueError):
        v_flat_index(grid, (11, 0))


# -- operator action -----------------------------------------------------------


def test_apply_fields_matches_loop_reassembly_with_damping():
    op = make_operator(pml_thickness=0.08)
    s = random_state(op.grid, seed=3)
    got = op.apply_fields(s.u, s.v, s.wx, s.wy)
    want = loop_apply(op, s)
    assert_fields_close(got, want)


def test_apply_fields_matches_loop_reassembly_without_damping():
    op = make_operator(pml_thickness=0.0)
    s = random_state(op.grid, seed=4)
    got = op.apply_fields(s.u, s.v, s.wx, s.wy)
    want = loop_apply(op, s)
    assert_fields_close(got, want)
    # no damping: the auxiliary fields only feel the derivative coupling, and
    # here even that carries a zero coefficient
    assert np.max(np.abs(got[2])) == 0.0
    assert np.max(np.abs(got[3])) == 0.0


def test_apply_flat_is_linear():
    op = make_operator()
    n = flat_size(op.grid)
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    lhs = op.apply_flat(2.5 * x - 1.25 * y)
    rhs = 2.5 * op.apply_flat(x) - 1.25 * op.apply_flat(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * max(1.0, np.max(np.abs(rhs)))


def test_shape_validation():
    op = make_operator()
    s = random_state(op.grid)
    with pytest.raises(ValueError):
        op.derivative_terms(s.u[:, :-1], s.wx, s.wy)
    with pytest.raises(ValueError):
        op.derivative_terms(s.u, s.wx.T, s.wy)
    with pytest.raises(ValueError):
        op.apply_fields(s.u, s.v[:-1], s.wx, s.wy)


def test_operator_rejects_mismatched_profile_grid():
    op = make_operator()
    other = StaggeredGrid(nx=16, ny=12, dx=0.02, pml_thickness=0.08)
    from expwave.grid import PmlProfile

    with pytest.raises(ValueError):
        WaveOperator(op.model, PmlProfile.for_grid(other, c_max=2.0))


def test_counter_ticks_once_per_sweep():
    op = make_operator()
    s = random_state(op.grid)
    assert op.counter.mvos == 0
    op.derivative_terms(s.u, s.wx, s.wy)
    op.apply_fields(s.u, s.v, s.wx, s.wy)
    op.apply_flat(s.to_flat())
    assert op.counter.mvos == 3


def test_apply_state_matches_fields_and_rejects_tails():
    op = make_operator()
    s = random_state(op.grid)
    out = op.apply_state(s)
    want = op.apply_fields(s.u, s.v, s.wx, s.wy)
    assert np.array_equal(out.v, want[1])
    s.aug = np.ones(2)
    with pytest.raises(ValueError):
        op.apply_state(s)


# -- augmentation ---------------------------------------------------------------


def make_augmented(p=4, t_n=0.05):
    op = make_operator()
    src = SourceInjection(
        grid=op.grid, position=(0.12, 0.1), wavelet=RickerWavelet(f_m=25.0, t0=0.06)
    )
    return build_augmented(op, p=p, t_n=t_n, source=src), src


def test_build_augmented_wires_source_data():
    aug, src = make_augmented(p=5, t_n=0.04)
    assert aug.p == 5
    assert aug.node == src.node
    assert aug.v_index == v_flat_index(aug.grid, src.node)
    assert np.array_equal(aug.w_values, src.derivative_stack(0.04, 5))
    assert aug.n_flat == flat_size(aug.grid, 5)


def test_augmented_validation():
    op = make_operator()
    src = SourceInjection(
        grid=op.grid, position=(0.12, 0.1), wavelet=RickerWavelet(f_m=25.0)
    )
    with pytest.raises(ValueError):
        build_augmented(op, p=0, t_n=0.0, source=src)
    with pytest.raises(ValueError):
        build_augmented(op, p=10, t_n=0.0, source=src)  # beyond the wavelet cap
    aug, _ = make_augmented()
    with pytest.raises(ValueError):
        aug.apply_flat(np.zeros(aug.n_flat + 1))
    with pytest.raises(ValueError):
        aug.w_column(4)


def test_seed_extend_restrict():
    aug, _ = make_augmented(p=3)
    assert np.array_equal(aug.seed(), [0.0, 0.0, 1.0])
    main = np.arange(flat_size(aug.grid), dtype=float)
    ext = aug.extend(main)
    assert len(ext) == aug.n_flat
    assert np.array_equal(aug.restrict(ext), main)


def test_augmented_apply_couples_tail_into_v():
    aug, _ = make_augmented(p=4)
    n = flat_size(aug.grid)
    rng = np.random.default_rng(8)
    flat = rng.standard_normal(n + 4)
    out = aug.apply_flat(flat)
    plain = aug.base.apply_flat(flat[:n])
    tail = flat[n:]
    # column p-1-k carries f^(k): the tail pairs with the derivatives reversed
    coupling = sum(aug.w_values[k] * tail[4 - 1 - k] for k in range(4))
    diff = out[:n] - plain
    assert diff[aug.v_index] == pytest.approx(coupling, rel=1e-12)
    diff[aug.v_index] = 0.0
    assert np.max(np.abs(diff)) == 0.0
    # the tail obeys the upper shift
    assert np.array_equal(out[n:], np.append(tail[1:], 0.0))


def test_augmented_state_and_flat_agree():
    aug, _ = make_augmented(p=3)
    n = flat_size(aug.grid)
    rng = np.random.default_rng(9)
    flat = rng.standard_normal(n + 3)
    s = StateVector.from_flat(flat, aug.grid, p=3)
    out_state = aug.apply_state(s)
    out_flat = aug.apply_flat(flat)
    assert np.max(np.abs(out_state.to_flat() - out_flat)) == 0.0
    with pytest.raises(ValueError):
        aug.apply_state(StateVector.zeros(aug.grid))


def test_augmented_matrix_structure():
    # block triangular [[H, W], [0, J]]: the tail never hears the fields, the
    # coupling block holds the reversed derivative stack in the v row, and J
    # exponentiates to the Taylor matrix
    aug, _ = make_augmented(p=4)
    n = flat_size(aug.grid)
    dense = assemble_dense(aug.apply_flat, aug.n_flat)
    assert np.max(np.abs(dense[n:, :n])) == 0.0
    coupling = dense[:n, n:]
    for l in range(4):
        col = coupling[:, l].copy()
        assert col[aug.v_index] == aug.w_values[4 - 1 - l]
        col[aug.v_index] = 0.0
        assert np.max(np.abs(col)) == 0.0
    tail = dense[n:, n:]
    assert np.array_equal(tail, np.eye(4, k=1))
    dt = 0.01
    prop = scipy.linalg.expm(dt * tail)
    for r in range(4):
        for c in range(4):
            want = dt ** (c - r) / math.factorial(c - r) if c >= r else 0.0
            assert prop[r, c] == pytest.approx(want, rel=1e-13, abs=1e-300)


def test_w_column_places_the_derivative():
    aug, _ = make_augmented(p=4)
    col = aug.w_column(2)
    assert col[aug.v_index] == aug.w_values[2]
    col[aug.v_index] = 0.0
    assert np.max(np.abs(col)) == 0.0


# -- forcing and spectra -----------------------------------------------------------


def test_point_forcing_adds_in_place():
    f = PointForcing(3, lambda t: 10.0 * t)
    out = np.zeros(6)
    f.add_to(out, 0.5)
    f.add_to(out, 0.5, scale=0.2)
    assert out[3] == pytest.approx(6.0)
    assert np.count_nonzero(out) == 1


def test_dense_forcing_adds_whole_vectors():
    f = DenseForcing(lambda t: np.full(4, t))
    out = np.ones(4)
    f.add_to(out, 2.0, scale=0.5)
    assert np.array_equal(out, np.full(4, 2.0))


def test_forcing_for_targets_the_source_v_sample():
    op = make_operator()
    src = SourceInjection(
        grid=op.grid, position=(0.12, 0.1), wavelet=RickerWavelet(f_m=25.0, t0=0.02)
    )
    f = forcing_for(op, src)
    assert f.index == v_flat_index(op.grid, src.node)
    out = np.zeros(flat_size(op.grid))
    f.add_to(out, 0.02)
    assert out[f.index] == pytest.approx(src.value(0.02))


def test_spectral_bounds_enclose_dense_eigenvalues():
    op = make_operator(pml_thickness=0.08)
    bounds = spectral_bounds(op)
    dense = assemble_dense(op.apply_flat, flat_size(op.grid))
    ev = np.linalg.eigvals(dense)
    assert np.max(np.abs(ev.imag)) <= bounds.rho_imag
    assert np.min(ev.real) >= -bounds.rho_real - 1e-9
    # the one-sided surface rows make the operator non-normal, so a few
    # eigenvalues leak slightly right of the axis; the leak must stay tiny
    # against the spectral scale the enclosure is built from
    assert np.max(ev.real) <= 1e-3 * bounds.rho_imag


def test_spectral_bounds_memoized_and_shared_with_augmented():
    op = make_operator()
    first = spectral_bounds(op)
    assert spectral_bounds(op) is first
    aug, _ = make_augmented()
    assert spectral_bounds(aug) == spectral_bounds(aug.base)


def test_assemble_dense_probe():
    mat = np.array([[1.0, 2.0], [3.0, 4.0]])
    got = assemble_dense(lambda x: mat @ x, 2)
    assert np.array_equal(got, mat)
