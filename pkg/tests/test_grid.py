"""Grid geometry, staggered shapes, and the absorbing-layer samples."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expwave.grid import PmlProfile, StaggeredGrid, default_beta0


def make_grid(**kw):
    base = dict(nx=30, ny=20, dx=0.01, pml_thickness=0.05)
    base.update(kw)
    return StaggeredGrid(**base)


def test_shapes_and_extent():
    grid = make_grid()
    assert grid.shape_u == (21, 31)
    assert grid.shape_wx == (21, 30)
    assert grid.shape_wy == (20, 31)
    assert grid.extent == pytest.approx((0.3, 0.2))
    assert grid.pml_cells == 5


def test_node_coordinates():
    grid = make_grid(origin=(1.0, 2.0))
    assert grid.x_nodes[0] == 1.0
    assert grid.x_nodes[-1] == pytest.approx(1.3)
    assert grid.depth_half[0] == pytest.approx(2.005)
    assert len(grid.x_half) == grid.nx


def test_validation():
    with pytest.raises(ValueError):
        make_grid(nx=0)
    with pytest.raises(ValueError):
        make_grid(dx=-0.01)
    with pytest.raises(ValueError):
        make_grid(pml_thickness=-0.1)
    with pytest.raises(ValueError):
        make_grid(pml_thickness=0.013)
    with pytest.raises(ValueError):
        # a layer thinner than the stencil halo cannot shield the edge rows
        make_grid(pml_thickness=0.03)


def test_nearest_node_snaps_and_bounds():
    grid = make_grid()
    assert grid.nearest_node(0.0, 0.0) == (0, 0)
    assert grid.nearest_node(0.104, 0.051) == (5, 10)
    assert grid.nearest_node(0.3, 0.2) == (20, 30)
    with pytest.raises(ValueError):
        grid.nearest_node(0.31, 0.0)
    with pytest.raises(ValueError):
        grid.nearest_node(0.0, -0.02)


def test_physical_domain_excludes_collar_but_not_surface():
    grid = make_grid()
    assert grid.in_physical_domain(0.15, 0.0), "free surface is physical"
    assert grid.in_physical_domain(0.05, 0.1)
    assert not grid.in_physical_domain(0.04, 0.1), "left collar"
    assert not grid.in_physical_domain(0.26, 0.1), "right collar"
    assert not grid.in_physical_domain(0.15, 0.16), "bottom collar"


def test_physical_slices_match_membership():
    grid = make_grid()
    rows, cols = grid.physical_slices()
    mask = np.zeros(grid.shape_u, dtype=bool)
    mask[rows, cols] = True
    for j in range(grid.ny + 1):
        for i in range(grid.nx + 1):
            inside = grid.in_physical_domain(grid.x_nodes[i], grid.depth_nodes[j])
            assert mask[j, i] == inside, (j, i)


def test_physical_slices_without_layer():
    grid = make_grid(pml_thickness=0.0)
    rows, cols = grid.physical_slices()
    assert rows == slice(0, grid.ny + 1)
    assert cols == slice(0, grid.nx + 1)


# ---------------------------------------------------------------------------
# damping profile


def test_default_beta0_formula():
    assert default_beta0(3.0, 0.5) == pytest.approx(
        3.0 * 3.0 * math.log(1e4) / (2.0 * 0.5)
    )
    with pytest.raises(ValueError):
        default_beta0(3.0, 0.0)
    with pytest.raises(ValueError):
        default_beta0(3.0, 0.5, reflection=1.5)


def test_zero_layer_profile_is_identically_zero():
    grid = make_grid(pml_thickness=0.0)
    pml = PmlProfile.for_grid(grid)
    assert pml.beta0 == 0.0
    assert not pml.beta_x_at_u().any()
    assert not pml.beta_y_at_wy().any()
    assert pml.max_beta_sum() == 0.0


def test_profile_geometry():
    grid = make_grid()
    pml = PmlProfile.for_grid(grid, beta0=100.0)
    bx = pml.bx_nodes
    by = pml.by_nodes
    # peak damping at the left/right/bottom edges; interior values are zero
    # up to the float dust of edge-distance subtraction
    assert bx[0] == pytest.approx(100.0)
    assert bx[-1] == pytest.approx(100.0)
    assert np.max(np.abs(bx[5:-5])) < 1e-20
    assert by[-1] == pytest.approx(100.0)
    assert np.max(np.abs(by[:-5])) < 1e-20, "no layer at the free surface"
    # quadratic ramp: one cell into the layer
    assert bx[1] == pytest.approx(100.0 * (1.0 - 0.01 / 0.05) ** 2)
    # symmetry in x
    assert bx == pytest.approx(bx[::-1])


def test_profile_broadcast_shapes():
    grid = make_grid()
    pml = PmlProfile.for_grid(grid, beta0=10.0)
    assert pml.beta_x_at_u().shape == grid.shape_u
    assert pml.beta_y_at_u().shape == grid.shape_u
    assert pml.beta_x_at_wx().shape == grid.shape_wx
    assert pml.beta_y_at_wx().shape == grid.shape_wx
    assert pml.beta_x_at_wy().shape == grid.shape_wy
    assert pml.beta_y_at_wy().shape == grid.shape_wy
    # beta_x varies along columns only, beta_y along rows only
    assert np.all(pml.beta_x_at_u()[0] == pml.beta_x_at_u()[-1])
    assert np.all(pml.beta_y_at_u()[:, 0] == pml.beta_y_at_u()[:, -1])


def test_default_beta0_used_when_omitted():
    grid = make_grid()
    pml = PmlProfile.for_grid(grid, c_max=3.0)
    assert pml.beta0 == pytest.approx(default_beta0(3.0, grid.pml_thickness))


def test_max_beta_sum():
    grid = make_grid()
    pml = PmlProfile.for_grid(grid, beta0=100.0)
    assert pml.max_beta_sum() == pytest.approx(200.0)


@settings(max_examples=30, deadline=None)
@given(
    nx=st.integers(min_value=10, max_value=60),
    ny=st.integers(min_value=10, max_value=60),
    cells=st.integers(min_value=4, max_value=5),
)
def test_half_samples_interleave_nodes(nx, ny, cells):
    if min(nx, ny) <= 2 * cells:
        cells = min(nx, ny) // 2 - 1
    if cells < 4:
        return
    grid = StaggeredGrid(nx=nx, ny=ny, dx=0.01, pml_thickness=cells * 0.01)
    assert np.all(grid.x_half > grid.x_nodes[:-1])
    assert np.all(grid.x_half < grid.x_nodes[1:])
    pml = PmlProfile.for_grid(grid, beta0=1.0)
    # the ramp is monotone toward each damped edge
    assert np.all(np.diff(pml.bx_nodes[: nx // 2]) <= 1e-15)
    assert np.all(np.diff(pml.by_nodes) >= -1e-15)
