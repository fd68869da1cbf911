"""Matrix-free application of the semi-discrete wave operator.

The first-order system evolves (u, v, w_x, w_y) with split absorbing-layer
damping (beta_x, beta_y) and a free surface on top:

    du/dt  = v
    dv/dt  = -bx*by*u - (bx+by)*v + c^2*(lap u + d(w_x)/dx + d(w_y)/dy) + f
    dwx/dt = -bx*w_x + (by-bx)*du/dx
    dwy/dt = -by*w_y + (bx-by)*du/dy

y is depth, increasing downward.  Interior rows use the 8th-order staggered
tables; the four rows nearest the surface use the one-sided rows from
:mod:`expwave.stencils`; every out-of-domain read on the other three sides is
a homogeneous Dirichlet zero.  One "MVO" is one full sweep of these rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Protocol

import numpy as np
from numpy.lib.stride_tricks import as_strided, sliding_window_view
from numpy.typing import NDArray

from .grid import PmlProfile, StaggeredGrid
from .medium import VelocityModel
from .sources import SourceInjection
from .stencils import (
    D2_CENTERED,
    d1_staggered_weights,
    d2_centered_weights,
    free_surface_rows,
)

__all__ = [
    "StateVector",
    "WaveOperator",
    "AugmentedOperator",
    "OpCounter",
    "SpectralBounds",
    "PointForcing",
    "DenseForcing",
    "build_augmented",
    "forcing_for",
    "spectral_bounds",
    "field_sizes",
    "flat_size",
    "v_flat_index",
    "assemble_dense",
]

#: rows kept by the one-sided surface tables, per derivative kind
_SURFACE_ROWS_D2 = 4
_SURFACE_ROWS_D1U = 3
_SURFACE_ROWS_D1WY = 4


# ---------------------------------------------------------------------------
# flat packing


def field_sizes(grid: StaggeredGrid) -> tuple[int, int, int]:
    """Element counts (n_u, n_wx, n_wy) of the three field shapes."""
    nu = (grid.ny + 1) * (grid.nx + 1)
    return nu, (grid.ny + 1) * grid.nx, grid.ny * (grid.nx + 1)


def flat_size(grid: StaggeredGrid, p: int = 0) -> int:
    """Length of the packed vector [u, v, wx, wy, aug]."""
    nu, nwx, nwy = field_sizes(grid)
    return 2 * nu + nwx + nwy + p


def v_flat_index(grid: StaggeredGrid, node: tuple[int, int]) -> int:
    """Packed index of the v sample at collocated node (row, col)."""
    j, i = node
    if not (0 <= j <= grid.ny and 0 <= i <= grid.nx):
        raise ValueError(f"node {node} outside grid")
    nu = (grid.ny + 1) * (grid.nx + 1)
    return nu + j * (grid.nx + 1) + i


@dataclass
class StateVector:
    """Solution snapshot: the four fields plus optional augmentation scalars.

    Attributes:
        u, v: collocated-node arrays.
        wx: half-x node array.
        wy: half-depth node array.
        aug: optional augmentation tail (absent means p = 0).
        t_tag: the time this state represents, s.
    """

    u: NDArray[np.float64]
    v: NDArray[np.float64]
    wx: NDArray[np.float64]
    wy: NDArray[np.float64]
    aug: NDArray[np.float64] | None = None
    t_tag: float = 0.0

    @property
    def p(self) -> int:
        return 0 if self.aug is None else len(self.aug)

    @classmethod
    def zeros(cls, grid: StaggeredGrid, p: int = 0, t_tag: float = 0.0) -> "StateVector":
        return cls(
            u=np.zeros(grid.shape_u),
            v=np.zeros(grid.shape_u),
            wx=np.zeros(grid.shape_wx),
            wy=np.zeros(grid.shape_wy),
            aug=np.zeros(p) if p else None,
            t_tag=t_tag,
        )

    @classmethod
    def from_flat(
        cls, flat: NDArray[np.float64], grid: StaggeredGrid, p: int = 0, t_tag: float = 0.0
    ) -> "StateVector":
        """Reinterpret a packed vector as named fields (views, not copies)."""
        if len(flat) != flat_size(grid, p):
            raise ValueError(
                f"flat length {len(flat)} does not match grid size {flat_size(grid, p)}"
            )
        nu, nwx, nwy = field_sizes(grid)
        u = flat[:nu].reshape(grid.shape_u)
        v = flat[nu : 2 * nu].reshape(grid.shape_u)
        wx = flat[2 * nu : 2 * nu + nwx].reshape(grid.shape_wx)
        wy = flat[2 * nu + nwx : 2 * nu + nwx + nwy].reshape(grid.shape_wy)
        aug = flat[2 * nu + nwx + nwy :] if p else None
        return cls(u=u, v=v, wx=wx, wy=wy, aug=aug, t_tag=t_tag)

    def to_flat(self) -> NDArray[np.float64]:
        """Pack the fields into one contiguous vector (copies)."""
        parts = [self.u.ravel(), self.v.ravel(), self.wx.ravel(), self.wy.ravel()]
        if self.aug is not None:
            parts.append(np.asarray(self.aug, dtype=np.float64))
        return np.concatenate(parts)

    def copy(self) -> "StateVector":
        return StateVector(
            u=self.u.copy(),
            v=self.v.copy(),
            wx=self.wx.copy(),
            wy=self.wy.copy(),
            aug=None if self.aug is None else self.aug.copy(),
            t_tag=self.t_tag,
        )


# ---------------------------------------------------------------------------
# fixed-shape correlation sweeps

# Both helpers correlate a short tap table across one axis of an array whose
# shape never changes, with zero ghost samples past either edge.  Staggering
# is encoded by where the input sits inside the ghost frame: the output index
# i reads input samples i - left .. i - left + taps - 1.


class _RowCorrelator:
    """Per-row correlation, vectorised as one 1-d pass over the ghost frame.

    Windows that straddle two rows of the frame land past ``n_out`` and are
    sliced away, so the single pass is safe.  The result is a read-only view
    into the pass output.
    """

    def __init__(
        self, shape: tuple[int, int], taps: NDArray, left: int, n_out: int
    ) -> None:
        n0, n1 = shape
        self._flipped = np.ascontiguousarray(taps[::-1], dtype=np.float64)
        width = max(left + n1, n_out + len(taps) - 1)
        self._frame = np.zeros((n0, width))
        self._cols = slice(left, left + n1)
        self._shape_out = (n0, n_out)
        self._width = width

    def __call__(self, f: NDArray) -> NDArray:
        self._frame[:, self._cols] = f
        line = np.convolve(self._frame.ravel(), self._flipped, mode="valid")
        step = line.strides[0]
        return as_strided(
            line,
            shape=self._shape_out,
            strides=(self._width * step, step),
            writeable=False,
        )


class _ColCorrelator:
    """Per-column correlation via a window view folded against the taps.

    The output buffer is reused across calls; callers fold it into fresh
    arrays before the next sweep.
    """

    def __init__(
        self, shape: tuple[int, int], taps: NDArray, top: int, n_out: int
    ) -> None:
        n0, n1 = shape
        self._taps = np.ascontiguousarray(taps, dtype=np.float64)
        height = max(top + n0, n_out + len(taps) - 1)
        self._frame = np.zeros((height, n1))
        self._rows = slice(top, top + n0)
        self._n_out = n_out
        self._out = np.empty((n_out, n1))

    def __call__(self, f: NDArray) -> NDArray:
        self._frame[self._rows] = f
        windows = sliding_window_view(self._frame, self._taps.size, axis=0)
        np.matmul(windows[: self._n_out], self._taps, out=self._out)
        return self._out


# ---------------------------------------------------------------------------
# operator


@dataclass
class OpCounter:
    """Monotone tally of full operator applications."""

    mvos: int = 0

    def tick(self) -> None:
        self.mvos += 1


class WaveOperator:
    """The spatial operator H, applied without ever assembling a matrix.

    Immutable apart from ``counter``, which increments once per sweep.
    """

    def __init__(self, model: VelocityModel, pml: PmlProfile | None = None) -> None:
        if pml is None:
            pml = PmlProfile.for_grid(model.grid, c_max=model.c_max)
        if pml.grid != model.grid:
            raise ValueError("velocity model and damping profile use different grids")
        self.grid = model.grid
        self.model = model
        self.pml = pml
        self.counter = OpCounter()

        dx = self.grid.dx
        self.c2 = model.c**2
        # per-staggering damping combinations, fixed for the operator's life
        bxu, byu = pml.beta_x_at_u(), pml.beta_y_at_u()
        self.damping_product = bxu * byu
        self.damping_sum = bxu + byu
        self._bx_wx = pml.beta_x_at_wx()
        self._dif_wx = pml.beta_y_at_wx() - pml.beta_x_at_wx()
        self._by_wy = pml.beta_y_at_wy()
        self._dif_wy = pml.beta_x_at_wy() - pml.beta_y_at_wy()

        self._w_d1 = np.array(d1_staggered_weights().weights) / dx
        self._w_d2 = np.array(d2_centered_weights().weights) / dx**2
        self._surf_d2 = (
            np.array(
                [free_surface_rows("d2_u", j).weights for j in range(_SURFACE_ROWS_D2)]
            )
            / dx**2
        )
        self._surf_d1u = (
            np.array(
                [
                    free_surface_rows("d1_u_half", Fraction(2 * m + 1, 2)).weights
                    for m in range(_SURFACE_ROWS_D1U)
                ]
            )
            / dx
        )
        # first table entry multiplies the boundary sample w_y(0) = 0: drop it
        self._surf_d1wy = (
            np.array(
                [
                    free_surface_rows("d1_wy", j).weights[1:]
                    for j in range(_SURFACE_ROWS_D1WY)
                ]
            )
            / dx
        )

        # one correlator per sweep direction and staggering; the d2 taps sit
        # at offsets -4..+4, node-to-half at -3..+4, half-to-node at -4..+3
        shape_u = self.grid.shape_u
        nyu, nxu = shape_u
        self._d2x_u = _RowCorrelator(shape_u, self._w_d2, left=4, n_out=nxu)
        self._d2y_u = _ColCorrelator(shape_u, self._w_d2, top=4, n_out=nyu)
        self._d1x_u_half = _RowCorrelator(shape_u, self._w_d1, left=3, n_out=nxu - 1)
        self._d1y_u_half = _ColCorrelator(shape_u, self._w_d1, top=3, n_out=nyu - 1)
        self._d1x_wx_node = _RowCorrelator(
            self.grid.shape_wx, self._w_d1, left=4, n_out=nxu
        )
        self._d1y_wy_node = _ColCorrelator(
            self.grid.shape_wy, self._w_d1, top=4, n_out=nyu
        )
        self._tmp_u = np.empty(shape_u)
        self._tmp_wx = np.empty(self.grid.shape_wx)
        self._tmp_wy = np.empty(self.grid.shape_wy)

    # -- derivative sweeps ---------------------------------------------------

    def _d2_depth_u(self, u: NDArray) -> NDArray:
        out = self._d2y_u(u)
        out[:_SURFACE_ROWS_D2] = self._surf_d2 @ u[:9]
        return out

    def _d1_depth_u_to_half(self, u: NDArray) -> NDArray:
        out = self._d1y_u_half(u)
        out[:_SURFACE_ROWS_D1U] = self._surf_d1u @ u[:8]
        return out

    def _d1_depth_wy_to_node(self, wy: NDArray) -> NDArray:
        out = self._d1y_wy_node(wy)
        out[:_SURFACE_ROWS_D1WY] = self._surf_d1wy @ wy[:8]
        return out

    # -- public application ----------------------------------------------------

    def mask_dirichlet(self, arr: NDArray) -> None:
        """Zero the left, right, and bottom edge rows of a collocated array."""
        arr[:, 0] = 0.0
        arr[:, -1] = 0.0
        arr[-1, :] = 0.0

    def derivative_terms(
        self, u: NDArray, wx: NDArray, wy: NDArray
    ) -> tuple[NDArray, NDArray, NDArray]:
        """One stencil sweep: (c^2-scaled stiffness, dwx/dt, dwy/dt).

        Counts as one MVO; both the first-order application and the two-step
        recursion consume exactly this sweep.
        """
        if u.shape != self.grid.shape_u:
            raise ValueError(f"u shape {u.shape} does not match grid {self.grid.shape_u}")
        if wx.shape != self.grid.shape_wx:
            raise ValueError(f"wx shape {wx.shape} does not match grid {self.grid.shape_wx}")
        if wy.shape != self.grid.shape_wy:
            raise ValueError(f"wy shape {wy.shape} does not match grid {self.grid.shape_wy}")
        self.counter.tick()
        stiff = np.add(self._d2x_u(u), self._d2_depth_u(u))
        np.add(stiff, self._d1x_wx_node(wx), out=stiff)
        np.add(stiff, self._d1_depth_wy_to_node(wy), out=stiff)
        np.multiply(stiff, self.c2, out=stiff)
        dwx = np.multiply(self._dif_wx, self._d1x_u_half(u))
        np.multiply(self._bx_wx, wx, out=self._tmp_wx)
        np.subtract(dwx, self._tmp_wx, out=dwx)
        dwy = np.multiply(self._dif_wy, self._d1_depth_u_to_half(u))
        np.multiply(self._by_wy, wy, out=self._tmp_wy)
        np.subtract(dwy, self._tmp_wy, out=dwy)
        return stiff, dwx, dwy

    def apply_fields(
        self, u: NDArray, v: NDArray, wx: NDArray, wy: NDArray
    ) -> tuple[NDArray, NDArray, NDArray, NDArray]:
        """Time derivative of the four fields, source excluded."""
        if v.shape != self.grid.shape_u:
            raise ValueError(f"v shape {v.shape} does not match grid {self.grid.shape_u}")
        stiff, dwx, dwy = self.derivative_terms(u, wx, wy)
        du = v.copy()
        np.multiply(self.damping_product, u, out=self._tmp_u)
        np.subtract(stiff, self._tmp_u, out=stiff)
        np.multiply(self.damping_sum, v, out=self._tmp_u)
        np.subtract(stiff, self._tmp_u, out=stiff)
        self.mask_dirichlet(stiff)
        return du, stiff, dwx, dwy

    def apply_state(self, state: StateVector) -> StateVector:
        """H applied to a plain state (no augmentation tail)."""
        if state.aug is not None:
            raise ValueError("state carries an augmentation tail; use AugmentedOperator")
        du, dv, dwx, dwy = self.apply_fields(state.u, state.v, state.wx, state.wy)
        return StateVector(u=du, v=dv, wx=dwx, wy=dwy, t_tag=state.t_tag)

    def apply_flat(self, flat: NDArray[np.float64]) -> NDArray[np.float64]:
        """H applied to a packed vector."""
        s = StateVector.from_flat(flat, self.grid)
        du, dv, dwx, dwy = self.apply_fields(s.u, s.v, s.wx, s.wy)
        return np.concatenate([du.ravel(), dv.ravel(), dwx.ravel(), dwy.ravel()])

    @property
    def n_flat(self) -> int:
        return flat_size(self.grid)


# ---------------------------------------------------------------------------
# source augmentation


@dataclass
class AugmentedOperator:
    """H extended with source-Taylor columns and the shift block.

    The action on (U, e) is (H U + W e, J e) with J the upper shift; seeding
    e with (0, ..., 0, 1) makes the augmented flow reproduce sources that are
    polynomial in time of degree < p exactly over a step.

    Attributes:
        base: the plain operator.
        p: Taylor order, >= 1.
        t_n: expansion time of the source derivatives, s.
        w_values: f^(k)(t_n) for k = 0..p-1 at the source node.
        node: source node (row, col).
        v_index: packed index of the source's v sample.
    """

    base: WaveOperator
    p: int
    t_n: float
    w_values: NDArray[np.float64] = field(repr=False)
    node: tuple[int, int] = (0, 0)
    v_index: int = 0

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError("augmentation order must be >= 1")
        if len(self.w_values) != self.p:
            raise ValueError("need one source derivative per augmentation order")

    @property
    def grid(self) -> StaggeredGrid:
        return self.base.grid

    @property
    def counter(self) -> OpCounter:
        return self.base.counter

    @property
    def n_flat(self) -> int:
        return flat_size(self.grid, self.p)

    def seed(self) -> NDArray[np.float64]:
        """Initial augmentation tail: last entry one."""
        e = np.zeros(self.p)
        e[-1] = 1.0
        return e

    def extend(self, flat_main: NDArray[np.float64]) -> NDArray[np.float64]:
        """Append a fresh seed tail to a plain packed vector."""
        return np.concatenate([flat_main, self.seed()])

    def restrict(self, flat_aug: NDArray[np.float64]) -> NDArray[np.float64]:
        """Drop the augmentation tail."""
        return flat_aug[: flat_size(self.grid)]

    def _tail_dot(self, aug: NDArray[np.float64]) -> float:
        # W e: column p-1-k carries f^(k), so the tail pairs with w reversed
        return float(np.dot(self.w_values, aug[::-1]))

    def apply_state(self, state: StateVector) -> StateVector:
        if state.aug is None or len(state.aug) != self.p:
            raise ValueError(f"state must carry {self.p} augmentation scalars")
        du, dv, dwx, dwy = self.base.apply_fields(state.u, state.v, state.wx, state.wy)
        dv[self.node] += self._tail_dot(state.aug)
        d_aug = np.zeros(self.p)
        d_aug[:-1] = state.aug[1:]
        return StateVector(u=du, v=dv, wx=dwx, wy=dwy, aug=d_aug, t_tag=state.t_tag)

    def apply_flat(self, flat: NDArray[np.float64]) -> NDArray[np.float64]:
        n = flat_size(self.grid)
        if len(flat) != n + self.p:
            raise ValueError(f"flat length {len(flat)}, expected {n + self.p}")
        s = StateVector.from_flat(flat[:n], self.grid)
        du, dv, dwx, dwy = self.base.apply_fields(s.u, s.v, s.wx, s.wy)
        dv[self.node] += self._tail_dot(flat[n:])
        d_aug = np.zeros(self.p)
        d_aug[:-1] = flat[n + 1 :]
        return np.concatenate([du.ravel(), dv.ravel(), dwx.ravel(), dwy.ravel(), d_aug])

    def w_column(self, k: int) -> NDArray[np.float64]:
        """Packed column holding f^(k)(t_n) at the source's v sample."""
        if not 0 <= k < self.p:
            raise ValueError(f"derivative order must lie in [0, {self.p})")
        col = np.zeros(flat_size(self.grid))
        col[self.v_index] = self.w_values[k]
        return col


def build_augmented(
    base: WaveOperator, p: int, t_n: float, source: SourceInjection
) -> AugmentedOperator:
    """Augment an operator with the source's Taylor data at time t_n.

    Raises:
        ValueError: p < 1, or p - 1 exceeds the wavelet's derivative cap.
    """
    if p < 1:
        raise ValueError("augmentation order must be >= 1")
    w_values = source.derivative_stack(t_n, p)
    return AugmentedOperator(
        base=base,
        p=p,
        t_n=t_n,
        w_values=w_values,
        node=source.node,
        v_index=v_flat_index(base.grid, source.node),
    )


# ---------------------------------------------------------------------------
# forcing protocol (explicit schemes evaluate f(t) directly)


class Forcing(Protocol):
    def add_to(self, out: NDArray[np.float64], t: float, scale: float = 1.0) -> None: ...


class PointForcing:
    """Scalar time signal added at one packed index."""

    def __init__(self, index: int, fn: Callable[[float], float]) -> None:
        self.index = index
        self.fn = fn

    def add_to(self, out: NDArray[np.float64], t: float, scale: float = 1.0) -> None:
        out[self.index] += scale * self.fn(t)


class DenseForcing:
    """Whole-vector forcing, intended for small dense experiments."""

    def __init__(self, fn: Callable[[float], NDArray[np.float64]]) -> None:
        self.fn = fn

    def add_to(self, out: NDArray[np.float64], t: float, scale: float = 1.0) -> None:
        out += scale * np.asarray(self.fn(t))


def forcing_for(op: WaveOperator, source: SourceInjection) -> PointForcing:
    """Point forcing feeding the source's v sample of a packed vector."""
    return PointForcing(v_flat_index(op.grid, source.node), source.value)


# ---------------------------------------------------------------------------
# spectral enclosure


class SpectralBounds(NamedTuple):
    """Safety-inflated bounds on the operator spectrum.

    Eigenvalues lie in the rectangle [-rho_real, 0] x [-i rho_imag, i rho_imag].
    """

    rho_imag: float
    rho_real: float


def spectral_bounds(op, tol: float = 1e-4, max_iter: int = 300) -> SpectralBounds:
    """Estimate enclosure radii for the operator's eigenvalues.

    Power iteration on the squared operator estimates the spectral radius
    (squaring turns the dominant conjugate pair into one real eigenvalue);
    the real part is bounded analytically by the largest damping sum.  Both
    are inflated by 1.1.  If the iteration fails to settle within
    ``max_iter``, the Gershgorin-style fallback bound replaces the estimate.

    Results are memoized on the operator instance.
    """
    if isinstance(op, AugmentedOperator):
        # the augmentation block is nilpotent: it only adds eigenvalue zero
        return spectral_bounds(op.base, tol=tol, max_iter=max_iter)

    cache = getattr(op, "_bounds_cache", None)
    if cache is None:
        cache = {}
        op._bounds_cache = cache
    if tol in cache:
        return cache[tol]

    rng = np.random.default_rng(1234)
    v = rng.standard_normal(flat_size(op.grid))
    v /= np.linalg.norm(v)
    estimate = 0.0
    previous = np.inf
    converged = False
    for _ in range(max_iter):
        w = op.apply_flat(op.apply_flat(v))
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            estimate = 0.0
            converged = True
            break
        estimate = float(np.sqrt(norm_w))
        if abs(estimate - previous) <= tol * estimate:
            converged = True
            break
        previous = estimate
        v = w / norm_w
    if not converged:
        weight_mass = float(sum(abs(float(w)) for w in D2_CENTERED[1:])) * 2 + abs(
            float(D2_CENTERED[0])
        )
        estimate = op.model.c_max * float(np.sqrt(2.0 * weight_mass)) / op.grid.dx

    result = SpectralBounds(
        rho_imag=1.1 * estimate, rho_real=1.1 * op.pml.max_beta_sum()
    )
    cache[tol] = result
    return result


# ---------------------------------------------------------------------------
# dense probe (toy sizes only)


def assemble_dense(apply_flat: Callable[[NDArray], NDArray], n: int) -> NDArray:
    """Materialize a matrix-free operator by probing unit vectors."""
    cols = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        cols[:, i] = apply_flat(e)
        e[i] = 0.0
    return cols
