"""Staggered-grid containers and discrete operators.

Layout (MAC): scalars (density, pressure, distance fields) live at cell
centers, velocity components on faces.  Arrays are indexed ``[i, j]`` with
``i`` along x and ``j`` along y:

    centers  (nx, ny)      at ((i+1/2)dx, (j+1/2)dy)
    u-faces  (nx+1, ny)    at (i dx, (j+1/2)dy)      x-velocity
    v-faces  (nx, ny+1)    at ((i+1/2)dx, j dy)      y-velocity
    nodes    (nx+1, ny+1)  at (i dx, j dy)

Exposed tensor fields (symmetric gradient, stress) are stored at cell
centers; the off-diagonal entry is evaluated at nodes and averaged back.
That single convention is used everywhere a tensor leaves this module.

Reductions go through ``tree_sum`` (fixed binary tree) so serial and
parallel stencil assembly produce bitwise-identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import KernelUnresolved

# Spatial dimension of the discretization.  The formulas in the solver are
# dimension-generic; the grid layout below is the 2-D instantiation.
DIM = 2

_WORKERS = 1


def set_num_workers(k: int) -> None:
    global _WORKERS
    if k < 1:
        raise ValueError("worker count must be >= 1")
    _WORKERS = int(k)


def get_num_workers() -> int:
    return _WORKERS


def run_chunked(n_items: int, fn) -> None:
    """Apply fn(lo, hi) over [0, n_items) in contiguous chunks.

    Chunks write to disjoint output slices, so the result is bitwise
    identical for any worker count.
    """
    if _WORKERS == 1 or n_items < 4 * _WORKERS:
        fn(0, n_items)
        return
    bounds = np.linspace(0, n_items, _WORKERS + 1).astype(int)
    with ThreadPoolExecutor(max_workers=_WORKERS) as pool:
        futs = [pool.submit(fn, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for f in futs:
            f.result()


def tree_sum(values) -> float:
    """Deterministic reduction: strict binary tree with zero padding.

    The tree shape depends only on the element count, never on the worker
    count, so parallel and serial assembly reduce identically.
    """
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.concatenate([a, [0.0]])
        a = a[0::2] + a[1::2]
    return float(a[0])


@dataclass(frozen=True)
class StaggeredGrid:
    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid must be at least 8x8")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def Lx(self) -> float:
        return self.nx * self.dx

    @property
    def Ly(self) -> float:
        return self.ny * self.dy

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    # 1-d coordinate arrays
    def xc(self):
        return (np.arange(self.nx) + 0.5) * self.dx

    def yc(self):
        return (np.arange(self.ny) + 0.5) * self.dy

    def xf(self):
        return np.arange(self.nx + 1) * self.dx

    def yf(self):
        return np.arange(self.ny + 1) * self.dy

    # 2-d coordinate meshes, indexing 'ij' so arr[i, j] follows (x, y)
    def cell_xy(self):
        return np.meshgrid(self.xc(), self.yc(), indexing="ij")

    def uface_xy(self):
        return np.meshgrid(self.xf(), self.yc(), indexing="ij")

    def vface_xy(self):
        return np.meshgrid(self.xc(), self.yf(), indexing="ij")

    def node_xy(self):
        return np.meshgrid(self.xf(), self.yf(), indexing="ij")

    def shape(self, loc: str):
        return {
            "centers": (self.nx, self.ny),
            "ufaces": (self.nx + 1, self.ny),
            "vfaces": (self.nx, self.ny + 1),
            "nodes": (self.nx + 1, self.ny + 1),
        }[loc]


@dataclass
class ScalarField:
    grid: StaggeredGrid
    values: np.ndarray
    loc: str = "centers"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape(self.loc):
            raise ValueError(f"shape {self.values.shape} does not match "
                             f"{self.loc} layout {self.grid.shape(self.loc)}")

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite entries in scalar field")
        return self

    def copy(self):
        return ScalarField(self.grid, self.values.copy(), self.loc)


@dataclass
class VectorField:
    grid: StaggeredGrid
    u: np.ndarray  # (nx+1, ny)
    v: np.ndarray  # (nx, ny+1)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.grid.shape("ufaces"):
            raise ValueError("u array does not match u-face layout")
        if self.v.shape != self.grid.shape("vfaces"):
            raise ValueError("v array does not match v-face layout")

    @classmethod
    def zeros(cls, grid: StaggeredGrid):
        return cls(grid, np.zeros(grid.shape("ufaces")),
                   np.zeros(grid.shape("vfaces")))

    def check_finite(self):
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise FloatingPointError("non-finite entries in vector field")
        return self

    def copy(self):
        return VectorField(self.grid, self.u.copy(), self.v.copy())

    def max_speed(self) -> float:
        mu = float(np.max(np.abs(self.u))) if self.u.size else 0.0
        mv = float(np.max(np.abs(self.v))) if self.v.size else 0.0
        return max(mu, mv)


def divergence(grid: StaggeredGrid, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Conservative cell-centered divergence of a face velocity field."""
    out = np.empty((grid.nx, grid.ny))

    def work(lo, hi):
        out[lo:hi, :] = ((u[lo + 1:hi + 1, :] - u[lo:hi, :]) / grid.dx
                         + (v[lo:hi, 1:] - v[lo:hi, :-1]) / grid.dy)

    run_chunked(grid.nx, work)
    return out


def face_gradient(grid: StaggeredGrid, f: np.ndarray):
    """Gradient of a cell field onto faces; boundary faces get zero
    (homogeneous-Neumann closure)."""
    gx = np.zeros((grid.nx + 1, grid.ny))
    gy = np.zeros((grid.nx, grid.ny + 1))
    gx[1:-1, :] = (f[1:, :] - f[:-1, :]) / grid.dx
    gy[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / grid.dy
    return gx, gy


def cell_gradient(grid: StaggeredGrid, f: np.ndarray):
    """Centered gradient of a cell field at cell centers (one-sided at
    the first/last cells)."""
    gx = np.empty_like(f)
    gy = np.empty_like(f)
    gx[1:-1, :] = (f[2:, :] - f[:-2, :]) / (2 * grid.dx)
    gx[0, :] = (f[1, :] - f[0, :]) / grid.dx
    gx[-1, :] = (f[-1, :] - f[-2, :]) / grid.dx
    gy[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * grid.dy)
    gy[:, 0] = (f[:, 1] - f[:, 0]) / grid.dy
    gy[:, -1] = (f[:, -1] - f[:, -2]) / grid.dy
    return gx, gy


def _dudy_nodes(grid, u, ub_bottom=None, ub_top=None):
    """du/dx-velocity over dy at nodes; one-sided at the wall rows.

    When wall tangential traces are given the one-sided difference uses the
    half-cell distance to the wall so affine fields stay exact.
    """
    nx, ny, dy = grid.nx, grid.ny, grid.dy
    d = np.empty((nx + 1, ny + 1))
    d[:, 1:-1] = (u[:, 1:] - u[:, :-1]) / dy
    if ub_bottom is None:
        d[:, 0] = (u[:, 1] - u[:, 0]) / dy
    else:
        d[:, 0] = (u[:, 0] - ub_bottom) / (0.5 * dy)
    if ub_top is None:
        d[:, -1] = (u[:, -1] - u[:, -2]) / dy
    else:
        d[:, -1] = (ub_top - u[:, -1]) / (0.5 * dy)
    return d


def _dvdx_nodes(grid, v, vb_left=None, vb_right=None):
    nx, dx = grid.nx, grid.dx
    d = np.empty((nx + 1, grid.ny + 1))
    d[1:-1, :] = (v[1:, :] - v[:-1, :]) / dx
    if vb_left is None:
        d[0, :] = (v[1, :] - v[0, :]) / dx
    else:
        d[0, :] = (v[0, :] - vb_left) / (0.5 * dx)
    if vb_right is None:
        d[-1, :] = (v[-1, :] - v[-2, :]) / dx
    else:
        d[-1, :] = (vb_right - v[-1, :]) / (0.5 * dx)
    return d


def sym_gradient(grid: StaggeredGrid, u: np.ndarray, v: np.ndarray,
                 wall_tangential=None):
    """Symmetric velocity gradient as cell tensors (D11, D12, D22).

    The off-diagonal part is formed at nodes (one-sided at walls, using
    tangential wall traces when provided) and averaged to cells; exact for
    affine fields, so rigid fields land in the kernel to round-off.

    wall_tangential: optional (ub_bottom, ub_top, vb_left, vb_right) traces
    sampled at u-face x / v-face y coordinates.
    """
    d11 = np.empty((grid.nx, grid.ny))
    d22 = np.empty((grid.nx, grid.ny))

    def work(lo, hi):
        d11[lo:hi, :] = (u[lo + 1:hi + 1, :] - u[lo:hi, :]) / grid.dx
        d22[lo:hi, :] = (v[lo:hi, 1:] - v[lo:hi, :-1]) / grid.dy

    run_chunked(grid.nx, work)

    if wall_tangential is None:
        ub_b = ub_t = vb_l = vb_r = None
    else:
        ub_b, ub_t, vb_l, vb_r = wall_tangential
    d12n = 0.5 * (_dudy_nodes(grid, u, ub_b, ub_t)
                  + _dvdx_nodes(grid, v, vb_l, vb_r))
    d12 = 0.25 * (d12n[:-1, :-1] + d12n[1:, :-1]
                  + d12n[:-1, 1:] + d12n[1:, 1:])
    return d11, d12, d22


def full_gradient(grid: StaggeredGrid, u: np.ndarray, v: np.ndarray,
                  wall_tangential=None):
    """Velocity gradient (dudx, dudy, dvdx, dvdy) at cell centers."""
    dudx = (u[1:, :] - u[:-1, :]) / grid.dx
    dvdy = (v[:, 1:] - v[:, :-1]) / grid.dy
    if wall_tangential is None:
        ub_b = ub_t = vb_l = vb_r = None
    else:
        ub_b, ub_t, vb_l, vb_r = wall_tangential
    dyn = _dudy_nodes(grid, u, ub_b, ub_t)
    dudy = 0.25 * (dyn[:-1, :-1] + dyn[1:, :-1] + dyn[:-1, 1:] + dyn[1:, 1:])
    dxn = _dvdx_nodes(grid, v, vb_l, vb_r)
    dvdx = 0.25 * (dxn[:-1, :-1] + dxn[1:, :-1] + dxn[:-1, 1:] + dxn[1:, 1:])
    return dudx, dudy, dvdx, dvdy


def integrate(grid: StaggeredGrid, values: np.ndarray, mask=None) -> float:
    """Mask-weighted cell integral with a deterministic reduction order."""
    if mask is not None:
        vals = np.where(mask, values, 0.0)
    else:
        vals = values
    return tree_sum(vals) * grid.cell_volume


@dataclass(frozen=True)
class MollifierKernel:
    """Compact, radially symmetric, unit-mass smoothing stencil."""

    radius: float
    dx: float
    dy: float
    weights: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, radius: float, dx: float, dy: float) -> "MollifierKernel":
        if radius < 2 * max(dx, dy):
            raise KernelUnresolved(
                f"mollifier radius {radius} under-resolved: needs >= 2*max(dx,dy)"
                f" = {2 * max(dx, dy)}")
        mx = int(np.floor(radius / dx))
        my = int(np.floor(radius / dy))
        ii, jj = np.meshgrid(np.arange(-mx, mx + 1), np.arange(-my, my + 1),
                             indexing="ij")
        q = np.hypot(ii * dx, jj * dy) / radius
        # Wendland-type C2 bump; sampled then renormalized to unit sum.
        w = np.where(q < 1.0, (1.0 - q) ** 4 * (1.0 + 4.0 * q), 0.0)
        w /= tree_sum(w)
        return cls(radius=radius, dx=dx, dy=dy, weights=w)


def mollify(values: np.ndarray, kernel: MollifierKernel) -> np.ndarray:
    """Discrete convolution with zero extension outside the domain."""
    return ndimage.convolve(np.asarray(values, dtype=np.float64),
                            kernel.weights, mode="constant", cval=0.0)


def mollify_vector(grid: StaggeredGrid, u: np.ndarray, v: np.ndarray,
                   kernel: MollifierKernel):
    return mollify(u, kernel), mollify(v, kernel)


def interp_uface(grid: StaggeredGrid, u: np.ndarray, x, y):
    """Bilinear sample of a u-face array at points (x, y)."""
    return _bilinear(u, np.asarray(x) / grid.dx,
                     np.asarray(y) / grid.dy - 0.5)


def interp_vface(grid: StaggeredGrid, v: np.ndarray, x, y):
    return _bilinear(v, np.asarray(x) / grid.dx - 0.5,
                     np.asarray(y) / grid.dy)


def interp_cell(grid: StaggeredGrid, f: np.ndarray, x, y):
    return _bilinear(f, np.asarray(x) / grid.dx - 0.5,
                     np.asarray(y) / grid.dy - 0.5)


def _bilinear(a: np.ndarray, fi, fj):
    ni, nj = a.shape
    i0 = np.clip(np.floor(fi).astype(int), 0, ni - 2)
    j0 = np.clip(np.floor(fj).astype(int), 0, nj - 2)
    ti = np.clip(fi - i0, 0.0, 1.0)
    tj = np.clip(fj - j0, 0.0, 1.0)
    return ((1 - ti) * (1 - tj) * a[i0, j0] + ti * (1 - tj) * a[i0 + 1, j0]
            + (1 - ti) * tj * a[i0, j0 + 1] + ti * tj * a[i0 + 1, j0 + 1])


def faces_to_centers(grid: StaggeredGrid, u: np.ndarray, v: np.ndarray):
    uc = 0.5 * (u[:-1, :] + u[1:, :])
    vc = 0.5 * (v[:, :-1] + v[:, 1:])
    return uc, vc


# ---------------------------------------------------------------------------
# Snapshot I/O: plain structured-grid ASCII, plus optional VTK image data.
# ---------------------------------------------------------------------------

def write_field(path, grid: StaggeredGrid, values: np.ndarray, loc: str):
    values = np.asarray(values)
    with open(path, "w") as f:
        f.write("penaltyflow-field 1\n")
        f.write(f"{grid.nx} {grid.ny}\n")
        f.write(f"{grid.dx!r} {grid.dy!r}\n")
        f.write(loc + "\n")
        for i in range(values.shape[0]):
            f.write(" ".join(repr(float(x)) for x in values[i, :]) + "\n")


def read_field(path):
    with open(path) as f:
        header = f.readline().split()
        if header[0] != "penaltyflow-field":
            raise ValueError("not a penaltyflow field file")
        nx, ny = (int(t) for t in f.readline().split())
        dx, dy = (float(t) for t in f.readline().split())
        loc = f.readline().strip()
        rows = [np.array([float(t) for t in line.split()])
                for line in f if line.strip()]
    return StaggeredGrid(nx, ny, dx, dy), np.vstack(rows), loc


def write_vti(path, grid: StaggeredGrid, cell_fields: dict):
    """ASCII VTK ImageData with one CellData array per entry."""
    nx, ny = grid.nx, grid.ny
    lines = [
        '<?xml version="1.0"?>',
        '<VTKFile type="ImageData" version="0.1" byte_order="LittleEndian">',
        f'  <ImageData WholeExtent="0 {nx} 0 {ny} 0 0" Origin="0 0 0" '
        f'Spacing="{grid.dx!r} {grid.dy!r} 1">',
        f'    <Piece Extent="0 {nx} 0 {ny} 0 0">',
        '      <CellData>',
    ]
    for name, arr in cell_fields.items():
        arr = np.asarray(arr)
        lines.append(f'        <DataArray type="Float64" Name="{name}" '
                     'format="ascii">')
        # VTK cell ordering is x-fastest
        flat = arr.T.ravel()
        lines.append("          " + " ".join(repr(float(x)) for x in flat))
        lines.append('        </DataArray>')
    lines += ['      </CellData>', '    </Piece>', '  </ImageData>',
              '</VTKFile>', '']
    with open(path, "w") as f:
        f.write("\n".join(lines))
