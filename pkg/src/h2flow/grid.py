"""Structured cell-centred grids, rock fields and two-point transmissibilities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERIOR, DIRICHLET, NOFLUX = 0, 1, 2
_TAGS = {"dirichlet": DIRICHLET, "noflux": NOFLUX}
SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


@dataclass
class Grid:
    """Cell-centred grid on a box; faces are listed x-faces first.

    ``face_cells[f] = (i, j)`` with ``j = -1`` on the boundary, in which case
    the normal points out of the domain.  ``dist[f]`` is the centre-to-centre
    distance (centre-to-face on the boundary).
    """

    dim: int
    shape: tuple
    spacing: tuple
    centers: np.ndarray
    volumes: np.ndarray
    face_cells: np.ndarray
    face_area: np.ndarray
    face_normal: np.ndarray
    face_center: np.ndarray
    dist: np.ndarray
    tags: np.ndarray
    face_side: list
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @property
    def n_cells(self):
        return self.volumes.size

    @property
    def n_faces(self):
        return self.face_area.size

    @property
    def dirichlet_faces(self):
        return np.flatnonzero(self.tags == DIRICHLET)

    @property
    def flux_faces(self):
        """Faces that carry flux: interior and Dirichlet."""
        return np.flatnonzero(self.tags != NOFLUX)

    def geometric_factor(self):
        """Area over distance for every face."""
        return self.face_area / self.dist

    def gravity_drop(self):
        """g . (x_j - x_i) per face, with x_j the face centre on the boundary."""
        i, j = self.face_cells.T
        xj = np.where((j >= 0)[:, None], self.centers[np.maximum(j, 0)], self.face_center)
        return (xj - self.centers[i]) @ self.gravity


def parse_boundary(spec, dim):
    """Parse e.g. ``"left=dirichlet, rest=noflux"`` into a side -> tag map."""
    sides = SIDES_1D if dim == 1 else SIDES_2D
    out = {}
    rest = None
    if isinstance(spec, str):
        items = [kv.strip() for kv in spec.split(",") if kv.strip()]
        spec = {}
        for kv in items:
            k, _, v = kv.partition("=")
            spec[k.strip()] = v.strip()
    for k, v in spec.items():
        v = v.lower()
        if v not in _TAGS:
            raise ValueError(f"unknown boundary type {v!r}")
        if k == "rest":
            rest = _TAGS[v]
        elif k in sides:
            out[k] = _TAGS[v]
        else:
            raise ValueError(f"unknown side {k!r} for a {dim}D grid")
    for side in sides:
        if side not in out:
            if rest is None:
                raise ValueError(f"boundary side {side!r} not specified")
            out[side] = rest
    return out


def build_grid(lengths, cells, boundary="left=dirichlet, rest=noflux", gravity=None,
               allow_closed=False):
    """Build a 1D or 2D box grid.

    A grid without Dirichlet faces is rejected unless ``allow_closed``
    (closed domains are only meaningful for conservation checks).
    """
    lengths = tuple(float(v) for v in np.atleast_1d(lengths))
    cells = tuple(int(v) for v in np.atleast_1d(cells))
    dim = len(cells)
    if dim not in (1, 2) or len(lengths) != dim:
        raise ValueError("grid must be 1D or 2D with matching lengths/cells")
    if any(n <= 0 for n in cells):
        raise ValueError("grid needs at least one cell per direction")
    if any(L <= 0 for L in lengths):
        raise ValueError("grid extents must be positive")
    tagmap = parse_boundary(boundary, dim)
    h = tuple(L / n for L, n in zip(lengths, cells))
    g = np.zeros(dim) if gravity is None else np.asarray(gravity, dtype=float)
    if g.shape != (dim,):
        raise ValueError("gravity vector has the wrong dimension")

    if dim == 1:
        nx, = cells
        dx, = h
        centers = ((np.arange(nx) + 0.5) * dx)[:, None]
        volumes = np.full(nx, dx)
        fc, area, normal, fcen, dist, tags, side = [], [], [], [], [], [], []
        fc.append((0, -1)); normal.append((-1.0,)); fcen.append((0.0,)); dist.append(dx / 2)
        tags.append(tagmap["left"]); side.append("left")
        for i in range(nx - 1):
            fc.append((i, i + 1)); normal.append((1.0,)); fcen.append(((i + 1) * dx,))
            dist.append(dx); tags.append(INTERIOR); side.append(None)
        fc.append((nx - 1, -1)); normal.append((1.0,)); fcen.append((lengths[0],)); dist.append(dx / 2)
        tags.append(tagmap["right"]); side.append("right")
        area = [1.0] * len(fc)
    else:
        nx, ny = cells
        dx, dy = h
        idx = lambda i, j: i + nx * j  # noqa: E731
        X, Y = np.meshgrid((np.arange(nx) + 0.5) * dx, (np.arange(ny) + 0.5) * dy, indexing="xy")
        centers = np.column_stack([X.ravel(), Y.ravel()])
        volumes = np.full(nx * ny, dx * dy)
        fc, area, normal, fcen, dist, tags, side = [], [], [], [], [], [], []
        for j in range(ny):
            yc = (j + 0.5) * dy
            for i in range(nx + 1):
                area.append(dy); fcen.append((i * dx, yc))
                if i == 0:
                    fc.append((idx(0, j), -1)); normal.append((-1.0, 0.0)); dist.append(dx / 2)
                    tags.append(tagmap["left"]); side.append("left")
                elif i == nx:
                    fc.append((idx(nx - 1, j), -1)); normal.append((1.0, 0.0)); dist.append(dx / 2)
                    tags.append(tagmap["right"]); side.append("right")
                else:
                    fc.append((idx(i - 1, j), idx(i, j))); normal.append((1.0, 0.0)); dist.append(dx)
                    tags.append(INTERIOR); side.append(None)
        for j in range(ny + 1):
            for i in range(nx):
                xc = (i + 0.5) * dx
                area.append(dx); fcen.append((xc, j * dy))
                if j == 0:
                    fc.append((idx(i, 0), -1)); normal.append((0.0, -1.0)); dist.append(dy / 2)
                    tags.append(tagmap["bottom"]); side.append("bottom")
                elif j == ny:
                    fc.append((idx(i, ny - 1), -1)); normal.append((0.0, 1.0)); dist.append(dy / 2)
                    tags.append(tagmap["top"]); side.append("top")
                else:
                    fc.append((idx(i, j - 1), idx(i, j))); normal.append((0.0, 1.0)); dist.append(dy)
                    tags.append(INTERIOR); side.append(None)

    grid = Grid(dim=dim, shape=cells, spacing=h, centers=centers, volumes=volumes,
                face_cells=np.array(fc, dtype=np.int64), face_area=np.array(area, dtype=float),
                face_normal=np.array(normal, dtype=float), face_center=np.array(fcen, dtype=float),
                dist=np.array(dist, dtype=float), tags=np.array(tags, dtype=np.int64),
                face_side=side, gravity=g)
    if grid.dirichlet_faces.size == 0 and not allow_closed:
        raise ValueError("no Dirichlet boundary: pressures are not determined")
    return grid


@dataclass
class RockField:
    """Per-cell porosity, permeability [m^2] and sources r_g, r_w."""

    porosity: np.ndarray
    permeability: np.ndarray
    r_g: np.ndarray
    r_w: np.ndarray

    @classmethod
    def uniform(cls, grid, porosity=0.3, permeability=1e-13, r_g=0.0, r_w=0.0):
        n = grid.n_cells
        full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()  # noqa: E731
        return cls(full(porosity), full(permeability), full(r_g), full(r_w))


def face_transmissibility(grid, permeability):
    """Two-point transmissibility: area over the series resistance d_i/K_i + d_j/K_j."""
    K = np.asarray(permeability, dtype=float)
    i, j = grid.face_cells.T
    interior = j >= 0
    xf = grid.face_center
    di = np.linalg.norm(xf - grid.centers[i], axis=1)
    dj = np.where(interior, np.linalg.norm(xf - grid.centers[np.maximum(j, 0)], axis=1), 0.0)
    Ki = K[i]
    Kj = np.where(interior, K[np.maximum(j, 0)], 1.0)
    with np.errstate(divide="ignore"):
        res = di / Ki + np.where(interior, dj / Kj, 0.0)
        T = np.where(res > 0, grid.face_area / res, 0.0)
    return np.where(np.isfinite(T), T, 0.0)
