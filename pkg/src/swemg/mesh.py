"""Meshes and the coarse-grid hierarchy.

1D interval meshes and 2D structured quadrilateral channel meshes
(boundary-fitted by transfinite interpolation between the wall curves),
plus coarsening by cell agglomeration: two children per coarse cell in
1D, four in 2D.  Cells are ordered lexicographically (x-major), which
fixes the Gauss-Seidel sweep order everywhere downstream.

Convention: a 1D "edge" is a point interface with measure 1, so the cell
residual is a plain flux difference; cell area is the cell width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import MeshError


@dataclass(frozen=True)
class Cell:
    """Read-only view of one cell."""
    index: int
    centroid: np.ndarray
    area: float
    bed_elevation: float
    edge_indices: tuple


@dataclass(frozen=True)
class Edge:
    """Read-only view of one edge; ``right_cell`` is -1 on the boundary."""
    index: int
    left_cell: int
    right_cell: int
    boundary_tag: Optional[str]
    unit_normal: np.ndarray
    length: float
    midpoint: np.ndarray


@dataclass(frozen=True)
class ParentMap:
    """Agglomeration map from a coarse level into the next finer one."""
    child_ptr: np.ndarray      # (n_coarse+1,) CSR offsets
    child_idx: np.ndarray      # fine cell indices grouped by coarse cell
    fine_to_coarse: np.ndarray  # (n_fine,)

    def children(self, coarse_index: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[coarse_index]:
                              self.child_ptr[coarse_index + 1]]


class MeshLevel:
    """One mesh level backed by flat arrays (kernels consume these
    directly); ``cells``/``edges`` build lightweight views on demand."""

    def __init__(self, dim, level, centroids, areas, z,
                 edge_left, edge_right, edge_tag, normals, lengths, midpoints,
                 tag_names, cell_edge_ptr, cell_edge_idx, shape, parent=None):
        self.dim = dim
        self.level = level
        self.centroids = centroids
        self.areas = areas
        self.z = z
        self.edge_left = edge_left
        self.edge_right = edge_right
        self.edge_tag = edge_tag
        self.normals = normals          # (ne, 2); ny column is zero in 1D
        self.lengths = lengths
        self.midpoints = midpoints
        self.tag_names = tuple(tag_names)
        self.cell_edge_ptr = cell_edge_ptr
        self.cell_edge_idx = cell_edge_idx
        self.shape = tuple(shape)
        self.parent = parent
        self._freeze_arrays()
        self._validate()

    def _freeze_arrays(self):
        for a in (self.centroids, self.areas, self.z, self.edge_left,
                  self.edge_right, self.edge_tag, self.normals, self.lengths,
                  self.midpoints, self.cell_edge_ptr, self.cell_edge_idx):
            a.setflags(write=False)

    def _validate(self):
        if np.any(self.areas <= 0.0):
            raise MeshError("non-positive cell area")
        if not np.all(np.isfinite(self.z)):
            raise MeshError("non-finite bed elevation")
        nrm = np.hypot(self.normals[:, 0], self.normals[:, 1])
        if np.any(np.abs(nrm - 1.0) > 1e-14):
            raise MeshError("edge normals are not unit vectors")

    @property
    def n_cells(self) -> int:
        return self.areas.shape[0]

    @property
    def n_edges(self) -> int:
        return self.lengths.shape[0]

    @property
    def m(self) -> int:
        """Block size of the conserved state (2 in 1D, 3 in 2D)."""
        return self.dim + 1

    def cell_edges(self, i: int) -> np.ndarray:
        return self.cell_edge_idx[self.cell_edge_ptr[i]:self.cell_edge_ptr[i + 1]]

    @property
    def cells(self):
        return [Cell(i, self.centroids[i], float(self.areas[i]), float(self.z[i]),
                     tuple(self.cell_edges(i))) for i in range(self.n_cells)]

    @property
    def edges(self):
        out = []
        for e in range(self.n_edges):
            tag = None if self.edge_tag[e] < 0 else self.tag_names[self.edge_tag[e]]
            out.append(Edge(e, int(self.edge_left[e]), int(self.edge_right[e]),
                            tag, self.normals[e], float(self.lengths[e]),
                            self.midpoints[e]))
        return out

    def total_area(self) -> float:
        return float(self.areas.sum())

    def dump(self, path) -> None:
        """Columnar text dump: index, centroid coordinates, area, z."""
        with open(path, "w") as f:
            for i in range(self.n_cells):
                coords = " ".join(f"{c:.17g}" for c in self.centroids[i])
                f.write(f"{i} {coords} {self.areas[i]:.17g} {self.z[i]:.17g}\n")


@dataclass(frozen=True)
class MeshHierarchy:
    """Mesh levels ordered finest (index 0) to coarsest."""
    levels: list

    @property
    def n_coarse_levels(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, l: int) -> MeshLevel:
        return self.levels[l]

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel planform for 2D meshes.

    ``rectangle`` is a plain box; ``wedge`` has straight walls converging
    at a fixed angle from a start station (optionally re-straightening at
    an end station); ``cosine`` is a smooth symmetric throat with total
    width w_ref - (w_ref - w_min)*cos^2(pi (x-c)/L) inside |x-c| <= L/2.
    """
    kind: str
    x_min: float
    x_max: float
    y_min: float = 0.0
    y_max: float = 0.0
    half_width: float = 0.0
    angle_deg: float = 0.0
    constrict_start: float = 0.0
    constrict_end: Optional[float] = None
    width_ref: float = 1.0
    width_min: float = 1.0
    throat_center: float = 0.0
    throat_length: float = 1.0

    @classmethod
    def rectangle(cls, x_min, x_max, y_min, y_max) -> "ChannelSpec":
        return cls("rectangle", x_min, x_max, y_min=y_min, y_max=y_max)

    @classmethod
    def wedge(cls, x_min, x_max, half_width, angle_deg, constrict_start,
              constrict_end=None) -> "ChannelSpec":
        return cls("wedge", x_min, x_max, half_width=half_width,
                   angle_deg=angle_deg, constrict_start=constrict_start,
                   constrict_end=constrict_end)

    @classmethod
    def cosine(cls, x_min, x_max, width_ref, width_min, throat_center,
               throat_length) -> "ChannelSpec":
        return cls("cosine", x_min, x_max, width_ref=width_ref,
                   width_min=width_min, throat_center=throat_center,
                   throat_length=throat_length)

    def wall_top(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "rectangle":
            return np.full_like(x, self.y_max)
        if self.kind == "wedge":
            run = x - self.constrict_start
            if self.constrict_end is not None:
                run = np.clip(run, 0.0, self.constrict_end - self.constrict_start)
            else:
                run = np.clip(run, 0.0, None)
            return self.half_width - math.tan(math.radians(self.angle_deg)) * run
        if self.kind == "cosine":
            s = x - self.throat_center
            w = np.where(np.abs(s) <= 0.5 * self.throat_length,
                         self.width_ref - (self.width_ref - self.width_min)
                         * np.cos(np.pi * s / self.throat_length) ** 2,
                         self.width_ref)
            return 0.5 * w
        raise MeshError(f"unknown channel kind {self.kind!r}")

    def wall_bottom(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "rectangle":
            return np.full_like(x, self.y_min)
        return -self.wall_top(x)

    def validate(self) -> None:
        if not self.x_max > self.x_min:
            raise MeshError("channel requires x_max > x_min")
        xs = np.linspace(self.x_min, self.x_max, 513)
        widths = self.wall_top(xs) - self.wall_bottom(xs)
        if np.any(widths <= 0.0):
            raise MeshError("degenerate channel: non-positive width")


def build_uniform_1d(x_min: float, x_max: float, n_cells: int,
                     bed: Callable) -> MeshLevel:
    """Uniform interval mesh with bed sampled at cell centroids."""
    if n_cells < 2:
        raise MeshError("need at least 2 cells")
    if not x_max > x_min:
        raise MeshError("need x_max > x_min")
    dx = (x_max - x_min) / n_cells
    xc = x_min + dx * (np.arange(n_cells) + 0.5)
    z = np.asarray(bed(xc), dtype=float)
    if z.shape != (n_cells,):
        z = np.broadcast_to(np.asarray(z, dtype=float), (n_cells,)).copy()
    if not np.all(np.isfinite(z)):
        raise MeshError("bed function returned non-finite values")

    ne = n_cells + 1
    edge_left = np.empty(ne, dtype=np.int64)
    edge_right = np.empty(ne, dtype=np.int64)
    edge_tag = np.full(ne, -1, dtype=np.int64)
    normals = np.zeros((ne, 2))
    lengths = np.ones(ne)
    midpoints = np.empty((ne, 1))
    # edge k sits at node x_min + k*dx; owned by the cell to its right for
    # k=0, left otherwise
    edge_left[0] = 0
    edge_right[0] = -1
    edge_tag[0] = 0
    normals[0, 0] = -1.0
    midpoints[0, 0] = x_min
    for k in range(1, n_cells):
        edge_left[k] = k - 1
        edge_right[k] = k
        normals[k, 0] = 1.0
        midpoints[k, 0] = x_min + k * dx
    edge_left[ne - 1] = n_cells - 1
    edge_right[ne - 1] = -1
    edge_tag[ne - 1] = 1
    normals[ne - 1, 0] = 1.0
    midpoints[ne - 1, 0] = x_max

    cell_edge_ptr = np.arange(0, 2 * n_cells + 1, 2, dtype=np.int64)
    cell_edge_idx = np.empty(2 * n_cells, dtype=np.int64)
    for i in range(n_cells):
        cell_edge_idx[2 * i] = i
        cell_edge_idx[2 * i + 1] = i + 1

    return MeshLevel(
        dim=1, level=0,
        centroids=xc.reshape(-1, 1), areas=np.full(n_cells, dx), z=z,
        edge_left=edge_left, edge_right=edge_right, edge_tag=edge_tag,
        normals=normals, lengths=lengths, midpoints=midpoints,
        tag_names=("left", "right"),
        cell_edge_ptr=cell_edge_ptr, cell_edge_idx=cell_edge_idx,
        shape=(n_cells,))


def _quad_area_centroid(p):
    """Shoelace area and centroid of a quad given as 4 CCW points."""
    x = p[:, 0]
    y = p[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return a, cx, cy


def build_channel_2d(geometry: ChannelSpec, nx: int, ny: int,
                     bed: Callable) -> MeshLevel:
    """Structured boundary-fitted quadrilateral mesh of a channel.

    Nodes interpolate linearly between the bottom and top wall curves at
    uniformly spaced stations; cells are indexed x-major and edge normals
    point from the lower-index to the higher-index cell (outward on the
    boundary).
    """
    if nx < 1 or ny < 1:
        raise MeshError("need nx, ny >= 1")
    geometry.validate()
    xs = np.linspace(geometry.x_min, geometry.x_max, nx + 1)
    yb = geometry.wall_bottom(xs)
    yt = geometry.wall_top(xs)
    eta = np.linspace(0.0, 1.0, ny + 1)
    nodes = np.empty((nx + 1, ny + 1, 2))
    nodes[:, :, 0] = xs[:, None]
    nodes[:, :, 1] = yb[:, None] + eta[None, :] * (yt - yb)[:, None]

    n_cells = nx * ny
    centroids = np.empty((n_cells, 2))
    areas = np.empty(n_cells)
    for ix in range(nx):
        for iy in range(ny):
            quad = np.array([nodes[ix, iy], nodes[ix + 1, iy],
                             nodes[ix + 1, iy + 1], nodes[ix, iy + 1]])
            a, cx, cy = _quad_area_centroid(quad)
            if a <= 0.0:
                raise MeshError("non-positive cell area after mapping")
            i = ix * ny + iy
            areas[i] = a
            centroids[i] = (cx, cy)

    z = np.asarray(bed(centroids[:, 0], centroids[:, 1]), dtype=float)
    if z.shape != (n_cells,):
        z = np.broadcast_to(z, (n_cells,)).copy()
    if not np.all(np.isfinite(z)):
        raise MeshError("bed function returned non-finite values")

    tag_names = ("left", "right", "bottom", "top")
    edge_left = []
    edge_right = []
    edge_tag = []
    normals = []
    lengths = []
    midpoints = []
    cell_edge_lists = [[] for _ in range(n_cells)]

    def add_edge(a, b, ci, cj, tag):
        t = b - a
        ln = float(np.hypot(t[0], t[1]))
        n = np.array([t[1], -t[0]]) / ln
        mid = 0.5 * (a + b)
        ref = centroids[cj] - centroids[ci] if cj >= 0 else mid - centroids[ci]
        if n @ ref < 0.0:
            n = -n
        e = len(lengths)
        edge_left.append(ci)
        edge_right.append(cj)
        edge_tag.append(tag)
        normals.append(n)
        lengths.append(ln)
        midpoints.append(mid)
        cell_edge_lists[ci].append(e)
        if cj >= 0:
            cell_edge_lists[cj].append(e)

    # faces normal to x (constant node-index ix)
    for ix in range(nx + 1):
        for iy in range(ny):
            a = nodes[ix, iy]
            b = nodes[ix, iy + 1]
            if ix == 0:
                add_edge(a, b, iy, -1, 0)
            elif ix == nx:
                add_edge(a, b, (nx - 1) * ny + iy, -1, 1)
            else:
                add_edge(a, b, (ix - 1) * ny + iy, ix * ny + iy, -1)
    # faces normal to y (constant node-index iy)
    for iy in range(ny + 1):
        for ix in range(nx):
            a = nodes[ix, iy]
            b = nodes[ix + 1, iy]
            if iy == 0:
                add_edge(a, b, ix * ny, -1, 2)
            elif iy == ny:
                add_edge(a, b, ix * ny + ny - 1, -1, 3)
            else:
                add_edge(a, b, ix * ny + iy - 1, ix * ny + iy, -1)

    ptr = np.zeros(n_cells + 1, dtype=np.int64)
    for i, lst in enumerate(cell_edge_lists):
        ptr[i + 1] = ptr[i] + len(lst)
    idx = np.concatenate([np.asarray(lst, dtype=np.int64)
                          for lst in cell_edge_lists])

    return MeshLevel(
        dim=2, level=0,
        centroids=centroids, areas=areas, z=z,
        edge_left=np.asarray(edge_left, dtype=np.int64),
        edge_right=np.asarray(edge_right, dtype=np.int64),
        edge_tag=np.asarray(edge_tag, dtype=np.int64),
        normals=np.asarray(normals), lengths=np.asarray(lengths),
        midpoints=np.asarray(midpoints), tag_names=tag_names,
        cell_edge_ptr=ptr, cell_edge_idx=idx, shape=(nx, ny))


def coarsen(fine: MeshLevel) -> MeshLevel:
    """Agglomerate a level: 2 children per coarse cell in 1D, 4 in 2D.

    Coarse cell area/bed are the children's sum / area-weighted mean.
    Fine edges crossing a coarse interface merge by summing their length
    times normal vectors, which keeps the discrete divergence of the
    coarse cell boundary exactly zero.
    """
    if fine.dim == 1:
        n = fine.n_cells
        if n % 2 != 0:
            raise MeshError("1D coarsening needs an even cell count")
        nc = n // 2
        f2c = np.repeat(np.arange(nc, dtype=np.int64), 2)
    else:
        nx, ny = fine.shape
        if nx % 2 != 0 or ny % 2 != 0:
            raise MeshError("2D coarsening needs even counts in each direction")
        ncx, ncy = nx // 2, ny // 2
        ix, iy = np.divmod(np.arange(fine.n_cells, dtype=np.int64), ny)
        f2c = (ix // 2) * ncy + iy // 2
        nc = ncx * ncy

    areas = np.zeros(nc)
    np.add.at(areas, f2c, fine.areas)
    centroids = np.zeros((nc, fine.dim))
    np.add.at(centroids, f2c, fine.areas[:, None] * fine.centroids)
    centroids /= areas[:, None]
    z = np.zeros(nc)
    np.add.at(z, f2c, fine.areas * fine.z)
    z /= areas

    order = np.argsort(f2c, kind="stable")
    child_ptr = np.zeros(nc + 1, dtype=np.int64)
    np.add.at(child_ptr, f2c + 1, 1)
    child_ptr = np.cumsum(child_ptr)
    parent = ParentMap(child_ptr=child_ptr, child_idx=order.astype(np.int64),
                       fine_to_coarse=f2c)

    # merge fine edges by the coarse (cell, cell) or (cell, tag) they join
    merged = {}
    for e in range(fine.n_edges):
        i = f2c[fine.edge_left[e]]
        j_f = fine.edge_right[e]
        w = fine.lengths[e]
        vec = w * fine.normals[e]
        mid = w * fine.midpoints[e]
        if j_f >= 0:
            j = f2c[j_f]
            if i == j:
                continue
            if i < j:
                key = (0, int(i), int(j))
                sgn = 1.0
            else:
                key = (0, int(j), int(i))
                sgn = -1.0
            tag = -1
        else:
            key = (1, int(i), int(fine.edge_tag[e]))
            sgn = 1.0
            tag = int(fine.edge_tag[e])
        if key not in merged:
            merged[key] = [np.zeros(2), 0.0, np.zeros(fine.dim), tag]
        acc = merged[key]
        acc[0] += sgn * vec
        acc[1] += w
        acc[2] += mid

    keys = sorted(merged.keys())
    ne = len(keys)
    edge_left = np.empty(ne, dtype=np.int64)
    edge_right = np.empty(ne, dtype=np.int64)
    edge_tag = np.empty(ne, dtype=np.int64)
    normals = np.empty((ne, 2))
    lengths = np.empty(ne)
    midpoints = np.empty((ne, fine.dim))
    cell_edge_lists = [[] for _ in range(nc)]
    for e, key in enumerate(keys):
        vec, wsum, midsum, tag = merged[key]
        ln = float(np.hypot(vec[0], vec[1]))
        if ln <= 0.0:
            raise MeshError("degenerate merged coarse edge")
        if key[0] == 0:
            edge_left[e] = key[1]
            edge_right[e] = key[2]
            edge_tag[e] = -1
            cell_edge_lists[key[1]].append(e)
            cell_edge_lists[key[2]].append(e)
        else:
            edge_left[e] = key[1]
            edge_right[e] = -1
            edge_tag[e] = tag
            cell_edge_lists[key[1]].append(e)
        normals[e] = vec / ln
        lengths[e] = ln
        midpoints[e] = midsum / wsum

    ptr = np.zeros(nc + 1, dtype=np.int64)
    for i, lst in enumerate(cell_edge_lists):
        ptr[i + 1] = ptr[i] + len(lst)
    idx = (np.concatenate([np.asarray(lst, dtype=np.int64)
                           for lst in cell_edge_lists])
           if nc else np.empty(0, dtype=np.int64))

    shape = (nc,) if fine.dim == 1 else (ncx, ncy)
    return MeshLevel(
        dim=fine.dim, level=fine.level + 1,
        centroids=centroids, areas=areas, z=z,
        edge_left=edge_left, edge_right=edge_right, edge_tag=edge_tag,
        normals=normals, lengths=lengths, midpoints=midpoints,
        tag_names=fine.tag_names,
        cell_edge_ptr=ptr, cell_edge_idx=idx, shape=shape, parent=parent)


def build_hierarchy(finest: MeshLevel, n_coarse_levels: int) -> MeshHierarchy:
    """Finest-to-coarsest hierarchy with ``n_coarse_levels`` coarsenings."""
    if n_coarse_levels < 0:
        raise MeshError("n_coarse_levels must be >= 0")
    levels = [finest]
    for _ in range(n_coarse_levels):
        nxt = coarsen(levels[-1])
        if nxt.dim == 1 and nxt.n_cells < 2:
            raise MeshError("coarsest 1D level would have no interior edge")
        levels.append(nxt)
    return MeshHierarchy(levels=levels)
