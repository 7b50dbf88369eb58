import math

import numpy as np
import pytest

from swemg.errors import MeshError
from swemg.mesh import (ChannelSpec, MeshLevel, build_channel_2d,
                        build_hierarchy, build_uniform_1d, coarsen)


def ex1_bed(x):
    return 0.2 * np.exp(-(x + 1) ** 2 / 2) + 0.3 * np.exp(-(x - 1.5) ** 2)


def bump_bed(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x - 10) < 2, 0.2 - 0.05 * (x - 10) ** 2, 0.0)


def flat2d(x, y):
    return np.zeros_like(x)


def test_uniform_1d_basic():
    level = build_uniform_1d(-10.0, 10.0, 512, ex1_bed)
    assert level.n_cells == 512
    assert np.allclose(level.areas, 20.0 / 512)
    # the bed formula itself at x = 0
    assert math.isclose(float(ex1_bed(np.array([0.0]))[0]),
                        0.2 * math.exp(-0.5) + 0.3 * math.exp(-2.25),
                        rel_tol=1e-15)
    assert np.allclose(level.z, ex1_bed(level.centroids[:, 0]))


def test_uniform_1d_two_cells():
    level = build_uniform_1d(0.0, 1.0, 2, lambda x: np.zeros_like(x))
    assert np.allclose(level.centroids[:, 0], [0.25, 0.75])
    assert np.allclose(level.areas, 0.5)
    assert level.n_edges == 3


def test_bump_apex():
    assert math.isclose(float(bump_bed(10.0)), 0.2, abs_tol=1e-15)
    level = build_uniform_1d(0.0, 25.0, 64, bump_bed)
    assert level.z.max() <= 0.2


def test_uniform_1d_rejects():
    with pytest.raises(MeshError):
        build_uniform_1d(0.0, 1.0, 1, lambda x: np.zeros_like(x))
    with pytest.raises(MeshError):
        build_uniform_1d(1.0, 0.0, 4, lambda x: np.zeros_like(x))
    with pytest.raises(MeshError):
        build_uniform_1d(0.0, 1.0, 4, lambda x: np.full_like(x, np.nan))


def test_rectangle_channel():
    geo = ChannelSpec.rectangle(0.0, 25.0, -5.0, 5.0)
    level = build_channel_2d(geo, 160, 80, flat2d)
    assert level.n_cells == 160 * 80
    assert np.allclose(level.areas, (25.0 / 160) * (10.0 / 80), rtol=1e-12)
    # every cell has exactly 4 edges
    counts = np.diff(level.cell_edge_ptr)
    assert np.all(counts == 4)


def test_wedge_channel_cell_count():
    geo = ChannelSpec.wedge(0.0, 90.0, 20.0, 15.0, 10.0, 30.0)
    level = build_channel_2d(geo, 72, 40, flat2d)
    assert level.n_cells == 72 * 40
    assert np.all(level.areas > 0)
    # width narrows after the constriction
    w_in = geo.wall_top(0.0) - geo.wall_bottom(0.0)
    w_out = geo.wall_top(90.0) - geo.wall_bottom(90.0)
    assert w_in == pytest.approx(40.0)
    assert w_out < w_in


def test_cosine_channel_width():
    geo = ChannelSpec.cosine(0.0, 3.0, 1.0, 0.9, 1.5, 1.0)
    assert geo.wall_top(1.5) - geo.wall_bottom(1.5) == pytest.approx(0.9)
    assert geo.wall_top(0.0) - geo.wall_bottom(0.0) == pytest.approx(1.0)
    level = build_channel_2d(geo, 96, 32, flat2d)
    assert level.n_cells == 96 * 32


def test_degenerate_channel_rejected():
    geo = ChannelSpec.cosine(0.0, 3.0, 1.0, -0.1, 1.5, 1.0)
    with pytest.raises(MeshError):
        build_channel_2d(geo, 8, 4, flat2d)


def test_unit_normals_and_orientation():
    geo = ChannelSpec.wedge(0.0, 90.0, 20.0, 5.0, 10.0)
    level = build_channel_2d(geo, 18, 10, flat2d)
    nrm = np.hypot(level.normals[:, 0], level.normals[:, 1])
    assert np.abs(nrm - 1.0).max() < 1e-14
    for e in range(level.n_edges):
        i = level.edge_left[e]
        j = level.edge_right[e]
        ref = (level.centroids[j] - level.centroids[i]) if j >= 0 \
            else (level.midpoints[e] - level.centroids[i])
        assert level.normals[e] @ ref > 0


def test_coarsen_1d_pairs():
    level = build_uniform_1d(0.0, 1.0, 64, lambda x: np.sin(x))
    coarse = coarsen(level)
    assert coarse.n_cells == 32
    for i in range(32):
        assert coarse.parent.children(i).shape[0] == 2
    # area-weighted bed
    zc = np.array([level.z[2 * i:2 * i + 2].mean() for i in range(32)])
    assert np.allclose(coarse.z, zc, atol=1e-15)


def test_coarsen_2d_quadruples_and_areas():
    geo = ChannelSpec.cosine(0.0, 3.0, 1.0, 0.9, 1.5, 1.0)
    level = build_channel_2d(geo, 96, 32, flat2d)
    coarse = coarsen(level)
    assert coarse.shape == (48, 16)
    sums = np.zeros(coarse.n_cells)
    for i in range(coarse.n_cells):
        kids = coarse.parent.children(i)
        assert kids.shape[0] == 4
        sums[i] = level.areas[kids].sum()
    assert np.abs(coarse.areas - sums).max() < 1e-12 * coarse.areas.max()


def test_coarsen_rejects_odd():
    level = build_uniform_1d(0.0, 1.0, 6, lambda x: np.zeros_like(x))
    with pytest.raises(MeshError):
        coarsen(coarsen(level))


def test_hierarchy_counts():
    level = build_uniform_1d(-10.0, 10.0, 512, ex1_bed)
    hier = build_hierarchy(level, 3)
    assert [lv.n_cells for lv in hier.levels] == [512, 256, 128, 64]

    level = build_uniform_1d(0.0, 1.0, 64, lambda x: np.zeros_like(x))
    hier = build_hierarchy(level, 5)
    assert hier[5].n_cells == 2
    with pytest.raises(MeshError):
        build_hierarchy(level, 6)


def test_total_area_constant_across_levels():
    geo = ChannelSpec.wedge(0.0, 90.0, 20.0, 5.0, 10.0)
    level = build_channel_2d(geo, 48, 16, flat2d)
    hier = build_hierarchy(level, 3)
    base = hier[0].total_area()
    for lv in hier.levels[1:]:
        assert abs(lv.total_area() - base) < 1e-12 * base


def test_coarse_divergence_free():
    # merged coarse edges keep sum(|e| n) = 0 around every cell
    geo = ChannelSpec.cosine(0.0, 3.0, 1.0, 0.9, 1.5, 1.0)
    coarse = coarsen(build_channel_2d(geo, 32, 8, flat2d))
    acc = np.zeros((coarse.n_cells, 2))
    for e in range(coarse.n_edges):
        v = coarse.lengths[e] * coarse.normals[e]
        acc[coarse.edge_left[e]] += v
        if coarse.edge_right[e] >= 0:
            acc[coarse.edge_right[e]] -= v
    assert np.abs(acc).max() < 1e-12


def test_deterministic_rebuild():
    geo = ChannelSpec.wedge(0.0, 90.0, 20.0, 15.0, 10.0, 30.0)
    a = build_channel_2d(geo, 24, 8, flat2d)
    b = build_channel_2d(geo, 24, 8, flat2d)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.edge_left, b.edge_left)
    assert np.array_equal(a.normals, b.normals)


def test_views_and_dump(tmp_path):
    level = build_uniform_1d(0.0, 1.0, 4, lambda x: x)
    cells = level.cells
    edges = level.edges
    assert len(cells) == 4 and len(edges) == 5
    assert cells[0].edge_indices == (0, 1)
    assert edges[0].boundary_tag == "left"
    assert edges[0].right_cell == -1
    path = tmp_path / "mesh.txt"
    level.dump(path)
    rows = path.read_text().strip().splitlines()
    assert len(rows) == 4
    first = rows[0].split()
    assert int(first[0]) == 0
    assert float(first[2]) == pytest.approx(0.25)


def test_orientation_flip_invariance():
    # flipping an interior edge's (i, j) and normal leaves residuals intact
    from swemg.assembly import assemble_residual
    from swemg.physics import BoundarySpec

    level = build_uniform_1d(0.0, 1.0, 8, lambda x: 0.05 * x)
    flipped = MeshLevel(
        dim=1, level=0, centroids=level.centroids.copy(),
        areas=level.areas.copy(), z=level.z.copy(),
        edge_left=level.edge_left.copy(), edge_right=level.edge_right.copy(),
        edge_tag=level.edge_tag.copy(), normals=level.normals.copy(),
        lengths=level.lengths.copy(), midpoints=level.midpoints.copy(),
        tag_names=level.tag_names, cell_edge_ptr=level.cell_edge_ptr.copy(),
        cell_edge_idx=level.cell_edge_idx.copy(), shape=level.shape)
    e = 4  # interior edge
    flipped.edge_left.setflags(write=True)
    flipped.edge_right.setflags(write=True)
    flipped.normals.setflags(write=True)
    flipped.edge_left[e], flipped.edge_right[e] = (level.edge_right[e],
                                                   level.edge_left[e])
    flipped.normals[e] = -level.normals[e]

    bc = {"left": BoundarySpec("auto_open", h=1.0, qn=-1.0),
          "right": BoundarySpec("auto_open", h=1.0, qn=1.0)}
    rng = np.random.default_rng(5)
    U = np.column_stack([1.0 + 0.1 * rng.random(8), rng.random(8)])
    r0 = assemble_residual(level, U, "hll", bc).per_cell
    r1 = assemble_residual(flipped, U, "hll", bc).per_cell
    assert np.abs(r0 - r1).max() < 1e-13
