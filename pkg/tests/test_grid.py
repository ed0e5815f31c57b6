import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ghostflow.grid import (RectilinearGrid, FieldSet, GridError, build_axis,
                            build_grid, GHOST, MAX_SPACING_RATIO)


def test_uniform_zone_faces():
    faces = build_axis(0.0, [{"end": 1.0, "h": 0.25}])
    np.testing.assert_allclose(faces, [0, 0.25, 0.5, 0.75, 1.0], atol=1e-15)


def test_two_equal_zones_match_single():
    one = build_axis(0.0, [{"end": 2.0, "h": 0.25}])
    two = build_axis(0.0, [{"end": 1.0, "h": 0.25}, {"end": 2.0, "h": 0.25}])
    np.testing.assert_allclose(one, two, atol=1e-14)


def cumsum_oracle(start, spacings):
    # independent face construction: plain running sum
    out = [start]
    for h in spacings:
        out.append(out[-1] + h)
    return np.array(out)


def test_uniform_zone_against_cumsum_oracle():
    faces = build_axis(1.5, [{"end": 2.5, "n": 8}])
    np.testing.assert_allclose(faces, cumsum_oracle(1.5, [1.0 / 8] * 8),
                               atol=1e-14)


def test_graded_three_zone_properties():
    faces = build_axis(0.0, [
        {"end": 1.0, "h0": 0.1, "h1": 0.02},
        {"end": 2.0, "h": 0.02},
        {"end": 4.0, "h0": 0.02, "h1": 0.15},
    ])
    h = np.diff(faces)
    assert np.all(h > 0)
    assert faces[0] == 0.0 and faces[-1] == 4.0
    ratio = h[1:] / h[:-1]
    assert ratio.max() <= MAX_SPACING_RATIO + 1e-9
    assert ratio.min() >= 1.0 / MAX_SPACING_RATIO - 1e-9
    # end spacings of the graded zones honor the request to ~rounding level
    assert abs(h[0] - 0.1) < 0.25 * 0.1
    mid = np.searchsorted(faces, 1.0)
    assert abs(h[mid - 1] - 0.02) < 0.25 * 0.02
    # middle zone exactly uniform against the cumsum oracle
    i0, i1 = np.searchsorted(faces, [1.0, 2.0])
    np.testing.assert_allclose(faces[i0:i1 + 1],
                               cumsum_oracle(1.0, [0.02] * 50), atol=1e-12)


def test_graded_zone_ratio_cap_enforced():
    with pytest.raises(GridError):
        build_axis(0.0, [{"end": 1.0, "h0": 0.001, "h1": 0.9}])


def test_noncontiguous_zones_rejected():
    with pytest.raises(GridError):
        build_axis(0.0, [{"end": 1.0, "h": 0.1}, {"end": 0.5, "h": 0.1}])


def test_min_cell_count():
    with pytest.raises(GridError):
        RectilinearGrid([np.array([0.0, 0.5, 1.0]), np.linspace(0, 1, 5)])


def test_cell_center_uniform():
    g = build_grid([{"start": 0, "zones": [{"end": 4, "h": 1.0}]},
                    {"start": 0, "zones": [{"end": 4, "h": 1.0}]}])
    np.testing.assert_allclose(g.cell_center((0, 0)), [0.5, 0.5])
    np.testing.assert_allclose(g.cell_center((3, 0)), [3.5, 0.5])


def test_cell_center_last_of_quarter_grid():
    g = build_grid([{"start": 0, "zones": [{"end": 1, "h": 0.25}]},
                    {"start": 0, "zones": [{"end": 1, "h": 0.25}]}])
    assert g.cell_center((3, 1))[0] == pytest.approx(0.875, abs=1e-15)


def test_centers_match_face_midpoints_graded():
    faces = build_axis(0.0, [{"end": 1.0, "h0": 0.05, "h1": 0.12}])
    g = RectilinearGrid([faces, np.linspace(0, 1, 4)])
    np.testing.assert_allclose(g.centers[0], 0.5 * (faces[1:] + faces[:-1]),
                               atol=1e-15)


def test_out_of_range_index():
    g = build_grid([{"start": 0, "zones": [{"end": 1, "n": 4}]},
                    {"start": 0, "zones": [{"end": 1, "n": 4}]}])
    with pytest.raises(GridError):
        g.cell_center((4, 0))


@given(st.integers(3, 9), st.integers(3, 9), st.integers(3, 5))
@settings(max_examples=25, deadline=None)
def test_volume_sum_and_index_roundtrip(nx, ny, nz):
    rng = np.random.default_rng(nx * 100 + ny * 10 + nz)
    fx = np.cumsum(np.r_[0, rng.uniform(0.5, 0.6, nx)])
    fy = np.cumsum(np.r_[0, rng.uniform(0.2, 0.25, ny)])
    fz = np.cumsum(np.r_[0, rng.uniform(1.0, 1.1, nz)])
    g = RectilinearGrid([fx, fy, fz])
    domain = (fx[-1] - fx[0]) * (fy[-1] - fy[0]) * (fz[-1] - fz[0])
    assert abs(g.volumes.sum() - domain) < 1e-12 * domain
    for lin in rng.integers(0, g.ncells, 10):
        assert g.lin(*g.unravel(int(lin))) == int(lin)


def test_face_connectivity_2d_counts_and_geometry():
    g = build_grid([{"start": 0, "zones": [{"end": 1, "n": 4}]},
                    {"start": 0, "zones": [{"end": 2, "n": 5}]}])
    fx = g.interior_faces(0)
    fy = g.interior_faces(1)
    assert fx["nface"] == 3 * 5
    assert fy["nface"] == 4 * 4
    np.testing.assert_allclose(fx["area"], 0.4)
    np.testing.assert_allclose(fy["area"], 0.25)
    np.testing.assert_allclose(fx["dist"], 0.25)
    centers = g.all_centers()
    # every interior-face pair is one cell apart along the right axis
    gap = centers[fy["right"]] - centers[fy["left"]]
    np.testing.assert_allclose(gap[:, 0], 0.0, atol=1e-15)
    np.testing.assert_allclose(gap[:, 1], 0.4, atol=1e-15)


def test_periodic_wrap_faces():
    g = RectilinearGrid([np.linspace(0, 1, 5), np.linspace(0, 1, 5)],
                        periodic=[True, False])
    fx = g.interior_faces(0)
    assert fx["nface"] == 4 * 4
    # wrap faces connect the last column back to the first
    wrap = fx["left"] >= g.lin(3, 0)
    assert np.all(fx["right"][wrap] == fx["left"][wrap] - g.lin(3, 0))
    np.testing.assert_allclose(fx["dist"][wrap], 0.25)


def test_locate_and_spacing_at():
    g = build_grid([{"start": 0, "zones": [{"end": 1, "n": 4}]},
                    {"start": 0, "zones": [{"end": 1, "n": 5}]}])
    assert g.locate((0.6, 0.5)) == (2, 2)
    np.testing.assert_allclose(g.spacing_at((0.6, 0.5)), [0.25, 0.2])


def test_fieldset_shapes_and_forcing_invariant():
    g = build_grid([{"start": 0, "zones": [{"end": 1, "n": 4}]},
                    {"start": 0, "zones": [{"end": 1, "n": 4}]}])
    f = FieldSet(g)
    assert f.u.shape == (16, 2)
    kinds = np.zeros(16, dtype=np.int8)
    kinds[5] = GHOST
    assert f.forcing_zero_outside(kinds)
    f.f_T[3] = 1.0
    assert not f.forcing_zero_outside(kinds)
