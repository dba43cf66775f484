import numpy as np
import pytest
from hypothesis import given, strategies as st

from subcities import (
    AtomicMeasure,
    Domain,
    Grid,
    GridDensity,
    NegativeDensity,
    NonpositiveMass,
    NotProbability,
    UnboundedDomain,
    ZeroMass,
    make_grid_density,
    normalize,
    to_point_cloud,
)


def box1d(lo=0.0, hi=1.0):
    return Domain.box([(lo, hi)])


class TestMakeGridDensity:
    def test_uniform_1d(self):
        d = make_grid_density(box1d(), 4, [1, 1, 1, 1])
        assert d.total_mass == pytest.approx(1.0)

    def test_cell_volume_half(self):
        d = make_grid_density(box1d(), 2, [2, 0])
        assert d.cell_volume == 0.5
        assert d.total_mass == pytest.approx(1.0)

    def test_2d_cell_volume(self):
        d = make_grid_density(Domain.box([(0, 1), (0, 1)]), (2, 2), [4, 0, 0, 0])
        assert d.cell_volume == pytest.approx(0.25)
        assert d.total_mass == pytest.approx(1.0)

    def test_rejects_negative(self):
        with pytest.raises(NegativeDensity):
            make_grid_density(box1d(), 2, [1, -0.1])

    def test_rejects_unbounded(self):
        with pytest.raises(UnboundedDomain):
            make_grid_density(Domain.unbounded(1), 2, [1, 1])


class TestNormalize:
    def test_scales_to_one(self):
        d = make_grid_density(box1d(), 2, [2, 2])
        assert np.allclose(normalize(d).values, [1, 1])

    def test_pointwise_proportional(self):
        d = make_grid_density(box1d(), 2, [3, 1])
        assert np.allclose(normalize(d).values, [1.5, 0.5])

    def test_zero_mass_raises(self):
        d = make_grid_density(box1d(), 2, [0, 0])
        with pytest.raises(ZeroMass):
            normalize(d)

    @given(
        st.lists(st.floats(0.0, 50.0), min_size=1, max_size=24).filter(
            lambda v: sum(v) > 1e-9
        )
    )
    def test_mass_one_property(self, values):
        d = make_grid_density(box1d(), len(values), values)
        assert abs(normalize(d).total_mass - 1.0) <= 1e-12


class TestToPointCloud:
    def test_uniform_two_cells(self):
        d = make_grid_density(box1d(), 2, [1, 1])
        cloud = to_point_cloud(d)
        assert np.allclose(cloud.points.ravel(), [0.25, 0.75])
        assert np.allclose(cloud.weights, [0.5, 0.5])

    def test_zero_cells_dropped(self):
        d = make_grid_density(box1d(), 2, [2, 0])
        cloud = to_point_cloud(d)
        assert len(cloud) == 1
        assert cloud.points.ravel()[0] == pytest.approx(0.25)
        assert cloud.weights[0] == pytest.approx(1.0)

    def test_2d_uniform_centers(self):
        d = make_grid_density(Domain.box([(0, 1), (0, 1)]), (2, 2), [1, 1, 1, 1])
        cloud = to_point_cloud(d)
        assert len(cloud) == 4
        assert np.allclose(cloud.weights, 0.25)
        assert sorted(map(tuple, cloud.points)) == [
            (0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)
        ]

    def test_mass_preserved(self):
        rng = np.random.default_rng(0)
        vals = rng.random(40)
        d = normalize(make_grid_density(box1d(), 40, vals))
        cloud = to_point_cloud(d)
        assert abs(cloud.weights.sum() - 1.0) <= 1e-10

    def test_not_probability_raises(self):
        d = make_grid_density(box1d(), 2, [2, 2])
        with pytest.raises(NotProbability):
            to_point_cloud(d)


class TestAtomicMeasure:
    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError):
            AtomicMeasure([[0.5], [0.5]], [0.5, 0.5])

    def test_nonpositive_mass_rejected(self):
        with pytest.raises(NonpositiveMass):
            AtomicMeasure([[0.2], [0.8]], [1.0, 0.0])

    def test_probability_flag(self):
        nu = AtomicMeasure([[0.2], [0.8]], [0.25, 0.75])
        assert nu.is_probability()
        assert not AtomicMeasure([[0.5]], [0.5]).is_probability()


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        d = make_grid_density(Domain.box([(0, 1), (-1, 2)]), (3, 4), np.arange(12.0))
        path = tmp_path / "density.csv"
        d.to_csv(path)
        back = GridDensity.from_csv(path)
        assert back.resolution == d.resolution
        assert back.domain.bounds == d.domain.bounds
        assert np.array_equal(back.values, d.values)

    def test_csv_header_lines(self, tmp_path):
        d = make_grid_density(box1d(), 2, [1, 1])
        path = tmp_path / "density.csv"
        d.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "dim,1"
        assert lines[1].startswith("bounds,")
        assert lines[2] == "resolution,2"

    def test_pgm_scaling(self, tmp_path):
        d = make_grid_density(box1d(), 3, [0.0, 1.0, 2.0])
        path = tmp_path / "density.pgm"
        d.to_pgm(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "3 1"
        assert lines[2] == "255"
        assert lines[3].split() == ["0", "128", "255"]


def test_grid_cell_centers_row_major():
    g = Grid(Domain.box([(0, 1), (0, 2)]), (2, 2))
    centers = g.cell_centers()
    assert np.allclose(centers[0], [0.25, 0.5])
    assert np.allclose(centers[1], [0.25, 1.5])
    assert np.allclose(centers[2], [0.75, 0.5])


def test_values_immutable():
    d = make_grid_density(box1d(), 2, [1, 1])
    with pytest.raises(ValueError):
        d.values[0] = 5.0
