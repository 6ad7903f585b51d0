import numpy as np
import pytest

from habitat_rd.errors import (
    GeometryError,
)
from habitat_rd.geometry import (
    Domain,
    DomainSet,
    box_intersection,
    build_mesh,
    candidate_signatures,
    omitted_signatures,
    overlap_mask,
    region_partition,
)


@pytest.fixture(name='intervals')
def _intervals():
    return DomainSet([
        Domain(1, (0.0,), (2.0,)),
        Domain(2, (1.0,), (3.0,)),
    ])


@pytest.fixture(name='three_boxes')
def _three_boxes():
    return DomainSet([
        Domain(1, (0.0, 0.0), (2.0, 2.0)),
        Domain(2, (1.5, 0.0), (3.5, 2.0)),
        Domain(3, (3.0, 0.0), (5.0, 2.0)),
    ])


def test_domain_rejects_empty_box():
    with pytest.raises(GeometryError):
        Domain(1, (1.0,), (1.0,))


def test_domain_rejects_3d():
    with pytest.raises(GeometryError):
        Domain(1, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def test_domain_set_needs_contiguous_ids():
    with pytest.raises(GeometryError, match='contiguous'):
        DomainSet([Domain(1, (0.0,), (1.0,)), Domain(3, (0.0,), (1.0,))])


def test_domain_set_needs_one_dimension():
    with pytest.raises(GeometryError):
        DomainSet([Domain(1, (0.0,), (1.0,)), Domain(2, (0.0, 0.0), (1.0, 1.0))])


def test_domain_set_rejects_empty():
    with pytest.raises(GeometryError, match='no domains'):
        DomainSet([])


def test_closed_box_membership(intervals):
    domain = intervals.get(1)
    assert domain.contains(np.array([2.0]))
    assert domain.contains(np.array([0.0]))
    assert not domain.contains(np.array([2.0000001]))


def test_membership_matrix(intervals):
    inside = intervals.membership(np.array([[0.5], [1.5], [2.5]]))
    assert inside.tolist() == [[True, True, False], [False, True, True]]


def test_active_set(intervals):
    assert intervals.active_set((1.5,)) == frozenset({1, 2})
    assert intervals.active_set((2.5,)) == frozenset({2})
    assert intervals.active_set((4.0,)) == frozenset()


def test_box_intersection(three_boxes):
    assert box_intersection([three_boxes.get(1), three_boxes.get(2)]) == (
        (1.5, 0.0), (2.0, 2.0)
    )
    assert box_intersection([three_boxes.get(1), three_boxes.get(3)]) is None
    assert three_boxes.intersects(2, 3)
    assert not three_boxes.intersects(1, 3)


def test_touching_boxes_do_not_intersect():
    domains = DomainSet([Domain(1, (0.0,), (1.0,)), Domain(2, (1.0,), (2.0,))])
    assert not domains.intersects(1, 2)


def test_build_mesh():
    mesh = build_mesh(Domain(1, (0.0, 0.0), (2.0, 1.0)), (4, 2))
    assert mesh.shape == (4, 2)
    assert mesh.n_cells == 8
    assert mesh.h == (0.5, 0.5)
    assert mesh.cell_volume == pytest.approx(0.25)
    assert np.allclose(mesh.axis_centers(0), [0.25, 0.75, 1.25, 1.75])
    assert np.allclose(mesh.centers[:3], [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25]])
    assert mesh.axis_edges(0)[-1] == 2.0


def test_build_mesh_checks_cells():
    with pytest.raises(GeometryError):
        build_mesh(Domain(1, (0.0,), (1.0,)), (4, 4))
    with pytest.raises(GeometryError):
        build_mesh(Domain(1, (0.0,), (1.0,)), (0,))


def test_overlap_mask(intervals):
    mesh = build_mesh(intervals.get(1), (4,))
    mask = overlap_mask(mesh, intervals.get(2))
    assert mask.source == 1
    assert mask.other == 2
    assert mask.flags.tolist() == [False, False, True, True]


def test_candidate_signatures(three_boxes):
    assert candidate_signatures(three_boxes) == [
        frozenset({1}), frozenset({2}), frozenset({3}),
        frozenset({1, 2}), frozenset({2, 3}),
    ]


def test_region_partition_finds_every_region(three_boxes):
    regions = region_partition(three_boxes, samples_per_region=4, seed=3)
    found = [region.active for region in regions]

    assert found == [
        frozenset({1}), frozenset({2}), frozenset({3}),
        frozenset({1, 2}), frozenset({2, 3}),
    ]
    for region in regions:
        assert len(region.representative_points) == 4
        for point in region.representative_points:
            assert three_boxes.active_set(point) == region.active
    assert omitted_signatures(three_boxes, regions) == []


def test_region_partition_is_deterministic(intervals):
    first = region_partition(intervals, samples_per_region=2, seed=11)
    second = region_partition(intervals, samples_per_region=2, seed=11)
    assert first == second


def test_region_partition_reports_thin_regions():
    # the overlap is far thinner than one sampling stratum
    domains = DomainSet([
        Domain(1, (0.0,), (1.0 + 1e-9,)),
        Domain(2, (1.0,), (2.0,)),
    ])
    regions = region_partition(domains, samples_per_region=1, max_rounds=2)

    assert frozenset({1, 2}) not in {region.active for region in regions}
    assert omitted_signatures(domains, regions) == [frozenset({1, 2})]


def test_region_partition_needs_samples(intervals):
    with pytest.raises(GeometryError):
        region_partition(intervals, samples_per_region=0)
