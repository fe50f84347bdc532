from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import t1_catalog, t1_instance
from impalloc.errors import DomainError
from impalloc.grid import ANY, DEFAULT_EPOCH, AdmissibleSet, Catalog, Configuration, Quad, full_grid, project, validate_catalog


def test_full_grid_counts():
    two_pairs = Catalog({"a": "A", "b": "B"}, {"a": ("1",), "b": ("1",)}, ("L1",), 2)
    assert len(full_grid(two_pairs)) == 4
    empty = Catalog({"a": "A"}, {"a": ()}, ("L1",), 3)
    assert len(full_grid(empty)) == 0
    three = Catalog({"a": "A", "b": "B"}, {"a": ("1", "2"), "b": ("1",)}, ("L1", "L2"), 3)
    assert len(full_grid(three)) == 18


def test_project_t1_examples(t1):
    C = t1.admissible
    assert project(C, [(1, "1")]) == {("1", 1, "L1"), ("1", 2, "L1")}
    assert project(C, [(3, 1), (4, "L1")]) == {("1", "1"), ("2", "1")}
    assert project(C, [(1, "1"), (2, ANY), (4, ANY)]) == {(1,), (2,)}


def test_project_rejects_bad_positions(t1):
    with pytest.raises(DomainError):
        project(t1.admissible, [(0, "1")])
    with pytest.raises(DomainError):
        project(t1.admissible, [(5, "1")])
    with pytest.raises(DomainError):
        project(t1.admissible, [(1, "1"), (1, "2")])


def test_validate_catalog():
    cat = t1_catalog()
    assert not validate_catalog(cat, t1_instance().admissible).violations
    bad_loc = validate_catalog(cat, [Quad("1", "1", 1, "L9")])
    assert len(bad_loc) == 1
    wrong_owner = Catalog({"1": "x", "2": "y"}, {"1": ("a",), "2": ("b",)}, ("L1",), 1)
    assert len(validate_catalog(wrong_owner, [Quad("1", "b", 1, "L1")])) == 1


def test_catalog_invariants():
    with pytest.raises(DomainError):
        Catalog({"a": "A"}, {"a": ("1",)}, ("L1",), 0)
    with pytest.raises(DomainError):
        Catalog({"a": "A"}, {"a": ("1", "1")}, ("L1",), 1)
    with pytest.raises(DomainError):
        Catalog({"a": "A"}, {"b": ("1",)}, ("L1",), 1)
    with pytest.raises(DomainError):
        Catalog({"a": "A"}, {"a": ("1",)}, ("L1", "L1"), 1)


def test_frame_clock():
    cat = Catalog({"a": "A"}, {"a": ("1",)}, ("L1",), 48, frame_duration=timedelta(minutes=30))
    assert cat.frame_start(1) == DEFAULT_EPOCH
    assert cat.frame_start(3) == DEFAULT_EPOCH + timedelta(hours=1)
    assert cat.frame_at(DEFAULT_EPOCH + timedelta(minutes=59)) == 2
    assert cat.frame_at(DEFAULT_EPOCH - timedelta(minutes=1)) == 0


def test_configuration_keys_are_admissible(t1):
    C = t1.admissible
    x = Configuration(C, {Quad("1", "1", 1, "L1"): 2.0, Quad("2", "1", 2, "L1"): 0.0})
    assert len(x) == 1 and x.total() == 2.0
    assert x[Quad("2", "1", 1, "L1")] == 0.0
    with pytest.raises(DomainError):
        Configuration(C, {Quad("1", "1", 3, "L1"): 1.0})
    with pytest.raises(DomainError):
        Configuration(C, {Quad("1", "1", 1, "L1"): -1.0})


def test_indexes_agree_with_scans(t1):
    C = t1.admissible
    assert set(C.by_campaign("1")) == {q for q in C if q.campaign == "1"}
    assert set(C.at_node("L1", 2)) == {q for q in C if q.frame == 2}
    assert C.nodes() == [("L1", 1), ("L1", 2)]
    assert C == set(C.ordered())


quads = st.builds(
    Quad,
    st.sampled_from(["a", "b", "c"]),
    st.sampled_from(["1", "2"]),
    st.integers(1, 4),
    st.sampled_from(["L1", "L2", "L3"]),
)
point_sets = st.frozensets(quads, max_size=40)
positions = st.integers(1, 4)


@given(point_sets, positions)
@settings(max_examples=150, deadline=None)
def test_wildcard_is_union_of_concrete_bindings(points, pos):
    C = AdmissibleSet(points)
    values = {q[pos - 1] for q in points}
    union = set()
    for v in values:
        union |= project(C, [(pos, v)])
    assert project(C, [(pos, ANY)]) == union


@given(point_sets, positions)
@settings(max_examples=150, deadline=None)
def test_concrete_projections_reconstruct_the_set(points, pos):
    C = AdmissibleSet(points)
    rebuilt = set()
    for v in {q[pos - 1] for q in points}:
        part = project(C, [(pos, v)])
        assert len(part) <= len(C)
        for t in part:
            full = list(t)
            full.insert(pos - 1, v)
            rebuilt.add(tuple(full))
    assert rebuilt == {tuple(q) for q in points}


@given(point_sets)
@settings(max_examples=100, deadline=None)
def test_indexed_and_plain_projection_agree(points):
    C = AdmissibleSet(points)
    plain = [tuple(q) for q in points]
    for bindings in ([(1, "a")], [(3, 2), (4, "L1")], [(1, "b"), (2, ANY), (4, ANY)], [(2, ANY)]):
        assert project(C, bindings) == project(plain, bindings)
