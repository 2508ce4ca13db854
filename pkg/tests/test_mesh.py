import numpy as np
import pytest

from jumpmesh.mesh import SMOOTH, Mesh, MeshError


def test_uniform_and_segments():
    m = Mesh.uniform(4, 5)
    assert m.n_intervals == 4 and m.total_points == 20
    assert [s.kind for s in m.segments] == ["smooth"]
    m.validate()


def test_nonsmooth_segment_and_round_trip():
    m = Mesh([-1, -0.2, 0.0, 0.3, 1], [5, 4, 4, 6], [SMOOTH, 7, 7, SMOOTH])
    kinds = [(s.kind, s.start, s.stop) for s in m.segments]
    assert kinds == [("smooth", 0, 1), ("nonsmooth", 1, 3), ("smooth", 3, 4)]
    assert m.labels.tolist() == [SMOOTH, 0, 0, SMOOTH]
    assert Mesh.from_dict(m.to_dict()) == m
    assert m.locate(0.0) == 2 and m.locate(1.0) == 3


@pytest.mark.parametrize("fr,deg,lab", [
    ([-1, 0.5, 0.2, 1], [4, 4, 4], None),
    ([-0.9, 1], [4], None),
    ([-1, 1], [2], None),
    ([-1, 0, 0.5, 1], [4, 4, 4], [0, 0, 0]),
])
def test_invalid(fr, deg, lab):
    with pytest.raises(MeshError):
        Mesh(fr, deg, lab).validate()


def test_immutable():
    m = Mesh.uniform(2, 4)
    with pytest.raises(AttributeError):
        m.degrees = np.array([3, 3])
    with pytest.raises(ValueError):
        m.fractions[0] = 0.0
