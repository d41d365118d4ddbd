import numpy as np
import pytest

from goaljump.terrain import Terrain


def test_flat():
    t = Terrain.flat()
    assert t.is_flat
    assert t.height(-100.0) == 0.0 == t.height(100.0)
    assert t.wall(0.0, -0.1) is None


def test_step_up_ahead():
    t = Terrain.flat().with_step(0.5, 0.3, 1)
    np.testing.assert_array_equal(t.heights, [0.0, 0.3])
    assert t.height(0.49) == 0.0
    assert t.height(0.5) == 0.3
    assert not t.is_flat


def test_step_behind():
    t = Terrain.flat().with_step(-0.5, 0.3, -1)
    np.testing.assert_array_equal(t.edges, [-0.5])
    np.testing.assert_array_equal(t.heights, [0.3, 0.0])
    assert t.height(-0.6) == 0.3
    assert t.height(-0.4) == 0.0


def test_second_step_replaces_everything_beyond_it():
    t = Terrain.flat().with_step(0.5, 0.3, 1).with_step(1.0, -0.2, 1)
    np.testing.assert_array_equal(t.edges, [0.5, 1.0])
    np.testing.assert_array_equal(t.heights, [0.0, 0.3, -0.2])
    t = t.with_step(0.2, 0.1, 1)
    assert t == Terrain([0.2], [0.0, 0.1])


def test_wall_faces():
    t = Terrain.flat().with_step(0.5, 0.3, 1)
    assert t.wall(0.52, 0.1) == (0.5, -1)
    assert t.wall(0.52, 0.35) is None
    down = Terrain.flat(0.3).with_step(0.5, 0.0, 1)
    assert down.wall(0.48, 0.1) == (0.5, 1)


def test_heights_must_outnumber_edges():
    with pytest.raises(ValueError):
        Terrain([0.5], [0.0])


def test_to_dict():
    t = Terrain.flat().with_step(0.5, 0.3, 1)
    assert t.to_dict() == {"edges": [0.5], "heights": [0.0, 0.3]}
    assert Terrain(**t.to_dict()) == t
