import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfbid.ctr import FtrlState, load_ftrl, log_loss, predict_ctr, save_ftrl, train_ctr, update
from mfbid.errors import InputError


def test_fresh_state_predicts_half():
    s = FtrlState(dimension=16)
    assert predict_ctr([], s) == 0.5
    assert predict_ctr([1, 5, 9], s) == 0.5


def test_first_gradient_is_minus_half():
    s = FtrlState(dimension=16)
    p = update([2, 3], 1, s)
    assert p == 0.5
    # z accumulates g - sigma * w with w = 0 on a fresh state, so z == g
    np.testing.assert_array_equal(s.z[[2, 3]], [-0.5, -0.5])
    np.testing.assert_array_equal(s.n[[2, 3]], [0.25, 0.25])


def test_inactive_coordinates_untouched():
    s = FtrlState(dimension=16)
    update([2, 3], 1, s)
    mask = np.ones(16, bool)
    mask[[2, 3]] = False
    assert np.all(s.z[mask] == 0) and np.all(s.n[mask] == 0)


def test_out_of_range_feature():
    with pytest.raises(InputError):
        predict_ctr([16], FtrlState(dimension=16))
    with pytest.raises(InputError):
        update([1], 2, FtrlState(dimension=16))


def test_repeated_positive_drives_up():
    s = FtrlState(dimension=8)
    preds = [update([1, 4], 1, s) for _ in range(100)]
    windows = np.array(preds).reshape(10, 10).mean(axis=1)
    assert np.all(np.diff(windows) > 0)
    assert predict_ctr([1, 4], s) > 0.5


def _separable(n, rng):
    data = []
    for _ in range(n):
        y = int(rng.random() < 0.5)
        # field 0 carries the label, field 1 is noise
        data.append(([y, 2 + int(rng.integers(0, 6))], y))
    return data


def test_learns_separable_set():
    rng = np.random.default_rng(0)
    data = _separable(1000, rng)
    s = train_ctr(data, FtrlState(dimension=8))
    assert log_loss(data, s) < math.log(2.0)


def test_l1_sparsity():
    rng = np.random.default_rng(1)
    s = FtrlState(dimension=64, l1=1.0)
    for _ in range(3):
        update([int(rng.integers(0, 64))], 1, s)
    assert np.sum(s.weights(np.arange(64)) == 0.0) > 0


def test_n_nondecreasing_and_deterministic():
    rng = np.random.default_rng(2)
    data = _separable(300, rng)
    a, b = FtrlState(dimension=8), FtrlState(dimension=8)
    prev = a.n.copy()
    for x, y in data:
        update(x, y, a)
        assert np.all(a.n >= prev)
        prev = a.n.copy()
    train_ctr(data, b)
    assert a.z.tobytes() == b.z.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.lists(st.integers(0, 9), min_size=1, max_size=3, unique=True),
                          st.integers(0, 1)), max_size=40))
def test_prediction_strictly_inside_unit_interval(data):
    s = FtrlState(dimension=10, alpha=5.0, l1=0.0)
    for x, y in data:
        update(x, y, s)
    for x, _ in data:
        assert 0.0 < predict_ctr(x, s) < 1.0


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    s = train_ctr(_separable(200, rng), FtrlState(dimension=8))
    save_ftrl(tmp_path / "ctr.txt", s)
    t = load_ftrl(tmp_path / "ctr.txt")
    assert t.z.tobytes() == s.z.tobytes() and t.n.tobytes() == s.n.tobytes()
    assert (t.alpha, t.beta, t.l1, t.l2) == (s.alpha, s.beta, s.l1, s.l2)
    first = (tmp_path / "ctr.txt").read_text().splitlines()[1].split()
    assert len(first) == 3
