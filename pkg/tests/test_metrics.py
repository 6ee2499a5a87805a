"""R^2 conventions, report objects, and cross-report deltas."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pianoprobe import metrics
from pianoprobe.dataset import DIMENSION_NAMES
from pianoprobe.errors import AlignmentError, ContractError, DegenerateDimensionError


def rand(shape, seed=0):
    return np.random.default_rng(seed).uniform(size=shape)


def test_r2_per_dimension_textbook_oracle():
    t = rand((30, 3), seed=1)
    p = t + np.random.default_rng(2).normal(size=(30, 3)) * 0.1
    got = metrics.r2_per_dimension(p, t)
    for d in range(3):
        ss_res = float(((t[:, d] - p[:, d]) ** 2).sum())
        ss_tot = float(((t[:, d] - t[:, d].mean()) ** 2).sum())
        assert got[d] == pytest.approx(1 - ss_res / ss_tot, rel=1e-14)


def test_r2_perfect_and_mean_predictor():
    t = rand((20, 4), seed=3)
    assert np.array_equal(metrics.r2_per_dimension(t, t), np.ones(4))
    mean_pred = np.tile(t.mean(axis=0), (20, 1))
    np.testing.assert_allclose(
        metrics.r2_per_dimension(mean_pred, t), np.zeros(4), atol=1e-12
    )
    assert metrics.r2_pooled(t, t) == 1.0


def test_r2_pooled_equals_flattened_single_dimension():
    """Pooled convention == per-dimension R^2 of the flattened pair."""
    t = rand((25, 5), seed=4)
    p = t + np.random.default_rng(5).normal(size=(25, 5)) * 0.2
    pooled = metrics.r2_pooled(p, t)
    flat = metrics.r2_per_dimension(p.reshape(-1, 1), t.reshape(-1, 1))[0]
    assert pooled == pytest.approx(flat, abs=1e-10)


def test_r2_conventions_differ_under_unequal_variance():
    g = np.random.default_rng(6)
    t = np.stack([g.uniform(size=40), g.uniform(size=40) * 0.01 + 0.5], axis=1)
    p = t + g.normal(size=(40, 2)) * 0.05
    per_dim = metrics.r2_per_dimension(p, t).mean()
    pooled = metrics.r2_pooled(p, t)
    assert abs(per_dim - pooled) > 0.05


def test_r2_degenerate_dimension_is_typed_and_named():
    t = rand((10, 19), seed=7)
    t[:, 3] = 0.5
    with pytest.raises(DegenerateDimensionError) as ei:
        metrics.r2_per_dimension(t + 0.01, t)
    assert DIMENSION_NAMES[3] in str(ei.value)  # pedal_amount
    const = np.full((10, 2), 0.7)
    with pytest.raises(DegenerateDimensionError):
        metrics.r2_pooled(const, const)


def test_r2_shape_guards():
    with pytest.raises(ContractError):
        metrics.r2_per_dimension(rand((5, 3)), rand((5, 4)))
    with pytest.raises(ContractError):
        metrics.r2_per_dimension(rand((1, 3)), rand((1, 3)))


def test_segment_set_hash_order_invariant():
    a = metrics.segment_set_hash(["s2", "s0", "s1"])
    b = metrics.segment_set_hash(["s0", "s1", "s2"])
    assert a == b
    assert len(a) == 16
    assert metrics.segment_set_hash(["s0", "s1"]) != a


def test_make_report_and_json_roundtrip():
    t = rand((12, 19), seed=8)
    p = t + np.random.default_rng(9).normal(size=(12, 19)) * 0.1
    ids = [f"seg{i}" for i in range(12)]
    rep = metrics.make_report(p, t, ids, config_fingerprint="abcd1234")
    assert rep.n_segments == 12
    assert set(rep.per_dimension_r2) == set(DIMENSION_NAMES)
    assert rep.mean_per_dimension_r2 == pytest.approx(
        np.mean(list(rep.per_dimension_r2.values())), rel=1e-12
    )
    assert rep.segment_set_hash == metrics.segment_set_hash(ids)

    back = metrics.EvalReport.from_dict(json.loads(rep.to_json()))
    assert back == rep
    # serialization is canonical: stable key order, no timestamps
    assert rep.to_json() == back.to_json()


def test_make_report_guards():
    t = rand((5, 19), seed=10)
    with pytest.raises(ContractError):
        metrics.make_report(t, t, ["a"] * 4)
    with pytest.raises(ContractError):
        metrics.make_report(t[:, :5], t[:, :5], ["a", "b", "c", "d", "e"])


def test_make_report_custom_dimension_names():
    t = rand((6, 3), seed=11)
    rep = metrics.make_report(t, t, list("abcdef"), dimension_names=("x", "y", "z"))
    assert set(rep.per_dimension_r2) == {"x", "y", "z"}


def test_dimension_deltas_sorted_and_aligned():
    t = rand((15, 3), seed=12)
    g = np.random.default_rng(13)
    pa = t + g.normal(size=t.shape) * 0.05
    pb = t + g.normal(size=t.shape) * 0.2
    names = ("x", "y", "z")
    ids = [f"s{i}" for i in range(15)]
    ra = metrics.make_report(pa, t, ids, dimension_names=names)
    rb = metrics.make_report(pb, t, ids, dimension_names=names)
    deltas = metrics.dimension_deltas(ra, rb)
    assert [d for _, d in deltas] == sorted([d for _, d in deltas], reverse=True)
    assert {n for n, _ in deltas} == set(names)
    # a is uniformly closer to the target, so every delta is positive
    assert all(d > 0 for _, d in deltas)


def test_dimension_deltas_mismatch_errors():
    t = rand((10, 3), seed=14)
    ids = [f"s{i}" for i in range(10)]
    ra = metrics.make_report(t, t, ids, dimension_names=("x", "y", "z"))
    rb = metrics.make_report(t, t, ids, dimension_names=("x", "y", "w"))
    with pytest.raises(AlignmentError):
        metrics.dimension_deltas(ra, rb)
    rc = metrics.make_report(t, t, [f"other{i}" for i in range(10)],
                             dimension_names=("x", "y", "z"))
    with pytest.raises(AlignmentError):
        metrics.dimension_deltas(ra, rc)


@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(2, 40),
    scale=st.floats(0.01, 2.0),
)
@settings(max_examples=100, deadline=None)
def test_r2_never_exceeds_one(seed, n, scale):
    g = np.random.default_rng(seed)
    t = g.uniform(size=(n, 3))
    if np.any((t - t.mean(axis=0) == 0).all(axis=0)):
        return  # degenerate draw
    p = t + g.normal(size=(n, 3)) * scale
    assert (metrics.r2_per_dimension(p, t) <= 1.0).all()
    assert metrics.r2_pooled(p, t) <= 1.0
