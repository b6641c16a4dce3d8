import math

import numpy as np
import pytest

from metastate import mcsim
from metastate.catalog import double_well, tilted_double_well
from metastate.errors import BoundaryHitExcessive, HorizonTooShort
from metastate.landscape import graph_of, valley_of
from metastate.mcsim import (
    SimConfig,
    empirical_coarse_tv,
    empirical_valley_law,
    level_set_starts,
    plateau_reference,
    reference_law,
    simulate,
    stiffness_bound,
    wilson_interval,
)
from metastate.tree import build_tree


@pytest.fixture(scope="module")
def dw():
    spec = double_well()
    return spec, graph_of(spec)


def config(**kw):
    base = dict(epsilon=0.1, dt=0.005, horizon=2.0, n_traj=40, seed=99, start_points=((-1.0,),),
                sample_times=(0.0, 1.0, 2.0))
    base.update(kw)
    return SimConfig(**base)


def test_results_do_not_depend_on_thread_count(dw, monkeypatch):
    spec, g = dw
    cfg = config(n_traj=600, start_points=((-1.0,), (1.0,)))
    monkeypatch.setenv("METASTATE_THREADS", "1")
    a = simulate(spec, cfg, graph=g)
    monkeypatch.setenv("METASTATE_THREADS", "4")
    b = simulate(spec, cfg, graph=g)
    assert np.array_equal(a.labels, b.labels)
    assert a.steps == b.steps


def test_each_trajectory_has_its_own_stream(dw):
    spec, g = dw
    small = simulate(spec, config(n_traj=10), graph=g)
    big = simulate(spec, config(n_traj=300), graph=g)
    assert np.array_equal(small.labels, big.labels[:10])


def test_zero_noise_descends_to_the_nearest_minimum(dw):
    spec, g = dw
    ens = simulate(spec, config(epsilon=0.0, n_traj=2, start_points=((0.3,), (-0.2,)), horizon=20.0,
                                sample_times=(20.0,)), graph=g)
    owners = [ens.owners[k] for k in ens.labels[:, 0]]
    assert owners == ["m2", "m2", "m1", "m1"]


def test_hitting_target_at_start_counts_as_zero(dw):
    spec, g = dw
    cfg = config(target=((1.0,), 0.1), stop_on_hit=True, start_points=((1.0,),), n_traj=3, sample_times=())
    ens = simulate(spec, cfg, graph=g)
    assert np.all(ens.hit_times == 0.0)


def test_config_validation(dw):
    spec, g = dw
    assert stiffness_bound(spec, g) == pytest.approx(0.005)
    with pytest.raises(ValueError, match="stability"):
        config(dt=0.006).validate_for(spec, g)
    with pytest.raises(ValueError):
        config(sample_times=(3.0,))
    with pytest.raises(ValueError):
        config(n_traj=0)
    with pytest.raises(ValueError):
        config(start_points=((9.0,),)).validate_for(spec, g)
    with pytest.raises(ValueError, match="H"):
        config(level_H=-0.3).validate_for(spec, g)


def test_boundary_hits_abort():
    spec = double_well(box=(-1.6, 1.6))
    g = graph_of(spec)
    with pytest.raises(BoundaryHitExcessive):
        simulate(spec, config(epsilon=3.0, n_traj=8, horizon=5.0, sample_times=()), graph=g)


def test_horizon_too_short_is_reported(dw):
    spec, _ = dw
    with pytest.raises(HorizonTooShort):
        mcsim.hitting_times(spec, config(horizon=1.0, n_traj=20, sample_times=()), "m1", "m2")


def test_wilson_interval_known_values():
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and hi == pytest.approx(3.8414588 / 13.8414588, rel=1e-6)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(1 - hi)
    assert lo < 0.5 < hi


def test_laws_and_coarse_tv(dw):
    spec, g = dw
    ens = simulate(spec, config(n_traj=200), graph=g)
    part = [frozenset({"m1"}), frozenset({"m2"})]
    law = empirical_valley_law(ens, 0.0, part)
    assert law.measure.as_dict()["{m1}"] == 1.0
    ref = reference_law(spec, ens.valleys, part, 0.1)
    assert sum(ref.weights) == pytest.approx(1.0)
    assert ref["{m1}"] == pytest.approx(ref["{m2}"], rel=1e-9)
    tv = empirical_coarse_tv(ens, 0.0, part, ref)
    assert tv.value == pytest.approx(1 - ref["{m1}"], abs=1e-12)
    tv2 = empirical_coarse_tv(ens, 2.0, part, ref)
    assert tv2.lo <= tv2.value <= tv2.hi
    assert tv2.value == empirical_coarse_tv(ens, 2.0, part, ref).value
    with pytest.raises(ValueError):
        ens.time_index(0.5)


def test_level_set_starts_reach_the_sublevel_ends(dw):
    spec, _ = dw
    starts = level_set_starts(spec, 0.0)
    xs = sorted(p[0] for p in starts)
    assert xs[0] == pytest.approx(-math.sqrt(2), abs=1e-12)
    assert xs[-1] == pytest.approx(math.sqrt(2), abs=1e-12)


def test_plateau_reference_from_the_shallow_well():
    spec = tilted_double_well()
    g = graph_of(spec)
    tree = build_tree(g)
    valleys = {m.id: valley_of(spec, g, m.id, 0.04) for m in g.minima}
    part = [frozenset({m.id}) for m in g.minima]
    ref = reference_law(spec, valleys, part, 0.1)
    law, value = plateau_reference(spec, tree, valleys, part, 0.1, "m2", 1)
    assert law["{m2}"] == 1.0
    assert value == pytest.approx(1 - ref["{m2}"], abs=1e-12)


def test_eyring_kramers_time(dw):
    _, g = dw
    # 2 pi / mu * sqrt(1/2) * exp(0.25 / eps)
    assert mcsim.ek_time(g, "m1", "m2", 0.1) == pytest.approx(2 * math.pi * math.sqrt(0.5) * math.exp(2.5))
