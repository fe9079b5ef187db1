import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoon_dos.dos import (
    AttackSchedule,
    DelayTrace,
    decompose,
    effective_delay,
    generate_schedule,
    link_delay,
    recompose,
)
from platoon_dos.errors import ConfigError, DomainError


@settings(max_examples=200)
@given(tau=st.floats(0.0, 20.0), h=st.floats(0.05, 2.0))
def test_decompose_round_trip(tau, h):
    tb, p = decompose(tau, h)
    assert p >= 1
    assert 0.0 <= tb <= h
    assert recompose(tb, p, h) == pytest.approx(tau, abs=1e-9)


def test_decompose_examples():
    assert decompose(0.0, 0.5) == (0.0, 1)
    assert decompose(0.5, 0.5) == (0.5, 1)
    tb, p = decompose(1.2, 0.5)
    assert p == 3 and tb == pytest.approx(0.2)
    with pytest.raises(DomainError):
        decompose(-1.0, 0.5)
    with pytest.raises(DomainError):
        decompose(math.nan, 0.5)


def test_effective_and_link_delay():
    assert effective_delay(0.3, 1.1) == 1.1
    assert link_delay(10.0, 9.0) == 0.0
    assert link_delay(10.0, 11.5) == 1.5


def test_schedule_bounds_and_leader():
    sched = AttackSchedule(seed=3, p_max=8, h=0.5)
    tr = generate_schedule(sched, 7, 500)
    assert tr.tau.shape == (8, 500)
    assert np.all(tr.tau[0] == 0.0)
    assert tr.max_delay() <= 4.0
    assert tr.tau[1:].min() >= 0.0
    # the max of two uniforms sits above the single-link vehicle on average
    assert tr.tau[2:].mean() > tr.tau[1].mean()


def test_schedule_deterministic_and_seed_sensitive():
    a = generate_schedule(AttackSchedule(seed=1), 7, 100).tau
    b = generate_schedule(AttackSchedule(seed=1), 7, 100).tau
    c = generate_schedule(AttackSchedule(seed=2), 7, 100).tau
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_no_attack_schedule_is_zero():
    tr = generate_schedule(AttackSchedule(p_max=1, distribution="none"), 7, 20)
    assert not tr.tau.any()


def test_csv_round_trip_and_replay(tmp_path):
    tr = generate_schedule(AttackSchedule(seed=4), 3, 30)
    path = tmp_path / "d.csv"
    tr.write_csv(path)
    back = DelayTrace.read_csv(path, 0.5)
    assert np.array_equal(back.tau, tr.tau)
    replay = generate_schedule(AttackSchedule(replay=str(path)), 3, 30)
    assert np.array_equal(replay.tau, tr.tau)
    with pytest.raises(ConfigError):
        generate_schedule(AttackSchedule(replay=str(path)), 5, 30)
    with pytest.raises(ConfigError):
        generate_schedule(AttackSchedule(replay=str(path), p_max=1), 3, 30)


def test_samples_carry_decomposition():
    tr = DelayTrace(np.array([[0.0, 1.2]]), 0.5)
    s = tr.samples(0)
    assert s[1].p == 3 and s[1].tau_bar == pytest.approx(0.2)
