import math

import numpy as np
import pytest

from yosida_fde.asymptotics import (SubspaceSpec, aap_split, almost_periodicity_defect,
                                    decay_report, functional_split_check,
                                    subspace_invariance_probe, trig_evaluate)
from yosida_fde.errors import ConditioningError, DomainError, StructuralError
from yosida_fde.grid import DelayGeometry, HistorySegment, TimeGrid, Trajectory
from yosida_fde.operators import PointDelay, cubic_delay, linear_delay


def _series(fn, T=50.0, h=0.01):
    t = np.arange(0.0, T + h / 2, h)
    return t, np.atleast_2d(fn(t)).T


def test_subspace_spec_validation():
    with pytest.raises(StructuralError):
        SubspaceSpec("weird")
    with pytest.raises(StructuralError):
        SubspaceSpec.periodic_spec(0.0)
    with pytest.raises(StructuralError):
        SubspaceSpec.trig([1.0, 1.0])
    spec = SubspaceSpec.periodic_spec(2 * math.pi, harmonics=3)
    assert spec.basis_frequencies == pytest.approx((1.0, 2.0, 3.0))


def test_decay_zero_trajectory():
    rep = decay_report(_series(lambda t: 0 * t))
    assert rep.verdict == "decaying"
    assert rep.sups == [0.0] * 5


def test_decay_verdicts():
    assert decay_report(_series(lambda t: np.exp(-t))).verdict == "decaying"
    assert decay_report(_series(lambda t: 1 + 0 * t)).verdict == "not decaying"
    assert decay_report(_series(lambda t: np.exp(-t)), (0.0, 0.5, 1.0)).verdict == "inconclusive"
    with pytest.raises(StructuralError):
        decay_report(_series(lambda t: t), (0.0, 0.7, 0.5))


def test_almost_periodicity_defect():
    p = 2 * math.pi
    assert almost_periodicity_defect(_series(lambda t: 0.3 + 0 * t), 1.0) == 0.0
    # interpolation error of a smooth periodic function on h = 0.01
    assert almost_periodicity_defect(_series(np.sin), p) <= 1e-4
    assert almost_periodicity_defect(_series(lambda t: np.sin(t) + np.exp(-t)), p) <= 1e-4
    assert almost_periodicity_defect(_series(np.sin), 1.0) > 0.1
    with pytest.raises(DomainError):
        almost_periodicity_defect(_series(np.sin, T=10.0), 5.0)
    with pytest.raises(DomainError):
        almost_periodicity_defect(_series(np.sin), -1.0)


def test_aap_split_recovers_trig_polynomial():
    w = (1.0, math.sqrt(2.0))
    amps = np.array([[0.5], [1.0 - 2.0j], [0.3 + 0.1j]])
    t = np.arange(0.0, 60.0, 0.01)
    x = trig_evaluate(amps, w, t)
    split = aap_split((t, x), SubspaceSpec.trig(w))
    assert split.defect <= 1e-10
    np.testing.assert_allclose(split.ap_coefficients, amps, atol=1e-10)
    assert split.stable
    assert split.reconstruction_error == 0.0


def test_aap_split_with_decaying_remainder():
    t = np.arange(0.0, 60.0, 0.01)
    x = (np.cos(t) + 5 * np.exp(-t))[:, None]
    split = aap_split((t, x), SubspaceSpec.trig([1.0]))
    assert split.defect <= 1e-10
    assert split.stable
    np.testing.assert_allclose(split.ap_coefficients[:, 0], [0.0, 1.0], atol=1e-10)
    assert split.c0_residual_profile[0] >= 4.0
    assert split.c0_residual_profile[-1] <= 1e-10


def test_aap_split_errors():
    t = np.arange(0.0, 10.0, 0.01)
    with pytest.raises(DomainError):
        aap_split((t, np.sin(t)), SubspaceSpec.trig([1.0]))
    t = np.arange(0.0, 30.0, 0.01)
    with pytest.raises(ConditioningError):
        aap_split((t, np.sin(t)), SubspaceSpec.trig([1.0, 1.0 + 1e-9]), tail_fraction=0.3)
    with pytest.raises(StructuralError):
        aap_split((t, np.sin(t)), SubspaceSpec("c0"))


def test_subspace_probe_constant_and_linear_periodic():
    op = linear_delay(omega=0.5)
    spec = SubspaceSpec.periodic_spec(2 * math.pi)
    const = subspace_invariance_probe(op, spec, 0.1, [lambda t: np.array([0.7])])
    assert const.passed and const.worst_residual <= 1e-12
    per = subspace_invariance_probe(op, spec, 0.1, [lambda t: np.array([np.sin(t)])])
    assert per.passed and per.worst_residual <= 1e-6


def test_subspace_probe_cubic_leaves_trig_span():
    op = cubic_delay()
    spec = SubspaceSpec.trig([1.0])
    rep = subspace_invariance_probe(op, spec, 0.5, [lambda t: np.array([2.0 * np.sin(t)])])
    assert not rep.passed
    per = subspace_invariance_probe(op, SubspaceSpec.periodic_spec(2 * math.pi), 0.5,
                                    [lambda t: np.array([2.0 * np.sin(t)])])
    assert per.passed


def test_subspace_probe_domain():
    with pytest.raises(DomainError):
        subspace_invariance_probe(linear_delay(omega=1.0), SubspaceSpec("c0"), 2.0,
                                  [lambda t: np.zeros(1)])


def test_functional_split_on_periodic_path():
    geom = DelayGeometry.finite(1.0)
    grid = TimeGrid.for_geometry(geom, 40.0, 0.01)
    seg = HistorySegment.from_function(geom, lambda s: np.array([np.sin(s) + np.exp(-s)]), 0.01)
    traj = Trajectory.from_function(grid, lambda t: np.array([np.sin(t) + np.exp(-t)]), seg)
    split = aap_split(traj, SubspaceSpec.trig([1.0]))
    rep = functional_split_check(PointDelay(0.5, 1.0), traj, split, compare_coefficients=True)
    assert rep.passed
    assert rep.details["coefficient_gap"] <= 1e-6
