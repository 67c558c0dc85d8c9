"""Integrator invariants.

Energy bookkeeping against the dissipation identity, convergence order
under fixed-step halving, event location, dense output against the
closed-form solution, and the singular-origin bootstrap.
"""

import math

import numpy as np
import pytest

from vanishdamp import (
    Constant,
    CustomPotential,
    DomainError,
    DoubleWell,
    MaxStepsExceeded,
    NonFiniteState,
    Polynomial1D,
    PowerLaw,
    Quadratic,
    SystemSpec,
    UnsupportedError,
    integrate,
)
from vanishdamp.integrate import BOOTSTRAP_H0, bootstrap_singular_start
from vanishdamp.oracle import linear_regular_solution


def _drift_budget(traj):
    return 1e3 * traj.spec.rel_tol * (1.0 + abs(traj.initial_energy))


# ---------------------------------------------------------------------------
# energy bookkeeping


def test_energy_monotone_up_to_drift(j_run, well_run):
    for traj in (j_run, well_run):
        running_min = np.minimum.accumulate(traj.energies)
        worst_rise = float(np.max(traj.energies - running_min))
        assert worst_rise <= _drift_budget(traj)


def test_energy_identity(j_run, well_run):
    # E(t) = E(0) - int_0^t a |v|^2: the solver tracks the dissipation
    # integral alongside the state, so the triple must close to solver
    # accuracy at every sample.  Tight budget at reference tolerance:
    short_well = integrate(
        SystemSpec(
            schedule=PowerLaw(1.0), potential=DoubleWell(),
            x0=0.37, v0=1.1, t_end=100.0, rel_tol=1e-9,
        )
    )
    for traj in (j_run, short_well):
        e0 = traj.initial_energy
        gap = np.abs(e0 - traj.dissipation - traj.energies)
        assert float(gap.max()) <= 1e-6 * (1.0 + abs(e0))
    # on the long coarse run the accumulated closure error must stay on
    # the solver's own tolerance scale (~60k accepted steps)
    e0 = well_run.initial_energy
    gap = np.abs(e0 - well_run.dissipation - well_run.energies)
    assert float(gap.max()) <= 10.0 * well_run.spec.rel_tol * (1.0 + abs(e0))


def test_dissipation_nondecreasing(j_run, well_run):
    for traj in (j_run, well_run):
        assert np.all(np.diff(traj.dissipation) >= -1e-15)


def test_stored_energy_matches_state(j_run, well_run):
    for traj in (j_run, well_run):
        pot = traj.spec.potential
        for k in range(0, len(traj.ts), max(1, len(traj.ts) // 50)):
            e = 0.5 * float(traj.vs[k] @ traj.vs[k]) + pot.energy(traj.xs[k])
            assert traj.energies[k] == pytest.approx(e, rel=1e-12, abs=1e-15)


def test_coercive_bound_from_initial_energy(well_run):
    # G(x) <= E(0) forces |x| <= sqrt(1 + 2 sqrt(E0)) for the double well
    e0 = well_run.initial_energy
    bound = math.sqrt(1.0 + 2.0 * math.sqrt(e0))
    assert float(np.abs(well_run.xs).max()) <= bound + 1e-9


# ---------------------------------------------------------------------------
# accuracy and order


def test_fixed_step_halving_gains_an_order():
    # halving the step must cut the endpoint error by at least 8x at
    # each of three halvings (the scheme delivers ~32x)
    base = dict(
        schedule=PowerLaw(1.0, 1.0, 1.0),
        potential=Quadratic(1),
        x0=1.0,
        v0=0.0,
        t_end=10.0,
    )
    ref = integrate(SystemSpec(rel_tol=1e-13, abs_tol=1e-15, **base)).xs[-1, 0]
    errs = []
    for h in (0.4, 0.2, 0.1, 0.05):
        x = integrate(SystemSpec(fixed_step=h, **base)).xs[-1, 0]
        errs.append(abs(x - ref))
    assert errs[-1] <= 1e-9
    for big, small in zip(errs, errs[1:]):
        assert big / small >= 8.0, errs


def test_matches_closed_form_solution(j_run):
    # the singular-damping linear run against the independent series /
    # special-function evaluation, on the solver's own samples
    worst = max(
        abs(float(x) - linear_regular_solution(1.0, float(t)))
        for t, x in zip(j_run.ts, j_run.xs[:, 0])
    )
    assert worst <= 1e-6


def test_dense_output_between_samples(j_run):
    rng = np.random.default_rng(7)
    tq = np.sort(rng.uniform(0.5, 49.5, size=200))
    xs = j_run.positions_at(tq)[:, 0]
    worst = max(abs(x - linear_regular_solution(1.0, float(t))) for t, x in zip(tq, xs))
    assert worst <= 1e-6
    # node queries reproduce stored samples exactly
    k = len(j_run.ts) // 2
    st = j_run.dense_eval(float(j_run.ts[k]))
    assert st.x[0] == j_run.xs[k, 0] and st.v[0] == j_run.vs[k, 0]
    # velocity interpolation is consistent with a position difference
    t0 = 20.0
    d = 1e-4
    xm, xp = j_run.positions_at([t0 - d, t0 + d])[:, 0]
    v = j_run.velocities_at([t0])[0, 0]
    assert v == pytest.approx((xp - xm) / (2.0 * d), rel=1e-5, abs=1e-8)
    with pytest.raises(DomainError):
        j_run.positions_at([-1.0])
    with pytest.raises(DomainError):
        j_run.positions_at([50.0 + 1e-9])


def test_event_spacing_approaches_pi(j_run_long):
    # velocity sign changes of the oscillatory linear solution settle to
    # spacing pi (two per period)
    times = [ev.time for ev in j_run_long.events if ev.time > 50.0]
    assert len(times) >= 40
    gaps = np.diff(times)
    assert float(np.abs(gaps - math.pi).max()) <= 0.01 * math.pi


def test_events_carry_interpolated_states(j_run):
    assert j_run.events, "oscillatory run must produce events"
    for ev in j_run.events[:10]:
        assert ev.kind == "VelocitySignChange"
        assert abs(ev.v[0]) <= 1e-8
        assert ev.direction[0] == 1.0
    idx = [ev.index for ev in j_run.events]
    assert idx == sorted(idx) == list(range(len(idx)))


# ---------------------------------------------------------------------------
# multi-dimensional runs


def test_plane_run_decouples_into_components():
    # for a separable quadratic the 2D integration must agree with two
    # independent 1D integrations of the same scalar equation
    sched = Constant(1.0)
    common = dict(t_end=12.0, rel_tol=1e-10, abs_tol=1e-13)
    plane = integrate(
        SystemSpec(
            schedule=sched, potential=Quadratic(2),
            x0=[1.0, 0.0], v0=[0.0, 1.0], **common,
        )
    )
    line_a = integrate(
        SystemSpec(schedule=sched, potential=Quadratic(1), x0=1.0, v0=0.0, **common)
    )
    line_b = integrate(
        SystemSpec(schedule=sched, potential=Quadratic(1), x0=0.0, v0=1.0, **common)
    )
    tq = np.linspace(0.5, 11.5, 60)
    got = plane.positions_at(tq)
    want = np.column_stack([line_a.positions_at(tq)[:, 0], line_b.positions_at(tq)[:, 0]])
    assert np.max(np.abs(got - want)) <= 1e-8


def test_event_direction_projects_velocity():
    traj = integrate(
        SystemSpec(
            schedule=Constant(0.2),
            potential=Quadratic(2),
            x0=[0.0, 1.0],
            v0=[0.0, 0.0],
            t_end=15.0,
            event_dir=[0.0, 2.0],
        )
    )
    assert traj.events
    for ev in traj.events:
        assert abs(ev.v[1]) <= 1e-8  # second component is monitored
        assert np.allclose(ev.direction, [0.0, 1.0])  # stored normalized


# ---------------------------------------------------------------------------
# special starts and modes


def test_stationary_start_short_circuits():
    for x0 in (1.0, 0.0, -1.0):  # both wells and the unstable maximum
        traj = integrate(
            SystemSpec(
                schedule=PowerLaw(1.0), potential=DoubleWell(),
                x0=x0, v0=0.0, t_end=100.0,
            )
        )
        assert len(traj.ts) == 2
        assert traj.stats.accepted == 0
        assert not traj.events
        assert float(np.abs(traj.vs).max()) == 0.0
        assert traj.xs[-1, 0] == x0


def test_singular_start_bootstrap(j_run):
    # the t=0 row is exact initial data, the first computed row is the
    # quadratic Taylor step at the bootstrap offset
    assert j_run.ts[0] == 0.0
    assert j_run.xs[0, 0] == 1.0 and j_run.vs[0, 0] == 0.0
    assert j_run.ts[1] == BOOTSTRAP_H0
    st = bootstrap_singular_start(j_run.spec)
    g0 = 1.0  # gradient of the unit quadratic at x0 = 1
    assert st.t == BOOTSTRAP_H0
    assert st.x[0] == pytest.approx(1.0 - g0 * BOOTSTRAP_H0**2 / 4.0, rel=1e-15)
    assert st.v[0] == pytest.approx(-g0 * BOOTSTRAP_H0 / 2.0, rel=1e-15)


def test_singular_start_validation():
    with pytest.raises(DomainError):
        integrate(
            SystemSpec(
                schedule=PowerLaw(1.0, 1.0, 0.0), potential=Quadratic(1),
                x0=1.0, v0=0.5, t_end=1.0,
            )
        )
    with pytest.raises(UnsupportedError):
        integrate(
            SystemSpec(
                schedule=PowerLaw(1.0, 0.5, 0.0), potential=Quadratic(1),
                x0=1.0, v0=0.0, t_end=1.0,
            )
        )
    with pytest.raises(UnsupportedError):
        bootstrap_singular_start(
            SystemSpec(
                schedule=Constant(1.0), potential=Quadratic(1),
                x0=1.0, v0=0.0, t_end=1.0,
            )
        )


def test_fixed_step_grid_is_uniform():
    traj = integrate(
        SystemSpec(
            schedule=Constant(1.0), potential=Quadratic(1),
            x0=1.0, v0=0.0, t_end=2.0, fixed_step=0.125,
        )
    )
    diffs = np.diff(traj.ts)
    assert np.allclose(diffs, 0.125, rtol=0, atol=1e-12)
    assert traj.stats.rejected == 0
    assert traj.ts[-1] == pytest.approx(2.0, abs=1e-12)


def test_sample_stride_thins_output():
    base = dict(
        schedule=Constant(1.0), potential=Quadratic(1),
        x0=1.0, v0=0.0, t_end=2.0, fixed_step=0.01,
    )
    full = integrate(SystemSpec(**base))
    thin = integrate(SystemSpec(sample_stride=10, **base))
    assert len(full.ts) > 9 * len(thin.ts) // 2
    # thinned samples are a subset of the full grid
    assert np.allclose(thin.xs[:, 0], full.positions_at(thin.ts)[:, 0], atol=1e-12)


def test_reruns_are_bitwise_identical(j_run):
    again = integrate(j_run.spec)
    assert np.array_equal(again.ts, j_run.ts)
    assert np.array_equal(again.xs, j_run.xs)
    assert np.array_equal(again.vs, j_run.vs)
    assert len(again.events) == len(j_run.events)
    assert all(a.time == b.time for a, b in zip(again.events, j_run.events))


# ---------------------------------------------------------------------------
# failure modes


def test_max_steps_exceeded():
    with pytest.raises(MaxStepsExceeded):
        integrate(
            SystemSpec(
                schedule=Constant(0.1), potential=Quadratic(1),
                x0=1.0, v0=0.0, t_end=1000.0, max_steps=10,
            )
        )


def test_non_finite_state_detected():
    # inverted parabola: x grows like e^{sqrt(2) t} and overflows
    with pytest.raises(NonFiniteState):
        integrate(
            SystemSpec(
                schedule=Constant(0.0),
                potential=Polynomial1D([0.0, 0.0, -1.0]),
                x0=1.0, v0=0.0, t_end=1000.0,
            )
        )


def test_spec_validation():
    ok = dict(schedule=Constant(1.0), potential=Quadratic(1), x0=1.0, v0=0.0, t_end=1.0)
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "x0": [1.0, 2.0]}))
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "x0": math.nan}))
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "t_end": 0.0}))
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "rel_tol": -1e-9}))
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "max_steps": 0}))
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "fixed_step": 0.0}))
    with pytest.raises(DomainError):
        integrate(SystemSpec(**{**ok, "sample_stride": 0}))
    with pytest.raises(DomainError):
        integrate(
            SystemSpec(
                schedule=Constant(1.0), potential=Quadratic(2),
                x0=[1.0, 0.0], v0=[0.0, 0.0], t_end=1.0, event_dir=[0.0, 0.0],
            )
        )


def test_custom_potential_integrates():
    # callback-defined potential runs through the generic gradient path
    pot = CustomPotential(
        n=1,
        energy=lambda p: 0.5 * float(p @ p),
        grad=lambda p: p,
        coercive=True,
        min_value=0.0,
    )
    traj = integrate(
        SystemSpec(schedule=Constant(1.0), potential=pot, x0=1.0, v0=0.0, t_end=5.0)
    )
    ref = integrate(
        SystemSpec(schedule=Constant(1.0), potential=Quadratic(1), x0=1.0, v0=0.0, t_end=5.0)
    )
    assert traj.xs[-1, 0] == pytest.approx(ref.xs[-1, 0], rel=1e-8)
