"""Built-in verification suite.

Each criterion exercises one published claim of the package end to end
(integrator accuracy against closed forms, decay-rate fits, bound
residuals, limit classification, density statistics, and the averaged
stochastic recursion) and reports a machine-checkable pass/fail with the
measured numbers.  The CLI `verify` subcommand and the acceptance tests
both run through this module, so there is exactly one definition of
what "passing" means.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .analyze import (
    cesaro_mean,
    classify_limit,
    lower_bound_residual,
    occupation_density,
    omega_limit_extent,
    rate_fit,
    sign_change_gaps,
    upper_bound_check,
)
from .errors import DomainError
from .integrate import SystemSpec, Trajectory, integrate
from .oracle import linear_regular_solution, power_law_exact
from .potential import DoubleWell, FlatBottom, Quadratic, SignedPower
from .schedule import Constant, PowerLaw
from .sgd import NoiseModel, StepSchedule, compare_to_ode, run_recursion

__all__ = ["CriterionResult", "list_criteria", "run_criteria", "CRITERION_IDS"]

_START_BOX = 2.0  # random starts drawn from [-2, 2] for x0 and v0
_A8_SEED = 20260815
_A11_SEED = 11


@dataclass(frozen=True)
class CriterionResult:
    criterion_id: str
    title: str
    passed: bool
    detail: str
    measured: Dict[str, object]
    seconds: float

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.criterion_id} {verdict}  {self.detail}"

    def as_dict(self) -> dict:
        return {
            "id": self.criterion_id,
            "title": self.title,
            "passed": self.passed,
            "detail": self.detail,
            "measured": self.measured,
            "seconds": round(self.seconds, 3),
        }


def _random_starts(seed: int, count: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=seed))
    return _START_BOX * (2.0 * gen.uniform(size=(count, 2)) - 1.0)


class _Suite:
    """Lazily built, cached fixture runs shared between criteria."""

    def __init__(self) -> None:
        self._cache: Dict[str, object] = {}

    def _get(self, key: str, build: Callable[[], object]) -> object:
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # fixture runs ----------------------------------------------------

    def linear_singular_run(self) -> Trajectory:
        return self._get(
            "linear_singular",
            lambda: integrate(
                SystemSpec(
                    schedule=PowerLaw(c=1.0, gamma=1.0, s0=0.0),
                    potential=Quadratic(1),
                    x0=1.0,
                    v0=0.0,
                    t_end=50.0,
                    rel_tol=1e-9,
                )
            ),
        )

    def decay_run(self, c: float) -> Trajectory:
        return self._get(
            f"decay_c{c}",
            lambda: integrate(
                SystemSpec(
                    schedule=PowerLaw(c=c, gamma=1.0, s0=1.0),
                    potential=Quadratic(1),
                    x0=1.0,
                    v0=0.0,
                    t_end=1.0e3,
                    rel_tol=1e-9,
                    abs_tol=1e-14,
                )
            ),
        )

    def slow_decay_run(self) -> Trajectory:
        # sub-linear damping drives the phase norm below 1e-30, so the
        # absolute floor is pushed out of the way and the relative
        # tolerance alone steers the step size
        return self._get(
            "slow_decay",
            lambda: integrate(
                SystemSpec(
                    schedule=PowerLaw(c=1.0, gamma=0.5, s0=1.0),
                    potential=Quadratic(1),
                    x0=1.0,
                    v0=0.0,
                    t_end=1.0e3,
                    rel_tol=1e-9,
                    abs_tol=1e-300,
                )
            ),
        )

    def flat_sweep_run(self, t_end: float) -> Trajectory:
        return self._get(
            f"flat_sweep_{t_end}",
            lambda: integrate(
                SystemSpec(
                    schedule=PowerLaw(c=1.0, gamma=1.0, s0=1.0),
                    potential=FlatBottom(1),
                    x0=0.0,
                    v0=1.5,
                    t_end=t_end,
                    rel_tol=1e-9,
                )
            ),
        )

    def flat_settling_run(self) -> Trajectory:
        return self._get(
            "flat_settling",
            lambda: integrate(
                SystemSpec(
                    schedule=PowerLaw(c=1.0, gamma=0.5, s0=1.0),
                    potential=FlatBottom(1),
                    x0=0.0,
                    v0=1.5,
                    t_end=1.0e4,
                    rel_tol=1e-9,
                )
            ),
        )

    def well_runs(self) -> List[Trajectory]:
        def build() -> List[Trajectory]:
            runs = []
            for x0, v0 in _random_starts(_A8_SEED, 20):
                runs.append(
                    integrate(
                        SystemSpec(
                            schedule=PowerLaw(c=1.0, gamma=1.0, s0=1.0),
                            potential=DoubleWell(),
                            x0=float(x0),
                            v0=float(v0),
                            t_end=1.0e4,
                            rel_tol=1e-6,
                        )
                    )
                )
            return runs

        return self._get("well_runs", build)

    def constant_damping_runs(self) -> List[Trajectory]:
        def build() -> List[Trajectory]:
            runs = []
            for x0, v0 in _random_starts(_A11_SEED, 20):
                runs.append(
                    integrate(
                        SystemSpec(
                            schedule=Constant(1.0),
                            potential=DoubleWell(),
                            x0=float(x0),
                            v0=float(v0),
                            t_end=1.0e2,
                            rel_tol=1e-9,
                        )
                    )
                )
            return runs

        return self._get("constant_damping_runs", build)

    def plane_flat_run(self, t_end: float) -> Trajectory:
        return self._get(
            f"plane_flat_{t_end}",
            lambda: integrate(
                SystemSpec(
                    schedule=PowerLaw(c=1.0, gamma=1.0, s0=1.0),
                    potential=FlatBottom(2),
                    x0=(0.0, 0.0),
                    v0=(1.2, 0.9),
                    t_end=t_end,
                    rel_tol=1e-8,
                )
            ),
        )

    # criteria ----------------------------------------------------------

    def a1(self, rel_tol: Optional[float] = None) -> CriterionResult:
        t0 = time.perf_counter()
        if rel_tol is None:
            traj = self.linear_singular_run()
        else:
            traj = integrate(
                SystemSpec(
                    schedule=PowerLaw(c=1.0, gamma=1.0, s0=0.0),
                    potential=Quadratic(1),
                    x0=1.0,
                    v0=0.0,
                    t_end=50.0,
                    rel_tol=rel_tol,
                )
            )
        err = max(
            abs(float(x) - linear_regular_solution(1.0, float(t)))
            for t, x in zip(traj.ts, traj.xs[:, 0])
        )
        passed = err <= 1e-6
        return CriterionResult(
            "A1",
            "singular-damping run matches the series reference",
            passed,
            f"max |x - reference| = {err:.3e} (tol 1e-06) over {len(traj.ts)} samples",
            {"max_error": err, "samples": len(traj.ts)},
            time.perf_counter() - t0,
        )

    def a2(self) -> CriterionResult:
        t0 = time.perf_counter()
        slopes = {}
        ok = True
        for c in (0.5, 1.0, 2.0, 3.0):
            traj = self.decay_run(c)
            phase = traj.xs[:, 0] ** 2 + traj.vs[:, 0] ** 2
            fit = rate_fit(traj.ts, phase, (1.0e2, 1.0e3), model="PowerLaw")
            slopes[str(c)] = fit.exponent
            ok = ok and abs(fit.exponent + c) <= 0.05 * c
        detail = ", ".join(f"c={c}: {s:.4f}" for c, s in slopes.items())
        return CriterionResult(
            "A2",
            "phase-norm decay exponent tracks the damping amplitude",
            ok,
            f"fitted slopes {detail} (each within 5% of -c)",
            {"slopes": slopes},
            time.perf_counter() - t0,
        )

    def a3(self) -> CriterionResult:
        t0 = time.perf_counter()
        traj = self.slow_decay_run()
        phase = traj.xs[:, 0] ** 2 + traj.vs[:, 0] ** 2
        fit = rate_fit(
            traj.ts,
            phase,
            (1.0e2, 1.0e3),
            model="ExponentialInIntegralOfA",
            schedule=traj.spec.schedule,
        )
        passed = abs(fit.exponent - 1.0) <= 0.1
        return CriterionResult(
            "A3",
            "sub-linear damping decays like the damping integral",
            passed,
            f"slope vs -int a = {fit.exponent:.4f} (want 1.0 +/- 0.1, "
            f"residual rms {fit.residual_rms:.3f})",
            {"slope": fit.exponent, "residual_rms": fit.residual_rms},
            time.perf_counter() - t0,
        )

    def a4(self) -> CriterionResult:
        t0 = time.perf_counter()
        residuals = {}
        runs = [("singular", self.linear_singular_run()), ("slow", self.slow_decay_run())]
        runs += [(f"c={c}", self.decay_run(c)) for c in (0.5, 1.0, 2.0, 3.0)]
        ok = True
        for label, traj in runs:
            res = lower_bound_residual(traj)
            residuals[label] = res
            ok = ok and res >= -1e-8
        worst = min(residuals.values())
        return CriterionResult(
            "A4",
            "energy never dips below the kernel-squared floor",
            ok,
            f"worst residual {worst:.3e} over {len(runs)} runs (floor -1e-08)",
            {"residuals": residuals},
            time.perf_counter() - t0,
        )

    def a5(self) -> CriterionResult:
        t0 = time.perf_counter()
        near = upper_bound_check(self.decay_run(1.0), theta=0.5, regime="K1", K=1.0)
        far = upper_bound_check(self.slow_decay_run(), theta=0.5, regime="K2", K=0.5)
        ok = near.passed and near.stable and far.passed and math.isfinite(far.constant)
        return CriterionResult(
            "A5",
            "energy-gap envelopes hold in both damping regimes",
            ok,
            f"kernel regime C = {near.constant:.4f} (stable: {near.stable}); "
            f"rate regime D = {far.constant:.4f}",
            {
                "kernel_constant": near.constant,
                "kernel_stable": near.stable,
                "rate_constant": far.constant,
            },
            time.perf_counter() - t0,
        )

    def a6(self) -> CriterionResult:
        t0 = time.perf_counter()
        measured: Dict[str, object] = {}
        ok = True
        for horizon in (1.0e3, 1.0e4):
            traj = self.flat_sweep_run(10.0 * horizon)
            ext = omega_limit_extent(traj, 0.9)
            lo, hi = float(ext[0, 0]), float(ext[0, 1])
            measured[f"sweep_extent_T{horizon:g}"] = [lo, hi]
            ok = ok and lo <= -0.95 and hi >= 0.95
        settle = self.flat_settling_run()
        ext = omega_limit_extent(settle, 0.1)
        width = float(ext[0, 1] - ext[0, 0])
        mid = 0.5 * float(ext[0, 0] + ext[0, 1])
        measured["settle_width"] = width
        measured["settle_limit"] = mid
        ok = ok and width <= 1e-3 and -1.0 <= mid <= 1.0
        return CriterionResult(
            "A6",
            "flat-floor runs sweep under 1/t damping and settle under slower damping",
            ok,
            f"sweep extents {measured['sweep_extent_T1000']} and "
            f"{measured['sweep_extent_T10000']}; settle width {width:.2e} at {mid:.4f}",
            measured,
            time.perf_counter() - t0,
        )

    def a7(self) -> CriterionResult:
        t0 = time.perf_counter()
        errors = {}
        ok = True
        for beta in (0.5, 1.0, 2.0):
            _, v_init, c = power_law_exact(beta, 0.0)
            traj = integrate(
                SystemSpec(
                    schedule=PowerLaw(c=c, gamma=1.0, s0=1.0),
                    potential=SignedPower(beta),
                    x0=1.0,
                    v0=v_init,
                    t_end=100.0,
                    rel_tol=1e-9,
                )
            )
            err = max(
                abs(float(x) - power_law_exact(beta, float(t))[0])
                for t, x in zip(traj.ts, traj.xs[:, 0])
            )
            errors[str(beta)] = err
            ok = ok and err <= 1e-6
        worst = max(errors.values())
        return CriterionResult(
            "A7",
            "matched-damping runs track the exact power-law solution",
            ok,
            f"worst max |x - (t+1)^-beta| = {worst:.3e} (tol 1e-06)",
            {"errors": errors},
            time.perf_counter() - t0,
        )

    def a8(self) -> CriterionResult:
        t0 = time.perf_counter()
        runs = self.well_runs()
        verdicts = []
        ratios_ok = True
        max_hits = 0
        min_ratio = math.inf
        for traj in runs:
            cl = classify_limit(traj)
            verdicts.append(cl.verdict)
            if cl.verdict == "ConvergesToMax":
                max_hits += 1
            n2 = sum(1 for e in traj.events if e.time <= 1.0e2)
            n4 = len(traj.events)
            ratio = n4 / n2 if n2 else math.inf
            min_ratio = min(min_ratio, ratio)
            ratios_ok = ratios_ok and n4 >= 10 * n2
        all_min = all(v == "ConvergesToMin" for v in verdicts)
        ok = all_min and ratios_ok and max_hits == 0
        return CriterionResult(
            "A8",
            "random double-well starts all settle at a floor, never the hump",
            ok,
            f"20/20 ConvergesToMin: {all_min}; min event ratio 1e4/1e2 = "
            f"{min_ratio:.1f} (want >= 10); hump count {max_hits}",
            {
                "verdicts": verdicts,
                "min_event_ratio": None if math.isinf(min_ratio) else min_ratio,
                "max_hits": max_hits,
            },
            time.perf_counter() - t0,
        )

    def a9(self) -> CriterionResult:
        t0 = time.perf_counter()
        trapped = self.well_runs()[0]
        report = sign_change_gaps(trapped)
        tail = report.gaps[report.times > 1.0e3]
        target = math.pi / math.sqrt(2.0)
        period_dev = float(np.max(np.abs(tail - target)) / target) if tail.size else math.inf
        period_ok = tail.size > 0 and period_dev <= 0.02

        sweep = self.flat_sweep_run(1.0e5)
        rep = sign_change_gaps(sweep)
        ratios = {}
        for horizon in (1.0e2, 1.0e3, 1.0e4):
            mask = rep.times <= horizon
            vals = rep.gaps[mask] / (1.0 + np.log1p(rep.times[mask]))
            ratios[f"{horizon:g}"] = float(np.max(vals)) if vals.size else 0.0
        positive = [v for v in ratios.values() if v > 0.0]
        spread = max(ratios.values()) / min(positive) if positive else math.inf
        log_ok = spread <= 2.0
        ok = period_ok and log_ok
        return CriterionResult(
            "A9",
            "turning-point gaps: trapped period and logarithmic gap growth",
            ok,
            f"trapped gaps within {period_dev:.4f} of pi/sqrt(2) (tol 0.02); "
            f"flat-floor gap/(1+log) spread {spread:.1f}x across decades (want <= 2; "
            "coasting across a zero-force floor grows gaps linearly in t, so this "
            "clause fails for the flat floor by design of the dynamics)",
            {
                "period_max_dev": period_dev,
                "period_ok": period_ok,
                "log_ratio_by_horizon": ratios,
                "log_spread": spread,
                "log_ok": log_ok,
            },
            time.perf_counter() - t0,
        )

    def a10(self) -> CriterionResult:
        t0 = time.perf_counter()
        traj = self.well_runs()[0]
        cl = classify_limit(traj)
        limit = cl.nearest_location if cl.nearest_location is not None else cl.limit_estimate[0]
        report = occupation_density(traj, [limit], 0.1, (1.0e2, 1.0e3, 1.0e4))
        f2, f3, f4 = report.fractions
        decreasing = f2 > f3 > f4
        cesaro = float(cesaro_mean(traj, 1.0e4)[0])
        cesaro_err = abs(cesaro - float(limit))
        ok = decreasing and f4 <= 0.05 and cesaro_err <= 0.05
        return CriterionResult(
            "A10",
            "time spent away from the limit thins out; long-run average matches",
            ok,
            f"fractions outside 0.1-ball: {f2:.3f} > {f3:.3f} > {f4:.3f} "
            f"(final <= 0.05); |cesaro - limit| = {cesaro_err:.4f}",
            {
                "fractions": list(report.fractions),
                "cesaro": cesaro,
                "limit": float(limit),
                "cesaro_error": cesaro_err,
            },
            time.perf_counter() - t0,
        )

    def a11(self) -> CriterionResult:
        t0 = time.perf_counter()
        runs = self.constant_damping_runs()
        settled = 0
        worst_width = 0.0
        for traj in runs:
            cl = classify_limit(traj)
            worst_width = max(worst_width, cl.tail_width)
            if cl.limit_exists and cl.verdict == "ConvergesToMin":
                settled += 1
        ok = settled == len(runs)
        return CriterionResult(
            "A11",
            "constant damping settles every random start by t = 100",
            ok,
            f"{settled}/{len(runs)} settled; worst tail width {worst_width:.2e}",
            {"settled": settled, "runs": len(runs), "worst_tail_width": worst_width},
            time.perf_counter() - t0,
        )

    def a12(self) -> CriterionResult:
        t0 = time.perf_counter()
        quad = Quadratic(1)
        eps = 1e-3
        horizon = 20.0
        n_coarse = int(round(horizon / eps))
        coarse = run_recursion(quad, StepSchedule.constant(eps), NoiseModel.none(), 1.0, n_coarse)
        fine = run_recursion(
            quad, StepSchedule.constant(eps / 2.0), NoiseModel.none(), 1.0, 2 * n_coarse
        )
        dev_coarse = compare_to_ode(coarse, quad, horizon=horizon).deviation
        dev_fine = compare_to_ode(fine, quad, horizon=horizon).deviation
        ratio = dev_coarse / dev_fine
        ratio_ok = 1.6 <= ratio <= 2.4

        drift = max(
            run_recursion(
                quad, StepSchedule.constant(eps), NoiseModel.none(), 1.0, 100_000
            ).drift_identity_max,
            run_recursion(
                quad, StepSchedule.power_decay(1e-2, 0.7), NoiseModel.none(), 1.0, 100_000
            ).drift_identity_max,
        )
        drift_ok = drift <= 1e-10

        noisy_a = run_recursion(
            quad, StepSchedule.constant(eps), NoiseModel.gaussian(1.0, seed=404), 1.0, 5_000
        )
        noisy_b = run_recursion(
            quad, StepSchedule.constant(eps), NoiseModel.gaussian(1.0, seed=404), 1.0, 5_000
        )
        bitwise = bool(
            np.array_equal(noisy_a.x, noisy_b.x)
            and np.array_equal(noisy_a.h, noisy_b.h)
            and np.array_equal(noisy_a.tau, noisy_b.tau)
        )
        ok = ratio_ok and drift_ok and bitwise
        return CriterionResult(
            "A12",
            "averaged recursion: first-order in step, exact drift algebra, seeded replay",
            ok,
            f"step-halving deviation ratio {ratio:.3f} (want [1.6, 2.4]); "
            f"drift identity {drift:.2e} (tol 1e-10); bitwise replay {bitwise}",
            {
                "deviation_ratio": ratio,
                "dev_coarse": dev_coarse,
                "dev_fine": dev_fine,
                "drift_identity_max": drift,
                "bitwise": bitwise,
            },
            time.perf_counter() - t0,
        )

    def a13(self) -> CriterionResult:
        t0 = time.perf_counter()
        measured = {}
        ok = True
        for horizon in (1.0e3, 1.0e4):
            traj = self.plane_flat_run(2.0 * horizon)
            ext = omega_limit_extent(traj, 0.5)
            widths = ext[:, 1] - ext[:, 0]
            # the largest per-axis spread bounds the diameter from below
            diameter = float(np.max(widths))
            measured[f"diameter_T{horizon:g}"] = diameter
            ok = ok and diameter >= 0.5
        return CriterionResult(
            "A13",
            "planar flat-floor run keeps wandering at every horizon",
            ok,
            f"tail diameters {measured['diameter_T1000']:.3f} and "
            f"{measured['diameter_T10000']:.3f} (want >= 0.5)",
            measured,
            time.perf_counter() - t0,
        )


_CRITERIA: List[tuple] = [
    ("A1", "singular-damping run matches the series reference", "a1"),
    ("A2", "phase-norm decay exponent tracks the damping amplitude", "a2"),
    ("A3", "sub-linear damping decays like the damping integral", "a3"),
    ("A4", "energy never dips below the kernel-squared floor", "a4"),
    ("A5", "energy-gap envelopes hold in both damping regimes", "a5"),
    ("A6", "flat-floor runs sweep under 1/t damping and settle under slower damping", "a6"),
    ("A7", "matched-damping runs track the exact power-law solution", "a7"),
    ("A8", "random double-well starts all settle at a floor, never the hump", "a8"),
    ("A9", "turning-point gaps: trapped period and logarithmic gap growth", "a9"),
    ("A10", "time spent away from the limit thins out; long-run average matches", "a10"),
    ("A11", "constant damping settles every random start by t = 100", "a11"),
    ("A12", "averaged recursion: first-order in step, exact drift algebra, seeded replay", "a12"),
    ("A13", "planar flat-floor run keeps wandering at every horizon", "a13"),
]

CRITERION_IDS = tuple(cid for cid, _, _ in _CRITERIA)


def list_criteria() -> List[tuple]:
    """(id, title) pairs in run order, without running anything."""
    return [(cid, title) for cid, title, _ in _CRITERIA]


def run_criteria(
    ids: Optional[Sequence[str]] = None,
    progress: Optional[Callable[[CriterionResult], None]] = None,
) -> List[CriterionResult]:
    """Run the requested criteria (all by default) sharing fixture runs."""
    wanted = list(CRITERION_IDS) if ids is None else list(ids)
    unknown = [c for c in wanted if c not in CRITERION_IDS]
    if unknown:
        raise DomainError(f"unknown criterion ids {unknown}; known ids {list(CRITERION_IDS)}")
    suite = _Suite()
    by_id = {cid: method for cid, _, method in _CRITERIA}
    results = []
    for cid in wanted:
        result = getattr(suite, by_id[cid])()
        results.append(result)
        if progress is not None:
            progress(result)
    return results
