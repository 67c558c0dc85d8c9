"""Averaged-drift stochastic approximation and its continuous-time limit.

The recursion keeps a running average ``h`` of past (possibly noisy)
gradients, weighted by the step sizes, and moves the iterate against
that average:

    h_next = h - eps_n * h / tau + eps_n * g(x, noise) / tau
    tau_next = tau + eps_{n+1}
    x_next = x - eps_{n+1} * h_next

with ``tau`` the running sum of step sizes (the interpolation clock)
and ``h`` starting at zero so the first update uses exactly the first
sampled gradient.  Linear interpolation of ``x`` against ``tau``
approaches the solution of

    X''(t) = -(X'(t) + grad G(X(t))) / (t + beta)

which a quadratic clock change turns into the damped system handled by
:mod:`vanishdamp.integrate` with damping rate 1/(s + 2*sqrt(tau0)).
``compare_to_ode`` exploits that to measure the deviation between the
discrete path and its limit with an independent integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, NonFiniteState
from .integrate import SystemSpec, Trajectory, integrate
from .potential import Potential
from .schedule import PowerLaw

__all__ = [
    "StepSchedule",
    "NoiseModel",
    "DiscretePath",
    "OdeComparison",
    "run_recursion",
    "limiting_ode_rhs",
    "compare_to_ode",
]

_RULES = ("Constant", "PowerDecay")
_U64_SCALE = 2.0 ** -64


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequence eps_n for the averaged-drift recursion.

    ``Constant`` uses eps_n = eps0.  ``PowerDecay`` uses
    eps_n = eps0 * (n+1)**(-rho) with rho in (1/2, 1], the window where
    the steps sum to infinity while some power 1+alpha of them is
    summable.
    """

    rule: str
    eps0: float
    rho: Optional[float] = None

    def __post_init__(self) -> None:
        if self.rule not in _RULES:
            raise DomainError(f"unknown step rule {self.rule!r}; expected one of {_RULES}")
        if not (math.isfinite(self.eps0) and self.eps0 > 0.0):
            raise DomainError(f"eps0 must be positive and finite, got {self.eps0}")
        if self.rule == "PowerDecay":
            if self.rho is None or not (0.5 < self.rho <= 1.0):
                raise DomainError(f"PowerDecay needs rho in (1/2, 1], got {self.rho}")
        elif self.rho is not None:
            raise DomainError("rho is only meaningful for the PowerDecay rule")

    @classmethod
    def constant(cls, eps0: float) -> "StepSchedule":
        return cls("Constant", eps0)

    @classmethod
    def power_decay(cls, eps0: float, rho: float) -> "StepSchedule":
        return cls("PowerDecay", eps0, rho)

    def eps(self, n: int) -> float:
        """Step size eps_n (n >= 0)."""
        if n < 0:
            raise DomainError(f"step index must be >= 0, got {n}")
        if self.rule == "Constant":
            return self.eps0
        return self.eps0 * float(n + 1) ** -self.rho

    @property
    def steps_diverge(self) -> bool:
        """True when the step sizes sum to infinity (both rules)."""
        return True

    @property
    def has_summable_power(self) -> bool:
        """True when sum eps_n**(1+alpha) is finite for some alpha > 0."""
        return self.rule == "PowerDecay"


@dataclass(frozen=True)
class NoiseModel:
    """Gradient noise: exact gradients, or additive Gaussian perturbation.

    Sampling is counter-based (Philox keyed by ``seed``) with the
    Gaussian produced by inverse-CDF, so a path is reproducible bit for
    bit across runs and platforms.
    """

    kind: str
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("None", "GaussianAdditive"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.kind == "GaussianAdditive":
            if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
                raise DomainError(f"sigma must be >= 0 and finite, got {self.sigma}")
        elif self.sigma:
            raise DomainError("sigma is only meaningful for GaussianAdditive noise")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must fit in 64 bits")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("None")

    @classmethod
    def gaussian(cls, sigma: float, seed: int = 0) -> "NoiseModel":
        return cls("GaussianAdditive", sigma, seed)

    def stream(self, count: int, dim: int) -> np.ndarray:
        """The first ``count`` noise increments, shape (count, dim).

        A prefix of a longer stream is identical to the shorter one, so
        resuming or extending a run keeps the same draws.
        """
        if count < 0 or dim < 1:
            raise DomainError("need count >= 0 and dim >= 1")
        if self.kind == "None" or self.sigma == 0.0:
            return np.zeros((count, dim))
        bits = np.random.Generator(np.random.Philox(key=int(self.seed)))
        raw = bits.integers(0, 2 ** 64, size=(count, dim), dtype=np.uint64)
        # uniform strictly inside (0, 1), then inverse normal CDF
        u = (raw.astype(np.float64) + 0.5) * _U64_SCALE
        return self.sigma * ndtri(u)


@dataclass(frozen=True)
class DiscretePath:
    """Sampled recursion: clock tau, averaged drift h, and iterate x.

    Arrays hold rows n = 0..N.  ``drift_identity_max`` is the largest
    gap observed between the recursively updated drift and its closed
    form sum(eps_i * g_i) / tau_n, measured relative to the largest
    drift magnitude seen up to that step.  The drift oscillates through
    zero, so a pointwise quotient would divide rounding noise by a
    vanishing denominator at each sign change; scaling by the running
    magnitude reports accumulated rounding instead.
    """

    tau: np.ndarray
    h: np.ndarray
    x: np.ndarray
    drift_identity_max: float
    steps: StepSchedule
    noise: NoiseModel

    @property
    def n_steps(self) -> int:
        return len(self.tau) - 1

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def final_iterate(self) -> np.ndarray:
        return self.x[-1].copy()


def _as_start(x0, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x0, dtype=float))
    if arr.shape != (dim,):
        raise DomainError(f"start point has shape {arr.shape}, expected ({dim},)")
    if not np.all(np.isfinite(arr)):
        raise DomainError("start point must be finite")
    return arr


def run_recursion(
    pot: Potential,
    steps: StepSchedule,
    noise: NoiseModel,
    x0,
    n_steps: int,
) -> DiscretePath:
    """Run the averaged-drift recursion for ``n_steps`` updates.

    The clock is accumulated with compensated summation so tau_n is the
    exact prefix sum of the step sizes; the drift average is checked at
    every step against its closed form.
    """
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    dim = pot.n
    x_arr = _as_start(x0, dim)
    xi = noise.stream(n_steps, dim)

    if dim == 1:
        return _run_scalar(pot, steps, noise, float(x_arr[0]), n_steps, xi)
    return _run_vector(pot, steps, noise, x_arr, n_steps, xi)


def _run_scalar(
    pot: Potential,
    steps: StepSchedule,
    noise: NoiseModel,
    x0: float,
    n_steps: int,
    xi: np.ndarray,
) -> DiscretePath:
    grad = pot.scalar_grad_fn()
    eps = steps.eps
    xi_list = xi[:, 0].tolist()

    tau = eps(0)
    c_tau = 0.0  # compensation for the clock sum
    h = 0.0
    x = x0
    s_sum = 0.0  # closed-form numerator sum(eps_i * g_i)
    c_sum = 0.0
    worst = 0.0
    scale = 0.0

    taus = [tau]
    hs = [h]
    xs = [x]
    for n in range(n_steps):
        e_n = eps(n)
        try:
            g_n = grad(x) + xi_list[n]
        except OverflowError as exc:
            # scalar float ops raise instead of producing inf
            raise NonFiniteState(f"recursion diverged at step {n}") from exc
        h = h - e_n * h / tau + e_n * g_n / tau

        term = e_n * g_n - c_sum
        t_new = s_sum + term
        c_sum = (t_new - s_sum) - term
        s_sum = t_new
        closed = s_sum / tau
        mag = abs(closed)
        if mag > scale:
            scale = mag
        dev = abs(h - closed) / (scale if scale > 0.0 else 1.0)
        if dev > worst:
            worst = dev

        e_next = eps(n + 1)
        term = e_next - c_tau
        t_new = tau + term
        c_tau = (t_new - tau) - term
        tau = t_new
        x = x - e_next * h
        if not (math.isfinite(x) and math.isfinite(h)):
            raise NonFiniteState(f"recursion diverged at step {n + 1}")
        taus.append(tau)
        hs.append(h)
        xs.append(x)

    return DiscretePath(
        tau=np.asarray(taus),
        h=np.asarray(hs).reshape(-1, 1),
        x=np.asarray(xs).reshape(-1, 1),
        drift_identity_max=worst,
        steps=steps,
        noise=noise,
    )


def _run_vector(
    pot: Potential,
    steps: StepSchedule,
    noise: NoiseModel,
    x0: np.ndarray,
    n_steps: int,
    xi: np.ndarray,
) -> DiscretePath:
    eps = steps.eps
    dim = pot.n

    tau = eps(0)
    c_tau = 0.0
    h = np.zeros(dim)
    x = x0.copy()
    s_sum = np.zeros(dim)
    c_sum = np.zeros(dim)
    worst = 0.0
    scale = 0.0

    taus = np.empty(n_steps + 1)
    hs = np.empty((n_steps + 1, dim))
    xs = np.empty((n_steps + 1, dim))
    taus[0] = tau
    hs[0] = h
    xs[0] = x
    for n in range(n_steps):
        e_n = eps(n)
        try:
            g_n = pot.grad(x) + xi[n]
        except OverflowError as exc:
            # a Custom gradient built on scalar math can raise here
            raise NonFiniteState(f"recursion diverged at step {n}") from exc
        h = h - (e_n / tau) * h + (e_n / tau) * g_n

        term = e_n * g_n - c_sum
        t_new = s_sum + term
        c_sum = (t_new - s_sum) - term
        s_sum = t_new
        closed = s_sum / tau
        mag = float(np.linalg.norm(closed))
        if mag > scale:
            scale = mag
        dev = float(np.linalg.norm(h - closed)) / (scale if scale > 0.0 else 1.0)
        if dev > worst:
            worst = dev

        e_next = eps(n + 1)
        t_term = e_next - c_tau
        t_new_tau = tau + t_term
        c_tau = (t_new_tau - tau) - t_term
        tau = t_new_tau
        x = x - e_next * h
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h))):
            raise NonFiniteState(f"recursion diverged at step {n + 1}")
        taus[n + 1] = tau
        hs[n + 1] = h
        xs[n + 1] = x

    return DiscretePath(
        tau=taus,
        h=hs,
        x=xs,
        drift_identity_max=worst,
        steps=steps,
        noise=noise,
    )


def limiting_ode_rhs(t: float, x, v, beta: float, pot: Potential):
    """Acceleration -(v + grad G(x)) / (t + beta) of the limiting system.

    Requires t + beta > 0; at the singular clock origin the system is
    only defined through the recursion's own initialization.
    """
    clock = t + beta
    if not clock > 0.0:
        raise DomainError(f"need t + beta > 0, got {clock}")
    if pot.n == 1 and np.isscalar(x):
        return -(v + pot.scalar_grad_fn()(float(x))) / clock
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    v_arr = np.atleast_1d(np.asarray(v, dtype=float))
    return -(v_arr + pot.grad(x_arr)) / clock


@dataclass(frozen=True)
class OdeComparison:
    """Deviation between a discrete path and its limiting trajectory.

    ``metric`` is "sup" for noise-free paths and "rms" for noisy ones;
    a noisy path has no deterministic limit, so its number is a report,
    not a pass/fail quantity.
    """

    deviation: float
    metric: str
    clock_horizon: float
    points_compared: int
    trajectory: Trajectory = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "deviation": self.deviation,
            "metric": self.metric,
            "clock_horizon": self.clock_horizon,
            "points_compared": self.points_compared,
        }


def compare_to_ode(
    path: DiscretePath,
    pot: Potential,
    beta: float = 0.0,
    horizon: Optional[float] = None,
    rel_tol: float = 1e-10,
) -> OdeComparison:
    """Deviation of the path from the limiting system through clock ``horizon``.

    The limiting system X'' = -(X' + grad G(X)) / (t + beta) depends on
    time only through the clock t + beta, which the path carries as tau,
    so the comparison is done on the clock and ``beta`` does not move
    the result; it is validated for sign consistency only.  Substituting
    clock = (s + C)**2 / 4 with C = 2*sqrt(tau_0) turns the limit into
    the damped system with rate 1/(s + C) and unit gradient, which the
    adaptive integrator solves; deviations are measured at every stored
    clock value tau_n <= horizon.
    """
    tau0 = float(path.tau[0])
    if tau0 <= 0.0:
        raise DomainError(f"path clock must start positive, got {tau0}")
    if not math.isfinite(beta):
        raise DomainError(f"beta must be finite, got {beta}")
    tau_end = float(path.tau[-1])
    tau_hor = tau_end if horizon is None else min(float(horizon), tau_end)
    if tau_hor < tau0:
        raise DomainError(f"horizon {tau_hor} precedes the clock start {tau0}")

    c_shift = 2.0 * math.sqrt(tau0)
    s_end = 2.0 * math.sqrt(tau_hor) - c_shift
    x0 = path.x[0]
    # x'(s) = X'(clock) * dclock/ds, and dclock/ds = sqrt(tau0) at s = 0
    v0 = -path.h[0] * math.sqrt(tau0)

    mask = path.tau <= tau_hor * (1.0 + 1e-12)
    taus = path.tau[mask]
    n_pts = int(taus.size)

    if s_end <= 0.0:
        # the horizon stops at the clock origin: nothing to integrate
        dev = 0.0
        spec = SystemSpec(
            schedule=PowerLaw(c=1.0, gamma=1.0, s0=c_shift),
            potential=pot,
            x0=x0,
            v0=v0,
            t_end=max(s_end, 1e-9),
            rel_tol=rel_tol,
        )
        traj = integrate(spec)
        return OdeComparison(dev, "sup", tau_hor, n_pts, traj)

    spec = SystemSpec(
        schedule=PowerLaw(c=1.0, gamma=1.0, s0=c_shift),
        potential=pot,
        x0=x0,
        v0=v0,
        t_end=s_end,
        rel_tol=rel_tol,
    )
    traj = integrate(spec)

    s_vals = 2.0 * np.sqrt(taus) - c_shift
    ref = traj.positions_at(np.clip(s_vals, 0.0, s_end))
    gaps = np.max(np.abs(path.x[mask] - ref), axis=1)

    if path.noise.kind == "GaussianAdditive" and path.noise.sigma > 0.0:
        return OdeComparison(
            float(np.sqrt(np.mean(gaps ** 2))), "rms", tau_hor, n_pts, traj
        )
    return OdeComparison(float(np.max(gaps)), "sup", tau_hor, n_pts, traj)
