"""Mirror descent in feature space under an annealing scheduler.

The feature matrix evolves by dZ/ds = -(b*Dv - c*v + f + tau_s * Z) where
v is the entropy-weighted value of the current Gibbs policy, re-solved at
every Runge-Kutta stage.  Trajectories record both the regularized value
and the plain value of the running policy at probe nodes; the plain value
costs one extra linear solve with the KL forcing dropped.
"""

import math
from dataclasses import dataclass

import numpy as np

from .elliptic import solve_on_policy_bellman
from .hjb import HjbSolution, optimal_feature
from .policy import gibbs_policy

CONSTANT = "constant"
HORIZON_CONSTANT = "horizon_constant"
INVERSE_LINEAR = "inverse_linear"
INVERSE_SQRT = "inverse_sqrt"
POWER_LAW = "power_law"

SCHEDULER_KINDS = (CONSTANT, HORIZON_CONSTANT, INVERSE_LINEAR, INVERSE_SQRT,
                   POWER_LAW)


class UnstableFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scheduler:
    """Closed family of positive nonincreasing regularization schedules.

    constant: tau; horizon_constant: ln(S+1)/S for a fixed horizon S;
    inverse_linear: 1/(1+s); inverse_sqrt: 1/sqrt(1+s);
    power_law: 1/(1+s)^beta.
    """
    kind: str
    tau: float = math.nan
    horizon: float = math.nan
    beta: float = math.nan

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise ValueError(f"unknown scheduler kind {self.kind!r}")
        if self.kind == CONSTANT and not self.tau > 0.0:
            raise ValueError("constant scheduler needs tau > 0")
        if self.kind == HORIZON_CONSTANT and not self.horizon > 0.0:
            raise ValueError("horizon_constant scheduler needs S > 0")
        if self.kind == POWER_LAW and not 0.0 < self.beta:
            raise ValueError("power_law scheduler needs beta > 0")

    def value(self, s):
        """tau_s; accepts scalars or arrays."""
        s = np.asarray(s, dtype=np.float64)
        if np.any(s < 0.0):
            raise ValueError("s must be nonnegative")
        if self.kind == CONSTANT:
            out = np.full_like(s, self.tau)
        elif self.kind == HORIZON_CONSTANT:
            out = np.full_like(s, math.log(self.horizon + 1.0) / self.horizon)
        elif self.kind == INVERSE_LINEAR:
            out = 1.0 / (1.0 + s)
        elif self.kind == INVERSE_SQRT:
            out = 1.0 / np.sqrt(1.0 + s)
        else:
            out = np.power(1.0 + s, -self.beta)
        return out if out.ndim else float(out)

    def integral(self, s):
        """int_0^s tau_r dr in closed form."""
        s = np.asarray(s, dtype=np.float64)
        if self.kind == CONSTANT:
            out = self.tau * s
        elif self.kind == HORIZON_CONSTANT:
            out = (math.log(self.horizon + 1.0) / self.horizon) * s
        elif self.kind == INVERSE_LINEAR:
            out = np.log1p(s)
        elif self.kind == INVERSE_SQRT:
            out = 2.0 * (np.sqrt(1.0 + s) - 1.0)
        elif self.beta == 1.0:
            out = np.log1p(s)
        else:
            out = (np.power(1.0 + s, 1.0 - self.beta) - 1.0) / (1.0 - self.beta)
        return out if out.ndim else float(out)


def scheduler_value(sched: Scheduler, s):
    return sched.value(s)


@dataclass
class FlowTrajectory:
    times: np.ndarray
    tau_values: np.ndarray
    values_at_probe: np.ndarray        # (n_records, n_probes), weight tau_s
    unregularized_values: np.ndarray   # (n_records, n_probes), weight 0
    kl_mass: np.ndarray                # occupancy-weighted KL, probe average
    z_final: np.ndarray
    step_count: int
    probe_indices: np.ndarray
    probe_x: np.ndarray
    dt: float
    scheduler: Scheduler = None


def mirror_rhs(problem, z, vf, tau):
    """Descent direction -(b*Dv - c*v + f + tau*Z)."""
    return -(optimal_feature(problem, vf) + tau * z)


def _rhs(problem, z, tau, scheme):
    vf = solve_on_policy_bellman(problem, gibbs_policy(z, problem.actions),
                                 tau, scheme)
    return mirror_rhs(problem, z, vf, tau)


def estimate_rhs_lipschitz(problem, z0, tau, scheme="central"):
    """Crude local Lipschitz bound of the rhs from one random perturbation."""
    rng = np.random.default_rng(181181)
    delta = 1e-3 * (1.0 + np.max(np.abs(z0))) * rng.standard_normal(z0.shape)
    f0 = _rhs(problem, z0, tau, scheme)
    f1 = _rhs(problem, z0 + delta, tau, scheme)
    num = float(np.max(np.abs(f1 - f0 + tau * delta)))  # strip the -tau*Z part
    return num / float(np.max(np.abs(delta)))


def integrate_flow(problem, z0, sched: Scheduler, S, dt, probes,
                   record_every=1, scheme="central",
                   check_stability=True) -> FlowTrajectory:
    """Integrate the feature flow to time S with fixed-step RK4.

    ``probes`` are interior node indices; values are recorded at s = 0 and
    every ``record_every`` steps (the final step is always recorded).
    """
    z = np.array(z0, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("initial feature matrix has non-finite entries")
    if dt <= 0.0 or S < dt:
        raise ValueError("need 0 < dt <= S")
    probes = np.asarray(probes, dtype=np.int64)
    if probes.size == 0 or probes.min() < 0 or probes.max() >= problem.n_interior:
        raise ValueError("probes must be interior node indices")
    tau0 = float(sched.value(0.0))
    if check_stability:
        lip = estimate_rhs_lipschitz(problem, z, tau0, scheme)
        if dt * (tau0 + lip) > 1.0:
            raise UnstableFlowError(
                f"dt={dt:g} fails the stability check dt*(tau0 + L) <= 1 "
                f"with tau0={tau0:g}, L~{lip:.3g}; use dt <= "
                f"{1.0 / (tau0 + lip):.3g}")
    n_steps = int(round(S / dt))
    times, taus, vals, unregs, kls = [], [], [], [], []

    def record(s, z_now):
        tau_s = float(sched.value(s))
        pol = gibbs_policy(z_now, problem.actions)
        vf = solve_on_policy_bellman(problem, pol, tau_s, scheme)
        vf0 = solve_on_policy_bellman(problem, pol, 0.0, scheme)
        vr = vf.v[1:-1][probes]
        vu = vf0.v[1:-1][probes]
        times.append(s)
        taus.append(tau_s)
        vals.append(vr)
        unregs.append(vu)
        kls.append(float(np.mean((vr - vu) / tau_s)))

    record(0.0, z)
    s = 0.0
    for step in range(1, n_steps + 1):
        k1 = _rhs(problem, z, float(sched.value(s)), scheme)
        k2 = _rhs(problem, z + 0.5 * dt * k1,
                  float(sched.value(s + 0.5 * dt)), scheme)
        k3 = _rhs(problem, z + 0.5 * dt * k2,
                  float(sched.value(s + 0.5 * dt)), scheme)
        k4 = _rhs(problem, z + dt * k3, float(sched.value(s + dt)), scheme)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s = step * dt
        if not np.all(np.isfinite(z)):
            raise UnstableFlowError(
                f"non-finite feature state at step {step} (s={s:g}, "
                f"max|Z| before failure unavailable)")
        if step % record_every == 0 or step == n_steps:
            record(s, z)
    return FlowTrajectory(times=np.array(times), tau_values=np.array(taus),
                          values_at_probe=np.array(vals),
                          unregularized_values=np.array(unregs),
                          kl_mass=np.array(kls), z_final=z,
                          step_count=n_steps, probe_indices=probes,
                          probe_x=problem.grid.interior[probes], dt=dt,
                          scheduler=sched)


@dataclass
class ErrorDecomposition:
    """Per record-time split of the plain-value error into the (negative)
    KL part, the optimization error, and the regularization bias."""
    times: np.ndarray
    kl_term: np.ndarray        # (n_times, n_probes) <= 0
    optimization: np.ndarray   # >= -1e-8
    bias: np.ndarray           # >= -1e-8
    total: np.ndarray


def error_decomposition(problem, traj: FlowTrajectory, hjb_reg,
                        hjb_unreg: HjbSolution,
                        indices=None) -> ErrorDecomposition:
    """Split v_0^pi - v_0^* at the probes for selected record indices.

    ``hjb_reg`` is one HjbSolution (constant schedulers) or a sequence
    aligned with ``indices``; each solution's tau must match the recorded
    tau at its index.
    """
    if indices is None:
        indices = np.arange(traj.times.size)
    indices = np.asarray(indices, dtype=np.int64)
    if isinstance(hjb_reg, HjbSolution):
        regs = [hjb_reg] * indices.size
    else:
        regs = list(hjb_reg)
        if len(regs) != indices.size:
            raise ValueError("need one regularized solution per index")
    probes_full = traj.probe_indices
    v0_star = hjb_unreg.v_star.v[1:-1][probes_full]
    kl_t, opt_t, bias_t, tot_t = [], [], [], []
    for idx, sol in zip(indices, regs):
        tau_rec = traj.tau_values[idx]
        if abs(sol.tau - tau_rec) > 1e-12 * (1.0 + tau_rec):
            raise ValueError(
                f"tau mismatch at record {idx}: trajectory has "
                f"{tau_rec:.17g}, solution has {sol.tau:.17g}")
        v_reg = traj.values_at_probe[idx]
        v_unreg = traj.unregularized_values[idx]
        v_tau_star = sol.v_star.v[1:-1][probes_full]
        kl_t.append(v_unreg - v_reg)
        opt_t.append(v_reg - v_tau_star)
        bias_t.append(v_tau_star - v0_star)
        tot_t.append(v_unreg - v0_star)
    return ErrorDecomposition(times=traj.times[indices],
                              kl_term=np.array(kl_t),
                              optimization=np.array(opt_t),
                              bias=np.array(bias_t), total=np.array(tot_t))
