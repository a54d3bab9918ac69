"""Exit-time Monte Carlo: the independent check on the linear solver.

Paths follow the policy-averaged drift via Euler-Maruyama, accumulating
the discounted running cost (plus the entropy penalty at weight tau) until
they first leave the interval, then collect the discounted exit payoff at
the nearest endpoint.  Coefficients are linear interpolations of the
policy-averaged nodal tables, extended to the endpoints by replication.
Paths are simulated in batches with independently spawned substreams, and
batch results are reduced in a fixed order, so a seed pins the estimate
bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .elliptic import average_coefficients
from .kernels import simulate_chunk
from .policy import Policy

STEP_CAP = 10_000_000
BATCH_PATHS = 20_000
CHUNK_STEPS = 256


class PathCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    mean_exit_time: float
    dt_sim: float
    seed: int


def _extended_tables(problem, p: Policy, tau):
    """Nodal tables on all grid nodes, edge values replicated from the
    nearest interior node."""
    avg = average_coefficients(problem, p)
    fkl = avg.f_bar + tau * avg.kl

    def extend(interior):
        full = np.empty(interior.size + 2)
        full[1:-1] = interior
        full[0] = interior[0]
        full[-1] = interior[-1]
        return full

    return (extend(avg.b_bar), extend(avg.c_bar), extend(fkl),
            problem.sigma_nodes.copy())


def simulate_exit_value(problem, p: Policy, x0, tau, n_paths, dt_sim,
                        seed) -> McEstimate:
    """Mean discounted cost-to-exit from x0 under policy p at weight tau."""
    grid = problem.grid
    if not (grid.left < x0 < grid.right):
        raise ValueError(f"x0={x0} must lie strictly inside "
                         f"({grid.left}, {grid.right})")
    if dt_sim <= 0.0:
        raise ValueError("dt_sim must be positive")
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    b_tab, c_tab, fkl_tab, s_tab = _extended_tables(problem, p, tau)
    n_batches = (n_paths + BATCH_PATHS - 1) // BATCH_PATHS
    streams = np.random.SeedSequence(seed).spawn(n_batches)
    totals = np.empty(n_paths)
    exit_times = np.empty(n_paths)
    start = 0
    for batch, stream in enumerate(streams):
        m = min(BATCH_PATHS, n_paths - start)
        rng = np.random.default_rng(stream)
        x = np.full(m, float(x0))
        gamma = np.ones(m)
        cost = np.zeros(m)
        steps = np.zeros(m, dtype=np.int64)
        done = np.zeros(m, dtype=bool)
        exit_steps = np.zeros(m, dtype=np.int64)
        while True:
            # draw normals only for live paths; the compacted order is the
            # ascending path index, so the stream layout is deterministic
            active = np.flatnonzero(~done)
            if active.size == 0:
                break
            xa = x[active]
            ga = gamma[active]
            ca = cost[active]
            sa = steps[active]
            ea = exit_steps[active]
            da = np.zeros(active.size, dtype=bool)
            normals = rng.standard_normal((active.size, CHUNK_STEPS))
            simulate_chunk(xa, ga, ca, sa, da, ea, normals,
                           grid.left, grid.right, grid.spacing,
                           b_tab, c_tab, fkl_tab, s_tab, dt_sim,
                           problem.g_left, problem.g_right)
            x[active] = xa
            gamma[active] = ga
            cost[active] = ca
            steps[active] = sa
            exit_steps[active] = ea
            done[active] = da
            if sa.max() > STEP_CAP:
                raise PathCapError(
                    f"path exceeded {STEP_CAP} steps without exiting "
                    f"(batch {batch}); check the diffusion coefficient")
        totals[start:start + m] = cost
        exit_times[start:start + m] = exit_steps * dt_sim
        start += m
    mean = float(np.mean(totals))
    if n_paths > 1:
        stderr = float(np.std(totals, ddof=1) / np.sqrt(n_paths))
    else:
        stderr = 0.0
    return McEstimate(mean=mean, stderr=stderr, n_paths=n_paths,
                      mean_exit_time=float(np.mean(exit_times)),
                      dt_sim=float(dt_sim), seed=int(seed))
