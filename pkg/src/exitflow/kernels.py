"""Hot numeric kernels: tridiagonal solves and exit-time path simulation.

Both kernels exist in two interchangeable implementations: a numba
``@njit`` version (default when numba imports cleanly) and a pure-numpy
fallback.  Set ``EXITFLOW_PURE_NUMPY=1`` in the environment to force the
fallback; ``benchmarks/kernel_benchmark.py`` times the two side by side.
Given identical inputs the two backends perform the same per-path
arithmetic, so results agree to within libm rounding.
"""

import os

import numpy as np

USE_NUMBA = False
if os.environ.get("EXITFLOW_PURE_NUMPY", "0") != "1":
    try:
        from numba import njit

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def _thomas_numpy(lower, diag, upper, rhs):
    """Thomas elimination for a tridiagonal system; plain-python loop."""
    n = rhs.shape[0]
    cp = np.empty(n)
    x = np.empty(n)
    beta = diag[0]
    if beta == 0.0:
        raise ZeroDivisionError("singular tridiagonal system at row 0")
    cp[0] = upper[0] / beta
    x[0] = rhs[0] / beta
    for i in range(1, n):
        beta = diag[i] - lower[i] * cp[i - 1]
        if beta == 0.0:
            raise ZeroDivisionError(f"singular tridiagonal system at row {i}")
        cp[i] = upper[i] / beta
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


@njit(cache=True)
def _thomas_numba(lower, diag, upper, rhs):  # pragma: no cover - jitted
    n = rhs.shape[0]
    cp = np.empty(n)
    x = np.empty(n)
    beta = diag[0]
    cp[0] = upper[0] / beta
    x[0] = rhs[0] / beta
    for i in range(1, n):
        beta = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / beta
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def thomas_solve(lower, diag, upper, rhs):
    """Solve the tridiagonal system with bands (lower, diag, upper).

    ``lower[0]`` and ``upper[-1]`` are ignored.  Raises ZeroDivisionError
    on a zero pivot; callers assemble diagonally dominant systems so this
    only fires on degenerate input.
    """
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if USE_NUMBA:
        if np.any(diag == 0.0):
            # mirror the fallback's explicit error instead of dividing by zero
            raise ZeroDivisionError("singular tridiagonal system")
        return _thomas_numba(lower, diag, upper, rhs)
    return _thomas_numpy(lower, diag, upper, rhs)


def tridiag_apply(lower, diag, upper, x):
    """Matrix-vector product with the same band layout as thomas_solve."""
    y = diag * x
    y[1:] += lower[1:] * x[:-1]
    y[:-1] += upper[:-1] * x[1:]
    return y


# ---------------------------------------------------------------------------
# Euler-Maruyama exit-time simulation.
#
# The chunk kernels advance a batch of paths through `n_steps` increments
# drawn outside the kernel, so both backends consume identical normals.
# Per path and step:
#   cost  += gamma * fkl(x) * dt
#   gamma *= exp(-c(x) * dt)
#   x     += b(x) * dt + sigma(x) * sqrt(dt) * xi
# and on leaving (left, right) the discounted exit payoff is added and the
# path retires.  Coefficients come from nodal tables via linear interpolation
# (clamped at the ends); both backends use the exact same interpolation
# arithmetic.
# ---------------------------------------------------------------------------


def _sim_chunk_numpy(x, gamma, cost, steps, done, exit_steps, normals,
                     left, right, spacing, b_tab, c_tab, fkl_tab, s_tab,
                     dt, sqrt_dt, g_left, g_right):
    n_nodes = b_tab.shape[0]
    n_steps = normals.shape[1]
    for j in range(n_steps):
        active = ~done
        if not active.any():
            break
        xa = x[active]
        pos = (xa - left) / spacing
        idx = np.minimum(pos.astype(np.int64), n_nodes - 2)
        idx = np.maximum(idx, 0)
        w = pos - idx
        b = b_tab[idx] + w * (b_tab[idx + 1] - b_tab[idx])
        c = c_tab[idx] + w * (c_tab[idx + 1] - c_tab[idx])
        fkl = fkl_tab[idx] + w * (fkl_tab[idx + 1] - fkl_tab[idx])
        sig = s_tab[idx] + w * (s_tab[idx + 1] - s_tab[idx])
        ga = gamma[active]
        cost[active] += ga * fkl * dt
        ga = ga * np.exp(-c * dt)
        gamma[active] = ga
        xa = xa + b * dt + sig * sqrt_dt * normals[active, j]
        x[active] = xa
        steps[active] += 1
        out_left = active.copy()
        out_left[active] = xa <= left
        out_right = active.copy()
        out_right[active] = xa >= right
        exited = out_left | out_right
        if exited.any():
            cost[out_left] += gamma[out_left] * g_left
            cost[out_right] += gamma[out_right] * g_right
            exit_steps[exited] = steps[exited]
            done[exited] = True


@njit(cache=True)
def _sim_chunk_numba(x, gamma, cost, steps, done, exit_steps, normals,
                     left, right, spacing, b_tab, c_tab, fkl_tab, s_tab,
                     dt, sqrt_dt, g_left, g_right):  # pragma: no cover
    n_paths = x.shape[0]
    n_nodes = b_tab.shape[0]
    n_steps = normals.shape[1]
    for p in range(n_paths):
        if done[p]:
            continue
        xp = x[p]
        gp = gamma[p]
        cp = cost[p]
        sp = steps[p]
        for j in range(n_steps):
            pos = (xp - left) / spacing
            idx = int(pos)
            if idx > n_nodes - 2:
                idx = n_nodes - 2
            if idx < 0:
                idx = 0
            w = pos - idx
            b = b_tab[idx] + w * (b_tab[idx + 1] - b_tab[idx])
            c = c_tab[idx] + w * (c_tab[idx + 1] - c_tab[idx])
            fkl = fkl_tab[idx] + w * (fkl_tab[idx + 1] - fkl_tab[idx])
            sig = s_tab[idx] + w * (s_tab[idx + 1] - s_tab[idx])
            cp = cp + gp * fkl * dt
            gp = gp * np.exp(-c * dt)
            xp = xp + b * dt + sig * sqrt_dt * normals[p, j]
            sp += 1
            if xp <= left:
                cp = cp + gp * g_left
                exit_steps[p] = sp
                done[p] = True
                break
            if xp >= right:
                cp = cp + gp * g_right
                exit_steps[p] = sp
                done[p] = True
                break
        x[p] = xp
        gamma[p] = gp
        cost[p] = cp
        steps[p] = sp


def simulate_chunk(x, gamma, cost, steps, done, exit_steps, normals,
                   left, right, spacing, b_tab, c_tab, fkl_tab, s_tab,
                   dt, g_left, g_right):
    """Advance a batch of paths through one chunk of normal increments."""
    sqrt_dt = np.sqrt(dt)
    fn = _sim_chunk_numba if USE_NUMBA else _sim_chunk_numpy
    fn(x, gamma, cost, steps, done, exit_steps, normals,
       left, right, spacing, b_tab, c_tab, fkl_tab, s_tab,
       dt, sqrt_dt, g_left, g_right)
