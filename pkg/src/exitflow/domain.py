"""Grids, action spaces with reference measures, and control problems.

A control problem bundles the coefficient maps (drift b, discount c,
running cost f, diffusion sigma, exit cost g) together with their values
tabulated once on the grid x action nodes; all downstream solvers read
the tables.  The linear-quadratic family (b and c affine in the action,
f quadratic) is first-class because it admits closed-form action minima.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DISCRETE = "discrete"
INTERVAL = "interval"


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [left, right] with n_interior interior nodes."""
    left: float
    right: float
    n_interior: int
    spacing: float
    nodes: np.ndarray  # n_interior + 2 nodes, endpoints included

    @property
    def interior(self):
        return self.nodes[1:-1]


@dataclass(frozen=True)
class ActionSpace:
    """Finite action nodes carrying reference-measure quadrature weights.

    ``kind`` is "discrete" (uniform weights over the listed actions) or
    "interval" (Gauss-Legendre nodes on [alpha, beta], weights normalized
    against the uniform density so they sum to one).
    """
    kind: str
    actions: np.ndarray
    mu_weights: np.ndarray
    alpha: float = math.nan
    beta: float = math.nan

    @property
    def n_actions(self):
        return self.actions.shape[0]


@dataclass(frozen=True)
class LQCoefficients:
    """Scalar maps of x for b = b_bar + b_hat*a, c = c_bar + c_hat*a,
    f = f_bar + f_tilde*a + f_hat*a**2."""
    b_bar: Callable[[float], float]
    b_hat: Callable[[float], float]
    c_bar: Callable[[float], float]
    c_hat: Callable[[float], float]
    f_bar: Callable[[float], float]
    f_tilde: Callable[[float], float]
    f_hat: Callable[[float], float]


@dataclass(frozen=True)
class ControlProblem:
    """Coefficients of an exit-time control problem on a 1D grid.

    The callables are kept for off-grid evaluation (Hamiltonian probes,
    Monte Carlo boundary data); the *_tab arrays are the coefficients on
    interior nodes x action nodes and are what the PDE solvers consume.
    """
    grid: Grid
    actions: ActionSpace
    b: Callable[[float, float], float]
    c: Callable[[float, float], float]
    f: Callable[[float, float], float]
    sigma: Callable[[float], float]
    g: Callable[[float], float]
    b_tab: np.ndarray = field(repr=False)
    c_tab: np.ndarray = field(repr=False)
    f_tab: np.ndarray = field(repr=False)
    sigma_interior: np.ndarray = field(repr=False)
    sigma_nodes: np.ndarray = field(repr=False)
    g_left: float = 0.0
    g_right: float = 0.0
    lq: Optional[LQCoefficients] = None

    @property
    def n_interior(self):
        return self.grid.n_interior

    @property
    def f_sup(self):
        return float(np.max(np.abs(self.f_tab)))


def build_grid(left, right, n_interior):
    """Uniform grid with spacing (right-left)/(n_interior+1)."""
    left = float(left)
    right = float(right)
    if not (math.isfinite(left) and math.isfinite(right)):
        raise ValueError("grid endpoints must be finite")
    if left >= right:
        raise ValueError(f"grid needs left < right, got [{left}, {right}]")
    n_interior = int(n_interior)
    if n_interior < 1:
        raise ValueError("n_interior must be >= 1")
    nodes = np.linspace(left, right, n_interior + 2)
    spacing = (right - left) / (n_interior + 1)
    return Grid(left=left, right=right, n_interior=n_interior,
                spacing=spacing, nodes=nodes)


def make_action_space(values=None, alpha=None, beta=None, n_quad=None):
    """Build a discrete or interval action space.

    Pass ``values`` for a finite action set (uniform reference weights),
    or ``alpha, beta, n_quad`` for a Gauss-Legendre discretization of the
    uniform measure on [alpha, beta].
    """
    if values is not None:
        acts = np.asarray(values, dtype=np.float64)
        if acts.size == 0:
            raise ValueError("discrete action list must be nonempty")
        if not np.all(np.isfinite(acts)):
            raise ValueError("actions must be finite")
        w = np.full(acts.size, 1.0 / acts.size)
        return ActionSpace(kind=DISCRETE, actions=acts, mu_weights=w)
    alpha = float(alpha)
    beta = float(beta)
    if alpha >= beta:
        raise ValueError(f"interval needs alpha < beta, got [{alpha}, {beta}]")
    n_quad = int(n_quad)
    if n_quad < 2:
        raise ValueError("n_quad must be >= 2")
    x, w = np.polynomial.legendre.leggauss(n_quad)
    half = 0.5 * (beta - alpha)
    nodes = alpha + half * (x + 1.0)
    # weights integrate the uniform density 1/(beta-alpha); they sum to 1.
    weights = w * half / (beta - alpha)
    return ActionSpace(kind=INTERVAL, actions=nodes, mu_weights=weights,
                       alpha=alpha, beta=beta)


def _tabulate(fn, xs, acts):
    out = np.empty((xs.size, acts.size))
    for i, x in enumerate(xs):
        for k, a in enumerate(acts):
            out[i, k] = fn(x, a)
    return out


def make_problem(grid, actions, b, c, f, sigma, g, lq=None):
    """Tabulate coefficients and validate nondegeneracy/nonnegativity."""
    xs = grid.interior
    acts = actions.actions
    b_tab = _tabulate(b, xs, acts)
    c_tab = _tabulate(c, xs, acts)
    f_tab = _tabulate(f, xs, acts)
    sig_int = np.array([sigma(x) for x in xs], dtype=np.float64)
    sig_all = np.array([sigma(x) for x in grid.nodes], dtype=np.float64)
    for name, tab in (("b", b_tab), ("c", c_tab), ("f", f_tab)):
        if not np.all(np.isfinite(tab)):
            raise ValueError(f"coefficient {name} is non-finite on grid x actions")
    if not np.all(np.isfinite(sig_all)):
        raise ValueError("sigma is non-finite on the grid")
    if np.min(sig_all) <= 0.0:
        raise ValueError("sigma must be strictly positive (nondegenerate noise)")
    if np.min(c_tab) < -1e-12:
        raise ValueError("discount c must be nonnegative on grid x actions")
    g_left = float(g(grid.left))
    g_right = float(g(grid.right))
    if not (math.isfinite(g_left) and math.isfinite(g_right)):
        raise ValueError("exit cost g non-finite at the boundary")
    return ControlProblem(grid=grid, actions=actions, b=b, c=c, f=f,
                          sigma=sigma, g=g, b_tab=b_tab, c_tab=c_tab,
                          f_tab=f_tab, sigma_interior=sig_int,
                          sigma_nodes=sig_all, g_left=g_left,
                          g_right=g_right, lq=lq)


def make_lq_problem(lq: LQCoefficients, grid, actions, sigma, g):
    """Assemble a problem with b, c affine and f quadratic in the action."""
    lo = float(np.min(actions.actions))
    hi = float(np.max(actions.actions))
    for x in grid.interior:
        if lq.f_hat(x) <= 0.0:
            raise ValueError(f"f_hat must be positive, got {lq.f_hat(x)} at x={x}")
        for a in (lo, hi):
            if lq.c_bar(x) + lq.c_hat(x) * a < 0.0:
                raise ValueError(f"discount c negative at x={x}, a={a}")

    def b(x, a):
        return lq.b_bar(x) + lq.b_hat(x) * a

    def c(x, a):
        return lq.c_bar(x) + lq.c_hat(x) * a

    def f(x, a):
        return lq.f_bar(x) + lq.f_tilde(x) * a + lq.f_hat(x) * a * a

    return make_problem(grid, actions, b, c, f, sigma, g, lq=lq)


def lq_benchmark(kind=DISCRETE, n_interior=29, alpha=-4.0, beta=4.0,
                 n_quad=128, n_actions=5):
    """The workhorse test problem: b = a, c = 0.1, f = 1 + a^2 on (0, 1)
    with sigma = sqrt(2) and zero exit cost.

    ``kind="discrete"`` places ``n_actions`` uniform actions on [-1, 1];
    ``kind="interval"`` uses a Gauss-Legendre rule on [alpha, beta].
    """
    grid = build_grid(0.0, 1.0, n_interior)
    if kind == DISCRETE:
        actions = make_action_space(values=np.linspace(-1.0, 1.0, n_actions))
    elif kind == INTERVAL:
        actions = make_action_space(alpha=alpha, beta=beta, n_quad=n_quad)
    else:
        raise ValueError(f"unknown action kind {kind!r}")
    lq = LQCoefficients(
        b_bar=lambda x: 0.0, b_hat=lambda x: 1.0,
        c_bar=lambda x: 0.1, c_hat=lambda x: 0.0,
        f_bar=lambda x: 1.0, f_tilde=lambda x: 0.0,
        f_hat=lambda x: 1.0,
    )
    return make_lq_problem(lq, grid, actions,
                           sigma=lambda x: math.sqrt(2.0),
                           g=lambda x: 0.0)


def manufactured_problem(n_interior=49, forcing="quadratic"):
    """Problems with known solutions: f = 2 gives v = x(1-x); the sine
    forcing pi^2*sin(pi*x) gives v = sin(pi*x).  Single zero action."""
    grid = build_grid(0.0, 1.0, n_interior)
    actions = make_action_space(values=[0.0])
    if forcing == "quadratic":
        f = lambda x, a: 2.0
    elif forcing == "sine":
        f = lambda x, a: math.pi ** 2 * math.sin(math.pi * x)
    else:
        raise ValueError(f"unknown forcing {forcing!r}")
    return make_problem(grid, actions,
                        b=lambda x, a: 0.0, c=lambda x, a: 0.0, f=f,
                        sigma=lambda x: math.sqrt(2.0), g=lambda x: 0.0)
