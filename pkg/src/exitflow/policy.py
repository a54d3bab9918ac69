"""Gibbs policies: softmax image of a feature matrix, and KL divergences.

A feature field is a plain float64 matrix with one row per interior grid
node and one column per action node.  Policies store both probability
weights (mu quadrature weights folded in, rows sum to 1) and log-densities
relative to the reference measure; KL values are always formed from the
log-densities to avoid cancellation at small weights.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Policy:
    weights: np.ndarray      # (n_interior, n_actions), rows sum to 1
    log_density: np.ndarray  # ln d(pi)/d(mu) at each (node, action)

    @property
    def shape(self):
        return self.weights.shape


def gibbs_policy(z, actions):
    """Map a feature matrix to the Gibbs policy with density e^z / norm.

    Stabilized with a per-row max shift, so feature scales of order
    1/tau for small tau stay finite.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != actions.n_actions:
        raise ValueError(f"feature matrix shape {z.shape} does not match "
                         f"{actions.n_actions} action nodes")
    if not np.all(np.isfinite(z)):
        raise ValueError("feature matrix has non-finite entries")
    m = z.max(axis=1, keepdims=True)
    expz = np.exp(z - m)
    norm = expz @ actions.mu_weights
    weights = actions.mu_weights[None, :] * expz / norm[:, None]
    log_density = (z - m) - np.log(norm)[:, None]
    return Policy(weights=weights, log_density=log_density)


def uniform_policy(n_interior, actions):
    """The reference measure itself (zero feature)."""
    return gibbs_policy(np.zeros((n_interior, actions.n_actions)), actions)


def kl_to_reference(p: Policy, actions) -> np.ndarray:
    """KL(pi | mu) per interior node; nonnegative up to roundoff."""
    return np.einsum("ik,ik->i", p.weights, p.log_density)


def kl_between(p: Policy, q: Policy, actions) -> np.ndarray:
    """KL(p | q) per interior node.

    Raises if q is degenerate (weight below 1e-300 where p has mass),
    which would make the divergence infinite.
    """
    if p.weights.shape != q.weights.shape:
        raise ValueError("policy shapes differ")
    support = p.weights > 0.0
    if np.any(q.weights[support] < 1e-300):
        raise ValueError("KL(p|q) is infinite: q vanishes on the support of p")
    return np.einsum("ik,ik->i", p.weights, p.log_density - q.log_density)
