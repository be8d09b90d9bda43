"""Per-agent observer recursion: matrix assembly and local framer updates.

Eliminating ``d1`` through the attacked channel and ``d2`` through the
clean channel one step ahead gives, for any gains ``(L, Gamma)``,

    x[k+1] = A_obs x[k] + L_obs eta[k+1] + Psi xi[k+1]
    d[k]   = A_d   x[k] + F_obs eta[k+1] + Phi xi[k+1]

with ``eta[k+1] = [v[k]; w[k]; v[k+1]]`` and
``xi[k+1] = [z1[k]; z2[k]; z2[k+1]]``. Both identities are exact, so bounding
the right-hand sides over the current framer and the noise box gives
framers that hold for arbitrary ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import DecomposedAgentModel, PlantModel
from .intervals import IntervalVector, bound_linear_map


@dataclass(frozen=True)
class ObserverGains:
    L: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if L.shape != Gamma.shape:
            raise ValueError(f"L {L.shape} and Gamma {Gamma.shape} must have the same shape")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "Gamma", Gamma)

    @classmethod
    def zeros(cls, n, p):
        return cls(np.zeros((n, p)), np.zeros((n, p)))

    def T(self, C2):
        """``I - Gamma C2``; always derived from ``Gamma``, never stored."""
        return np.eye(self.Gamma.shape[0]) - self.Gamma @ C2


@dataclass(frozen=True)
class AffineObserverForm:
    """Gain-free pieces of the observer matrices.

    Every gain-dependent matrix ``X`` has the form
    ``X = X0 - Gamma @ X_gamma - L @ X_l``; the LP-based synthesis works
    directly with these pieces.
    """

    A_hat: np.ndarray
    A_hat_gamma: np.ndarray
    A_hat_l: np.ndarray
    noise0: np.ndarray
    noise_gamma: np.ndarray
    noise_l: np.ndarray
    J: np.ndarray
    Q: np.ndarray
    E: np.ndarray

    def state_matrix(self, gains: ObserverGains):
        return self.A_hat - gains.Gamma @ self.A_hat_gamma - gains.L @ self.A_hat_l

    def noise_matrix(self, gains: ObserverGains):
        return self.noise0 - gains.Gamma @ self.noise_gamma - gains.L @ self.noise_l


def affine_form(model: DecomposedAgentModel, plant: PlantModel) -> AffineObserverForm:
    n = plant.n
    n_v = model.agent.n_v
    I = np.eye(n)
    C2, D2 = model.C2, model.D2
    G1M1 = model.G1 @ model.M1
    G2M2 = model.G2 @ model.M2
    Q = plant.A - G1M1 @ model.C1
    J = I - G2M2 @ C2
    A_hat = J @ Q
    # noise matrix before the output-injection terms (T = I)
    noise0 = np.hstack([-J @ G1M1 @ model.D1, J @ plant.B, -G2M2 @ D2])
    zeros_v = np.zeros((C2.shape[0], n_v))
    zeros_w = np.zeros((C2.shape[0], plant.n_w))
    noise_gamma = C2 @ noise0 + np.hstack([zeros_v, zeros_w, D2])
    noise_l = np.hstack([D2, zeros_w, zeros_v])
    E = model.M2 @ np.hstack([C2 @ G1M1 @ model.D1, -C2 @ plant.B, -D2])
    return AffineObserverForm(
        A_hat=A_hat, A_hat_gamma=C2 @ A_hat, A_hat_l=C2,
        noise0=noise0, noise_gamma=noise_gamma, noise_l=noise_l,
        J=J, Q=Q, E=E,
    )


@dataclass(frozen=True)
class ObserverMatrices:
    A_obs: np.ndarray
    L_obs: np.ndarray
    Psi: np.ndarray
    A_d: np.ndarray
    F_obs: np.ndarray
    Phi: np.ndarray
    A_hat: np.ndarray
    J: np.ndarray
    Q: np.ndarray
    E: np.ndarray


def build_observer_matrices(model: DecomposedAgentModel, plant: PlantModel,
                            gains: ObserverGains) -> ObserverMatrices:
    p = model.clean_dim
    if gains.L.shape != (plant.n, p):
        raise ValueError(f"gains must be {plant.n}x{p}, got {gains.L.shape}")
    aff = affine_form(model, plant)
    C2 = model.C2
    L, Gamma = gains.L, gains.Gamma
    T = gains.T(C2)
    G1M1 = model.G1 @ model.M1
    G2M2 = model.G2 @ model.M2
    V2M2 = model.V2 @ model.M2

    A_obs = T @ aff.A_hat - L @ C2
    L_obs = aff.noise_matrix(gains)
    Psi = np.hstack([T @ aff.J @ G1M1, L, T @ G2M2 + Gamma])

    V1M1 = model.V1 @ model.M1
    A_d = -V1M1 @ model.C1 - V2M2 @ C2 @ aff.Q
    F_obs = np.hstack([
        -V1M1 @ model.D1 + V2M2 @ C2 @ G1M1 @ model.D1,
        -V2M2 @ C2 @ plant.B,
        -V2M2 @ model.D2,
    ])
    Phi = np.hstack([V1M1 - V2M2 @ C2 @ G1M1, np.zeros((plant.n_p, p)), V2M2])
    return ObserverMatrices(A_obs=A_obs, L_obs=L_obs, Psi=Psi, A_d=A_d, F_obs=F_obs, Phi=Phi,
                            A_hat=aff.A_hat, J=aff.J, Q=aff.Q, E=aff.E)


def eta_bounds(plant: PlantModel, v_bounds: IntervalVector) -> IntervalVector:
    """Bounds on ``[v[k]; w[k]; v[k+1]]``."""
    return IntervalVector(
        np.concatenate([v_bounds.lower, plant.w_bounds.lower, v_bounds.lower]),
        np.concatenate([v_bounds.upper, plant.w_bounds.upper, v_bounds.upper]),
    )


def stack_xi(z1_k, z2_k, z2_next):
    return np.concatenate([np.asarray(z1_k, float), np.asarray(z2_k, float), np.asarray(z2_next, float)])


def _check_xi(width, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (width,):
        raise ValueError(f"xi has shape {xi.shape}, expected ({width},)")
    return xi


def local_state_update(obs: ObserverMatrices, eta: IntervalVector, prev: IntervalVector, xi) -> IntervalVector:
    """Propagate a state framer one step through the local observer."""
    xi = _check_xi(obs.Psi.shape[1], xi)
    ax = bound_linear_map(obs.A_obs, prev)
    le = bound_linear_map(obs.L_obs, eta)
    drive = obs.Psi @ xi
    return IntervalVector(ax.lower + le.lower + drive, ax.upper + le.upper + drive)


def local_input_update(obs: ObserverMatrices, eta: IntervalVector, state_framer: IntervalVector,
                       xi) -> IntervalVector:
    """Input framer for ``d[k]`` given the time-``k`` state framer.

    Needs ``z2[k+1]`` inside ``xi``, so the estimate of ``d[k]`` is only
    available one step late.
    """
    xi = _check_xi(obs.Phi.shape[1], xi)
    ax = bound_linear_map(obs.A_d, state_framer)
    fe = bound_linear_map(obs.F_obs, eta)
    drive = obs.Phi @ xi
    return IntervalVector(ax.lower + fe.lower + drive, ax.upper + fe.upper + drive)
