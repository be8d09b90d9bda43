"""SVD-based split of each agent's measurement into attacked and clean channels.

With ``H = [U1 U2] diag(S, 0) [V1 V2]^T`` the measurement ``y`` splits into

    z1 = U1^T y = C1 x + D1 v + S V1^T d     (attacked)
    z2 = U2^T y = C2 x + D2 v                (attack-free)

and the unknown input into ``d1 = V1^T d``, ``d2 = V2^T d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .intervals import IntervalVector

DEFAULT_RANK_TOL = 1e-10
LEFT_INVERSE_ATOL = 1e-9


class AssumptionViolated(ValueError):
    """The clean channel cannot recover the unseen input component (``C2 G2`` rank deficient)."""

    def __init__(self, message, agent=None):
        self.agent = agent
        prefix = f"agent {agent}: " if agent is not None else ""
        super().__init__(prefix + message)


def _as_matrix(M, rows=None, cols=None, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1 and rows is not None and cols is not None and M.size == rows * cols:
        M = M.reshape(rows, cols)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if rows is not None and M.shape[0] != rows:
        raise ValueError(f"{name} has {M.shape[0]} rows, expected {rows}")
    if cols is not None and M.shape[1] != cols:
        raise ValueError(f"{name} has {M.shape[1]} columns, expected {cols}")
    return M


@dataclass(frozen=True)
class PlantModel:
    """``x+ = A x + B w + G d`` with ``w`` in ``w_bounds`` and ``x0`` in ``x0_bounds``."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    w_bounds: IntervalVector
    x0_bounds: IntervalVector

    def __post_init__(self):
        A = _as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_matrix(self.B, rows=n, name="B")
        G = _as_matrix(self.G, rows=n, name="G")
        if self.w_bounds.dim != B.shape[1]:
            raise ValueError(f"w_bounds has dimension {self.w_bounds.dim}, B has {B.shape[1]} columns")
        if self.x0_bounds.dim != n:
            raise ValueError(f"x0_bounds has dimension {self.x0_bounds.dim}, expected {n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def n_w(self):
        return self.B.shape[1]

    @property
    def n_p(self):
        return self.G.shape[1]


@dataclass(frozen=True)
class AgentMeasurementModel:
    """``y = C x + D v + H d`` with ``v`` in ``v_bounds``."""

    C: np.ndarray
    D: np.ndarray
    H: np.ndarray
    v_bounds: IntervalVector
    name: str = ""

    def __post_init__(self):
        C = _as_matrix(self.C, name="C")
        m = C.shape[0]
        D = _as_matrix(self.D, rows=m, name="D")
        H = _as_matrix(self.H, rows=m, name="H")
        if self.v_bounds.dim != D.shape[1]:
            raise ValueError(f"v_bounds has dimension {self.v_bounds.dim}, D has {D.shape[1]} columns")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "H", H)

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def n_v(self):
        return self.D.shape[1]

    def check_against(self, plant: PlantModel):
        if self.C.shape[1] != plant.n:
            raise ValueError(f"C has {self.C.shape[1]} columns, plant has {plant.n} states")
        if self.H.shape[1] != plant.n_p:
            raise ValueError(f"H has {self.H.shape[1]} columns, plant has {plant.n_p} inputs")


@dataclass(frozen=True)
class DecomposedAgentModel:
    agent: AgentMeasurementModel
    rank: int
    U1: np.ndarray
    U2: np.ndarray
    S: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    singular_values: np.ndarray = field(repr=False)

    @property
    def m(self):
        return self.agent.m

    @property
    def clean_dim(self):
        """Length of the attack-free channel ``z2``."""
        return self.agent.m - self.rank

    @property
    def has_clean_channel(self):
        # r == m: the agent sees every measurement through the attack
        return self.clean_dim > 0


def _fix_signs(U, V=None):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    U = U.copy()
    V = None if V is None else V.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] *= -1
            if V is not None:
                V[:, j] *= -1
    return U, V


def decompose(plant: PlantModel, agent: AgentMeasurementModel, rank_tol: float = DEFAULT_RANK_TOL,
              agent_id=None) -> DecomposedAgentModel:
    """Split an agent's measurement model by the SVD of its feedthrough ``H``.

    Raises
    ------
    AssumptionViolated
        If ``C2 G2`` is not full column rank, i.e. the clean channel cannot
        reconstruct the input component that bypasses ``z1``.
    """
    agent.check_against(plant)
    H = agent.H
    m, n_p = H.shape
    U, s, Vt = np.linalg.svd(H, full_matrices=True)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    V = Vt.T

    if r == 0:
        U1 = np.zeros((m, 0))
        U2 = np.eye(m)
        V1 = np.zeros((n_p, 0))
        V2 = np.eye(n_p)
    else:
        U1, V1 = _fix_signs(U[:, :r], V[:, :r])
        U2, _ = _fix_signs(U[:, r:])
        V2, _ = _fix_signs(V[:, r:])
    S = np.diag(s[:r])

    C1 = U1.T @ agent.C
    C2 = U2.T @ agent.C
    D1 = U1.T @ agent.D
    D2 = U2.T @ agent.D
    G1 = plant.G @ V1
    G2 = plant.G @ V2
    M1 = np.diag(1.0 / s[:r])

    CG = C2 @ G2
    q = n_p - r
    if q > 0:
        if CG.shape[0] < q:
            raise AssumptionViolated(
                f"clean channel has {CG.shape[0]} rows but {q} input directions bypass the attacked channel",
                agent_id)
        sv = np.linalg.svd(CG, compute_uv=False)
        if sv[0] == 0 or sv[-1] <= rank_tol * sv[0]:
            raise AssumptionViolated(
                f"C2 G2 is not full column rank (smallest singular value {sv[-1]:.3e})",
                agent_id)
    M2 = np.linalg.pinv(CG) if CG.size else np.zeros((q, CG.shape[0]))
    if q > 0 and not np.allclose(M2 @ CG, np.eye(q), atol=LEFT_INVERSE_ATOL, rtol=0):
        raise AssumptionViolated("pseudoinverse of C2 G2 is not a left inverse to tolerance", agent_id)

    return DecomposedAgentModel(
        agent=agent, rank=r, U1=U1, U2=U2, S=S, V1=V1, V2=V2,
        C1=C1, C2=C2, D1=D1, D2=D2, G1=G1, G2=G2, M1=M1, M2=M2, singular_values=s,
    )


def transform_measurement(model: DecomposedAgentModel, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (model.m,):
        raise ValueError(f"measurement has shape {y.shape}, expected ({model.m},)")
    return model.U1.T @ y, model.U2.T @ y


def reconstruct_input(model: DecomposedAgentModel, d1, d2):
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if d1.shape != (model.V1.shape[1],) or d2.shape != (model.V2.shape[1],):
        raise ValueError(
            f"input components have shapes {d1.shape}, {d2.shape}; "
            f"expected ({model.V1.shape[1]},), ({model.V2.shape[1]},)")
    return model.V1 @ d1 + model.V2 @ d2
