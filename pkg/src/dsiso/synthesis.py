"""Distributed gain synthesis by linear programming.

Two LPs per agent, both linear in the gains ``(Gamma, L)`` because the
closed-loop matrix ``P = (I - Gamma C2) A_hat - L C2`` and the noise matrix
are affine in them (see :class:`dsiso.agent.AffineObserverForm`):

* the feasibility LP minimises the entrywise 1-norm of ``P``; rows with
  1-norm below one are the state dimensions the agent can stabilise;
* the design LP minimises the worst-case one-step noise gain
  ``max_s sum_t |L_obs[s, t]| * width(eta)[t]`` while keeping those rows
  contractive.

Vectorisation is row-major, so ``vec(Gamma @ X) = kron(I, X.T) @ vec(Gamma)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .agent import AffineObserverForm, ObserverGains
from .messaging import CommGraph, MessageBus

EPSILON = 1e-6
# the design LP aims this far inside 1 - epsilon, widening tenfold until the
# replayed gains are strictly contractive despite solver tolerance
DESIGN_MARGINS = (1e-9, 1e-8, 1e-7, 1e-6)
_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


class SynthesisError(RuntimeError):
    pass


@dataclass
class LinearProgram:
    """``min c x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub``."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    names: list = field(default_factory=list)

    @property
    def n_vars(self):
        return self.c.shape[0]

    def solve(self):
        """Returns ``(status, x, objective)``; status is optimal/infeasible/unbounded."""
        bounds = list(zip(_none_if_inf(self.lb), _none_if_inf(self.ub)))
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs-ds", options=_HIGHS_OPTIONS)
        if res.status == 0:
            return "optimal", res.x, float(res.fun)
        if res.status == 2:
            return "infeasible", None, None
        if res.status == 3:
            return "unbounded", None, None
        raise SynthesisError(f"LP solver failed: {res.message}")

    def to_text(self) -> str:
        """Plain-text dump for cross-checking with external solvers."""
        lines = [f"# LP: minimize c.x s.t. A_ub x <= b_ub, lb <= x <= ub", f"vars {self.n_vars}"]
        if self.names:
            lines.append("names " + " ".join(self.names))
        lines.append("c " + " ".join(repr(float(v)) for v in self.c))
        lines.append("lb " + " ".join(repr(float(v)) for v in self.lb))
        lines.append("ub " + " ".join(repr(float(v)) for v in self.ub))
        lines.append(f"ub_rows {self.A_ub.shape[0]}")
        for row, b in zip(self.A_ub, self.b_ub):
            lines.append(" ".join(repr(float(v)) for v in row) + " <= " + repr(float(b)))
        if self.A_eq is not None:
            lines.append(f"eq_rows {self.A_eq.shape[0]}")
            for row, b in zip(self.A_eq, self.b_eq):
                lines.append(" ".join(repr(float(v)) for v in row) + " = " + repr(float(b)))
        return "\n".join(lines) + "\n"


def _none_if_inf(v):
    return [None if not np.isfinite(x) else float(x) for x in v]


def _gain_blocks(X0, Xg, Xl):
    """Coefficient blocks of ``vec(X0 - Gamma Xg - L Xl)`` w.r.t. ``[vec Gamma, vec L]``."""
    n = X0.shape[0]
    I = np.eye(n)
    return np.hstack([-np.kron(I, Xg.T), -np.kron(I, Xl.T)]), X0.reshape(-1)


def _unpack_gains(x, n, p):
    Gamma = x[: n * p].reshape(n, p)
    L = x[n * p: 2 * n * p].reshape(n, p)
    return ObserverGains(L=L, Gamma=Gamma)


def closed_loop(form: AffineObserverForm, gains: ObserverGains):
    """``(I - Gamma C2) A_hat - L C2``."""
    return form.state_matrix(gains)


def feasibility_lp(form: AffineObserverForm, return_lp=False):
    """Minimise the total absolute mass of the closed-loop matrix.

    Returns ``(Z_star, gains)`` where ``Z_star = |P|`` for the optimal gains.
    """
    n = form.A_hat.shape[0]
    p = form.A_hat_l.shape[0]
    ng = 2 * n * p
    nz = n * n
    K, b0 = _gain_blocks(form.A_hat, form.A_hat_gamma, form.A_hat_l)
    Iz = np.eye(nz)
    # P - Z <= 0  and  -P - Z <= 0 with P = b0 + K g
    A_ub = np.vstack([np.hstack([K, -Iz]), np.hstack([-K, -Iz])])
    b_ub = np.concatenate([-b0, b0])
    c = np.concatenate([np.zeros(ng), np.ones(nz)])
    lb = np.concatenate([np.full(ng, -np.inf), np.zeros(nz)])
    ub = np.full(ng + nz, np.inf)
    lp = LinearProgram(c, A_ub, b_ub, lb, ub,
                       names=_names("Gamma", n, p) + _names("L", n, p) + _names("Z", n, n))
    status, x, _ = lp.solve()
    if status != "optimal":
        raise SynthesisError(f"feasibility LP returned {status}")
    gains = _unpack_gains(x, n, p)
    Z_star = np.abs(closed_loop(form, gains))
    if return_lp:
        return Z_star, gains, lp
    return Z_star, gains


def _names(prefix, rows, cols):
    return [f"{prefix}[{i},{j}]" for i in range(rows) for j in range(cols)]


def stabilizable_dims(Z_star, epsilon=EPSILON):
    return tuple(int(s) for s in np.flatnonzero(Z_star.sum(axis=1) < 1.0 - epsilon))


@dataclass
class DesignResult:
    gains: ObserverGains
    objective: float
    lp: LinearProgram = field(repr=False)


def design_lp(form: AffineObserverForm, J_set, eta_width, epsilon=EPSILON, refine=False) -> DesignResult:
    """Noise-gain minimising gains that keep rows in ``J_set`` contractive.

    With ``refine`` the optimal set is searched a second time for the gains
    with the smallest total noise gain over all rows, so rows that do not
    attain the max are not left at an arbitrary vertex.
    """
    n = form.A_hat.shape[0]
    p = form.A_hat_l.shape[0]
    eta_width = np.asarray(eta_width, dtype=float)
    q = form.noise0.shape[1]
    if eta_width.shape != (q,):
        raise ValueError(f"eta_width has shape {eta_width.shape}, expected ({q},)")
    ng, nz, nt = 2 * n * p, n * n, n * q
    nvar = ng + nz + nt + 1
    oz, ot, ol = ng, ng + nz, ng + nz + nt

    KP, bP = _gain_blocks(form.A_hat, form.A_hat_gamma, form.A_hat_l)
    KN, bN = _gain_blocks(form.noise0, form.noise_gamma, form.noise_l)
    rows, rhs = [], []

    def block(gain_part=None, z=None, theta=None, lam=None, count=None):
        m = count
        M = np.zeros((m, nvar))
        if gain_part is not None:
            M[:, :ng] = gain_part
        if z is not None:
            M[:, oz:ot] = z
        if theta is not None:
            M[:, ot:ol] = theta
        if lam is not None:
            M[:, ol] = lam
        return M

    # theta * width <= lambda
    rows.append(block(theta=np.kron(np.eye(n), eta_width[None, :]), lam=-1.0, count=n))
    rhs.append(np.zeros(n))
    # -theta <= L_obs <= theta
    It = np.eye(nt)
    rows.append(block(gain_part=KN, theta=-It, count=nt))
    rhs.append(-bN)
    rows.append(block(gain_part=-KN, theta=-It, count=nt))
    rhs.append(bN)
    # -Z <= P <= Z
    Iz = np.eye(nz)
    rows.append(block(gain_part=KP, z=-Iz, count=nz))
    rhs.append(-bP)
    rows.append(block(gain_part=-KP, z=-Iz, count=nz))
    rhs.append(bP)
    # row sums of Z below 1 - epsilon on stabilised dimensions
    J_set = sorted(int(s) for s in J_set)
    if J_set:
        R = np.zeros((len(J_set), nz))
        for k, s in enumerate(J_set):
            R[k, s * n:(s + 1) * n] = 1.0
        rows.append(block(z=R, count=len(J_set)))
        rhs.append(np.full(len(J_set), 1.0 - epsilon))

    A_ub = np.vstack(rows)
    b_ub = np.concatenate(rhs)
    c = np.zeros(nvar)
    c[ol] = 1.0
    lb = np.concatenate([np.full(ng, -np.inf), np.zeros(nz + nt + 1)])
    ub = np.full(nvar, np.inf)
    names = (_names("Gamma", n, p) + _names("L", n, p) + _names("Z", n, n)
             + _names("theta", n, q) + ["lambda"])
    for margin in DESIGN_MARGINS:
        if J_set:
            b_ub[-len(J_set):] = 1.0 - epsilon - margin
        lp = LinearProgram(c, A_ub, b_ub.copy(), lb, ub, names=names)
        status, x, obj = lp.solve()
        if status != "optimal":
            raise SynthesisError(f"design LP returned {status} (J={J_set})")
        if refine:
            c2 = np.zeros(nvar)
            c2[ot:ol] = np.tile(eta_width, n)
            cap = np.zeros((1, nvar))
            cap[0, ol] = 1.0
            lp2 = LinearProgram(c2, np.vstack([A_ub, cap]),
                                np.concatenate([b_ub, [obj + 1e-9 * (1.0 + abs(obj))]]), lb, ub, names=names)
            status2, x2, _ = lp2.solve()
            if status2 == "optimal":
                x = x2
        gains = _unpack_gains(x, n, p)
        norms = np.abs(form.state_matrix(gains)).sum(axis=1)[J_set]
        if (norms < 1.0 - epsilon).all():
            break
    else:
        raise SynthesisError(f"design gains replay to row norm {norms.max():.12g} on J={J_set}")
    objective = float(np.max(np.abs(form.noise_matrix(gains)) @ eta_width)) if n else 0.0
    return DesignResult(gains=gains, objective=objective, lp=lp)


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


@dataclass
class StabilizabilityReport:
    agent: int
    J_set: tuple
    Z_star: np.ndarray
    feasible_gains: ObserverGains
    shared_matrix: np.ndarray
    cpdn_satisfied: bool
    witnesses: dict
    failing_dims: tuple

    def summary(self):
        return {
            "agent": self.agent,
            "J_set": list(self.J_set),
            "row_sums": [float(v) for v in self.Z_star.sum(axis=1)],
            "cpdn_satisfied": self.cpdn_satisfied,
            "witnesses": {str(s): int(j) for s, j in sorted(self.witnesses.items())},
            "failing_dims": list(self.failing_dims),
        }


def run_initialization(forms, graph: CommGraph, bus: MessageBus | None = None,
                       epsilon=EPSILON) -> list:
    """Per-agent stabilisable dimensions and the neighbourhood detectability check.

    Each agent solves its feasibility LP, broadcasts its closed-loop matrix,
    and declares the condition satisfied when every state dimension has a
    neighbour whose matrix has that row's 1-norm below ``1 - epsilon``.
    """
    if len(forms) != graph.N:
        raise ValueError(f"{len(forms)} agents but graph has {graph.N} nodes")
    bus = bus or MessageBus(graph)
    local = []
    for form in forms:
        Z_star, gains = feasibility_lp(form)
        local.append((Z_star, gains, closed_loop(form, gains)))
    inbox = bus.exchange(0, "init", [P for _, _, P in local])
    reports = []
    for i, (Z_star, gains, P) in enumerate(local):
        n = P.shape[0]
        witnesses = {}
        for j, Pj in inbox[i]:
            norms = np.abs(Pj).sum(axis=1)
            for s in range(n):
                if s not in witnesses and norms[s] < 1.0 - epsilon:
                    witnesses[s] = j
        failing = tuple(s for s in range(n) if s not in witnesses)
        reports.append(StabilizabilityReport(
            agent=i, J_set=stabilizable_dims(Z_star, epsilon), Z_star=Z_star,
            feasible_gains=gains, shared_matrix=P, cpdn_satisfied=not failing,
            witnesses=witnesses, failing_dims=failing,
        ))
    return reports
