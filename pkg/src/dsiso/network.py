"""Synchronous network runtime, switching bookkeeping, and error-bound evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .agent import ObserverGains, ObserverMatrices, build_observer_matrices, eta_bounds
from .decomposition import DecomposedAgentModel, PlantModel
from .intervals import IntervalVector, resolve_crossing, split
from .messaging import CommGraph, MessageBus
from .synthesis import StabilizabilityReport, spectral_radius

log = logging.getLogger(__name__)

LOWER, UPPER = 0, 1
UNIT_ROUNDOFF = np.finfo(float).eps / 2


def dot_rounding_bound(terms: int) -> float:
    """A-priori relative error of a floating-point sum of ``terms`` products: ``m u / (1 - m u)``."""
    mu = terms * UNIT_ROUNDOFF
    return mu / (1.0 - mu)


class NotCertified(ValueError):
    """The supplied contraction factor is not below one, so no steady-state bound exists."""


class AgentObserver:
    """One agent's observer: matrices, noise box, and the precomputed split terms."""

    def __init__(self, model: DecomposedAgentModel, plant: PlantModel, gains: ObserverGains):
        self.model = model
        self.gains = gains
        self.matrices = build_observer_matrices(model, plant, gains)
        self.eta = eta_bounds(plant, model.agent.v_bounds)
        ob = self.matrices
        self.A_split = split(ob.A_obs)
        self.Ad_split = split(ob.A_d)
        Ls, Fs = split(ob.L_obs), split(ob.F_obs)
        lo, hi = self.eta.lower, self.eta.upper
        self.cx = (Ls.plus @ lo - Ls.minus @ hi, Ls.plus @ hi - Ls.minus @ lo)
        self.cd = (Fs.plus @ lo - Fs.minus @ hi, Fs.plus @ hi - Fs.minus @ lo)

    @property
    def eta_width(self):
        return self.eta.width

    @property
    def xi_dim(self):
        return self.matrices.Psi.shape[1]

    def xi(self, z1_k, z2_k, z2_next):
        return np.concatenate([z1_k, z2_k, z2_next])


@dataclass
class SwitchRecord:
    """Which neighbour supplied each bound after one exchange; ``(N, n)`` index arrays."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def identity(cls, N, n):
        idx = np.repeat(np.arange(N)[:, None], n, axis=1)
        return cls(idx.copy(), idx.copy())

    def selection_matrix(self) -> np.ndarray:
        """Row-one-hot matrix acting on the collective ``[e_lo^1; e_hi^1; ...]`` stack."""
        N, n = self.lower.shape
        B = np.zeros((2 * N * n, 2 * N * n))
        rows, cols = self._index_maps()
        B[rows, cols] = 1.0
        return B

    def _index_maps(self):
        N, n = self.lower.shape
        i = np.repeat(np.arange(N), n)
        s = np.tile(np.arange(n), N)
        rows = np.concatenate([(i * 2 + LOWER) * n + s, (i * 2 + UPPER) * n + s])
        cols = np.concatenate([(self.lower.reshape(-1) * 2 + LOWER) * n + s,
                               (self.upper.reshape(-1) * 2 + UPPER) * n + s])
        return rows, cols

    def gather(self, e):
        """``B @ e`` without forming ``B``."""
        rows, cols = self._index_maps()
        out = np.empty_like(e)
        out[rows] = e[cols]
        return out

    def compose(self, earlier: SwitchRecord) -> SwitchRecord:
        """Selection of a second exchange applied on top of ``earlier``."""
        n = self.lower.shape[1]
        s = np.arange(n)[None, :]
        return SwitchRecord(earlier.lower[self.lower, s], earlier.upper[self.upper, s])

    def in_neighborhoods(self, graph: CommGraph) -> bool:
        for i, nbrs in enumerate(graph.neighbors):
            if not (np.isin(self.lower[i], nbrs).all() and np.isin(self.upper[i], nbrs).all()):
                return False
        return True


def network_update(framers, graph: CommGraph, backend=None, bus: MessageBus | None = None,
                   step: int = 0, phase: str = "state"):
    """Intersect each agent's framer with its neighbours' (one exchange).

    Returns ``(framers, SwitchRecord)``. Ties go to the agent itself, then
    to the smallest index. Crossings beyond rounding noise raise
    :class:`~dsiso.intervals.EmptyIntersection`.
    """
    lo = np.stack([f.lower for f in framers])
    hi = np.stack([f.upper for f in framers])
    lo2, hi2, rec = _exchange(lo, hi, graph, kernels.get_backend(backend), bus, step, phase)
    return [IntervalVector(a, b) for a, b in zip(lo2, hi2)], rec


def _exchange(lo, hi, graph, kern, bus, step, phase, ptr_src=None, mag=None):
    """One intersection round. ``mag`` bounds the size of the terms behind each bound.

    The magnitude travels with the framer so that a receiver can tell
    rounding-level crossings from real ones.
    """
    if mag is None:
        mag = np.maximum(np.abs(lo), np.abs(hi))
    if bus is None:
        ptr, src = ptr_src if ptr_src is not None else graph.csr()
        cand_lo, cand_hi, cand_mag = lo[src], hi[src], mag[src]
    else:
        inbox = bus.exchange(step, phase, [(lo[j], hi[j], mag[j]) for j in range(graph.N)])
        src_list, ptr = [], [0]
        cand = []
        for received in inbox:
            for j, payload in received:
                src_list.append(j)
                cand.append(payload)
            ptr.append(len(src_list))
        ptr = np.asarray(ptr, dtype=np.int64)
        src = np.asarray(src_list, dtype=np.int64)
        cand_lo, cand_hi, cand_mag = (np.array([c[t] for c in cand], dtype=float) for t in range(3))
    c = np.ascontiguousarray
    out_lo, out_hi, sel_lo, sel_hi = kern.neighborhood_intersect(ptr, src, c(cand_lo), c(cand_hi))
    scale, _, _, _ = kern.neighborhood_intersect(ptr, src, c(cand_mag), c(cand_mag))
    out_lo, out_hi = resolve_crossing(out_lo, out_hi, scale, own=(lo, hi))
    return out_lo, out_hi, SwitchRecord(sel_lo, sel_hi)


@dataclass
class RoundState:
    k: int
    x_lo: np.ndarray
    x_hi: np.ndarray


@dataclass
class StepOutput:
    """Everything produced while advancing from ``k`` to ``k+1``.

    State arrays refer to time ``k+1``; input arrays to time ``k``.
    """

    x_lo_local: np.ndarray
    x_hi_local: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    x_switch: SwitchRecord
    d_lo_local: np.ndarray
    d_hi_local: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    d_switch: SwitchRecord
    x_pad: np.ndarray = None
    d_pad: np.ndarray = None


def _pad(mats, width):
    out = np.zeros((len(mats), mats[0].shape[0], width))
    for a, M in enumerate(mats):
        out[a, :, :M.shape[1]] = M
    return out


class DistributedObserver:
    """All agents of the network advancing in lockstep.

    Each :meth:`step` runs the four phases: local state update, state
    exchange, local input update (for the previous time), input exchange.
    Local bounds are widened by ``rounding_guard`` times the magnitude of
    the terms they were computed from, so floating-point rounding cannot
    push the truth outside. The default (``None``) is the a-priori bound
    for a sum of as many terms as a row has, plus a few for the additions;
    set it to 0 for plain evaluation.
    """

    def __init__(self, agents, graph: CommGraph, backend=None, bus: MessageBus | None = None,
                 exchange_iterations: int = 1, rounding_guard: float | None = None):
        if len(agents) != graph.N:
            raise ValueError(f"{len(agents)} agents for a {graph.N}-node graph")
        if exchange_iterations < 1:
            raise ValueError("exchange_iterations must be >= 1")
        self.agents = list(agents)
        self.graph = graph
        self.kern = kernels.get_backend(backend)
        self.bus = bus
        self.exchange_iterations = exchange_iterations
        self._csr = graph.csr()
        self.n = self.agents[0].matrices.A_obs.shape[0]
        self.n_p = self.agents[0].matrices.A_d.shape[0]
        self.xi_width = max(a.xi_dim for a in self.agents)
        if rounding_guard is None:
            rounding_guard = dot_rounding_bound(max(self.n, self.n_p) + self.xi_width + 4)
        self.rounding_guard = float(rounding_guard)
        c = np.ascontiguousarray
        self._Ap = c(np.stack([a.A_split.plus for a in self.agents]))
        self._Am = c(np.stack([a.A_split.minus for a in self.agents]))
        self._Psi = c(_pad([a.matrices.Psi for a in self.agents], self.xi_width))
        self._cx_lo = c(np.stack([a.cx[0] for a in self.agents]))
        self._cx_hi = c(np.stack([a.cx[1] for a in self.agents]))
        self._Adp = c(np.stack([a.Ad_split.plus for a in self.agents]))
        self._Adm = c(np.stack([a.Ad_split.minus for a in self.agents]))
        self._Phi = c(_pad([a.matrices.Phi for a in self.agents], self.xi_width))
        self._cd_lo = c(np.stack([a.cd[0] for a in self.agents]))
        self._cd_hi = c(np.stack([a.cd[1] for a in self.agents]))
        # absolute-value copies used to size the rounding error of each bound
        self._Aabs = (c(self._Ap + self._Am), np.zeros_like(self._Ap))
        self._Adabs = (c(self._Adp + self._Adm), np.zeros_like(self._Adp))
        self._Psi_abs = c(np.abs(self._Psi))
        self._Phi_abs = c(np.abs(self._Phi))
        self._cx_abs = c(np.maximum(np.abs(self._cx_lo), np.abs(self._cx_hi)))
        self._cd_abs = c(np.maximum(np.abs(self._cd_lo), np.abs(self._cd_hi)))

    @property
    def N(self):
        return self.graph.N

    def initial_state(self, x0_bounds: IntervalVector) -> RoundState:
        lo = np.tile(x0_bounds.lower, (self.N, 1))
        hi = np.tile(x0_bounds.upper, (self.N, 1))
        return RoundState(0, lo, hi)

    def stack_xi(self, xis):
        out = np.zeros((self.N, self.xi_width))
        for a, xi in enumerate(xis):
            out[a, :len(xi)] = xi
        return out

    def exchange(self, lo, hi, step, phase, mag=None):
        rec = None
        for it in range(self.exchange_iterations):
            lo, hi, r = _exchange(lo, hi, self.graph, self.kern, self.bus, step,
                                  phase if it == 0 else f"{phase}.{it}", self._csr, mag)
            rec = r if rec is None else r.compose(rec)
        return lo, hi, rec

    def _widen(self, lo, hi, mag):
        pad = self.rounding_guard * mag
        if self.rounding_guard == 0.0:
            return lo, hi, pad
        return lo - pad, hi + pad, pad

    def _magnitude(self, M_abs, W_abs, c_abs, lo, hi, xi):
        m = np.maximum(np.abs(lo), np.abs(hi))
        mag, _ = self.kern.affine_framer(M_abs[0], M_abs[1], W_abs, m, m, c_abs, c_abs, np.abs(xi))
        return mag

    def step(self, state: RoundState, xi: np.ndarray):
        """Advance one round. ``xi`` is the padded ``(N, width)`` stack of ``[z1_k; z2_k; z2_{k+1}]``."""
        xi = np.ascontiguousarray(xi, dtype=float)
        k = state.k
        x_lo0, x_hi0 = self.kern.affine_framer(self._Ap, self._Am, self._Psi, state.x_lo, state.x_hi,
                                               self._cx_lo, self._cx_hi, xi)
        x_mag = self._magnitude(self._Aabs, self._Psi_abs, self._cx_abs, state.x_lo, state.x_hi, xi)
        x_lo0, x_hi0, x_pad = self._widen(x_lo0, x_hi0, x_mag)
        x_lo, x_hi, x_sw = self.exchange(x_lo0, x_hi0, k + 1, "state", x_mag)
        d_lo0, d_hi0 = self.kern.affine_framer(self._Adp, self._Adm, self._Phi, state.x_lo, state.x_hi,
                                               self._cd_lo, self._cd_hi, xi)
        d_mag = self._magnitude(self._Adabs, self._Phi_abs, self._cd_abs, state.x_lo, state.x_hi, xi)
        d_lo0, d_hi0, d_pad = self._widen(d_lo0, d_hi0, d_mag)
        d_lo, d_hi, d_sw = self.exchange(d_lo0, d_hi0, k, "input", d_mag)
        out = StepOutput(x_lo0, x_hi0, x_lo, x_hi, x_sw, d_lo0, d_hi0, d_lo, d_hi, d_sw, x_pad, d_pad)
        return RoundState(k + 1, x_lo, x_hi), out


@dataclass
class RunResult:
    """Framer histories of one run.

    State arrays have ``K+1`` entries (times ``0..K``); input arrays ``K``
    entries (times ``0..K-1``). ``x_switch[k]`` produced the time-``k``
    state framers (``x_switch[0]`` is the identity).
    """

    x_lo: np.ndarray
    x_hi: np.ndarray
    x_lo_local: np.ndarray
    x_hi_local: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    d_lo_local: np.ndarray
    d_hi_local: np.ndarray
    x_switch: list = field(repr=False)
    d_switch: list = field(repr=False)
    x_pad: np.ndarray = field(default=None, repr=False)
    d_pad: np.ndarray = field(default=None, repr=False)

    @property
    def horizon(self):
        return self.d_lo.shape[0]


def xi_streams(observer: DistributedObserver, z1, z2):
    """Padded ``(K, N, width)`` stack from per-agent ``z1[i]`` ``(K+1, r_i)`` and ``z2[i]`` ``(K+1, p_i)``."""
    K = z2[0].shape[0] - 1
    out = np.zeros((K, observer.N, observer.xi_width))
    for i in range(observer.N):
        block = np.hstack([z1[i][:-1], z2[i][:-1], z2[i][1:]])
        out[:, i, :block.shape[1]] = block
    return out


def run_observer(observer: DistributedObserver, x0_bounds: IntervalVector, z1, z2) -> RunResult:
    xis = xi_streams(observer, z1, z2)
    K = xis.shape[0]
    N, n, n_p = observer.N, observer.n, observer.n_p
    x_lo = np.empty((K + 1, N, n))
    x_hi = np.empty_like(x_lo)
    d_lo = np.empty((K, N, n_p))
    d_hi = np.empty_like(d_lo)
    x_lo_l, x_hi_l = np.empty_like(x_lo), np.empty_like(x_hi)
    d_lo_l, d_hi_l = np.empty_like(d_lo), np.empty_like(d_hi)
    state = observer.initial_state(x0_bounds)
    x_lo[0], x_hi[0] = state.x_lo, state.x_hi
    x_lo_l[0], x_hi_l[0] = state.x_lo, state.x_hi
    x_sw = [SwitchRecord.identity(N, n)]
    d_sw = []
    x_pad = np.empty((K, N, n))
    d_pad = np.empty((K, N, n_p))
    for k in range(K):
        state, out = observer.step(state, xis[k])
        x_lo[k + 1], x_hi[k + 1] = out.x_lo, out.x_hi
        x_lo_l[k + 1], x_hi_l[k + 1] = out.x_lo_local, out.x_hi_local
        d_lo[k], d_hi[k] = out.d_lo, out.d_hi
        d_lo_l[k], d_hi_l[k] = out.d_lo_local, out.d_hi_local
        x_pad[k], d_pad[k] = out.x_pad, out.d_pad
        x_sw.append(out.x_switch)
        d_sw.append(out.d_switch)
    return RunResult(x_lo, x_hi, x_lo_l, x_hi_l, d_lo, d_hi, d_lo_l, d_hi_l, x_sw, d_sw, x_pad, d_pad)


# ---------------------------------------------------------------- error analysis

def collective_error(lo, hi, truth):
    """Stack ``[truth - lo^1; hi^1 - truth; ...]`` for ``(N, n)`` framers."""
    e = np.stack([truth[None, :] - lo, hi - truth[None, :]], axis=1)
    return e.reshape(-1)


def _doubled(S):
    return np.block([[S.plus, S.minus], [S.minus, S.plus]])


def collective_matrix(mats, which="x"):
    """Block-diagonal positive system matrix of the collective error."""
    blocks = [_doubled(split(m.A_obs if which == "x" else m.A_d)) for m in mats]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def noise_gain_bounds(mats, eta_widths, which="x"):
    """Worst-case noise term: elementwise max over agents of ``|Xi^i| width(eta^i)``."""
    per_agent = [np.abs(m.L_obs if which == "x" else m.F_obs) @ w for m, w in zip(mats, eta_widths)]
    return np.max(np.stack(per_agent), axis=0)


@dataclass
class ErrorEnvelope:
    state: np.ndarray        # (K+1, 2Nn) upper envelope of the collective state error
    input: np.ndarray        # (K, 2N n_p) upper envelope of the collective input error


def comparison_trajectory(e0, switch_records, mats, eta_widths, x_pad=None, d_pad=None) -> ErrorEnvelope:
    """Run the positive comparison system along the realised switching sequence.

    ``switch_records[k]`` is the selection that produced time-``k`` state
    framers (index 0 is ignored). Noise enters at its worst case. The
    optional ``(K, N, dim)`` pads are the rounding guards the observer added
    to each local bound; they enter as extra per-agent noise.
    """
    N = len(mats)
    Ax = collective_matrix(mats, "x")
    Ad = collective_matrix(mats, "d")
    gx = np.tile(noise_gain_bounds(mats, eta_widths, "x"), 2 * N)
    gd = np.tile(noise_gain_bounds(mats, eta_widths, "d"), 2 * N)
    K = len(switch_records) - 1
    env = np.empty((K + 1, Ax.shape[0]))
    denv = np.empty((K, Ad.shape[0]))
    env[0] = e0
    for k in range(K):
        px = 0.0 if x_pad is None else _stack_pad(x_pad[k])
        pd = 0.0 if d_pad is None else _stack_pad(d_pad[k])
        denv[k] = Ad @ env[k] + gd + pd
        env[k + 1] = switch_records[k + 1].gather(Ax @ env[k] + gx + px)
    return ErrorEnvelope(env, denv)


def _stack_pad(pad):
    """``(N, dim)`` per-agent pads in the collective ``[lo; hi]`` layout."""
    return np.repeat(pad[:, None, :], 2, axis=1).reshape(-1)


@dataclass
class SteadyStateBounds:
    state: float
    input: float
    rho_star: float
    input_gain: float


def steady_state_bounds(rho_star, mats, eta_widths) -> SteadyStateBounds:
    """Asymptotic bounds on ``||e||_inf`` and ``||delta||_inf`` for contraction factor ``rho_star``.

    The state-to-input gain is the induced inf-norm of the collective input
    matrix, since that matrix is in general not square.
    """
    rho_star = float(rho_star)
    if not rho_star < 1.0:
        raise NotCertified(f"rho_* = {rho_star:.6g} >= 1; no steady-state bound")
    lx = max(float(np.max(np.abs(m.L_obs) @ w)) for m, w in zip(mats, eta_widths))
    fd = max(float(np.max(np.abs(m.F_obs) @ w)) for m, w in zip(mats, eta_widths))
    gain = float(np.max(np.abs(collective_matrix(mats, "d")).sum(axis=1)))
    state = lx / (1.0 - rho_star)
    return SteadyStateBounds(state=state, input=gain * state + fd, rho_star=rho_star, input_gain=gain)


@dataclass
class Certification:
    rho_star: float
    contraction: float
    certified: bool
    selection: SwitchRecord


def certify(mats, reports: list[StabilizabilityReport], graph: CommGraph) -> Certification:
    """Contraction of the comparison system under the witness selection.

    Every bound of agent ``i`` in dimension ``s`` is taken from the neighbour
    that witnessed ``s`` during initialization (self when none did).
    """
    N = graph.N
    n = mats[0].A_obs.shape[0]
    sel = np.repeat(np.arange(N)[:, None], n, axis=1)
    for r in reports:
        for s, j in r.witnesses.items():
            sel[r.agent, s] = j
    rec = SwitchRecord(sel.copy(), sel.copy())
    P = rec.selection_matrix() @ collective_matrix(mats, "x")
    rho = spectral_radius(P)
    contraction = float(np.max(P.sum(axis=1)))
    certified = all(r.cpdn_satisfied for r in reports) and rho < 1.0
    return Certification(rho, contraction, certified, rec)


def realized_rho_max(switch_records, mats) -> float:
    """Largest spectral radius over the distinct realised switching matrices."""
    Ax = collective_matrix(mats, "x")
    seen = {}
    for rec in switch_records[1:]:
        key = rec.lower.tobytes() + rec.upper.tobytes()
        if key not in seen:
            seen[key] = spectral_radius(rec.selection_matrix() @ Ax)
    return max(seen.values()) if seen else 0.0
