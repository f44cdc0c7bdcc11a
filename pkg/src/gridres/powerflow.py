"""Newton-Raphson AC power flow on the slack-connected part of a network.

Per-unit system: S_base = 1 MVA network-wide, V_base = bus nominal voltage.
Lines and transformers are series impedances without shunts; transformers
run at nominal ratio. All loads and non-slack generators are constant PQ.

The solver is vectorised over time steps: :func:`solve_batch` runs many
independent power flows on the same topology at once, which is how the
digital twin sweeps a year of 15-minute steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .grid import Network

TOLERANCE = 1e-8  # p.u. mismatch
MAX_ITER = 30
S_BASE_MVA = 1.0

# complex entries per Jacobian batch; bounds the memory of one vectorised chunk
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True, eq=False)
class AdmittanceMatrix:
    """Nodal admittance over the energized (slack-connected) buses."""

    Y: np.ndarray  # (n, n) complex p.u.
    bus_ids: tuple[int, ...]
    index: Mapping[int, int]
    slack: int  # position of the slack bus in ``bus_ids``
    net_bus_pos: np.ndarray  # network bus position of each matrix bus
    line_ids: tuple[int, ...]
    line_pos: np.ndarray  # network line position of each active line
    line_from: np.ndarray
    line_to: np.ndarray
    line_y: np.ndarray
    line_ibase_ka: np.ndarray
    line_imax_ka: np.ndarray
    trafo_from: np.ndarray
    trafo_to: np.ndarray
    trafo_y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.bus_ids)


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    """Solution of one time step. Arrays follow the network's bus/line order;
    de-energized buses and inactive lines hold NaN."""

    vm: np.ndarray
    va: np.ndarray
    p_from_mw: np.ndarray
    q_from_mvar: np.ndarray
    p_to_mw: np.ndarray
    q_to_mvar: np.ndarray
    loading: np.ndarray
    losses_mw: float
    slack_p_mw: float
    slack_q_mvar: float
    converged: bool
    iterations: int
    mismatch: float


@dataclass(frozen=True, eq=False)
class BatchSolution:
    """Solutions of many steps on one topology; leading axis is the step."""

    vm: np.ndarray  # (B, n_net_buses)
    va: np.ndarray
    p_from_mw: np.ndarray  # (B, n_net_lines)
    q_from_mvar: np.ndarray
    p_to_mw: np.ndarray
    q_to_mvar: np.ndarray
    loading: np.ndarray
    losses_mw: np.ndarray  # (B,)
    slack_p_mw: np.ndarray
    slack_q_mvar: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    mismatch: np.ndarray

    def step(self, k: int) -> PowerFlowSolution:
        return PowerFlowSolution(
            vm=self.vm[k], va=self.va[k],
            p_from_mw=self.p_from_mw[k], q_from_mvar=self.q_from_mvar[k],
            p_to_mw=self.p_to_mw[k], q_to_mvar=self.q_to_mvar[k],
            loading=self.loading[k],
            losses_mw=float(self.losses_mw[k]),
            slack_p_mw=float(self.slack_p_mw[k]),
            slack_q_mvar=float(self.slack_q_mvar[k]),
            converged=bool(self.converged[k]),
            iterations=int(self.iterations[k]),
            mismatch=float(self.mismatch[k]),
        )


def build_admittance(network: Network, active_lines: Iterable[int]) -> AdmittanceMatrix:
    """Assemble Y-bus for the component that contains the slack bus.

    Lines outside ``active_lines`` are treated as open. Buses cut off from
    the slack are left out of the matrix entirely.
    """
    active = sorted(set(active_lines))
    labels = network.components(active)
    bidx = network.bus_index
    slack_label = labels[bidx[network.slack_bus]]
    energized = [k for k in range(len(network.buses)) if labels[k] == slack_label]
    bus_ids = tuple(network.buses[k].id for k in energized)
    index = {bid: i for i, bid in enumerate(bus_ids)}
    n = len(bus_ids)
    Y = np.zeros((n, n), dtype=complex)

    l_from, l_to, l_y, l_ib, l_imax, l_ids, l_pos = [], [], [], [], [], [], []
    for lid in active:
        ln = network.line(lid)
        if ln.from_bus not in index:
            continue
        vb = network.bus(ln.from_bus).nominal_voltage
        z_base = vb**2 / S_BASE_MVA
        z = complex(ln.conductor.r_per_km, ln.conductor.x_per_km) * ln.length / z_base
        f, t = index[ln.from_bus], index[ln.to_bus]
        y = 1.0 / z
        Y[f, f] += y
        Y[t, t] += y
        Y[f, t] -= y
        Y[t, f] -= y
        l_from.append(f)
        l_to.append(t)
        l_y.append(y)
        l_ib.append(S_BASE_MVA / (np.sqrt(3.0) * vb))
        l_imax.append(ln.conductor.max_current)
        l_ids.append(lid)
        l_pos.append(network.line_index[lid])

    t_from, t_to, t_y = [], [], []
    for tr in network.transformers:
        if tr.hv_bus not in index:
            continue
        f, t = index[tr.hv_bus], index[tr.lv_bus]
        y = 1.0 / complex(tr.r_pu, tr.x_pu)
        Y[f, f] += y
        Y[t, t] += y
        Y[f, t] -= y
        Y[t, f] -= y
        t_from.append(f)
        t_to.append(t)
        t_y.append(y)

    return AdmittanceMatrix(
        Y=Y,
        bus_ids=bus_ids,
        index=index,
        slack=index[network.slack_bus],
        net_bus_pos=np.asarray(energized, dtype=int),
        line_ids=tuple(l_ids),
        line_pos=np.asarray(l_pos, dtype=int),
        line_from=np.asarray(l_from, dtype=int),
        line_to=np.asarray(l_to, dtype=int),
        line_y=np.asarray(l_y, dtype=complex),
        line_ibase_ka=np.asarray(l_ib, dtype=float),
        line_imax_ka=np.asarray(l_imax, dtype=float),
        trafo_from=np.asarray(t_from, dtype=int),
        trafo_to=np.asarray(t_to, dtype=int),
        trafo_y=np.asarray(t_y, dtype=complex),
    )


def _newton(Y: np.ndarray, S: np.ndarray, slack: int, tol: float, max_iter: int):
    """Polar Newton-Raphson for a batch of injection vectors ``S`` (B, n) in p.u."""
    B, n = S.shape
    pq = np.array([i for i in range(n) if i != slack], dtype=int)
    m = pq.size
    V = np.ones((B, n), dtype=complex)
    iterations = np.zeros(B, dtype=int)
    mismatch = np.zeros(B)
    converged = np.zeros(B, dtype=bool)
    if m == 0:
        converged[:] = True
        return V, converged, iterations, mismatch

    Ypq = Y[np.ix_(pq, pq)]
    step = _dense_step if m <= _DENSE_MAX else _SparseStep(Ypq)
    todo = np.arange(B)
    for it in range(max_iter + 1):
        Vt = V[todo]
        I = Vt @ Y.T
        mis = Vt * np.conj(I) - S[todo]
        F = np.concatenate([mis.real[:, pq], mis.imag[:, pq]], axis=1)
        norm = np.abs(F).max(axis=1)
        mismatch[todo] = norm
        done = norm < tol
        converged[todo[done]] = True
        iterations[todo] = it
        keep = ~done
        if it == max_iter or not keep.any():
            break
        todo, Vt, I, F = todo[keep], Vt[keep], I[keep], F[keep]

        Vp = Vt[:, pq]
        if it == 0:
            # every member starts flat, so the first Jacobian is shared
            J0 = _dense_jacobian(Ypq, Vp[:1], I[:1, pq])[0]
            dx = scipy.linalg.lu_solve(scipy.linalg.lu_factor(J0), -F.T).T
        else:
            dx = step(Ypq, Vp, I[:, pq], F)
        va = np.angle(Vp) + dx[:, :m]
        vm = np.abs(Vp) + dx[:, m:]
        Vnew = Vt.copy()
        Vnew[:, pq] = vm * np.exp(1j * va)
        if not np.isfinite(Vnew).all():
            Vnew[~np.isfinite(Vnew)] = 0.0
        V[todo] = Vnew
    return V, converged, iterations, mismatch


_DENSE_MAX = 40  # PQ-bus count above which the sparse Jacobian path is used


def _dense_jacobian(Ypq: np.ndarray, Vp: np.ndarray, Ip: np.ndarray) -> np.ndarray:
    B, m = Vp.shape
    Vn = Vp / np.abs(Vp)
    # dS/dVa and dS/dVm restricted to PQ rows and columns
    dVa = 1j * Vp[:, :, None] * np.conj(-Ypq[None, :, :] * Vp[:, None, :])
    diag = np.arange(m)
    dVa[:, diag, diag] += 1j * Vp * np.conj(Ip)
    dVm = Vp[:, :, None] * np.conj(Ypq[None, :, :] * Vn[:, None, :])
    dVm[:, diag, diag] += np.conj(Ip) * Vn
    J = np.empty((B, 2 * m, 2 * m))
    J[:, :m, :m] = dVa.real
    J[:, :m, m:] = dVm.real
    J[:, m:, :m] = dVa.imag
    J[:, m:, m:] = dVm.imag
    return J


def _dense_step(Ypq: np.ndarray, Vp: np.ndarray, Ip: np.ndarray, F: np.ndarray) -> np.ndarray:
    J = _dense_jacobian(Ypq, Vp, Ip)
    B = J.shape[0]
    try:
        return np.linalg.solve(J, -F[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        return np.stack([_lstsq(J[k], -F[k]) for k in range(B)])


class _SparseStep:
    """Newton step for a batch as one block-diagonal sparse system."""

    def __init__(self, Ypq: np.ndarray):
        r, c = np.nonzero(Ypq)
        self.r, self.c = r, c
        self.y = Ypq[r, c]
        self.is_diag = r == c
        self.m = Ypq.shape[0]

    def __call__(self, Ypq, Vp, Ip, F):
        B, m = Vp.shape
        r, c, y = self.r, self.c, self.y
        Vn = Vp / np.abs(Vp)
        Vi = Vp[:, r]
        dVa = -1j * Vi * np.conj(y[None, :] * Vp[:, c])
        dVm = Vi * np.conj(y[None, :] * Vn[:, c])
        d = self.is_diag
        dVa[:, d] += 1j * Vp[:, r[d]] * np.conj(Ip[:, r[d]])
        dVm[:, d] += np.conj(Ip[:, r[d]]) * Vn[:, r[d]]
        nnz = r.size
        off = (np.arange(B) * 2 * m)[:, None]
        rows = np.concatenate([r + off, r + off, r + m + off, r + m + off], axis=1).ravel()
        cols = np.concatenate([c + off, c + m + off, c + off, c + m + off], axis=1).ravel()
        vals = np.concatenate([dVa.real, dVm.real, dVa.imag, dVm.imag], axis=1).ravel()
        J = sparse.csc_matrix((vals, (rows, cols)), shape=(2 * m * B, 2 * m * B))
        try:
            dx = splinalg.spsolve(J, -F.ravel())
        except RuntimeError:
            dx = np.full(F.size, np.nan)
        return dx.reshape(B, 2 * m)


def _lstsq(J: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(J, rhs, rcond=None)[0]


def solve_batch(
    network: Network,
    admittance: AdmittanceMatrix,
    injections: np.ndarray,
    *,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITER,
) -> BatchSolution:
    """Solve one power flow per row of ``injections``.

    ``injections`` is a complex (B, n_network_buses) array of net bus injection
    (generation minus load) in MW + j MVAr, in network bus order. Entries of
    de-energized buses are ignored.
    """
    inj = np.atleast_2d(np.asarray(injections, dtype=complex))
    B = inj.shape[0]
    adm = admittance
    n = adm.n
    S = inj[:, adm.net_bus_pos] / S_BASE_MVA

    V = np.empty((B, n), dtype=complex)
    conv = np.empty(B, dtype=bool)
    iters = np.empty(B, dtype=int)
    mis = np.empty(B)
    if n - 1 <= _DENSE_MAX:
        chunk = max(1, _CHUNK_ENTRIES // max(1, 4 * n * n))
    else:
        chunk = max(1, _CHUNK_ENTRIES // max(1, 8 * n))
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        V[lo:hi], conv[lo:hi], iters[lo:hi], mis[lo:hi] = _newton(adm.Y, S[lo:hi], adm.slack, tol, max_iter)

    n_bus = len(network.buses)
    n_line = len(network.lines)
    vm = np.full((B, n_bus), np.nan)
    va = np.full((B, n_bus), np.nan)
    vm[:, adm.net_bus_pos] = np.abs(V)
    va[:, adm.net_bus_pos] = np.angle(V)

    def branch(f, t, y):
        i_ft = (V[:, f] - V[:, t]) * y[None, :]
        s_f = V[:, f] * np.conj(i_ft)
        s_t = V[:, t] * np.conj(-i_ft)
        return i_ft, s_f, s_t

    i_ft, s_f, s_t = branch(adm.line_from, adm.line_to, adm.line_y)
    _, tr_f, tr_t = branch(adm.trafo_from, adm.trafo_to, adm.trafo_y)
    p_from = np.full((B, n_line), np.nan)
    q_from = np.full((B, n_line), np.nan)
    p_to = np.full((B, n_line), np.nan)
    q_to = np.full((B, n_line), np.nan)
    loading = np.full((B, n_line), np.nan)
    p_from[:, adm.line_pos] = s_f.real * S_BASE_MVA
    q_from[:, adm.line_pos] = s_f.imag * S_BASE_MVA
    p_to[:, adm.line_pos] = s_t.real * S_BASE_MVA
    q_to[:, adm.line_pos] = s_t.imag * S_BASE_MVA
    loading[:, adm.line_pos] = np.abs(i_ft) * adm.line_ibase_ka / adm.line_imax_ka

    losses = (s_f + s_t).real.sum(axis=1) + (tr_f + tr_t).real.sum(axis=1)
    Vs = V[:, adm.slack]
    s_slack = Vs * np.conj(V @ adm.Y[adm.slack])
    return BatchSolution(
        vm=vm, va=va,
        p_from_mw=p_from, q_from_mvar=q_from, p_to_mw=p_to, q_to_mvar=q_to,
        loading=loading,
        losses_mw=losses * S_BASE_MVA,
        slack_p_mw=s_slack.real * S_BASE_MVA,
        slack_q_mvar=s_slack.imag * S_BASE_MVA,
        converged=conv,
        iterations=iters,
        mismatch=mis,
    )


def solve(network: Network, admittance: AdmittanceMatrix, injections: np.ndarray) -> PowerFlowSolution:
    """Single-step power flow; see :func:`solve_batch` for the injection layout."""
    inj = np.asarray(injections, dtype=complex).reshape(1, -1)
    return solve_batch(network, admittance, inj).step(0)


def bus_injections(network: Network, load_p, load_q, gen_p=None, gen_q=None) -> np.ndarray:
    """Aggregate element powers (steps, elements) into net bus injections (steps, buses).

    Generators flagged as the slack connection are skipped.
    """
    load_p = np.atleast_2d(load_p)
    load_q = np.atleast_2d(load_q)
    T = load_p.shape[0]
    bidx = network.bus_index
    inc_load = np.zeros((len(network.loads), len(network.buses)))
    for j, ld in enumerate(network.loads):
        inc_load[j, bidx[ld.bus]] = 1.0
    S = -(load_p + 1j * load_q) @ inc_load
    if gen_p is not None and len(network.generators):
        gen_p = np.atleast_2d(gen_p)
        gen_q = np.zeros_like(gen_p) if gen_q is None else np.atleast_2d(gen_q)
        inc_gen = np.zeros((len(network.generators), len(network.buses)))
        for j, g in enumerate(network.generators):
            if not g.is_slack_connection:
                inc_gen[j, bidx[g.bus]] = 1.0
        S = S + (gen_p + 1j * gen_q) @ inc_gen
    return S.reshape(T, -1)
