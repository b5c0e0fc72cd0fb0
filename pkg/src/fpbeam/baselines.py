"""Comparison schemes: matched filtering, zero-forcing and two WMMSE
variants.

The uncoordinated schemes use equal power and round-robin scheduling.
The WMMSE cycle is the standard three-block MMSE-receiver / MSE-weight /
transmit-beam update (Shi et al. style) with the same per-BS power
bisection as the main optimizer.  The multicell variant schedules every
user and lets powers collapse implicitly; the greedy variant alternates
one WMMSE pass with per-beam greedy scheduling.
"""

import enum
import logging

import numpy as np

from . import assignment
from .fp import (BeamformerSet, Schedule, band_amplitudes, objective_f0,
                 solve_power_constrained_beams)

log = logging.getLogger(__name__)

SURVIVOR_POWER_REL = 1e-6


class BaselineKind(enum.Enum):
    MatchedFilter = "mf"
    ZeroForcing = "zf"
    GreedyWMMSE = "greedy_wmmse"
    MulticellWMMSE = "multicell_wmmse"


def round_robin_schedule(slot_index, K, M):
    """Users (slot*M mod K) onward, taken cyclically."""
    start = (slot_index * M) % K
    return [(start + i) % K for i in range(M)]


def _empty_state(B, K, F, M):
    u = np.zeros((B, K, F), dtype=bool)
    beam_of = np.full((B, K, F), -1, dtype=int)
    V = np.zeros((B, K, F, M), dtype=complex)
    return u, beam_of, V


def matched_filter_beams(scheduled, H, PT):
    """v = sqrt(PT/M) h/||h|| on the own-cell channel for each scheduled user.

    scheduled: map (b, f) -> user index list, at most M entries each.
    """
    B, K, _, F, M = H.shape
    u, beam_of, V = _empty_state(B, K, F, M)
    for (b, f), users in scheduled.items():
        for n, k in enumerate(users):
            h = H[b, k, b, f, :]
            nrm = np.linalg.norm(h)
            if nrm == 0:
                continue
            u[b, k, f] = True
            beam_of[b, k, f] = n
            V[b, k, f, :] = np.sqrt(PT / M) * h / nrm
    return Schedule(u=u, beam_of=beam_of), BeamformerSet(v=V)


def _zf_directions(Hs):
    """Pseudo-inverse columns for a full-row-rank stacked channel matrix."""
    return np.linalg.pinv(Hs)         # (M, n); h_i^H v_j = delta_ij


def zero_forcing_beams(scheduled, H, PT):
    """Pseudo-inverse precoding nulling intracell interference.

    A rank-deficient channel stack drops its most collinear user (the
    smallest residual after projecting onto the span of the others) and
    retries.
    """
    B, K, _, F, M = H.shape
    u, beam_of, V = _empty_state(B, K, F, M)
    for (b, f), users in scheduled.items():
        users = [k for k in users if np.linalg.norm(H[b, k, b, f, :]) > 0]
        while users:
            Hs = np.conj(H[b, users, b, f, :])       # rows h_i^H
            if np.linalg.matrix_rank(Hs, tol=1e-10 * np.abs(Hs).max()) == len(users):
                break
            # drop the user whose channel is best explained by the others
            resid = []
            for i in range(len(users)):
                others = np.delete(Hs, i, axis=0)
                proj, *_ = np.linalg.lstsq(others.T, Hs[i], rcond=None)
                resid.append(np.linalg.norm(Hs[i] - others.T @ proj))
            users = [k for i, k in enumerate(users) if i != int(np.argmin(resid))]
        if not users:
            continue
        P = _zf_directions(np.conj(H[b, users, b, f, :]))
        for n, k in enumerate(users):
            col = P[:, n]
            nrm = np.linalg.norm(col)
            if nrm == 0:
                continue
            u[b, k, f] = True
            beam_of[b, k, f] = n
            V[b, k, f, :] = np.sqrt(PT / M) * col / nrm
    return Schedule(u=u, beam_of=beam_of), BeamformerSet(v=V)


def wmmse_pass(U, V, H, sigma2, weights, PT, mode="joint"):
    """One receiver / MSE-weight / transmit-beam cycle under fixed schedule."""
    B, K, F = U.u.shape
    zeta = np.empty((B, K, F))
    own = np.zeros((B, K, F), dtype=complex)
    for f in range(F):
        sb, sk, amp = band_amplitudes(H, V.v, U.u[:, :, f], f)
        zeta[:, :, f] = np.sum(np.abs(amp) ** 2, axis=-1) + sigma2[:, :, f]
        if len(sb):
            own[sb, sk, f] = amp[sb, sk, np.arange(len(sb))]
    rec = U.u * own / zeta                       # scalar MMSE receivers
    mse = 1.0 - U.u * np.abs(own) ** 2 / zeta
    rho = 1.0 / mse                              # optimal MSE weights
    w = weights[:, :, None]
    quad_w = w * rho * np.abs(rec) ** 2
    rhs_c = w * rho * rec
    scale = U.u.astype(float)
    return solve_power_constrained_beams(H, U, quad_w, rhs_c, scale, PT, mode)


def wmmse_iterate(U, V, H, sigma2, weights, PT, n_iter, mode="joint"):
    """Fixed-schedule WMMSE; weighted sum rate trace is non-decreasing."""
    V = V.copy()
    trace = [objective_f0(U, V, H, sigma2, weights)]
    for _ in range(n_iter):
        V, _mu = wmmse_pass(U, V, H, sigma2, weights, PT, mode=mode)
        trace.append(objective_f0(U, V, H, sigma2, weights))
    return V, trace


def multicell_wmmse(H, sigma2, weights, PT, n_iter, mode="joint"):
    """WMMSE with every user scheduled; near-zero beams end up unscheduled.

    If more than M users per (BS, band) keep power above the survivor
    threshold, only the top M by power are retained.
    """
    B, K, _, F, M = H.shape
    u = np.ones((B, K, F), dtype=bool)
    beam_of = np.zeros((B, K, F), dtype=int)
    beam_of[:] = np.arange(K)[None, :, None]
    U = Schedule(u=u, beam_of=beam_of)
    # equal power split over all K users per band
    V0 = np.zeros((B, K, F, M), dtype=complex)
    for b in range(B):
        for k in range(K):
            for f in range(F):
                h = H[b, k, b, f, :]
                nrm = np.linalg.norm(h)
                if nrm > 0:
                    V0[b, k, f, :] = np.sqrt(PT / K) * h / nrm
    V, trace = wmmse_iterate(U, BeamformerSet(v=V0), H, sigma2, weights, PT,
                             n_iter, mode=mode)
    # implicit schedule: read off which beams kept non-negligible power
    power = np.sum(np.abs(V.v) ** 2, axis=-1)        # (B, K, F)
    alive = power > SURVIVOR_POWER_REL * PT
    for b in range(B):
        for f in range(F):
            idx = np.flatnonzero(alive[b, :, f])
            if len(idx) > M:
                log.info("multicell WMMSE kept %d > M=%d beams at bs=%d f=%d; "
                         "truncating to top-M by power", len(idx), M, b, f)
                keep = idx[np.argsort(power[b, idx, f])[::-1][:M]]
                drop = np.setdiff1d(idx, keep)
                alive[b, drop, f] = False
    Vv = np.where(alive[:, :, :, None], V.v, 0.0)
    beam_of = np.full((B, K, F), -1, dtype=int)
    for b in range(B):
        for f in range(F):
            for n, k in enumerate(np.flatnonzero(alive[b, :, f])):
                beam_of[b, k, f] = n
    return Schedule(u=alive, beam_of=beam_of), BeamformerSet(v=Vv), trace


def greedy_wmmse(H, sigma2, weights, PT, n_iter, rng, mode="joint"):
    """WMMSE beams alternated with greedy per-beam user selection.

    Starts from a random set of M users per (BS, band).  The objective
    trace is recorded but not monotone by construction.
    """
    B, K, _, F, M = H.shape
    scheduled = {}
    for b in range(B):
        for f in range(F):
            scheduled[(b, f)] = sorted(rng.choice(K, size=M, replace=False).tolist())
    U, V = matched_filter_beams(scheduled, H, PT)
    trace = [objective_f0(U, V, H, sigma2, weights)]
    for _ in range(n_iter):
        V, _mu = wmmse_pass(U, V, H, sigma2, weights, PT, mode=mode)
        U, V = assignment.schedule_update(U, V, H, sigma2, weights, PT,
                                         method="greedy")
        trace.append(objective_f0(U, V, H, sigma2, weights))
    return U, V, trace
