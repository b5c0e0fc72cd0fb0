"""User-to-beam assignment under fixed beamformers.

Because downlink interference depends only on which beams transmit, not
on which users occupy them, each BS can reassign its own users to its
nonzero beams without disturbing any other cell.  The per-cell problem
is a rectangular linear sum assignment solved exactly by a shortest
augmenting path method in O(n^2 m) for an m x n matrix (m users >= n
beams).  A greedy per-beam variant backs the greedy-WMMSE baseline.
"""

import dataclasses

import numpy as np

from .fp import BeamformerSet, Schedule, ZERO_BEAM_EPS, zeta_totals

DENOM_FLOOR_REL = 1e-12


@dataclasses.dataclass
class RateMatrix:
    """Weighted rates achievable by each user on each nonzero beam."""

    entries: np.ndarray   # (K_b, N) real
    zeta: np.ndarray      # (K_b,) total received power + noise per user
    beam_users: np.ndarray  # (N,) current occupant of each beam

    def to_csv(self):
        lines = [",".join(f"beam{j}" for j in range(self.entries.shape[1]))]
        for row in self.entries:
            lines.append(",".join(f"{x:.12g}" for x in row))
        return "\n".join(lines) + "\n"


@dataclasses.dataclass
class Assignment:
    x: np.ndarray         # (m, n) binary; column sums 1, row sums <= 1
    row_of_col: np.ndarray  # (n,) assigned row per column
    value: float


def _lsap_min_batch(cost):
    """Shortest-augmenting-path LSAP on a (G, n, m) stack, n <= m.

    Solves G independent problems in lockstep: every vector operation
    covers all still-searching problems, so the Python-level iteration
    count does not grow with G.  Dual updates are deferred to the end of
    each augmentation (Jonker-Volgenant style).  Returns (col_of_row,
    u, v) with shapes (G, n), (G, n), (G, m); the duals are optimal.
    """
    G, n, m = cost.shape
    u = np.zeros((G, n))
    v = np.zeros((G, m))
    p = np.full((G, m), -1, dtype=int)        # row assigned to each column
    row_col = np.full((G, n), -1, dtype=int)  # column assigned to each row
    for i in range(n):
        # Dijkstra over reduced costs from row i of every problem
        minv = cost[:, i, :] - u[:, i, None] - v
        pred = np.full((G, m), i)
        scanned_c = np.zeros((G, m), dtype=bool)
        scanned_r = np.zeros((G, n), dtype=bool)
        scanned_r[:, i] = True
        delta = np.zeros(G)
        jfree = np.full(G, -1)
        active = np.ones(G, dtype=bool)
        while active.any():
            a = np.flatnonzero(active)
            masked = np.where(scanned_c[a], np.inf, minv[a])
            j1 = masked.argmin(axis=1)
            d = masked[np.arange(len(a)), j1]
            free = p[a, j1] == -1
            hit = a[free]
            jfree[hit] = j1[free]
            delta[hit] = d[free]
            active[hit] = False
            rest = a[~free]
            if len(rest) == 0:
                break
            j0 = j1[~free]
            scanned_c[rest, j0] = True
            i0 = p[rest, j0]
            scanned_r[rest, i0] = True
            cur = (d[~free, None] + cost[rest, i0] -
                   u[rest, i0, None] - v[rest])
            upd = (cur < minv[rest]) & ~scanned_c[rest]
            minv[rest] = np.where(upd, cur, minv[rest])
            pred[rest] = np.where(upd, i0[:, None], pred[rest])
        # deferred dual updates over the scanned tree
        v += np.where(scanned_c, minv - delta[:, None], 0.0)
        u[:, i] += delta
        other = scanned_r.copy()
        other[:, i] = False
        col_gather = np.take_along_axis(
            minv, np.maximum(row_col, 0), axis=1)
        u += np.where(other, delta[:, None] - col_gather, 0.0)
        # augment along the predecessor chain (paths are short)
        for g in range(G):
            j = jfree[g]
            while True:
                r = pred[g, j]
                p[g, j] = r
                j, row_col[g, r] = row_col[g, r], j
                if r == i:
                    break
    return row_col, u, v


def _lsap_min(cost):
    """Single-problem LSAP; see _lsap_min_batch."""
    col_of_row, u, v = _lsap_min_batch(cost[None])
    return col_of_row[0], u[0], v[0]


def _lex_smallest_optimal(cmat, tight, vstar, tol):
    """Lexicographically smallest optimal matching of columns to rows.

    cmat: (m, n) minimization costs; tight: bool mask of edges any optimal
    matching may use; vstar: the optimal total cost.  When m > n a matching
    on tight edges is not automatically optimal (which rows stay unmatched
    affects the total), so each tentative edge is validated by re-solving
    the residual problem and checking the optimum is preserved.
    """
    m, n = cmat.shape
    rows = np.zeros(n, dtype=int)
    used = np.zeros(m, dtype=bool)
    fixed = 0.0
    for j in range(n):
        for i in np.where(tight[:, j] & ~used)[0]:
            rest = fixed + cmat[i, j]
            if j + 1 < n:
                keep = ~used
                keep[i] = False
                sub = cmat[keep][:, j + 1:].T        # (cols left, rows left)
                sub_cols, _, _ = _lsap_min(sub)
                rest += sub[np.arange(sub.shape[0]), sub_cols].sum()
            if rest <= vstar + tol:
                rows[j] = i
                used[i] = True
                fixed += cmat[i, j]
                break
        else:
            raise RuntimeError("failed to extend an optimal matching")
    return rows


def hungarian(costs, sense="maximize"):
    """Exact rectangular LSAP; every column assigned, rows used at most once.

    Ties between optima break to the lexicographically smallest vector of
    row indices over the columns in order.
    """
    costs = np.asarray(costs, dtype=float)
    m, n = costs.shape
    if n > m:
        raise ValueError("more columns than rows; cannot assign every column")
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix must be finite")
    work = -costs.T if sense == "maximize" else costs.T  # (n, m), n <= m
    col_of_row, du, dv = _lsap_min(work)
    return _finish(costs, work, col_of_row, du, dv)


def _finish(costs, work, col_of_row, du, dv):
    """Canonical tie-break and packaging of a solved LSAP."""
    m, n = costs.shape
    # tight-edge graph: any optimal assignment uses only zero-reduced-cost
    # edges with respect to the optimal duals (complementary slackness)
    rc = work - du[:, None] - dv[None, :]
    tol = 1e-9 * (1.0 + np.abs(work).max())
    tight = (rc.T <= tol)                 # (m rows, n cols)
    if np.array_equal(tight.sum(axis=0), np.ones(n, dtype=np.intp)):
        # each column has a single optimal row: the optimum is unique
        row_of_col = np.argmax(tight, axis=0)
    else:
        vstar = float(work[np.arange(n), col_of_row].sum())
        row_of_col = _lex_smallest_optimal(work.T, tight, vstar, tol)
    value = float(costs[row_of_col, np.arange(n)].sum())
    x = np.zeros((m, n), dtype=int)
    x[row_of_col, np.arange(n)] = 1
    return Assignment(x=x, row_of_col=row_of_col, value=value)


def hungarian_batch(costs, sense="maximize"):
    """hungarian() over a (G, m, n) stack of equal-shape problems.

    The search runs in lockstep across the stack; results are identical
    to calling hungarian() on each slice.
    """
    costs = np.asarray(costs, dtype=float)
    G, m, n = costs.shape
    if n > m:
        raise ValueError("more columns than rows; cannot assign every column")
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix must be finite")
    work = -costs.transpose(0, 2, 1) if sense == "maximize" \
        else costs.transpose(0, 2, 1)
    col_of_row, du, dv = _lsap_min_batch(work)
    return [_finish(costs[g], work[g], col_of_row[g], du[g], dv[g])
            for g in range(G)]


def greedy_assign(rate_matrix):
    """Beams in index order each take the best remaining user."""
    r = np.asarray(rate_matrix.entries if isinstance(rate_matrix, RateMatrix)
                   else rate_matrix, dtype=float)
    m, n = r.shape
    taken = np.zeros(m, dtype=bool)
    rows = np.zeros(n, dtype=int)
    for j in range(n):
        masked = np.where(taken, -np.inf, r[:, j])
        rows[j] = int(np.argmax(masked))   # argmax ties to lowest index
        taken[rows[j]] = True
    x = np.zeros((m, n), dtype=int)
    x[rows, np.arange(n)] = 1
    return Assignment(x=x, row_of_col=rows,
                      value=float(r[rows, np.arange(n)].sum()))


def nonzero_beams(V, b, f, PT):
    """Users of BS b whose beam carries power above the dead-beam floor."""
    power = np.sum(np.abs(V.v[b, :, f, :]) ** 2, axis=-1)
    return np.flatnonzero(power > ZERO_BEAM_EPS * PT)


def build_rate_matrix(b, f, V, U, H, sigma2, weights, PT, zeta=None):
    """Weighted hypothetical rates of every user of BS b on each beam.

    The total received power per user is computed once over the whole
    network's scheduled beams; each entry subtracts the candidate beam's
    power from it to form that hypothesis' interference.  A precomputed
    (B, K, F) zeta array can be supplied to share it across cells.
    """
    beam_users = nonzero_beams(V, b, f, PT)
    K = U.u.shape[1]
    if zeta is None:
        zeta = zeta_totals(U, V, H, sigma2)
    zeta = zeta[b, :, f]
    if len(beam_users) == 0:
        return RateMatrix(entries=np.zeros((K, 0)), zeta=zeta,
                          beam_users=beam_users)
    # |h_i^H v_j|^2 for users i of cell b on candidate beams j
    inner = np.einsum("km,jm->kj", H[b, :, b, f, :].conj(),
                      V.v[b, beam_users, f, :])
    sig = np.abs(inner) ** 2
    den = zeta[:, None] - sig
    floor = sigma2[b, :, f][:, None] * DENOM_FLOOR_REL
    den = np.maximum(den, floor)
    entries = weights[b, :, None] * np.log1p(sig / den)
    return RateMatrix(entries=entries, zeta=zeta, beam_users=beam_users)


def schedule_update(U, V, H, sigma2, weights, PT, method="hungarian",
                    with_value=False):
    """Per-cell reassignment of users to the fixed nonzero beams.

    Every (BS, band) solves its own assignment independently; the chosen
    users inherit the beams they were matched to.  With the exact solver
    the network objective never decreases because the incumbent
    assignment stays feasible; method="greedy" uses the per-beam argmax
    rule instead and carries no such guarantee.

    with_value=True additionally returns the summed assignment values,
    which equal the network weighted sum rate of the new schedule (the
    rate-matrix entries are the post-reassignment weighted rates).
    """
    B, K, F = U.u.shape
    new_u = np.zeros_like(U.u)
    new_beam = np.full_like(U.beam_of, -1)
    new_v = np.zeros_like(V.v)
    total = 0.0
    for f in range(F):
        # one owner-grouped matmul per BS gives every user's amplitude on
        # that BS's scheduled beams; zeta and all rate matrices fall out
        amps = []
        zeta_f = sigma2[:, :, f].copy()
        for b in range(B):
            users = np.flatnonzero(U.u[b, :, f])
            if len(users) == 0:
                amps.append((users, None))
                continue
            a = H[:, :, b, f, :].conj() @ V.v[b, users, f, :].T  # (B, K, S)
            amps.append((users, a))
            zeta_f += np.sum(np.abs(a) ** 2, axis=-1)
        cells = []
        for b in range(B):
            users, a = amps[b]
            if a is None:
                continue
            # drop dead beams from the candidate columns
            power = np.sum(np.abs(V.v[b, users, f, :]) ** 2, axis=-1)
            live = power > ZERO_BEAM_EPS * PT
            beam_users = users[live]
            if len(beam_users) == 0:
                continue
            sig = np.abs(a[b][:, live]) ** 2                     # (K, N)
            den = zeta_f[b][:, None] - sig
            den = np.maximum(den, sigma2[b, :, f][:, None] * DENOM_FLOOR_REL)
            entries = weights[b, :, None] * np.log1p(sig / den)
            cells.append((b, beam_users, entries))
        if method == "hungarian":
            # equal-shape cells solve as one lockstep batch
            asgs = [None] * len(cells)
            by_shape = {}
            for idx, (_, _, e) in enumerate(cells):
                by_shape.setdefault(e.shape, []).append(idx)
            for idxs in by_shape.values():
                batch = hungarian_batch(
                    np.stack([cells[i][2] for i in idxs]), sense="maximize")
                for i, a_ in zip(idxs, batch):
                    asgs[i] = a_
        else:
            asgs = [greedy_assign(e) for _, _, e in cells]
        for (b, beam_users, _), asg in zip(cells, asgs):
            total += asg.value
            for j, i in enumerate(asg.row_of_col):
                new_u[b, i, f] = True
                new_beam[b, i, f] = j
                new_v[b, i, f, :] = V.v[b, beam_users[j], f, :]
    out = Schedule(u=new_u, beam_of=new_beam), BeamformerSet(v=new_v)
    return out + (total,) if with_value else out
