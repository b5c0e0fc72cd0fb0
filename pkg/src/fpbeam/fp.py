"""Iterative weighted-sum-rate optimization of beamformers and schedule.

Block updates: SINR auxiliaries in closed form, quadratic-transform
auxiliaries in closed form, beamformers through a regularized Hermitian
solve with a bisection search on the per-BS power dual, then a joint
schedule/beam permutation handled by the assignment module.  Each full
iteration is non-decreasing in the weighted sum rate.

All per-band signal computations run over the compact list of scheduled
beams, so the work per iteration scales with the number of active beams
rather than the full user population.
"""

import dataclasses

import numpy as np

MU_BISECT_MAX = 200
MU_POWER_RTOL = 1e-9
ZERO_BEAM_EPS = 1e-12


@dataclasses.dataclass
class Schedule:
    u: np.ndarray         # (B, K, F) bool
    beam_of: np.ndarray   # (B, K, F) int, -1 when unscheduled

    def copy(self):
        return Schedule(self.u.copy(), self.beam_of.copy())


@dataclasses.dataclass
class BeamformerSet:
    v: np.ndarray         # (B, K, F, M) complex

    def copy(self):
        return BeamformerSet(self.v.copy())

    def power_per_bs_band(self):
        """Sum of ||v||^2 over users, shape (B, F)."""
        return np.sum(np.abs(self.v) ** 2, axis=(1, 3))


@dataclasses.dataclass
class AuxState:
    gamma: np.ndarray     # (B, K, F) >= 0
    y: np.ndarray         # (B, K, F) complex
    mu: np.ndarray        # (B,) joint mode or (B, F) per-band mode


def band_amplitudes(H, Vv, u_f, f):
    """h^H v for every user against the scheduled beams of band f.

    Returns (sb, sk, amp): owner indices of the S scheduled beams and the
    (B, K, S) complex amplitude array.
    """
    sb, sk = np.nonzero(u_f)
    if len(sb) == 0:
        B, K = u_f.shape
        return sb, sk, np.zeros((B, K, 0), dtype=complex)
    Vc = Vv[sb, sk, f, :]                                  # (S, M)
    amp = np.einsum("aksm,sm->aks", H[:, :, sb, f, :].conj(), Vc)
    return sb, sk, amp


def zeta_totals(U, V, H, sigma2):
    """Total received power plus noise per user and band, (B, K, F)."""
    B, K, F = U.u.shape
    out = np.empty((B, K, F))
    for f in range(F):
        _, _, amp = band_amplitudes(H, V.v, U.u[:, :, f], f)
        out[:, :, f] = np.sum(np.abs(amp) ** 2, axis=-1) + sigma2[:, :, f]
    return out


def sinr_all(U, V, H, sigma2):
    """Network-wide SINR map, (B, K, F); zero for unscheduled users."""
    B, K, F = U.u.shape
    out = np.zeros((B, K, F))
    for f in range(F):
        sb, sk, amp = band_amplitudes(H, V.v, U.u[:, :, f], f)
        if len(sb) == 0:
            continue
        pw = np.abs(amp) ** 2
        zeta = pw.sum(axis=-1) + sigma2[:, :, f]
        own = pw[sb, sk, np.arange(len(sb))]
        out[sb, sk, f] = own / (zeta[sb, sk] - own)
    return out


def sinr(k, b, f, U, V, H, sigma2):
    """Single-user SINR, convenience wrapper over the vectorized map."""
    return float(sinr_all(U, V, H, sigma2)[b, k, f])


def objective_f0(U, V, H, sigma2, weights):
    """Weighted sum rate, natural log; bandwidth scaling happens at reporting."""
    s = sinr_all(U, V, H, sigma2)
    return float(np.sum(weights[:, :, None] * np.log1p(s)))


def objective_fr(U, V, H, sigma2, weights, gamma):
    """Reformulated objective with the SINR ratios moved outside the log."""
    w = weights[:, :, None]
    total = float(np.sum(w * np.log1p(gamma) - w * gamma))
    B, K, F = U.u.shape
    for f in range(F):
        sb, sk, amp = band_amplitudes(H, V.v, U.u[:, :, f], f)
        if len(sb) == 0:
            continue
        pw = np.abs(amp) ** 2
        zeta = pw.sum(axis=-1) + sigma2[:, :, f]
        own = pw[sb, sk, np.arange(len(sb))]
        total += float(np.sum(weights[sb, sk] * (1.0 + gamma[sb, sk, f]) *
                              own / zeta[sb, sk]))
    return total


def objective_fq(U, V, H, sigma2, weights, gamma, y):
    """Quadratic-transform objective, concave in the complex auxiliaries."""
    w = weights[:, :, None]
    total = float(np.sum(w * (np.log1p(gamma) - gamma)))
    B, K, F = U.u.shape
    for f in range(F):
        sb, sk, amp = band_amplitudes(H, V.v, U.u[:, :, f], f)
        pw = np.abs(amp) ** 2
        zeta = pw.sum(axis=-1) + sigma2[:, :, f]
        total -= float(np.sum(np.abs(y[:, :, f]) ** 2 * zeta))
        if len(sb) == 0:
            continue
        own = amp[sb, sk, np.arange(len(sb))]
        # v^H h = (h^H v)*
        cross = 2.0 * np.real(np.conj(y[sb, sk, f]) *
                              np.sqrt(weights[sb, sk] *
                                      (1.0 + gamma[sb, sk, f])) * np.conj(own))
        total += float(np.sum(cross))
    return total


def update_gamma(U, V, H, sigma2):
    """Set the SINR auxiliaries to the current SINR values."""
    return sinr_all(U, V, H, sigma2)


def update_y(U, V, gamma, H, sigma2, weights):
    """Closed-form update of the quadratic-transform auxiliaries."""
    B, K, F = U.u.shape
    y = np.zeros((B, K, F), dtype=complex)
    for f in range(F):
        sb, sk, amp = band_amplitudes(H, V.v, U.u[:, :, f], f)
        if len(sb) == 0:
            continue
        pw = np.abs(amp) ** 2
        zeta = pw.sum(axis=-1) + sigma2[:, :, f]
        own = amp[sb, sk, np.arange(len(sb))]
        y[sb, sk, f] = (np.sqrt(weights[sb, sk] * (1.0 + gamma[sb, sk, f])) *
                        np.conj(own) / zeta[sb, sk])
    return y


class _BandSolve:
    """Eigendecomposed per-BS band system for fast dual-variable probes.

    The matrix C does not depend on the dual, so (C + mu I)^-1 rhs and
    the resulting transmit power are evaluated from one decomposition.
    """

    def __init__(self, lam, Q, rhs, scale):
        self.lam = np.maximum(lam, 0.0)
        self.Q = Q
        self.qrhs = Q.conj().T @ rhs if rhs.shape[1] else rhs  # (M, n)
        self.scale = scale
        self.coef = (np.abs(self.qrhs) ** 2) * (scale[None, :] ** 2)
        self.eps = ZERO_BEAM_EPS * float(self.lam.sum())

    def _shift(self, mu):
        lam = self.lam + mu
        if mu == 0.0:
            lam = lam + self.eps           # rank-deficient sums at mu = 0
        return lam

    def power(self, mu):
        if self.coef.size == 0:
            return 0.0
        lam = self._shift(mu)
        return float(np.sum(self.coef / (lam[:, None] ** 2)))

    def beams(self, mu):
        if self.qrhs.shape[1] == 0:
            return self.qrhs.copy()
        lam = self._shift(mu)
        x = self.Q @ (self.qrhs / lam[:, None])
        return x * self.scale[None, :]


def _bisect_mu_batch(lam, lam0, coef, budget):
    """Vectorized dual search: one Newton iteration drives every row.

    lam, lam0, coef: (G, L) stacked per-group eigenvalue/coefficient rows;
    budget: scalar power budget shared by all groups.  Rows whose Newton
    step misbehaves fall back to the scalar safeguarded search.
    """
    G = lam.shape[0]
    mu = np.zeros(G)
    p0 = np.sum(coef / lam0 ** 2, axis=1)
    active = p0 > budget * (1.0 + MU_POWER_RTOL)
    if not active.any():
        return mu
    mu_a = np.sqrt(coef[active].sum(axis=1) / budget)
    lam_a = lam[active]
    lam0_a = lam0[active]
    coef_a = coef[active]
    todo = np.ones(len(mu_a), dtype=bool)
    bad = np.zeros(len(mu_a), dtype=bool)
    for _ in range(MU_BISECT_MAX):
        if not todo.any():
            break
        shifted = lam_a[todo] + mu_a[todo, None]
        zero = mu_a[todo] == 0.0
        if zero.any():
            shifted[zero] = lam0_a[todo][zero]
        c = coef_a[todo]
        p = np.sum(c / shifted ** 2, axis=1)
        slope = 2.0 * np.sum(c / shifted ** 3, axis=1)
        step = (p - budget) / slope
        finite = np.isfinite(step)
        done = np.abs(p - budget) <= MU_POWER_RTOL * budget
        idx = np.flatnonzero(todo)
        mu_a[idx[finite]] = np.maximum(mu_a[idx[finite]] + step[finite], 0.0)
        bad[idx[~finite]] = True
        todo[idx[done | ~finite]] = False
    bad |= todo          # unconverged rows rerun through the scalar search
    mu[active] = mu_a
    if bad.any():
        act_idx = np.flatnonzero(active)
        for j in np.flatnonzero(bad):
            g = act_idx[j]
            mu[g] = _bisect_mu_rows(lam[g], lam0[g], coef[g], budget)
    return mu


def _bisect_mu_rows(lam, lam0, coef, budget):
    """Scalar safeguarded dual search on flattened rows (fallback path)."""

    def power(mu):
        shifted = lam0 if mu == 0.0 else lam + mu
        return float(np.sum(coef / shifted ** 2))

    p0 = power(0.0)
    if p0 <= budget * (1.0 + MU_POWER_RTOL) or p0 == 0.0:
        return 0.0
    mu = float(np.sqrt(coef.sum() / budget))
    for _ in range(MU_BISECT_MAX):
        shifted = lam0 if mu == 0.0 else lam + mu
        p = float(np.sum(coef / shifted ** 2))
        if abs(p - budget) <= MU_POWER_RTOL * budget:
            return mu
        slope = 2.0 * float(np.sum(coef / shifted ** 3))
        step = (p - budget) / slope
        if not np.isfinite(step):
            break
        mu = max(mu + step, 0.0)
    hi = max(mu, 1.0)
    while power(hi) > budget:
        hi *= 2.0
    lo = 0.0
    for _ in range(MU_BISECT_MAX):
        mid = 0.5 * (lo + hi)
        p = power(mid)
        if p > budget:
            lo = mid
        else:
            hi = mid
            if (budget - p) * max(mid, 1.0) <= MU_POWER_RTOL * budget:
                break
    return hi


def _bisect_mu(solvers, budget):
    """Smallest dual meeting the power budget, complementary slackness held.

    The transmit power is a convex decreasing function of the dual, so a
    safeguarded Newton iteration from the infeasible side converges
    monotonically to the unique root; a doubling bracket plus bisection
    backs it up if a step ever misbehaves numerically.
    """
    lam = np.concatenate([s.lam for s in solvers])
    lam0 = np.concatenate([s.lam + s.eps for s in solvers])
    coef = np.concatenate([s.coef.sum(axis=1) if s.coef.size else
                           np.zeros(len(s.lam)) for s in solvers])
    return _bisect_mu_rows(lam, lam0, coef, budget)


def solve_power_constrained_beams(H, U, quad_w, rhs_c, scale, PT, mode):
    """Per-BS beamformers from a Hermitian normal-equation solve.

    quad_w (B, K, F): quadratic weight of each scheduled user's cross
    channel in the per-BS matrix; rhs_c (B, K, F): complex coefficient on
    the own channel; scale (B, K, F): outer multiplier on the solution.
    The per-BS matrix is shared by all of that BS's users on a band.
    mode "joint": one dual per BS against F*PT; "perband": one dual per
    (BS, band) against PT.
    """
    B, K, Bp, F, M = H.shape
    u = U.u
    V = np.zeros((B, K, F, M), dtype=complex)
    wts = (u * quad_w).astype(float)
    mu = np.zeros(B) if mode == "joint" else np.zeros((B, F))
    solvers = [[None] * F for _ in range(B)]
    users_bands = [[None] * F for _ in range(B)]
    for f in range(F):
        sb, sk = np.nonzero(u[:, :, f])
        Hc = H[sb, sk, :, f, :]                        # (S, B, M)
        wf = wts[sb, sk, f]
        # all per-BS matrices of this band in one shot, then batched eigh
        C_all = np.einsum("sbm,s,sbn->bmn", Hc, wf, Hc.conj())
        lam_all, Q_all = np.linalg.eigh(C_all)
        for b in range(B):
            sched = np.flatnonzero(u[b, :, f])
            rhs = rhs_c[b, sched, f][None, :] * H[b, sched, b, f, :].T
            solvers[b][f] = _BandSolve(lam_all[b], Q_all[b], rhs,
                                       scale[b, sched, f].astype(float))
            users_bands[b][f] = sched
    def rows(s):
        c = s.coef.sum(axis=1) if s.coef.size else np.zeros(len(s.lam))
        return s.lam, s.lam + s.eps, c

    if mode == "joint":
        parts = [[rows(solvers[b][f]) for f in range(F)] for b in range(B)]
        lam = np.stack([np.concatenate([p[0] for p in parts[b]])
                        for b in range(B)])
        lam0 = np.stack([np.concatenate([p[1] for p in parts[b]])
                         for b in range(B)])
        coef = np.stack([np.concatenate([p[2] for p in parts[b]])
                         for b in range(B)])
        mu = _bisect_mu_batch(lam, lam0, coef, F * PT)
        mu_bf = np.repeat(mu[:, None], F, axis=1)
    else:
        parts = [rows(solvers[b][f]) for b in range(B) for f in range(F)]
        lam = np.stack([p[0] for p in parts])
        lam0 = np.stack([p[1] for p in parts])
        coef = np.stack([p[2] for p in parts])
        mu = _bisect_mu_batch(lam, lam0, coef, PT).reshape(B, F)
        mu_bf = mu
    for b in range(B):
        for f in range(F):
            if len(users_bands[b][f]):
                V[b, users_bands[b][f], f, :] = \
                    solvers[b][f].beams(mu_bf[b, f]).T
    return BeamformerSet(v=V), mu


def update_v(U, gamma, y, H, sigma2, weights, PT, mode="joint"):
    """Beamformer block update maximizing the quadratic-transform objective."""
    w = weights[:, :, None]
    quad_w = np.abs(y) ** 2
    rhs_c = np.conj(y)
    scale = np.sqrt(w * (1.0 + gamma)) * U.u
    return solve_power_constrained_beams(H, U, quad_w, rhs_c, scale, PT, mode)


def power_budget(PT, F, mode):
    return F * PT if mode == "joint" else PT


def check_power_feasible(V, mu, PT, F, mode, rtol=1e-6):
    """Budget satisfaction and complementary slackness for every BS."""
    pw = V.power_per_bs_band()
    if mode == "joint":
        used = pw.sum(axis=1)
        budget = F * PT
        ok = np.all(used <= budget * (1.0 + rtol))
        slack = np.all(mu * (budget - used) <= rtol * budget)
    else:
        budget = PT
        ok = np.all(pw <= budget * (1.0 + rtol))
        slack = np.all(mu * (budget - pw) <= rtol * budget)
    return bool(ok), bool(slack)


def interference_free_metric(H, sigma2, weights, PT, M):
    """w * log(1 + ||h||^2 (PT/M) / sigma2) per user and band, (B, K, F)."""
    B = H.shape[0]
    hh = np.sum(np.abs(H[np.arange(B), :, np.arange(B), :, :]) ** 2, axis=-1)
    return weights[:, :, None] * np.log1p(hh * (PT / M) / sigma2)


def initialize(H, sigma2, weights, PT, M, worst_case=False):
    """Schedule the M best interference-free users per BS and band.

    Beams start as matched filters at equal power PT/M per scheduled
    user.  worst_case picks the M lowest-metric users instead.
    """
    B, K, _, F, _ = H.shape
    metric = interference_free_metric(H, sigma2, weights, PT, M)
    u = np.zeros((B, K, F), dtype=bool)
    beam_of = np.full((B, K, F), -1, dtype=int)
    V = np.zeros((B, K, F, H.shape[-1]), dtype=complex)
    for b in range(B):
        for f in range(F):
            order = np.argsort(metric[b, :, f], kind="stable")
            chosen = order[:M] if worst_case else order[::-1][:M]
            chosen = np.sort(chosen)
            for n, k in enumerate(chosen):
                u[b, k, f] = True
                beam_of[b, k, f] = n
                h = H[b, k, b, f, :]
                nrm = np.linalg.norm(h)
                if nrm > 0:
                    V[b, k, f, :] = np.sqrt(PT / M) * h / nrm
    return Schedule(u=u, beam_of=beam_of), BeamformerSet(v=V)


@dataclasses.dataclass
class IterationTrace:
    """Objective value and per-BS power after each full iteration."""

    f0: list
    bs_power: list            # one (B,) array per entry

    def rows(self):
        header = ["iter", "f0"] + [f"pow_b{b}" for b in
                                   range(len(self.bs_power[0]))]
        rows = [header]
        for i, (f0, pw) in enumerate(zip(self.f0, self.bs_power)):
            rows.append([i, f0] + list(pw))
        return rows


def fp_iterate(U, V, H, sigma2, weights, PT, n_iterations,
               mode="joint", rel_tol=1e-4, check_power=False):
    """Run the full block-update loop from an initialized state.

    Returns the final schedule, beamformers and the objective trace
    (initial value included).  Stops at the iteration cap or when the
    relative objective increase falls below rel_tol (None disables).
    """
    from . import assignment

    def gamma_and_y(U, V):
        # fused closed-form auxiliary updates from one owner-grouped
        # amplitude sweep (one matmul per BS over its scheduled beams)
        B, K, F = U.u.shape
        gamma = np.zeros((B, K, F))
        y = np.zeros((B, K, F), dtype=complex)
        for f in range(F):
            zeta_f = sigma2[:, :, f].copy()
            owns = []
            for b in range(B):
                users = np.flatnonzero(U.u[b, :, f])
                if len(users) == 0:
                    owns.append((users, None))
                    continue
                a = H[:, :, b, f, :].conj() @ V.v[b, users, f, :].T
                zeta_f += np.sum(np.abs(a) ** 2, axis=-1)
                owns.append((users, a[b, users, np.arange(len(users))]))
            for b in range(B):
                users, own = owns[b]
                if own is None:
                    continue
                zs = zeta_f[b, users]
                pw = np.abs(own) ** 2
                g = pw / (zs - pw)
                gamma[b, users, f] = g
                y[b, users, f] = (np.sqrt(weights[b, users] * (1.0 + g)) *
                                  np.conj(own) / zs)
        return gamma, y

    U, V = U.copy(), V.copy()
    f0 = objective_f0(U, V, H, sigma2, weights)
    trace = IterationTrace(f0=[f0], bs_power=[V.power_per_bs_band().sum(axis=1)])
    for _ in range(n_iterations):
        gamma, y = gamma_and_y(U, V)
        V, mu = update_v(U, gamma, y, H, sigma2, weights, PT, mode=mode)
        if check_power:
            ok, slack = check_power_feasible(V, mu, PT, U.u.shape[2], mode)
            if not (ok and slack):
                raise AssertionError("power budget or slackness violated")
        # the assignment values are the post-reassignment weighted rates,
        # so their sum is the new objective — no extra amplitude pass
        U, V, f0_new = assignment.schedule_update(U, V, H, sigma2, weights,
                                                  PT, with_value=True)
        trace.f0.append(f0_new)
        trace.bs_power.append(V.power_per_bs_band().sum(axis=1))
        if rel_tol is not None and f0_new - f0 < rel_tol * abs(f0):
            f0 = f0_new
            break
        f0 = f0_new
    return U, V, trace
