"""Multi-slot experiments with proportional-fair weights and metrics.

A drop is one user placement; small-scale fading is redrawn every slot
(block fading), which is what gives the proportional-fair weights their
multiuser diversity to work with.  Slots run the chosen scheme with
weights 1/R-bar updated by an exponentially weighted average.
Metrics follow the long-term average rates: sum-log utility, rate CDF,
10th-percentile edge rate, mean sum-rate and per-slot wall clock.
"""

import dataclasses
import json
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import baselines as bl
from . import fp
from . import network as net

RBAR_FLOOR_MBPS = 1e-3
SCHEMES = ("mf", "zf", "greedy_wmmse", "multicell_wmmse", "proposed")


@dataclasses.dataclass
class PfState:
    w: np.ndarray       # (B, K) positive
    Rbar: np.ndarray    # (B, K) Mbps
    alpha: float = 0.05


@dataclasses.dataclass
class SlotResult:
    rates: np.ndarray   # (B, K) Mbps, summed over bands
    f0: float
    scheme: str
    slot: int
    wall_ms: float


def pf_update(state: PfState, result: SlotResult) -> PfState:
    """R-bar <- (1-a) R-bar + a R, then w = 1/R-bar (floored)."""
    rbar = (1.0 - state.alpha) * state.Rbar + state.alpha * result.rates
    w = 1.0 / np.maximum(rbar, RBAR_FLOOR_MBPS)
    return PfState(w=w, Rbar=rbar, alpha=state.alpha)


def user_rates_mbps(U, V, H, sigma2, bandwidth_W):
    """Per-user rate over all bands at the final iterate, Mbps."""
    s = fp.sinr_all(U, V, H, sigma2)
    return np.sum(bandwidth_W * np.log2(1.0 + s), axis=2) / 1e6


def run_slot(scheme, slot, H, sigma2, weights, cfg, rng,
             n_iterations, power_mode="joint", worst_case_init=False):
    """Run one scheme for one slot; returns (U, V, f0 trace)."""
    PT = cfg.power_PT
    B, K, _, F, M = H.shape
    if scheme in ("mf", "zf"):
        users = bl.round_robin_schedule(slot, K, M)
        sched = {(b, f): users for b in range(B) for f in range(F)}
        maker = bl.matched_filter_beams if scheme == "mf" else bl.zero_forcing_beams
        U, V = maker(sched, H, PT)
        return U, V, [fp.objective_f0(U, V, H, sigma2, weights)]
    if scheme == "greedy_wmmse":
        return bl.greedy_wmmse(H, sigma2, weights, PT, n_iterations, rng,
                               mode=power_mode)
    if scheme == "multicell_wmmse":
        return bl.multicell_wmmse(H, sigma2, weights, PT, n_iterations,
                                  mode=power_mode)
    if scheme == "proposed":
        U0, V0 = fp.initialize(H, sigma2, weights, PT, M,
                               worst_case=worst_case_init)
        U, V, trace = fp.fp_iterate(U0, V0, H, sigma2, weights, PT,
                                    n_iterations, mode=power_mode)
        return U, V, trace.f0
    raise ValueError(f"unknown scheme: {scheme}")


def _run_drop(cfg, scheme, drop, n_slots, n_iterations, power_mode,
              pf_weights, worst_case_init=False):
    """All slots of one user drop; returns final PF state + logs."""
    drop_cfg = dataclasses.replace(cfg, rng_seed=cfg.rng_seed + 1000 * drop)
    topo = net.build_topology(drop_cfg)
    sigma2 = net.noise_power(drop_cfg).sigma2
    rng = np.random.default_rng(np.random.SeedSequence(
        [cfg.rng_seed, drop, 0x51D]))
    B, K = cfg.num_cells, cfg.users_per_cell_K
    state = PfState(w=np.ones((B, K)), Rbar=np.zeros((B, K)))
    slot_log = []
    for slot in range(n_slots):
        # block fading: fresh small-scale realization each slot
        H = net.generate_channels(topo, drop_cfg,
                                  drop_cfg.rng_seed * 100003 + slot).h
        weights = state.w if pf_weights else np.ones((B, K))
        t0 = time.perf_counter()
        U, V, trace = run_slot(scheme, slot, H, sigma2, weights, drop_cfg,
                               rng, n_iterations, power_mode,
                               worst_case_init)
        wall_ms = (time.perf_counter() - t0) * 1e3
        rates = user_rates_mbps(U, V, H, sigma2, cfg.bandwidth_W)
        result = SlotResult(rates=rates, f0=trace[-1], scheme=scheme,
                            slot=slot, wall_ms=wall_ms)
        slot_log.append(result)
        if pf_weights:
            if slot == 0:
                # first slot seeds R-bar directly; w = 1/0 is undefined
                state = PfState(w=1.0 / np.maximum(rates, RBAR_FLOOR_MBPS),
                                Rbar=rates, alpha=state.alpha)
            else:
                state = pf_update(state, result)
        else:
            state = PfState(w=state.w, Rbar=state.Rbar + rates,
                            alpha=state.alpha)
    if not pf_weights and n_slots > 0:
        state = PfState(w=state.w, Rbar=state.Rbar / n_slots,
                        alpha=state.alpha)
    return state, slot_log


def sum_log_utility(rbar):
    """Sum over users of ln(R-bar in Mbps), floored at the PF rate floor."""
    return float(np.sum(np.log(np.maximum(rbar, RBAR_FLOOR_MBPS))))


def edge_rate(rbar_pool, percentile=10):
    """Nearest-rank percentile of the pooled long-term rates."""
    r = np.sort(np.asarray(rbar_pool).ravel())
    idx = max(int(np.ceil(percentile / 100.0 * len(r))) - 1, 0)
    return float(r[idx])


def run_experiment(cfg, scheme, n_slots, n_iterations, n_drops,
                   power_mode="joint", pf_weights=True,
                   worst_case_init=False):
    """PF experiment over drops; returns the aggregated metrics bundle."""
    cfg.validate()
    rbar_all, sumlogs, wall, traces = [], [], [], []
    for drop in range(n_drops):
        state, slot_log = _run_drop(cfg, scheme, drop, n_slots, n_iterations,
                                    power_mode, pf_weights, worst_case_init)
        rbar_all.append(state.Rbar)
        sumlogs.append(sum_log_utility(state.Rbar))
        wall.extend(s.wall_ms for s in slot_log)
        traces.append([(s.slot, s.f0, s.wall_ms) for s in slot_log])
    pool = np.concatenate([r.ravel() for r in rbar_all])
    return {
        "scheme": scheme,
        "sumlog": float(np.mean(sumlogs)),
        "sumlog_per_drop": sumlogs,
        "edge_rate_mbps": edge_rate(pool),
        "mean_rate_mbps": float(np.mean(pool)),
        "rate_pool_mbps": pool.tolist(),
        "mean_wall_ms_per_slot": float(np.mean(wall)),
        "slot_traces": traces,
    }


def rate_cdf(pool):
    """(rate, percentile) pairs of the empirical CDF."""
    r = np.sort(np.asarray(pool).ravel())
    pct = 100.0 * (np.arange(1, len(r) + 1)) / len(r)
    return list(zip(r.tolist(), pct.tolist()))


def power_sweep(cfg, schemes, pt_list_dbm, n_slots=1, n_iterations=15,
                n_drops=5):
    """Mean network sum-rate per scheme over a transmit-power list.

    Sum-rate mode: all weights stay at one across slots.
    """
    rows = []
    for pt_dbm in pt_list_dbm:
        swept = dataclasses.replace(cfg, power_PT=net.dbm_to_watts(pt_dbm))
        for scheme in schemes:
            out = run_experiment(swept, scheme, n_slots, n_iterations,
                                 n_drops, pf_weights=False)
            total = out["mean_rate_mbps"] * cfg.num_cells * cfg.users_per_cell_K
            rows.append({"scheme": scheme, "PT_dBm": float(pt_dbm),
                         "sumrate_mbps": total})
    return rows


def joint_vs_perband(cfg, n_slots=20, n_iterations=15, n_drops=3):
    """Proposed scheme under both power modes on identical seeds."""
    if cfg.bands_F < 1:
        raise ValueError("bands_F must be >= 1")
    out = {}
    for mode in ("joint", "perband"):
        out[mode] = run_experiment(cfg, "proposed", n_slots, n_iterations,
                                   n_drops, power_mode=mode)
    ja, pb = out["joint"]["sumlog"], out["perband"]["sumlog"]
    out["sumlog_delta"] = ja - pb
    out["sumlog_delta_rel"] = abs(ja - pb) / max(abs(ja), abs(pb), 1e-12)
    out["edge_delta_mbps"] = (out["joint"]["edge_rate_mbps"] -
                              out["perband"]["edge_rate_mbps"])
    return out


def bench_per_iteration(cfg, n_repeats=5, n_iterations=10):
    """Measured per-iteration wall clock of proposed vs multicell WMMSE.

    One-time initialization is excluded so the ratio reflects the
    per-iteration cost of the update loops themselves.
    """
    topo = net.build_topology(cfg)
    H = net.generate_channels(topo, cfg, cfg.rng_seed).h
    sigma2 = net.noise_power(cfg).sigma2
    w = np.ones((cfg.num_cells, cfg.users_per_cell_K))
    PT = cfg.power_PT
    U0, V0 = fp.initialize(H, sigma2, w, PT, cfg.antennas_M)
    B, K, _, F, M = H.shape
    beam_of = np.zeros((B, K, F), dtype=int)
    beam_of[:] = np.arange(K)[None, :, None]
    Uall = fp.Schedule(u=np.ones((B, K, F), dtype=bool), beam_of=beam_of)
    Vmf = np.zeros((B, K, F, M), dtype=complex)
    for b in range(B):
        for k in range(K):
            for f in range(F):
                h = H[b, k, b, f, :]
                nrm = np.linalg.norm(h)
                if nrm > 0:
                    Vmf[b, k, f, :] = np.sqrt(PT / K) * h / nrm
    Vall = fp.BeamformerSet(v=Vmf)
    # single BLAS thread so parallelism of the larger batched kernels does
    # not contaminate the complexity comparison; repeats interleave the two
    # schemes so slow system phases hit both, and best-of rejects noise
    best = {"proposed": np.inf, "multicell_wmmse": np.inf}
    with threadpool_limits(limits=1):
        for _ in range(n_repeats):
            t0 = time.perf_counter()
            fp.fp_iterate(U0.copy(), V0.copy(), H, sigma2, w, PT,
                          n_iterations, rel_tol=None)
            best["proposed"] = min(best["proposed"],
                                   (time.perf_counter() - t0) / n_iterations)
            t0 = time.perf_counter()
            bl.wmmse_iterate(Uall, Vall.copy(), H, sigma2, w, PT,
                             n_iterations)
            best["multicell_wmmse"] = min(
                best["multicell_wmmse"],
                (time.perf_counter() - t0) / n_iterations)
    times = {k: v * 1e3 for k, v in best.items()}
    times["ratio"] = times["multicell_wmmse"] / times["proposed"]
    return times


def metrics_to_json(results):
    payload = {r["scheme"]: {k: r[k] for k in
                             ("sumlog", "edge_rate_mbps", "mean_rate_mbps",
                              "mean_wall_ms_per_slot")}
               for r in results}
    return json.dumps(payload, indent=2)
