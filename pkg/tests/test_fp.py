"""Block-update optimizer tests: SINR model, reformulations, beam solve."""

import numpy as np
import pytest

from conftest import random_instance
from fpbeam import fp


def naive_sinr(k, b, f, U, V, H, sigma2):
    """Plain-loop restatement of the SINR definition, used as an oracle."""
    if not U.u[b, k, f]:
        return 0.0
    h = H[b, k]
    own = abs(np.vdot(H[b, k, b, f], V.v[b, k, f])) ** 2
    interf = 0.0
    B, K, F = U.u.shape
    for bp in range(B):
        for kp in range(K):
            if (bp, kp) == (b, k) or not U.u[bp, kp, f]:
                continue
            interf += abs(np.vdot(H[b, k, bp, f], V.v[bp, kp, f])) ** 2
    return own / (interf + sigma2[b, k, f])


class TestSinr:
    def test_unscheduled_is_zero(self):
        U, V, H, sigma2, w = random_instance(0)
        U.u[:] = False
        assert np.all(fp.sinr_all(U, V, H, sigma2) == 0.0)

    def test_single_user_no_interference(self):
        U, V, H, sigma2, w = random_instance(1, B=1, K=2, F=1, M=2)
        U.u[:] = False
        U.u[0, 0, 0] = True
        got = fp.sinr(0, 0, 0, U, V, H, sigma2)
        expect = abs(np.vdot(H[0, 0, 0, 0], V.v[0, 0, 0])) ** 2 / sigma2[0, 0, 0]
        assert np.isclose(got, expect, rtol=1e-12)

    def test_two_cell_hand_expansion(self):
        # 2 cells x 2 users, all scheduled: compare against the scalar loop
        U, V, H, sigma2, w = random_instance(2, B=2, K=2, F=1, M=2)
        s = fp.sinr_all(U, V, H, sigma2)
        for b in range(2):
            for k in range(2):
                assert np.isclose(s[b, k, 0],
                                  naive_sinr(k, b, 0, U, V, H, sigma2),
                                  rtol=1e-10)

    def test_f0_matches_naive_resummation(self):
        for seed in range(5):
            U, V, H, sigma2, w = random_instance(seed, B=2, K=3, F=2, M=2)
            total = sum(w[b, k] * np.log1p(naive_sinr(k, b, f, U, V, H, sigma2))
                        for b in range(2) for k in range(3) for f in range(2))
            assert np.isclose(fp.objective_f0(U, V, H, sigma2, w), total,
                              rtol=1e-10)

    def test_f0_degenerate_cases(self):
        U, V, H, sigma2, w = random_instance(3)
        empty = U.copy()
        empty.u[:] = False
        assert fp.objective_f0(empty, V, H, sigma2, w) == 0.0
        assert fp.objective_f0(U, V, H, sigma2, np.zeros_like(w)) == 0.0


class TestAuxiliaries:
    def test_gamma_restores_f0(self):
        for seed in range(10):
            U, V, H, sigma2, w = random_instance(seed)
            g = fp.update_gamma(U, V, H, sigma2)
            f0 = fp.objective_f0(U, V, H, sigma2, w)
            fr = fp.objective_fr(U, V, H, sigma2, w, g)
            assert np.isclose(fr, f0, rtol=1e-9)

    def test_gamma_zero_for_unscheduled(self):
        U, V, H, sigma2, w = random_instance(4)
        g = fp.update_gamma(U, V, H, sigma2)
        assert np.all(g[~U.u] == 0.0)

    def test_gamma_is_local_max_of_fr(self):
        U, V, H, sigma2, w = random_instance(5)
        g = fp.update_gamma(U, V, H, sigma2)
        fr = fp.objective_fr(U, V, H, sigma2, w, g)
        b, k, f = map(int, np.argwhere(U.u)[0])
        for eps in (1e-3, -1e-3):
            pert = g.copy()
            pert[b, k, f] += eps
            assert fp.objective_fr(U, V, H, sigma2, w, pert) <= fr + 1e-12

    def test_y_restores_fr(self):
        for seed in range(10):
            U, V, H, sigma2, w = random_instance(seed)
            g = fp.update_gamma(U, V, H, sigma2)
            y = fp.update_y(U, V, g, H, sigma2, w)
            fr = fp.objective_fr(U, V, H, sigma2, w, g)
            fq = fp.objective_fq(U, V, H, sigma2, w, g, y)
            assert np.isclose(fq, fr, rtol=1e-9)

    def test_y_zero_for_unscheduled(self):
        U, V, H, sigma2, w = random_instance(6)
        g = fp.update_gamma(U, V, H, sigma2)
        y = fp.update_y(U, V, g, H, sigma2, w)
        assert np.all(y[~U.u] == 0.0)

    def test_y_is_local_max_of_fq(self):
        U, V, H, sigma2, w = random_instance(7)
        g = fp.update_gamma(U, V, H, sigma2)
        y = fp.update_y(U, V, g, H, sigma2, w)
        fq = fp.objective_fq(U, V, H, sigma2, w, g, y)
        b, k, f = map(int, np.argwhere(U.u)[0])
        for direction in (1.0, -1.0, 1j, -1j, (1 + 1j) / np.sqrt(2)):
            pert = y.copy()
            pert[b, k, f] += 1e-3 * direction
            assert fp.objective_fq(U, V, H, sigma2, w, g, pert) <= fq + 1e-12

    def test_scalar_ratio_identity(self):
        # closed-form maximization of the quadratic surrogate reproduces
        # each ratio a^2/b exactly, summed over three random ratios
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            b = rng.uniform(0.1, 3.0, size=3)
            y = a.conj() / b
            surrogate = np.sum(2.0 * np.real(np.conj(y) * a.conj()) -
                               np.abs(y) ** 2 * b)
            direct = np.sum(np.abs(a) ** 2 / b)
            assert np.isclose(surrogate, direct, rtol=1e-12, atol=1e-12)


class TestBeamUpdate:
    def test_single_user_matched_direction(self):
        U, V, H, sigma2, w = random_instance(8, B=1, K=1, F=1, M=3,
                                             sigma2_scale=1.0)
        g = fp.update_gamma(U, V, H, sigma2)
        y = fp.update_y(U, V, g, H, sigma2, w)
        Vn, mu = fp.update_v(U, g, y, H, sigma2, w, PT=1e6, mode="joint")
        h = H[0, 0, 0, 0]
        v = Vn.v[0, 0, 0]
        cos = abs(np.vdot(h, v)) / (np.linalg.norm(h) * np.linalg.norm(v))
        # direction preserved up to the documented epsilon regularization
        assert cos > 1.0 - 1e-6
        assert mu[0] == 0.0

    def test_tight_budget_hits_slackness(self):
        U, V, H, sigma2, w = random_instance(9, B=2, K=4, F=2, M=2)
        g = fp.update_gamma(U, V, H, sigma2)
        y = fp.update_y(U, V, g, H, sigma2, w)
        PT = 1e-4
        for mode in ("joint", "perband"):
            Vn, mu = fp.update_v(U, g, y, H, sigma2, w, PT, mode=mode)
            ok, slack = fp.check_power_feasible(Vn, mu, PT, 2, mode)
            assert ok and slack
            assert np.all(np.asarray(mu) > 0)
            pw = Vn.power_per_bs_band()
            if mode == "joint":
                assert np.allclose(pw.sum(axis=1), 2 * PT, rtol=1e-6)
            else:
                assert np.allclose(pw, PT, rtol=1e-6)

    def test_v_step_never_decreases_fq(self):
        for seed in range(100):
            U, V, H, sigma2, w = random_instance(seed, B=2, K=3, F=1, M=2)
            # guarantee only holds from a power-feasible starting point
            PT = float(V.power_per_bs_band().sum(axis=1).max()) * 1.05
            g = fp.update_gamma(U, V, H, sigma2)
            y = fp.update_y(U, V, g, H, sigma2, w)
            before = fp.objective_fq(U, V, H, sigma2, w, g, y)
            Vn, _ = fp.update_v(U, g, y, H, sigma2, w, PT=PT, mode="joint")
            after = fp.objective_fq(U, Vn, H, sigma2, w, g, y)
            assert after >= before - 1e-9 * abs(before)

    def test_weight_scaling_covariance(self):
        U, V, H, sigma2, w = random_instance(10, B=2, K=4, F=2, M=2)
        c = 3.7
        outs = []
        for weights in (w, c * w):
            g = fp.update_gamma(U, V, H, sigma2)
            y = fp.update_y(U, V, g, H, sigma2, weights)
            Vn, _ = fp.update_v(U, g, y, H, sigma2, weights, PT=2.0)
            outs.append(Vn.v)
        assert np.allclose(outs[0], outs[1], atol=1e-8)
        f0a = fp.objective_f0(U, V, H, sigma2, w)
        f0b = fp.objective_f0(U, V, H, sigma2, c * w)
        assert np.isclose(f0b, c * f0a, rtol=1e-12)


class TestInitialize:
    def test_top_m_selection(self):
        U, V, H, sigma2, w = random_instance(12, B=2, K=5, F=1, M=2)
        U0, V0 = fp.initialize(H, sigma2, w, PT=1.0, M=2)
        metric = fp.interference_free_metric(H, sigma2, w, 1.0, 2)
        for b in range(2):
            chosen = np.flatnonzero(U0.u[b, :, 0])
            assert len(chosen) == 2
            worst_chosen = metric[b, chosen, 0].min()
            rest = np.setdiff1d(np.arange(5), chosen)
            assert worst_chosen >= metric[b, rest, 0].max() - 1e-12

    def test_worst_case_flag(self):
        U, V, H, sigma2, w = random_instance(13, B=1, K=5, F=1, M=2)
        best, _ = fp.initialize(H, sigma2, w, 1.0, 2)
        worst, _ = fp.initialize(H, sigma2, w, 1.0, 2, worst_case=True)
        metric = fp.interference_free_metric(H, sigma2, w, 1.0, 2)[0, :, 0]
        assert metric[best.u[0, :, 0]].min() >= metric[worst.u[0, :, 0]].max()

    def test_equal_power_per_beam(self):
        U, V, H, sigma2, w = random_instance(14, B=2, K=5, F=2, M=2)
        U0, V0 = fp.initialize(H, sigma2, w, PT=4.0, M=2)
        power = np.sum(np.abs(V0.v[U0.u]) ** 2, axis=-1)
        assert np.allclose(power, 4.0 / 2, rtol=1e-12)


class TestIterate:
    def test_zero_iterations_noop(self):
        U, V, H, sigma2, w = random_instance(15)
        U2, V2, tr = fp.fp_iterate(U, V, H, sigma2, w, 1.0, 0)
        assert np.array_equal(U2.u, U.u)
        assert np.array_equal(V2.v, V.v)
        assert len(tr.f0) == 1

    def test_monotone_and_improving(self):
        for seed in range(8):
            U, V, H, sigma2, w = random_instance(seed, B=2, K=4, F=1, M=2)
            _, _, tr = fp.fp_iterate(U, V, H, sigma2, w, 1.0, 10,
                                     rel_tol=None, check_power=True)
            f0 = np.asarray(tr.f0)
            assert np.all(np.diff(f0) >= -1e-9 * np.abs(f0[:-1]))
            assert f0[-1] >= f0[0]

    def test_early_stop(self):
        U, V, H, sigma2, w = random_instance(16, B=1, K=3, F=1, M=2)
        _, _, tr = fp.fp_iterate(U, V, H, sigma2, w, 1.0, 200, rel_tol=1e-4)
        assert len(tr.f0) < 201

    def test_trace_rows_schema(self):
        U, V, H, sigma2, w = random_instance(17, B=2, K=3, F=1, M=2)
        _, _, tr = fp.fp_iterate(U, V, H, sigma2, w, 1.0, 2, rel_tol=None)
        rows = tr.rows()
        assert rows[0] == ["iter", "f0", "pow_b0", "pow_b1"]
        assert len(rows) == len(tr.f0) + 1
        assert rows[1][0] == 0


def test_schedule_copy_is_deep():
    U, V, H, sigma2, w = random_instance(18)
    U2 = U.copy()
    U2.u[0, 0, 0] = not U2.u[0, 0, 0]
    assert U2.u[0, 0, 0] != U.u[0, 0, 0]


def test_beam_zero_when_unscheduled():
    U, V, H, sigma2, w = random_instance(19)
    g = fp.update_gamma(U, V, H, sigma2)
    y = fp.update_y(U, V, g, H, sigma2, w)
    Vn, _ = fp.update_v(U, g, y, H, sigma2, w, PT=1.0)
    assert np.all(Vn.v[~U.u] == 0.0)
