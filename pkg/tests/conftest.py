"""Shared builders for randomized small-scale test instances."""

import numpy as np
import pytest

from fpbeam import fp


def random_instance(seed, B=2, K=4, F=2, M=2, sigma2_scale=0.05):
    """Random channels, schedule, beams and weights for property tests."""
    rng = np.random.default_rng(seed)
    H = (rng.standard_normal((B, K, B, F, M)) +
         1j * rng.standard_normal((B, K, B, F, M))) / np.sqrt(2.0)
    sigma2 = np.full((B, K, F), sigma2_scale)
    weights = rng.uniform(0.2, 2.0, size=(B, K))
    u = np.zeros((B, K, F), dtype=bool)
    beam_of = np.full((B, K, F), -1, dtype=int)
    V = np.zeros((B, K, F, M), dtype=complex)
    for b in range(B):
        for f in range(F):
            chosen = rng.choice(K, size=min(M, K), replace=False)
            for n, k in enumerate(np.sort(chosen)):
                u[b, k, f] = True
                beam_of[b, k, f] = n
                V[b, k, f, :] = (rng.standard_normal(M) +
                                 1j * rng.standard_normal(M))
    U = fp.Schedule(u=u, beam_of=beam_of)
    return U, fp.BeamformerSet(v=V), H, sigma2, weights


@pytest.fixture
def rng():
    return np.random.default_rng(0)
