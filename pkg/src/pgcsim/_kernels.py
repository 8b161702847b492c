"""Low-level streaming kernels for large path ensembles.

Everything here is private plumbing.  The hot loops are JIT-compiled with numba
when it is importable; each kernel has a pure-numpy reference implementation
(suffix ``_np``) used as a fallback and as the oracle in the kernel tests.

Heavy simulations are processed in (path-block x time) tiles of float32 values
with float64 carries, so 5e9-step ensembles stream through a fixed memory
footprint.  Normals are produced by a Box-Muller transform over per-path SFC64
uniform streams: on this class of hardware that is about twice as fast as the
generator's ziggurat sampler and keeps every path reproducible from
(master_seed, path_index) alone.
"""
from __future__ import annotations

import math

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

TWO_PI = 2.0 * math.pi


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """The per-path generator: SFC64 keyed by (master_seed, path_index)."""
    return np.random.Generator(
        np.random.SFC64(np.random.SeedSequence((int(master_seed), int(path_index)))))


def fill_normal_rows(rngs, out, scale=1.0):
    """Fill each row of `out` with N(0, scale^2) variates via Box-Muller.

    rngs: one Generator per row.  The transform consumes exactly
    2*ceil(n/2) uniforms per row regardless of tiling, so draws depend only on
    the row's generator state.
    """
    n_rows, n = out.shape
    half = (n + 1) // 2
    dt2 = np.float32(-2.0 * scale * scale)
    u = np.empty((n_rows, half), np.float32)
    v = np.empty((n_rows, half), np.float32)
    for i in range(n_rows):
        u[i] = rngs[i].random(half, dtype=np.float32)
        v[i] = rngs[i].random(half, dtype=np.float32)
    np.subtract(np.float32(1.0), u, out=u)  # into (0, 1]: log stays finite
    np.log(u, out=u)
    u *= dt2
    np.sqrt(u, out=u)  # radius * scale
    v *= np.float32(TWO_PI)
    c = np.cos(v)
    np.sin(v, out=v)
    c *= u
    v *= u
    out[:, :half] = c
    out[:, half:] = v[:, : n - half]
    return out


def _scan_planner_block_np(inc, U1, wa_prefix, disc, t_acc, a_acc,
                           w_out, mn_out, mx_out, nca, ncb, ct, shift):
    """Reference implementation: direct per-step evaluation of everything the
    fused kernel accumulates via extremum record segments."""
    cs = np.cumsum(inc, axis=1, dtype=np.float64)
    mn = np.minimum.accumulate(np.minimum(cs, 0.0), axis=1)
    mx = np.maximum.accumulate(np.maximum(cs, 0.0), axis=1)
    U1[:] = nca * cs + ncb * (mn - shift)
    wa = np.diff(wa_prefix)
    a_acc += (np.exp(nca * (mx + shift)) * wa).sum(axis=1)
    # the supremum starts at exactly 1; the shift corrects record minima only
    sup = np.maximum.accumulate(
        np.where(mn < 0.0, np.exp(-ct * (mn - shift)), 1.0), axis=1)
    prev = np.concatenate([np.ones((len(sup), 1)), sup[:, :-1]], axis=1)
    t_acc += ((sup - prev) * disc).sum(axis=1)
    w_out[:] = cs[:, -1]
    mn_out[:] = mn[:, -1]
    mx_out[:] = mx[:, -1]


def _killed_running_min_np(inc, kill, k0, w_carry, m_carry):
    P, K = inc.shape
    for p in range(P):
        kmax = min(K, kill[p] - k0)
        if kmax <= 0:
            continue
        w = np.cumsum(inc[p, :kmax], dtype=np.float64) + w_carry[p]
        w_carry[p] = w[-1]
        m_carry[p] = min(m_carry[p], w.min())


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def scan_planner_block(inc, U1, wa_prefix, disc, t_acc, a_acc,
                           w_out, mn_out, mx_out, nca, ncb, ct, shift):
        """One pass over full rows starting at W = 0.

        Writes U1 = nca*W + ncb*(runmin - shift) (exp-argument precursor for
        the per-step consumption functional), and accumulates the two
        functionals that only move at extremum record times: a_acc gets
        sum_k wa[k] * exp(nca*(runmax_k + shift)) via runmax segments and the
        prefix sums wa_prefix of the weights, t_acc gets
        sum_k disc[k] * d(exp(-ct*(runmin_k - shift))) at runmin drops.
        Final W/runmin/runmax land in w_out/mn_out/mx_out (tail terms)."""
        P, K = inc.shape
        for p in range(P):
            w = 0.0
            mn = 0.0
            mx = 0.0
            tp = 1.0
            seg = 0
            cur = math.exp(nca * shift)
            for k in range(K):
                w += inc[p, k]
                if w < mn:
                    mn = w
                    t = math.exp(-ct * (mn - shift))
                    if t > tp:
                        t_acc[p] += disc[k] * (t - tp)
                        tp = t
                if w > mx:
                    a_acc[p] += cur * (wa_prefix[k] - wa_prefix[seg])
                    mx = w
                    seg = k
                    cur = math.exp(nca * (mx + shift))
                U1[p, k] = nca * w + ncb * (mn - shift)
            a_acc[p] += cur * (wa_prefix[K] - wa_prefix[seg])
            w_out[p] = w
            mn_out[p] = mn
            mx_out[p] = mx

    @numba.njit(cache=True)
    def killed_running_min(inc, kill, k0, w_carry, m_carry):
        """Advance per-row cumsum/running-min, row p stopping at global step kill[p]."""
        P, K = inc.shape
        for p in range(P):
            kmax = min(K, kill[p] - k0)
            if kmax <= 0:
                continue
            w = w_carry[p]
            m = m_carry[p]
            for k in range(kmax):
                w += inc[p, k]
                if w < m:
                    m = w
            w_carry[p] = w
            m_carry[p] = m

else:  # pragma: no cover
    scan_planner_block = _scan_planner_block_np
    killed_running_min = _killed_running_min_np
