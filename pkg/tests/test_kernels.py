"""The streaming scan accumulates two functionals only at extremum record
times; the pure-numpy reference evaluates them directly at every step.
Agreement on random blocks validates the record-segment algebra."""
import numpy as np
import pytest

from pgcsim import _kernels


def _run(kernel, inc, weights, disc, nca, ncb, ct, shift):
    p, k = inc.shape
    u1 = np.empty((p, k), np.float32)
    t_acc = np.zeros(p)
    a_acc = np.zeros(p)
    w = np.empty(p)
    mn = np.empty(p)
    mx = np.empty(p)
    prefix = np.concatenate(([0.0], np.cumsum(weights)))
    kernel(inc, u1, prefix, disc, t_acc, a_acc, w, mn, mx,
           nca, ncb, ct, shift)
    return u1, t_acc, a_acc, w, mn, mx


@pytest.mark.parametrize("shift", [0.0, 0.03])
def test_scan_matches_direct_evaluation(shift):
    rng = np.random.default_rng(17)
    inc = rng.normal(0.0, 0.08, (37, 2003)).astype(np.float32)
    weights = rng.uniform(0.0, 0.01, 2003)
    weights[-1] = 0.0
    disc = np.exp(-0.05 * np.arange(1, 2004) * 0.1)
    args = (inc, weights, disc, -0.857, -0.367, 1.5, shift)
    jit = _run(_kernels.scan_planner_block, *args)
    ref = _run(_kernels._scan_planner_block_np, *args)
    np.testing.assert_allclose(jit[0], ref[0], rtol=0, atol=2e-6)
    for got, want in zip(jit[1:], ref[1:]):
        np.testing.assert_allclose(got, want, rtol=1e-9)


def test_scan_one_sided_paths():
    # monotone rows: one extremum never records, the other records every step
    k = 500
    step = float(np.float32(0.01))
    up = np.full((1, k), step, np.float32)
    weights = np.full(k, 0.002)
    disc = np.ones(k)
    u1, t_acc, a_acc, w, mn, mx = _run(
        _kernels.scan_planner_block, up, weights, disc, -0.7, -0.4, 1.2, 0.0)
    assert t_acc[0] == 0.0 and mn[0] == 0.0
    direct = sum(0.002 * np.exp(-0.7 * step * (j + 1)) for j in range(k))
    np.testing.assert_allclose(a_acc[0], direct, rtol=1e-9)
    down = -up
    u1, t_acc, a_acc, w, mn, mx = _run(
        _kernels.scan_planner_block, down, weights, disc, -0.7, -0.4, 1.2, 0.0)
    assert mx[0] == 0.0
    np.testing.assert_allclose(a_acc[0], weights.sum(), rtol=1e-12)
    sup = np.exp(1.2 * step * np.arange(1, k + 1))
    np.testing.assert_allclose(t_acc[0], np.diff(np.r_[1.0, sup]).sum(),
                               rtol=1e-9)
