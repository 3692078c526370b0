"""RK4 shooting kernels for the radial problem -(t v')' = lam t v.

State is (v, w) with w = t v', advanced with classical RK4 at fixed step.
The batch kernel integrates one trajectory per entry of ``lams`` and returns
endpoint values plus the number of interior sign changes of v (node count).
Compiled with numba when available; a vectorized numpy fallback keeps the
module importable without it.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _rk4_batch_py(lams, a, b, v0, w0, M):
    lam = np.asarray(lams, dtype=float)
    v = np.full(lam.shape, v0)
    w = np.full(lam.shape, w0)
    nodes = np.zeros(lam.shape, dtype=np.int64)
    prev = v.copy()
    h = (b - a) / M
    t = a
    for _ in range(M):
        k1v = w / t
        k1w = -lam * t * v
        t2 = t + 0.5 * h
        v2 = v + 0.5 * h * k1v
        w2 = w + 0.5 * h * k1w
        k2v = w2 / t2
        k2w = -lam * t2 * v2
        v3 = v + 0.5 * h * k2v
        w3 = w + 0.5 * h * k2w
        k3v = w3 / t2
        k3w = -lam * t2 * v3
        t4 = t + h
        v4 = v + h * k3v
        w4 = w + h * k3w
        k4v = w4 / t4
        k4w = -lam * t4 * v4
        v = v + h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
        w = w + h * (k1w + 2 * k2w + 2 * k3w + k4w) / 6.0
        t = t4
        nodes += (v * prev < 0.0).astype(np.int64)
        prev = np.where(v != 0.0, v, prev)
    return v, w, nodes


def _rk4_batch_core(lams, a, b, v0, w0, M):
    n = lams.shape[0]
    vR = np.empty(n)
    wR = np.empty(n)
    nodes = np.zeros(n, np.int64)
    h = (b - a) / M
    for k in range(n):
        lam = lams[k]
        v = v0
        w = w0
        t = a
        prev = v
        for _ in range(M):
            k1v = w / t
            k1w = -lam * t * v
            t2 = t + 0.5 * h
            v2 = v + 0.5 * h * k1v
            w2 = w + 0.5 * h * k1w
            k2v = w2 / t2
            k2w = -lam * t2 * v2
            v3 = v + 0.5 * h * k2v
            w3 = w + 0.5 * h * k2w
            k3v = w3 / t2
            k3w = -lam * t2 * v3
            t4 = t + h
            v4 = v + h * k3v
            w4 = w + h * k3w
            k4v = w4 / t4
            k4w = -lam * t4 * v4
            v = v + h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
            w = w + h * (k1w + 2 * k2w + 2 * k3w + k4w) / 6.0
            t = t4
            if v * prev < 0.0:
                nodes[k] += 1
            if v != 0.0:
                prev = v
        vR[k] = v
        wR[k] = w
    return vR, wR, nodes


def _rk4_trajectory_core(lam, a, b, v0, w0, M):
    ts = np.empty(M + 1)
    vs = np.empty(M + 1)
    ws = np.empty(M + 1)
    ts[0] = a
    vs[0] = v0
    ws[0] = w0
    h = (b - a) / M
    v = v0
    w = w0
    t = a
    for i in range(M):
        k1v = w / t
        k1w = -lam * t * v
        t2 = t + 0.5 * h
        v2 = v + 0.5 * h * k1v
        w2 = w + 0.5 * h * k1w
        k2v = w2 / t2
        k2w = -lam * t2 * v2
        v3 = v + 0.5 * h * k2v
        w3 = w + 0.5 * h * k2w
        k3v = w3 / t2
        k3w = -lam * t2 * v3
        t4 = t + h
        v4 = v + h * k3v
        w4 = w + h * k3w
        k4v = w4 / t4
        k4w = -lam * t4 * v4
        v = v + h * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
        w = w + h * (k1w + 2 * k2w + 2 * k3w + k4w) / 6.0
        t = t4
        ts[i + 1] = t
        vs[i + 1] = v
        ws[i + 1] = w
    return ts, vs, ws


if njit is not None:
    rk4_batch = njit(cache=True)(_rk4_batch_core)
    rk4_trajectory = njit(cache=True)(_rk4_trajectory_core)
else:  # pragma: no cover
    rk4_batch = _rk4_batch_py
    rk4_trajectory = _rk4_trajectory_core
