"""Hot numeric kernels.

Each kernel has a numba ``@njit`` version and a pure-numpy version. The numba
path is used when numba imports cleanly and ``PSMP_DISABLE_NUMBA`` is unset
(or "0"). Both paths write into the same preallocated arrays and must agree to
rounding.
"""
from __future__ import annotations

import os

import numpy as np

ACTIVE, SLEEP, SWITCHING_ON, SWITCHING_OFF = 0, 1, 2, 3

_disabled = os.environ.get("PSMP_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("numba disabled by PSMP_DISABLE_NUMBA")
    import numba
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def integrate_nodes_numpy(pstate, computing, dt, powers, total, wasted, compute_t, idle_t, sleep_t, switch_t):
    # powers = (p_active, p_sleep, p_switch_on, p_switch_off)
    if dt <= 0.0:
        return
    active = pstate == ACTIVE
    busy = active & computing
    idle = active & ~computing
    sleep = pstate == SLEEP
    son = pstate == SWITCHING_ON
    soff = pstate == SWITCHING_OFF
    p = np.asarray(powers, dtype=np.float64)
    total += (active * p[0] + sleep * p[1] + son * p[2] + soff * p[3]) * dt
    wasted += (idle * p[0] + son * p[2] + soff * p[3]) * dt
    compute_t += busy * dt
    idle_t += idle * dt
    sleep_t += sleep * dt
    switch_t += (son | soff) * dt


def ecdf_exponential_rmse_numpy(gaps_sorted, mean):
    n = gaps_sorted.shape[0]
    # right-continuous ECDF: ties share the count of values <= x
    emp = np.searchsorted(gaps_sorted, gaps_sorted, side="right") / n
    if mean > 0:
        theo = 1.0 - np.exp(-gaps_sorted / mean)
    else:
        theo = np.ones(n)
    err = emp - theo
    return float(np.sqrt(np.mean(err * err))), float(np.mean(emp))


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def integrate_nodes_numba(pstate, computing, dt, powers, total, wasted, compute_t, idle_t, sleep_t, switch_t):
        if dt <= 0.0:
            return
        for m in range(pstate.shape[0]):
            s = pstate[m]
            if s == ACTIVE:
                e = powers[0] * dt
                total[m] += e
                if computing[m]:
                    compute_t[m] += dt
                else:
                    wasted[m] += e
                    idle_t[m] += dt
            elif s == SLEEP:
                total[m] += powers[1] * dt
                sleep_t[m] += dt
            elif s == SWITCHING_ON:
                e = powers[2] * dt
                total[m] += e
                wasted[m] += e
                switch_t[m] += dt
            else:
                e = powers[3] * dt
                total[m] += e
                wasted[m] += e
                switch_t[m] += dt

    @numba.njit(cache=True)
    def _ecdf_rmse_loop(gaps_sorted, mean):
        n = gaps_sorted.shape[0]
        acc = 0.0
        emp_sum = 0.0
        i = 0
        while i < n:
            j = i
            while j + 1 < n and gaps_sorted[j + 1] == gaps_sorted[i]:
                j += 1
            emp = (j + 1) / n
            if mean > 0:
                theo = 1.0 - np.exp(-gaps_sorted[i] / mean)
            else:
                theo = 1.0
            d = emp - theo
            acc += (j - i + 1) * d * d
            emp_sum += (j - i + 1) * emp
            i = j + 1
        return np.sqrt(acc / n), emp_sum / n

    def ecdf_exponential_rmse_numba(gaps_sorted, mean):
        rmse, emp_mean = _ecdf_rmse_loop(gaps_sorted, float(mean))
        return float(rmse), float(emp_mean)

    integrate_nodes = integrate_nodes_numba
    ecdf_exponential_rmse = ecdf_exponential_rmse_numba
else:
    integrate_nodes = integrate_nodes_numpy
    ecdf_exponential_rmse = ecdf_exponential_rmse_numpy

BACKEND = "numba" if HAVE_NUMBA else "numpy"
