# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled batched closed-loop simulation (hot kernel)."""

import numpy as np


def simulate_batch(dyn, ok, policies, scenarios, int x0, int start=0):
    """Same contract as resilkit._sim.pyref.simulate_batch."""
    cdef const int[:, :, :, ::1] dv = dyn
    cdef const unsigned char[:, :, ::1] okv = ok
    cdef const int[:, :, ::1] pv = policies
    cdef const int[:, ::1] sv = scenarios
    cdef Py_ssize_t S = pv.shape[0]
    cdef Py_ssize_t M = sv.shape[0]
    cdef Py_ssize_t K = dv.shape[0]
    cdef Py_ssize_t L = K - start
    cdef int dead = <int> (dv.shape[1] - 1)

    states = np.empty((S, M, L + 1), dtype=np.int32)
    controls = np.empty((S, M, L), dtype=np.int32)
    cdef int[:, :, ::1] st = states
    cdef int[:, :, ::1] ct = controls

    cdef Py_ssize_t i, j, l, t
    cdef int x, u
    with nogil:
        for i in range(S):
            for j in range(M):
                x = x0
                st[i, j, 0] = x
                for l in range(L):
                    t = start + l
                    u = pv[i, t, x]
                    ct[i, j, l] = u
                    if okv[t, x, u]:
                        x = dv[t, x, u, sv[j, t]]
                    else:
                        x = dead
                    st[i, j, l + 1] = x
    return states, controls
