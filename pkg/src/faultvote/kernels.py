"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names at the bottom of the module are bound to one flavour at
import time (see :mod:`faultvote._accel`). Both flavours stay importable under
``*_numba`` / ``*_numpy`` for testing and benchmarking.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit, pick

# Relation codes returned by ``archive_scan``.
REL_NONE = 0
REL_NEW_DOMINATES = 1
REL_MEMBER_DOMINATES = 2
REL_SAME_BOX = 3


# --------------------------------------------------------------------------
# squared-exponential covariance
# --------------------------------------------------------------------------

def se_cross_numpy(A, B, amp, w_loc, w_sev):
    dl = A[:, 0:1] - B[:, 0][None, :]
    ds = A[:, 1:2] - B[:, 1][None, :]
    return amp * np.exp(-w_loc * dl * dl - w_sev * ds * ds)


@njit
def se_cross_numba(A, B, amp, w_loc, w_sev):
    na = A.shape[0]
    nb = B.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        al = A[i, 0]
        as_ = A[i, 1]
        for j in range(nb):
            dl = al - B[j, 0]
            ds = as_ - B[j, 1]
            out[i, j] = amp * math.exp(-w_loc * dl * dl - w_sev * ds * ds)
    return out


def se_from_sqdist_numpy(DL, DS, amp, w_loc, w_sev):
    return amp * np.exp(-w_loc * DL - w_sev * DS)


@njit
def se_from_sqdist_numba(DL, DS, amp, w_loc, w_sev):
    n, m = DL.shape
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = amp * math.exp(-w_loc * DL[i, j] - w_sev * DS[i, j])
    return out


# --------------------------------------------------------------------------
# batched GP posterior mean, one query per surface
# --------------------------------------------------------------------------

def stack_mean_numpy(q_loc, q_sev, X_loc, X_sev, coef, w_loc, w_sev):
    dl = X_loc - q_loc[:, None]
    ds = X_sev - q_sev[:, None]
    k = np.exp(-w_loc[:, None] * dl * dl - w_sev[:, None] * ds * ds)
    return np.sum(k * coef, axis=1)


@njit
def stack_mean_numba(q_loc, q_sev, X_loc, X_sev, coef, w_loc, w_sev):
    s, m = X_loc.shape
    out = np.empty(s)
    for r in range(s):
        acc = 0.0
        ql = q_loc[r]
        qs = q_sev[r]
        wl = w_loc[r]
        ws = w_sev[r]
        for i in range(m):
            c = coef[r, i]
            if c == 0.0:
                continue
            dl = X_loc[r, i] - ql
            ds = X_sev[r, i] - qs
            acc += c * math.exp(-wl * dl * dl - ws * ds * ds)
        out[r] = acc
    return out


# --------------------------------------------------------------------------
# archive scans
# --------------------------------------------------------------------------

def archive_scan_numpy(boxes, F, size, new_box, new_f):
    b = boxes[:size]
    f = F[:size]
    box_le_new = np.all(new_box <= b, axis=1)
    box_lt_new = np.any(new_box < b, axis=1)
    mem_le = np.all(b <= new_box, axis=1)
    mem_lt = np.any(b < new_box, axis=1)
    same = np.all(b == new_box, axis=1)
    box_rel = np.zeros(size, dtype=np.int8)
    box_rel[box_le_new & box_lt_new] = REL_NEW_DOMINATES
    box_rel[mem_le & mem_lt] = REL_MEMBER_DOMINATES
    box_rel[same] = REL_SAME_BOX

    f_le_new = np.all(new_f <= f, axis=1)
    f_lt_new = np.any(new_f < f, axis=1)
    m_le = np.all(f <= new_f, axis=1)
    m_lt = np.any(f < new_f, axis=1)
    plain_rel = np.zeros(size, dtype=np.int8)
    plain_rel[f_le_new & f_lt_new] = REL_NEW_DOMINATES
    plain_rel[m_le & m_lt] = REL_MEMBER_DOMINATES
    return box_rel, plain_rel


@njit
def archive_scan_numba(boxes, F, size, new_box, new_f):
    n_obj = new_box.shape[0]
    box_rel = np.zeros(size, dtype=np.int8)
    plain_rel = np.zeros(size, dtype=np.int8)
    for i in range(size):
        new_better = False
        mem_better = False
        for j in range(n_obj):
            if new_box[j] < boxes[i, j]:
                new_better = True
            elif new_box[j] > boxes[i, j]:
                mem_better = True
        if not new_better and not mem_better:
            box_rel[i] = REL_SAME_BOX
        elif new_better and not mem_better:
            box_rel[i] = REL_NEW_DOMINATES
        elif mem_better and not new_better:
            box_rel[i] = REL_MEMBER_DOMINATES

        new_better = False
        mem_better = False
        for j in range(n_obj):
            if new_f[j] < F[i, j]:
                new_better = True
            elif new_f[j] > F[i, j]:
                mem_better = True
        if new_better and not mem_better:
            plain_rel[i] = REL_NEW_DOMINATES
        elif mem_better and not new_better:
            plain_rel[i] = REL_MEMBER_DOMINATES
    return box_rel, plain_rel


def domination_amounts_numpy(F, f_new, ranges):
    gap = np.abs(F - f_new[None, :]) / ranges[None, :]
    gap = np.where(F == f_new[None, :], 1.0, gap)
    return np.prod(gap, axis=1)


@njit
def domination_amounts_numba(F, f_new, ranges):
    k, n_obj = F.shape
    out = np.empty(k)
    for i in range(k):
        p = 1.0
        for j in range(n_obj):
            if F[i, j] != f_new[j]:
                p *= abs(F[i, j] - f_new[j]) / ranges[j]
        out[i] = p
    return out


def pareto_dominates_numpy(a, b):
    return bool(np.all(a <= b) and np.any(a < b))


@njit
def pareto_dominates_numba(a, b):
    strict = False
    for j in range(a.shape[0]):
        if a[j] > b[j]:
            return False
        if a[j] < b[j]:
            strict = True
    return strict


# Ratios within BOX_SNAP below an integer are snapped up so exact powers of
# (1 + eps) land in their own box despite rounding in the logarithms.
BOX_SNAP = 1e-9


def box_index_numpy(f, log_base, f_floor):
    return np.floor(np.log(np.maximum(f, f_floor)) / log_base + BOX_SNAP).astype(np.int64)


@njit
def box_index_numba(f, log_base, f_floor):
    out = np.empty(f.shape[0], dtype=np.int64)
    for j in range(f.shape[0]):
        out[j] = np.int64(math.floor(math.log(max(f[j], f_floor)) / log_base + BOX_SNAP))
    return out


se_cross = pick(se_cross_numba, se_cross_numpy)
se_from_sqdist = pick(se_from_sqdist_numba, se_from_sqdist_numpy)
stack_mean = pick(stack_mean_numba, stack_mean_numpy)
archive_scan = pick(archive_scan_numba, archive_scan_numpy)
domination_amounts = pick(domination_amounts_numba, domination_amounts_numpy)
pareto_dominates = pick(pareto_dominates_numba, pareto_dominates_numpy)
box_index = pick(box_index_numba, box_index_numpy)
