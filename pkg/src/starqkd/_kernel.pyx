# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pulse kernel; see ``_kernel_py.process_block`` for the contract."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    TAG_SIGNAL = 1
    TAG_SIGNAL_FLIPPED = 2
    TAG_CROSSTALK = 3
    TAG_DARK = 4


def process_block(const unsigned char[::1] rbits,
                  const double[::1] u_click,
                  const double[::1] u_flip,
                  const double[:, ::1] thresholds,
                  double excess):
    cdef Py_ssize_t n = rbits.shape[0]
    cdef Py_ssize_t i, k = 0
    cdef unsigned char b, sp, rp, d, tg
    cdef double u

    pos_buf = np.empty(n, dtype=np.int64)
    sp_buf = np.empty(n, dtype=np.uint8)
    rp_buf = np.empty(n, dtype=np.uint8)
    tag_buf = np.empty(n, dtype=np.uint8)
    cdef long long[::1] pos = pos_buf
    cdef unsigned char[::1] osp = sp_buf
    cdef unsigned char[::1] orp = rp_buf
    cdef unsigned char[::1] otag = tag_buf

    with nogil:
        for i in range(n):
            b = rbits[i]
            sp = ((b & 1) << 1) | ((b >> 1) & 1)
            rp = (((b >> 3) & 1) << 1) | ((b >> 2) & 1)
            d = (sp - rp) & 3
            u = u_click[i]
            if not (u < thresholds[d, 2]):
                continue
            if u < thresholds[d, 0]:
                tg = TAG_SIGNAL_FLIPPED if u_flip[i] < excess else TAG_SIGNAL
            elif u < thresholds[d, 1]:
                tg = TAG_CROSSTALK
            else:
                tg = TAG_DARK
            pos[k] = i
            osp[k] = sp
            orp[k] = rp
            otag[k] = tg
            k += 1

    return pos_buf[:k].copy(), sp_buf[:k].copy(), rp_buf[:k].copy(), tag_buf[:k].copy()
