# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Arithmetic mirrors fpe.kernels._numpy tap for tap; keep the two in sync so
backend outputs stay bit-identical.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def gaussian_blur(double[:, ::1] src, double[::1] weights):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t k = weights.shape[0]
    cdef Py_ssize_t r = (k - 1) // 2
    cdef Py_ssize_t i, j, t, c
    cdef double wt

    tmp_arr = np.zeros((h, w), dtype=np.float64)
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[:, ::1] out = out_arr

    # horizontal pass; accumulate taps in ascending order
    for i in range(h):
        for t in range(k):
            wt = weights[t]
            for j in range(w):
                c = j + t - r
                if c < 0:
                    c = 0
                elif c >= w:
                    c = w - 1
                tmp[i, j] += wt * src[i, c]

    # vertical pass
    for i in range(h):
        for t in range(k):
            c = i + t - r
            if c < 0:
                c = 0
            elif c >= h:
                c = h - 1
            wt = weights[t]
            for j in range(w):
                out[i, j] += wt * tmp[c, j]

    return out_arr


def resize_bilinear(const unsigned char[:, :, ::1] pixels, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t h = pixels.shape[0]
    cdef Py_ssize_t w = pixels.shape[1]
    cdef double scale_y = <double>h / <double>out_h
    cdef double scale_x = <double>w / <double>out_w
    cdef Py_ssize_t i, j, ch, y0, y1, x0, x1
    cdef double sy, sx, fy, fx, p00, p01, p10, p11, val

    out_arr = np.empty((out_h, out_w, 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr

    for i in range(out_h):
        sy = (<double>i + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        y0 = <Py_ssize_t>sy
        fy = sy - <double>y0
        y1 = y0 + 1
        if y1 > h - 1:
            y1 = h - 1
        for j in range(out_w):
            sx = (<double>j + 0.5) * scale_x - 0.5
            if sx < 0.0:
                sx = 0.0
            x0 = <Py_ssize_t>sx
            fx = sx - <double>x0
            x1 = x0 + 1
            if x1 > w - 1:
                x1 = w - 1
            for ch in range(3):
                p00 = <double>pixels[y0, x0, ch]
                p01 = <double>pixels[y0, x1, ch]
                p10 = <double>pixels[y1, x0, ch]
                p11 = <double>pixels[y1, x1, ch]
                val = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) \
                    + fy * ((1.0 - fx) * p10 + fx * p11)
                # val is non-negative, so C truncation equals floor(val + 0.5)
                out[i, j, ch] = <unsigned char>(val + 0.5)

    return out_arr


def fill_holes(const unsigned char[:, ::1] bits):
    """Flood the background from the border (4-connectivity); unreached background becomes foreground."""
    cdef Py_ssize_t h = bits.shape[0]
    cdef Py_ssize_t w = bits.shape[1]
    cdef Py_ssize_t i, j, top, cur, r, c

    reached_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] reached = reached_arr
    stack_arr = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = stack_arr

    top = 0
    for j in range(w):
        if bits[0, j] == 0 and reached[0, j] == 0:
            reached[0, j] = 1
            stack[top] = j
            top += 1
        if bits[h - 1, j] == 0 and reached[h - 1, j] == 0:
            reached[h - 1, j] = 1
            stack[top] = (h - 1) * w + j
            top += 1
    for i in range(h):
        if bits[i, 0] == 0 and reached[i, 0] == 0:
            reached[i, 0] = 1
            stack[top] = i * w
            top += 1
        if bits[i, w - 1] == 0 and reached[i, w - 1] == 0:
            reached[i, w - 1] = 1
            stack[top] = i * w + (w - 1)
            top += 1

    while top > 0:
        top -= 1
        cur = stack[top]
        r = cur // w
        c = cur - r * w
        if r > 0 and bits[r - 1, c] == 0 and reached[r - 1, c] == 0:
            reached[r - 1, c] = 1
            stack[top] = cur - w
            top += 1
        if r < h - 1 and bits[r + 1, c] == 0 and reached[r + 1, c] == 0:
            reached[r + 1, c] = 1
            stack[top] = cur + w
            top += 1
        if c > 0 and bits[r, c - 1] == 0 and reached[r, c - 1] == 0:
            reached[r, c - 1] = 1
            stack[top] = cur - 1
            top += 1
        if c < w - 1 and bits[r, c + 1] == 0 and reached[r, c + 1] == 0:
            reached[r, c + 1] = 1
            stack[top] = cur + 1
            top += 1

    out = np.asarray(bits, dtype=np.uint8) | (1 - reached_arr)
    return out.astype(bool)
