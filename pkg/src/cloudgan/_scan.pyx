# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled recurrent directional scan kernels.

Forward recurrence over a (N, C, H, W) feature block for a unit step
direction (dy, dx):

    h[p] = max(0, x[p] + w[c] * h[p - d])      (h == 0 outside the image)

and the matching reverse-order backward pass. Dependencies run strictly along
the scan direction, so rows (or columns, for horizontal directions) are
processed as wavefronts; element order within a wavefront is irrelevant.
"""

cimport cython
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


def scan_forward(floating[:, :, :, ::1] x, floating[::1] w, int dy, int dx,
                 floating[:, :, :, ::1] h):
    """Fill ``h`` with the directional recurrence output. Shapes must match."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t n, c, i, j, y, xx, py, px
    cdef floating wc, acc
    if dy < -1 or dy > 1 or dx < -1 or dx > 1 or (dy == 0 and dx == 0):
        raise ValueError("direction components must be in {-1, 0, 1}, not both zero")
    with nogil:
        for n in range(N):
            for c in range(C):
                wc = w[c]
                if dy != 0:
                    for i in range(H):
                        y = i if dy > 0 else H - 1 - i
                        py = y - dy
                        for xx in range(W):
                            px = xx - dx
                            acc = x[n, c, y, xx]
                            if 0 <= py < H and 0 <= px < W:
                                acc = acc + wc * h[n, c, py, px]
                            h[n, c, y, xx] = acc if acc > 0 else 0
                else:
                    for j in range(W):
                        xx = j if dx > 0 else W - 1 - j
                        px = xx - dx
                        for y in range(H):
                            acc = x[n, c, y, xx]
                            if 0 <= px < W:
                                acc = acc + wc * h[n, c, y, px]
                            h[n, c, y, xx] = acc if acc > 0 else 0


def scan_backward(floating[:, :, :, ::1] h, floating[::1] w,
                  floating[:, :, :, ::1] grad_out, int dy, int dx,
                  floating[:, :, :, ::1] grad_x, double[::1] grad_w):
    """Reverse-order backward pass.

    Writes d(loss)/d(input) into ``grad_x`` and accumulates per-channel gain
    gradients into ``grad_w`` (float64 accumulator). ``h`` is the forward
    output; the ReLU mask is recovered from ``h > 0``.
    """
    cdef Py_ssize_t N = h.shape[0], C = h.shape[1], H = h.shape[2], W = h.shape[3]
    cdef Py_ssize_t n, c, i, j, y, xx, ny, nx, py, px
    cdef floating wc, g
    cdef double acc_w
    with nogil:
        for n in range(N):
            for c in range(C):
                wc = w[c]
                acc_w = 0.0
                if dy != 0:
                    # reverse wavefront order: last scanned row first
                    for i in range(H):
                        y = H - 1 - i if dy > 0 else i
                        ny = y + dy
                        for xx in range(W):
                            nx = xx + dx
                            g = grad_out[n, c, y, xx]
                            if 0 <= ny < H and 0 <= nx < W:
                                g = g + wc * grad_x[n, c, ny, nx]
                            if h[n, c, y, xx] <= 0:
                                g = 0
                            grad_x[n, c, y, xx] = g
                            py = y - dy
                            px = xx - dx
                            if g != 0 and 0 <= py < H and 0 <= px < W:
                                acc_w += <double> g * <double> h[n, c, py, px]
                else:
                    for j in range(W):
                        xx = W - 1 - j if dx > 0 else j
                        nx = xx + dx
                        for y in range(H):
                            g = grad_out[n, c, y, xx]
                            if 0 <= nx < W:
                                g = g + wc * grad_x[n, c, y, nx]
                            if h[n, c, y, xx] <= 0:
                                g = 0
                            grad_x[n, c, y, xx] = g
                            px = xx - dx
                            if g != 0 and 0 <= px < W:
                                acc_w += <double> g * <double> h[n, c, y, px]
                grad_w[c] += acc_w
