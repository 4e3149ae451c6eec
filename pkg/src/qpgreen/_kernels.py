"""Compiled inner loops for the Nystrom assembly.

The quadrature kernels reduce to sums over lattice images of the scalar
monopole e^{ikR}/R and of its gradient factor (1/R - ik) e^{ikR} RVec / R^2,
taken at a planar offset (dx, dy) per image and a vertical separation delta.
``image_sums`` accumulates both, returning the scalar sum and the three
gradient-sum components so that single-layer and the two double-layer flavors
(source-normal and target-normal) can all be assembled from one pass.
"""

import math

import numpy as np
from numba import njit

__all__ = ["image_sums"]


@njit(cache=True, fastmath=True)
def image_sums(P, dx, dy, cw, k, deltas):
    """Phase/window-weighted monopole and gradient sums over lattice images.

    Parameters
    ----------
    P : float64[:]
        Squared planar distances dx^2 + dy^2 per image.
    dx, dy : float64[:]
        Planar offsets per image (target minus source).
    cw : complex128[:]
        Window value times Bloch phase per image.
    k : float
        Wavenumber.
    deltas : float64[:]
        Vertical separations (target z minus source z) at which to evaluate.

    Returns
    -------
    F0, F1x, F1y, F1z : complex128[:]
        For each delta: sum of cw e^{ikR}/R and the components of
        sum of cw e^{ikR} (1/R - ik) (dx, dy, delta) / R^2 * (1/R),
        i.e. 4 pi times the monopole sum and 4 pi times the gradient sum
        with respect to the source point dotted against unit axes.
    """
    nd = deltas.shape[0]
    ni = P.shape[0]
    F0 = np.zeros(nd, np.complex128)
    F1x = np.zeros(nd, np.complex128)
    F1y = np.zeros(nd, np.complex128)
    F1z = np.zeros(nd, np.complex128)
    for t in range(nd):
        d = deltas[t]
        d2 = d * d
        s0 = 0.0 + 0.0j
        sx = 0.0 + 0.0j
        sy = 0.0 + 0.0j
        sz = 0.0 + 0.0j
        for i in range(ni):
            R = math.sqrt(P[i] + d2)
            kR = k * R
            e = cw[i] * complex(math.cos(kR), math.sin(kR)) / R
            s0 += e
            b = e * (1.0 / R - 1j * k) / R
            sx += b * dx[i]
            sy += b * dy[i]
            sz += b * d
        F0[t] = s0
        F1x[t] = sx
        F1y[t] = sy
        F1z[t] = sz
    return F0, F1x, F1y, F1z
