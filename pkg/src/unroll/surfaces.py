"""Analytic surface maps used to lift planar boundaries to framed curves.

A map implements ``lift(pos, vel, acc, side)`` which, given a planar curve
jet, returns the image jet ``(d, d1, d2, n, n1, n2)`` by the chain rule, and
``point``/``normal`` for evaluating the map itself at plane points.  ``side``
breaks ties on piece boundaries of piecewise maps: the branch is the one the
curve enters when moving in direction ``side * vel``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import fresnel

from .geometry_core import cross2, dot


class PlaneMap:
    """Affine map of the reference plane into the plane ``z = 0``.

    With the default identity matrix this is the trivial isometry; a general
    ``matrix`` is used for defect injection and is not isometric.
    """

    def __init__(self, matrix=None, offset=(0.0, 0.0)):
        self.matrix = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
        self.offset = np.asarray(offset, dtype=float)

    def point(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = x @ self.matrix.T + self.offset
        return np.column_stack([y, np.zeros(len(y))])

    def normal(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((len(x), 3))
        out[:, 2] = np.sign(np.linalg.det(self.matrix))
        return out

    def lift(self, pos, vel, acc, side=1):
        z = np.zeros((len(pos), 1))
        d = np.hstack([pos @ self.matrix.T + self.offset, z])
        d1 = np.hstack([vel @ self.matrix.T, z])
        d2 = np.hstack([acc @ self.matrix.T, z])
        n = self.normal(pos)
        zero = np.zeros_like(n)
        return d, d1, d2, n, zero, zero.copy()


class ProfileCylinderMap:
    """Generalized cylinder with generators parallel to the plane's y-axis.

    The cross-section is an arclength curve whose curvature on piece ``i``
    (between consecutive ``breaks``; the outer pieces extend to infinity) is
    ``curvatures[i] + rates[i] * (x - left end)``.  It starts horizontally at
    the origin when ``x = origin``.  Linear curvature pieces are clothoids and
    use Fresnel integrals.  ``axial_scale`` stretches the y-direction; any
    value other than 1 breaks isometry and is only used to inject defects.
    """

    def __init__(self, breaks: Sequence[float], curvatures: Sequence[float], rates: Sequence[float] | None = None,
                 origin: float = 0.0, axial_scale: float = 1.0):
        self.breaks = np.asarray(breaks, dtype=float)
        self.curvatures = np.asarray(curvatures, dtype=float)
        self.rates = np.zeros_like(self.curvatures) if rates is None else np.asarray(rates, dtype=float)
        if len(self.curvatures) != len(self.breaks) + 1 or len(self.rates) != len(self.curvatures):
            raise ValueError("need one curvature and one rate per piece")
        self.axial_scale = float(axial_scale)
        n_pieces = len(self.curvatures)
        # curvature rates are measured from each piece's left break; the first piece uses its right
        # break, or the origin when there is only one piece
        self._left = np.concatenate([[origin if n_pieces == 1 else self.breaks[0]], self.breaks])
        home = int(self._piece(np.array([origin]))[0])
        ref = [None] * n_pieces
        ref[home] = (float(origin), 0.0, np.zeros(2))
        for i in range(home + 1, n_pieces):
            x0, th0, xz0 = ref[i - 1]
            th, xz = self._walk(i - 1, x0, th0, xz0, self.breaks[i - 1])
            ref[i] = (float(self.breaks[i - 1]), float(th), xz)
        for i in range(home - 1, -1, -1):
            x0, th0, xz0 = ref[i + 1]
            th, xz = self._walk(i + 1, x0, th0, xz0, self.breaks[i])
            ref[i] = (float(self.breaks[i]), float(th), xz)
        self._ref_x = np.array([r[0] for r in ref])
        self._ref_th = np.array([r[1] for r in ref])
        self._ref_xz = np.array([r[2] for r in ref])

    def _piece(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breaks, x, side="right")

    def _kappa(self, idx, x):
        return self.curvatures[idx] + self.rates[idx] * (x - self._left[idx])

    def _walk(self, i, x0, th0, xz0, x1):
        k0 = self._kappa(np.array([i]), np.array([x0]))[0]
        th, xz = profile_step(np.array(th0), np.array(xz0), np.array(k0), np.array(self.rates[i]), np.array(x1 - x0))
        return float(th), xz

    def section(self, x, side_dir=None):
        """Profile angle, position, curvature and curvature rate at abscissae ``x``."""
        x = np.asarray(x, dtype=float)
        probe = x
        if side_dir is not None:
            probe = x + 1e-9 * np.sign(side_dir) * (np.abs(side_dir) > 1e-12)
        idx = self._piece(probe)
        x0 = self._ref_x[idx]
        k0 = self._kappa(idx, x0)
        th, xz = profile_step(self._ref_th[idx], self._ref_xz[idx], k0, self.rates[idx], x - x0)
        return th, xz, self._kappa(idx, x), self.rates[idx]

    def point(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xz = self.section(x[:, 0])[1]
        return np.column_stack([xz[:, 0], self.axial_scale * x[:, 1], xz[:, 1]])

    def normal(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        th = self.section(x[:, 0])[0]
        return np.column_stack([-np.sin(th), np.zeros(len(th)), np.cos(th)])

    def lift(self, pos, vel, acc, side=1):
        x, xv, xa = pos[:, 0], vel[:, 0], acc[:, 0]
        th, xz, k, rate = self.section(x, side * xv)
        c, s = np.cos(th), np.sin(th)
        zero = np.zeros_like(x)
        tangent_x = np.column_stack([c, zero, s])        # derivative of the map in x
        nu = np.column_stack([-s, zero, c])
        d = np.column_stack([xz[:, 0], self.axial_scale * pos[:, 1], xz[:, 1]])
        d1 = tangent_x * xv[:, None]
        d1[:, 1] = self.axial_scale * vel[:, 1]
        d2 = tangent_x * xa[:, None] + nu * (k * xv**2)[:, None]
        d2[:, 1] = self.axial_scale * acc[:, 1]
        n1 = -tangent_x * (k * xv)[:, None]
        n2 = -tangent_x * (k * xa + rate * xv**2)[:, None] - nu * (k**2 * xv**2)[:, None]
        return d, d1, d2, nu, n1, n2


def profile_step(th0, xz0, k0, rate, dx):
    """Angle and position after arclength ``dx`` along a plane curve of curvature ``k0 + rate * u``."""
    th0, xz0, k0, rate, dx = (np.asarray(v, dtype=float) for v in (th0, xz0, k0, rate, dx))
    th = th0 + k0 * dx + 0.5 * rate * dx**2
    # constant curvature: arcs and segments
    arc = np.abs(k0) > 0
    ks = np.where(arc, k0, 1.0)
    X = np.where(arc, (np.sin(th0 + k0 * dx) - np.sin(th0)) / ks, np.cos(th0) * dx)
    Z = np.where(arc, -(np.cos(th0 + k0 * dx) - np.cos(th0)) / ks, np.sin(th0) * dx)
    ramp = rate != 0
    if np.any(ramp):
        r = np.where(ramp, rate, 1.0)
        sg = np.sign(r)
        q = np.sqrt(np.abs(r) / np.pi)
        phi0 = th0 - k0**2 / (2 * r)
        w0 = q * k0 / r
        w1 = q * (dx + k0 / r)
        S1, C1 = fresnel(w1)
        S0, C0 = fresnel(w0)
        dC, dS = C1 - C0, S1 - S0
        Xr = (np.cos(phi0) * dC - sg * np.sin(phi0) * dS) / q
        Zr = (np.sin(phi0) * dC + sg * np.cos(phi0) * dS) / q
        X = np.where(ramp, Xr, X)
        Z = np.where(ramp, Zr, Z)
    return th, np.stack([xz0[..., 0] + X, xz0[..., 1] + Z], axis=-1)


class ConeMap:
    """Circular cone of half-angle ``half_angle`` with apex at the plane origin.

    A plane point at polar coordinates ``(r, phi)`` maps to ``r * U(phi)`` with
    ``U = (s cos(phi/s), s sin(phi/s), cos(half_angle))`` and ``s = sin(half_angle)``.
    Polar angles are taken in ``(-pi, pi]``, so regions must avoid the
    negative x-axis.
    """

    def __init__(self, half_angle: float):
        self.half_angle = float(half_angle)
        self.s = np.sin(self.half_angle)
        self.c = np.cos(self.half_angle)

    def _frames(self, phi):
        psi = phi / self.s
        cp, sp = np.cos(psi), np.sin(psi)
        zero = np.zeros_like(phi)
        U = np.column_stack([self.s * cp, self.s * sp, np.full_like(phi, self.c)])
        W = np.column_stack([-sp, cp, zero])
        W1 = np.column_stack([-cp, -sp, zero]) / self.s
        nu = np.column_stack([-self.c * cp, -self.c * sp, np.full_like(phi, self.s)])
        nu1 = np.column_stack([self.c * sp, -self.c * cp, zero]) / self.s
        nu2 = np.column_stack([self.c * cp, self.c * sp, zero]) / self.s**2
        return U, W, W1, nu, nu1, nu2

    def point(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.hypot(x[:, 0], x[:, 1])
        U = self._frames(np.arctan2(x[:, 1], x[:, 0]))[0]
        return U * r[:, None]

    def normal(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._frames(np.arctan2(x[:, 1], x[:, 0]))[3]

    def lift(self, pos, vel, acc, side=1):
        r = np.hypot(pos[:, 0], pos[:, 1])
        phi = np.arctan2(pos[:, 1], pos[:, 0])
        r1 = dot(pos, vel) / r
        r2 = (dot(vel, vel) + dot(pos, acc) - r1**2) / r
        w = cross2(pos, vel)
        phi1 = w / r**2
        phi2 = (cross2(pos, acc) * r**2 - w * 2 * r * r1) / r**4
        U, W, W1, nu, nu1, nu2 = self._frames(phi)
        d = U * r[:, None]
        d1 = U * r1[:, None] + W * (r * phi1)[:, None]
        d2 = (U * r2[:, None] + W * (2 * r1 * phi1 + r * phi2)[:, None]
              + W1 * (r * phi1**2)[:, None])
        n1 = nu1 * phi1[:, None]
        n2 = nu1 * phi2[:, None] + nu2 * (phi1**2)[:, None]
        return d, d1, d2, nu, n1, n2
