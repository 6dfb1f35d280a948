"""Metric backends for doubly periodic planes and spheres.

Each backend answers the few questions mesh assembly needs: displacement
between points (minimal image on the torus), distances, signed triangle
areas, midpoints, and angles used for counter-clockwise sorting.
"""

from __future__ import annotations

import itertools

import numpy as np


class PeriodicPlane:
    """Torus spanned by two lattice vectors ``b1`` and ``b2``."""

    domain = "plane"
    dim = 2

    def __init__(self, b1, b2):
        self.b1 = np.asarray(b1, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)
        self.basis = np.column_stack([self.b1, self.b2])
        self._inv = np.linalg.inv(self.basis)
        self._shifts = np.array(
            [a * self.b1 + b * self.b2 for a, b in itertools.product((-1, 0, 1), repeat=2)]
        )

    @property
    def area(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    def frac(self, x):
        return np.asarray(x, dtype=float) @ self._inv.T

    def wrap(self, x):
        s = self.frac(x)
        return (s - np.floor(s)) @ self.basis.T

    def disp(self, a, b):
        """Shortest periodic image of ``b - a`` (broadcasts over rows)."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        s = self.frac(d)
        d = d - np.round(s) @ self.basis.T
        cand = d[..., None, :] + self._shifts
        k = np.argmin(np.einsum("...ij,...ij->...i", cand, cand), axis=-1)
        return np.take_along_axis(cand, k[..., None, None], axis=-2)[..., 0, :]

    def dist(self, a, b):
        return np.linalg.norm(self.disp(a, b), axis=-1)

    def midpoint(self, a, b):
        return self.wrap(np.asarray(a) + 0.5 * self.disp(a, b))

    def tri_area(self, a, b, c):
        """Signed area, positive for counter-clockwise ``a, b, c``."""
        u = self.disp(a, b)
        v = self.disp(a, c)
        return 0.5 * (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])

    def angle_about(self, center, pts):
        d = self.disp(center, pts)
        return np.arctan2(d[..., 1], d[..., 0])

    def orthogonality_defect(self, p0, p1, q0, q1):
        """Angle (radians) by which segment p0p1 misses being perpendicular to q0q1."""
        u = self.disp(p0, p1)
        v = self.disp(q0, q1)
        c = np.einsum("...i,...i", u, v) / (np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1))
        return np.arcsin(np.clip(np.abs(c), 0.0, 1.0))

    def turn_sign(self, p0, p1, q0, q1):
        """Sign of the z-component of (p1 - p0) x (q1 - q0)."""
        u = self.disp(p0, p1)
        v = self.disp(q0, q1)
        return np.sign(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])


class Sphere:
    """Sphere of the given radius; points are stored as 3-vectors of that length."""

    domain = "sphere"
    dim = 3

    def __init__(self, radius: float):
        self.radius = float(radius)

    @property
    def area(self) -> float:
        return 4.0 * np.pi * self.radius**2

    def unit(self, x):
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def project(self, x):
        return self.radius * self.unit(x)

    def dist(self, a, b):
        a = self.unit(a)
        b = self.unit(b)
        cr = np.linalg.norm(np.cross(a, b), axis=-1)
        return self.radius * np.arctan2(cr, np.einsum("...i,...i", a, b))

    def midpoint(self, a, b):
        return self.project(self.unit(a) + self.unit(b))

    def tri_area(self, a, b, c):
        """Signed spherical-excess area (Van Oosterom & Strackee form)."""
        a = self.unit(a)
        b = self.unit(b)
        c = self.unit(c)
        num = np.einsum("...i,...i", a, np.cross(b, c))
        den = (
            1.0
            + np.einsum("...i,...i", a, b)
            + np.einsum("...i,...i", b, c)
            + np.einsum("...i,...i", c, a)
        )
        return 2.0 * np.arctan2(num, den) * self.radius**2

    def angle_about(self, center, pts):
        n = self.unit(center)
        # any tangent frame will do for sorting
        ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = ref - n * (ref @ n)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        d = self.unit(pts) - n
        return np.arctan2(d @ e2, d @ e1)

    def orthogonality_defect(self, p0, p1, q0, q1):
        """Angle by which great circle p0p1 misses being perpendicular to q0q1."""
        n1 = self.unit(np.cross(p0, p1))
        n2 = self.unit(np.cross(q0, q1))
        return np.arcsin(np.clip(np.abs(np.einsum("...i,...i", n1, n2)), 0.0, 1.0))

    def turn_sign(self, p0, p1, q0, q1):
        u = self.unit(p1) - self.unit(p0)
        v = self.unit(q1) - self.unit(q0)
        up = self.unit(self.unit(p0) + self.unit(p1) + self.unit(q0) + self.unit(q1))
        return np.sign(np.einsum("...i,...i", np.cross(u, v), up))
