"""
Level Set Geometry Module

This module provides the exact level-set oracle of the test surface. It
supplies, for points in the tubular neighbourhood U_delta of the surface:
- The level set value phi, its gradient and Hessian
- The signed distance d and the closest-point projection p
- The surface frame: unit normal n, tangential projector P and the
  Weingarten map H

The oracle is an abstract interface; the unit sphere is the shipped instance.
All evaluations are vectorized: a single point (3,) or a batch (n, 3).
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurfaceFrame:
    """
    Exact geometric quantities at a batch of tube points.

    Attributes:
        n (np.ndarray): (m, 3) outward unit normals
        P (np.ndarray): (m, 3, 3) tangential projectors I - n n^T
        H (np.ndarray): (m, 3, 3) Weingarten maps (Hessian of d)
        d (np.ndarray): (m,) signed distances
        p (np.ndarray): (m, 3) closest points on the surface
    """
    n: np.ndarray
    P: np.ndarray
    H: np.ndarray
    d: np.ndarray
    p: np.ndarray


def _as_points(x):
    """Return (points (m, 3), was_single) for a point or a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _unbatch(value, single):
    return value[0] if single else value


class LevelSetOracle(ABC):
    """
    Abstract exact level-set description of a closed smooth surface.

    Attributes:
        tube_halfwidth (float): Half width delta of the tube U_delta on which
            all quantities are well defined
    """

    tube_halfwidth = 0.9

    @abstractmethod
    def phi(self, x):
        """Level set value at x."""

    @abstractmethod
    def grad_phi(self, x):
        """Gradient of the level set at x."""

    @abstractmethod
    def hess_phi(self, x):
        """Hessian of the level set at x."""

    @abstractmethod
    def distance(self, x):
        """Signed distance to the surface (negative inside)."""

    @abstractmethod
    def closest_point(self, x):
        """Closest-point projection p(x) onto the surface."""

    @abstractmethod
    def frame_at(self, x):
        """SurfaceFrame (n, P, H, d, p) at x."""

    def in_tube(self, x):
        """Boolean mask of points strictly inside the tube."""
        return np.abs(self.distance(x)) < self.tube_halfwidth

    def check_in_tube(self, x, what="point"):
        """
        Raise if any point lies outside the tube.

        Args:
            x (np.ndarray): Point or batch of points
            what (str): Description used in the error message

        Raises:
            DomainError: If a point is outside U_delta
        """
        inside = np.atleast_1d(self.in_tube(x))
        if not np.all(inside):
            pts, _ = _as_points(x)
            bad = pts[~inside][0]
            raise DomainError(
                f"{what} {bad.tolist()} lies outside the tube "
                f"|d| < {self.tube_halfwidth}"
            )


class SphereLevelSet(LevelSetOracle):
    """
    Sphere of given radius centred at the origin, phi(x) = |x| - R.

    phi is the signed distance function, so |grad phi| = 1 in the tube.

    Args:
        radius (float): Sphere radius, defaults to 1
        tube_halfwidth (float): Tube half width delta, defaults to 0.9
    """

    def __init__(self, radius=1.0, tube_halfwidth=0.9):
        if radius <= 0:
            raise DomainError(f"Sphere radius must be positive, got {radius}")
        if not 0 < tube_halfwidth < radius:
            raise DomainError(
                f"Tube half width must lie in (0, {radius}), "
                f"got {tube_halfwidth}"
            )
        self.radius = float(radius)
        self.tube_halfwidth = float(tube_halfwidth)

    def _norm(self, pts):
        r = np.linalg.norm(pts, axis=1)
        if np.any(r == 0.0):
            raise DomainError(
                "Level set normal is undefined at the origin"
            )
        return r

    def phi(self, x):
        # defined everywhere; only the derived frame is singular at 0
        pts, single = _as_points(x)
        r = np.linalg.norm(pts, axis=1)
        return _unbatch(r - self.radius, single)

    def distance(self, x):
        return self.phi(x)

    def grad_phi(self, x):
        pts, single = _as_points(x)
        r = self._norm(pts)
        return _unbatch(pts / r[:, None], single)

    def hess_phi(self, x):
        pts, single = _as_points(x)
        r = self._norm(pts)
        n = pts / r[:, None]
        P = np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]
        return _unbatch(P / r[:, None, None], single)

    def closest_point(self, x):
        """
        Closest-point projection p(x) = x - d(x) n(x).

        Raises:
            DomainError: If x = 0 or x lies outside the tube
        """
        pts, single = _as_points(x)
        r = self._norm(pts)
        self.check_in_tube(pts)
        return _unbatch(self.radius * pts / r[:, None], single)

    def frame_at(self, x):
        """
        Closed-form frame: n = x/|x|, P = I - n n^T, H = P/|x|, d = |x| - R.

        Raises:
            DomainError: If x = 0 or x lies outside the tube
        """
        pts, single = _as_points(x)
        r = self._norm(pts)
        self.check_in_tube(pts)
        n = pts / r[:, None]
        P = np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]
        frame = SurfaceFrame(
            n=n,
            P=P,
            H=P / r[:, None, None],
            d=r - self.radius,
            p=self.radius * n,
        )
        if single:
            return SurfaceFrame(
                n=frame.n[0], P=frame.P[0], H=frame.H[0],
                d=frame.d[0], p=frame.p[0]
            )
        return frame


def sphere_phi(x):
    """
    Unit-sphere level set phi(x) = |x| - 1.

    Raises:
        DomainError: If x = 0
    """
    oracle = SphereLevelSet()
    pts, single = _as_points(x)
    return _unbatch(oracle._norm(pts) - oracle.radius, single)
