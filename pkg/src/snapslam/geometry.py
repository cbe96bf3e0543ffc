"""Planar geometry of single-anchor multipath radio channels.

Conventions used throughout the package:

* World coordinates are 2-D, in meters. Orientations are counterclockwise
  angles in radians, wrapped to the half-open interval (-pi, pi].
* A transmitting anchor (base station) and a receiving user each have a pose
  (position + heading). Departure angles are measured in the anchor's local
  frame, arrival angles in the user's local frame.
* Propagation delays are in seconds everywhere inside the library; file
  formats use nanoseconds (see :mod:`snapslam.dataio`).
* A path is either line-of-sight or a chain of specular reflections. The
  single-bounce case, where the reflection point acts as a point landmark,
  is the one the estimator can invert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, NearParallel

SPEED_OF_LIGHT = 299792458.0
"""Exact SI speed of light, m/s."""

TWO_PI = 2.0 * math.pi


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to the interval (-pi, pi].

    Values already inside the interval are returned bit-for-bit unchanged,
    which keeps repeated wrapping idempotent at the float level.

    Example
    -------
    >>> wrap_angle(3 * math.pi / 2)
    -1.5707963267948966
    """
    a = np.asarray(angle, dtype=float)
    inside = (a > -math.pi) & (a <= math.pi)
    wrapped = math.pi - np.mod(math.pi - a, TWO_PI)
    out = np.where(inside, a, wrapped)
    if out.ndim == 0:
        return float(out)
    return out


def _as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2-D point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def _frozen_point(p) -> np.ndarray:
    arr = _as_point(p).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    """Position (m) and heading (rad, wrapped to (-pi, pi]) of an antenna."""

    position: np.ndarray
    orientation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_point(self.position))
        if not math.isfinite(self.orientation):
            raise ValueError("orientation must be finite")
        object.__setattr__(self, "orientation", wrap_angle(float(self.orientation)))


@dataclass(frozen=True)
class UeState:
    """User state: position (m), heading (rad), receiver clock bias (s).

    The clock bias is additive on every measured delay: a path of geometric
    length L is observed at L / c + clock_bias seconds.
    """

    position: np.ndarray
    orientation: float = 0.0
    clock_bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_point(self.position))
        if not (math.isfinite(self.orientation) and math.isfinite(self.clock_bias)):
            raise ValueError("orientation and clock_bias must be finite")
        object.__setattr__(self, "orientation", wrap_angle(float(self.orientation)))
        object.__setattr__(self, "clock_bias", float(self.clock_bias))

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.orientation)


@dataclass(frozen=True)
class PathMeasurement:
    """One resolved propagation path.

    Attributes
    ----------
    toa : float
        Biased time of arrival in seconds (geometric delay + receiver clock bias).
    aod : float
        Angle of departure in the anchor frame, radians in (-pi, pi].
    aoa : float
        Angle of arrival in the user frame, radians in (-pi, pi].
    gain : float
        Dimensionless linear path power; used as the weight of this path in
        the estimator objective. Strictly positive.
    """

    toa: float
    aod: float
    aoa: float
    gain: float = 1.0

    def __post_init__(self):
        for name in ("toa", "aod", "aoa", "gain"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gain <= 0.0:
            raise ValueError("gain must be strictly positive")
        object.__setattr__(self, "toa", float(self.toa))
        object.__setattr__(self, "aod", wrap_angle(float(self.aod)))
        object.__setattr__(self, "aoa", wrap_angle(float(self.aoa)))
        object.__setattr__(self, "gain", float(self.gain))


@dataclass(frozen=True)
class NoiseModel:
    """Per-component measurement noise, diagonal covariance.

    Defaults: 1 ns delay noise, 1 degree on each angle.
    """

    sigma_toa: float = 1e-9
    sigma_aod: float = math.radians(1.0)
    sigma_aoa: float = math.radians(1.0)

    def __post_init__(self):
        for name in ("sigma_toa", "sigma_aod", "sigma_aoa"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and strictly positive")

    @property
    def sigmas(self) -> np.ndarray:
        """Component standard deviations as a length-3 vector (toa, aod, aoa)."""
        return np.array([self.sigma_toa, self.sigma_aod, self.sigma_aoa])


def rotation(alpha: float) -> np.ndarray:
    """2x2 counterclockwise rotation matrix for angle ``alpha`` (radians)."""
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s], [s, c]])


def unit_vectors(aod: float, aoa: float, alpha_bs: float, alpha_ue: float):
    """World-frame unit vectors of the departure and arrival rays.

    Parameters
    ----------
    aod, aoa : float
        Local-frame departure and arrival angles of one path.
    alpha_bs, alpha_ue : float
        Anchor and user headings.

    Returns
    -------
    (u, v) : tuple of ndarray
        ``u`` points from the anchor toward the path's first interaction
        (the landmark, or the user itself for line of sight); ``v`` points
        from the user toward the last interaction (landmark or anchor).
        For a line-of-sight path v = -u.
    """
    a = alpha_bs + aod
    b = alpha_ue + aoa
    u = np.array([math.cos(a), math.sin(a)])
    v = np.array([math.cos(b), math.sin(b)])
    return u, v


def polyline_measurement(ue: UeState, bs: Pose, points) -> tuple[float, float, float]:
    """Noiseless (toa, aod, aoa) of a path reflecting at ``points`` in order.

    ``points`` is the (possibly empty) sequence of reflection points from the
    anchor side to the user side; an empty sequence is the line-of-sight path.
    The returned delay includes the user clock bias.

    Raises
    ------
    DegenerateGeometry
        If any two consecutive chain points coincide.
    """
    chain = [bs.position, *[_as_point(p) for p in points], ue.position]
    length = 0.0
    for a, b in zip(chain[:-1], chain[1:]):
        seg = float(np.hypot(b[0] - a[0], b[1] - a[1]))
        if seg == 0.0:
            raise DegenerateGeometry("coincident consecutive points on path")
        length += seg
    first = chain[1] - chain[0]
    last = chain[-2] - chain[-1]
    toa = length / SPEED_OF_LIGHT + ue.clock_bias
    aod = wrap_angle(math.atan2(first[1], first[0]) - bs.orientation)
    aoa = wrap_angle(math.atan2(last[1], last[0]) - ue.orientation)
    return toa, aod, aoa


def measurement_model(ue: UeState, bs: Pose, landmark=None) -> tuple[float, float, float]:
    """Noiseless channel parameters of a LoS or single-bounce path.

    Parameters
    ----------
    ue : UeState
        User position, heading and clock bias.
    bs : Pose
        Anchor pose.
    landmark : array-like of shape (2,), optional
        Reflection point for a single-bounce path; ``None`` for line of sight.

    Returns
    -------
    (toa, aod, aoa) : tuple of float
        Biased delay in seconds and the two local-frame angles in (-pi, pi].

    Example
    -------
    Anchor at the origin facing +x, user 10 m away facing back at it:

    >>> toa, aod, aoa = measurement_model(UeState([10.0, 0.0], math.pi), Pose([0.0, 0.0]))
    >>> (round(toa * SPEED_OF_LIGHT, 9), aod, aoa)
    (10.0, 0.0, 0.0)
    """
    pts = [] if landmark is None else [landmark]
    return polyline_measurement(ue, bs, pts)


def mirror_point(p, wall) -> np.ndarray:
    """Reflect point ``p`` across the infinite line through a wall segment.

    ``wall`` is anything indexable as two endpoints ((x1, y1), (x2, y2)).

    Raises
    ------
    DegenerateGeometry
        If the wall has zero length.
    """
    p = _as_point(p)
    a = _as_point(wall[0])
    b = _as_point(wall[1])
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        raise DegenerateGeometry("zero-length wall")
    t = float((p - a) @ d) / dd
    foot = a + t * d
    return 2.0 * foot - p


def bounce_fraction(ue: UeState, path: PathMeasurement, bs: Pose, t_nu: float = 0.1) -> float:
    """Fraction of a path's length spent on the anchor-side leg.

    For a single-bounce path consistent with the state, the reflection point
    sits at ``bs.position + gamma * d * u`` where d = c (toa - clock_bias) is
    the total geometric length; gamma in [0, 1] for physical geometry, with
    gamma = 1 the line-of-sight convention.

    Raises
    ------
    NearParallel
        If the departure and arrival rays are close to anti-parallel
        (``||u + v||^2 <= t_nu``), where the fraction is undefined.
    """
    u, v = unit_vectors(path.aod, path.aoa, bs.orientation, ue.orientation)
    nu = u + v
    s = float(nu @ nu)
    if s <= t_nu:
        raise NearParallel(f"||u + v||^2 = {s:.3g} <= {t_nu:.3g}")
    d = SPEED_OF_LIGHT * (path.toa - ue.clock_bias)
    if d == 0.0:
        raise DegenerateGeometry("zero path length")
    r = (ue.position - bs.position) + d * v
    return float(nu @ r) / (d * s)


def nominal_bounce_point(ue: UeState, path: PathMeasurement, bs: Pose,
                         fraction: float = 0.5) -> np.ndarray:
    """Point at a given fraction along the departure ray, for rendering paths.

    Places ``bs.position + fraction * d * u``. With ``fraction=0.5`` this is
    the midpoint convention used to draw paths whose bounce geometry is not
    identifiable (outliers).
    """
    u, _ = unit_vectors(path.aod, path.aoa, bs.orientation, ue.orientation)
    d = SPEED_OF_LIGHT * (path.toa - ue.clock_bias)
    return bs.position + fraction * d * u
