"""Synthetic scene simulator: mirror-image multipath tracing.

Scenes are 2-D: an anchor pose plus straight wall segments with per-wall
reflection loss. Paths up to triple bounces are enumerated with the image
method (mirror the anchor across each wall of an ordered wall sequence, then
unfold the reflection points back), keeping only paths whose reflection
points fall strictly inside their walls and whose legs are not blocked by
other walls. Gains follow the same distance model the detector tests
against, so simulated data is self-consistent end to end.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .detector import PathLossModel, path_loss_mean
from .errors import DegenerateGeometry, InvalidPosition
from .geometry import (
    NoiseModel,
    PathMeasurement,
    Pose,
    UeState,
    _as_point,
    mirror_point,
    polyline_measurement,
    wrap_angle,
)

_EPS = 1e-9  # parameter tolerance for segment interiority

KIND_LOS = "los"
KIND_SINGLE = "single_bounce"
KIND_DOUBLE = "double_bounce"
KIND_TRIPLE = "triple_bounce"
_KIND_BY_BOUNCES = {0: KIND_LOS, 1: KIND_SINGLE, 2: KIND_DOUBLE, 3: KIND_TRIPLE}


def dataset_label(kind: str) -> str:
    """Collapse a path kind to its dataset truth label: los/single/multi."""
    if kind == KIND_LOS:
        return "los"
    if kind == KIND_SINGLE:
        return "single"
    return "multi"


def canonical_seconds(t: float) -> float:
    """Fixed point of the seconds -> nanoseconds -> seconds float round trip.

    Values returned here survive serialization as nanoseconds exactly. The
    map x -> (x * 1e9) / 1e9 is weakly monotone, so iteration cannot cycle;
    it converges within a step or two.
    """
    t = float(t)
    for _ in range(8):
        t2 = (t * 1e9) / 1e9
        if t2 == t:
            return t
        t = t2
    return t


@dataclass(frozen=True)
class Wall:
    """Straight reflective segment with a specular loss in dB (both sides)."""

    a: np.ndarray
    b: np.ndarray
    loss_db: float = 0.0

    def __post_init__(self):
        a = _as_point(self.a).copy()
        b = _as_point(self.b).copy()
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "loss_db", float(self.loss_db))
        if self.loss_db < 0.0 or not math.isfinite(self.loss_db):
            raise ValueError("wall loss must be finite and non-negative")

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.a, self.b


@dataclass(frozen=True)
class Scene:
    """Anchor pose plus wall list.

    Raises
    ------
    DegenerateGeometry
        Naming the wall index, if any wall has zero length.
    """

    walls: tuple
    bs: Pose

    def __post_init__(self):
        walls = tuple(self.walls)
        object.__setattr__(self, "walls", walls)
        for k, w in enumerate(walls):
            if float((w.b - w.a) @ (w.b - w.a)) == 0.0:
                raise DegenerateGeometry(f"wall {k} has zero length")


@dataclass(frozen=True)
class TruePath:
    """One traced path with noiseless channel parameters.

    ``incidence_points`` are the reflection points from the anchor side to
    the user side (empty for LoS). ``length_m`` and ``reflection_loss_db``
    are recorded at trace time so gain synthesis needs no scene access.
    """

    kind: str
    incidence_points: tuple
    toa: float
    aod: float
    aoa: float
    gain: float = 1.0
    length_m: float = 0.0
    reflection_loss_db: float = 0.0


@dataclass(frozen=True)
class GroundTruth:
    """Truth attached to a snapshot: state, per-path labels, incidence points.

    ``incidence`` carries the reflection point of single-bounce paths and
    ``None`` elsewhere (LoS and multi-bounce), matching the file format.
    """

    ue: UeState
    labels: tuple
    incidence: tuple

    @property
    def has_los(self) -> bool:
        return "los" in self.labels


@dataclass(frozen=True)
class Snapshot:
    """One channel observation: anchor pose, measured paths, optional truth."""

    id: str
    bs: Pose
    paths: tuple
    truth: Optional[GroundTruth] = None

    def __post_init__(self):
        paths = tuple(self.paths)
        object.__setattr__(self, "paths", paths)
        if not paths:
            raise ValueError("snapshot must contain at least one path")
        if self.truth is not None:
            if len(self.truth.labels) != len(paths) or len(self.truth.incidence) != len(paths):
                raise ValueError("truth arrays must align with paths")


def _crossing_params(p, q, a, b):
    """Parameters (t, u) of the crossing of segments p->q and a->b, or None.

    t is along p->q, u along a->b; parallel segments return None.
    """
    r = (q[0] - p[0], q[1] - p[1])
    s = (b[0] - a[0], b[1] - a[1])
    denom = r[0] * s[1] - r[1] * s[0]
    if denom == 0.0:
        return None
    w = (a[0] - p[0], a[1] - p[1])
    t = (w[0] * s[1] - w[1] * s[0]) / denom
    u = (w[0] * r[1] - w[1] * r[0]) / denom
    return t, u


def _blocked(p, q, walls) -> bool:
    """True if the open segment p->q crosses any wall's interior."""
    for w in walls:
        tu = _crossing_params(p, q, w.a, w.b)
        if tu is None:
            continue
        t, u = tu
        if _EPS < t < 1.0 - _EPS and _EPS < u < 1.0 - _EPS:
            return True
    return False


def _unfold(scene: Scene, seq: tuple[int, ...], ue: UeState):
    """Reflection points of the wall sequence via the image method, or None."""
    walls = scene.walls
    images = [scene.bs.position]
    for wi in seq:
        images.append(mirror_point(images[-1], walls[wi].endpoints))
    points: list[np.ndarray] = [None] * len(seq)
    target = ue.position
    for j in range(len(seq), 0, -1):
        w = walls[seq[j - 1]]
        tu = _crossing_params(images[j], target, w.a, w.b)
        if tu is None:
            return None
        t, u = tu
        if not (_EPS < t < 1.0 - _EPS and _EPS < u < 1.0 - _EPS):
            return None
        points[j - 1] = w.a + u * (w.b - w.a)
        target = points[j - 1]
    chain = [scene.bs.position, *points, ue.position]
    for leg_a, leg_b in zip(chain[:-1], chain[1:]):
        if _blocked(leg_a, leg_b, walls):
            return None
    return points


def trace_paths(scene: Scene, ue: UeState, max_bounces: int = 3) -> list[TruePath]:
    """All propagation paths from the scene's anchor to the user.

    Enumerates the LoS path (if unblocked) and every ordered wall sequence
    up to ``max_bounces`` reflections without immediate wall repeats.
    Results are sorted by increasing delay (stable within ties).
    """
    if not 0 <= max_bounces <= 3:
        raise ValueError("max_bounces must be between 0 and 3")
    entries = []
    if not _blocked(scene.bs.position, ue.position, scene.walls):
        toa, aod, aoa = polyline_measurement(ue, scene.bs, [])
        length = float(np.hypot(*(scene.bs.position - ue.position)))
        entries.append(TruePath(KIND_LOS, (), toa, aod, aoa,
                                length_m=length, reflection_loss_db=0.0))
    wall_ids = range(len(scene.walls))
    for k in range(1, max_bounces + 1):
        for seq in itertools.product(wall_ids, repeat=k):
            if any(seq[i] == seq[i + 1] for i in range(k - 1)):
                continue
            points = _unfold(scene, seq, ue)
            if points is None:
                continue
            toa, aod, aoa = polyline_measurement(ue, scene.bs, points)
            chain = [scene.bs.position, *points, ue.position]
            length = float(sum(np.hypot(*(b - a))
                               for a, b in zip(chain[:-1], chain[1:])))
            loss = float(sum(scene.walls[wi].loss_db for wi in seq))
            frozen_pts = []
            for pt in points:
                pt = pt.copy()
                pt.setflags(write=False)
                frozen_pts.append(pt)
            entries.append(TruePath(_KIND_BY_BOUNCES[k], tuple(frozen_pts),
                                    toa, aod, aoa, length_m=length,
                                    reflection_loss_db=loss))
    return sorted(entries, key=lambda e: e.toa)


def synthesize_gains(paths: Sequence[TruePath], model: PathLossModel = PathLossModel(),
                     per_bounce_extra_db: float = 6.0, rng=None,
                     sigma_db: Optional[float] = None) -> list[TruePath]:
    """Assign linear gains from the distance model minus bounce losses.

    gain_db = mean(length) - total wall loss - per_bounce_extra_db * bounces
    + Gaussian scatter, so a reflected path always carries excess loss over
    the direct-path fit and a correspondingly lower weight in the solvers.
    The scatter scale is ``sigma_db`` if given, else the model's; no scatter
    is drawn when ``rng`` is None (one draw per path otherwise, in path
    order).
    """
    scale = model.sigma_db if sigma_db is None else float(sigma_db)
    out = []
    for p in paths:
        gdb = (path_loss_mean(p.length_m, model) - p.reflection_loss_db
               - per_bounce_extra_db * len(p.incidence_points))
        if rng is not None:
            gdb += scale * rng.standard_normal()
        out.append(replace(p, gain=10.0 ** (gdb / 10.0)))
    return out


def corrupt(paths: Sequence[TruePath], noise: Optional[NoiseModel],
            rng=None) -> list[PathMeasurement]:
    """Measurements from true paths: additive Gaussian noise per component.

    ``noise=None`` copies the true parameters exactly and draws nothing.
    Otherwise three draws per path (toa, aod, aoa order); angles re-wrapped.
    """
    if noise is None:
        return [PathMeasurement(p.toa, p.aod, p.aoa, p.gain) for p in paths]
    if rng is None:
        raise ValueError("rng is required when noise is given")
    out = []
    for p in paths:
        toa = p.toa + noise.sigma_toa * rng.standard_normal()
        aod = wrap_angle(p.aod + noise.sigma_aod * rng.standard_normal())
        aoa = wrap_angle(p.aoa + noise.sigma_aoa * rng.standard_normal())
        out.append(PathMeasurement(toa, aod, aoa, p.gain))
    return out


@dataclass(frozen=True)
class SimConfig:
    """Dataset generation knobs.

    ``noise=None`` produces noiseless measurements. ``gain_sigma_db=None``
    uses the gain model's own scatter. The clock bias is drawn uniformly
    from ``bias_range`` seconds per snapshot.
    """

    max_bounces: int = 3
    noise: Optional[NoiseModel] = field(default_factory=NoiseModel)
    gain_model: PathLossModel = field(default_factory=PathLossModel)
    per_bounce_extra_db: float = 6.0
    gain_sigma_db: Optional[float] = None
    bias_range: tuple = (-100e-9, 100e-9)


def _on_any_wall(p, walls, tol: float = 1e-9) -> bool:
    for w in walls:
        d = w.b - w.a
        dd = float(d @ d)
        t = float((p - w.a) @ d) / dd
        t = min(max(t, 0.0), 1.0)
        foot = w.a + t * d
        if float(np.hypot(*(p - foot))) <= tol:
            return True
    return False


def generate_dataset(scene: Scene, ue_positions, config: SimConfig = SimConfig(),
                     seed: int = 0) -> list[Snapshot]:
    """One truth-annotated snapshot per user position.

    Per snapshot, an independent child stream of ``seed`` draws, in order:
    the clock bias (uniform over ``config.bias_range``), the user heading
    (uniform over (-pi, pi]; positions files carry no heading), one gain
    scatter per path, then the measurement noise. Seed mixing uses
    ``numpy.random.SeedSequence(seed).spawn``, which is stable across runs
    and platforms, so any subset of positions reproduces identically.

    Delays are canonicalized so the nanosecond file round trip is exact.

    Raises
    ------
    InvalidPosition
        Naming the snapshot index, if a position lies on a wall or no path
        reaches it.
    """
    positions = [np.asarray(p, dtype=float) for p in ue_positions]
    children = np.random.SeedSequence(seed).spawn(len(positions))
    snapshots = []
    for k, pos in enumerate(positions):
        if _on_any_wall(pos, scene.walls):
            raise InvalidPosition(f"position {k} lies on a wall")
        rng = np.random.default_rng(children[k])
        bias = canonical_seconds(rng.uniform(*config.bias_range))
        heading = wrap_angle(rng.uniform(-math.pi, math.pi))
        ue = UeState(pos, heading, bias)
        traced = trace_paths(scene, ue, config.max_bounces)
        if not traced:
            raise InvalidPosition(f"no propagation path reaches position {k}")
        traced = synthesize_gains(traced, config.gain_model,
                                  config.per_bounce_extra_db, rng,
                                  config.gain_sigma_db)
        measured = corrupt(traced, config.noise, rng)
        measured = [replace(m, toa=canonical_seconds(m.toa)) for m in measured]
        labels = tuple(dataset_label(t.kind) for t in traced)
        incidence = tuple(t.incidence_points[0] if t.kind == KIND_SINGLE else None
                          for t in traced)
        truth = GroundTruth(ue=ue, labels=labels, incidence=incidence)
        snapshots.append(Snapshot(id=f"pos_{k:03d}", bs=scene.bs,
                                  paths=tuple(measured), truth=truth))
    return snapshots
