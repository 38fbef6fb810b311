"""Camera operational space: sphere of dexterous reach intersected with the
stereo-detectability cone over the marker, meshed on a regular grid.

Coordinates are in the visual robot's base frame: origin on the floor below the
base axis, z up, the marker on the +x axis at distance ``l_m``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, EmptyInterval, EmptySpace, NoIntersection, NonPositiveRadius
from .kinematics import CAMERA_DOWN, JointLimits, Orientation, RobotGeometry, ik_points, within_joint_limits_batch

SNAP = 1e-9


@dataclass(frozen=True)
class CameraSpec:
    focal_length_mm: float = 2.8
    baseline_mm: float = 120.0
    alpha_deg: float = 86.05
    beta_deg: float = 55.35
    sensor_width_mm: float = 5.23
    sensor_height_mm: float = 2.94
    resolution_w: int = 1920
    resolution_h: int = 1080
    marker_diameter_mm: float = 12.0
    min_pixel_diameter: float = 5.0

    def __post_init__(self):
        if not (0 < self.alpha_deg < 180 and 0 < self.beta_deg < 180):
            raise ValueError("CameraSpec view angles must lie in (0, 180) degrees")
        if self.baseline_mm <= 0 or self.focal_length_mm <= 0:
            raise ValueError("CameraSpec baseline and focal length must be > 0")


@dataclass(frozen=True)
class SystemLayout:
    """Everything the operational-space geometry depends on (meters, degrees)."""

    r_v: float
    r_t: float
    r_vr: float
    r_tr: float
    l1: float
    a1: float
    l_vt: float
    l_m: float
    alpha_deg: float
    beta_deg: float
    cone_offset: float
    z_detect_max: float

    @property
    def tan_a(self) -> float:
        return math.tan(math.radians(self.alpha_deg) / 2)

    @property
    def tan_b(self) -> float:
        return math.tan(math.radians(self.beta_deg) / 2)

    @property
    def ground_angles(self) -> tuple[float, float]:
        return ground_angles(self.r_v, self.r_t, self.l1)

    @property
    def marker_bounds(self) -> tuple[float, float]:
        return marker_bounds(self.r_v, self.r_t, self.l1, self.a1, self.l_vt, self.alpha_deg, self.cone_offset)

    def check(self) -> None:
        """Raise ValueError naming the first violated placement invariant."""
        if self.l_vt < self.r_vr + self.r_tr - 1e-12:
            raise ValueError(
                f"l_vt={self.l_vt} violates l_vt >= r_vr + r_tr = {self.r_vr + self.r_tr:.6f}"
            )
        low, high = self.marker_bounds
        if not low <= self.l_m < high:
            raise ValueError(f"l_m={self.l_m} outside marker bounds [{low:.6f}, {high:.6f})")


@dataclass(frozen=True)
class Node:
    index: int
    position: np.ndarray


@dataclass(frozen=True)
class OperationalSpace:
    nodes: tuple
    h: float
    layout: SystemLayout

    def __len__(self):
        return len(self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes]).reshape(-1, 3)

    @property
    def indices(self) -> np.ndarray:
        return np.array([n.index for n in self.nodes], dtype=int)


def workspace_radii(geom_visual: RobotGeometry, geom_tool: RobotGeometry,
                    visual_reach_extension: float | None = None):
    """(r_V, r_T, r_Vr, r_Tr): dexterous and reachable radii of both arms.

    The reachable radius of the visual arm may use a different protrusion than
    its dexterous radius; pass it as ``visual_reach_extension``.
    """
    if visual_reach_extension is None:
        visual_reach_extension = geom_visual.extension

    def radii(g, ext_in, ext_out):
        arm = g.l2 + g.forearm
        return arm - g.lt - ext_in, arm + g.lt + ext_out

    r_v, r_vr = radii(geom_visual, geom_visual.extension, visual_reach_extension)
    r_t, r_tr = radii(geom_tool, geom_tool.extension, geom_tool.extension)
    for name, r in (("r_V", r_v), ("r_T", r_t)):
        if r <= 0:
            raise NonPositiveRadius(f"{name}={r:.6f} m: extension exceeds arm reach")
    return r_v, r_t, r_vr, r_tr


def ground_angles(r_v: float, r_t: float, l1: float) -> tuple[float, float]:
    """Elevation angles (degrees) of the floor circle seen from each shoulder."""
    if l1 >= r_v or l1 >= r_t:
        raise DomainError(f"l1={l1} must be below both radii ({r_v}, {r_t})")
    return math.degrees(math.asin(l1 / r_v)), math.degrees(math.asin(l1 / r_t))


def cone_offset(baseline_m: float, alpha_deg: float) -> float:
    """Height of the stereo overlap cone's vertex above the baseline."""
    if not 0 < alpha_deg < 180:
        raise DomainError("alpha must lie in (0, 180) degrees")
    return (baseline_m / 2) / math.tan(math.radians(alpha_deg) / 2)


def max_detect_depth(spec: CameraSpec) -> float:
    """Deepest marker distance (m) at which the marker still spans enough pixels."""
    if min(spec.resolution_w, spec.sensor_width_mm) <= 0:
        raise DomainError("resolution and sensor width must be positive")
    density = spec.resolution_w / spec.sensor_width_mm  # px per mm
    d_h = spec.min_pixel_diameter / density
    return spec.focal_length_mm * spec.marker_diameter_mm / d_h / 1000.0


def marker_bounds(r_v, r_t, l1, a1, l_vt, alpha_deg, d) -> tuple[float, float]:
    """Admissible marker distance interval [low, high)."""
    theta2 = math.radians(ground_angles(r_v, r_t, l1)[1])
    half = math.radians(alpha_deg) / 2
    low = a1 + l_vt - r_t * math.cos(theta2)
    high = r_v / math.cos(half) + (l1 - d) * math.tan(half) + a1
    if low >= high:
        raise EmptyInterval(f"marker bounds empty: low={low:.6f} >= high={high:.6f}")
    return low, high


def build_layout(geom_visual: RobotGeometry, geom_tool: RobotGeometry, camera: CameraSpec, *,
                 l_m: float, l_vt: float, r_v: float | None = None, r_t: float | None = None,
                 visual_reach_extension: float | None = None) -> SystemLayout:
    """Assemble a layout; ``r_v``/``r_t`` override the radii computed from link lengths."""
    rv, rt, rvr, rtr = workspace_radii(geom_visual, geom_tool, visual_reach_extension)
    return SystemLayout(
        r_v=rv if r_v is None else r_v,
        r_t=rt if r_t is None else r_t,
        r_vr=rvr,
        r_tr=rtr,
        l1=geom_visual.l1,
        a1=geom_visual.a1,
        l_vt=l_vt,
        l_m=l_m,
        alpha_deg=camera.alpha_deg,
        beta_deg=camera.beta_deg,
        cone_offset=cone_offset(camera.baseline_mm / 1000.0, camera.alpha_deg),
        z_detect_max=max_detect_depth(camera),
    )


def z_quadratic(layout: SystemLayout) -> tuple[float, float, float]:
    """Coefficients of the height quadratic where the cone's near edge meets the
    sphere in the y = 0 plane."""
    t, d, l1 = layout.tan_a, layout.cone_offset, layout.l1
    k = layout.l_m - layout.a1
    return (
        1 + t * t,
        -2 * (t * k + t * t * d + l1),
        (k + t * d) ** 2 + l1 * l1 - layout.r_v**2,
    )


def z_range(layout: SystemLayout) -> tuple[float, float]:
    a, b, c = z_quadratic(layout)
    disc = b * b - 4 * a * c
    if disc < -1e-12 * b * b:
        raise NoIntersection(f"cone and sphere do not overlap (discriminant {disc:.3e})")
    root = math.sqrt(max(disc, 0.0))
    return (-b - root) / (2 * a), (-b + root) / (2 * a)


def _slice(layout: SystemLayout, z: float):
    """Circle radius squared and ellipse scale at height z."""
    return layout.r_v**2 - (z - layout.l1) ** 2, z - layout.cone_offset


def y_range(z: float, layout: SystemLayout) -> tuple[float, float]:
    """Symmetric y interval of the lens-shaped cross-section at height z."""
    r2, c = _slice(layout, z)
    t, tb, a1, lm = layout.tan_a, layout.tan_b, layout.a1, layout.l_m
    if r2 < -SNAP or c < 0:
        raise EmptyInterval(f"no cross-section at z={z}")
    r2 = max(r2, 0.0)
    ex2, ey2 = (t * c) ** 2, (tb * c) ** 2

    candidates = []
    # circle top (x = a1) inside the ellipse
    if (a1 - lm) ** 2 / max(ex2, 1e-300) + r2 / max(ey2, 1e-300) <= 1 + SNAP:
        candidates.append(math.sqrt(r2))
    # ellipse top (x = lm) inside the circle
    if (lm - a1) ** 2 + ey2 <= r2 + SNAP:
        candidates.append(math.sqrt(ey2))
    # boundary crossings: substitute y^2 from the circle into the ellipse
    coeffs = [
        1 / t**2 - 1 / tb**2,
        -2 * lm / t**2 + 2 * a1 / tb**2,
        lm**2 / t**2 + (r2 - a1**2) / tb**2 - c * c,
    ]
    for x in np.roots(coeffs):
        if abs(x.imag) > 1e-9 * max(1.0, abs(x.real)):
            continue
        y2 = r2 - (x.real - a1) ** 2
        if y2 >= -SNAP:
            candidates.append(math.sqrt(max(y2, 0.0)))
    if not candidates:
        raise EmptyInterval(f"circle and ellipse do not intersect at z={z}")
    y_max = max(candidates)
    return -y_max, y_max


def x_range(z: float, y: float, layout: SystemLayout) -> tuple[float, float]:
    """x interval of the cross-section at (z, y): sphere side on the right, cone side on the left."""
    r2, c = _slice(layout, z)
    t, tb = layout.tan_a, layout.tan_b
    rs2 = r2 - y * y
    rc2 = (t * c) ** 2 - (y * t / tb) ** 2
    if rs2 < -SNAP or rc2 < -SNAP or c < 0:
        raise EmptyInterval(f"no x interval at z={z}, y={y}")
    rs, rc = math.sqrt(max(rs2, 0.0)), math.sqrt(max(rc2, 0.0))
    lo = max(layout.l_m - rc, layout.a1 - rs)
    hi = min(layout.l_m + rc, layout.a1 + rs)
    if lo > hi:
        if lo - hi > SNAP:
            raise EmptyInterval(f"x interval empty at z={z}, y={y}: {lo:.9f} > {hi:.9f}")
        lo = hi = 0.5 * (lo + hi)
    return lo, hi


def contains(p, layout: SystemLayout) -> bool:
    return bool(contains_batch(np.asarray(p, dtype=float)[None, :], layout)[0])


def contains_batch(points, layout: SystemLayout) -> np.ndarray:
    """Sphere and cone membership with a 1e-9 m boundary snap."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    sphere = np.sqrt((x - layout.a1) ** 2 + y**2 + (z - layout.l1) ** 2) <= layout.r_v + SNAP
    ratio = layout.tan_a / layout.tan_b
    c = z - layout.cone_offset
    cone = (c >= -SNAP) & (np.hypot(x - layout.l_m, y * ratio) <= layout.tan_a * c + SNAP)
    return sphere & cone


def _inflated(layout: SystemLayout, margin: float) -> SystemLayout:
    # a superset of the snapped region, used to size the sweep before exact filtering
    return replace(layout, r_v=layout.r_v + margin, cone_offset=layout.cone_offset - margin / layout.tan_a)


def grid_anchor(layout: SystemLayout) -> tuple[float, float, float]:
    """(x0, 0, z0): smallest x in the region and the lower height bound."""
    z_lo, z_hi = z_range(layout)

    def left_edge(z):
        try:
            return x_range(z, 0.0, layout)[0]
        except EmptyInterval:
            return math.inf

    # the left edge is the max of a linear and a convex function of z: convex
    res = minimize_scalar(left_edge, bounds=(z_lo, z_hi), method="bounded", options={"xatol": 1e-12})
    x0 = min(float(res.fun), left_edge(z_lo), left_edge(z_hi))
    return x0, 0.0, z_lo


def _axis(anchor: float, h: float, lo: float, hi: float) -> np.ndarray:
    i0 = math.ceil((lo - anchor) / h) - 1
    i1 = math.floor((hi - anchor) / h) + 1
    vals = anchor + np.arange(i0, i1 + 1) * h
    return vals[(vals >= lo) & (vals <= hi)]


def mesh_ideal_space(layout: SystemLayout, h: float) -> OperationalSpace:
    """Three-level sweep (z, then y, then x) over the grid anchored at grid_anchor()."""
    if not h > 0:
        raise ValueError("grid resolution h must be > 0")
    x0, y0, z0 = grid_anchor(layout)
    wide = _inflated(layout, 1e-7)
    wz_lo, wz_hi = z_range(wide)

    points = []
    for z in _axis(z0, h, wz_lo, wz_hi):
        try:
            y_lo, y_hi = y_range(z, wide)
        except EmptyInterval:
            continue
        for y in _axis(y0, h, y_lo, y_hi):
            try:
                x_lo, x_hi = x_range(z, y, wide)
            except EmptyInterval:
                continue
            for x in _axis(x0, h, x_lo, x_hi):
                points.append((x, y, z))
    pts = np.array(points, dtype=float).reshape(-1, 3)
    pts = pts[contains_batch(pts, layout)] if len(pts) else pts
    if len(pts) == 0:
        raise EmptySpace(f"no grid node fits the operational space at h={h}")
    nodes = tuple(Node(i + 1, p) for i, p in enumerate(pts))
    return OperationalSpace(nodes=nodes, h=h, layout=layout)


def reachable_mask(positions, geom: RobotGeometry, limits: JointLimits,
                   orientation: Orientation = CAMERA_DOWN) -> np.ndarray:
    q, ok = ik_points(positions, geom, orientation)
    return ok & within_joint_limits_batch(q, limits)


def reduce_by_joint_limits(space: OperationalSpace, geom: RobotGeometry, limits: JointLimits,
                           orientation: Orientation = CAMERA_DOWN) -> OperationalSpace:
    """Drop nodes the arm cannot reach at the fixed camera orientation; re-index from 1."""
    if len(space) == 0:
        raise EmptySpace("cannot reduce an empty space")
    keep = reachable_mask(space.positions, geom, limits, orientation)
    kept = space.positions[keep]
    if len(kept) == 0:
        raise EmptySpace("every node violates the joint limits")
    nodes = tuple(Node(i + 1, p) for i, p in enumerate(kept))
    return OperationalSpace(nodes=nodes, h=space.h, layout=space.layout)


def write_mesh_csv(space: OperationalSpace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", "z"])
        for node in space.nodes:
            w.writerow([node.index, *(f"{v:.9g}" for v in node.position)])
