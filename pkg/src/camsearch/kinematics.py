"""Forward and inverse kinematics of a 6-DoF elbow manipulator with a spherical wrist.

Joint conventions (all revolute, angles in radians):

* q1 rotates the arm about the vertical base axis.
* q2 tilts the upper arm away from vertical; q3 is the elbow, measured so that
  at q2 = q3 = 0 the upper arm points straight up and the forearm points along +x.
* q4, q5, q6 form the wrist: roll about the forearm, pitch, roll about the
  approach axis.

The forearm carries a vertical offset ``l3`` and a length ``l4`` (the ABB IRB 4600
layout), so the wrist center lies at distance ``hypot(l3, l4)`` from the elbow.
The end-effector frame uses the (n, s, a) convention with ``a`` the approach
axis; at the zero configuration ``a = +x``, ``s = +y`` and ``n = -z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularWristAxis, Unreachable

ARCCOS_SLACK = 1e-12
_WRIST_SINGULAR = 1e-9


@dataclass(frozen=True)
class RobotGeometry:
    """Link lengths in meters. ``extension`` is the mounted object's protrusion
    beyond the flange (camera optical center or tool tip)."""

    l1: float = 0.495
    l2: float = 0.900
    l3: float = 0.175
    l4: float = 0.960
    a1: float = 0.175
    lt: float = 0.135
    extension: float = 0.017

    def __post_init__(self):
        for name in ("l1", "l2", "l3", "l4", "a1", "lt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RobotGeometry.{name} must be > 0")
        if self.extension < 0:
            raise ValueError("RobotGeometry.extension must be >= 0")

    @property
    def forearm(self) -> float:
        return float(np.hypot(self.l3, self.l4))


@dataclass(frozen=True)
class JointLimits:
    """Per-axis closed ranges in degrees, ordered (min, max)."""

    ranges_deg: tuple = (
        (-180.0, 180.0),
        (-90.0, 150.0),
        (-180.0, 75.0),
        (-400.0, 400.0),
        (-125.0, 120.0),
        (-400.0, 400.0),
    )

    def __post_init__(self):
        if len(self.ranges_deg) != 6:
            raise ValueError("JointLimits needs six (min, max) pairs")
        for i, (lo, hi) in enumerate(self.ranges_deg, start=1):
            if not lo < hi:
                raise ValueError(f"JointLimits axis {i}: min must be < max")

    def radians(self) -> np.ndarray:
        return np.radians(np.asarray(self.ranges_deg, dtype=float))


@dataclass(frozen=True)
class Pose:
    d: np.ndarray
    n: np.ndarray
    s: np.ndarray
    a: np.ndarray

    def rotation(self) -> np.ndarray:
        """Rotation matrix whose columns are (a, s, -n)."""
        return np.column_stack([self.a, self.s, -self.n])


@dataclass(frozen=True)
class Orientation:
    n: np.ndarray = field(default_factory=lambda: np.array([-1.0, 0.0, 0.0]))
    s: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    a: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))


# Lens facing the floor, stereo baseline along the x axis of the inertial frame.
CAMERA_DOWN = Orientation()


def wrap_angle(q):
    """Reduce angles to (-pi, pi]."""
    w = np.mod(np.asarray(q, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def _fk_arrays(q: np.ndarray, geom: RobotGeometry):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    c1, s1 = np.cos(q[:, 0]), np.sin(q[:, 0])
    c2, s2 = np.cos(q[:, 1]), np.sin(q[:, 1])
    c23, s23 = np.cos(q[:, 1] + q[:, 2]), np.sin(q[:, 1] + q[:, 2])
    c4, s4 = np.cos(q[:, 3]), np.sin(q[:, 3])
    c5, s5 = np.cos(q[:, 4]), np.sin(q[:, 4])
    c6, s6 = np.cos(q[:, 5]), np.sin(q[:, 5])

    # wrist rotation columns expressed in the forearm frame
    wx = (c5, s4 * s5, -c4 * s5)
    wy = (s5 * s6, c4 * c6 - s4 * c5 * s6, s4 * c6 + c4 * c5 * s6)
    wz = (s5 * c6, -c4 * s6 - s4 * c5 * c6, c4 * c5 * c6 - s4 * s6)

    def to_base(v):
        x = c23 * v[0] + s23 * v[2]
        z = -s23 * v[0] + c23 * v[2]
        return np.stack([c1 * x - s1 * v[1], s1 * x + c1 * v[1], z], axis=-1)

    a = to_base(wx)
    s = to_base(wy)
    n = -to_base(wz)

    reach = geom.a1 + geom.l2 * s2 + geom.l3 * s23 + geom.l4 * c23
    p = np.stack(
        [c1 * reach, s1 * reach, geom.l1 + geom.l2 * c2 + geom.l3 * c23 - geom.l4 * s23],
        axis=-1,
    )
    d = p + geom.lt * a
    return d, n, s, a


def forward_kinematics(q, geom: RobotGeometry) -> Pose:
    """Flange pose for joint vector ``q`` (six angles, radians)."""
    d, n, s, a = _fk_arrays(q, geom)
    return Pose(d=d[0], n=n[0], s=s[0], a=a[0])


def tool_point(pose: Pose, geom: RobotGeometry) -> np.ndarray:
    """Position of the mounted object's reference point (camera center / tool tip)."""
    return pose.d + geom.extension * pose.a


def _ik_arrays(d: np.ndarray, rot: np.ndarray, geom: RobotGeometry):
    """Vectorized inverse kinematics.

    ``d`` has shape (m, 3) and ``rot`` shape (m, 3, 3) with columns (a, s, -n).
    Returns joint angles (m, 6) and a status array: 0 ok, 1 unreachable,
    2 singular base axis.
    """
    a = rot[:, :, 0]
    p = d - geom.lt * a
    status = np.zeros(len(d), dtype=int)

    horiz = np.hypot(p[:, 0], p[:, 1])
    status[horiz < 1e-12] = 2
    q1 = np.arctan2(p[:, 1], p[:, 0])

    r = horiz - geom.a1
    z = p[:, 2] - geom.l1
    w2 = r * r + z * z
    w = np.sqrt(w2)
    forearm = geom.forearm
    offset = np.arctan2(geom.l4, geom.l3)

    with np.errstate(divide="ignore", invalid="ignore"):
        cos_shoulder = (geom.l2**2 + w2 - forearm**2) / (2 * geom.l2 * w)
        cos_elbow = (geom.l2**2 + forearm**2 - w2) / (2 * geom.l2 * forearm)
    bad = ~(np.abs(cos_shoulder) <= 1 + ARCCOS_SLACK) | ~(np.abs(cos_elbow) <= 1 + ARCCOS_SLACK)
    status[(status == 0) & bad] = 1
    cos_shoulder = np.clip(np.nan_to_num(cos_shoulder), -1.0, 1.0)
    cos_elbow = np.clip(np.nan_to_num(cos_elbow), -1.0, 1.0)

    q2 = np.pi / 2 - np.arccos(cos_shoulder) - np.arctan2(z, r)
    q3 = np.pi - np.arccos(cos_elbow) - offset

    c1, s1 = np.cos(q1), np.sin(q1)
    c23, s23 = np.cos(q2 + q3), np.sin(q2 + q3)
    # R03 = Rz(q1) Ry(q23); W = R03^T R
    rz_t = np.zeros((len(d), 3, 3))
    rz_t[:, 0, 0], rz_t[:, 0, 1] = c1, s1
    rz_t[:, 1, 0], rz_t[:, 1, 1] = -s1, c1
    rz_t[:, 2, 2] = 1.0
    ry_t = np.zeros((len(d), 3, 3))
    ry_t[:, 0, 0], ry_t[:, 0, 2] = c23, -s23
    ry_t[:, 1, 1] = 1.0
    ry_t[:, 2, 0], ry_t[:, 2, 2] = s23, c23
    wrist = ry_t @ rz_t @ rot

    s5 = np.hypot(wrist[:, 1, 0], wrist[:, 2, 0])
    q5 = np.arctan2(s5, wrist[:, 0, 0])
    regular = s5 > _WRIST_SINGULAR
    q4 = np.where(regular, np.arctan2(wrist[:, 1, 0], -wrist[:, 2, 0]), 0.0)
    q6 = np.arctan2(wrist[:, 0, 1], wrist[:, 0, 2])
    # q5 at 0 or pi: only q4 + q6 (resp. q6 - q4) is defined; put it all on q6
    flipped = wrist[:, 0, 0] < 0
    m21 = np.where(flipped, -wrist[:, 2, 1], wrist[:, 2, 1])
    q6 = np.where(regular, q6, np.arctan2(m21, wrist[:, 1, 1]))

    q = np.stack([q1, q2, q3, q4, q5, q6], axis=-1)
    return wrap_angle(q), status


def inverse_kinematics(pose: Pose, geom: RobotGeometry) -> np.ndarray:
    """Joint angles placing the flange at ``pose`` (elbow-up branch, q5 in [0, pi])."""
    q, status = _ik_arrays(np.asarray(pose.d, float)[None, :], pose.rotation()[None], geom)
    if status[0] == 2:
        raise SingularWristAxis("wrist center on the base axis; q1 is indeterminate")
    if status[0] == 1:
        raise Unreachable(f"wrist center for d={np.round(pose.d, 6).tolist()} is out of reach")
    return q[0]


def camera_pose(point, geom: RobotGeometry, orientation: Orientation = CAMERA_DOWN) -> Pose:
    """Flange pose that puts the mounted object's reference point at ``point``."""
    a = np.asarray(orientation.a, float)
    return Pose(
        d=np.asarray(point, float) - geom.extension * a,
        n=np.asarray(orientation.n, float),
        s=np.asarray(orientation.s, float),
        a=a,
    )


def ik_points(points, geom: RobotGeometry, orientation: Orientation = CAMERA_DOWN):
    """Batch IK for tool points sharing one orientation.

    Returns ``(q, ok)``; rows of ``q`` where ``ok`` is False are meaningless.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(orientation.a, float)
    rot = np.column_stack([a, orientation.s, -np.asarray(orientation.n, float)])
    d = pts - geom.extension * a
    q, status = _ik_arrays(d, np.broadcast_to(rot, (len(pts), 3, 3)), geom)
    return q, status == 0


def within_joint_limits(q, limits: JointLimits) -> bool:
    bounds = limits.radians()
    q = np.asarray(q, dtype=float)
    return bool(np.all((q >= bounds[:, 0]) & (q <= bounds[:, 1])))


def within_joint_limits_batch(q, limits: JointLimits) -> np.ndarray:
    bounds = limits.radians()
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return np.all((q >= bounds[:, 0]) & (q <= bounds[:, 1]), axis=1)
