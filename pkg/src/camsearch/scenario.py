"""Scenario files: TOML with unit-suffixed keys, validated into typed settings."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from .actuation import ControlParams, EnergyModel, MotorGearParams
from .errors import ParseError, ValidationError
from .imaging import NoiseField, NoiseTarget, Well
from .kinematics import JointLimits, RobotGeometry
from .search import Environment, SearchConfig
from .workspace import CameraSpec, OperationalSpace, build_layout, mesh_ideal_space, reduce_by_joint_limits

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

REFERENCE = "reference.scenario"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Robot(_Section):
    l1_m: float = Field(0.495, gt=0)
    l2_m: float = Field(0.900, gt=0)
    l3_m: float = Field(0.175, gt=0)
    l4_m: float = Field(0.960, gt=0)
    a1_m: float = Field(0.175, gt=0)
    lt_m: float = Field(0.135, gt=0)
    camera_extension_m: float = Field(0.017, ge=0)
    tool_extension_m: float = Field(0.127, ge=0)
    visual_reach_extension_m: float = Field(0.033, ge=0)

    def geometry(self, extension: float) -> RobotGeometry:
        return RobotGeometry(self.l1_m, self.l2_m, self.l3_m, self.l4_m, self.a1_m, self.lt_m, extension)


class Limits(_Section):
    q1_deg: tuple[float, float] = (-180.0, 180.0)
    q2_deg: tuple[float, float] = (-90.0, 150.0)
    q3_deg: tuple[float, float] = (-180.0, 75.0)
    q4_deg: tuple[float, float] = (-400.0, 400.0)
    q5_deg: tuple[float, float] = (-125.0, 120.0)
    q6_deg: tuple[float, float] = (-400.0, 400.0)

    @model_validator(mode="after")
    def _ordered(self):
        for name in type(self).model_fields:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered (min, max)")
        return self

    def limits(self) -> JointLimits:
        return JointLimits(tuple(getattr(self, f"q{i}_deg") for i in range(1, 7)))


class Camera(_Section):
    focal_length_mm: float = Field(2.8, gt=0)
    baseline_mm: float = Field(120.0, gt=0)
    alpha_deg: float = Field(86.05, gt=0, lt=180)
    beta_deg: float = Field(55.35, gt=0, lt=180)
    sensor_width_mm: float = Field(5.23, gt=0)
    sensor_height_mm: float = Field(2.94, gt=0)
    resolution_px: tuple[int, int] = (1920, 1080)
    marker_diameter_mm: float = Field(12.0, gt=0)
    min_marker_px: float = Field(5.0, gt=0)

    def spec(self) -> CameraSpec:
        return CameraSpec(self.focal_length_mm, self.baseline_mm, self.alpha_deg, self.beta_deg,
                          self.sensor_width_mm, self.sensor_height_mm, *self.resolution_px,
                          self.marker_diameter_mm, self.min_marker_px)


class Motor(_Section):
    r_ohm: float = Field(0.03, gt=0)
    l_h: float = Field(1e-4, gt=0)
    kb_mv_per_rpm: float = Field(7.0, gt=0)
    km_nm_per_a: float = Field(0.0674, gt=0)
    ja_kgm2: float = Field(0.09847, gt=0)
    jg_kgm2: float = Field(0.05, gt=0)
    gear_ratio: float = Field(200.0, gt=0)
    bm_nms_per_rad: float = Field(0.06, gt=0)

    def params(self) -> MotorGearParams:
        return MotorGearParams(self.r_ohm, self.l_h, self.kb_mv_per_rpm, self.km_nm_per_a,
                               self.ja_kgm2, self.jg_kgm2, self.gear_ratio, self.bm_nms_per_rad)


class Control(_Section):
    tau_in_s: float = Field(0.009, gt=0)
    tau_delay_s: float = Field(0.0, ge=0)

    def params(self, tau_delay: float | None = None) -> ControlParams:
        return ControlParams(self.tau_in_s, self.tau_delay_s if tau_delay is None else tau_delay)


class Layout(_Section):
    l_m_m: float = Field(2.83, gt=0)
    l_vt_m: float = Field(4.182, gt=0)
    r_v_m: float | None = Field(1.716, gt=0)
    r_t_m: float | None = Field(1.606, gt=0)


class Mesh(_Section):
    h_m: float = Field(0.05, gt=0)


class WellSpec(_Section):
    """A noise well centred either at explicit coordinates or on a reduced-mesh node."""

    center_m: tuple[float, float, float] | None = None
    node: int | None = Field(None, ge=1)
    depth: float = Field(ge=0)
    width_m: float = Field(gt=0)

    @model_validator(mode="after")
    def _one_center(self):
        if (self.center_m is None) == (self.node is None):
            raise ValueError("give exactly one of center_m or node")
        return self


class Noise(_Section):
    sigma_base: float = Field(0.12, gt=0)
    sigma_floor: float = Field(1e-3, gt=0)
    wells: tuple[WellSpec, ...] = ()

    @model_validator(mode="after")
    def _depths(self):
        if self.wells and sum(w.depth for w in self.wells) >= self.sigma_base - self.sigma_floor:
            raise ValueError("well depth sum must stay below sigma_base - sigma_floor")
        return self

    def field(self, positions=None) -> NoiseField:
        wells = []
        for w in self.wells:
            if w.node is None:
                center = w.center_m
            else:
                if positions is None or w.node > len(positions):
                    raise ValidationError(f"noise.wells: node {w.node} is not in the reduced mesh")
                center = tuple(float(v) for v in positions[w.node - 1])
            wells.append(Well(center, w.depth, w.width_m))
        return NoiseField(self.sigma_base, tuple(wells), self.sigma_floor)


class Target(_Section):
    sigma_reduced: float = Field(0.01, gt=0)


class Imaging(_Section):
    frame_px: int = Field(128, ge=3)
    scene_rects: int = Field(6, ge=0)


class Search(_Section):
    k_est: float = Field(5.0, ge=0)
    k_sd_per_m: float = Field(50.0, ge=0)
    e_bound0_ws: float = Field(12.0, gt=0)
    e_threshold_ws: float = Field(2.0, ge=0)
    seed: int = 1
    max_iterations: int = Field(1000, ge=1)


class Sensitivity(_Section):
    """Sweep settings; the parameter not being swept is held at its fixed value."""

    e_bound0_ws: float = Field(20.0, gt=0)
    e_threshold_ws: float = Field(2.0, ge=0)
    seeds: int = Field(20, ge=1)
    k_est_fixed: float = Field(50.0, ge=0)
    k_sd_fixed_per_m: float = Field(50.0, ge=0)
    values: tuple[float, ...] = (1.0, 5.0, 10.0, 30.0, 50.0, 70.0, 90.0)


class EnergyTable(_Section):
    p_initial_m: tuple[float, float, float] = (-0.30, 0.05, 1.20)
    p_final_m: tuple[float, float, float] = (-0.45, 0.45, 1.20)
    tau_delays_s: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

    @field_validator("tau_delays_s")
    @classmethod
    def _delays(cls, v):
        if any(d < 0 for d in v):
            raise ValueError("tau delays must be >= 0")
        return v


class Bench(_Section):
    frame_px: int = Field(256, ge=8)
    snr_db: float = 5.0
    scene_rects: int = Field(200, ge=0)
    rect_px: tuple[int, int] = (2, 16)
    frame_counts: tuple[int, ...] = (1, 4, 100, 1000)
    repetitions: int = Field(1, ge=1)
    filter_size_px: int = Field(5, ge=3)
    filter_sigma_px: float = Field(1.0, gt=0)

    @field_validator("frame_counts")
    @classmethod
    def _counts(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("frame counts must be >= 1")
        return v


class Scenario(_Section):
    robot: Robot = Robot()
    joint_limits: Limits = Limits()
    camera: Camera = Camera()
    motor: Motor = Motor()
    control: Control = Control()
    layout: Layout = Layout()
    mesh: Mesh = Mesh()
    noise: Noise = Noise()
    target: Target = Target()
    imaging: Imaging = Imaging()
    search: Search = Search()
    sensitivity: Sensitivity = Sensitivity()
    energy_table: EnergyTable = EnergyTable()
    bench: Bench = Bench()

    def search_config(self, **overrides) -> SearchConfig:
        s = self.search
        kw = dict(k_est=s.k_est, k_sd=s.k_sd_per_m, e_bound0=s.e_bound0_ws,
                  e_threshold=s.e_threshold_ws, seed=s.seed, max_iterations=s.max_iterations)
        kw.update(overrides)
        return SearchConfig(**kw)


def _position(text: str, exc: tomllib.TOMLDecodeError) -> str:
    # tomli reports "(at line L, column C)"; recompute so the message never depends on its wording
    pos = getattr(exc, "pos", None)
    if pos is None:
        return str(exc)
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return f"line {line}, column {col}: {getattr(exc, 'msg', exc)}"


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {_position(text, exc)}") from exc
    try:
        return Scenario.model_validate(raw)
    except PydanticValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
        )
        raise ValidationError(f"{source}: {problems}") from exc


def load_scenario(path=None) -> Scenario:
    """Load a scenario file; ``None`` loads the bundled reference scenario."""
    if path is None:
        text = resources.files("camsearch.data").joinpath(REFERENCE).read_text(encoding="utf-8")
        return parse_scenario(text, REFERENCE)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    return parse_scenario(text, str(path))


@dataclass
class World:
    """Everything a scenario implies, built lazily."""

    scenario: Scenario

    @cached_property
    def geom_visual(self) -> RobotGeometry:
        return self.scenario.robot.geometry(self.scenario.robot.camera_extension_m)

    @cached_property
    def geom_tool(self) -> RobotGeometry:
        return self.scenario.robot.geometry(self.scenario.robot.tool_extension_m)

    @cached_property
    def layout(self):
        s = self.scenario
        return build_layout(self.geom_visual, self.geom_tool, s.camera.spec(), l_m=s.layout.l_m_m,
                            l_vt=s.layout.l_vt_m, r_v=s.layout.r_v_m, r_t=s.layout.r_t_m,
                            visual_reach_extension=s.robot.visual_reach_extension_m)

    @cached_property
    def ideal_space(self) -> OperationalSpace:
        return mesh_ideal_space(self.layout, self.scenario.mesh.h_m)

    @cached_property
    def space(self) -> OperationalSpace:
        return reduce_by_joint_limits(self.ideal_space, self.geom_visual, self.scenario.joint_limits.limits())

    @cached_property
    def energy(self) -> EnergyModel:
        s = self.scenario
        return EnergyModel(self.space.positions, self.geom_visual, s.motor.params(), s.control.params())

    @cached_property
    def environment(self) -> Environment:
        s = self.scenario
        return Environment(s.noise.field(self.space.positions), NoiseTarget(s.target.sigma_reduced),
                           s.imaging.frame_px, s.imaging.scene_rects)
