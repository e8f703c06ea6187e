"""Radar-detection to optics-pointing geometry.

Chain: a detection box in a radar B-scan gives an azimuth/range relative to
the radar; a spherical-earth forward solution gives the target's lat/lon;
the inverse solution from the optics position gives the optics-relative
azimuth/range; pan, tilt, zoom and the physical target width follow from
the optics geometry. Angles are degrees at every interface and radians
internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0


class GeoError(ValueError):
    """Invalid input to a pointing-geometry stage."""


class StageError(GeoError):
    """A stage of the full pointing chain failed."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class RadarImageSpec:
    width_px: int
    height_px: int
    range_m: float

    def validate(self):
        if self.width_px <= 0 or self.height_px <= 0 or self.range_m <= 0:
            raise GeoError(f"image size and range must be positive: {self}")
        return self


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class LatLon:
    lat: float
    lon: float

    def validate(self):
        if not -90.0 <= self.lat <= 90.0:
            raise GeoError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 < self.lon <= 180.0:
            raise GeoError(f"longitude {self.lon} outside (-180, 180]")
        return self


@dataclass(frozen=True)
class OpticsConfig:
    north_offset_deg: float     # angle between optics zero and north (B)
    height_m: float             # mount height above water (L)
    ccd_m: float                # CCD length (I)
    f_min_m: float              # minimum focal length
    beam_width_deg: float       # radar beam width (b)

    def validate(self):
        if self.height_m <= 0 or self.ccd_m <= 0 or self.f_min_m <= 0:
            raise GeoError(f"optics height, CCD and focal length must be positive: {self}")
        return self


@dataclass(frozen=True)
class RelativePosition:
    azimuth_deg: float          # in [0, 360), 0 = north
    distance_m: float


@dataclass(frozen=True)
class PointingSolution:
    pan_deg: float
    tilt_deg: float
    zoom: float
    intermediates: dict


def _wrap360(a: float) -> float:
    a = math.fmod(a, 360.0)
    return a + 360.0 if a < 0.0 else a


def _wrap_lon(lon: float) -> float:
    while lon > 180.0:
        lon -= 360.0
    while lon <= -180.0:
        lon += 360.0
    return lon


# -- stages ----------------------------------------------------------------------

def box_to_radar_relative(box: BoundingBox, spec: RadarImageSpec) -> RelativePosition:
    """Box center -> azimuth over the image width, range over the height."""
    spec.validate()
    if box.w < 0 or box.h < 0:
        raise GeoError(f"box extent must be non-negative: {box}")
    cx = box.x + box.w / 2.0
    cy = box.y + box.h / 2.0
    if not (0.0 <= cx <= spec.width_px and 0.0 <= cy <= spec.height_px):
        raise GeoError(
            f"box center ({cx}, {cy}) outside image "
            f"{spec.width_px}x{spec.height_px}")
    azimuth = _wrap360(cx / spec.width_px * 360.0)
    dist = (spec.height_px - cy) / spec.height_px * spec.range_m
    dist = min(max(dist, 0.0), spec.range_m)
    return RelativePosition(azimuth, dist)


def forward_position(origin: LatLon, rel: RelativePosition) -> LatLon:
    """Destination point at a bearing and arc distance on a spherical earth."""
    origin.validate()
    if rel.distance_m < 0:
        raise GeoError(f"distance must be non-negative, got {rel.distance_m}")
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    theta = math.radians(rel.azimuth_deg)
    delta = rel.distance_m / EARTH_RADIUS_M
    sin_phi2 = (math.sin(phi1) * math.cos(delta)
                + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    return LatLon(math.degrees(phi2), _wrap_lon(math.degrees(lam2)))


def inverse_position(origin: LatLon, target: LatLon) -> RelativePosition:
    """Initial great-circle bearing and haversine distance origin -> target."""
    origin.validate()
    target.validate()
    phi1 = math.radians(origin.lat)
    phi2 = math.radians(target.lat)
    dphi = math.radians(target.lat - origin.lat)
    dlam = math.radians(target.lon - origin.lon)
    a = (math.sin(dphi / 2.0) ** 2
         + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2)
    dist = 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))
    if dist == 0.0:
        return RelativePosition(0.0, 0.0)
    x = math.sin(dlam) * math.cos(phi2)
    y = (math.cos(phi1) * math.sin(phi2)
         - math.sin(phi1) * math.cos(phi2) * math.cos(dlam))
    return RelativePosition(_wrap360(math.degrees(math.atan2(x, y))), dist)


def pan_tilt(rel: RelativePosition, cfg: OpticsConfig):
    """Pan = azimuth shifted into the optics frame; tilt = arctan(height/range)."""
    cfg.validate()
    if rel.distance_m <= 0:
        raise GeoError("tilt undefined at zero distance")
    pan = _wrap360(rel.azimuth_deg + cfg.north_offset_deg)
    tilt = math.degrees(math.atan(cfg.height_m / rel.distance_m))
    return pan, tilt


def target_width(box: BoundingBox, spec: RadarImageSpec, cfg: OpticsConfig,
                 rel: RelativePosition, mode: str = "tan") -> float:
    """Physical target width from its pixel width and the optics range.

    The subtended angle is alpha = 180*w/X - beam_width (degrees). The "tan"
    mode converts angle to length with 2*D*tan(alpha); the "literal" mode
    reproduces 2*D*arctan(alpha) with alpha fed in as a raw number, kept for
    fidelity audits.
    """
    spec.validate()
    if rel.distance_m <= 0:
        raise GeoError("target width undefined at zero distance")
    alpha = 180.0 * box.w / spec.width_px - cfg.beam_width_deg
    if alpha <= 0:
        raise GeoError(
            f"non-positive angular extent: 180*w/X = {180.0 * box.w / spec.width_px}"
            f" <= beam width {cfg.beam_width_deg}")
    if mode == "tan":
        return 2.0 * rel.distance_m * math.tan(math.radians(alpha))
    if mode == "literal":
        return 2.0 * rel.distance_m * math.atan(alpha)
    raise GeoError(f"unknown width mode {mode!r}")


def zoom(rel: RelativePosition, cfg: OpticsConfig, width_m: float) -> float:
    """Zoom multiplier so the target fills half the image: D*I/(2*W*f_min)."""
    cfg.validate()
    if width_m <= 0:
        raise GeoError(f"target width must be positive, got {width_m}")
    return rel.distance_m * cfg.ccd_m / (2.0 * width_m * cfg.f_min_m)


def solve_pointing(box: BoundingBox, spec: RadarImageSpec, radar_pos: LatLon,
                   optics_pos: LatLon, cfg: OpticsConfig,
                   width_mode: str = "tan") -> PointingSolution:
    """Full chain; every stage's output lands in the intermediates record."""
    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GeoError as exc:
            raise StageError(name, exc) from exc

    rel1 = stage("box_to_radar_relative", box_to_radar_relative, box, spec)
    target = stage("forward_position", forward_position, radar_pos, rel1)
    rel2 = stage("inverse_position", inverse_position, optics_pos, target)
    pan, tilt = stage("pan_tilt", pan_tilt, rel2, cfg)
    width = stage("target_width", target_width, box, spec, cfg, rel2, width_mode)
    z = stage("zoom", zoom, rel2, cfg, width)
    return PointingSolution(pan, tilt, z, intermediates={
        "a1_deg": rel1.azimuth_deg, "d1_m": rel1.distance_m,
        "target_lat": target.lat, "target_lon": target.lon,
        "a2_deg": rel2.azimuth_deg, "d2_m": rel2.distance_m,
        "pan_deg": pan, "tilt_deg": tilt,
        "width_m": width, "zoom": z, "width_mode": width_mode,
    })
