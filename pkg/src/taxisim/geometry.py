"""Geographic primitives: lat/lon points, local projection, GeoJSON input.

The projection is a local equirectangular one anchored at the center of the
map's bounding box: x = R * dlon * cos(lat0), y = R * dlat, with R = 6371 km.
It is invertible anywhere cos(lat0) stays well away from zero, which is all
we need at city scale.
"""

from __future__ import annotations

import json
import logging
import math
from typing import NamedTuple

from .errors import MapBoundsError

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

# cos(lat0) below this makes x unrecoverable in practice
_MIN_COS_LAT = 1e-6


class GeoPoint(NamedTuple):
    lat: float  # degrees, [-90, 90]
    lon: float  # degrees, [-180, 180]


class ProjectedPoint(NamedTuple):
    x: float  # km east of the anchor
    y: float  # km north of the anchor


def validate_geopoint(p: GeoPoint) -> GeoPoint:
    if not (-90.0 <= p.lat <= 90.0) or not (-180.0 <= p.lon <= 180.0):
        raise MapBoundsError(f"coordinate out of range: lat={p.lat}, lon={p.lon}")
    return p


class LocalProjection:
    """Equirectangular projection anchored at a reference lat/lon."""

    def __init__(self, lat0: float, lon0: float):
        cos0 = math.cos(math.radians(lat0))
        if cos0 < _MIN_COS_LAT:
            raise MapBoundsError(f"projection anchor too close to a pole: lat0={lat0}")
        self.lat0 = lat0
        self.lon0 = lon0
        self._cos0 = cos0

    @classmethod
    def for_points(cls, points: list[GeoPoint]) -> "LocalProjection":
        """Anchor at the center of the points' bounding box."""
        if not points:
            raise MapBoundsError("cannot anchor a projection on an empty point set")
        for p in points:
            validate_geopoint(p)
        lats = [p.lat for p in points]
        lons = [p.lon for p in points]
        if max(lons) - min(lons) > 180.0:
            raise MapBoundsError("longitude extent exceeds 180 degrees; projection would not invert")
        return cls((min(lats) + max(lats)) / 2.0, (min(lons) + max(lons)) / 2.0)

    def project(self, p: GeoPoint) -> ProjectedPoint:
        rad = math.pi / 180.0
        x = EARTH_RADIUS_KM * (p.lon - self.lon0) * rad * self._cos0
        y = EARTH_RADIUS_KM * (p.lat - self.lat0) * rad
        return ProjectedPoint(x, y)

    def unproject(self, p: ProjectedPoint) -> GeoPoint:
        deg = 180.0 / math.pi
        lon = self.lon0 + p.x / (EARTH_RADIUS_KM * self._cos0) * deg
        lat = self.lat0 + p.y / EARTH_RADIUS_KM * deg
        return GeoPoint(lat, lon)


def polyline_length(points: list[ProjectedPoint]) -> float:
    """Sum of segment lengths, km."""
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += math.hypot(b.x - a.x, b.y - a.y)
    return total


def load_geojson_polylines(path: str) -> list[list[GeoPoint]]:
    """Read LineString features from a GeoJSON FeatureCollection.

    Non-LineString geometries are skipped with a warning. Coordinates are
    GeoJSON order: [lon, lat].
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    features = doc.get("features", [])
    polylines: list[list[GeoPoint]] = []
    for feat in features:
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype != "LineString":
            log.warning("ignoring %s geometry in %s", gtype, path)
            continue
        coords = geom.get("coordinates") or []
        if len(coords) < 2:
            log.warning("ignoring degenerate LineString in %s", path)
            continue
        polylines.append([validate_geopoint(GeoPoint(lat=c[1], lon=c[0])) for c in coords])
    return polylines


def project_polylines(
    polylines: list[list[GeoPoint]],
) -> tuple[list[list[ProjectedPoint]], LocalProjection]:
    """Project geographic polylines into the local km frame."""
    all_points = [p for line in polylines for p in line]
    proj = LocalProjection.for_points(all_points)
    return [[proj.project(p) for p in line] for line in polylines], proj


def write_geojson_polylines(
    path: str, polylines: list[list[ProjectedPoint]], proj: LocalProjection
) -> None:
    """Write projected polylines back out as a GeoJSON FeatureCollection."""
    features = []
    for line in polylines:
        coords = []
        for p in line:
            g = proj.unproject(p)
            coords.append([round(g.lon, 9), round(g.lat, 9)])
        features.append(
            {
                "type": "Feature",
                "properties": {},
                "geometry": {"type": "LineString", "coordinates": coords},
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=1)
        fh.write("\n")
