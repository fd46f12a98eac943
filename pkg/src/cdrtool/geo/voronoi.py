"""
有界 Voronoi 剖分

在以边界框中心为原点的局部平面投影中计算; 通过把站点关于边界框四条边做镜像,
原始站点的 Voronoi 区域恰好被裁剪到边界框内。
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import Voronoi

from cdrtool.geo.distance import EARTH_RADIUS_M
from cdrtool.geo.stations import StationTable
from cdrtool.utils.exceptions import ArgumentError, InvariantViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundingBox:
    """裁剪区域(十进制度)"""

    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ArgumentError("bounding box needs min < max on both axes")

    @classmethod
    def around(cls, lat: np.ndarray, lon: np.ndarray, pad_fraction: float = 0.05) -> "BoundingBox":
        """Station extent padded by ``pad_fraction`` of its span (at least ~100 m)."""
        lat_pad = max((lat.max() - lat.min()) * pad_fraction, 1e-3)
        lon_pad = max((lon.max() - lon.min()) * pad_fraction, 1e-3)
        return cls(lat.min() - lat_pad, lat.max() + lat_pad, lon.min() - lon_pad, lon.max() + lon_pad)

    def strictly_contains(self, lat, lon) -> np.ndarray:
        lat = np.asarray(lat)
        lon = np.asarray(lon)
        return (self.min_lat < lat) & (lat < self.max_lat) & (self.min_lon < lon) & (lon < self.max_lon)

    @property
    def center(self) -> Tuple[float, float]:
        return (self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0


@dataclass(frozen=True)
class LocalProjection:
    """
    Equirectangular projection scaled at the origin latitude.

    Linear in (lat, lon), so a lat/lon bounding box maps to an exact rectangle
    and planar areas are proportional to degree areas.
    """

    origin_lat: float
    origin_lon: float

    @classmethod
    def for_bbox(cls, bbox: BoundingBox) -> "LocalProjection":
        return cls(*bbox.center)

    @property
    def _kx(self) -> float:
        return EARTH_RADIUS_M * np.cos(np.radians(self.origin_lat)) * np.pi / 180.0

    @property
    def _ky(self) -> float:
        return EARTH_RADIUS_M * np.pi / 180.0

    def forward(self, lat, lon) -> Tuple[np.ndarray, np.ndarray]:
        x = (np.asarray(lon, dtype=np.float64) - self.origin_lon) * self._kx
        y = (np.asarray(lat, dtype=np.float64) - self.origin_lat) * self._ky
        return x, y

    def inverse(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        lat = np.asarray(y, dtype=np.float64) / self._ky + self.origin_lat
        lon = np.asarray(x, dtype=np.float64) / self._kx + self.origin_lon
        return lat, lon


@dataclass(frozen=True)
class VoronoiCellPolygon:
    """一个基站的 Voronoi 多边形; ring 为闭合的 (lat, lon) 顶点序列"""

    station_id: int
    ring: Tuple[Tuple[float, float], ...]

    def projected(self, projection: LocalProjection) -> np.ndarray:
        """Ring as an (n, 2) array of planar (x, y) meters."""
        lat = np.array([p[0] for p in self.ring])
        lon = np.array([p[1] for p in self.ring])
        x, y = projection.forward(lat, lon)
        return np.column_stack([x, y])


def ring_area(xy: np.ndarray) -> float:
    """Shoelace area of a closed planar ring (absolute value)."""
    x, y = xy[:, 0], xy[:, 1]
    return abs(float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))) / 2.0


def _ordered_ring(vertices: np.ndarray, site: np.ndarray) -> np.ndarray:
    """Counter-clockwise ring around the site, closed."""
    angles = np.arctan2(vertices[:, 1] - site[1], vertices[:, 0] - site[0])
    ring = vertices[np.argsort(angles, kind="stable")]
    return np.vstack([ring, ring[:1]])


def _dedupe(vertices: np.ndarray, tol: float) -> np.ndarray:
    keep: List[np.ndarray] = []
    for v in vertices:
        if all(np.abs(v - k).max() > tol for k in keep):
            keep.append(v)
    return np.array(keep)


def voronoi(stations: StationTable, bbox: BoundingBox) -> List[VoronoiCellPolygon]:
    """
    Voronoi polygons of the station sites, clipped to ``bbox``.

    Raises:
        ArgumentError: no stations, or a site not strictly inside bbox
        InvariantViolation: two stations share a site (merge_cells not applied)
    """
    n = len(stations)
    if n == 0:
        raise ArgumentError("voronoi needs at least one station")
    inside = bbox.strictly_contains(stations.lat, stations.lon)
    if not inside.all():
        outside = stations.station_id[~inside][:10].tolist()
        raise ArgumentError(f"stations outside the bounding box: {outside}")
    sites = np.column_stack([stations.lat, stations.lon])
    if len(np.unique(sites, axis=0)) != n:
        raise InvariantViolation("duplicate station sites; merge co-located cells first")

    projection = LocalProjection.for_bbox(bbox)
    x, y = projection.forward(stations.lat, stations.lon)
    x0, y0 = projection.forward(bbox.min_lat, bbox.min_lon)
    x1, y1 = projection.forward(bbox.max_lat, bbox.max_lon)
    box = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    points = np.column_stack([x, y])

    if n == 1:
        rings = [_ordered_ring(box, points[0])]
    else:
        mirrored = np.vstack(
            [
                points,
                np.column_stack([2 * x0 - x, y]),
                np.column_stack([2 * x1 - x, y]),
                np.column_stack([x, 2 * y0 - y]),
                np.column_stack([x, 2 * y1 - y]),
            ]
        )
        diagram = Voronoi(mirrored)
        tol = 1e-6 * max(x1 - x0, y1 - y0)
        rings = []
        for i in range(n):
            region = diagram.regions[diagram.point_region[i]]
            if not region or -1 in region:
                raise InvariantViolation(f"unbounded Voronoi region for station {int(stations.station_id[i])}")
            vertices = diagram.vertices[region]
            # snap boundary vertices onto the box
            vertices[:, 0] = np.clip(vertices[:, 0], x0, x1)
            vertices[:, 1] = np.clip(vertices[:, 1], y0, y1)
            rings.append(_ordered_ring(_dedupe(vertices, tol), points[i]))

    polygons = []
    for station_id, ring in zip(stations.station_id, rings):
        lat, lon = projection.inverse(ring[:, 0], ring[:, 1])
        polygons.append(
            VoronoiCellPolygon(
                station_id=int(station_id),
                ring=tuple((float(a), float(b)) for a, b in zip(lat, lon)),
            )
        )
    logger.info(f"🗺️ Built {len(polygons)} Voronoi polygons")
    return polygons


def bbox_area(bbox: BoundingBox, projection: LocalProjection) -> float:
    x0, y0 = projection.forward(bbox.min_lat, bbox.min_lon)
    x1, y1 = projection.forward(bbox.max_lat, bbox.max_lon)
    return float((x1 - x0) * (y1 - y0))


def polygon_areas(polygons: Sequence[VoronoiCellPolygon], bbox: BoundingBox) -> np.ndarray:
    projection = LocalProjection.for_bbox(bbox)
    return np.array([ring_area(p.projected(projection)) for p in polygons])
