"""
基站合并、测地距离缓冲区与有界 Voronoi 剖分。
"""

from .distance import (
    EARTH_RADIUS_M,
    densify_polyline,
    haversine_array,
    haversine_m,
    select_buffer_stations,
)
from .geojson import GeoJson, polygons_to_geojson, read_feature_values
from .stations import BaseStation, StationTable, merge_cells, remap_cdr_cells, station_record_counts
from .voronoi import (
    BoundingBox,
    LocalProjection,
    VoronoiCellPolygon,
    bbox_area,
    polygon_areas,
    ring_area,
    voronoi,
)

__all__ = [
    "EARTH_RADIUS_M",
    "haversine_m",
    "haversine_array",
    "densify_polyline",
    "select_buffer_stations",
    "BaseStation",
    "StationTable",
    "merge_cells",
    "remap_cdr_cells",
    "station_record_counts",
    "BoundingBox",
    "LocalProjection",
    "VoronoiCellPolygon",
    "voronoi",
    "ring_area",
    "bbox_area",
    "polygon_areas",
    "GeoJson",
    "polygons_to_geojson",
    "read_feature_values",
]
