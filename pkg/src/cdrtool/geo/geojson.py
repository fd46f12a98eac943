"""GeoJSON FeatureCollection output for station polygons."""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from cdrtool.geo.voronoi import VoronoiCellPolygon


class GeoJson:
    """最小的 FeatureCollection 构建器"""

    def __init__(self):
        self.data: Dict[str, Any] = {"type": "FeatureCollection", "features": []}

    def add_polygon(self, polygon: VoronoiCellPolygon, properties: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        # GeoJSON positions are [lon, lat]
        feature = {
            "type": "Feature",
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[lon, lat] for lat, lon in polygon.ring]],
            },
            "properties": {"station_id": polygon.station_id, **(properties or {})},
        }
        self.data["features"].append(feature)
        return feature

    def dumps(self) -> str:
        return json.dumps(_finite(self.data), indent=2, sort_keys=True, allow_nan=False)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")


def _finite(value: Any) -> Any:
    """NaN/inf are not valid JSON numbers; emit null instead."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def polygons_to_geojson(
    polygons: Iterable[VoronoiCellPolygon],
    properties: Optional[Dict[int, Dict[str, Any]]] = None,
) -> GeoJson:
    collection = GeoJson()
    properties = properties or {}
    for polygon in polygons:
        collection.add_polygon(polygon, properties.get(polygon.station_id))
    return collection


def read_feature_values(path: Union[str, Path], key: str) -> Dict[int, Optional[float]]:
    """station_id -> numeric property, as written by the choropleth renderer."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        int(feature["properties"]["station_id"]): feature["properties"].get(key)
        for feature in data["features"]
    }
