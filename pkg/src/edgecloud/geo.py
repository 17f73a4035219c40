"""City-scale distance and a local metric projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .kernels import METERS_PER_DEGREE


def geo_distance(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Equirectangular distance in meters between two ``(lat, lon)`` points.

    Longitude difference is scaled by the cosine of the mean latitude. Accurate
    to well under 1% at the few-kilometer scale the pipeline works at.
    """
    lat1, lon1 = p1
    lat2, lon2 = p2
    dx = (lon2 - lon1) * math.cos(math.radians((lat1 + lat2) / 2.0)) * METERS_PER_DEGREE
    dy = (lat2 - lat1) * METERS_PER_DEGREE
    return math.sqrt(dx * dx + dy * dy)


@dataclass(frozen=True)
class LocalProjection:
    """Flat x/y meters around a reference point, matching :func:`geo_distance`."""

    lat0: float
    lon0: float

    @property
    def _kx(self) -> float:
        return math.cos(math.radians(self.lat0)) * METERS_PER_DEGREE

    def to_xy(self, lat: float, lon: float) -> tuple[float, float]:
        return (lon - self.lon0) * self._kx, (lat - self.lat0) * METERS_PER_DEGREE

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        return self.lat0 + y / METERS_PER_DEGREE, self.lon0 + x / self._kx
