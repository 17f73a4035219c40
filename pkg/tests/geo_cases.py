"""Coordinate pairs whose computed distance hits a value exactly."""

import math

import numpy as np

from edgecloud.geo import geo_distance
from edgecloud.kernels import METERS_PER_DEGREE


def exact_distance_pair(meters: float, lat0: float = 0.0, lon0: float = 0.0):
    """Two points ``meters`` apart *bit-exactly* under :func:`geo_distance`.

    A pure north-south or east-west step rarely lands on the target after
    rounding, so mix in a small latitude step and nudge the longitude by a
    few ulps until the computed distance equals ``meters``.
    """
    for i in range(1, 10_000):
        dlat = i * 1e-7
        dy = dlat * METERS_PER_DEGREE
        if dy >= meters:
            break
        c = math.cos(math.radians(lat0 + dlat / 2.0))
        x = math.sqrt(meters * meters - dy * dy) / (c * METERS_PER_DEGREE)
        for direction in (np.inf, -np.inf):
            y = lon0 + x
            for _ in range(64):
                p, q = (lat0, lon0), (lat0 + dlat, float(y))
                if geo_distance(p, q) == meters and geo_distance(q, p) == meters:
                    return p, q
                y = np.nextafter(y, direction)
    raise AssertionError(f"no exact pair for {meters} m")
