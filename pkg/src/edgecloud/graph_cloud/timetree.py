"""Year / month / day / hour index over snapshots."""

from __future__ import annotations

from typing import Iterator

from ..fabric import HourBucket, bucket_start_ms


class RangeError(ValueError):
    pass


class DuplicateHourError(ValueError):
    pass


class TimeTree:
    """``root -> year -> month -> day -> hour -> snapshot id``.

    An hour node exists only while it references a snapshot.
    """

    def __init__(self) -> None:
        self.root: dict[int, dict[int, dict[int, dict[int, int]]]] = {}

    def insert(self, bucket: HourBucket, snapshot_id: int) -> None:
        bucket_start_ms(bucket)  # rejects impossible calendar components
        y, m, d, h = bucket
        hours = self.root.setdefault(y, {}).setdefault(m, {}).setdefault(d, {})
        if h in hours:
            raise DuplicateHourError(f"hour {bucket} already holds snapshot {hours[h]}")
        hours[h] = snapshot_id

    def get(self, bucket: HourBucket):
        y, m, d, h = bucket
        return self.root.get(y, {}).get(m, {}).get(d, {}).get(h)

    def __contains__(self, bucket: HourBucket) -> bool:
        return self.get(bucket) is not None

    def __len__(self) -> int:
        return sum(1 for _ in self.walk())

    def walk(self) -> Iterator[tuple[HourBucket, int]]:
        """Every ``(hour, snapshot id)`` in chronological order."""
        for y in sorted(self.root):
            for m in sorted(self.root[y]):
                for d in sorted(self.root[y][m]):
                    for h in sorted(self.root[y][m][d]):
                        yield (y, m, d, h), self.root[y][m][d][h]

    def resolve(self, start: HourBucket, end: HourBucket) -> list[tuple[HourBucket, int]]:
        """Hours in ``[start, end]`` that hold a snapshot, chronological.

        Subtrees entirely outside the range are skipped without descending.
        """
        if tuple(start) > tuple(end):
            raise RangeError(f"range start {start} is after end {end}")
        out = []
        for y in sorted(self.root):
            if not start[0] <= y <= end[0]:
                continue
            for m in sorted(self.root[y]):
                if not start[:2] <= (y, m) <= end[:2]:
                    continue
                for d in sorted(self.root[y][m]):
                    if not start[:3] <= (y, m, d) <= end[:3]:
                        continue
                    for h in sorted(self.root[y][m][d]):
                        if start <= (y, m, d, h) <= end:
                            out.append(((y, m, d, h), self.root[y][m][d][h]))
        return out
