"""Earthquake catalogs, alarm predictions and the aftershock filter.

File formats
------------
Earthquake CSV: header ``time,x,y,magnitude``; times in days since the
record start, positions in km, UTF-8, ``.`` decimal separator.

Prediction CSV: header
``issue_time,window_start,window_end,cx,cy,radius,min_magnitude``.
Rows with all three of ``cx,cy,radius`` filled describe circular alarm
regions.  A row may leave them empty and take its region from a JSON
sidecar instead: an object mapping the 0-based row index (as a string)
to an array of [x, y] vertices, counterclockwise.

Serialization uses ``repr``-style shortest round-trip floats so
``parse(serialize(catalog))`` reproduces the catalog exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .regions import Circle, ConvexPolygon, Rectangle, Region, contains_region

EARTHQUAKE_HEADER = ["time", "x", "y", "magnitude"]
PREDICTION_HEADER = ["issue_time", "window_start", "window_end",
                     "cx", "cy", "radius", "min_magnitude"]


@dataclass(frozen=True)
class EarthquakeEvent:
    """One catalog entry: origin time (days), position (km), magnitude."""

    time: float
    x: float
    y: float
    magnitude: float


@dataclass(frozen=True)
class Prediction:
    """One alarm: issued at ``issue_time``, claiming an event of at least
    ``min_magnitude`` inside ``region`` during [window_start, window_end].

    Window bounds are inclusive on both ends.  Zero-duration windows are
    allowed and simply never succeed by chance.
    """

    issue_time: float
    window_start: float
    window_end: float
    region: Region
    min_magnitude: float

    def __post_init__(self):
        vals = [self.issue_time, self.window_start, self.window_end, self.min_magnitude]
        if not np.isfinite(vals).all():
            raise ValidationError("prediction fields must be finite")
        if self.window_end < self.window_start:
            raise ValidationError("prediction window ends before it starts")
        if self.issue_time > self.window_start:
            raise ValidationError("prediction issued after its window opened")

    @property
    def duration(self) -> float:
        return self.window_end - self.window_start


@dataclass(frozen=True)
class AftershockPolicy:
    """Windows for the aftershock filter.

    ``magnitude_delta`` is reserved for a future graded criterion and is
    not consulted by the current filter (strictly-larger magnitude is
    always required).
    """

    time_window: float
    distance_window: float
    magnitude_delta: float = 0.0

    def __post_init__(self):
        if self.time_window < 0 or self.distance_window < 0:
            raise ValidationError("aftershock windows must be nonnegative")


class Catalog:
    """An immutable, time-sorted earthquake catalog.

    Args:
        events: any iterable of EarthquakeEvent (sorted on construction,
            ties keep their input order).
        record_start: start of the observation record, days.
        record_end: end of the observation record, days.
        region: study region containing every epicentre.

    The per-column numpy views (``times``, ``xs``, ``ys``,
    ``magnitudes``) are read-only and safe to share between threads.
    """

    def __init__(self, events: Iterable[EarthquakeEvent], record_start: float,
                 record_end: float, region: Region):
        events = tuple(events)
        if record_end <= record_start:
            raise ValidationError("record_end must exceed record_start")
        order = sorted(range(len(events)), key=lambda i: events[i].time)
        events = tuple(events[i] for i in order)
        t = np.array([e.time for e in events], dtype=float)
        x = np.array([e.x for e in events], dtype=float)
        y = np.array([e.y for e in events], dtype=float)
        m = np.array([e.magnitude for e in events], dtype=float)
        if len(events):
            if not (np.isfinite(t).all() and np.isfinite(x).all()
                    and np.isfinite(y).all() and np.isfinite(m).all()):
                raise ValidationError("catalog fields must be finite")
            if t[0] < record_start - 1e-9 or t[-1] > record_end + 1e-9:
                raise ValidationError("event times fall outside the record span")
            inside = region.contains(x, y)
            if not np.all(inside):
                bad = int(np.flatnonzero(~inside)[0])
                raise ValidationError(
                    f"event {bad} at ({x[bad]:g}, {y[bad]:g}) lies outside the study region")
        for arr in (t, x, y, m):
            arr.flags.writeable = False
        self._events = events
        self._t, self._x, self._y, self._m = t, x, y, m
        self.record_start = float(record_start)
        self.record_end = float(record_end)
        self.region = region

    @property
    def events(self) -> tuple[EarthquakeEvent, ...]:
        return self._events

    @property
    def times(self) -> np.ndarray:
        return self._t

    @property
    def xs(self) -> np.ndarray:
        return self._x

    @property
    def ys(self) -> np.ndarray:
        return self._y

    @property
    def magnitudes(self) -> np.ndarray:
        return self._m

    @property
    def span(self) -> float:
        """Record length in days."""
        return self.record_end - self.record_start

    def __len__(self) -> int:
        return len(self._events)

    def count_at_or_above(self, magnitude: float) -> int:
        return int(np.count_nonzero(self._m >= magnitude))

    def subset(self, mask: np.ndarray) -> "Catalog":
        keep = [e for e, k in zip(self._events, mask) if k]
        return Catalog(keep, self.record_start, self.record_end, self.region)

    def __repr__(self):
        return (f"Catalog({len(self)} events, record [{self.record_start:g}, "
                f"{self.record_end:g}], {type(self.region).__name__})")


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"row {row}: {column} value {text!r} is not a number") from None


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    return source


def parse_earthquakes(source, region: Region | None = None,
                      record_start: float = 0.0,
                      record_end: float | None = None) -> Catalog:
    """Read an earthquake CSV into a Catalog.

    Args:
        source: path or open text handle.
        region: declared study region.  When omitted, the bounding box of
            the events (padded by 1 km on degenerate axes) is used.
        record_start: record origin, days.  Defaults to 0.
        record_end: record end, days.  Defaults to the last event time.

    Raises:
        ValidationError: missing or wrong header, non-numeric field,
            negative time, or an epicentre outside the declared region.
            The message names the offending 1-based data row.
    """
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EARTHQUAKE_HEADER:
            raise ValidationError(
                f"earthquake CSV must start with header {','.join(EARTHQUAKE_HEADER)!r}")
        events = []
        for i, rowvals in enumerate(reader, start=1):
            if not rowvals or all(not c.strip() for c in rowvals):
                continue
            if len(rowvals) != 4:
                raise ValidationError(f"row {i}: expected 4 fields, got {len(rowvals)}")
            t = _parse_float(rowvals[0], i, "time")
            x = _parse_float(rowvals[1], i, "x")
            y = _parse_float(rowvals[2], i, "y")
            m = _parse_float(rowvals[3], i, "magnitude")
            if t < 0:
                raise ValidationError(f"row {i}: negative time {t:g}")
            events.append(EarthquakeEvent(t, x, y, m))
    finally:
        if isinstance(source, (str, Path)):
            fh.close()
    if region is None:
        region = _bounding_region(events)
    if record_end is None:
        record_end = max((e.time for e in events), default=record_start + 1.0)
        if record_end <= record_start:
            record_end = record_start + 1.0
    return Catalog(events, record_start, record_end, region)


def _bounding_region(events: Sequence[EarthquakeEvent]) -> Rectangle:
    if not events:
        return Rectangle(0.0, 1.0, 0.0, 1.0)
    xs = [e.x for e in events]
    ys = [e.y for e in events]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    return Rectangle(x0, x1, y0, y1)


def serialize_earthquakes(catalog: Catalog, destination=None) -> str | None:
    """Write a catalog back to CSV; returns the text when no destination."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EARTHQUAKE_HEADER)
    for e in catalog.events:
        writer.writerow([repr(float(e.time)), repr(float(e.x)),
                         repr(float(e.y)), repr(float(e.magnitude))])
    text = buf.getvalue()
    if destination is None:
        return text
    Path(destination).write_text(text, encoding="utf-8")
    return None


def parse_predictions(source, polygons=None) -> list[Prediction]:
    """Read a prediction CSV (and optional polygon sidecar).

    Args:
        source: path or open text handle for the CSV.
        polygons: path to a JSON sidecar, or an already-loaded mapping of
            row index to vertex list, for rows whose cx/cy/radius are empty.
    """
    poly_map: dict[int, ConvexPolygon] = {}
    if polygons is not None:
        if isinstance(polygons, (str, Path)):
            polygons = json.loads(Path(polygons).read_text(encoding="utf-8"))
        for key, verts in polygons.items():
            poly_map[int(key)] = ConvexPolygon(verts)

    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PREDICTION_HEADER:
            raise ValidationError(
                f"prediction CSV must start with header {','.join(PREDICTION_HEADER)!r}")
        preds = []
        for i, rowvals in enumerate(reader, start=1):
            if not rowvals or all(not c.strip() for c in rowvals):
                continue
            if len(rowvals) != 7:
                raise ValidationError(f"row {i}: expected 7 fields, got {len(rowvals)}")
            issue = _parse_float(rowvals[0], i, "issue_time")
            ws = _parse_float(rowvals[1], i, "window_start")
            we = _parse_float(rowvals[2], i, "window_end")
            circle_cells = [c.strip() for c in rowvals[3:6]]
            if all(circle_cells):
                region: Region = Circle(_parse_float(rowvals[3], i, "cx"),
                                        _parse_float(rowvals[4], i, "cy"),
                                        _parse_float(rowvals[5], i, "radius"))
            elif any(circle_cells):
                raise ValidationError(
                    f"row {i}: cx, cy and radius must be all present or all empty")
            else:
                row_index = i - 1
                if row_index not in poly_map:
                    raise ValidationError(
                        f"row {i}: no circle columns and no polygon sidecar entry "
                        f"for row index {row_index}")
                region = poly_map[row_index]
            mmin = _parse_float(rowvals[6], i, "min_magnitude")
            try:
                preds.append(Prediction(issue, ws, we, region, mmin))
            except ValidationError as exc:
                raise ValidationError(f"row {i}: {exc}") from None
    finally:
        if isinstance(source, (str, Path)):
            fh.close()
    return preds


def serialize_predictions(predictions: Sequence[Prediction],
                          destination=None) -> tuple[str, dict] | None:
    """Write predictions to CSV text plus a polygon sidecar mapping."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTION_HEADER)
    sidecar: dict[str, list] = {}
    for i, p in enumerate(predictions):
        if isinstance(p.region, Circle):
            circ = [repr(float(p.region.cx)), repr(float(p.region.cy)),
                    repr(float(p.region.radius))]
        else:
            circ = ["", "", ""]
            if isinstance(p.region, ConvexPolygon):
                sidecar[str(i)] = p.region.vertices.tolist()
            else:
                raise ValidationError(
                    "prediction CSV rows carry circles or polygons, not rectangles")
        writer.writerow([repr(float(p.issue_time)), repr(float(p.window_start)),
                         repr(float(p.window_end)), *circ,
                         repr(float(p.min_magnitude))])
    text = buf.getvalue()
    if destination is None:
        return text, sidecar
    Path(destination).write_text(text, encoding="utf-8")
    if sidecar:
        Path(destination).with_suffix(".regions.json").write_text(
            json.dumps(sidecar), encoding="utf-8")
    return None


def validate_predictions_against(predictions: Sequence[Prediction],
                                 catalog: Catalog) -> None:
    """Check every prediction window and region against a catalog's record."""
    for i, p in enumerate(predictions):
        if p.window_start < catalog.record_start - 1e-9 \
                or p.window_end > catalog.record_end + 1e-9:
            raise ValidationError(
                f"prediction {i}: window [{p.window_start:g}, {p.window_end:g}] "
                f"is outside the record [{catalog.record_start:g}, {catalog.record_end:g}]")
        if not contains_region(catalog.region, p.region):
            raise ValidationError(
                f"prediction {i}: alarm region is not inside the study region")


@dataclass(frozen=True)
class ExcludedEvent:
    """Audit entry for one filtered event."""

    index: int
    event: EarthquakeEvent
    excluded_by: int


@dataclass(frozen=True)
class FilterResult:
    kept: Catalog
    excluded: tuple[ExcludedEvent, ...]


def filter_aftershocks(catalog: Catalog, policy: AftershockPolicy) -> FilterResult:
    """Remove likely aftershocks from a catalog.

    An event is excluded iff some earlier *retained* event with strictly
    larger magnitude lies within ``policy.time_window`` days and
    ``policy.distance_window`` km.  Scanning in time order against the
    retained set makes the rule idempotent: filtering a filtered catalog
    changes nothing.  Equal-magnitude pairs never shadow each other, and
    an excluded event cannot itself exclude anything.

    Returns:
        FilterResult with the surviving catalog and an audit tuple whose
        ``excluded_by`` fields give the original index of the mainshock
        responsible for each exclusion.
    """
    t, x, y, m = catalog.times, catalog.xs, catalog.ys, catalog.magnitudes
    kept_idx: list[int] = []
    excluded: list[ExcludedEvent] = []
    kept_t = np.empty(len(catalog))
    kept_x = np.empty(len(catalog))
    kept_y = np.empty(len(catalog))
    kept_m = np.empty(len(catalog))
    n_kept = 0
    for i in range(len(catalog)):
        lo = np.searchsorted(kept_t[:n_kept], t[i] - policy.time_window, side="left")
        hi = np.searchsorted(kept_t[:n_kept], t[i], side="left")
        sl = slice(lo, hi)
        bigger = kept_m[sl] > m[i]
        if np.any(bigger):
            d2 = (kept_x[sl] - x[i]) ** 2 + (kept_y[sl] - y[i]) ** 2
            shadow = bigger & (d2 <= policy.distance_window ** 2)
            if np.any(shadow):
                culprit = kept_idx[lo + int(np.flatnonzero(shadow)[0])]
                excluded.append(ExcludedEvent(i, catalog.events[i], culprit))
                continue
        kept_t[n_kept], kept_x[n_kept] = t[i], x[i]
        kept_y[n_kept], kept_m[n_kept] = y[i], m[i]
        kept_idx.append(i)
        n_kept += 1
    kept = Catalog([catalog.events[i] for i in kept_idx], catalog.record_start,
                   catalog.record_end, catalog.region)
    return FilterResult(kept, tuple(excluded))


def serialize_exclusions(result: FilterResult, destination=None) -> str | None:
    """Audit CSV for a filter run: original row, event fields, culprit row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "time", "x", "y", "magnitude", "excluded_by"])
    for rec in result.excluded:
        e = rec.event
        writer.writerow([rec.index, repr(float(e.time)), repr(float(e.x)),
                         repr(float(e.y)), repr(float(e.magnitude)),
                         rec.excluded_by])
    text = buf.getvalue()
    if destination is None:
        return text
    Path(destination).write_text(text, encoding="utf-8")
    return None
