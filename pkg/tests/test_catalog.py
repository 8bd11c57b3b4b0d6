import io
import json

import numpy as np
import pytest

from quakeval import (AftershockPolicy, Catalog, Circle, ConvexPolygon,
                      EarthquakeEvent, Prediction, Rectangle, ValidationError,
                      filter_aftershocks, parse_earthquakes, parse_predictions,
                      serialize_earthquakes, serialize_exclusions,
                      serialize_predictions, validate_predictions_against)

REGION = Rectangle(0.0, 100.0, 0.0, 100.0)


def ev(t, x=50.0, y=50.0, m=5.0):
    return EarthquakeEvent(t, x, y, m)


def test_catalog_sorts_and_exposes_columns():
    cat = Catalog([ev(5.0), ev(1.0, m=6.0), ev(3.0)], 0.0, 10.0, REGION)
    assert list(cat.times) == [1.0, 3.0, 5.0]
    assert cat.magnitudes[0] == 6.0
    assert cat.span == 10.0
    assert len(cat) == 3
    assert cat.count_at_or_above(5.5) == 1
    assert cat.count_at_or_above(5.0) == 3


def test_catalog_rejects_out_of_record_and_region():
    with pytest.raises(ValidationError):
        Catalog([ev(11.0)], 0.0, 10.0, REGION)
    with pytest.raises(ValidationError):
        Catalog([ev(5.0, x=150.0)], 0.0, 10.0, REGION)
    with pytest.raises(ValidationError):
        Catalog([], 5.0, 5.0, REGION)


def test_catalog_columns_are_read_only():
    cat = Catalog([ev(1.0)], 0.0, 10.0, REGION)
    with pytest.raises(ValueError):
        cat.times[0] = 9.0


def test_catalog_subset():
    cat = Catalog([ev(1.0), ev(2.0, m=6.0), ev(3.0)], 0.0, 10.0, REGION)
    sub = cat.subset(cat.magnitudes >= 6.0)
    assert len(sub) == 1
    assert sub.times[0] == 2.0
    assert sub.span == cat.span


def test_prediction_validation():
    with pytest.raises(ValidationError):
        Prediction(0.0, 5.0, 4.0, REGION, 5.0)  # window reversed
    with pytest.raises(ValidationError):
        Prediction(6.0, 5.0, 7.0, REGION, 5.0)  # issued late
    p = Prediction(1.0, 2.0, 6.0, REGION, 5.0)
    assert p.duration == 4.0


def test_earthquake_round_trip_exact():
    """repr-float serialization survives parse without any drift."""
    awkward = [ev(0.1 + 0.2, x=1.0 / 3.0, y=2.0 / 7.0, m=5.15),
               ev(np.nextafter(1.0, 2.0), x=99.999999999, y=0.0, m=4.0)]
    cat = Catalog(awkward, 0.0, 10.0, REGION)
    text = serialize_earthquakes(cat)
    again = parse_earthquakes(io.StringIO(text), region=REGION,
                              record_end=10.0)
    assert np.array_equal(again.times, cat.times)
    assert np.array_equal(again.xs, cat.xs)
    assert np.array_equal(again.ys, cat.ys)
    assert np.array_equal(again.magnitudes, cat.magnitudes)


def test_parse_earthquakes_errors_name_rows():
    with pytest.raises(ValidationError, match="header"):
        parse_earthquakes(io.StringIO("a,b,c,d\n1,2,3,4\n"))
    with pytest.raises(ValidationError, match="row 2"):
        parse_earthquakes(io.StringIO("time,x,y,magnitude\n1,2,3,4\n1,2,3\n"))
    with pytest.raises(ValidationError, match="row 1"):
        parse_earthquakes(io.StringIO("time,x,y,magnitude\noops,2,3,4\n"))
    with pytest.raises(ValidationError, match="negative time"):
        parse_earthquakes(io.StringIO("time,x,y,magnitude\n-1,2,3,4\n"))


def test_parse_earthquakes_skips_blank_rows_and_derives_bounds():
    text = "time,x,y,magnitude\n1,5,5,5\n\n3,7,9,4.5\n"
    cat = parse_earthquakes(io.StringIO(text))
    assert len(cat) == 2
    assert cat.record_end == 3.0
    xmin, xmax, ymin, ymax = cat.region.bounding_box
    assert (xmin, xmax, ymin, ymax) == (5.0, 7.0, 5.0, 9.0)


def test_parse_earthquakes_pads_degenerate_bbox():
    text = "time,x,y,magnitude\n1,5,5,5\n2,5,9,4.5\n"
    cat = parse_earthquakes(io.StringIO(text))
    xmin, xmax, _, _ = cat.region.bounding_box
    assert xmax - xmin == 1.0


def test_parse_predictions_circles_and_polygons():
    text = ("issue_time,window_start,window_end,cx,cy,radius,min_magnitude\n"
            "0,1,5,10,20,3,5.0\n"
            "2,3,8,,,,4.5\n")
    sidecar = {"1": [[0, 0], [5, 0], [5, 5], [0, 5]]}
    preds = parse_predictions(io.StringIO(text), polygons=sidecar)
    assert isinstance(preds[0].region, Circle)
    assert isinstance(preds[1].region, ConvexPolygon)
    assert preds[0].region.radius == 3.0
    assert preds[1].min_magnitude == 4.5


def test_parse_predictions_partial_circle_rejected():
    text = ("issue_time,window_start,window_end,cx,cy,radius,min_magnitude\n"
            "0,1,5,10,,3,5.0\n")
    with pytest.raises(ValidationError, match="all present or all empty"):
        parse_predictions(io.StringIO(text))


def test_parse_predictions_missing_sidecar_entry():
    text = ("issue_time,window_start,window_end,cx,cy,radius,min_magnitude\n"
            "0,1,5,,,,5.0\n")
    with pytest.raises(ValidationError, match="sidecar"):
        parse_predictions(io.StringIO(text))


def test_predictions_round_trip(tmp_path):
    preds = [
        Prediction(0.0, 1.0, 5.0, Circle(10.0, 20.0, 3.0), 5.0),
        Prediction(2.0, 3.0, 8.0,
                   ConvexPolygon([[0, 0], [5, 0], [5, 5], [0, 5]]), 4.5),
    ]
    path = tmp_path / "preds.csv"
    serialize_predictions(preds, path)
    sidecar_path = tmp_path / "preds.regions.json"
    assert sidecar_path.exists()
    again = parse_predictions(path, polygons=json.loads(sidecar_path.read_text()))
    assert len(again) == 2
    assert again[0].region == preds[0].region
    assert np.array_equal(again[1].region.vertices, preds[1].region.vertices)
    assert again[1].issue_time == 2.0


def test_validate_predictions_against():
    cat = Catalog([ev(1.0)], 0.0, 10.0, REGION)
    good = Prediction(0.0, 1.0, 5.0, Circle(50.0, 50.0, 10.0), 5.0)
    validate_predictions_against([good], cat)
    late = Prediction(0.0, 1.0, 11.0, Circle(50.0, 50.0, 10.0), 5.0)
    with pytest.raises(ValidationError, match="outside the record"):
        validate_predictions_against([late], cat)
    escaping = Prediction(0.0, 1.0, 5.0, Circle(95.0, 50.0, 10.0), 5.0)
    with pytest.raises(ValidationError, match="study region"):
        validate_predictions_against([escaping], cat)


def test_filter_excludes_smaller_nearby_follower():
    cat = Catalog([ev(10.0, 50, 50, 6.0), ev(15.0, 52, 50, 5.0),
                   ev(15.5, 90, 90, 5.0)], 0.0, 100.0, REGION)
    res = filter_aftershocks(cat, AftershockPolicy(10.0, 5.0))
    assert len(res.kept) == 2
    assert len(res.excluded) == 1
    assert res.excluded[0].index == 1
    assert res.excluded[0].excluded_by == 0


def test_filter_equal_magnitude_never_shadows():
    cat = Catalog([ev(10.0, 50, 50, 5.0), ev(12.0, 50, 50, 5.0)],
                  0.0, 100.0, REGION)
    res = filter_aftershocks(cat, AftershockPolicy(10.0, 5.0))
    assert len(res.kept) == 2


def test_filter_excluded_event_cannot_shadow():
    """A follower removed by the filter must not remove anything itself."""
    cat = Catalog([
        ev(0.0, 50, 50, 7.0),
        ev(5.0, 52, 50, 6.0),    # excluded by the first
        ev(8.0, 90, 90, 5.0),    # near nothing retained and bigger, kept
        ev(9.0, 53, 50, 5.5),    # still shadowed by the 7.0 at t=0
    ], 0.0, 100.0, REGION)
    res = filter_aftershocks(cat, AftershockPolicy(30.0, 5.0))
    kept_times = list(res.kept.times)
    assert kept_times == [0.0, 8.0]
    culprits = {r.index: r.excluded_by for r in res.excluded}
    assert culprits == {1: 0, 3: 0}


def test_filter_time_window_boundaries():
    # exactly at the window edge is still shadowed; same instant is not
    cat = Catalog([ev(0.0, 50, 50, 6.0), ev(10.0, 50, 50, 5.0),
                   ev(10.0, 51, 50, 5.9)], 0.0, 100.0, REGION)
    res = filter_aftershocks(cat, AftershockPolicy(10.0, 5.0))
    assert len(res.excluded) == 2
    simultaneous = Catalog([ev(0.0, 50, 50, 6.0), ev(0.0, 50, 50, 5.0)],
                           0.0, 100.0, REGION)
    res2 = filter_aftershocks(simultaneous, AftershockPolicy(10.0, 5.0))
    assert len(res2.kept) == 2


def test_filter_idempotent_and_matches_reference():
    """Sequential scan agrees with a naive reimplementation on random data."""
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = 120
        events = [EarthquakeEvent(float(t), float(x), float(y), float(m))
                  for t, x, y, m in zip(np.sort(rng.uniform(0, 300, n)),
                                        rng.uniform(0, 100, n),
                                        rng.uniform(0, 100, n),
                                        rng.uniform(4.0, 7.0, n))]
        cat = Catalog(events, 0.0, 300.0, REGION)
        policy = AftershockPolicy(20.0, 25.0)
        res = filter_aftershocks(cat, policy)

        kept_ref = []
        for e in cat.events:
            shadowed = any(
                k.magnitude > e.magnitude
                and 0.0 < e.time - k.time <= policy.time_window
                and (k.x - e.x) ** 2 + (k.y - e.y) ** 2
                <= policy.distance_window ** 2
                for k in kept_ref)
            if not shadowed:
                kept_ref.append(e)
        assert list(res.kept.events) == kept_ref

        again = filter_aftershocks(res.kept, policy)
        assert len(again.excluded) == 0
        assert list(again.kept.events) == list(res.kept.events)


def test_exclusion_audit_csv():
    cat = Catalog([ev(10.0, 50, 50, 6.0), ev(15.0, 52, 50, 5.0)],
                  0.0, 100.0, REGION)
    res = filter_aftershocks(cat, AftershockPolicy(10.0, 5.0))
    text = serialize_exclusions(res)
    lines = text.strip().split("\n")
    assert lines[0] == "index,time,x,y,magnitude,excluded_by"
    assert lines[1].startswith("1,15.0,52.0,50.0,5.0,0")


def test_aftershock_policy_validation():
    with pytest.raises(ValidationError):
        AftershockPolicy(-1.0, 5.0)
    with pytest.raises(ValidationError):
        AftershockPolicy(1.0, -5.0)
