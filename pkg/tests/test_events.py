import math

import pytest

from intermine import mtl
from intermine.conflict import ConflictPair, FuturePath, PathMode
from intermine.errors import InterMineError, UnknownEventId
from intermine.events import (
    CATALOG_COLUMNS,
    INT_CHECK,
    ConflictType,
    PipelineParams,
    assemble_events,
    catalog_text,
    classify_conflict,
    compute_pet,
    cut_segments,
    event_ids,
    event_threads,
    export_event,
    extract_events,
    find_event,
    pet_from_occupancy,
    read_catalog,
    scan_scene,
    segment_condition,
    verify_segment,
    write_catalog,
)
from intermine.geometry import Polyline
from intermine.synth import crossing_spec, following_spec, generate, shifting_chain_spec
from intermine.traj_model import AgentState, AgentTrack, Scene

from oracles import pet_by_sampling

T, F = True, False


def trace(bits, offset=0):
    return mtl.BoolTrace(INT_CHECK, tuple(bits), offset)


def test_cut_segments_examples():
    assert cut_segments(trace([F, T, T, F, F, T, F, F, F, F, T]), 3) == [(1, 5), (10, 10)]
    assert cut_segments(trace([F] * 6), 3) == []
    assert cut_segments(trace([T] * 5), 3) == [(0, 4)]
    assert cut_segments(trace([T, F, T], 7), 0) == [(7, 7), (9, 9)]


def test_segment_formula_accepts_cut_segments():
    bits = [F, T, T, F, F, T, F, F, F, F, T, T, F, T]
    for start, end in cut_segments(trace(bits), 3):
        assert verify_segment(trace(bits), start, end, 3)


def test_segment_formula_rejects_bad_segments():
    bits = trace([T, F, F, F, F, T])
    assert not verify_segment(bits, 0, 5, 3)      # internal gap of 4
    assert not verify_segment(bits, 0, 4, 3)      # false end
    assert verify_segment(bits, 0, 5, 4)


def test_segment_condition_text():
    f = segment_condition(6, 3)
    assert mtl.to_text(f) == "(IntCheck & G[5,5](IntCheck)) & G[0,2](F[0,3](IntCheck))"
    assert segment_condition(1, 3) == mtl.parse("IntCheck & G[0,0](IntCheck) & G[0,0](F[0,0](IntCheck))")
    with pytest.raises(InterMineError):
        PipelineParams(segment_formula="{bogus}")


@pytest.mark.parametrize("theta,expect", [
    (90, ConflictType.CROSSING), (20, ConflictType.MERGING), (170, ConflictType.HEAD_ON),
    (45, ConflictType.CROSSING), (135, ConflictType.CROSSING),
])
def test_classify_conflict(theta, expect):
    def fp(tid, deg):
        h = math.radians(deg)
        return FuturePath(tid, 0, Polyline([(0, 0)]).extended(10, h), 10, 5, h)
    pair = ConflictPair("a", "b", (0, 0), 1, 1, 1)
    assert classify_conflict(pair, fp("a", 0), fp("b", theta)) is expect


def test_pet_arithmetic():
    assert pet_from_occupancy((2.0, 4.2), (5.0, 6.0)).pet == pytest.approx(0.8)
    res = pet_from_occupancy((3.0, 5.0), (2.0, 4.0), "a", "b")
    assert res.pet == 0.0 and res.overlap and res.first_id == "b"


def _line(tid, xy):
    return AgentTrack(tid, tuple(AgentState(tid, k, x, y, length=2.0) for k, (x, y) in enumerate(xy)))


def test_compute_pet_matches_dense_sampling():
    dt = 0.1
    a = [(-20 + 10 * k * dt, 0.0) for k in range(60)]
    b = [(0.0, -30 + 8 * k * dt) for k in range(80)]
    pair = ConflictPair("a", "b", (0.0, 0.0), 2.0, 3.75, 1.0)
    res = compute_pet(_line("a", a), _line("b", b), pair, 1.0, dt)
    expect = pet_by_sampling(a, b, (0, 0), 2.0, 2.0, dt)
    assert res.pet == pytest.approx(expect, abs=1e-3)
    assert res.first_id == "a" and not res.overlap


def test_compute_pet_never_enters():
    a = [(-20 + k, 0.0) for k in range(40)]
    b = [(50.0, -30 + k) for k in range(40)]
    pair = ConflictPair("a", "b", (0.0, 0.0), 1, 1, 1.0)
    assert compute_pet(_line("a", a), _line("b", b), pair, 1.0, 0.1) is None


def test_crossing_scene_event():
    scene = generate(crossing_spec())
    records = scan_scene(scene)
    assert any(c.agent_ids == ("v00", "v01") and r.intensities[c][0] > 0 for r in records for c in r.components)
    events = extract_events(scene)
    assert len(events) == 1
    e = events[0]
    assert e.agent_ids == ("v00", "v01") and e.start_step == 0 and e.n_agents == 2
    assert e.conflict_types == ("crossing",)
    assert e.intensity_max >= e.intensity_mean > 0.1
    assert e.duration_s == pytest.approx((e.end_step - e.start_step + 1) * 0.1)
    assert e.min_pet is not None and e.min_pet >= 0


def test_following_and_parallel_lanes_no_events():
    scene = generate(following_spec())
    assert all(not r.components for r in scan_scene(scene))
    assert extract_events(scene) == []
    lanes = generate(crossing_spec(angles=(0.0, 0.0), lateral_offsets=(0.0, 8.0)))
    assert all(not r.components for r in scan_scene(lanes))


def test_empty_scene():
    scene = Scene("empty", 0.1, {})
    assert scan_scene(scene) == [] and extract_events(scene) == []


def test_shifting_membership_single_event():
    events = extract_events(generate(shifting_chain_spec()))
    assert len(events) == 1
    e = events[0]
    assert e.agent_ids == ("v00", "v01", "v02", "v03") and e.is_multi_agent
    leaders = [keys[0] for keys in e.step_key_agents if keys]
    assert len(set(leaders)) >= 2


def _shifted(scene, dx, prefix):
    tracks = {}
    for tid, t in scene.tracks.items():
        nid = prefix + tid
        states = tuple(AgentState(nid, s.step, s.x + dx, s.y, s.heading, s.speed, s.accel, s.length, s.width)
                       for s in t.states)
        tracks[nid] = AgentTrack(nid, states)
    return tracks


def test_two_disjoint_crossings_two_events():
    base = generate(crossing_spec())
    tracks = {**_shifted(base, 0.0, "l_"), **_shifted(base, 500.0, "r_")}
    events = extract_events(Scene("pair", 0.1, tracks))
    assert len(events) == 2
    assert set(events[0].agent_ids).isdisjoint(events[1].agent_ids)


def test_events_pass_segment_check():
    params = PipelineParams()
    scene = generate(shifting_chain_spec())
    records = scan_scene(scene, params)
    for thread in event_threads(records, params.gap_steps + 1):
        assert thread
    for e in assemble_events(scene, records, params):
        bits = trace([v > params.msaa_threshold for v in e.step_intensity], e.start_step)
        assert verify_segment(bits, e.start_step, e.end_step, params.gap_steps)


def test_catalog_round_trip(tmp_path):
    events = extract_events(generate(crossing_spec())) + extract_events(generate(shifting_chain_spec()))
    for as_json in (False, True):
        path = tmp_path / ("c.jsonl" if as_json else "c.csv")
        write_catalog(events, path, as_json)
        back = read_catalog(path)
        assert [catalog_text([e]) for e in back] == [catalog_text([e]) for e in events]
    header = catalog_text(events).splitlines()[0]
    assert tuple(header.split(",")) == CATALOG_COLUMNS


def test_event_ids_and_lookup():
    events = extract_events(generate(crossing_spec(scene_id="s")))
    assert event_ids(events) == ["s/0"]
    assert find_event(events, "s/0") is events[0]
    assert find_event(events, "0") is events[0]
    with pytest.raises(UnknownEventId):
        find_event(events, "s/9")


def test_export_event(tmp_path):
    scene = generate(crossing_spec())
    event = extract_events(scene)[0]
    paths = export_event(scene, event, tmp_path, "e")
    assert [p.name for p in paths] == ["e_trajectories.csv", "e_msaa_trace.csv", "e_conflicts.csv"]
    trace_lines = paths[1].read_text().splitlines()
    assert len(trace_lines) == event.end_step - event.start_step + 2
    assert float(trace_lines[1].split(",")[1]) == pytest.approx(event.step_intensity[0])


def test_straight_line_mode_also_detects():
    from intermine.conflict import ConflictParams
    params = PipelineParams(conflict=ConflictParams(path_mode=PathMode.STRAIGHT_LINE))
    assert len(extract_events(generate(crossing_spec()), params)) == 1
