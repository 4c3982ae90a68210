#!/usr/bin/env python3
"""Regenerates the scenario fixtures under crates/core/fixtures.

Usage: python3 scripts/gen_fixtures.py
"""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"
DT = 0.1


def agent(id, kind, x, y, heading, speed, length=None, width=None, mass=None):
    dims = {
        "car": (4.5, 1.9, 1500.0),
        "truck": (9.0, 2.5, 12000.0),
        "motorcycle": (2.2, 0.8, 250.0),
        "pedestrian": (0.5, 0.5, None),
        "cyclist": (1.8, 0.6, None),
    }[kind]
    rec = {
        "id": id,
        "kind": kind,
        "x": round(x, 6),
        "y": round(y, 6),
        "heading": round(heading, 6),
        "speed": round(speed, 6),
        "length": length or dims[0],
        "width": width or dims[1],
    }
    m = mass or dims[2]
    if m is not None:
        rec["mass"] = m
    return rec


def ego_at(x, y, heading, speed):
    return agent("ego", "car", x, y, heading, speed)


def lane(id, direction, points):
    return {"id": id, "direction": direction, "points": [[float(a), float(b)] for a, b in points]}


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def straight_map(ego_y=0.0, same=(), opposite=(), half_width=5.25, x0=-100.0, x1=300.0, extra_drivable=()):
    lanes = [lane("ego_lane", "same", [(x0, ego_y), (x1, ego_y)])]
    for i, y in enumerate(same):
        lanes.append(lane(f"same_{i}", "same", [(x0, y), (x1, y)]))
    for i, y in enumerate(opposite):
        lanes.append(lane(f"opposite_{i}", "opposite", [(x1, y), (x0, y)]))
    drivable = [rect(x0, -half_width, x1, half_width)] + list(extra_drivable)
    return {"lanes": lanes, "drivable": drivable, "ego_lane": "ego_lane"}


def smoothstep(u):
    u = min(max(u, 0.0), 1.0)
    return 0.5 - 0.5 * math.cos(math.pi * u)


def write(name, map_, frames, meta):
    OUT.mkdir(parents=True, exist_ok=True)
    doc = {"map": map_, "frames": frames, "meta": meta}
    path = OUT / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {path.relative_to(OUT.parent.parent.parent)} ({len(frames)} frames)")


def frame(t, ego, agents, risky):
    return {"t": round(t, 6), "ego": ego, "agents": agents, "gt_risky": sorted(risky)}


def cut_in():
    """A faster car in the right lane merges in front of the ego; a car waits
    in the oncoming lane further ahead."""
    map_ = straight_map(same=[-3.5], opposite=[3.5])
    frames = []
    for i in range(40):
        t = i * DT
        ego = ego_at(10.0 * t, 0.0, 0.0, 10.0)
        v = 15.0
        x = -8.0 + v * t
        u = (t - 1.0) / 1.5
        y = -3.5 + 3.5 * smoothstep(u)
        dy = 3.5 * 0.5 * math.pi * math.sin(math.pi * u) / 1.5 if 0.0 < u < 1.0 else 0.0
        heading = math.atan2(dy, v)
        cutter = agent("cutter", "car", x, y, heading, math.hypot(v, dy))
        parked = agent("stopped_oncoming", "car", 85.0, 3.5, math.pi, 0.0)
        frames.append(frame(t, ego, [cutter, parked], ["cutter"]))
    write("scenes/cut_in.json", map_, frames, {"name": "cut_in", "dt": DT})


def intersection_map(cx=30.0, half=3.5):
    lanes = [
        lane("ego_lane", "same", [(-100.0, -1.75), (200.0, -1.75)]),
        lane("westbound", "opposite", [(200.0, 1.75), (-100.0, 1.75)]),
        lane("northbound", "same", [(cx + 1.75, -100.0), (cx + 1.75, 100.0)]),
        lane("southbound", "opposite", [(cx - 1.75, 100.0), (cx - 1.75, -100.0)]),
    ]
    x0, x1, y0, y1 = -100.0, 200.0, -100.0, 100.0
    cross = [
        [x0, -half], [cx - half, -half], [cx - half, y0], [cx + half, y0],
        [cx + half, -half], [x1, -half], [x1, half], [cx + half, half],
        [cx + half, y1], [cx - half, y1], [cx - half, half], [x0, half],
    ]
    return {"lanes": lanes, "drivable": [cross], "ego_lane": "ego_lane"}


def intersection():
    """The ego approaches a crossing while a car drives north across its path;
    an oncoming car waits at the far side of the junction."""
    cx = 30.0
    map_ = intersection_map(cx)
    frames = []
    for i in range(40):
        t = i * DT
        ego = ego_at(6.0 * t, -1.75, 0.0, 6.0)
        conflict = agent("crossing_car", "car", cx + 1.75, -40.0 + 12.0 * t, math.pi / 2, 12.0)
        stopped = agent("stopped_oncoming", "car", cx + 18.0, 1.75, math.pi, 0.0)
        frames.append(frame(t, ego, [conflict, stopped], ["crossing_car"]))
    meta = {
        "name": "intersection",
        "dt": DT,
        "same_lanes": 1,
        "opposite_lanes": 2,
        "stopped_id": "stopped_oncoming",
        "conflicting_id": "crossing_car",
    }
    write("scenes/intersection.json", map_, frames, meta)


def pedestrian_crossing():
    """Pedestrians and a cyclist cross ahead of the ego; a car is parked in
    the right lane."""
    map_ = straight_map(same=[-3.5], opposite=[3.5])
    frames = []
    n = 40
    for i in range(n):
        t = i * DT
        ego = ego_at(7.0 * t, 0.0, 0.0, 7.0)
        up, down = math.pi / 2, -math.pi / 2
        agents = [
            agent("ped_a", "pedestrian", 24.0, -6.0 + 1.4 * t, up, 1.4),
            agent("ped_b", "pedestrian", 25.5, -6.5 + 1.3 * t, up, 1.3),
            agent("ped_c", "pedestrian", 28.0, 6.0 - 1.5 * t, down, 1.5),
            agent("cyclist", "cyclist", 33.0, 6.5 - 3.0 * t, down, 3.0),
            agent("parked", "car", 48.0, -3.5, 0.0, 0.0),
        ]
        frames.append(frame(t, ego, agents, ["ped_a", "ped_b", "ped_c", "cyclist"]))
    write("scenes/pedestrian_crossing.json", map_, frames, {"name": "pedestrian_crossing", "dt": DT})


def perfect():
    """A car closing in from behind in the ego lane and a stopped car in the
    right lane; trivially separable."""
    map_ = straight_map(same=[-3.5], opposite=[3.5])
    frames = []
    for i in range(20):
        t = i * DT
        ego = ego_at(8.0 * t, 0.0, 0.0, 8.0)
        chaser = agent("chaser", "car", -25.0 + 14.0 * t, 0.0, 0.0, 14.0)
        stopped = agent("stopped", "car", 30.0, -3.5, 0.0, 0.0)
        frames.append(frame(t, ego, [chaser, stopped], ["chaser"]))
    write("perfect/rear_approach.json", map_, frames, {"name": "rear_approach", "dt": DT})


def straight_road():
    map_ = straight_map(same=[3.5], opposite=[-3.5])
    frames = [frame(0.0, ego_at(0.0, 0.0, 0.0, 8.0), [], [])]
    meta = {"name": "straight_road", "lane_width": 3.5, "road_half_width": 5.25}
    write("straight_road.json", map_, frames, meta)


def wall():
    """Open plaza with a wall segment cut into the drivable area; one car is
    hidden behind the wall and one is in plain view."""
    drivable = [[
        [-60.0, -60.0], [60.0, -60.0], [60.0, 60.0],
        [16.0, 60.0], [16.0, -8.0], [14.0, -8.0], [14.0, 60.0],
        [-60.0, 60.0],
    ]]
    map_ = {
        "lanes": [lane("ego_lane", "same", [(-60.0, 0.0), (60.0, 0.0)])],
        "drivable": drivable,
        "ego_lane": "ego_lane",
    }
    ego = ego_at(0.0, 0.0, 0.0, 0.0)
    agents = [
        agent("hidden", "car", 24.0, 5.0, math.pi, 3.0),
        agent("in_view", "car", 8.0, -15.0, math.pi / 2, 3.0),
    ]
    frames = [frame(0.0, ego, agents, ["hidden"])]
    meta = {"name": "wall", "wall": rect(14.0, -8.0, 16.0, 60.0), "open_drivable": [rect(-60.0, -60.0, 60.0, 60.0)]}
    write("wall.json", map_, frames, meta)


def mixed_intersection():
    cx = 30.0
    map_ = intersection_map(cx)
    frames = []
    for i in range(3):
        t = i * DT
        ego = ego_at(10.0 + 6.0 * t, -1.75, 0.0, 6.0)
        agents = [
            agent("north_car", "car", cx + 1.75, -20.0 + 8.0 * t, math.pi / 2, 8.0),
            agent("west_car", "car", 50.0 - 9.0 * t, 1.75, math.pi, 9.0),
            agent("truck", "truck", -5.0 + 5.0 * t, -1.75, 0.0, 5.0),
            agent("ped", "pedestrian", cx - 4.5, -6.0 + 1.2 * t, math.pi / 2, 1.2),
            agent("bike", "cyclist", cx + 5.0, 4.5, math.pi, 4.0),
        ]
        frames.append(frame(t, ego, agents, ["north_car", "ped"]))
    write("mixed_intersection.json", map_, frames, {"name": "mixed_intersection", "dt": DT})


def risk_bump():
    """A pedestrian stands in the middle of a wide single-lane road ahead of
    the ego."""
    map_ = {
        "lanes": [lane("ego_lane", "same", [(-100.0, 0.0), (300.0, 0.0)])],
        "drivable": [rect(-100.0, -10.0, 300.0, 10.0)],
        "ego_lane": "ego_lane",
    }
    ego = ego_at(0.0, 0.0, 0.0, 8.0)
    bump = agent("standing", "pedestrian", 14.0, 0.0, math.pi / 2, 0.0)
    frames = [frame(0.0, ego, [bump], ["standing"])]
    write("risk_bump.json", map_, frames, {"name": "risk_bump", "bump_center": [14.0, 0.0]})


if __name__ == "__main__":
    cut_in()
    intersection()
    pedestrian_crossing()
    perfect()
    straight_road()
    wall()
    mixed_intersection()
    risk_bump()
