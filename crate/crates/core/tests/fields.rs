mod common;

use common::*;
use riskfield::composer::rasterize_vrf;
use riskfield::field::maf::{sigma, AgentMaf, SeverityMode};
use riskfield::field::{MafParams, RoadField, RpfParams, VrfParams, VruMotion};
use riskfield::predictor::{predict, HypothesisSet, TrajectoryHypothesis};
use riskfield::{AgentKind, AgentState, EngineConfig, GridSpec, PathGeometry, Point2, RiskGrid};

const SCENES: [&str; 4] = [
    "scenes/cut_in.json",
    "scenes/intersection.json",
    "scenes/pedestrian_crossing.json",
    "mixed_intersection.json",
];

#[test]
fn maf_grid_matches_direct_formula() {
    let cfg = EngineConfig::default();
    for (k, name) in SCENES.iter().enumerate() {
        let seq = load(name);
        let eng = engine(&seq, "full");
        let frame_idx = seq.frames.len() / 2;
        let frame = &seq.frames[frame_idx];
        let composed = eng.compose_frame(frame_idx, frame).unwrap();
        let sets: Vec<(&AgentState, HypothesisSet)> = frame
            .agents
            .iter()
            .filter(|a| a.kind.is_motorized())
            .map(|a| (a, predict(a, cfg.predictor.horizon, cfg.predictor.dt, &cfg.predictor).unwrap()))
            .collect();
        for cell in random_cells(&composed.maf, 1000, 11 + k as u64) {
            let p = composed.grid.cell_to_world(cell);
            let expected: f64 = sets.iter().map(|(a, set)| oracle_maf(p, a, set, &cfg.maf)).sum();
            let got = composed.maf.get(cell);
            assert!(rel_err(got, expected) < 1e-9, "{name} {cell:?}: {got} vs {expected}");
        }
    }
}

#[test]
fn vrf_grid_matches_direct_formula() {
    let cfg = EngineConfig::default();
    for (k, name) in ["scenes/pedestrian_crossing.json", "mixed_intersection.json"].iter().enumerate() {
        let seq = load(name);
        let eng = engine(&seq, "full");
        let frame = &seq.frames[1];
        let composed = eng.compose_frame(1, frame).unwrap();
        let vrus: Vec<&AgentState> = frame.agents.iter().filter(|a| a.kind.is_vru()).collect();
        assert!(!vrus.is_empty());
        for cell in random_cells(&composed.vrf, 1000, 21 + k as u64) {
            let p = composed.grid.cell_to_world(cell);
            let expected: f64 = vrus.iter().map(|a| oracle_vrf(p, a, &cfg.vrf)).sum();
            assert!(rel_err(composed.vrf.get(cell), expected) < 1e-9, "{name} {cell:?}");
        }
    }
}

#[test]
fn rpf_grid_matches_direct_formula() {
    let cfg = EngineConfig::default();
    for (k, name) in ["straight_road.json", "scenes/intersection.json", "wall.json", "scenes/cut_in.json"]
        .iter()
        .enumerate()
    {
        let seq = load(name);
        let eng = engine(&seq, "full");
        let composed = eng.compose_frame(0, &seq.frames[0]).unwrap();
        for cell in random_cells(&composed.rpf, 1000, 31 + k as u64) {
            let p = composed.grid.cell_to_world(cell);
            let expected = oracle_rpf(p, &seq.map, &cfg.rpf);
            assert!(rel_err(composed.rpf.get(cell), expected) < 1e-9, "{name} {cell:?}");
        }
    }
}

fn straight(len: f64, speed: f64) -> PathGeometry {
    let n = 41;
    let pts = (0..n).map(|i| Point2::new(len * i as f64 / (n - 1) as f64, 0.0)).collect();
    PathGeometry::new(pts, Some(vec![speed; n])).unwrap()
}

fn car(speed: f64) -> AgentState {
    AgentState {
        id: "c".into(),
        kind: AgentKind::Car,
        position: Point2::new(0.0, 0.0),
        heading: 0.0,
        speed,
        length: 4.5,
        width: 1.9,
        mass_kg: 1500.0,
    }
}

#[test]
fn maf_is_zero_at_path_end_and_outside_domain() {
    let path = straight(40.0, 10.0);
    let set = HypothesisSet::new(vec![TrajectoryHypothesis { path, probability: 1.0 }]).unwrap();
    let maf = AgentMaf::new(&car(10.0), &set, &MafParams::default(), SeverityMode::PathAverage);
    assert_eq!(maf.value_at(Point2::new(40.0, 0.0)), 0.0);
    assert!(maf.value_at(Point2::new(39.0, 0.0)) > 0.0);
    for p in [(40.001, 0.0), (45.0, 1.0), (-0.001, 0.0), (-3.0, -2.0), (60.0, 30.0)] {
        assert_eq!(maf.value_at(Point2::new(p.0, p.1)), 0.0, "{p:?}");
    }

    let grid = GridSpec::new(Point2::new(20.0, 0.0), 30.0, 0.5, 0.0);
    let raster = riskfield::composer::rasterize_maf(&[&maf], &grid, 1.0);
    let mut outside = 0;
    for (i, v) in raster.values.iter().enumerate() {
        let p = grid.cell_to_world(grid.cell_of_index(i));
        if p.x < 0.0 || p.x > 40.0 {
            outside += 1;
            assert_eq!(*v, 0.0, "{p:?}");
        }
    }
    assert!(outside > 0);
}

#[test]
fn velocity_variant_width_is_strictly_ordered() {
    let params = MafParams::default();
    assert!(params.k_v > 0.0);
    for s in [0.0, 20.0, 40.0] {
        let w: Vec<f64> = [0.0, 10.0, 20.0].iter().map(|&v| sigma(s, &straight(60.0, v), &params)).collect();
        assert!(w[0] < w[1] && w[1] < w[2], "s={s}: {w:?}");
    }
    let flat = MafParams { k_v: 0.0, ..params };
    for s in [0.0, 20.0, 40.0] {
        let w: Vec<f64> = [0.0, 10.0, 20.0].iter().map(|&v| sigma(s, &straight(60.0, v), &flat)).collect();
        assert_eq!(w[0], w[1]);
        assert_eq!(w[1], w[2]);
    }
}

fn walker(heading: f64, speed: f64) -> AgentState {
    AgentState {
        id: "p".into(),
        kind: AgentKind::Pedestrian,
        position: Point2::new(1.3, -0.7),
        heading,
        speed,
        length: 0.5,
        width: 0.5,
        mass_kg: 0.0,
    }
}

#[test]
fn vrf_argmax_is_shifted_forward() {
    let params = VrfParams::default();
    assert_eq!(params.lambda_f, 0.5);
    for heading in [0.0, 0.7, 2.0, -1.2] {
        let vru = walker(heading, 2.0);
        let grid = GridSpec::new(vru.position, 8.0, 0.25, 0.0);
        let g = rasterize_vrf(&[VruMotion::of_agent(&vru)], &grid, &params, 1.0);
        let peak = grid.cell_to_world(g.argmax().unwrap());
        let expected = vru.position + Point2::from_angle(heading) * 1.0;
        assert!(peak.distance(expected) <= 0.25, "heading {heading}: {peak:?} vs {expected:?}");
        assert!(peak.distance(vru.position) > 0.75);
    }
}

#[test]
fn vrf_is_bounded_and_decays() {
    let params = VrfParams::default();
    let vru = walker(0.4, 1.5);
    let k = VruMotion::of_agent(&vru).kernel(&params);
    assert_eq!(k.value_at(k.center), params.h);
    let mut prev = params.h;
    for i in 1..40 {
        let p = k.center + Point2::from_angle(1.1) * (0.5 * i as f64);
        let v = k.value_at(p);
        assert!(v > 0.0 && v < prev);
        prev = v;
    }
    let ahead = k.value_at(k.center + k.tangent * 3.0);
    let side = k.value_at(k.center + k.tangent.perp() * 3.0);
    assert!(ahead > side);
}

fn rows_near(grid: &RiskGrid, y: f64) -> usize {
    (0..grid.rows())
        .min_by(|&a, &b| {
            let ya = grid.grid.cell_to_world(riskfield::Cell::new(a, 0)).y;
            let yb = grid.grid.cell_to_world(riskfield::Cell::new(b, 0)).y;
            (ya - y).abs().total_cmp(&(yb - y).abs())
        })
        .unwrap()
}

#[test]
fn straight_road_penalty_ordering_and_column_constancy() {
    let seq = load("straight_road.json");
    let eng = engine(&seq, "full");
    let rpf = eng.compose_frame(0, &seq.frames[0]).unwrap().rpf;
    let grid = &rpf.grid;

    for r in 0..rpf.rows() {
        let row = rpf.row(r);
        for v in row {
            assert!((v - row[0]).abs() <= 1e-12 * row[0].abs().max(1.0), "row {r}");
        }
    }

    let mut off_min = f64::INFINITY;
    let mut on_max = f64::NEG_INFINITY;
    for r in 0..rpf.rows() {
        let y = grid.cell_to_world(riskfield::Cell::new(r, 0)).y;
        if y.abs() > 5.25 {
            off_min = off_min.min(rpf.row(r)[0]);
        } else {
            on_max = on_max.max(rpf.row(r)[0]);
        }
    }
    let opposite = rpf.row(rows_near(&rpf, -3.5))[0];
    let same = rpf.row(rows_near(&rpf, 3.5))[0];
    let ego = rpf.row(rows_near(&rpf, 0.0))[0];
    assert!(off_min > on_max);
    assert!(off_min > opposite && opposite > same, "{off_min} {opposite} {same}");
    assert!(same > ego);
}

#[test]
fn intersection_corners_carry_the_off_road_penalty() {
    let seq = load("scenes/intersection.json");
    let eng = engine(&seq, "full");
    let rpf = eng.compose_frame(0, &seq.frames[0]).unwrap().rpf;
    let lambda = RpfParams::default().lambda_off;
    let (r, c) = (rpf.rows() - 1, rpf.cols() - 1);
    for cell in [(0, 0), (0, c), (r, 0), (r, c)] {
        let v = rpf.get(riskfield::Cell::new(cell.0, cell.1));
        assert!((v - lambda).abs() <= 1e-5 * lambda, "{cell:?}: {v}");
    }
    let road = RoadField::new(&seq.map, &RpfParams::default());
    let northbound = road.value_at(Point2::new(31.75, -30.0));
    let southbound = road.value_at(Point2::new(28.25, -30.0));
    let shoulder = road.value_at(Point2::new(33.0, -30.0));
    assert!(southbound > northbound && northbound > shoulder);
}

#[test]
fn rpf_config_rejects_misordered_weights() {
    let bad = [
        RpfParams { lambda_off: 1.0, lambda_opp: 1.0, ..Default::default() },
        RpfParams { lambda_opp: 0.3, lambda_same: 0.3, ..Default::default() },
        RpfParams { lambda_off: 0.5, lambda_opp: 1.0, ..Default::default() },
        RpfParams { lambda_same: -0.1, ..Default::default() },
    ];
    for p in bad {
        assert!(p.validate().is_err(), "{p:?}");
        let cfg = EngineConfig { rpf: p, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
    assert!(RpfParams::default().validate().is_ok());
}
