mod common;

use nalgebra::{DVector, Vector3};
use nsb_avoid::controller::DEFAULT_DAMPING;
use nsb_avoid::{
    jacobian_obstacle, load_scenario, metrics, row_pseudo_inverse, run, sense_all, sigma,
    ControllerGains, ControllerKind, Error, KinematicChain, Polyline, ReferencePath, Robot,
    Scenario, ScenarioFile, Scene, Supervisor, TaskPoint,
};

use common::*;

fn arm_pose() -> DVector<f64> {
    DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.9, -1.2, 0.3, 0.0])
}

fn tracking_scenario(t_s: f64, duration: f64) -> Scenario {
    let chain = KinematicChain::youbot();
    let q0 = arm_pose();
    let start = chain
        .frames(&q0)
        .unwrap()
        .point(7, &Vector3::zeros())
        .unwrap();
    Scenario {
        name: "tracking".into(),
        robot: Robot::new(chain, TaskPoint::new(7, Vector3::zeros())),
        scene: Scene::default(),
        path: ReferencePath::Line {
            waypoints: Polyline::new(vec![
                start + Vector3::new(0.03, -0.02, 0.02),
                start + Vector3::new(0.3, 0.2, 0.05),
            ]),
            speed: 0.1,
        },
        gains: ControllerGains {
            gamma_o: 1.0,
            gamma_g: 2.0,
            supervisor: Supervisor::Arctan { k: 10.0 },
            t_s,
            damping: DEFAULT_DAMPING,
            velocity_limit: None,
        },
        controller: ControllerKind::Nsb,
        duration,
        initial_q: q0,
        peers: None,
    }
}

#[test]
fn zero_duration_logs_the_initial_state_only() {
    let log = run(&tracking_scenario(0.01, 0.0)).unwrap();
    assert_eq!(log.rows.len(), 1);
    assert_eq!(log.rows[0].t, 0.0);
    assert_eq!(log.rows[0].q, arm_pose().as_slice());
}

#[test]
fn euler_error_is_first_order_in_the_step() {
    let final_q = |t_s: f64| {
        DVector::from_vec(
            run(&tracking_scenario(t_s, 2.0))
                .unwrap()
                .rows
                .last()
                .unwrap()
                .q
                .clone(),
        )
    };
    let reference = final_q(0.0005);
    let errors: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&h| (final_q(h) - &reference).norm())
        .collect();
    for pair in errors.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((1.6..2.6).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn activation_tick_carries_at_least_the_threshold_energy() {
    // when d_min first reaches f, the nearest sensor alone stores ½(f − r)²
    let scenario = load_scenario(scenario_path("case1")).unwrap();
    let log = run(&scenario).unwrap();
    let m = &scenario.robot.chain.sensors[0];
    let floor = 0.5 * (m.threshold - m.rest_length).powi(2);
    let activations: Vec<_> = log.rows.iter().filter(|r| r.e0_flag).collect();
    assert!(!activations.is_empty());
    for row in activations {
        assert!(row.d_min <= m.threshold);
        assert!(row.sigma >= floor, "σ = {} at t = {}", row.sigma, row.t);
    }
}

#[test]
fn avoidance_step_reduces_pseudo_energy() {
    let chain = sensored_youbot();
    let mut rng = rng(11);
    for _ in 0..200 {
        let (q, scene) = active_state(&mut rng, &chain, 0.02, true);
        let readings = sense_all(&chain, &q, &scene, 0.0).unwrap();
        let s0 = sigma(&readings, &chain.sensors);
        let j_o = jacobian_obstacle(&chain, &q, &readings).unwrap();
        let qdot = row_pseudo_inverse(&j_o, DEFAULT_DAMPING) * (-s0);
        let s1 = sigma_at(&chain, &(&q + qdot * 1e-3), &scene);
        assert!(s1 < s0, "σ {s0} -> {s1}");
    }
}

#[test]
fn goal_error_decays_at_the_clik_rate() {
    // with exact feedforward the error obeys e_{k+1} ≈ (1 − γ_g t_s) e_k
    let scenario = tracking_scenario(0.001, 1.0);
    let log = run(&scenario).unwrap();
    let e0 = log.rows[0].x_err;
    for row in log.rows.iter().step_by(100) {
        let expected = e0 * (-scenario.gains.gamma_g * row.t).exp();
        assert!(
            (row.x_err - expected).abs() < 0.02 * e0,
            "t = {}: {} vs {expected}",
            row.t,
            row.x_err
        );
    }
}

#[test]
fn bundled_scenarios_load_and_round_trip() {
    for name in BUNDLED {
        let file = ScenarioFile::load(scenario_path(name)).unwrap();
        let again = ScenarioFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file, again, "{name}");
        let scenario = file.build().unwrap();
        assert!(scenario.duration > 0.0);
    }
}

#[test]
fn schema_errors_name_the_offending_field() {
    let text = std::fs::read_to_string(scenario_path("case1")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["gains"]["t_s"] = serde_json::json!("fast");
    match ScenarioFile::from_json(&doc.to_string()) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "gains.t_s"),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn empty_scene_reports_no_clearance() {
    let scenario = tracking_scenario(0.01, 5.0);
    let m = metrics(&run(&scenario).unwrap(), &scenario);
    assert!(m.min_clearance.is_infinite());
    assert!(m.min_clearance_by_obstacle.is_empty());
    assert!(m.final_goal_error < 1e-3);
}

#[test]
fn schema_lists_every_top_level_key() {
    let text = std::fs::read_to_string(scenario_path("scenario.schema")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    let documented: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
    for name in BUNDLED {
        let doc: serde_json::Value =
            serde_json::from_str(&ScenarioFile::load(scenario_path(name)).unwrap().to_json())
                .unwrap();
        for key in doc.as_object().unwrap().keys() {
            assert!(
                documented.contains(&key),
                "{name}: `{key}` missing from the schema"
            );
        }
    }
    for key in schema["required"].as_array().unwrap() {
        assert!(documented.iter().any(|d| *d == key));
    }
}

#[test]
fn bundled_scenarios_are_collision_free() {
    for name in BUNDLED {
        let scenario = load_scenario(scenario_path(name)).unwrap();
        let logs = nsb_avoid::run_all(&scenario).unwrap();
        for log in &logs {
            let m = metrics(log, &scenario);
            assert!(
                m.min_clearance > 0.0,
                "{name}/{}: {}",
                log.robot_name,
                m.min_clearance
            );
        }
    }
}

#[test]
fn resting_robot_neither_chatters_nor_deviates() {
    let mut scenario = tracking_scenario(0.01, 2.0);
    let start = scenario
        .robot
        .chain
        .frames(&scenario.initial_q)
        .unwrap()
        .point(7, &Vector3::zeros())
        .unwrap();
    scenario.path = ReferencePath::Hold(start);
    let m = metrics(&run(&scenario).unwrap(), &scenario);
    assert_eq!(m.chattering, 0.0);
    assert_eq!(m.max_path_deviation, 0.0);
    assert_eq!(m.return_time, Some(0.0));
}
