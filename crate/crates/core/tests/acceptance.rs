//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are printed even when everything passes.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use nsb_avoid::controller::DEFAULT_DAMPING;
use nsb_avoid::scenario::ControllerChoice;
use nsb_avoid::{
    goal_velocity, jacobian_obstacle, lambda_arctan, lambda_piecewise, metrics, row_pseudo_inverse,
    run, run_all, sample_path, sense_all, ControllerGains, ControllerKind, KinematicChain, Metrics,
    Polyline, ReferencePath, Robot, Scenario, ScenarioFile, Scene, Supervisor, TaskPoint,
    TrajectoryLog,
};

use common::*;

/// Allowed rise of the tracking error between consecutive ticks after the
/// first 50.
const MONOTONE_SLACK: f64 = 0.0;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, title: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} [{id:>2}] {title}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn load(name: &str) -> ScenarioFile {
    ScenarioFile::load(scenario_path(name)).expect("bundled scenario loads")
}

fn simulate(file: &ScenarioFile) -> (Scenario, TrajectoryLog, Metrics) {
    let scenario = file.build().expect("scenario builds");
    let log = run(&scenario).expect("run succeeds");
    let m = metrics(&log, &scenario);
    (scenario, log, m)
}

fn gradient(report: &mut Report) {
    let chain = sensored_youbot();
    let mut rng = rng(100);
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (q, scene) = active_state(&mut rng, &chain, 0.0, false);
        let readings = sense_all(&chain, &q, &scene, 0.0).unwrap();
        let j_o = jacobian_obstacle(&chain, &q, &readings)
            .unwrap()
            .transpose();
        let fd = sigma_gradient_fd(&chain, &q, &scene, 1e-6);
        worst = worst.max((&j_o - &fd).norm() / j_o.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    report.line(
        1,
        "gradient of σ",
        worst < 1e-4 && secs < 10.0,
        format!("max relative error {worst:.2e} (< 1e-4) over 100 sphere states in {secs:.2} s (< 10 s)"),
    );
}

fn null_space(report: &mut Report) {
    let chain = sensored_youbot();
    let robot = Robot::new(chain.clone(), TaskPoint::new(7, Vector3::zeros()));
    let mut rng = rng(200);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        // a compression of 1 cm keeps ‖J_o‖ well above the damping floor
        let (q, scene) = active_state(&mut rng, &chain, 0.01, true);
        let readings = sense_all(&chain, &q, &scene, 0.0).unwrap();
        let j_o = jacobian_obstacle(&chain, &q, &readings).unwrap();
        let frames = chain.frames(&q).unwrap();
        let x = robot.task_position(&frames).unwrap();
        let j_g = robot.task_jacobian(&frames).unwrap();
        let x_d = x + random_unit(&mut rng) * 0.2;
        let qdot_g = goal_velocity(
            &j_g,
            &DVector::from_column_slice(x.as_slice()),
            &DVector::from_column_slice(x_d.as_slice()),
            &DVector::zeros(3),
            2.0,
            DEFAULT_DAMPING,
        )
        .unwrap();
        let pinv = row_pseudo_inverse(&j_o, DEFAULT_DAMPING);
        let projected = &qdot_g - &pinv * (&j_o * &qdot_g)[0];
        worst = worst.max((&j_o * projected)[0].abs());
    }
    report.line(
        2,
        "null-space annihilation",
        worst < 1e-9,
        format!("max |J_o (I - J_o† J_o) q̇_g| = {worst:.2e} (< 1e-9) over 1000 active states"),
    );
}

fn supervisors(report: &mut Report) {
    let (f, k, eps) = (0.4, 10.0, 0.08);
    let mid = lambda_arctan(f, f, k) == 0.5 && lambda_piecewise(f, f, eps) == 0.5;
    let n = 10_000;
    let grid: Vec<f64> = (0..n)
        .map(|i| 2.0 * f * i as f64 / (n - 1) as f64)
        .collect();
    let mut saturated = true;
    let mut monotone = true;
    for w in grid.windows(2) {
        monotone &= lambda_arctan(w[1], f, k) <= lambda_arctan(w[0], f, k);
        monotone &= lambda_piecewise(w[1], f, eps) <= lambda_piecewise(w[0], f, eps);
    }
    for &d in &grid {
        if d < f - eps {
            saturated &= lambda_piecewise(d, f, eps) == 1.0;
        } else if d > f + eps {
            saturated &= lambda_piecewise(d, f, eps) == 0.0;
        }
    }
    report.line(
        3,
        "supervisor laws",
        mid && saturated && monotone,
        format!(
            "λ(f) = 0.5 for both: {mid}; piecewise 1 below f-ε and 0 above f+ε: {saturated}; nonincreasing on {n} points: {monotone}"
        ),
    );
}

fn case1(report: &mut Report) {
    let start = Instant::now();
    let (_, log, m) = simulate(&load("case1"));
    let secs = start.elapsed().as_secs_f64();
    let energised: Vec<usize> = (0..log.rows.len())
        .filter(|&i| log.rows[i].sigma > 0.0)
        .collect();
    let contiguous = match (energised.first(), energised.last()) {
        (Some(&a), Some(&b)) => b - a + 1 == energised.len(),
        _ => false,
    };
    let window = energised
        .first()
        .zip(energised.last())
        .map_or("none".into(), |(&a, &b)| {
            format!("{:.3}-{:.3} s", log.rows[a].t, log.rows[b].t)
        });
    let returned = m.return_time.is_some();
    report.line(
        4,
        "case 1 reproduction",
        m.min_clearance > 0.0 && contiguous && returned && secs < 60.0,
        format!(
            "min clearance {:.4} m (> 0); σ > 0 on one window {window}: {contiguous}; back within 0.05 m at t = {} s; {secs:.2} s (< 60 s)",
            m.min_clearance,
            m.return_time.map_or("never".into(), |t| format!("{t:.3}")),
        ),
    );
}

fn with_supervisor(file: &ScenarioFile, s: Supervisor) -> ScenarioFile {
    let mut f = file.clone();
    f.gains.supervisor = s;
    f
}

fn chattering(report: &mut Report) {
    let file = load("case1");
    let (_, _, arctan) = simulate(&with_supervisor(&file, Supervisor::Arctan { k: 10.0 }));
    let (_, _, crisp) = simulate(&with_supervisor(&file, Supervisor::Crisp));
    let ratio = crisp.chattering / arctan.chattering;
    report.line(
        5,
        "chattering, crisp vs arctan",
        ratio > 5.0,
        format!(
            "crisp {:.3} / arctan {:.3} = {ratio:.1} (> 5)",
            crisp.chattering, arctan.chattering
        ),
    );
}

fn apf(report: &mut Report) {
    let file = load("case1");
    let (_, _, nsb) = simulate(&file);
    let mut apf_file = file.clone();
    apf_file.controller = ControllerChoice::Apf;
    let (_, _, apf) = simulate(&apf_file);
    let (nr, ar) = (
        nsb.return_time.unwrap_or(f64::INFINITY),
        apf.return_time.unwrap_or(f64::INFINITY),
    );
    report.line(
        6,
        "NSB vs APF on case 1",
        nsb.max_path_deviation < apf.max_path_deviation && nr < ar,
        format!(
            "max deviation {:.4} < {:.4} m; return time {nr:.3} < {ar:.3} s",
            nsb.max_path_deviation, apf.max_path_deviation
        ),
    );
}

fn clik(report: &mut Report) {
    let chain = KinematicChain::youbot();
    let q0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.9, -1.2, 0.3, 0.0]);
    let start = chain
        .frames(&q0)
        .unwrap()
        .point(7, &Vector3::zeros())
        .unwrap();
    // The reference is still moving when the run ends: where a sampled
    // reference stops, the error jumps once by up to speed * t_s.
    let scenario = Scenario {
        name: "clik".into(),
        robot: Robot::new(chain, TaskPoint::new(7, Vector3::zeros())),
        scene: Scene::default(),
        path: ReferencePath::Line {
            waypoints: Polyline::new(vec![
                start + Vector3::new(0.04, 0.03, -0.02),
                start + Vector3::new(1.0, -0.8, 0.2),
            ]),
            speed: 0.1,
        },
        gains: ControllerGains {
            gamma_o: 1.0,
            gamma_g: 2.0,
            supervisor: Supervisor::Arctan { k: 10.0 },
            t_s: 1e-3,
            damping: DEFAULT_DAMPING,
            velocity_limit: None,
        },
        controller: ControllerKind::Nsb,
        duration: 10.0,
        initial_q: q0,
        peers: None,
    };
    let log = run(&scenario).unwrap();
    let errors: Vec<f64> = log.rows.iter().map(|r| r.x_err).collect();
    let rise = errors[50..]
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let last = *errors.last().unwrap();
    let moving = sample_path(&scenario.path, scenario.duration)
        .velocity
        .norm()
        > 0.0;
    report.line(
        7,
        "CLIK convergence",
        last < 1e-3 && rise <= MONOTONE_SLACK && moving,
        format!("final error {last:.2e} m (< 1e-3); largest change after tick 50 {rise:.1e} m (<= {MONOTONE_SLACK})"),
    );
}

fn case4(report: &mut Report) {
    let (_, _, m) = simulate(&load("case4"));
    report.line(
        8,
        "case 4 hold under a fly-by",
        m.final_goal_error < 1e-2 && m.min_clearance > 0.0,
        format!(
            "final error {:.2e} m (< 1e-2); min clearance {:.4} m (> 0)",
            m.final_goal_error, m.min_clearance
        ),
    );
}

fn case5(report: &mut Report) {
    let ball = Vector3::new(-0.03, 3.2, 0.02);
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["case5", "case5_table_box"] {
        let (_, log, m) = simulate(&load(name));
        let reach = (log.rows.last().unwrap().x - ball).norm();
        pass &= reach < 0.05;
        parts.push(format!("{name} ends {reach:.4} m from the ball"));
        if let Some(&box_clearance) = m.min_clearance_by_obstacle.get("box") {
            pass &= box_clearance > 0.0;
            parts.push(format!("box clearance {box_clearance:.4} m (> 0)"));
        } else if name == "case5_table_box" {
            pass = false;
            parts.push("no box in scene".into());
        }
    }
    report.line(
        9,
        "case 5 grasp approach",
        pass,
        format!("{} (reach < 0.05 m)", parts.join("; ")),
    );
}

fn determinism(report: &mut Report) {
    let mut identical = Vec::new();
    for name in BUNDLED {
        let scenario = load(name).build().unwrap();
        let a: Vec<String> = run_all(&scenario)
            .unwrap()
            .iter()
            .map(|l| l.to_csv_string())
            .collect();
        let b: Vec<String> = run_all(&scenario)
            .unwrap()
            .iter()
            .map(|l| l.to_csv_string())
            .collect();
        identical.push((name, a == b));
    }
    let pass = identical.iter().all(|(_, same)| *same);
    let differing: Vec<&str> = identical
        .iter()
        .filter(|(_, s)| !s)
        .map(|(n, _)| *n)
        .collect();
    report.line(
        10,
        "determinism",
        pass,
        if pass {
            format!(
                "byte-identical CSV on two runs of all {} bundled scenarios",
                identical.len()
            )
        } else {
            format!("CSV differs for {}", differing.join(", "))
        },
    );
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    gradient(&mut report);
    null_space(&mut report);
    supervisors(&mut report);
    case1(&mut report);
    chattering(&mut report);
    apf(&mut report);
    clik(&mut report);
    case4(&mut report);
    case5(&mut report);
    determinism(&mut report);
    if report.failures == 0 {
        println!("acceptance: all criteria met");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
