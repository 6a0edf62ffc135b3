#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::{DVector, Vector3};
use nsb_avoid::{
    sense_all, sigma, Configuration, KinematicChain, Obstacle, Scene, SensorMount, Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub const BUNDLED: [&str; 7] = [
    "case1",
    "case2",
    "case3",
    "case4",
    "case5",
    "case5_table",
    "case5_table_box",
];

fn mount(link_index: usize, offset: [f64; 3], fov: f64, rest: f64, threshold: f64) -> SensorMount {
    SensorMount {
        link_index,
        offset: Vector3::from(offset),
        field_of_view: fov,
        rest_length: rest,
        threshold,
    }
}

/// youBot with eight base sensors and two four-sensor rings on the arm.
pub fn sensored_youbot() -> KinematicChain {
    let mut chain = KinematicChain::youbot();
    for (x, y) in [
        (0.29, 0.19),
        (0.29, 0.0),
        (0.29, -0.19),
        (0.0, -0.19),
        (-0.29, -0.19),
        (-0.29, 0.0),
        (-0.29, 0.19),
        (0.0, 0.19),
    ] {
        chain
            .sensors
            .push(mount(2, [x - 0.167, y, -0.05], 1.5, 0.9, 0.4));
    }
    for (link, along) in [(4, -0.0775), (5, -0.0675)] {
        for (y, z) in [(0.04, 0.0), (0.0, 0.04), (-0.04, 0.0), (0.0, -0.04)] {
            chain
                .sensors
                .push(mount(link, [along, y, z], 0.6, 0.3, 0.1));
        }
    }
    chain
}

/// Uniform configuration inside the joint limits shrunk by `margin` on
/// each side (base travel restricted to a 2 m square around the origin).
pub fn random_q(rng: &mut impl Rng, chain: &KinematicChain, margin: f64) -> Configuration {
    DVector::from_iterator(
        chain.dof(),
        chain.joints.iter().enumerate().map(|(i, j)| {
            let (lo, hi) = match i {
                0 | 1 => (-1.0, 1.0),
                2 => (-PI, PI),
                _ => (j.limits[0], j.limits[1]),
            };
            let pad = (hi - lo) * margin;
            rng.random_range(lo + pad..hi - pad)
        }),
    )
}

pub fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation_rpy(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-PI..PI),
        rng.random_range(-PI / 2.0..PI / 2.0),
        rng.random_range(-PI..PI),
    )
}

/// A configuration and a single obstacle such that at least one sensor is
/// compressed by `min_compression` or more and no sensor touches the
/// obstacle. Spheres only unless `any_shape`.
pub fn active_state(
    rng: &mut impl Rng,
    chain: &KinematicChain,
    min_compression: f64,
    any_shape: bool,
) -> (Configuration, Scene) {
    loop {
        let q = random_q(rng, chain, 0.05);
        let frames = chain.frames(&q).unwrap();
        let k = rng.random_range(0..chain.sensors.len());
        let m = &chain.sensors[k];
        let p = frames.point(m.link_index, &m.offset).unwrap();
        if m.rest_length - 0.01 <= min_compression {
            continue;
        }
        let gap = rng.random_range(0.01..m.rest_length - min_compression);
        let dir = random_unit(rng);
        let shape = match if any_shape { rng.random_range(0..3) } else { 0 } {
            0 => {
                let radius = rng.random_range(0.03..0.25);
                Shape::Sphere {
                    center: p + dir * (gap + radius),
                    radius,
                }
            }
            1 => {
                let half = Vector3::new(
                    rng.random_range(0.03..0.3),
                    rng.random_range(0.03..0.3),
                    rng.random_range(0.03..0.3),
                );
                // sensor sits `gap` outside the surface point nearest a far probe
                let rpy = random_rotation_rpy(rng);
                let probe = Shape::Box {
                    center: Vector3::zeros(),
                    half_extents: half,
                    rpy,
                };
                let face = probe.closest_point(&(Vector3::x() * 10.0)).point;
                let out = face.normalize();
                Shape::Box {
                    center: p - face - out * gap,
                    half_extents: half,
                    rpy,
                }
            }
            _ => {
                let axis = random_unit(rng);
                let radial = axis.cross(&random_unit(rng)).normalize();
                let radius = rng.random_range(0.03..0.2);
                Shape::Cylinder {
                    center: p + radial * (gap + radius),
                    axis,
                    radius,
                    half_height: rng.random_range(0.1..0.5),
                }
            }
        };
        let scene = Scene::new(vec![Obstacle::fixed("obstacle", shape)]);
        let readings = sense_all(chain, &q, &scene, 0.0).unwrap();
        // σ has a kink where a sensor touches the obstacle
        let smooth = readings
            .iter()
            .all(|r| scene.query(0, &r.position, 0.0).distance > 5e-3);
        let compressed = readings.iter().zip(&chain.sensors).any(|(r, m)| {
            r.distance()
                .is_some_and(|d| d <= m.rest_length - min_compression)
        });
        if smooth && compressed {
            return (q, scene);
        }
    }
}

pub fn sigma_at(chain: &KinematicChain, q: &Configuration, scene: &Scene) -> f64 {
    sigma(&sense_all(chain, q, scene, 0.0).unwrap(), &chain.sensors)
}

/// Central finite-difference gradient of σ with step `h`.
pub fn sigma_gradient_fd(
    chain: &KinematicChain,
    q: &Configuration,
    scene: &Scene,
    h: f64,
) -> DVector<f64> {
    DVector::from_iterator(
        q.len(),
        (0..q.len()).map(|i| {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[i] += h;
            minus[i] -= h;
            (sigma_at(chain, &plus, scene) - sigma_at(chain, &minus, scene)) / (2.0 * h)
        }),
    )
}
