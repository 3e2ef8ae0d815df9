//! Synthetic collision-avoidance surrogate.
//!
//! A differential-drive robot wanders a plane of circular obstacles while
//! a 270-degree range scanner samples the scene at 10 Hz. The supervision
//! target is the angular velocity of an analytic repulsive-field
//! controller, which the robot also follows, so traces stay collision-free
//! and the mapping from scan to steering is learnable. Everything is pure
//! in (config, seed).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::dataio::{SequenceSample, Target};
use crate::tensor::Tensor;

const FIELD_OF_VIEW: f64 = 1.5 * PI; // 270 degrees
const MAX_RANGE: f64 = 5.0;
const WORLD_SCALE: f64 = 5.0;
const DT: f64 = 0.1; // 10 Hz
const SPEED: f64 = 0.6;
const TURN_RATE: f64 = 1.5;
const STEER_GAIN: f64 = 24.0;

/// Circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    /// Scanner rays, >= 8.
    pub rays: usize,
    /// Sub-sequence length, >= 2.
    pub sub_seq_len: usize,
    /// Independent traces to generate.
    pub traces: usize,
    /// Simulated steps per trace before splitting.
    pub steps_per_trace: usize,
    /// Obstacles per trace.
    pub obstacles: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rays: 16,
            sub_seq_len: 8,
            traces: 8,
            steps_per_trace: 96,
            obstacles: 6,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays < 8 {
            return Err(Error::Argument(format!("need at least 8 rays, got {}", self.rays)));
        }
        if self.sub_seq_len < 2 {
            return Err(Error::Argument(format!(
                "sub-sequence length must be >= 2, got {}",
                self.sub_seq_len
            )));
        }
        Ok(())
    }
}

fn ray_angles(rays: usize) -> Vec<f64> {
    (0..rays)
        .map(|i| -FIELD_OF_VIEW / 2.0 + FIELD_OF_VIEW * i as f64 / (rays - 1) as f64)
        .collect()
}

/// Normalized range scan from (x, y) at `heading`: one value per ray in
/// (0, 1], 1 meaning nothing within range.
pub fn lidar_scan(
    x: f64,
    y: f64,
    heading: f64,
    obstacles: &[Obstacle],
    rays: usize,
) -> Vec<f64> {
    ray_angles(rays)
        .iter()
        .map(|phi| {
            let dir = heading + phi;
            let (dx, dy) = (dir.cos(), dir.sin());
            let mut best = MAX_RANGE;
            for ob in obstacles {
                let (mx, my) = (ob.x - x, ob.y - y);
                let along = dx * mx + dy * my;
                let disc = along * along - (mx * mx + my * my - ob.radius * ob.radius);
                if disc >= 0.0 {
                    let t = along - disc.sqrt();
                    if t > 0.0 && t < best {
                        best = t;
                    }
                }
            }
            best / MAX_RANGE
        })
        .collect()
}

/// Repulsive-field steering: every ray that sees an obstacle pushes the
/// heading away from its side, weighted by closeness squared. An empty
/// scan commands exactly zero. Output clipped to [-1, 1].
pub fn steering_command(ranges: &[f64], rays: usize) -> f64 {
    let angles = ray_angles(rays);
    let mut cmd = 0.0;
    for (phi, &r) in angles.iter().zip(ranges) {
        if r < 1.0 {
            let closeness = 1.0 - r;
            cmd += -phi.sin() * closeness * closeness;
        }
    }
    (STEER_GAIN * cmd / rays as f64).clamp(-1.0, 1.0)
}

/// Generate the surrogate dataset: `traces` independent wanderings split
/// into sub-sequences of `sub_seq_len` positions. Inputs are `[1,1,R]`
/// scans, the aux stream is the clipped pose `(x, y, heading)`, targets
/// are the controller's angular velocity per position.
pub fn synth_collision_dataset(cfg: &SynthConfig) -> Result<Vec<SequenceSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::new();
    for _ in 0..cfg.traces {
        let obstacles: Vec<Obstacle> = (0..cfg.obstacles)
            .map(|_| loop {
                let ob = Obstacle {
                    x: rng.random_range(-4.0..4.0),
                    y: rng.random_range(-4.0..4.0),
                    radius: rng.random_range(0.3..0.9),
                };
                // Keep the spawn point clear.
                if (ob.x * ob.x + ob.y * ob.y).sqrt() > ob.radius + 1.2 {
                    break ob;
                }
            })
            .collect();

        let mut x = 0.0f64;
        let mut y = 0.0f64;
        let mut heading = rng.random_range(-PI..PI);
        let mut scans = Vec::with_capacity(cfg.steps_per_trace);
        let mut poses = Vec::with_capacity(cfg.steps_per_trace);
        let mut targets = Vec::with_capacity(cfg.steps_per_trace);
        for _ in 0..cfg.steps_per_trace {
            let ranges = lidar_scan(x, y, heading, &obstacles, cfg.rays);
            let omega = steering_command(&ranges, cfg.rays);
            scans.push(Tensor::new(vec![1, 1, cfg.rays], ranges)?);
            poses.push(Tensor::new(
                vec![3],
                vec![
                    (x / WORLD_SCALE).clamp(-1.0, 1.0),
                    (y / WORLD_SCALE).clamp(-1.0, 1.0),
                    (heading / PI).clamp(-1.0, 1.0),
                ],
            )?);
            targets.push(Tensor::new(vec![1], vec![omega])?);
            heading += omega * TURN_RATE * DT;
            x += SPEED * DT * heading.cos();
            y += SPEED * DT * heading.sin();
        }

        let k = cfg.sub_seq_len;
        for chunk in 0..cfg.steps_per_trace / k {
            let range = chunk * k..(chunk + 1) * k;
            samples.push(SequenceSample {
                inputs: scans[range.clone()].to_vec(),
                aux: Some(poses[range.clone()].to_vec()),
                target: Target::PerPosition(targets[range].to_vec()),
            });
        }
    }
    Ok(samples)
}

/// Flat CSV export: `trace,k,ray_0..ray_{R-1},pose_x,pose_y,pose_h,target`.
pub fn export_collision_csv(samples: &[SequenceSample], rays: usize, path: &Path) -> Result<()> {
    let mut out = String::from("trace,k");
    for r in 0..rays {
        write!(out, ",ray_{r}").expect("string write");
    }
    out.push_str(",pose_x,pose_y,pose_h,target\n");
    for (si, sample) in samples.iter().enumerate() {
        let aux = sample.aux.as_ref().ok_or_else(|| {
            Error::Argument("collision samples must carry a pose stream".into())
        })?;
        let Target::PerPosition(targets) = &sample.target else {
            return Err(Error::Argument("collision samples carry per-position targets".into()));
        };
        for k in 0..sample.positions() {
            write!(out, "{si},{}", k + 1).expect("string write");
            for v in sample.inputs[k].data() {
                write!(out, ",{v}").expect("string write");
            }
            let p = aux[k].data();
            writeln!(out, ",{},{},{},{}", p[0], p[1], p[2], targets[k].data()[0])
                .expect("string write");
        }
    }
    write_atomic(path, out.as_bytes())
}
