//! Synthetic interacting-crowd scenes from a minimal social-force rollout.
//!
//! The dynamics are deliberately simple: goal attraction relaxing velocity
//! toward the preferred speed, exponential pairwise repulsion, and (when a
//! vehicle is present) exponential vehicle repulsion. The point is plausible
//! interactive data at desk scale, not social-force fidelity.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::numerics::seeded_rng;

use super::{DataError, Result, Scene};

/// Seconds between recorded observations (2.5 Hz).
const RECORD_DT: f64 = 0.4;

/// Source-frame step assigned to generated scenes.
const FRAME_STEP: i64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SfmConfig {
    /// Relaxation gain pulling velocity toward the preferred velocity.
    pub goal_gain: f64,
    pub ped_repulsion_strength: f64,
    /// Length scale of the exponential pairwise repulsion, meters.
    pub ped_repulsion_range: f64,
    pub veh_repulsion_strength: f64,
    pub veh_repulsion_range: f64,
    /// Preferred walking speed, m/s.
    pub preferred_speed: f64,
    /// Integration timestep, seconds.
    pub timestep: f64,
    /// Positions are clamped to `[-arena_half_extent, +arena_half_extent]^2`.
    pub arena_half_extent: f64,
    pub seed: u64,
}

impl Default for SfmConfig {
    fn default() -> Self {
        SfmConfig {
            goal_gain: 2.0,
            ped_repulsion_strength: 5.0,
            ped_repulsion_range: 0.45,
            veh_repulsion_strength: 6.0,
            veh_repulsion_range: 1.2,
            preferred_speed: 1.2,
            timestep: 0.1,
            arena_half_extent: 20.0,
            seed: 0,
        }
    }
}

impl SfmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("goal_gain", self.goal_gain),
            ("ped_repulsion_strength", self.ped_repulsion_strength),
            ("ped_repulsion_range", self.ped_repulsion_range),
            ("veh_repulsion_strength", self.veh_repulsion_strength),
            ("veh_repulsion_range", self.veh_repulsion_range),
            ("preferred_speed", self.preferred_speed),
            ("timestep", self.timestep),
            ("arena_half_extent", self.arena_half_extent),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DataError::Invalid(format!(
                    "sfm config field {} must be strictly positive, got {}",
                    name, v
                )));
            }
        }
        Ok(())
    }
}

/// Interaction scenario templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// Two pedestrians walking toward each other in slightly offset lanes.
    HeadOnPair,
    /// Two pedestrians whose straight paths cross near the origin.
    CrossingPair,
    /// A three-abreast group crossed by a single pedestrian.
    GroupCrossing,
    /// Pedestrians walking ahead of a faster vehicle approaching from
    /// behind along the same corridor.
    VehicleFromBehind,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::HeadOnPair => "head-on",
            Template::CrossingPair => "crossing",
            Template::GroupCrossing => "group",
            Template::VehicleFromBehind => "vehicle",
        }
    }

    pub fn has_vehicle(self) -> bool {
        matches!(self, Template::VehicleFromBehind)
    }
}

/// Initial state of one simulated pedestrian. Velocity starts at the
/// preferred velocity, so a lone agent rolls out an exact straight line.
#[derive(Clone, Debug)]
pub(crate) struct Spawn {
    pub pos: (f64, f64),
    pub goal: (f64, f64),
    pub speed: f64,
}

fn unit(from: (f64, f64), to: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let d = (dx * dx + dy * dy).sqrt();
    if d < 1e-12 {
        (0.0, 0.0)
    } else {
        (dx / d, dy / d)
    }
}

/// Euler-integrates the spawns (plus an optional constant-velocity vehicle)
/// and records `total_steps` samples at 2.5 Hz.
pub(crate) fn rollout(
    config: &SfmConfig,
    spawns: &[Spawn],
    vehicle_start: Option<((f64, f64), (f64, f64))>,
    total_steps: usize,
    obs_len: usize,
    scene_index: usize,
) -> Result<Scene> {
    let mut pos: Vec<(f64, f64)> = spawns.iter().map(|s| s.pos).collect();
    let mut vel: Vec<(f64, f64)> = spawns
        .iter()
        .map(|s| {
            let d = unit(s.pos, s.goal);
            (s.speed * d.0, s.speed * d.1)
        })
        .collect();
    let mut vehicle = vehicle_start;

    let substeps = (RECORD_DT / config.timestep).round().max(1.0) as usize;
    let dt = RECORD_DT / substeps as f64;
    let mut ped_tracks: Vec<Vec<(f64, f64)>> = pos.iter().map(|p| vec![*p]).collect();
    let mut veh_track: Vec<(f64, f64)> = vehicle.iter().map(|v| v.0).collect();

    for _ in 1..total_steps {
        for _ in 0..substeps {
            let snapshot = pos.clone();
            let veh_pos = vehicle.map(|v| v.0);
            for i in 0..spawns.len() {
                let desired = unit(pos[i], spawns[i].goal);
                let mut fx = config.goal_gain * (spawns[i].speed * desired.0 - vel[i].0);
                let mut fy = config.goal_gain * (spawns[i].speed * desired.1 - vel[i].1);
                for (j, other) in snapshot.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let away = unit(*other, pos[i]);
                    let d =
                        ((pos[i].0 - other.0).powi(2) + (pos[i].1 - other.1).powi(2)).sqrt();
                    let mag =
                        config.ped_repulsion_strength * (-d / config.ped_repulsion_range).exp();
                    fx += mag * away.0;
                    fy += mag * away.1;
                }
                if let Some(vp) = veh_pos {
                    let away = unit(vp, pos[i]);
                    let d = ((pos[i].0 - vp.0).powi(2) + (pos[i].1 - vp.1).powi(2)).sqrt();
                    let mag =
                        config.veh_repulsion_strength * (-d / config.veh_repulsion_range).exp();
                    fx += mag * away.0;
                    fy += mag * away.1;
                }
                vel[i].0 += fx * dt;
                vel[i].1 += fy * dt;
                let speed = (vel[i].0 * vel[i].0 + vel[i].1 * vel[i].1).sqrt();
                let cap = 2.0 * spawns[i].speed;
                if speed > cap {
                    vel[i].0 *= cap / speed;
                    vel[i].1 *= cap / speed;
                }
                pos[i].0 = (pos[i].0 + vel[i].0 * dt)
                    .clamp(-config.arena_half_extent, config.arena_half_extent);
                pos[i].1 = (pos[i].1 + vel[i].1 * dt)
                    .clamp(-config.arena_half_extent, config.arena_half_extent);
            }
            if let Some((p, v)) = vehicle.as_mut() {
                p.0 += v.0 * dt;
                p.1 += v.1 * dt;
            }
        }
        for (i, p) in pos.iter().enumerate() {
            ped_tracks[i].push(*p);
        }
        if let Some((p, _)) = &vehicle {
            veh_track.push(*p);
        }
    }

    // Disjoint frame ranges and id blocks per scene so files round-trip
    // through windowing one-to-one.
    let start_frame = scene_index as i64 * (total_steps as i64 + 5) * FRAME_STEP;
    let scene = Scene {
        ped_ids: (0..spawns.len())
            .map(|i| scene_index as i64 * 100 + i as i64 + 1)
            .collect(),
        positions: ped_tracks,
        vehicle: if veh_track.is_empty() {
            None
        } else {
            Some(veh_track)
        },
        obs_len,
        start_frame,
        frame_step: FRAME_STEP,
        dt: RECORD_DT,
    };
    scene.validate()?;
    Ok(scene)
}

/// Generates `n_scenes` windowed scenes cycling through the templates
/// (pedestrian-only templates, plus the vehicle template when
/// `with_vehicle` is set). Deterministic per `config.seed`.
pub fn generate_sfm(
    config: &SfmConfig,
    n_scenes: usize,
    with_vehicle: bool,
    obs_len: usize,
    pred_len: usize,
) -> Result<Vec<Scene>> {
    let templates: &[Template] = if with_vehicle {
        &[
            Template::HeadOnPair,
            Template::CrossingPair,
            Template::GroupCrossing,
            Template::VehicleFromBehind,
        ]
    } else {
        &[
            Template::HeadOnPair,
            Template::CrossingPair,
            Template::GroupCrossing,
        ]
    };
    let mix: Vec<(Template, usize)> = templates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            (
                *t,
                n_scenes / templates.len() + usize::from(i < n_scenes % templates.len()),
            )
        })
        .collect();
    generate_template_scenes(config, &mix, obs_len, pred_len)
}

/// Generates scenes with an explicit per-template count, in mix order.
pub fn generate_template_scenes(
    config: &SfmConfig,
    mix: &[(Template, usize)],
    obs_len: usize,
    pred_len: usize,
) -> Result<Vec<Scene>> {
    config.validate()?;
    if obs_len == 0 || pred_len == 0 {
        return Err(DataError::Invalid(
            "observation and prediction lengths must be at least 1".into(),
        ));
    }
    let mut rng = seeded_rng(config.seed);
    let mut jitter = move |lo: f64, hi: f64| rng.random_range(lo..hi);
    let v0 = config.preferred_speed;
    let total = obs_len + pred_len;

    let mut scenes = Vec::new();
    for &(template, count) in mix {
        for _ in 0..count {
            let mut spawns = Vec::new();
            let mut vehicle = None;
            match template {
                Template::HeadOnPair => {
                    // Offset lanes so the symmetric stall never happens.
                    let lane_a = jitter(-0.35, -0.10);
                    let lane_b = jitter(0.10, 0.35);
                    spawns.push(Spawn {
                        pos: (-4.0, lane_a),
                        goal: (14.0, lane_a),
                        speed: jitter(0.95, 1.25) * v0,
                    });
                    spawns.push(Spawn {
                        pos: (4.0, lane_b),
                        goal: (-14.0, lane_b),
                        speed: jitter(0.95, 1.25) * v0,
                    });
                }
                Template::CrossingPair => {
                    let lane_a = jitter(-0.2, 0.2);
                    let lane_b = jitter(-0.2, 0.2);
                    spawns.push(Spawn {
                        pos: (-3.5, lane_a),
                        goal: (14.0, lane_a),
                        speed: jitter(0.9, 1.2) * v0,
                    });
                    spawns.push(Spawn {
                        pos: (lane_b, -3.5),
                        goal: (lane_b, 14.0),
                        speed: jitter(0.9, 1.2) * v0,
                    });
                }
                Template::GroupCrossing => {
                    for lane in [-0.7, 0.0, 0.7] {
                        let y = lane + jitter(-0.1, 0.1);
                        spawns.push(Spawn {
                            pos: (-4.0 + jitter(-0.3, 0.3), y),
                            goal: (14.0, y),
                            speed: jitter(0.9, 1.15) * v0,
                        });
                    }
                    let x = jitter(-0.3, 0.3);
                    spawns.push(Spawn {
                        pos: (x, 4.0),
                        goal: (x, -14.0),
                        speed: jitter(0.9, 1.15) * v0,
                    });
                }
                Template::VehicleFromBehind => {
                    for lane in [-0.8, 0.0, 0.8] {
                        let y = lane + jitter(-0.15, 0.15);
                        spawns.push(Spawn {
                            pos: (jitter(-1.5, -0.5), y),
                            goal: (20.0, y),
                            speed: jitter(0.75, 0.95) * v0,
                        });
                    }
                    let speed = jitter(2.4, 3.2);
                    vehicle = Some(((-8.0, jitter(-0.2, 0.2)), (speed, 0.0)));
                }
            }
            let idx = scenes.len();
            scenes.push(rollout(config, &spawns, vehicle, total, obs_len, idx)?);
        }
    }
    Ok(scenes)
}
