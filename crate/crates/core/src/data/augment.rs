//! Coordinate-flip data augmentation.

use rand::Rng as _;

use crate::numerics::seeded_rng;

use super::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flip {
    None,
    /// Mirror about the x-axis: `y -> -y`.
    XAxis,
    /// Mirror about the y-axis: `x -> -x`.
    YAxis,
}

/// Applies one mirror to every position of the scene, vehicle included.
pub fn flip_scene(scene: &Scene, flip: Flip) -> Scene {
    let map = |p: (f64, f64)| match flip {
        Flip::None => p,
        Flip::XAxis => (p.0, -p.1),
        Flip::YAxis => (-p.0, p.1),
    };
    let mut out = scene.clone();
    for track in &mut out.positions {
        for p in track.iter_mut() {
            *p = map(*p);
        }
    }
    if let Some(v) = &mut out.vehicle {
        for p in v.iter_mut() {
            *p = map(*p);
        }
    }
    out
}

/// Mirrors each scene about the x-axis, the y-axis, or not at all, with
/// equal probability under `seed`.
pub fn augment_flip(scenes: &[Scene], seed: u64) -> Vec<Scene> {
    let mut rng = seeded_rng(seed);
    scenes
        .iter()
        .map(|scene| {
            let flip = match rng.random_range(0..3u32) {
                0 => Flip::None,
                1 => Flip::XAxis,
                _ => Flip::YAxis,
            };
            flip_scene(scene, flip)
        })
        .collect()
}
