//! Slicing raw tracks into fixed observation/prediction windows.

use std::collections::HashMap;

use super::{DataError, RawTrack, Result, Scene, VEHICLE_ID};

/// Slides windows of `obs_len + pred_len` timesteps over the tracks.
///
/// Window starts are spaced `stride` timesteps apart (in units of
/// `frame_step` source frames), anchored at the earliest pedestrian frame.
/// An agent joins a window only when it is observed at every frame of the
/// window; windows with no complete agent are dropped. A track with id
/// [`VEHICLE_ID`] becomes the scene's vehicle when it covers the window.
pub fn window_scenes(
    tracks: &[RawTrack],
    obs_len: usize,
    pred_len: usize,
    stride: usize,
    frame_step: i64,
    dt: f64,
) -> Result<Vec<Scene>> {
    if obs_len == 0 || pred_len == 0 {
        return Err(DataError::Invalid(
            "observation and prediction lengths must be at least 1".into(),
        ));
    }
    if stride == 0 || frame_step <= 0 {
        return Err(DataError::Invalid("stride and frame step must be positive".into()));
    }
    let total = obs_len + pred_len;
    let peds: Vec<&RawTrack> = tracks.iter().filter(|t| t.id != VEHICLE_ID).collect();
    let vehicle = tracks.iter().find(|t| t.id == VEHICLE_ID);

    let lookup: Vec<HashMap<i64, (f64, f64)>> = peds
        .iter()
        .map(|t| t.obs.iter().map(|&(f, x, y)| (f, (x, y))).collect())
        .collect();
    let veh_lookup: Option<HashMap<i64, (f64, f64)>> =
        vehicle.map(|t| t.obs.iter().map(|&(f, x, y)| (f, (x, y))).collect());

    let mut frames: Vec<i64> = peds.iter().flat_map(|t| t.obs.iter().map(|o| o.0)).collect();
    frames.sort_unstable();
    frames.dedup();
    let Some(&first) = frames.first() else {
        return Ok(Vec::new());
    };
    let spacing = stride as i64 * frame_step;

    let mut scenes = Vec::new();
    for &start in &frames {
        if (start - first) % spacing != 0 {
            continue;
        }
        let window: Vec<i64> = (0..total as i64).map(|k| start + k * frame_step).collect();
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        for (ti, track) in peds.iter().enumerate() {
            let covered: Option<Vec<(f64, f64)>> = window
                .iter()
                .map(|f| lookup[ti].get(f).copied())
                .collect();
            if let Some(track_positions) = covered {
                ids.push(track.id);
                positions.push(track_positions);
            }
        }
        if ids.is_empty() {
            continue;
        }
        let vehicle_track = veh_lookup
            .as_ref()
            .and_then(|vl| window.iter().map(|f| vl.get(f).copied()).collect());
        let scene = Scene {
            ped_ids: ids,
            positions,
            vehicle: vehicle_track,
            obs_len,
            start_frame: start,
            frame_step,
            dt,
        };
        scene.validate()?;
        scenes.push(scene);
    }
    Ok(scenes)
}

/// Splits scenes into contiguous blocks by position in the list (scenes
/// arrive ordered by start frame, so blocks are contiguous in time, which
/// avoids leakage between overlapping windows).
pub fn split_contiguous(scenes: Vec<Scene>, fractions: &[f64]) -> Vec<Vec<Scene>> {
    let n = scenes.len();
    let mut cuts = Vec::with_capacity(fractions.len());
    let mut acc = 0.0;
    for f in fractions {
        acc += f;
        cuts.push(((n as f64) * acc).round() as usize);
    }
    if let Some(last) = cuts.last_mut() {
        *last = n;
    }
    let mut out = Vec::with_capacity(fractions.len());
    let mut scenes = scenes;
    let mut taken = 0;
    for cut in cuts {
        let take = cut.saturating_sub(taken).min(scenes.len());
        out.push(scenes.drain(..take).collect());
        taken = cut.max(taken);
    }
    out
}
