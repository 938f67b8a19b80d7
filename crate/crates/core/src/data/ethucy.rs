//! Loading and writing the whitespace-delimited trajectory text format.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, RawTrack, Result, Scene};

/// Loads a trajectory file: `frame id x y` per line, grouped by agent id
/// and sorted by frame. Blank lines and lines starting with `#` are skipped.
pub fn load_trajectory_file(path: &Path) -> Result<Vec<RawTrack>> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trajectory_text(&text)
}

/// Parses trajectory text; see [`load_trajectory_file`].
pub fn parse_trajectory_text(text: &str) -> Result<Vec<RawTrack>> {
    let mut by_id: BTreeMap<i64, Vec<(i64, f64, f64)>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                line: lineno,
                detail: format!("expected 4 fields (frame id x y), got {}", fields.len()),
            });
        }
        let frame = parse_integral(fields[0], "frame", lineno)?;
        let id = parse_integral(fields[1], "agent id", lineno)?;
        let x = parse_float(fields[2], "x", lineno)?;
        let y = parse_float(fields[3], "y", lineno)?;
        by_id.entry(id).or_default().push((frame, x, y));
    }
    let mut tracks = Vec::with_capacity(by_id.len());
    for (id, mut obs) in by_id {
        obs.sort_by_key(|o| o.0);
        for pair in obs.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(DataError::Invalid(format!(
                    "agent {} observed twice at frame {}",
                    id, pair[0].0
                )));
            }
        }
        tracks.push(RawTrack { id, obs });
    }
    Ok(tracks)
}

fn parse_float(s: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| DataError::Parse {
        line,
        detail: format!("non-numeric {} field {:?}", what, s),
    })?;
    if !v.is_finite() {
        return Err(DataError::Parse {
            line,
            detail: format!("non-finite {} field {:?}", what, s),
        });
    }
    Ok(v)
}

/// Frames and ids are written as floats by some dataset exports
/// ("10.0"); accept those but require an integral value.
fn parse_integral(s: &str, what: &str, line: usize) -> Result<i64> {
    let v = parse_float(s, what, line)?;
    if v.fract().abs() > 1e-9 {
        return Err(DataError::Parse {
            line,
            detail: format!("{} field {:?} is not an integer", what, s),
        });
    }
    Ok(v.round() as i64)
}

/// Writes scenes back to trajectory text, one observation per line sorted
/// by (frame, id). Vehicle rows use [`super::VEHICLE_ID`]. Scenes must have
/// disjoint frame ranges for a lossless round trip through windowing.
pub fn write_trajectory_file(path: &Path, scenes: &[Scene]) -> Result<()> {
    let mut lines: Vec<(i64, i64, f64, f64)> = Vec::new();
    for scene in scenes {
        for (a, id) in scene.ped_ids.iter().enumerate() {
            for (t, pos) in scene.positions[a].iter().enumerate() {
                let frame = scene.start_frame + t as i64 * scene.frame_step;
                lines.push((frame, *id, pos.0, pos.1));
            }
        }
        if let Some(v) = &scene.vehicle {
            for (t, pos) in v.iter().enumerate() {
                let frame = scene.start_frame + t as i64 * scene.frame_step;
                lines.push((frame, super::VEHICLE_ID, pos.0, pos.1));
            }
        }
    }
    lines.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out = Vec::new();
    for (frame, id, x, y) in lines {
        writeln!(out, "{} {} {} {}", frame, id, x, y).expect("write to vec");
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
