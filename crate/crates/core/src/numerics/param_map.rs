//! Flat named-tensor map, the on-disk parameter format.
//!
//! Layout (plain text, one tensor per line):
//!
//! ```text
//! tensor-map v1
//! <name> <ndim> <dim0> ... <dimN-1> <value0> <value1> ...
//! ```
//!
//! Names follow the `module.layer.matrix` convention (for example
//! `generator.encoder.input_weight`). Values are row-major and printed with
//! 17 significant digits, which round-trips `f64` exactly, so save/load is
//! lossless and byte-deterministic.

use std::io::{BufRead, Write};

use super::{NumericsError, Result, Tensor};

const HEADER: &str = "tensor-map v1";

pub fn write_tensor_map<W: Write>(w: &mut W, entries: &[(String, &Tensor)]) -> std::io::Result<()> {
    writeln!(w, "{}", HEADER)?;
    for (name, tensor) in entries {
        write!(w, "{} {}", name, tensor.shape().len())?;
        for d in tensor.shape() {
            write!(w, " {}", d)?;
        }
        for v in tensor.values() {
            write!(w, " {:.17e}", v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_tensor_map<R: BufRead>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let bad = |detail: String| NumericsError::Usage(format!("tensor map parse error: {}", detail));
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| bad(e.to_string()))?;
    if header.trim() != HEADER {
        return Err(bad(format!("expected header {:?}, got {:?}", HEADER, header)));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let name = it
            .next()
            .ok_or_else(|| bad(format!("line {}: missing name", lineno + 2)))?
            .to_string();
        let ndim: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad ndim", lineno + 2)))?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("line {}: bad dimension", lineno + 2)))?;
            shape.push(d);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            let v: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("line {}: bad value for {}", lineno + 2, name)))?;
            values.push(v);
        }
        if it.next().is_some() {
            return Err(bad(format!("line {}: trailing tokens for {}", lineno + 2, name)));
        }
        out.push((name, Tensor::new(shape, values)?));
    }
    Ok(out)
}
