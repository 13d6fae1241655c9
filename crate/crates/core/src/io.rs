//! File encodings: atomic writes, PGM, float32 dumps and probe CSV.

use std::io::Write;
use std::path::Path;

use crate::dynamics::ProbeSeries;
use crate::error::{Error, Result};

/// Writes via a temporary file in the target directory, then renames into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Binary 8-bit PGM (P5, maxval 255).
pub fn pgm_bytes(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    if gray.len() != width * height {
        return Err(Error::Domain(format!(
            "{} pixels do not fill a {width}x{height} image",
            gray.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    Ok(out)
}

/// Text header lines terminated by `end`, then little-endian f32 values.
pub fn f32_dump_bytes(kind: &str, header: &[String], values: &[f64]) -> Vec<u8> {
    let mut out = String::from("stator-f32 1\n");
    out.push_str(&format!("kind {kind}\n"));
    for line in header {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&format!("count {}\nend\n", values.len()));
    let mut bytes = out.into_bytes();
    bytes.reserve(4 * values.len());
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

/// Parses a dump written by `f32_dump_bytes`: header lines and values.
pub fn read_f32_dump(bytes: &[u8]) -> Result<(Vec<String>, Vec<f32>)> {
    let mut header = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Domain("dump header is not terminated".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::Domain("dump header is not UTF-8".into()))?
            .to_string();
        pos += nl + 1;
        if line == "end" {
            break;
        }
        header.push(line);
    }
    let body = &bytes[pos..];
    if body.len() % 4 != 0 {
        return Err(Error::Domain("dump body is not a whole number of f32 values".into()));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, values))
}

/// Long-format probe table `time_s,point_id,displacement_m,envelope_m`.
pub fn probe_csv(times: &[f64], probes: &[ProbeSeries]) -> String {
    let mut out = String::from("time_s,point_id,displacement_m,envelope_m\n");
    for (id, p) in probes.iter().enumerate() {
        for ((t, w), e) in times.iter().zip(&p.samples).zip(&p.envelope) {
            out.push_str(&format!("{t},{id},{w},{e}\n"));
        }
    }
    out
}
