//! On-disk interchange for boundary samples.
//!
//! Samples travel as a five-column CSV (`re z1, im z1, re z2, im z2, weight`)
//! next to a JSON sidecar holding the generation parameters. Floats are
//! written in Rust's shortest round-trip form, so export followed by import
//! reproduces every coordinate bit for bit.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covering::ComplexPoint2;
use crate::error::Error;
use crate::measure::BoundarySampleSet;

/// Generation parameters stored next to an exported sample CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub seed: u64,
    pub count: usize,
    pub q: u32,
    pub weight: f64,
    pub resamples: u64,
}

fn io_error(context: &str, err: std::io::Error) -> Error {
    Error::Domain(format!("{context}: {err}"))
}

/// Writes `samples` as CSV plus a `.json` sidecar derived from `csv_path`.
pub fn export_samples(samples: &BoundarySampleSet, csv_path: &Path) -> Result<(), Error> {
    let mut out = String::with_capacity(samples.len() * 64);
    out.push_str("re_z1,im_z1,re_z2,im_z2,weight\n");
    for p in samples.points() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.z1.re,
            p.z1.im,
            p.z2.re,
            p.z2.im,
            samples.weight()
        ));
    }
    let mut file = fs::File::create(csv_path)
        .map_err(|e| io_error("creating sample CSV", e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| io_error("writing sample CSV", e))?;

    let sidecar = SampleSidecar {
        seed: samples.seed(),
        count: samples.len(),
        q: samples.exponent(),
        weight: samples.weight(),
        resamples: samples.resamples(),
    };
    let sidecar_path = csv_path.with_extension("json");
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Domain(format!("encoding sample sidecar: {e}")))?;
    fs::write(&sidecar_path, text + "\n").map_err(|e| io_error("writing sample sidecar", e))?;
    Ok(())
}

/// Reads a CSV/sidecar pair back into a sample set.
pub fn import_samples(csv_path: &Path) -> Result<BoundarySampleSet, Error> {
    let sidecar_path = csv_path.with_extension("json");
    let sidecar_text = fs::read_to_string(&sidecar_path)
        .map_err(|e| io_error("reading sample sidecar", e))?;
    let sidecar: SampleSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Error::Domain(format!("decoding sample sidecar: {e}")))?;

    let text = fs::read_to_string(csv_path).map_err(|e| io_error("reading sample CSV", e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == "re_z1,im_z1,re_z2,im_z2,weight" => {}
        other => {
            return Err(Error::Domain(format!("unexpected sample CSV header: {other:?}")));
        }
    }
    let mut points = Vec::with_capacity(sidecar.count);
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Domain(format!(
                "sample CSV row {i} has {} fields, expected 5",
                fields.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Domain(format!("sample CSV row {i}: {e}")))
        };
        points.push(ComplexPoint2::from_parts(
            parse(fields[0])?,
            parse(fields[1])?,
            parse(fields[2])?,
            parse(fields[3])?,
        ));
    }
    if points.len() != sidecar.count {
        return Err(Error::Domain(format!(
            "sample CSV holds {} rows but sidecar declares {}",
            points.len(),
            sidecar.count
        )));
    }
    Ok(BoundarySampleSet::from_parts(
        points,
        sidecar.weight,
        sidecar.seed,
        sidecar.q,
        sidecar.resamples,
    ))
}
