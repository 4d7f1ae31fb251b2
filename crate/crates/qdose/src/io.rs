//! File formats: the trajectory table, versioned JSON artifacts, plain
//! CSV tables and content hashes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use qdose_core::cohort::features::feature_names;
use qdose_core::cohort::{Cohort, FeatureVector, Outcome, PatientTrajectory, RawDosePair, Timestep};
use qdose_core::N_FEATURES;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QdoseError, Result};

/// First line of every trajectory file.
pub const TRAJECTORY_MAGIC: &str = "# qdose trajectories v1";

/// Version written into every JSON artifact envelope.
pub const ARTIFACT_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| QdoseError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| QdoseError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| QdoseError::io(path, e))
}

fn trajectory_header() -> Vec<String> {
    let mut h = vec![String::from("patient_id"), String::from("step")];
    h.extend(feature_names().map(String::from));
    h.extend(["iv_dose", "vp_dose", "outcome"].map(String::from));
    h
}

/// One timestep per row; missing features are empty fields and the outcome
/// (`1` died, `0` survived) appears only on a patient's last row.
pub fn write_cohort(path: &Path, cohort: &Cohort) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{TRAJECTORY_MAGIC}").map_err(|e| QdoseError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| QdoseError::format(path, e);
    w.write_record(trajectory_header()).map_err(fail)?;
    let mut record: Vec<String> = Vec::with_capacity(N_FEATURES + 5);
    for traj in &cohort.trajectories {
        for (i, step) in traj.steps.iter().enumerate() {
            record.clear();
            record.push(traj.patient_id.clone());
            record.push(i.to_string());
            record.extend(
                step.features
                    .values()
                    .iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            record.push(step.raw_dose.iv_volume.to_string());
            record.push(step.raw_dose.vp_max.to_string());
            record.push(if i + 1 == traj.len() {
                String::from(if traj.outcome.died() { "1" } else { "0" })
            } else {
                String::new()
            });
            w.write_record(&record).map_err(fail)?;
        }
    }
    let mut out = w.into_inner().map_err(|e| QdoseError::format(path, e))?;
    out.flush().map_err(|e| QdoseError::io(path, e))
}

pub fn read_cohort(path: &Path) -> Result<Cohort> {
    let mut input = open(path)?;
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| QdoseError::io(path, e))?;
    if first.trim_end() != TRAJECTORY_MAGIC {
        return Err(QdoseError::format(
            path,
            format!("expected `{TRAJECTORY_MAGIC}` on the first line, found `{}`", first.trim_end()),
        ));
    }
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| QdoseError::format(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if header != trajectory_header() {
        return Err(QdoseError::format(path, "column header does not match the feature list"));
    }
    let mut trajectories = Vec::new();
    let mut current: Option<(String, Vec<Timestep>)> = None;
    for (row, record) in r.records().enumerate() {
        let line = row + 3;
        let record = record.map_err(|e| QdoseError::format(path, e))?;
        let bad = |m: String| QdoseError::format(path, format!("line {line}: {m}"));
        let num = |field: &str, name: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|_| bad(format!("{name} `{field}` is not a number")))
        };
        let id = &record[0];
        let step: usize = record[1].parse().map_err(|_| bad(format!("bad step index `{}`", &record[1])))?;
        let features = (0..N_FEATURES)
            .map(|j| {
                let f = &record[2 + j];
                if f.is_empty() {
                    Ok(None)
                } else {
                    num(f, "feature").map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let dose = RawDosePair::new(num(&record[2 + N_FEATURES], "iv_dose")?, num(&record[3 + N_FEATURES], "vp_dose")?)?;
        let timestep = Timestep::new(FeatureVector::new(features)?, dose);
        let (pid, steps) = current.get_or_insert_with(|| (id.to_string(), Vec::new()));
        if pid != id {
            return Err(bad(format!("patient {pid} ends without an outcome")));
        }
        if step != steps.len() {
            return Err(bad(format!("patient {id}: expected step {}, found {step}", steps.len())));
        }
        steps.push(timestep);
        let outcome = match &record[4 + N_FEATURES] {
            "" => continue,
            "1" => Outcome::Died,
            "0" => Outcome::Survived,
            other => return Err(bad(format!("outcome `{other}` is not 0 or 1"))),
        };
        let (pid, steps) = current.take().expect("set above");
        trajectories.push(PatientTrajectory::new(pid, steps, outcome)?);
    }
    if let Some((pid, _)) = current {
        return Err(QdoseError::format(path, format!("patient {pid} ends without an outcome")));
    }
    Ok(Cohort::new(trajectories))
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

/// Writes `payload` as pretty JSON inside a `{format, version, payload}`
/// envelope so readers can reject the wrong file type early.
pub fn write_artifact<T: Serialize>(path: &Path, format: &str, payload: &T) -> Result<()> {
    let envelope = Envelope {
        format: format.to_string(),
        version: ARTIFACT_VERSION,
        payload,
    };
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &envelope).map_err(|e| QdoseError::format(path, e))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| QdoseError::io(path, e))
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| QdoseError::io(path, e))?;
    let envelope: Envelope<serde_json::Value> = serde_json::from_str(&text).map_err(|e| QdoseError::format(path, e))?;
    if envelope.format != format || envelope.version != ARTIFACT_VERSION {
        return Err(QdoseError::format(
            path,
            format!(
                "expected {format} v{ARTIFACT_VERSION}, found {} v{}",
                envelope.format, envelope.version
            ),
        ));
    }
    serde_json::from_value(envelope.payload).map_err(|e| QdoseError::format(path, e))
}

/// Comma-separated table with a header row.
pub fn write_table<R, I, S>(path: &Path, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    let fail = |e: csv::Error| QdoseError::format(path, e);
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.flush().map_err(|e| QdoseError::io(path, e))
}

/// Appends rows to a table written by [`write_table`].
pub fn append_table<R, I, S>(path: &Path, rows: R) -> Result<()>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let file = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| QdoseError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.write_record(row).map_err(|e| QdoseError::format(path, e))?;
    }
    w.flush().map_err(|e| QdoseError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut input = open(path)?;
    std::io::copy(&mut input, &mut hasher).map_err(|e| QdoseError::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use qdose_core::cohort::{generate_synthetic_cohort, SyntheticCohortConfig};

    #[test]
    fn cohort_round_trips_bit_exactly() {
        let cfg = SyntheticCohortConfig {
            n_patients: 12,
            pilot_patients: 200,
            missing_rate: 0.1,
            ..SyntheticCohortConfig::default()
        };
        let cohort = generate_synthetic_cohort(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_cohort(&path, &cohort).unwrap();
        assert_eq!(read_cohort(&path).unwrap(), cohort);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let header = trajectory_header().join(",");
        let row = |id: &str, step: usize, outcome: &str| {
            let mut r = vec![id.to_string(), step.to_string()];
            r.extend((0..N_FEATURES).map(|_| String::from("1.5")));
            r.extend([String::from("0"), String::from("0"), outcome.to_string()]);
            r.join(",")
        };
        let cases = [
            format!("{header}\n{}\n", row("a", 0, "1")),
            format!("{TRAJECTORY_MAGIC}\n{}\n", row("a", 0, "1")),
            format!("{TRAJECTORY_MAGIC}\n{header}\n{}\n", row("a", 0, "")),
            format!("{TRAJECTORY_MAGIC}\n{header}\n{}\n{}\n", row("a", 0, ""), row("b", 0, "1")),
            format!("{TRAJECTORY_MAGIC}\n{header}\n{}\n", row("a", 1, "1")),
            format!("{TRAJECTORY_MAGIC}\n{header}\n{}\n", row("a", 0, "2")),
        ];
        for text in cases {
            std::fs::write(&path, &text).unwrap();
            assert!(matches!(read_cohort(&path), Err(QdoseError::Format { .. })), "{text}");
        }
        std::fs::write(&path, format!("{TRAJECTORY_MAGIC}\n{header}\n{}\n{}\n", row("a", 0, ""), row("a", 1, "0"))).unwrap();
        assert_eq!(read_cohort(&path).unwrap().trajectories[0].len(), 2);
    }

    #[test]
    fn artifacts_check_their_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let value = vec![0.1f64, 1.0 / 3.0, -2.5e-300];
        write_artifact(&path, "numbers", &value).unwrap();
        assert_eq!(read_artifact::<Vec<f64>>(&path, "numbers").unwrap(), value);
        assert!(read_artifact::<Vec<f64>>(&path, "other").is_err());
        assert_eq!(sha256_file(&path).unwrap().len(), 64);
    }
}
