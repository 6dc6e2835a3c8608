//! Evaluation reports and training logs as files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pris_core::eval::{EvalReport, EvalRow};
use pris_core::training::{EpochRecord, MetricsSink};
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Infinite dB values are written as the string `"inf"`.
fn db(v: f64) -> Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v > 0.0 {
        Value::String("inf".into())
    } else {
        Value::Null
    }
}

fn parse_db(v: &Value) -> Option<f64> {
    match v {
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        other => other.as_f64(),
    }
}

pub fn report_to_json(r: &EvalReport) -> Value {
    serde_json::json!({
        "level": r.level,
        "model_hash": r.model_hash,
        "rows": r.rows.iter().map(|row| serde_json::json!({
            "attack": row.attack,
            "psnr_c": db(row.psnr_c),
            "psnr_s": db(row.psnr_s),
            "n_images": row.n_images,
        })).collect::<Vec<_>>(),
    })
}

pub fn report_from_json(v: &Value) -> CliResult<EvalReport> {
    let bad = || CliError::Data("malformed report".into());
    let rows = v["rows"]
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|r| {
            Ok(EvalRow {
                attack: r["attack"].as_str().ok_or_else(bad)?.to_string(),
                psnr_c: parse_db(&r["psnr_c"]).ok_or_else(bad)?,
                psnr_s: parse_db(&r["psnr_s"]).ok_or_else(bad)?,
                n_images: r["n_images"].as_u64().ok_or_else(bad)? as usize,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(EvalReport {
        level: v["level"].as_u64().ok_or_else(bad)? as u8,
        model_hash: v["model_hash"].as_str().ok_or_else(bad)?.to_string(),
        rows,
    })
}

/// Paths of the JSON report and its text table for `--out R`.
pub fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "json") {
        (out.to_path_buf(), out.with_extension("txt"))
    } else {
        let mut json = out.as_os_str().to_os_string();
        json.push(".json");
        let mut txt = out.as_os_str().to_os_string();
        txt.push(".txt");
        (json.into(), txt.into())
    }
}

/// Write both report forms; returns `(json, table)` paths.
pub fn write_report(out: &Path, r: &EvalReport) -> CliResult<(PathBuf, PathBuf)> {
    let (json, txt) = report_paths(out);
    let text = serde_json::to_string_pretty(&report_to_json(r)).expect("report serialises");
    std::fs::write(&json, text + "\n").map_err(|e| CliError::io(&json, e))?;
    std::fs::write(&txt, r.to_table()).map_err(|e| CliError::io(&txt, e))?;
    Ok((json, txt))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogLine {
    pub step: u8,
    pub epoch: usize,
    pub lr: f64,
    #[serde(rename = "L")]
    pub loss: f64,
    #[serde(rename = "L_c")]
    pub loss_c: f64,
    #[serde(rename = "L_s")]
    pub loss_s: f64,
    #[serde(serialize_with = "ser_db")]
    pub psnr_c: f64,
    #[serde(serialize_with = "ser_db")]
    pub psnr_s: f64,
}

fn ser_db<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    db(*v).serialize(s)
}

impl From<&EpochRecord> for LogLine {
    fn from(r: &EpochRecord) -> Self {
        Self {
            step: r.step,
            epoch: r.epoch,
            // shortest decimal form of the f32 rate
            lr: r.lr.to_string().parse().unwrap_or(r.lr as f64),
            loss: r.loss,
            loss_c: r.loss_c,
            loss_s: r.loss_s,
            psnr_c: r.psnr_c,
            psnr_s: r.psnr_s,
        }
    }
}

impl LogLine {
    pub fn parse(line: &str) -> CliResult<Self> {
        let v: Value = serde_json::from_str(line).map_err(|e| CliError::Data(format!("bad log line: {e}")))?;
        let bad = |key: &str| CliError::Data(format!("bad or missing {key:?} in log line"));
        let num = |key: &str| v[key].as_f64().ok_or_else(|| bad(key));
        let int = |key: &str| v[key].as_u64().ok_or_else(|| bad(key));
        Ok(Self {
            step: u8::try_from(int("step")?).map_err(|_| bad("step"))?,
            epoch: int("epoch")? as usize,
            lr: num("lr")?,
            loss: num("L")?,
            loss_c: num("L_c")?,
            loss_s: num("L_s")?,
            psnr_c: parse_db(&v["psnr_c"]).ok_or_else(|| bad("psnr_c"))?,
            psnr_s: parse_db(&v["psnr_s"]).ok_or_else(|| bad("psnr_s"))?,
        })
    }
}

/// JSON-lines metrics log, flushed after every record.
pub struct JsonlLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl JsonlLog {
    pub fn create(path: &Path) -> CliResult<Self> {
        let f = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }
}

impl MetricsSink for JsonlLog {
    fn record(&mut self, rec: &EpochRecord) -> pris_core::Result<()> {
        let line = LogLine::from(rec);
        log::info!(
            "step {} epoch {:>4}  lr {:.2e}  L {:.4}  L_c {:.4}  L_s {:.4}  PSNR-C {:.2}  PSNR-S {:.2}",
            line.step,
            line.epoch,
            line.lr,
            line.loss,
            line.loss_c,
            line.loss_s,
            line.psnr_c,
            line.psnr_s
        );
        let io = |e: std::io::Error| pris_core::Error::Data(format!("{}: {e}", self.path.display()));
        let text = serde_json::to_string(&line).expect("log line serialises");
        writeln!(self.out, "{text}").map_err(io)?;
        self.out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        EvalReport {
            level: 4,
            model_hash: "abc".into(),
            rows: vec![
                EvalRow { attack: "identity".into(), psnr_c: f64::INFINITY, psnr_s: 30.5, n_images: 2 },
                EvalRow { attack: "gauss10".into(), psnr_c: f64::INFINITY, psnr_s: 12.25, n_images: 2 },
            ],
        }
    }

    #[test]
    fn report_json_round_trip() {
        let r = report();
        let v = report_to_json(&r);
        assert_eq!(v["rows"][0]["psnr_c"], "inf");
        assert_eq!(v["rows"][1]["n_images"], 2);
        assert_eq!(report_from_json(&v).unwrap(), r);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let (json, txt) = write_report(&dir.path().join("r"), &report()).unwrap();
        assert!(json.ends_with("r.json") && txt.ends_with("r.txt"));
        let table = std::fs::read_to_string(&txt).unwrap();
        assert!(table.contains("gauss10") && table.contains("inf"));
        let (j2, t2) = report_paths(Path::new("out/x.json"));
        assert_eq!((j2, t2), (PathBuf::from("out/x.json"), PathBuf::from("out/x.txt")));
    }

    #[test]
    fn log_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let rec = EpochRecord { step: 2, epoch: 3, lr: 1e-3, loss: 1.5, loss_c: 0.5, loss_s: 1.0, psnr_c: f64::INFINITY, psnr_s: 20.0 };
        {
            let mut log = JsonlLog::create(&path).unwrap();
            log.record(&rec).unwrap();
            log.record(&EpochRecord { epoch: 4, ..rec.clone() }).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: Value = serde_json::from_str(lines[0]).unwrap();
        for key in ["step", "epoch", "lr", "L", "L_c", "L_s", "psnr_c", "psnr_s"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["psnr_c"], "inf");
        let back = LogLine::parse(lines[1]).unwrap();
        assert_eq!(back, LogLine::from(&EpochRecord { epoch: 4, ..rec }));
    }
}
