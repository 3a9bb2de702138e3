use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ManifestEntry, PipelineError, Result};
use crate::acoustics::{acoustic_params, corpus_mean, AcousticParams};
use crate::audio::{load_waveform, normalize_rir, ImpulseResponse};

/// One CSV row: `source_id,t60_s,drr_db,edt_s,cte_db`. Missing T60/EDT
/// are written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub source_id: String,
    pub t60_s: Option<f64>,
    pub drr_db: f64,
    pub edt_s: Option<f64>,
    pub cte_db: f64,
}

impl ParamRow {
    pub fn new(source_id: impl Into<String>, p: &AcousticParams) -> Self {
        ParamRow {
            source_id: source_id.into(),
            t60_s: p.t60,
            drr_db: p.drr,
            edt_s: p.edt,
            cte_db: p.cte,
        }
    }

    fn params(&self) -> AcousticParams {
        AcousticParams {
            t60: self.t60_s,
            drr: self.drr_db,
            edt: self.edt_s,
            cte: self.cte_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeans {
    pub count: usize,
    pub t60_s: Option<f64>,
    pub drr_db: f64,
    pub edt_s: Option<f64>,
    pub cte_db: f64,
}

impl CorpusMeans {
    pub fn of_rows(rows: &[ParamRow]) -> Option<Self> {
        let params: Vec<AcousticParams> = rows.iter().map(ParamRow::params).collect();
        corpus_mean(&params).map(|m| CorpusMeans {
            count: rows.len(),
            t60_s: m.t60,
            drr_db: m.drr,
            edt_s: m.edt,
            cte_db: m.cte,
        })
    }

    /// Absolute per-parameter difference of the means.
    pub fn difference(&self, reference: &CorpusMeans) -> MeanDifference {
        let opt = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());
        MeanDifference {
            t60_s: opt(self.t60_s, reference.t60_s),
            drr_db: (self.drr_db - reference.drr_db).abs(),
            edt_s: opt(self.edt_s, reference.edt_s),
            cte_db: (self.cte_db - reference.cte_db).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDifference {
    pub t60_s: Option<f64>,
    pub drr_db: f64,
    pub edt_s: Option<f64>,
    pub cte_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub rows: Vec<ParamRow>,
    /// `None` when every entry failed.
    pub mean: Option<CorpusMeans>,
    pub reference: Option<CorpusMeans>,
    pub difference: Option<MeanDifference>,
    pub failures: Vec<EntryFailure>,
}

/// Reads an entry's WAV and brings it to the canonical RIR shape.
pub fn load_entry(entry: &ManifestEntry) -> Result<ImpulseResponse> {
    let (samples, sr) = load_waveform(&entry.wav_path)?;
    Ok(normalize_rir(&samples, sr, entry.domain, entry.id.clone())?)
}

pub(crate) fn rows_for(entries: &[ManifestEntry]) -> (Vec<ParamRow>, Vec<EntryFailure>) {
    let results: Vec<(String, Result<ParamRow>)> = entries
        .par_iter()
        .map(|e| {
            let row = load_entry(e).and_then(|ir| Ok(ParamRow::new(e.id.clone(), &acoustic_params(&ir)?)));
            (e.id.clone(), row)
        })
        .collect();
    split_results(results, "params")
}

pub(crate) fn split_results(results: Vec<(String, Result<ParamRow>)>, stage: &str) -> (Vec<ParamRow>, Vec<EntryFailure>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("{id}: {e}");
                failures.push(EntryFailure {
                    id,
                    stage: stage.to_string(),
                    error: e.to_string(),
                })
            }
        }
    }
    (rows, failures)
}

pub(crate) fn summarize(rows: Vec<ParamRow>, failures: Vec<EntryFailure>, reference: Option<CorpusMeans>) -> ParamsReport {
    let mean = CorpusMeans::of_rows(&rows);
    let difference = match (&mean, &reference) {
        (Some(m), Some(r)) => Some(m.difference(r)),
        _ => None,
    };
    ParamsReport {
        rows,
        mean,
        reference,
        difference,
        failures,
    }
}

/// Per-RIR parameters and corpus means of `entries`, with absolute
/// differences against the means of `reference` when given. Entries that
/// fail to load or analyse are listed in `failures`.
pub fn report_params(entries: &[ManifestEntry], reference: Option<&[ManifestEntry]>) -> Result<ParamsReport> {
    if entries.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let (rows, failures) = rows_for(entries);
    let reference = match reference {
        Some(r) if !r.is_empty() => CorpusMeans::of_rows(&rows_for(r).0),
        _ => None,
    };
    Ok(summarize(rows, failures, reference))
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text. Floats use the shortest representation that parses back to
/// the same value.
pub fn params_csv(rows: &[ParamRow]) -> String {
    let mut s = String::from("source_id,t60_s,drr_db,edt_s,cte_db\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.source_id,
            opt_field(r.t60_s),
            r.drr_db,
            opt_field(r.edt_s),
            r.cte_db
        );
    }
    s
}

pub fn write_params_csv(rows: &[ParamRow], path: &Path) -> Result<()> {
    std::fs::write(path, params_csv(rows)).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

pub fn read_params_csv(path: &Path) -> Result<Vec<ParamRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    let bad = |line: &str| PipelineError::Format(format!("bad params row `{line}`"));
    let num = |f: &str, line: &str| f.parse::<f64>().map_err(|_| bad(line));
    let opt = |f: &str, line: &str| if f.is_empty() { Ok(None) } else { num(f, line).map(Some) };
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.rsplitn(5, ',').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            Ok(ParamRow {
                source_id: f[4].to_string(),
                t60_s: opt(f[3], line)?,
                drr_db: num(f[2], line)?,
                edt_s: opt(f[1], line)?,
                cte_db: num(f[0], line)?,
            })
        })
        .collect()
}
