use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{split_results, summarize};
use super::{
    load_entry, report, write_params_csv, Combination, CorpusMeans, DatasetManifest, EntryFailure, ManifestEntry,
    MeanDifference, ParamRow, PipelineError, PipelinePlan, Result, Stage,
};
use crate::acoustics::acoustic_params;
use crate::audio::{quantize_f32, write_waveform, Domain, ImpulseResponse, SAMPLE_RATE};
use crate::equalization::{equalize, sample_gains, GmmModel, RelativeGainVector};
use crate::tsrirgan::{load_checkpoint, translate_with, Checkpoint};

pub const REPORT_NAME: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHashes {
    pub stage: Stage,
    /// SHA-256 of the stage input samples as little-endian f64.
    pub input_sha256: String,
    pub output_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: String,
    /// File name inside the output directory.
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq_target_db: Option<RelativeGainVector>,
    pub stages: Vec<StageHashes>,
}

/// Table-2 style row: corpus means after a stage and their absolute
/// difference from the real reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub mean: Option<CorpusMeans>,
    pub difference: Option<MeanDifference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub combination: Combination,
    pub seed: u64,
    pub num_taps: usize,
    pub entries: Vec<EntryRecord>,
    pub stages: Vec<StageSummary>,
    pub reference: Option<CorpusMeans>,
    pub failures: Vec<EntryFailure>,
}

pub fn output_name(id: &str, combination: Combination) -> String {
    format!("{id}.{combination}.wav")
}

fn digest(x: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in x {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn materialize(ir: ImpulseResponse) -> Result<ImpulseResponse> {
    let (domain, id) = (ir.domain(), ir.source_id().to_string());
    let mut x = ir.into_samples();
    quantize_f32(&mut x);
    Ok(ImpulseResponse::new(x, domain, id)?)
}

type Slot = Option<ImpulseResponse>;

fn stage_rows(work: &[&ManifestEntry], current: &[Slot], label: &str) -> (Vec<ParamRow>, Vec<EntryFailure>) {
    let results: Vec<(String, Result<ParamRow>)> = current
        .par_iter()
        .zip(work.par_iter())
        .filter_map(|(slot, e)| {
            let ir = slot.as_ref()?;
            let row = acoustic_params(ir)
                .map(|p| ParamRow::new(e.id.clone(), &p))
                .map_err(PipelineError::from);
            Some((e.id.clone(), row))
        })
        .collect();
    split_results(results, &format!("params:{label}"))
}

fn write_report(report: &PipelineReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| PipelineError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Runs the plan's stages over every non-real entry, in id order.
///
/// Each stage output is rounded to f32 before it feeds the next stage,
/// which is exactly what a later run reading the written WAVs would see.
/// Writes `<id>.<COMBINATION>.wav`, `params.<stage>.csv` for the input and
/// every stage, `params.reference.csv` for the real entries and
/// `report.json` into `out_dir`. Per-entry failures are reported, not
/// raised.
pub fn run_pipeline(plan: &PipelinePlan, manifest: &DatasetManifest, out_dir: &Path) -> Result<PipelineReport> {
    plan.validate()?;
    let mut work: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.domain != Domain::Real).collect();
    work.sort_by(|a, b| a.id.cmp(&b.id));
    if work.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let reference_entries = manifest.of_domain(Domain::Real);
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::Io(format!("{}: {e}", out_dir.display())))?;

    let stages = plan.combination.stages();
    let targets: Option<Vec<RelativeGainVector>> = match &plan.gmm {
        Some(p) if stages.contains(&Stage::Eq) => Some(sample_gains(&GmmModel::load(p)?, work.len(), plan.seed)?),
        _ => None,
    };
    let checkpoint: Option<Checkpoint> = match &plan.checkpoint {
        Some(p) if stages.contains(&Stage::Translate) => Some(load_checkpoint(p)?),
        _ => None,
    };

    let mut failures = Vec::new();
    let loaded: Vec<(String, Result<ImpulseResponse>)> =
        work.par_iter().map(|e| (e.id.clone(), load_entry(e))).collect();
    let mut current: Vec<Slot> = Vec::with_capacity(work.len());
    for (id, r) in loaded {
        current.push(match r {
            Ok(ir) => Some(ir),
            Err(e) => {
                log::warn!("{id}: {e}");
                failures.push(EntryFailure {
                    id,
                    stage: "load".into(),
                    error: e.to_string(),
                });
                None
            }
        });
    }

    let reference = if reference_entries.is_empty() {
        None
    } else {
        let (rows, _) = report::rows_for(&reference_entries);
        write_params_csv(&rows, &out_dir.join("params.reference.csv"))?;
        CorpusMeans::of_rows(&rows)
    };

    let mut records: Vec<EntryRecord> = work
        .iter()
        .enumerate()
        .map(|(i, e)| EntryRecord {
            id: e.id.clone(),
            output: output_name(&e.id, plan.combination),
            eq_target_db: targets.as_ref().map(|t| t[i]),
            stages: Vec::new(),
        })
        .collect();

    let mut summaries = Vec::new();
    let mut summarize_stage = |label: &str, current: &[Slot], failures: &mut Vec<EntryFailure>| -> Result<()> {
        let (rows, fails) = stage_rows(&work, current, label);
        failures.extend(fails);
        write_params_csv(&rows, &out_dir.join(format!("params.{label}.csv")))?;
        let s = summarize(rows, Vec::new(), reference.clone());
        summaries.push(StageSummary {
            stage: label.to_string(),
            mean: s.mean,
            difference: s.difference,
        });
        Ok(())
    };
    summarize_stage("input", &current, &mut failures)?;

    for &stage in stages {
        let outputs: Vec<Option<std::result::Result<ImpulseResponse, String>>> = match stage {
            Stage::Eq => {
                let targets = targets.as_ref().expect("targets loaded for EQ stage");
                current
                    .par_iter()
                    .enumerate()
                    .map(|(i, slot)| {
                        let ir = slot.as_ref()?;
                        Some(equalize(ir, &targets[i], plan.num_taps).map_err(|e| e.to_string()))
                    })
                    .collect()
            }
            Stage::Translate => {
                let ckpt = checkpoint.as_ref().expect("checkpoint loaded for translate stage");
                // generators hold non-Send tensors, so each worker builds its own
                current
                    .par_iter()
                    .map_init(
                        || ckpt.generator_sr::<f32>(),
                        |g, slot| {
                            let ir = slot.as_ref()?;
                            Some(match g {
                                Ok(g) => translate_with(g, ir).map_err(|e| e.to_string()),
                                Err(e) => Err(e.to_string()),
                            })
                        },
                    )
                    .collect()
            }
        };
        for (i, out) in outputs.into_iter().enumerate() {
            let Some(out) = out else { continue };
            let input_sha256 = digest(current[i].as_ref().map_or(&[][..], |ir| ir.samples()));
            match out.and_then(|ir| materialize(ir).map_err(|e| e.to_string())) {
                Ok(ir) => {
                    records[i].stages.push(StageHashes {
                        stage,
                        input_sha256,
                        output_sha256: digest(ir.samples()),
                    });
                    current[i] = Some(ir);
                }
                Err(error) => {
                    log::warn!("{}: {stage}: {error}", work[i].id);
                    failures.push(EntryFailure {
                        id: work[i].id.clone(),
                        stage: stage.to_string(),
                        error,
                    });
                    current[i] = None;
                }
            }
        }
        summarize_stage(&stage.to_string(), &current, &mut failures)?;
    }

    let written: Vec<(usize, Option<String>)> = current
        .par_iter()
        .enumerate()
        .filter_map(|(i, slot)| {
            let ir = slot.as_ref()?;
            let path = out_dir.join(&records[i].output);
            Some((i, write_waveform(&path, ir.samples(), SAMPLE_RATE).err().map(|e| e.to_string())))
        })
        .collect();
    for (i, err) in written {
        if let Some(error) = err {
            failures.push(EntryFailure {
                id: work[i].id.clone(),
                stage: "write".into(),
                error,
            });
            current[i] = None;
        }
    }
    let entries = records
        .into_iter()
        .zip(&current)
        .filter_map(|(r, slot)| slot.as_ref().map(|_| r))
        .collect();

    let report = PipelineReport {
        combination: plan.combination,
        seed: plan.seed,
        num_taps: plan.num_taps,
        entries,
        stages: summaries,
        reference,
        failures,
    };
    write_report(&report, &out_dir.join(super::REPORT_NAME))?;
    Ok(report)
}
