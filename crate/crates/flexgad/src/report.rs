//! JSON, CSV and JSONL writers for run artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use flexgad_core::autodiff::{Tape, TapeRecord};
use flexgad_core::model::{forward_on_tape, ModelInputs};
use flexgad_core::train::EpochRecord;
use flexgad_core::{AnomalyReport, CommunityAlgorithm, CommunityAssignment, ExperimentSummary, ModelConfig, ModelParams};
use serde::Serialize;

use crate::error::{IoContext, IoError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::json(path, e))?;
    writeln!(w).at(path)?;
    w.flush().at(path)
}

/// `node_id,score[,label]`, highest score first, ties by node id.
pub fn write_scores_csv(path: &Path, report: &AnomalyReport, labels: Option<&[u8]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    match labels {
        Some(_) => writeln!(w, "node_id,score,label"),
        None => writeln!(w, "node_id,score"),
    }
    .at(path)?;
    for i in report.ranking() {
        let s = report.scores[i];
        match labels {
            Some(l) => writeln!(w, "{i},{s},{}", l[i]),
            None => writeln!(w, "{i},{s}"),
        }
        .at(path)?;
    }
    w.flush().at(path)
}

/// One JSON object per epoch. Write errors are held until [`JsonlLog::finish`]
/// so the writer can sit inside an infallible training callback.
pub struct JsonlLog {
    path: PathBuf,
    out: BufWriter<File>,
    error: Option<IoError>,
}

impl JsonlLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(File::create(path).at(path)?),
            error: None,
        })
    }

    pub fn record(&mut self, r: &EpochRecord) {
        if self.error.is_some() {
            return;
        }
        let res = serde_json::to_writer(&mut self.out, r)
            .map_err(|e| IoError::json(&self.path, e))
            .and_then(|_| writeln!(self.out).at(&self.path));
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush().at(&self.path)
    }
}

pub fn write_communities_csv(path: &Path, a: &CommunityAssignment) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    writeln!(w, "node_id,community_id").at(path)?;
    for (i, c) in a.labels().iter().enumerate() {
        writeln!(w, "{i},{c}").at(path)?;
    }
    w.flush().at(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunitySummary {
    pub algorithm: CommunityAlgorithm,
    pub seed: u64,
    pub num_nodes: usize,
    pub num_communities: usize,
    /// Absent for graphs without edges.
    pub modularity: Option<f64>,
    pub sizes: Vec<usize>,
}

/// Operation list of one forward pass, for inspecting the tape.
#[derive(Debug, Clone, Serialize)]
pub struct TapeDump {
    pub num_records: usize,
    pub loss_id: usize,
    pub records: Vec<TapeRecord>,
}

pub fn tape_dump(inputs: &ModelInputs, cfg: &ModelConfig, params: &ModelParams) -> Result<TapeDump> {
    let mut t = Tape::new();
    let trace = forward_on_tape(&mut t, inputs, cfg, params, None)?;
    let records = t.records();
    Ok(TapeDump {
        num_records: records.len(),
        loss_id: trace.total.index(),
        records,
    })
}

/// One table row: mean and population std of AUC in percent, plus the best run.
pub fn summary_line(s: &ExperimentSummary) -> String {
    format!(
        "AUC {:.2} ± {:.2} (best {:.2}) over {} run(s)",
        100.0 * s.mean_auc,
        100.0 * s.std_auc,
        100.0 * s.best_auc,
        s.runs.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use flexgad_core::scoring::RunMeta;
    use flexgad_core::TrainConfig;

    fn report(scores: Vec<f64>) -> AnomalyReport {
        let n = scores.len();
        AnomalyReport {
            scores,
            h_loss: vec![0.0; n],
            feature_loss: vec![0.0; n],
            lambda_n_prime: 1.0,
            lambda_x_prime: 1.0,
            attention_avg: [[0.5; 2]; 2],
            auc: None,
            run_meta: RunMeta {
                seed: 0,
                model: ModelConfig::default(),
                train: TrainConfig::default(),
                epochs_run: 0,
                total_seconds: 0.0,
                mean_epoch_seconds: 0.0,
                sigma_clamps: 0,
            },
        }
    }

    #[test]
    fn scores_csv_is_sorted_descending() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("s.csv");
        write_scores_csv(&p, &report(vec![0.1, 0.9, 0.5, 0.9]), Some(&[0, 1, 0, 1])).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "node_id,score,label\n1,0.9,1\n3,0.9,1\n2,0.5,0\n0,0.1,0\n");
        write_scores_csv(&p, &report(vec![0.2, 0.4]), None).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "node_id,score\n1,0.4\n0,0.2\n");
    }

    #[test]
    fn jsonl_has_one_object_per_line() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("log.jsonl");
        let mut log = JsonlLog::create(&p).unwrap();
        for epoch in 0..3 {
            log.record(&EpochRecord {
                epoch,
                total_loss: 1.0,
                feat_loss: 0.5,
                h_loss: 0.25,
                seconds: 0.01,
            });
        }
        log.finish().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let v: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(v["epoch"], 2);
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
    }
}
