//! `run`: executes one pipeline over a dataset and writes its logs.
//!
//! Files written to the output directory:
//!
//! * `predictions.csv`: one [`PredictionEntry`] per query
//! * `corrections.csv`: SIC records (`sic` pipeline)
//! * `arbitration.csv`: winner plus `<id>_match` / `<id>_magnitude` per
//!   technique (`music`, `amusic`)
//! * `events.jsonl`: per-frame records and selection events (`music`, `amusic`)
//! * `coverage.json`: coverage snapshots (`music`, `amusic`)
//! * `report.json`, `pr.csv`: the evaluation
//!
//! Line-oriented logs are flushed as frames complete. Under `amusic` a frame's
//! run count can still grow until its window closes, so prediction rows are
//! flushed window by window.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use music_vpr::adaptive::{AdaptiveController, ControllerEvent};
use music_vpr::eval::{evaluate, EvalReport, PredictionEntry, PredictionLog};
use music_vpr::music::{coverage, CoverageVector, FrameArbitration, MusicEngine};
use music_vpr::providers::{TechniqueId, TechniqueProvider};
use music_vpr::sic::SicTrack;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Pipeline, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    /// Replaces the config's `output_dir` (relative to the working directory).
    pub out: Option<PathBuf>,
    /// Replaces the config's `seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub pipeline: Pipeline,
    pub output_dir: PathBuf,
    pub report: EvalReport,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::internal(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| io_err(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

struct CsvLog {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl CsvLog {
    fn create(dir: &Path, name: &str) -> Result<Self, CliError> {
        let (path, f) = create(dir, name)?;
        Ok(Self {
            path,
            w: csv::Writer::from_writer(f),
        })
    }

    fn serialize(&mut self, row: impl Serialize) -> Result<(), CliError> {
        self.w.serialize(row).map_err(|e| io_err(&self.path, e))
    }

    fn record(&mut self, row: &[String]) -> Result<(), CliError> {
        self.w.write_record(row).map_err(|e| io_err(&self.path, e))
    }

    fn flush(&mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| io_err(&self.path, e))
    }
}

struct JsonLines {
    path: PathBuf,
    w: BufWriter<File>,
}

impl JsonLines {
    fn create(dir: &Path, name: &str) -> Result<Self, CliError> {
        let (path, w) = create(dir, name)?;
        Ok(Self { path, w })
    }

    fn write(&mut self, v: &Value) -> Result<(), CliError> {
        writeln!(self.w, "{v}").map_err(|e| io_err(&self.path, e))
    }

    fn flush(&mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// Prediction rows held back until their run counts are final.
struct Predictions {
    csv: CsvLog,
    log: PredictionLog,
    pending: Vec<PredictionEntry>,
}

impl Predictions {
    fn commit(&mut self) -> Result<(), CliError> {
        for e in self.pending.drain(..) {
            self.csv.serialize(e)?;
            self.log.entries.push(e);
        }
        self.csv.flush()
    }
}

fn coverage_json(cov: &CoverageVector) -> Value {
    Value::Object(
        cov.entries()
            .iter()
            .map(|(t, p)| (t.to_string(), json!(p)))
            .collect(),
    )
}

fn ids_json(ids: &[TechniqueId]) -> Value {
    json!(ids.iter().map(|t| t.as_str()).collect::<Vec<_>>())
}

fn arbitration_header(ids: &[TechniqueId]) -> Vec<String> {
    let mut h: Vec<String> = ["query_index", "winner", "prediction", "consistency"]
        .map(String::from)
        .to_vec();
    for t in ids {
        h.push(format!("{t}_match"));
        h.push(format!("{t}_magnitude"));
    }
    h
}

fn arbitration_row(ids: &[TechniqueId], a: &FrameArbitration) -> Vec<String> {
    let mut row = vec![
        a.query_index.to_string(),
        a.winner.to_string(),
        a.prediction.to_string(),
        a.winner_consistency.to_string(),
    ];
    for t in ids {
        match a.record_for(t) {
            Some(r) => {
                row.push(r.corrected_match.to_string());
                row.push(r.correction_magnitude.to_string());
            }
            None => row.extend([String::new(), String::new()]),
        }
    }
    row
}

fn frame_event(q: usize, subset: &[TechniqueId], a: &FrameArbitration) -> Value {
    json!({
        "type": "frame",
        "q": q,
        "subset": ids_json(subset),
        "chosen_technique": a.winner.as_str(),
        "prediction": a.prediction,
        "consistency": a.winner_consistency,
    })
}

pub fn cmd_run(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let (mut cfg, base) = RunConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let output_dir = match &opts.out {
        Some(o) => o.clone(),
        None => base.join(&cfg.output_dir),
    };
    let providers = cfg.build_providers(&base)?;
    let available = providers.iter().map(|p| p.query_count()).min().unwrap_or(0);
    let queries = cfg.queries.map_or(available, |q| q.min(available));
    if queries == 0 {
        return Err(CliError::data("dataset has no queries"));
    }
    std::fs::create_dir_all(&output_dir).map_err(|e| io_err(&output_dir, e))?;

    let mut preds = Predictions {
        csv: CsvLog::create(&output_dir, "predictions.csv")?,
        log: PredictionLog::default(),
        pending: Vec::new(),
    };
    match cfg.pipeline {
        Pipeline::Baseline => run_baseline(&providers[0], queries, &mut preds)?,
        Pipeline::Sic => run_sic(&cfg, &providers[0], queries, &output_dir, &mut preds)?,
        Pipeline::Music => run_music(&cfg, providers, queries, &output_dir, &mut preds)?,
        Pipeline::Amusic => run_amusic(&cfg, providers, queries, &output_dir, &mut preds)?,
    }
    preds.commit()?;

    let report = evaluate(&preds.log, &cfg.ground_truth)?;
    write_report(&output_dir, &report)?;
    Ok(RunSummary {
        pipeline: cfg.pipeline,
        output_dir,
        report,
    })
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), CliError> {
    let (path, mut f) = create(dir, "report.json")?;
    let text = serde_json::to_string_pretty(report).map_err(CliError::internal)?;
    writeln!(f, "{text}")
        .and_then(|_| f.flush())
        .map_err(|e| io_err(&path, e))?;
    let mut pr = CsvLog::create(dir, "pr.csv")?;
    for p in &report.pr_points {
        pr.serialize(p)?;
    }
    pr.flush()
}

fn entry(
    q: usize,
    prediction: usize,
    confidence: f64,
    runs: usize,
    ensemble: usize,
) -> PredictionEntry {
    PredictionEntry {
        query_index: q,
        prediction,
        confidence,
        technique_runs: runs,
        ensemble_size: ensemble,
        reselection: false,
    }
}

fn run_baseline(
    provider: &Arc<dyn TechniqueProvider>,
    queries: usize,
    preds: &mut Predictions,
) -> Result<(), CliError> {
    for q in 0..queries {
        let v = provider
            .score(q)
            .map_err(|e| CliError::data(format!("{}: {e}", provider.id())))?;
        preds.pending.push(entry(q, v.argmax(), v.max(), 1, 1));
        preds.commit()?;
    }
    Ok(())
}

fn run_sic(
    cfg: &RunConfig,
    provider: &Arc<dyn TechniqueProvider>,
    queries: usize,
    dir: &Path,
    preds: &mut Predictions,
) -> Result<(), CliError> {
    let mut corrections = CsvLog::create(dir, "corrections.csv")?;
    let mut track = SicTrack::new(0, cfg.sic);
    for q in 0..queries {
        let raw = provider
            .score(q)
            .map_err(|e| CliError::data(format!("{}: {e}", provider.id())))?;
        let rec = track.push(q, raw)?;
        corrections.serialize(rec)?;
        corrections.flush()?;
        preds
            .pending
            .push(entry(q, rec.corrected_match, rec.winning_consistency, 1, 1));
        preds.commit()?;
    }
    Ok(())
}

fn write_coverage(dir: &Path, snapshots: &[Value]) -> Result<(), CliError> {
    let (path, mut f) = create(dir, "coverage.json")?;
    let text = serde_json::to_string_pretty(snapshots).map_err(CliError::internal)?;
    writeln!(f, "{text}")
        .and_then(|_| f.flush())
        .map_err(|e| io_err(&path, e))
}

fn run_music(
    cfg: &RunConfig,
    providers: Vec<Arc<dyn TechniqueProvider>>,
    queries: usize,
    dir: &Path,
    preds: &mut Predictions,
) -> Result<(), CliError> {
    let window = cfg.adaptive.window;
    let mut engine = MusicEngine::new(providers, cfg.sic, window)?;
    let ids = engine.ensemble();
    let mut arb = CsvLog::create(dir, "arbitration.csv")?;
    arb.record(&arbitration_header(&ids))?;
    let mut events = JsonLines::create(dir, "events.jsonl")?;
    let mut snapshots = Vec::new();
    for q in 0..queries {
        let a = engine.step()?;
        arb.record(&arbitration_row(&ids, &a))?;
        events.write(&frame_event(q, &ids, &a))?;
        if (q + 1) % window == 0 {
            let cov = coverage(engine.history(), &ids)?;
            snapshots.push(json!({ "frame": q, "coverage": coverage_json(&cov) }));
        }
        arb.flush()?;
        events.flush()?;
        preds.pending.push(entry(
            q,
            a.prediction,
            a.winner_consistency,
            ids.len(),
            ids.len(),
        ));
        preds.commit()?;
    }
    write_coverage(dir, &snapshots)
}

fn run_amusic(
    cfg: &RunConfig,
    providers: Vec<Arc<dyn TechniqueProvider>>,
    queries: usize,
    dir: &Path,
    preds: &mut Predictions,
) -> Result<(), CliError> {
    let mut ctl = AdaptiveController::new(providers, cfg.adaptive_config())?;
    let ids = ctl.ensemble().to_vec();
    let mut arb = CsvLog::create(dir, "arbitration.csv")?;
    arb.record(&arbitration_header(&ids))?;
    let mut events = JsonLines::create(dir, "events.jsonl")?;
    let mut snapshots = Vec::new();
    for q in 0..queries {
        let step = ctl.step()?;
        arb.record(&arbitration_row(&ids, &step.arbitration))?;
        events.write(&frame_event(q, &step.scored, &step.arbitration))?;
        let mut e = entry(q, step.prediction, step.consistency, 0, ids.len());
        for ev in &step.events {
            match ev {
                ControllerEvent::InitialSelection {
                    frame,
                    subset,
                    coverage,
                } => {
                    let cov = coverage_json(coverage);
                    events.write(&json!({
                        "type": "initial_selection",
                        "q": frame,
                        "subset": ids_json(subset),
                        "coverage": cov,
                    }))?;
                    snapshots.push(
                        json!({ "frame": frame, "event": "initial_selection", "coverage": cov }),
                    );
                }
                ControllerEvent::WindowAccepted { frame, p_value } => {
                    events.write(
                        &json!({ "type": "window_accepted", "q": frame, "p_value": p_value }),
                    )?;
                }
                ControllerEvent::Reselection(r) => {
                    e.reselection = true;
                    let cov = coverage_json(&r.coverage_at_trigger);
                    events.write(&json!({
                        "type": "reselection",
                        "q": r.trigger_frame,
                        "p_value": r.p_value,
                        "old_subset": ids_json(&r.old_subset),
                        "new_subset": ids_json(&r.new_subset),
                        "coverage": cov,
                    }))?;
                    snapshots.push(json!({ "frame": r.trigger_frame, "event": "reselection", "coverage": cov }));
                }
            }
        }
        arb.flush()?;
        events.flush()?;
        preds.pending.push(e);
        if !step.events.is_empty() {
            settle_runs(preds, ctl.technique_runs());
            preds.commit()?;
        }
    }
    settle_runs(preds, ctl.technique_runs());
    write_coverage(dir, &snapshots)
}

fn settle_runs(preds: &mut Predictions, runs: &[usize]) {
    for e in &mut preds.pending {
        e.technique_runs = runs[e.query_index];
    }
}
