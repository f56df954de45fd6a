//! Corpus-level orchestration: verify every prompt, build pairs, write
//! `prefs.jsonl`, `reports.jsonl` and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frontend::SourceText;
use crate::preference::{build_pairs, record_line, DatasetMode, PairOptions};
use crate::verifier::{prepare_reference_timed, verify_against_timed, CandidateReport, StageTimes, StimulusPlan};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("corpus layout error: {0}")]
    CorpusLayoutError(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn default_n() -> usize {
    100
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn default_beta() -> f64 {
    0.1
}

fn default_mode() -> String {
    "complete+partial".into()
}

fn default_true() -> bool {
    true
}

/// Flat run configuration; every field has a CLI flag of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_n")]
    pub n_stimuli: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_true")]
    pub filter_incorrect_signals: bool,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub pair_cap: Option<usize>,
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default)]
    pub corpus: PathBuf,
    /// Candidates live here as `<prompt_id>/cand_*.v` instead of beside `ref.v`.
    #[serde(default)]
    pub candidates: Option<PathBuf>,
    /// JSON index replacing the directory convention.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::ConfigError(e.to_string()))
    }

    pub fn dataset_mode(&self) -> Result<DatasetMode, PipelineError> {
        let mut m: DatasetMode = self.mode.parse().map_err(|e| PipelineError::ConfigError(format!("{e}")))?;
        m.filter_incorrect_signals = self.filter_incorrect_signals;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::ConfigError(m.to_string()));
        if self.n_stimuli < 1 {
            return bad("n_stimuli must be at least 1");
        }
        if self.workers < 1 {
            return bad("workers must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if self.pair_cap == Some(0) {
            return bad("pair_cap must be at least 1");
        }
        if self.corpus.as_os_str().is_empty() && self.manifest.is_none() {
            return bad("corpus directory is required");
        }
        if self.output.as_os_str().is_empty() {
            return bad("output directory is required");
        }
        self.dataset_mode().map(|_| ())
    }
}

/// One prompt's inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub prompt_id: String,
    pub reference: PathBuf,
    pub candidates: Vec<PathBuf>,
}

/// Candidate files sorted by the number in `cand_<n>.v`, then by name.
pub fn candidate_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x == "v")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("cand_"))
        })
        .collect();
    let key = |p: &PathBuf| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("").trim_start_matches("cand_").to_string();
        (stem.parse::<u64>().unwrap_or(u64::MAX), stem)
    };
    files.sort_by_key(key);
    Ok(files)
}

/// Discover prompts from the directory convention or the JSON index.
pub fn discover(config: &PipelineConfig) -> Result<Vec<PromptEntry>, PipelineError> {
    if let Some(index) = &config.manifest {
        let text = fs::read_to_string(index).map_err(|e| io_err(index, e))?;
        let mut entries: Vec<PromptEntry> = serde_json::from_str(&text)
            .map_err(|e| PipelineError::CorpusLayoutError(format!("{}: {e}", index.display())))?;
        let base = index.parent().unwrap_or(Path::new("."));
        for e in &mut entries {
            e.reference = base.join(&e.reference);
            e.candidates = e.candidates.iter().map(|c| base.join(c)).collect();
        }
        return Ok(entries);
    }
    let root = &config.corpus;
    if !root.is_dir() {
        return Err(PipelineError::CorpusLayoutError(format!("{} is not a directory", root.display())));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| io_err(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        let id = d.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let reference = d.join("ref.v");
        if !reference.is_file() {
            return Err(PipelineError::CorpusLayoutError(format!("{} has no ref.v", d.display())));
        }
        let cand_dir = match &config.candidates {
            Some(c) => c.join(&id),
            None => d.clone(),
        };
        out.push(PromptEntry {
            prompt_id: id,
            reference,
            candidates: candidate_files(&cand_dir)?,
        });
    }
    if out.is_empty() {
        return Err(PipelineError::CorpusLayoutError(format!("{} contains no prompts", root.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSummary {
    pub prompt_id: String,
    pub candidates: usize,
    pub simulated: usize,
    pub pairs_emitted: usize,
    pub pairs_skipped: usize,
    pub reference_valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub total_seconds: f64,
    pub samples: usize,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config: PipelineConfig,
    pub prompts: Vec<PromptSummary>,
    pub stages: Vec<StageTiming>,
    pub wall_clock_seconds: f64,
    /// SHA-256 over `prefs.jsonl`, `reports.jsonl` and the prompt summaries.
    pub content_hash: String,
}

impl RunManifest {
    pub fn succeeded(&self) -> usize {
        self.prompts.iter().filter(|p| p.reference_valid).count()
    }
}

#[derive(Serialize)]
struct ReportLine<'a> {
    prompt_id: &'a str,
    #[serde(flatten)]
    report: &'a CandidateReport,
}

struct PromptOutcome {
    summary: PromptSummary,
    report_lines: Vec<String>,
    pref_lines: Vec<String>,
    times: StageTimes,
    slice_time: Duration,
    slices: usize,
}

fn read_source(path: &Path) -> SourceText {
    match SourceText::read_file(path) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{}: {e}", path.display());
            SourceText::new("", path.display().to_string())
        }
    }
}

fn process_prompt(entry: &PromptEntry, plan: StimulusPlan, opts: PairOptions) -> PromptOutcome {
    let mut times = StageTimes::default();
    let mut summary = PromptSummary {
        prompt_id: entry.prompt_id.clone(),
        candidates: entry.candidates.len(),
        simulated: 0,
        pairs_emitted: 0,
        pairs_skipped: 0,
        reference_valid: false,
        error: None,
    };
    let empty = |summary, times| PromptOutcome {
        summary,
        report_lines: Vec::new(),
        pref_lines: Vec::new(),
        times,
        slice_time: Duration::ZERO,
        slices: 0,
    };
    let reference = match SourceText::read_file(&entry.reference) {
        Ok(r) => r,
        Err(e) => {
            summary.error = Some(e.to_string());
            return empty(summary, times);
        }
    };
    let prepared = match prepare_reference_timed(&reference, plan, &mut times) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{}: {e}", entry.prompt_id);
            summary.error = Some(e.to_string());
            return empty(summary, times);
        }
    };
    summary.reference_valid = true;
    let sources: Vec<SourceText> = entry.candidates.iter().map(|p| read_source(p)).collect();
    let results: Vec<(CandidateReport, StageTimes)> = sources
        .par_iter()
        .enumerate()
        .map(|(i, s)| verify_against_timed(&prepared, i, s))
        .collect();
    let mut reports = Vec::with_capacity(results.len());
    for (r, t) in results {
        times.add(&t);
        reports.push(r);
    }
    summary.simulated = reports
        .iter()
        .filter(|r| r.status == crate::verifier::CandidateStatus::Simulated)
        .count();
    let report_lines = reports
        .iter()
        .map(|r| {
            serde_json::to_string(&ReportLine {
                prompt_id: &entry.prompt_id,
                report: r,
            })
            .expect("report serialization cannot fail")
        })
        .collect();
    let t = Instant::now();
    let (pairs, skipped) = build_pairs(&entry.prompt_id, &reports, &sources, opts).expect("reports align with sources");
    let slice_time = t.elapsed();
    let slices = if opts.mode.filter_incorrect_signals {
        2 * (pairs.len() + skipped.len())
    } else {
        0
    };
    summary.pairs_emitted = pairs.len();
    summary.pairs_skipped = skipped.len();
    PromptOutcome {
        summary,
        report_lines,
        pref_lines: pairs.iter().map(record_line).collect(),
        times,
        slice_time,
        slices,
    }
}

fn timing(stage: &str, total: Duration, samples: usize) -> StageTiming {
    let total_seconds = total.as_secs_f64();
    StageTiming {
        stage: stage.to_string(),
        total_seconds,
        samples,
        mean_seconds: if samples == 0 { 0.0 } else { total_seconds / samples as f64 },
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn join_lines(lines: &[String]) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    s
}

/// Run the whole corpus and write outputs into `config.output`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let mode = config.dataset_mode()?;
    let entries = discover(config)?;
    let plan = if config.exhaustive {
        StimulusPlan::Exhaustive
    } else {
        StimulusPlan::Random {
            n: config.n_stimuli,
            seed: config.seed,
        }
    };
    let opts = PairOptions { mode, cap: config.pair_cap };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::ConfigError(e.to_string()))?;
    let start = Instant::now();
    let outcomes: Vec<PromptOutcome> =
        pool.install(|| entries.par_iter().map(|e| process_prompt(e, plan, opts)).collect());
    let wall = start.elapsed();

    fs::create_dir_all(&config.output).map_err(|e| io_err(&config.output, e))?;
    let prefs: Vec<String> = outcomes.iter().flat_map(|o| o.pref_lines.iter().cloned()).collect();
    let reports: Vec<String> = outcomes.iter().flat_map(|o| o.report_lines.iter().cloned()).collect();
    let prefs_text = join_lines(&prefs);
    let reports_text = join_lines(&reports);
    write_file(&config.output.join("prefs.jsonl"), prefs_text.as_bytes())?;
    write_file(&config.output.join("reports.jsonl"), reports_text.as_bytes())?;

    let prompts: Vec<PromptSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let mut hasher = Sha256::new();
    hasher.update(prefs_text.as_bytes());
    hasher.update(reports_text.as_bytes());
    hasher.update(serde_json::to_vec(&prompts).expect("summaries serialize"));
    let content_hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>();

    let mut times = StageTimes::default();
    let (mut slice_time, mut slices) = (Duration::ZERO, 0);
    for o in &outcomes {
        times.add(&o.times);
        slice_time += o.slice_time;
        slices += o.slices;
    }
    let manifest = RunManifest {
        toolkit_version: VERSION.to_string(),
        config: config.clone(),
        prompts,
        stages: vec![
            timing("parse", times.parse, times.parsed),
            timing("graph+slice", slice_time, slices),
            timing("simulate", times.simulate, times.simulated),
            timing("compare", times.compare, times.compared),
        ],
        wall_clock_seconds: wall.as_secs_f64(),
        content_hash,
    };
    write_file(
        &config.output.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes(),
    )?;
    Ok(manifest)
}

/// Per-sample mean seconds for each stage.
pub fn stage_timings(manifest: &RunManifest) -> Vec<(String, f64)> {
    manifest.stages.iter().map(|s| (s.stage.clone(), s.mean_seconds)).collect()
}

pub fn render_stage_table(manifest: &RunManifest) -> String {
    let mut out = format!("{:<12} {:>10} {:>14}\n", "stage", "samples", "mean_seconds");
    for s in &manifest.stages {
        out.push_str(&format!("{:<12} {:>10} {:>14.6}\n", s.stage, s.samples, s.mean_seconds));
    }
    out
}
