//! Preference pairs with contrast-signal masks, and their JSONL records.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{normalize_source, parse_module, SourceText, Span};
use crate::siggraph::{build_graph, extract_slice};
use crate::verifier::CandidateReport;
use crate::SignalId;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("cannot write records: {0}")]
    SinkFailure(String),
    #[error("malformed record on line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("invalid dataset mode `{0}` (expected complete, partial or complete+partial)")]
    BadMode(String),
    #[error("{reports} reports but {sources} sources")]
    Misaligned { reports: usize, sources: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMode {
    pub use_complete_correct: bool,
    pub use_partial_correct: bool,
    pub filter_incorrect_signals: bool,
}

impl Default for DatasetMode {
    fn default() -> Self {
        DatasetMode {
            use_complete_correct: true,
            use_partial_correct: true,
            filter_incorrect_signals: true,
        }
    }
}

impl DatasetMode {
    pub fn new(complete: bool, partial: bool, filter: bool) -> Result<Self, PreferenceError> {
        if !complete && !partial {
            return Err(PreferenceError::BadMode("neither complete nor partial".into()));
        }
        Ok(DatasetMode {
            use_complete_correct: complete,
            use_partial_correct: partial,
            filter_incorrect_signals: filter,
        })
    }

    /// `complete`, `partial` or `complete+partial`.
    pub fn mix_name(&self) -> &'static str {
        match (self.use_complete_correct, self.use_partial_correct) {
            (true, true) => "complete+partial",
            (true, false) => "complete",
            _ => "partial",
        }
    }
}

/// Parses the dataset mix; the filter flag starts enabled.
impl FromStr for DatasetMode {
    type Err = PreferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut complete = false;
        let mut partial = false;
        for part in s.split('+') {
            match part.trim() {
                "complete" => complete = true,
                "partial" => partial = true,
                _ => return Err(PreferenceError::BadMode(s.to_string())),
            }
        }
        DatasetMode::new(complete, partial, true).map_err(|_| PreferenceError::BadMode(s.to_string()))
    }
}

mod span_pairs {
    use super::Span;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(spans: &[Span], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<[usize; 2]> = spans.iter().map(|sp| [sp.start, sp.end]).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Span>, D::Error> {
        let v: Vec<[usize; 2]> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|[a, b]| Span::new(a, b)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub w_id: usize,
    pub l_id: usize,
    pub y_w: String,
    pub y_l: String,
    pub contrast: BTreeSet<SignalId>,
    #[serde(with = "span_pairs")]
    pub w_mask: Vec<Span>,
    #[serde(with = "span_pairs")]
    pub l_mask: Vec<Span>,
    pub w_fully_correct: bool,
}

/// Maximal contrast set `c_w \ c_l`.
pub fn choose_contrast(c_w: &BTreeSet<SignalId>, c_l: &BTreeSet<SignalId>) -> BTreeSet<SignalId> {
    c_w.difference(c_l).cloned().collect()
}

/// Options beyond the dataset mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairOptions {
    pub mode: DatasetMode,
    /// Stop after this many pairs for the prompt.
    pub cap: Option<usize>,
}

/// A pair that was eligible but could not be masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedPair {
    pub w_id: usize,
    pub l_id: usize,
    pub reason: String,
}

fn full_body(text: &str) -> Vec<Span> {
    match parse_module(&SourceText::new(text, "<pair>")) {
        Ok(ast) => vec![ast.body_span()],
        Err(_) => vec![Span::new(0, text.len())],
    }
}

fn contrast_mask(text: &str, contrast: &BTreeSet<SignalId>) -> Result<Vec<Span>, String> {
    let src = SourceText::new(text, "<pair>");
    let ast = parse_module(&src).map_err(|e| e.render(&src))?;
    let graph = build_graph(&ast);
    let slice = extract_slice(&src, &ast, &graph, contrast).map_err(|e| e.to_string())?;
    Ok(slice.mask().to_vec())
}

/// Enumerate eligible ordered pairs `(i, j)` in index order.
pub fn build_pairs(
    prompt_id: &str,
    reports: &[CandidateReport],
    sources: &[SourceText],
    opts: PairOptions,
) -> Result<(Vec<PreferencePair>, Vec<SkippedPair>), PreferenceError> {
    if reports.len() != sources.len() {
        return Err(PreferenceError::Misaligned {
            reports: reports.len(),
            sources: sources.len(),
        });
    }
    let texts: Vec<String> = sources.iter().map(|s| normalize_source(s.text())).collect();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    'outer: for (i, rw) in reports.iter().enumerate() {
        let fully = rw.fully_correct();
        if fully && !opts.mode.use_complete_correct || !fully && !opts.mode.use_partial_correct {
            continue;
        }
        for (j, rl) in reports.iter().enumerate() {
            if i == j {
                continue;
            }
            if opts.cap.is_some_and(|c| pairs.len() >= c) {
                break 'outer;
            }
            let contrast = choose_contrast(&rw.correct_set, &rl.correct_set);
            if contrast.is_empty() || texts[i] == texts[j] {
                continue;
            }
            let masks = if opts.mode.filter_incorrect_signals {
                contrast_mask(&texts[i], &contrast).and_then(|w| Ok((w, contrast_mask(&texts[j], &contrast)?)))
            } else {
                Ok((full_body(&texts[i]), full_body(&texts[j])))
            };
            match masks {
                Ok((w_mask, l_mask)) => pairs.push(PreferencePair {
                    prompt_id: prompt_id.to_string(),
                    w_id: i,
                    l_id: j,
                    y_w: texts[i].clone(),
                    y_l: texts[j].clone(),
                    contrast,
                    w_mask,
                    l_mask,
                    w_fully_correct: fully,
                }),
                Err(reason) => {
                    log::info!("{prompt_id}: pair ({i}, {j}) skipped: {reason}");
                    skipped.push(SkippedPair { w_id: i, l_id: j, reason });
                }
            }
        }
    }
    Ok((pairs, skipped))
}

pub fn record_line(pair: &PreferencePair) -> String {
    serde_json::to_string(pair).expect("pair serialization cannot fail")
}

/// Write one JSON object per line.
pub fn emit_records(pairs: &[PreferencePair], sink: &mut impl Write) -> Result<usize, PreferenceError> {
    for p in pairs {
        writeln!(sink, "{}", record_line(p)).map_err(|e| PreferenceError::SinkFailure(e.to_string()))?;
    }
    sink.flush().map_err(|e| PreferenceError::SinkFailure(e.to_string()))?;
    Ok(pairs.len())
}

pub fn read_records(reader: impl BufRead) -> Result<Vec<PreferencePair>, PreferenceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PreferenceError::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PreferenceError::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Checks the structural invariants of an emitted pair; returns the first
/// violation.
pub fn check_pair(p: &PreferencePair, c_w: &BTreeSet<SignalId>, c_l: &BTreeSet<SignalId>) -> Result<(), String> {
    if p.contrast.is_empty() {
        return Err("empty contrast".into());
    }
    if !p.contrast.is_subset(c_w) {
        return Err("contrast signal not correct in y_w".into());
    }
    if p.contrast.iter().any(|s| c_l.contains(s)) {
        return Err("contrast signal correct in y_l".into());
    }
    if p.y_w == p.y_l {
        return Err("identical sources".into());
    }
    for (mask, text) in [(&p.w_mask, &p.y_w), (&p.l_mask, &p.y_l)] {
        if mask.is_empty() {
            return Err("empty mask".into());
        }
        for w in mask.windows(2) {
            if w[0].end > w[1].start {
                return Err("mask spans overlap or are unsorted".into());
            }
        }
        if mask.iter().any(|s| s.start > s.end || s.end > text.len()) {
            return Err("mask span outside the source".into());
        }
    }
    Ok(())
}
