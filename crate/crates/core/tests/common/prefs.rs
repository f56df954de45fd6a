use salvkit::frontend::{parse_module, SourceText};
use salvkit::preference::DatasetMode;
use salvkit::verifier::{CandidateReport, CandidateStatus, SignalVerdict};
use salvkit::SignalId;
use serde::Deserialize;

#[derive(Deserialize)]
struct ScriptCand {
    source: String,
    status: CandidateStatus,
    correct: Vec<String>,
}

#[derive(Deserialize)]
struct ScriptPrompt {
    prompt_id: String,
    outputs: Vec<String>,
    candidates: Vec<ScriptCand>,
}

pub struct Prompt {
    pub id: String,
    pub reports: Vec<CandidateReport>,
    pub sources: Vec<SourceText>,
}

pub fn scripted() -> Vec<Prompt> {
    let text = std::fs::read_to_string(super::fixtures().join("pref_script.json")).unwrap();
    let script: Vec<ScriptPrompt> = serde_json::from_str(&text).unwrap();
    script
        .into_iter()
        .map(|p| Prompt {
            id: p.prompt_id,
            reports: p
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| CandidateReport {
                    candidate_id: i,
                    verdicts: p
                        .outputs
                        .iter()
                        .map(|o| SignalVerdict {
                            signal: o.as_str().into(),
                            correct: c.correct.contains(o),
                            first_mismatch_cycle: if c.correct.contains(o) { None } else { Some(0) },
                        })
                        .collect(),
                    status: c.status,
                    correct_set: c.correct.iter().map(|s| SignalId::from(s.as_str())).collect(),
                })
                .collect(),
            sources: p.candidates.iter().map(|c| SourceText::new(&c.source, "c.v")).collect(),
        })
        .collect()
}

/// Direct reading of the pairing rule, kept free of the library's helpers.
pub fn brute_force(p: &Prompt, mode: DatasetMode, cap: Option<usize>) -> Vec<(usize, usize, Vec<String>)> {
    let k = p.reports.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let ci: Vec<&String> = p.reports[i].verdicts.iter().filter(|v| v.correct).map(|v| &v.signal.0).collect();
            let cj: Vec<&String> = p.reports[j].verdicts.iter().filter(|v| v.correct).map(|v| &v.signal.0).collect();
            let contrast: Vec<String> = ci.iter().filter(|s| !cj.contains(s)).map(|s| s.to_string()).collect();
            if contrast.is_empty() {
                continue;
            }
            let fully = p.reports[i].status == CandidateStatus::Simulated && p.reports[i].verdicts.iter().all(|v| v.correct);
            if fully && !mode.use_complete_correct || !fully && !mode.use_partial_correct {
                continue;
            }
            if p.sources[i].text() == p.sources[j].text() {
                continue;
            }
            let parses = |s: &SourceText| parse_module(s).is_ok();
            if mode.filter_incorrect_signals && !(parses(&p.sources[i]) && parses(&p.sources[j])) {
                continue;
            }
            out.push((i, j, contrast));
        }
    }
    if let Some(c) = cap {
        out.truncate(c);
    }
    out
}

pub fn modes() -> Vec<DatasetMode> {
    let mut v = Vec::new();
    for (c, p) in [(true, false), (false, true), (true, true)] {
        for f in [true, false] {
            v.push(DatasetMode::new(c, p, f).unwrap());
        }
    }
    v
}
