//! Differential per-signal verification of candidates against a reference.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{parse_module, ModuleAst, SourceText};
use crate::simulator::{elaborate, SimTrace};
use crate::stimulus::{classify_ports, exhaustive, generate, StimulusError, StimulusSet};
use crate::SignalId;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("reference module is invalid: {0}")]
    ReferenceInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalVerdict {
    pub signal: SignalId,
    pub correct: bool,
    pub first_mismatch_cycle: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Simulated,
    InterfaceMismatch,
    ParseError,
    SimError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub candidate_id: usize,
    pub verdicts: Vec<SignalVerdict>,
    pub status: CandidateStatus,
    pub correct_set: BTreeSet<SignalId>,
}

impl CandidateReport {
    /// Every output matched the reference.
    pub fn fully_correct(&self) -> bool {
        self.status == CandidateStatus::Simulated && self.verdicts.iter().all(|v| v.correct)
    }

    fn failed(candidate_id: usize, outputs: &[String], status: CandidateStatus) -> Self {
        CandidateReport {
            candidate_id,
            verdicts: outputs
                .iter()
                .map(|o| SignalVerdict {
                    signal: o.as_str().into(),
                    correct: false,
                    first_mismatch_cycle: None,
                })
                .collect(),
            status,
            correct_set: BTreeSet::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

/// How the shared stimulus set of a prompt is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StimulusPlan {
    Random { n: usize, seed: u64 },
    Exhaustive,
}

/// A reference that parsed, elaborated and simulated cleanly.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    pub ast: ModuleAst,
    pub stimuli: StimulusSet,
    pub trace: SimTrace,
    pub outputs: Vec<String>,
}

/// Accumulated time per verification stage, with sample counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub parse: Duration,
    pub parsed: usize,
    pub simulate: Duration,
    pub simulated: usize,
    pub compare: Duration,
    pub compared: usize,
}

impl StageTimes {
    pub fn add(&mut self, o: &StageTimes) {
        self.parse += o.parse;
        self.parsed += o.parsed;
        self.simulate += o.simulate;
        self.simulated += o.simulated;
        self.compare += o.compare;
        self.compared += o.compared;
    }
}

/// Parse, elaborate and simulate the reference under `plan`.
pub fn prepare_reference(reference: &SourceText, plan: StimulusPlan) -> Result<PreparedReference, VerifyError> {
    prepare_reference_timed(reference, plan, &mut StageTimes::default())
}

pub fn prepare_reference_timed(
    reference: &SourceText,
    plan: StimulusPlan,
    times: &mut StageTimes,
) -> Result<PreparedReference, VerifyError> {
    let invalid = |m: String| VerifyError::ReferenceInvalid(m);
    let t0 = Instant::now();
    let parsed = parse_module(reference);
    times.parse += t0.elapsed();
    times.parsed += 1;
    let ast = parsed.map_err(|e| invalid(e.render(reference)))?;
    let classes = classify_ports(&ast);
    let stimuli = match plan {
        StimulusPlan::Random { n, seed } => generate(&classes, n, seed),
        StimulusPlan::Exhaustive => exhaustive(&classes),
    }
    .map_err(|e: StimulusError| invalid(e.to_string()))?;
    let t1 = Instant::now();
    let ran = elaborate(&ast).and_then(|inst| inst.run(&stimuli));
    times.simulate += t1.elapsed();
    times.simulated += 1;
    let trace = ran.map_err(|e| invalid(e.to_string()))?;
    let outputs = ast.outputs().map(|p| p.name.clone()).collect();
    Ok(PreparedReference {
        ast,
        stimuli,
        trace,
        outputs,
    })
}

fn same_interface(a: &ModuleAst, b: &ModuleAst) -> bool {
    let key = |m: &ModuleAst| -> BTreeSet<(String, bool, u32)> {
        m.ports
            .iter()
            .map(|p| (p.name.clone(), p.direction == crate::frontend::Direction::Input, p.width))
            .collect()
    };
    a.ports.len() == b.ports.len() && key(a) == key(b)
}

fn check_candidate(
    reference: &PreparedReference,
    id: usize,
    candidate: &SourceText,
    times: &mut StageTimes,
) -> CandidateReport {
    let outs = &reference.outputs;
    let t0 = Instant::now();
    let parsed = parse_module(candidate);
    times.parse += t0.elapsed();
    times.parsed += 1;
    let ast = match parsed {
        Ok(a) => a,
        Err(e) => {
            log::debug!("candidate {id}: {}", e.render(candidate));
            return CandidateReport::failed(id, outs, CandidateStatus::ParseError);
        }
    };
    if !same_interface(&reference.ast, &ast) {
        return CandidateReport::failed(id, outs, CandidateStatus::InterfaceMismatch);
    }
    let t1 = Instant::now();
    let ran = elaborate(&ast).and_then(|inst| inst.run(&reference.stimuli));
    times.simulate += t1.elapsed();
    times.simulated += 1;
    let trace = match ran {
        Ok(t) => t,
        Err(e) => {
            log::debug!("candidate {id}: {e}");
            return CandidateReport::failed(id, outs, CandidateStatus::SimError);
        }
    };
    let t2 = Instant::now();
    let verdicts: Vec<SignalVerdict> = outs
        .iter()
        .map(|o| {
            let want = reference.trace.output(o).unwrap_or(&[]);
            let got = trace.output(o).unwrap_or(&[]);
            let first = (0..want.len()).find(|&k| got.get(k) != Some(&want[k]));
            SignalVerdict {
                signal: o.as_str().into(),
                correct: first.is_none(),
                first_mismatch_cycle: first,
            }
        })
        .collect();
    let correct_set = verdicts.iter().filter(|v| v.correct).map(|v| v.signal.clone()).collect();
    times.compare += t2.elapsed();
    times.compared += 1;
    CandidateReport {
        candidate_id: id,
        verdicts,
        status: CandidateStatus::Simulated,
        correct_set,
    }
}

/// Verify one candidate against a prepared reference. Panics inside the
/// candidate's processing become `sim_error`.
pub fn verify_against(reference: &PreparedReference, id: usize, candidate: &SourceText) -> CandidateReport {
    verify_against_timed(reference, id, candidate).0
}

pub fn verify_against_timed(
    reference: &PreparedReference,
    id: usize,
    candidate: &SourceText,
) -> (CandidateReport, StageTimes) {
    let mut times = StageTimes::default();
    let report = isolated(id, &reference.outputs, || check_candidate(reference, id, candidate, &mut times));
    (report, times)
}

/// Run `f`, turning a panic into a `sim_error` report for candidate `id`.
pub fn isolated(id: usize, outputs: &[String], f: impl FnOnce() -> CandidateReport) -> CandidateReport {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        log::warn!("candidate {id}: simulation panicked");
        CandidateReport::failed(id, outputs, CandidateStatus::SimError)
    })
}

pub fn verify_candidate(
    reference: &SourceText,
    candidate: &SourceText,
    stimuli: &StimulusSet,
) -> Result<CandidateReport, VerifyError> {
    let ast = parse_module(reference).map_err(|e| VerifyError::ReferenceInvalid(e.render(reference)))?;
    let inst = elaborate(&ast).map_err(|e| VerifyError::ReferenceInvalid(e.to_string()))?;
    let trace = inst.run(stimuli).map_err(|e| VerifyError::ReferenceInvalid(e.to_string()))?;
    let outputs = ast.outputs().map(|p| p.name.clone()).collect();
    let prepared = PreparedReference {
        ast,
        stimuli: stimuli.clone(),
        trace,
        outputs,
    };
    Ok(verify_against(&prepared, 0, candidate))
}

/// Verify all candidates on one shared stimulus set, in parallel on the
/// current rayon pool. Reports keep candidate order.
pub fn verify_prompt_with(
    reference: &SourceText,
    candidates: &[SourceText],
    plan: StimulusPlan,
) -> Result<Vec<CandidateReport>, VerifyError> {
    let prepared = prepare_reference(reference, plan)?;
    Ok(candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| verify_against(&prepared, i, c))
        .collect())
}

pub fn verify_prompt(
    reference: &SourceText,
    candidates: &[SourceText],
    n: usize,
    seed: u64,
) -> Result<Vec<CandidateReport>, VerifyError> {
    verify_prompt_with(reference, candidates, StimulusPlan::Random { n, seed })
}
