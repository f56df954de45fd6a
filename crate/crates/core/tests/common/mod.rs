#![allow(dead_code)]

pub mod fuzz;
pub mod prefs;

use std::collections::BTreeSet;
use std::path::PathBuf;

use salvkit::frontend::{parse_module, ModuleAst, SourceText};
use salvkit::siggraph::{build_graph, extract_slice};
use salvkit::simulator::elaborate;
use salvkit::stimulus::{classify_ports, generate};
use salvkit::SignalId;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn src(text: &str) -> SourceText {
    SourceText::new(text, "test.v")
}

pub fn parse(text: &str) -> ModuleAst {
    let s = src(text);
    parse_module(&s).unwrap_or_else(|e| panic!("{}\n{text}", e.render(&s)))
}

pub struct VerifierCase {
    pub name: String,
    pub reference: SourceText,
    pub candidate: SourceText,
    pub truth: std::collections::BTreeMap<String, bool>,
}

/// The hand-built corpus with per-signal ground truth.
pub fn verifier_corpus() -> Vec<VerifierCase> {
    let root = fixtures().join("verifier_corpus");
    let mut dirs: Vec<_> = std::fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs.iter()
        .map(|d| VerifierCase {
            name: d.file_name().unwrap().to_string_lossy().into_owned(),
            reference: SourceText::read_file(&d.join("ref.v")).unwrap(),
            candidate: SourceText::read_file(&d.join("cand_0.v")).unwrap(),
            truth: serde_json::from_str(&std::fs::read_to_string(d.join("truth.json")).unwrap()).unwrap(),
        })
        .collect()
}

/// Trace of `signal` in the full module versus in its own slice.
pub fn slice_matches(text: &str, signal: &str, cycles: usize, seed: u64) -> Result<(), String> {
    let full_src = SourceText::new(text, "full.v");
    let full = parse_module(&full_src).map_err(|e| e.render(&full_src))?;
    let graph = build_graph(&full);
    let targets: BTreeSet<SignalId> = [SignalId::from(signal)].into();
    let slice = extract_slice(&full_src, &full, &graph, &targets).map_err(|e| e.to_string())?;
    let sliced_src = SourceText::new(&slice.text, "slice.v");
    let sliced = parse_module(&sliced_src).map_err(|e| e.render(&sliced_src))?;
    let run = |ast| -> Result<Vec<u64>, String> {
        let stim = generate(&classify_ports(ast), cycles, seed).map_err(|e| e.to_string())?;
        let trace = elaborate(ast).and_then(|i| i.run(&stim)).map_err(|e| e.to_string())?;
        Ok(trace.output(signal).ok_or("missing output")?.to_vec())
    };
    let a = run(&full)?;
    let b = run(&sliced)?;
    if a != b {
        return Err(format!("trace differs\n--- full\n{text}\n--- slice\n{}", slice.text));
    }
    Ok(())
}
