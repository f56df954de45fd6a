mod common;

use std::collections::BTreeSet;

use salvkit::frontend::SourceText;
use salvkit::stimulus::{classify_ports, exhaustive, generate};
use salvkit::verifier::{isolated, verify_candidate, verify_prompt, verify_prompt_with, CandidateReport, CandidateStatus, StimulusPlan};
use salvkit::SignalId;

fn s(text: &str) -> SourceText {
    SourceText::new(text, "v.v")
}

fn set(names: &[&str]) -> BTreeSet<SignalId> {
    names.iter().map(|n| SignalId::from(*n)).collect()
}

const XOR: &str = "module m(input a, input b, output y); assign y = a ^ b; endmodule";

#[test]
fn or_differs_from_xor_at_one_one() {
    let ast = common::parse(XOR);
    let mut stim = generate(&classify_ports(&ast), 4, 0).unwrap();
    stim.columns.insert("a".into(), vec![0, 1, 0, 1]);
    stim.columns.insert("b".into(), vec![0, 0, 1, 1]);
    let r = verify_candidate(
        &s(XOR),
        &s("module m(input a, input b, output y); assign y = a | b; endmodule"),
        &stim,
    )
    .unwrap();
    assert!(!r.verdicts[0].correct);
    assert_eq!(r.verdicts[0].first_mismatch_cycle, Some(3));
}

#[test]
fn fig1_scenario_keeps_d() {
    let reference = "module top(input [3:0] x, input [3:0] y, input [3:0] z, output [3:0] a, output [3:0] d);
  assign a = x + y;
  assign d = x & z;
endmodule";
    let cand = reference.replace("x + y", "x - y");
    let reports = verify_prompt(&s(reference), &[s(reference), s(&cand)], 100, 7).unwrap();
    assert_eq!(reports[0].correct_set, set(&["a", "d"]));
    assert_eq!(reports[1].correct_set, set(&["d"]));
}

#[test]
fn statuses_for_broken_candidates() {
    let cands = [
        s(XOR),
        s("module m(input a, input b, output y); assign y = a ^ ; endmodule"),
        s("module m(input a, input [1:0] b, output y); assign y = a ^ b[0]; endmodule"),
        s("module m(input a, input b, output y); wire w; assign w = ~w ^ a; assign y = w ^ b; endmodule"),
        s(XOR),
    ];
    let r = verify_prompt(&s(XOR), &cands, 50, 3).unwrap();
    let statuses: Vec<CandidateStatus> = r.iter().map(|r| r.status).collect();
    assert_eq!(
        statuses,
        [
            CandidateStatus::Simulated,
            CandidateStatus::ParseError,
            CandidateStatus::InterfaceMismatch,
            CandidateStatus::SimError,
            CandidateStatus::Simulated
        ]
    );
    for rep in &r[1..4] {
        assert!(rep.correct_set.is_empty() && rep.verdicts.iter().all(|v| !v.correct));
    }
    assert_eq!(r.iter().map(|r| r.candidate_id).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
}

#[test]
fn report_json_has_exact_fields() {
    let r = verify_prompt(&s(XOR), &[s(XOR)], 5, 1).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r[0].to_json()).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["candidate_id", "correct_set", "status", "verdicts"].into());
    let back: CandidateReport = serde_json::from_str(&r[0].to_json()).unwrap();
    assert_eq!(back, r[0]);
}

#[test]
fn exhaustive_verdicts_match_ground_truth() {
    for case in common::verifier_corpus() {
        let r = verify_prompt_with(&case.reference, std::slice::from_ref(&case.candidate), StimulusPlan::Exhaustive).unwrap();
        for v in &r[0].verdicts {
            assert_eq!(v.correct, case.truth[v.signal.as_str()], "{} {}", case.name, v.signal);
        }
    }
}

#[test]
fn corpus_bugs_cover_five_percent_and_inputs_fit() {
    for case in common::verifier_corpus() {
        let ast = common::parse(case.reference.text());
        let classes = classify_ports(&ast);
        assert!(classes.iter().map(|c| c.width).sum::<u32>() <= 16, "{}", case.name);
        let stim = exhaustive(&classes).unwrap();
        let run = |src: &SourceText| {
            let a = salvkit::frontend::parse_module(src).unwrap();
            salvkit::simulator::run(&a, &stim).unwrap()
        };
        let (tr, tc) = (run(&case.reference), run(&case.candidate));
        for (sig, &ok) in &case.truth {
            let (a, b) = (tr.output(sig).unwrap(), tc.output(sig).unwrap());
            let differ = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64;
            if ok {
                assert_eq!(differ, 0.0, "{} {sig}", case.name);
            } else {
                assert!(differ >= 0.05, "{} {sig}: {differ}", case.name);
            }
        }
    }
}

#[test]
fn equivalent_signals_never_flagged_and_more_cycles_never_help_a_bug() {
    for case in common::verifier_corpus() {
        let mut last: Option<CandidateReport> = None;
        for n in [5, 20, 100, 400] {
            let r = verify_prompt(&case.reference, std::slice::from_ref(&case.candidate), n, 11).unwrap().remove(0);
            for v in &r.verdicts {
                if case.truth[v.signal.as_str()] {
                    assert!(v.correct, "{} {}", case.name, v.signal);
                }
            }
            if let Some(prev) = &last {
                assert!(r.correct_set.is_subset(&prev.correct_set));
            }
            last = Some(r);
        }
    }
}

#[test]
fn seeds_that_catch_a_bug_agree() {
    let case = common::verifier_corpus().into_iter().find(|c| c.name.ends_with("logic0")).unwrap();
    let a = verify_prompt(&case.reference, std::slice::from_ref(&case.candidate), 100, 1).unwrap();
    let b = verify_prompt(&case.reference, std::slice::from_ref(&case.candidate), 100, 2).unwrap();
    assert_eq!(a[0].correct_set, b[0].correct_set);
}

#[test]
fn reference_failure_invalidates_prompt() {
    let bad = s("module m(input a, output y); assign y = ; endmodule");
    assert!(verify_prompt(&bad, &[s(XOR)], 10, 0).is_err());
}

#[test]
fn panics_become_sim_error() {
    let outs = vec!["y".to_string(), "z".to_string()];
    let r = isolated(4, &outs, || panic!("injected"));
    assert_eq!(r.candidate_id, 4);
    assert_eq!(r.status, CandidateStatus::SimError);
    assert!(r.correct_set.is_empty());
    assert_eq!(r.verdicts.len(), 2);
    let fine = verify_prompt(&s(XOR), &[s(XOR)], 10, 0).unwrap().remove(0);
    assert_eq!(isolated(0, &outs, || fine.clone()), fine);
}
