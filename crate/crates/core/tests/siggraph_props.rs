mod common;

use std::collections::BTreeSet;

use common::fuzz::corpus;
use common::slice_matches;
use salvkit::frontend::{parse_module, SourceText};
use salvkit::siggraph::{backward_closure, build_graph, extract_slice};
use salvkit::simulator::elaborate;
use salvkit::stimulus::{classify_ports, generate};
use salvkit::SignalId;

#[test]
fn slices_preserve_output_traces() {
    let mut failures = Vec::new();
    let mut checks = 0;
    for m in corpus(0x5eed, 300) {
        let text = m.render();
        for o in m.outputs() {
            checks += 1;
            if let Err(e) = slice_matches(&text, &o, 200, 42) {
                failures.push(format!("{}.{o}: {e}", m.name));
            }
        }
    }
    assert!(failures.is_empty(), "{} of {checks} failed; first:\n{}", failures.len(), failures[0]);
}

fn slice_of(text: &str, targets: &[&str]) -> salvkit::siggraph::SignalSlice {
    let src = SourceText::new(text, "m.v");
    let ast = parse_module(&src).unwrap();
    let graph = build_graph(&ast);
    let t: BTreeSet<SignalId> = targets.iter().map(|s| SignalId::from(*s)).collect();
    extract_slice(&src, &ast, &graph, &t).unwrap()
}

fn covered(spans: &[salvkit::frontend::Span]) -> BTreeSet<usize> {
    spans.iter().flat_map(|s| s.start..s.end).collect()
}

const FIG1: &str = "module top(input [3:0] x, input [3:0] y, input [3:0] z, output [3:0] a, output [3:0] d);
  assign a = x + y;
  assign d = x & z;
endmodule
";

#[test]
fn fig1_shape_keeps_only_d() {
    let s = slice_of(FIG1, &["d"]);
    assert!(s.text.contains("assign d = x & z;"));
    assert!(!s.text.contains("assign a"));
    let ast = common::parse(&s.text);
    let ports: Vec<&str> = ast.ports.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(ports, ["x", "z", "d"]);
}

#[test]
fn all_outputs_cover_every_item() {
    let s = slice_of(FIG1, &["a", "d"]);
    let ast = common::parse(FIG1);
    let bytes = covered(&s.spans);
    for item in &ast.items {
        assert!((item.span().start..item.span().end).all(|b| bytes.contains(&b)));
    }
}

#[test]
fn block_keeps_only_target_statement_and_matches_on_1000_sequences() {
    let text = "module two(input clk, input [3:0] p, input [3:0] q, output reg [3:0] a, output reg [3:0] d);
  always @(posedge clk) begin
    a <= p;
    d <= q;
  end
endmodule
";
    let s = slice_of(text, &["d"]);
    assert!(s.text.contains("d <= q;") && !s.text.contains("a <= p;"), "{}", s.text);
    for seed in 0..1000 {
        slice_matches(text, "d", 12, seed).unwrap();
    }
}

#[test]
fn case_edges_match_input_influence() {
    let text = "module mx(input s, input a, input b, input c, output reg y);
  always @(*) case (s) 1'b0: y = a; 1'b1: y = b; endcase
endmodule
";
    let ast = common::parse(text);
    let inst = elaborate(&ast).unwrap();
    let names = ["s", "a", "b", "c"];
    let mut stim = generate(&classify_ports(&ast), 16, 0).unwrap();
    for (bit, n) in names.iter().enumerate() {
        stim.columns.insert(SignalId::from(*n), (0..16u64).map(|v| (v >> bit) & 1).collect());
    }
    let y = inst.run(&stim).unwrap().output("y").unwrap().to_vec();
    let influences = |bit: usize| (0..16usize).any(|v| y[v] != y[v ^ (1 << bit)]);
    let graph = build_graph(&ast);
    let preds: BTreeSet<&str> = graph.predecessors(&SignalId::from("y")).map(|s| s.as_str()).collect();
    for (bit, n) in names.iter().enumerate() {
        assert_eq!(influences(bit), preds.contains(n), "{n}");
    }
}

#[test]
fn fuzz_slice_invariants() {
    for m in corpus(0xabc, 250) {
        let text = m.render();
        let src = SourceText::new(&text, "m.v");
        let ast = parse_module(&src).unwrap();
        let graph = build_graph(&ast);
        let outs = m.outputs();
        for o in &outs {
            let t: BTreeSet<SignalId> = [SignalId::from(o.as_str())].into();
            let s = extract_slice(&src, &ast, &graph, &t).unwrap();
            assert!(s.targets.is_subset(&s.kept_signals));
            for w in s.spans.windows(2) {
                assert!(w[0].end <= w[1].start, "{text}");
            }
            assert!(s.spans.last().unwrap().end <= text.len());

            // closed under predecessors, and minimal
            let closure = backward_closure(&graph, &t).unwrap();
            for k in &s.kept_signals {
                for p in graph.predecessors(k) {
                    assert!(s.kept_signals.contains(p));
                }
            }
            for x in closure.difference(&t) {
                let mut smaller = closure.clone();
                smaller.remove(x);
                let closed = smaller.iter().all(|k| graph.predecessors(k).all(|p| smaller.contains(p)));
                assert!(!closed, "{x} removable from closure of {o}\n{text}");
            }

            // idempotence
            let again = slice_of(&s.text, &[o.as_str()]);
            assert_eq!(again.text, s.text);
        }
        // monotonicity over a growing target chain
        let mut prev: Option<salvkit::siggraph::SignalSlice> = None;
        for i in 1..=outs.len() {
            let names: Vec<&str> = outs[..i].iter().map(|s| s.as_str()).collect();
            let s = slice_of(&text, &names);
            if let Some(p) = &prev {
                assert!(p.kept_signals.is_subset(&s.kept_signals));
                assert!(covered(&p.spans).is_subset(&covered(&s.spans)), "{text}");
            }
            prev = Some(s);
        }
    }
}

#[test]
fn unknown_target_is_reported() {
    let src = SourceText::new(FIG1, "m.v");
    let ast = parse_module(&src).unwrap();
    let graph = build_graph(&ast);
    let t: BTreeSet<SignalId> = [SignalId::from("nope")].into();
    assert!(matches!(
        extract_slice(&src, &ast, &graph, &t),
        Err(salvkit::siggraph::SliceError::UnknownSignal(_))
    ));
}
