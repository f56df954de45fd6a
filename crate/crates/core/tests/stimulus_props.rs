mod common;

use common::parse;
use proptest::prelude::*;
use salvkit::stimulus::{classify_ports, exhaustive, generate, PortRole, ResetPolarity, StimulusError, StimulusSet};

#[test]
fn clk_and_active_low_reset() {
    let ast = parse(
        "module m(input clk, input rst_n, input d, output reg q);
           always @(posedge clk) if (!rst_n) q <= 0; else q <= d;
         endmodule",
    );
    let c = classify_ports(&ast);
    let role = |n: &str| c.iter().find(|p| p.signal.as_str() == n).unwrap().clone();
    assert_eq!(role("clk").role, PortRole::Clock);
    assert_eq!(role("rst_n").role, PortRole::Reset);
    assert_eq!(role("rst_n").reset_polarity, Some(ResetPolarity::ActiveLow));
    assert_eq!(role("d").role, PortRole::Data);
}

#[test]
fn clock_enable_is_data() {
    let ast = parse("module m(input clock_enable, input a, output y); assign y = a & clock_enable; endmodule");
    assert!(classify_ports(&ast).iter().all(|p| p.role == PortRole::Data));
}

#[test]
fn edge_usage_makes_a_clock() {
    let ast = parse("module m(input tick, input d, output reg q); always @(negedge tick) q <= d; endmodule");
    let c = classify_ports(&ast);
    assert_eq!(c.iter().find(|p| p.signal.as_str() == "tick").unwrap().role, PortRole::Clock);
}

#[test]
fn reset_schedule_and_missing_clock_column() {
    let ast = parse(
        "module m(input clk, input rst, input [2:0] d, output reg [2:0] q);
           always @(posedge clk) if (rst) q <= 0; else q <= d;
         endmodule",
    );
    let s = generate(&classify_ports(&ast), 6, 5).unwrap();
    assert!(s.column("clk").is_none());
    assert_eq!(s.column("rst").unwrap(), &[1, 1, 0, 0, 0, 0]);
    assert!(s.column("d").unwrap().iter().all(|&v| v < 8));
}

#[test]
fn single_bit_balance() {
    let ast = parse("module m(input a, output y); assign y = a; endmodule");
    let s = generate(&classify_ports(&ast), 10_000, 2024).unwrap();
    let ones = s.column("a").unwrap().iter().filter(|&&v| v == 1).count() as f64 / 1e4;
    assert!((0.47..=0.53).contains(&ones), "{ones}");
}

#[test]
fn coupon_collector_floor() {
    let ast = parse("module m(input [3:0] a, output [3:0] y); assign y = a; endmodule");
    let classes = classify_ports(&ast);
    let mut complete = 0;
    for seed in 0..200 {
        let s = generate(&classes, 64 * 16, seed).unwrap();
        let mut seen = [false; 16];
        s.column("a").unwrap().iter().for_each(|&v| seen[v as usize] = true);
        complete += seen.iter().all(|&b| b) as usize;
    }
    assert!(complete as f64 / 200.0 >= 0.99);
}

#[test]
fn exhaustive_limits() {
    let ast = parse("module m(input [9:0] a, input [9:0] b, output y); assign y = a == b; endmodule");
    assert_eq!(exhaustive(&classify_ports(&ast)).unwrap().n, 1 << 20);
    let ast = parse("module m(input [10:0] a, input [9:0] b, output y); assign y = a == b; endmodule");
    assert!(matches!(
        exhaustive(&classify_ports(&ast)),
        Err(StimulusError::TooManyInputBits { bits: 21 })
    ));
    assert!(generate(&classify_ports(&ast), 0, 1).is_err());
}

#[test]
fn json_round_trip() {
    let ast = parse("module m(input [63:0] a, output [63:0] y); assign y = a; endmodule");
    let s = generate(&classify_ports(&ast), 5, 99).unwrap();
    assert_eq!(StimulusSet::from_json(&s.to_json()).unwrap(), s);
}

proptest! {
    #[test]
    fn port_order_does_not_change_columns(seed in any::<u64>(), wa in 1u32..=64, wb in 1u32..=64) {
        let r = |w: u32| if w == 1 { String::new() } else { format!("[{}:0] ", w - 1) };
        let one = parse(&format!("module m(input {}a, input {}b, output y); assign y = a == b; endmodule", r(wa), r(wb)));
        let two = parse(&format!("module m(input {}b, input {}a, output y); assign y = a == b; endmodule", r(wb), r(wa)));
        let s1 = generate(&classify_ports(&one), 30, seed).unwrap();
        let s2 = generate(&classify_ports(&two), 30, seed).unwrap();
        prop_assert_eq!(&s1.columns, &s2.columns);
        prop_assert_eq!(s1.clone(), generate(&classify_ports(&one), 30, seed).unwrap());
        for v in s1.column("a").unwrap() {
            prop_assert!(wa == 64 || *v < 1u64 << wa);
        }
    }

    #[test]
    fn columns_are_prefix_stable(seed in any::<u64>(), n in 1usize..200) {
        let ast = parse("module m(input [5:0] a, output [5:0] y); assign y = a; endmodule");
        let c = classify_ports(&ast);
        let long = generate(&c, 200, seed).unwrap();
        let short = generate(&c, n, seed).unwrap();
        prop_assert_eq!(short.column("a").unwrap(), &long.column("a").unwrap()[..n]);
    }
}
