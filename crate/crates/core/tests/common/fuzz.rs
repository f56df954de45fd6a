//! Random modules inside the supported subset, plus single-point mutants.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }

    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.below(den) < num
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len() as u64) as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    Input,
    Wire,
    CombReg,
    SeqReg,
}

#[derive(Clone, Debug)]
pub struct Sig {
    pub name: String,
    pub width: u32,
    pub kind: Kind,
    pub output: bool,
}

#[derive(Clone, Debug)]
pub enum Form {
    /// `assign t = e;`
    Assign(usize, String),
    /// `assign {a, b} = e;`
    ConcatAssign(Vec<usize>, String),
    /// `always @(*)` with an if/else or case body.
    Comb { target: usize, body: CombBody },
    /// One `always @(*)` driving two regs.
    CombPair { a: usize, ea: String, b: usize, cond: String, eb1: String, eb2: String },
    /// Clocked registers with optional reset. With `split` and two
    /// targets the enable picks which one updates.
    Seq { targets: Vec<(usize, String)>, enable: Option<String>, split: bool },
}

#[derive(Clone, Debug)]
pub enum CombBody {
    IfElse { cond: String, a: String, b: String },
    Case { subject: String, subject_width: u32, arms: Vec<(u64, String)>, default: String },
    DefaultThenIf { default: String, cond: String, value: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResetStyle {
    None,
    SyncHigh,
    AsyncHigh,
    AsyncLow,
}

#[derive(Clone, Debug)]
pub struct FuzzModule {
    pub name: String,
    pub signals: Vec<Sig>,
    pub forms: Vec<Form>,
    pub sequential: bool,
    pub reset: ResetStyle,
}

impl FuzzModule {
    pub fn outputs(&self) -> Vec<String> {
        self.signals.iter().filter(|s| s.output).map(|s| s.name.clone()).collect()
    }

    pub fn input_bits(&self) -> u32 {
        self.signals.iter().filter(|s| s.kind == Kind::Input).map(|s| s.width).sum()
    }

    fn reset_name(&self) -> &'static str {
        match self.reset {
            ResetStyle::AsyncLow => "rst_n",
            _ => "rst",
        }
    }

    pub fn render(&self) -> String {
        let range = |w: u32| if w == 1 { String::new() } else { format!("[{}:0] ", w - 1) };
        let mut ports = Vec::new();
        if self.sequential {
            ports.push("input clk".to_string());
            if self.reset != ResetStyle::None {
                ports.push(format!("input {}", self.reset_name()));
            }
        }
        for s in &self.signals {
            match (&s.kind, s.output) {
                (Kind::Input, _) => ports.push(format!("input {}{}", range(s.width), s.name)),
                (Kind::Wire, true) => ports.push(format!("output {}{}", range(s.width), s.name)),
                (_, true) => ports.push(format!("output reg {}{}", range(s.width), s.name)),
                _ => {}
            }
        }
        let mut out = format!("module {}(\n  {}\n);\n", self.name, ports.join(",\n  "));
        for s in self.signals.iter().filter(|s| !s.output && s.kind != Kind::Input) {
            let kw = if s.kind == Kind::Wire { "wire" } else { "reg" };
            out.push_str(&format!("  {kw} {}{};\n", range(s.width), s.name));
        }
        let name = |i: usize| self.signals[i].name.as_str();
        for f in &self.forms {
            match f {
                Form::Assign(t, e) => out.push_str(&format!("  assign {} = {e};\n", name(*t))),
                Form::ConcatAssign(ts, e) => {
                    let lhs: Vec<&str> = ts.iter().map(|&t| name(t)).collect();
                    out.push_str(&format!("  assign {{{}}} = {e};\n", lhs.join(", ")));
                }
                Form::Comb { target, body } => {
                    let t = name(*target);
                    out.push_str("  always @(*) begin\n");
                    match body {
                        CombBody::IfElse { cond, a, b } => {
                            out.push_str(&format!("    if ({cond}) {t} = {a};\n    else {t} = {b};\n"))
                        }
                        CombBody::Case {
                            subject,
                            subject_width,
                            arms,
                            default,
                        } => {
                            out.push_str(&format!("    case ({subject})\n"));
                            for (l, v) in arms {
                                out.push_str(&format!("      {subject_width}'d{l}: {t} = {v};\n"));
                            }
                            out.push_str(&format!("      default: {t} = {default};\n    endcase\n"));
                        }
                        CombBody::DefaultThenIf { default, cond, value } => {
                            out.push_str(&format!("    {t} = {default};\n    if ({cond}) {t} = {value};\n"))
                        }
                    }
                    out.push_str("  end\n");
                }
                Form::CombPair { a, ea, b, cond, eb1, eb2 } => {
                    let (a, b) = (name(*a), name(*b));
                    out.push_str(&format!(
                        "  always @(*) begin\n    {a} = {ea};\n    if ({cond}) begin\n      {b} = {eb1};\n    end else begin\n      {b} = {eb2};\n    end\n  end\n"
                    ));
                }
                Form::Seq { targets, enable, split } => {
                    let sens = match self.reset {
                        ResetStyle::AsyncHigh => "posedge clk or posedge rst",
                        ResetStyle::AsyncLow => "posedge clk or negedge rst_n",
                        _ => "posedge clk",
                    };
                    out.push_str(&format!("  always @({sens}) begin\n"));
                    let updates = |indent: &str| {
                        let mut s = String::new();
                        for (t, e) in targets {
                            s.push_str(&format!("{indent}{} <= {e};\n", name(*t)));
                        }
                        s
                    };
                    let body = match enable {
                        Some(c) if *split && targets.len() == 2 => format!(
                            "      if ({c}) {} <= {};\n      else {} <= {};\n",
                            name(targets[0].0),
                            targets[0].1,
                            name(targets[1].0),
                            targets[1].1
                        ),
                        Some(c) => format!("      if ({c}) begin\n{}      end\n", updates("        ")),
                        None => updates("      "),
                    };
                    if self.reset == ResetStyle::None {
                        out.push_str("    begin\n");
                        out.push_str(&body);
                        out.push_str("    end\n");
                    } else {
                        let cond = if self.reset == ResetStyle::AsyncLow { "!rst_n" } else { "rst" };
                        out.push_str(&format!("    if ({cond}) begin\n"));
                        for (t, _) in targets {
                            out.push_str(&format!("      {} <= 0;\n", name(*t)));
                        }
                        out.push_str("    end else begin\n");
                        out.push_str(&body);
                        out.push_str("    end\n");
                    }
                    out.push_str("  end\n");
                }
            }
        }
        out.push_str("endmodule\n");
        out
    }
}

struct ExprGen<'a> {
    rng: &'a mut Rng,
    readable: Vec<(String, u32)>,
}

impl ExprGen<'_> {
    fn leaf(&mut self, width: u32) -> String {
        if self.readable.is_empty() || self.rng.chance(1, 6) {
            let w = width.clamp(1, 8);
            return format!("{w}'d{}", self.rng.below(1 << w));
        }
        let (name, w) = self.rng.pick(&self.readable).clone();
        if w > 1 && self.rng.chance(1, 5) {
            let hi = self.rng.below(w as u64);
            let lo = self.rng.below(hi + 1);
            if hi == lo {
                return format!("{name}[{hi}]");
            }
            return format!("{name}[{hi}:{lo}]");
        }
        name
    }

    fn expr(&mut self, width: u32, depth: u32) -> String {
        if depth == 0 || self.rng.chance(1, 4) {
            return self.leaf(width);
        }
        match self.rng.below(10) {
            0 => {
                let op = *self.rng.pick(&["~", "-", "!", "&", "|", "^"]);
                format!("{op}({})", self.expr(width, depth - 1))
            }
            1..=4 => {
                let op = *self.rng.pick(&["+", "-", "&", "|", "^", "+", "&", "^"]);
                format!("({} {op} {})", self.expr(width, depth - 1), self.expr(width, depth - 1))
            }
            5 => {
                let op = *self.rng.pick(&["==", "!=", "<", ">", "<=", ">="]);
                format!("({} {op} {})", self.expr(width, depth - 1), self.expr(width, depth - 1))
            }
            6 => {
                let op = *self.rng.pick(&["<<", ">>"]);
                let amt = self.rng.below(4);
                format!("({} {op} {amt})", self.expr(width, depth - 1))
            }
            7 => format!(
                "({} ? {} : {})",
                self.cond(depth - 1),
                self.expr(width, depth - 1),
                self.expr(width, depth - 1)
            ),
            8 => {
                let a = self.leaf(1);
                let b = self.leaf(width);
                format!("{{{a}, {b}}}")
            }
            _ => {
                let op = *self.rng.pick(&["&&", "||"]);
                format!("({} {op} {})", self.cond(depth - 1), self.cond(depth - 1))
            }
        }
    }

    fn cond(&mut self, depth: u32) -> String {
        if self.rng.chance(1, 2) {
            let a = self.expr(4, depth.min(1));
            let b = self.leaf(4);
            let op = *self.rng.pick(&["==", "!=", "<", ">"]);
            format!("({a} {op} {b})")
        } else {
            self.leaf(1)
        }
    }
}

/// One random module; `index` makes names unique inside a corpus.
pub fn gen_module(rng: &mut Rng, index: usize) -> FuzzModule {
    let sequential = rng.chance(1, 2);
    let reset = if !sequential {
        ResetStyle::None
    } else {
        *rng.pick(&[ResetStyle::None, ResetStyle::SyncHigh, ResetStyle::AsyncHigh, ResetStyle::AsyncLow])
    };
    let n_in = rng.range(1, 4) as usize;
    let n_out = rng.range(1, 6) as usize;
    let n_int = rng.range(0, (12 - n_in - n_out).min(3) as u64) as usize;
    let mut signals = Vec::new();
    for i in 0..n_in {
        signals.push(Sig {
            name: format!("in{i}"),
            width: rng.range(1, 6) as u32,
            kind: Kind::Input,
            output: false,
        });
    }
    let n_driven = n_int + n_out;
    for k in 0..n_driven {
        let output = k >= n_int;
        let kind = if sequential && rng.chance(1, 2) {
            Kind::SeqReg
        } else if rng.chance(1, 2) {
            Kind::Wire
        } else {
            Kind::CombReg
        };
        let name = if output { format!("out{}", k - n_int) } else { format!("t{k}") };
        signals.push(Sig {
            name,
            width: rng.range(1, 8) as u32,
            kind,
            output,
        });
    }
    let mut forms = Vec::new();
    let mut seq_group: Vec<(usize, String)> = Vec::new();
    let all: Vec<(String, u32)> = signals
        .iter()
        .map(|s| (s.name.clone(), s.width))
        .collect();
    let mut i = n_in;
    while i < signals.len() {
        let readable_comb: Vec<(String, u32)> = signals[..i]
            .iter()
            .map(|s| (s.name.clone(), s.width))
            .chain(signals.iter().filter(|s| s.kind == Kind::SeqReg).map(|s| (s.name.clone(), s.width)))
            .collect();
        let w = signals[i].width;
        match signals[i].kind {
            Kind::SeqReg => {
                let mut g = ExprGen {
                    rng,
                    readable: all.clone(),
                };
                let e = g.expr(w, 2);
                seq_group.push((i, e));
                if seq_group.len() >= 2 || rng.chance(1, 2) {
                    let enable = if rng.chance(1, 3) {
                        let mut g = ExprGen {
                            rng,
                            readable: all.clone(),
                        };
                        Some(g.cond(1))
                    } else {
                        None
                    };
                    let split = rng.chance(1, 2);
                    forms.push(Form::Seq {
                        targets: std::mem::take(&mut seq_group),
                        enable,
                        split,
                    });
                }
                i += 1;
            }
            Kind::Wire => {
                let pair = i + 1 < signals.len() && signals[i + 1].kind == Kind::Wire && rng.chance(1, 5);
                let mut g = ExprGen {
                    rng,
                    readable: readable_comb,
                };
                let e = g.expr(w, 3);
                if pair {
                    forms.push(Form::ConcatAssign(vec![i, i + 1], e));
                    i += 2;
                } else {
                    forms.push(Form::Assign(i, e));
                    i += 1;
                }
            }
            Kind::CombReg if i + 1 < signals.len() && signals[i + 1].kind == Kind::CombReg && rng.chance(1, 3) => {
                let (wa, wb) = (w, signals[i + 1].width);
                let mut g = ExprGen {
                    rng,
                    readable: readable_comb,
                };
                let ea = g.expr(wa, 2);
                g.readable.push((signals[i].name.clone(), wa));
                forms.push(Form::CombPair {
                    a: i,
                    ea,
                    b: i + 1,
                    cond: g.cond(2),
                    eb1: g.expr(wb, 2),
                    eb2: g.expr(wb, 2),
                });
                i += 2;
            }
            Kind::CombReg => {
                let style = rng.below(3);
                let mut g = ExprGen {
                    rng,
                    readable: readable_comb,
                };
                let body = match style {
                    0 => CombBody::IfElse {
                        cond: g.cond(2),
                        a: g.expr(w, 2),
                        b: g.expr(w, 2),
                    },
                    1 => {
                        let sw = g.rng.range(1, 3) as u32;
                        let subject = g.leaf(sw);
                        let n_arms = g.rng.range(1, 3);
                        let mut labels: Vec<u64> = (0..(1u64 << sw)).collect();
                        let mut arms = Vec::new();
                        for _ in 0..n_arms.min(labels.len() as u64) {
                            let k = g.rng.below(labels.len() as u64) as usize;
                            let l = labels.remove(k);
                            arms.push((l, g.expr(w, 2)));
                        }
                        CombBody::Case {
                            subject: format!("({subject})"),
                            subject_width: 8,
                            arms,
                            default: g.expr(w, 1),
                        }
                    }
                    _ => CombBody::DefaultThenIf {
                        default: g.expr(w, 1),
                        cond: g.cond(2),
                        value: g.expr(w, 2),
                    },
                };
                forms.push(Form::Comb { target: i, body });
                i += 1;
            }
            Kind::Input => unreachable!(),
        }
    }
    if !seq_group.is_empty() {
        forms.push(Form::Seq {
            targets: seq_group,
            enable: None,
            split: false,
        });
    }
    let sequential = signals.iter().any(|s| s.kind == Kind::SeqReg);
    FuzzModule {
        name: format!("fz{index}"),
        signals,
        forms,
        sequential,
        reset: if sequential { reset } else { ResetStyle::None },
    }
}

/// Replace one expression with a fresh random one over the same reads.
pub fn mutate(rng: &mut Rng, m: &FuzzModule) -> FuzzModule {
    let mut out = m.clone();
    if out.forms.is_empty() {
        return out;
    }
    let k = rng.below(out.forms.len() as u64) as usize;
    let readable: Vec<(String, u32)> = m.signals.iter().map(|s| (s.name.clone(), s.width)).collect();
    let inputs: Vec<(String, u32)> = m
        .signals
        .iter()
        .filter(|s| s.kind == Kind::Input)
        .map(|s| (s.name.clone(), s.width))
        .collect();
    let mut g = ExprGen { rng, readable: inputs };
    match &mut out.forms[k] {
        Form::Assign(t, e) => *e = g.expr(m.signals[*t].width, 2),
        Form::ConcatAssign(_, e) => *e = g.expr(8, 2),
        Form::Comb { target, body } => {
            let w = m.signals[*target].width;
            match body {
                CombBody::IfElse { a, .. } => *a = g.expr(w, 2),
                CombBody::Case { default, .. } => *default = g.expr(w, 2),
                CombBody::DefaultThenIf { value, .. } => *value = g.expr(w, 2),
            }
        }
        Form::CombPair { ea, .. } => *ea = g.expr(8, 2),
        Form::Seq { targets, .. } => {
            g.readable = readable;
            let j = g.rng.below(targets.len() as u64) as usize;
            let w = m.signals[targets[j].0].width;
            targets[j].1 = g.expr(w, 2);
        }
    }
    out
}

/// Corpus of `count` modules from one seed.
pub fn corpus(seed: u64, count: usize) -> Vec<FuzzModule> {
    let mut rng = Rng::new(seed);
    (0..count).map(|i| gen_module(&mut rng, i)).collect()
}
