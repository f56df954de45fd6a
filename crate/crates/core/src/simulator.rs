//! Two-state, cycle-based simulation of a checked module.
//!
//! One cycle per vector: drive inputs, settle combinational logic, fire any
//! asynchronous reset edge and settle again, sample outputs, then advance
//! the clock by one period (rising edge blocks, then falling edge blocks).
//! Registers start at zero. Values are `u64` with context-determined
//! expression sizing.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{
    always_role, const_eval_with, supported_subset_check, AlwaysRole, BinaryOp, CaseKind, Edge,
    Expr, ExprKind, Item, LValue, ModuleAst, Stmt, StmtKind, UnaryOp,
};
use crate::stimulus::{classify_ports, PortClass, PortRole, StimulusSet};

/// Upper bound on combinational settling sweeps per phase.
pub const MAX_SETTLE_SWEEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("module is outside the supported subset: {}", .0.join("; "))]
    Unsupported(Vec<String>),
    #[error("combinational loop through {0}")]
    CombinationalLoop(String),
    #[error("more than one clock: {}", .0.join(", "))]
    MultipleClocks(Vec<String>),
    #[error("combinational logic did not settle in cycle {cycle}")]
    UnsettledLogic { cycle: usize },
    #[error("stimulus does not fit the module: {0}")]
    StimulusMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElabOptions {
    /// Accept combinational cycles and rely on bounded fixpoint sweeps.
    pub allow_iterative: bool,
}

impl Default for ElabOptions {
    fn default() -> Self {
        ElabOptions { allow_iterative: true }
    }
}

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

fn shl(v: u64, by: u64) -> u64 {
    if by >= 64 {
        0
    } else {
        v << by
    }
}

fn shr(v: u64, by: u64) -> u64 {
    if by >= 64 {
        0
    } else {
        v >> by
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(u64),
    Sig(usize),
    Slice(usize, u32),
    Unary(UnaryOp, Box<CExpr>),
    Binary(BinaryOp, Box<CExpr>, Box<CExpr>),
    Ternary(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    Concat(Vec<CExpr>),
}

#[derive(Debug, Clone)]
struct CExpr {
    node: Node,
    /// Self-determined width.
    width: u32,
}

/// A contiguous run of bits in one signal; `shift` locates it in the
/// assigned value.
#[derive(Debug, Clone, Copy)]
struct Piece {
    sig: usize,
    lo: u32,
    width: u32,
    shift: u32,
}

#[derive(Debug, Clone)]
struct CLValue {
    pieces: Vec<Piece>,
    width: u32,
}

#[derive(Debug, Clone)]
struct CArm {
    /// `(value, care)` pairs; empty for `default`.
    labels: Vec<(u64, u64)>,
    body: CStmt,
}

#[derive(Debug, Clone)]
enum CStmt {
    Block(Vec<CStmt>),
    If(CExpr, Box<CStmt>, Option<Box<CStmt>>),
    Case {
        subject: CExpr,
        width: u32,
        arms: Vec<CArm>,
    },
    Assign {
        blocking: bool,
        lhs: CLValue,
        rhs: CExpr,
        ctx: u32,
    },
    Null,
}

#[derive(Debug, Clone)]
struct CombProc {
    body: CStmt,
    reads: Vec<usize>,
    writes: Vec<usize>,
    /// Continuous assignments that read their own target form a loop;
    /// always blocks may use a target as a temporary.
    continuous: bool,
}

#[derive(Debug, Clone)]
struct ClockedProc {
    edge: Edge,
    reset: Option<(usize, Edge)>,
    body: CStmt,
}

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    width: u32,
}

/// An elaborated module ready to run any number of stimulus sets.
#[derive(Debug, Clone)]
pub struct SimInstance {
    module: String,
    slots: Vec<Slot>,
    inputs: Vec<(String, usize)>,
    outputs: Vec<(String, usize)>,
    classes: Vec<PortClass>,
    comb: Vec<CombProc>,
    clocked: Vec<ClockedProc>,
    iterative: bool,
}

/// Sampled output values, one per cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub cycles: usize,
    pub outputs: BTreeMap<String, Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct TraceFile {
    cycles: usize,
    outputs: BTreeMap<String, Vec<String>>,
}

impl SimTrace {
    pub fn to_json(&self) -> String {
        let f = TraceFile {
            cycles: self.cycles,
            outputs: self
                .outputs
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(u64::to_string).collect()))
                .collect(),
        };
        serde_json::to_string(&f).expect("trace serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let f: TraceFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut outputs = BTreeMap::new();
        for (k, v) in f.outputs {
            let vals = v
                .iter()
                .map(|s| s.parse::<u64>().map_err(|e| format!("{k}: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            outputs.insert(k, vals);
        }
        Ok(SimTrace {
            cycles: f.cycles,
            outputs,
        })
    }

    pub fn output(&self, name: &str) -> Option<&[u64]> {
        self.outputs.get(name).map(Vec::as_slice)
    }
}

struct Compiler<'a> {
    ast: &'a ModuleAst,
    index: HashMap<&'a str, usize>,
    widths: Vec<u32>,
}

fn unsupported(what: impl Into<String>) -> SimError {
    SimError::Unsupported(vec![what.into()])
}

impl<'a> Compiler<'a> {
    fn const_value(&self, e: &Expr) -> Result<u64, SimError> {
        let ast = self.ast;
        let lookup = move |n: &str| ast.param(n).map(|p| (p.value, p.width));
        const_eval_with(e, &lookup)
            .map(|(v, _)| v)
            .ok_or_else(|| unsupported(format!("non-constant expression `{e}`")))
    }

    fn signal(&self, name: &str) -> Result<usize, SimError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| unsupported(format!("`{name}` is not a signal")))
    }

    /// Physical `(lo, width)` of `name[msb:lsb]`.
    fn select(&self, name: &str, msb: &Expr, lsb: &Expr) -> Result<(u32, u32), SimError> {
        let (_, range) = self
            .ast
            .signal_shape(name)
            .ok_or_else(|| unsupported(format!("`{name}` is not a signal")))?;
        let m = self.const_value(msb)? as i64;
        let l = self.const_value(lsb)? as i64;
        let pos = |i: i64| match range {
            Some(r) => r.position(i),
            None => (i == 0).then_some(0),
        };
        match (pos(m), pos(l)) {
            (Some(a), Some(b)) => Ok((a.min(b), a.abs_diff(b) + 1)),
            _ => Err(unsupported(format!("select out of range on `{name}`"))),
        }
    }

    fn expr(&self, e: &Expr) -> Result<CExpr, SimError> {
        Ok(match &e.kind {
            ExprKind::Literal(l) => CExpr {
                node: Node::Const(l.value & !l.unknown & !l.wildcard),
                width: l.self_width(),
            },
            ExprKind::Ident(n) => {
                if let Some(p) = self.ast.param(n) {
                    CExpr {
                        node: Node::Const(p.value),
                        width: p.width.unwrap_or(32),
                    }
                } else {
                    let i = self.signal(n)?;
                    CExpr {
                        node: Node::Sig(i),
                        width: self.width_of(i),
                    }
                }
            }
            ExprKind::Bit(base, idx) => {
                let (lo, w) = self.select(&base.name, idx, idx)?;
                CExpr {
                    node: Node::Slice(self.signal(&base.name)?, lo),
                    width: w,
                }
            }
            ExprKind::Part(base, m, l) => {
                let (lo, w) = self.select(&base.name, m, l)?;
                CExpr {
                    node: Node::Slice(self.signal(&base.name)?, lo),
                    width: w,
                }
            }
            ExprKind::Unary(op, a) => {
                let a = self.expr(a)?;
                let width = match op {
                    UnaryOp::Plus | UnaryOp::Neg | UnaryOp::BitNot => a.width,
                    _ => 1,
                };
                CExpr {
                    node: Node::Unary(*op, Box::new(a)),
                    width,
                }
            }
            ExprKind::Binary(op, a, b) => {
                use BinaryOp::*;
                if matches!(op, Div | Mod | Pow | AShl | AShr | CaseEq | CaseNe) {
                    return Err(unsupported(format!("operator `{}`", op.symbol())));
                }
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                let width = match op {
                    Add | Sub | Mul | BitAnd | BitOr | BitXor | BitXnor => a.width.max(b.width),
                    Shl | Shr => a.width,
                    _ => 1,
                };
                CExpr {
                    node: Node::Binary(*op, Box::new(a), Box::new(b)),
                    width: width.min(64),
                }
            }
            ExprKind::Ternary(c, t, f) => {
                let (c, t, f) = (self.expr(c)?, self.expr(t)?, self.expr(f)?);
                let width = t.width.max(f.width);
                CExpr {
                    node: Node::Ternary(Box::new(c), Box::new(t), Box::new(f)),
                    width,
                }
            }
            ExprKind::Concat(parts) => self.concat(parts.iter().map(|p| self.expr(p)).collect::<Result<_, _>>()?)?,
            ExprKind::Repeat(count, parts) => {
                let n = self.const_value(count)?;
                let inner: Vec<CExpr> = parts.iter().map(|p| self.expr(p)).collect::<Result<_, _>>()?;
                let per: u32 = inner.iter().map(|p| p.width).sum();
                if n.saturating_mul(per as u64) > 64 {
                    return Err(unsupported("replication wider than 64 bits"));
                }
                let mut all = Vec::new();
                for _ in 0..n {
                    all.extend(inner.iter().cloned());
                }
                self.concat(all)?
            }
        })
    }

    fn concat(&self, parts: Vec<CExpr>) -> Result<CExpr, SimError> {
        let width: u32 = parts.iter().map(|p| p.width).sum();
        if width > 64 {
            return Err(unsupported("concatenation wider than 64 bits"));
        }
        Ok(CExpr {
            node: Node::Concat(parts),
            width,
        })
    }

    fn width_of(&self, i: usize) -> u32 {
        self.widths[i]
    }

    fn lvalue(&self, lv: &LValue, out: &mut Vec<Piece>) -> Result<(), SimError> {
        match lv {
            LValue::Ident(id) => {
                let sig = self.signal(&id.name)?;
                out.push(Piece {
                    sig,
                    lo: 0,
                    width: self.width_of(sig),
                    shift: 0,
                });
            }
            LValue::Bit { base, index, .. } => {
                let (lo, width) = self.select(&base.name, index, index)?;
                out.push(Piece {
                    sig: self.signal(&base.name)?,
                    lo,
                    width,
                    shift: 0,
                });
            }
            LValue::Part { base, msb, lsb, .. } => {
                let (lo, width) = self.select(&base.name, msb, lsb)?;
                out.push(Piece {
                    sig: self.signal(&base.name)?,
                    lo,
                    width,
                    shift: 0,
                });
            }
            LValue::Concat { parts, .. } => {
                for p in parts {
                    self.lvalue(p, out)?;
                }
            }
        }
        Ok(())
    }

    fn clvalue(&self, lv: &LValue) -> Result<CLValue, SimError> {
        let mut pieces = Vec::new();
        self.lvalue(lv, &mut pieces)?;
        // the last piece of a concatenation takes the low bits
        let mut shift = 0;
        for p in pieces.iter_mut().rev() {
            p.shift = shift;
            shift += p.width;
        }
        if shift > 64 {
            return Err(unsupported("assignment target wider than 64 bits"));
        }
        Ok(CLValue { pieces, width: shift })
    }

    fn assignment(&self, blocking: bool, lhs: &LValue, rhs: &Expr) -> Result<CStmt, SimError> {
        let lhs = self.clvalue(lhs)?;
        let rhs = self.expr(rhs)?;
        let ctx = lhs.width.max(rhs.width).min(64);
        Ok(CStmt::Assign { blocking, lhs, rhs, ctx })
    }

    fn stmt(&self, s: &Stmt) -> Result<CStmt, SimError> {
        Ok(match &s.kind {
            StmtKind::Block { stmts, .. } => CStmt::Block(stmts.iter().map(|s| self.stmt(s)).collect::<Result<_, _>>()?),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => CStmt::If(
                self.expr(cond)?,
                Box::new(self.stmt(then_branch)?),
                match else_branch {
                    Some(e) => Some(Box::new(self.stmt(e)?)),
                    None => None,
                },
            ),
            StmtKind::Case {
                kind, subject, arms, ..
            } => {
                if *kind == CaseKind::Casex {
                    return Err(unsupported("casex"));
                }
                let subject = self.expr(subject)?;
                let mut width = subject.width;
                let mut carms = Vec::new();
                for arm in arms {
                    let mut labels = Vec::new();
                    for l in &arm.labels {
                        let (value, wild, w) = match &l.kind {
                            ExprKind::Literal(lit) => (lit.value & !lit.unknown, lit.wildcard, lit.self_width()),
                            _ => {
                                let c = self.expr(l)?;
                                (self.const_value(l)?, 0, c.width)
                            }
                        };
                        width = width.max(w);
                        let care = if *kind == CaseKind::Casez { !wild } else { u64::MAX };
                        labels.push((value, care));
                    }
                    carms.push(CArm {
                        labels,
                        body: self.stmt(&arm.body)?,
                    });
                }
                CStmt::Case {
                    subject,
                    width: width.min(64),
                    arms: carms,
                }
            }
            StmtKind::Assign { blocking, assignment } => self.assignment(*blocking, &assignment.lhs, &assignment.rhs)?,
            StmtKind::Null => CStmt::Null,
        })
    }

    fn reads_of(&self, s: &Stmt, out: &mut Vec<usize>) {
        let mut note = |e: &Expr| {
            e.for_each_ident(&mut |n, _| {
                if let Some(&i) = self.index.get(n) {
                    out.push(i);
                }
            })
        };
        fn walk<'e>(s: &'e Stmt, note: &mut impl FnMut(&'e Expr)) {
            match &s.kind {
                StmtKind::Block { stmts, .. } => stmts.iter().for_each(|s| walk(s, note)),
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                    ..
                } => {
                    note(cond);
                    walk(then_branch, note);
                    if let Some(e) = else_branch {
                        walk(e, note);
                    }
                }
                StmtKind::Case { subject, arms, .. } => {
                    note(subject);
                    for a in arms {
                        for l in &a.labels {
                            note(l);
                        }
                        walk(&a.body, note);
                    }
                }
                StmtKind::Assign { assignment, .. } => {
                    note(&assignment.rhs);
                    lvalue_indices(&assignment.lhs, note);
                }
                StmtKind::Null => {}
            }
        }
        walk(s, &mut note);
        out.sort_unstable();
        out.dedup();
    }
}

fn lvalue_indices<'e>(lv: &'e LValue, note: &mut impl FnMut(&'e Expr)) {
    match lv {
        LValue::Ident(_) => {}
        LValue::Bit { index, .. } => note(index),
        LValue::Part { msb, lsb, .. } => {
            note(msb);
            note(lsb);
        }
        LValue::Concat { parts, .. } => parts.iter().for_each(|p| lvalue_indices(p, note)),
    }
}

/// Compile a module, rejecting anything outside the supported subset.
pub fn elaborate(ast: &ModuleAst) -> Result<SimInstance, SimError> {
    elaborate_with(ast, ElabOptions::default())
}

pub fn elaborate_with(ast: &ModuleAst, opts: ElabOptions) -> Result<SimInstance, SimError> {
    let diags = supported_subset_check(ast);
    if !diags.is_empty() {
        return Err(SimError::Unsupported(
            diags.iter().map(|d| format!("{}: {}", d.code(), d)).collect(),
        ));
    }
    let mut slots = Vec::new();
    let mut index = HashMap::new();
    for p in &ast.ports {
        index.insert(p.name.as_str(), slots.len());
        slots.push(Slot {
            name: p.name.clone(),
            width: p.width,
        });
    }
    for n in &ast.nets {
        if !index.contains_key(n.name.as_str()) {
            index.insert(n.name.as_str(), slots.len());
            slots.push(Slot {
                name: n.name.clone(),
                width: n.width,
            });
        }
    }
    let widths = slots.iter().map(|s| s.width).collect();
    let cx = Compiler { ast, index, widths };

    let mut comb = Vec::new();
    let mut clocked = Vec::new();
    let mut clocks: Vec<String> = Vec::new();
    let add_comb = |body: CStmt, reads: Vec<usize>, lhs: &CLValue, comb: &mut Vec<CombProc>| {
        let mut writes: Vec<usize> = lhs.pieces.iter().map(|p| p.sig).collect();
        writes.sort_unstable();
        writes.dedup();
        comb.push(CombProc {
            body,
            reads,
            writes,
            continuous: true,
        });
    };
    for n in &ast.nets {
        if let Some(init) = &n.init {
            let lhs = LValue::Ident(crate::frontend::Ident {
                name: n.name.clone(),
                span: n.span,
            });
            let body = cx.assignment(true, &lhs, init)?;
            let CStmt::Assign { lhs: ref cl, .. } = body else { unreachable!() };
            let cl = cl.clone();
            let mut reads = Vec::new();
            init.for_each_ident(&mut |id, _| {
                if let Some(&i) = cx.index.get(id) {
                    reads.push(i);
                }
            });
            reads.sort_unstable();
            reads.dedup();
            add_comb(body, reads, &cl, &mut comb);
        }
    }
    for item in &ast.items {
        match item {
            Item::Assign(ca) => {
                for a in &ca.assigns {
                    let body = cx.assignment(true, &a.lhs, &a.rhs)?;
                    let CStmt::Assign { lhs: ref cl, .. } = body else { unreachable!() };
                    let cl = cl.clone();
                    let mut reads = Vec::new();
                    let mut note = |e: &Expr| {
                        e.for_each_ident(&mut |id, _| {
                            if let Some(&i) = cx.index.get(id) {
                                reads.push(i);
                            }
                        })
                    };
                    note(&a.rhs);
                    lvalue_indices(&a.lhs, &mut note);
                    reads.sort_unstable();
                    reads.dedup();
                    add_comb(body, reads, &cl, &mut comb);
                }
            }
            Item::Always(ab) => {
                let role = always_role(ab).map_err(unsupported)?;
                let body = cx.stmt(&ab.body)?;
                match role {
                    AlwaysRole::Combinational => {
                        let mut reads = Vec::new();
                        cx.reads_of(&ab.body, &mut reads);
                        let mut writes: Vec<usize> =
                            ab.body.assigned_signals().iter().filter_map(|n| cx.index.get(n).copied()).collect();
                        writes.sort_unstable();
                        writes.dedup();
                        comb.push(CombProc {
                            body,
                            reads,
                            writes,
                            continuous: false,
                        });
                    }
                    AlwaysRole::Clocked { clock, edge, reset } => {
                        if !clocks.contains(&clock) {
                            clocks.push(clock);
                        }
                        let reset = match reset {
                            Some(r) => Some((cx.signal(&r.signal)?, r.edge)),
                            None => None,
                        };
                        clocked.push(ClockedProc { edge, reset, body });
                    }
                }
            }
            Item::Unsupported { construct, .. } => return Err(unsupported(construct.clone())),
        }
    }
    if clocks.len() > 1 {
        return Err(SimError::MultipleClocks(clocks));
    }

    let (order, sorted) = schedule(&comb);
    let iterative = sorted < order.len();
    if iterative && !opts.allow_iterative {
        let stuck: Vec<&str> = order[sorted..]
            .iter()
            .flat_map(|&i| comb[i].writes.iter().map(|&w| slots[w].name.as_str()))
            .collect();
        return Err(SimError::CombinationalLoop(stuck.join(", ")));
    }
    let mut taken: Vec<Option<CombProc>> = comb.into_iter().map(Some).collect();
    let comb = order.iter().map(|&i| taken[i].take().expect("scheduled once")).collect();

    let classes = classify_ports(ast);
    let inputs = ast.inputs().map(|p| (p.name.clone(), cx.index[p.name.as_str()])).collect();
    let outputs = ast.outputs().map(|p| (p.name.clone(), cx.index[p.name.as_str()])).collect();
    Ok(SimInstance {
        module: ast.name.name.clone(),
        slots,
        inputs,
        outputs,
        classes,
        comb,
        clocked,
        iterative,
    })
}

/// Topological order of combinational processes (writer before reader).
/// Processes left on a cycle follow in declaration order; the second value
/// counts the acyclic prefix.
fn schedule(procs: &[CombProc]) -> (Vec<usize>, usize) {
    let n = procs.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (p, a) in procs.iter().enumerate() {
        for (q, b) in procs.iter().enumerate() {
            if (p != q || a.continuous) && a.writes.iter().any(|w| b.reads.binary_search(w).is_ok()) {
                succ[p].push(q);
                indeg[q] += 1;
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(p) = ready.pop_first() {
        order.push(p);
        for &q in &succ[p] {
            indeg[q] -= 1;
            if indeg[q] == 0 {
                ready.insert(q);
            }
        }
    }
    let sorted = order.len();
    let mut placed = vec![false; n];
    order.iter().for_each(|&i| placed[i] = true);
    order.extend((0..n).filter(|&i| !placed[i]));
    (order, sorted)
}

struct Machine<'a> {
    inst: &'a SimInstance,
    state: Vec<u64>,
    nba: Vec<(Piece, u64)>,
}

impl<'a> Machine<'a> {
    fn eval(&self, e: &CExpr, ctx: u32) -> u64 {
        let st = &self.state;
        let m = mask(ctx);
        match &e.node {
            Node::Const(v) => v & mask(e.width),
            Node::Sig(i) => st[*i],
            Node::Slice(i, lo) => (st[*i] >> lo) & mask(e.width),
            Node::Unary(op, a) => match op {
                UnaryOp::Plus => self.eval(a, ctx),
                UnaryOp::Neg => self.eval(a, ctx).wrapping_neg() & m,
                UnaryOp::BitNot => !self.eval(a, ctx) & m,
                UnaryOp::LogNot => (self.eval(a, a.width) == 0) as u64,
                _ => {
                    let am = mask(a.width);
                    let v = self.eval(a, a.width);
                    (match op {
                        UnaryOp::RedAnd => v == am,
                        UnaryOp::RedOr => v != 0,
                        UnaryOp::RedXor => v.count_ones() & 1 == 1,
                        UnaryOp::RedNand => v != am,
                        UnaryOp::RedNor => v == 0,
                        _ => v.count_ones() & 1 == 0,
                    }) as u64
                }
            },
            Node::Binary(op, a, b) => {
                use BinaryOp::*;
                match op {
                    Add => self.eval(a, ctx).wrapping_add(self.eval(b, ctx)) & m,
                    Sub => self.eval(a, ctx).wrapping_sub(self.eval(b, ctx)) & m,
                    Mul => self.eval(a, ctx).wrapping_mul(self.eval(b, ctx)) & m,
                    BitAnd => self.eval(a, ctx) & self.eval(b, ctx),
                    BitOr => self.eval(a, ctx) | self.eval(b, ctx),
                    BitXor => self.eval(a, ctx) ^ self.eval(b, ctx),
                    BitXnor => !(self.eval(a, ctx) ^ self.eval(b, ctx)) & m,
                    Shl => shl(self.eval(a, ctx), self.eval(b, b.width)) & m,
                    Shr => shr(self.eval(a, ctx), self.eval(b, b.width)),
                    LogAnd => (self.eval(a, a.width) != 0 && self.eval(b, b.width) != 0) as u64,
                    LogOr => (self.eval(a, a.width) != 0 || self.eval(b, b.width) != 0) as u64,
                    _ => {
                        let w = a.width.max(b.width).min(64);
                        let (x, y) = (self.eval(a, w), self.eval(b, w));
                        (match op {
                            Lt => x < y,
                            Le => x <= y,
                            Gt => x > y,
                            Ge => x >= y,
                            Eq => x == y,
                            Ne => x != y,
                            _ => unreachable!("rejected at elaboration"),
                        }) as u64
                    }
                }
            }
            Node::Ternary(c, t, f) => {
                if self.eval(c, c.width) != 0 {
                    self.eval(t, ctx)
                } else {
                    self.eval(f, ctx)
                }
            }
            Node::Concat(parts) => parts
                .iter()
                .fold(0u64, |acc, p| shl(acc, p.width as u64) | self.eval(p, p.width)),
        }
    }

    fn write(&mut self, p: Piece, v: u64) {
        let m = mask(p.width) << p.lo;
        let s = &mut self.state[p.sig];
        *s = (*s & !m) | ((shr(v, p.shift as u64) & mask(p.width)) << p.lo);
    }

    fn exec(&mut self, s: &CStmt) {
        match s {
            CStmt::Block(ss) => ss.iter().for_each(|s| self.exec(s)),
            CStmt::If(c, t, f) => {
                if self.eval(c, c.width) != 0 {
                    self.exec(t);
                } else if let Some(f) = f {
                    self.exec(f);
                }
            }
            CStmt::Case { subject, width, arms } => {
                let v = self.eval(subject, *width);
                let hit = arms
                    .iter()
                    .find(|a| a.labels.iter().any(|&(l, care)| (v ^ l) & care & mask(*width) == 0))
                    .or_else(|| arms.iter().find(|a| a.labels.is_empty()));
                if let Some(a) = hit {
                    self.exec(&a.body);
                }
            }
            CStmt::Assign { blocking, lhs, rhs, ctx } => {
                let v = self.eval(rhs, *ctx);
                for &p in &lhs.pieces {
                    if *blocking {
                        self.write(p, v);
                    } else {
                        self.nba.push((p, v));
                    }
                }
            }
            CStmt::Null => {}
        }
    }

    fn flush_nba(&mut self) {
        let pending = std::mem::take(&mut self.nba);
        for (p, v) in pending {
            self.write(p, v);
        }
    }

    fn settle(&mut self, cycle: usize) -> Result<(), SimError> {
        for _ in 0..MAX_SETTLE_SWEEPS {
            let before = self.state.clone();
            for p in &self.inst.comb {
                self.exec(&p.body);
                self.flush_nba();
            }
            if self.state == before {
                return Ok(());
            }
        }
        Err(SimError::UnsettledLogic { cycle })
    }

    fn fire(&mut self, pick: impl Fn(&ClockedProc) -> bool) {
        for p in &self.inst.clocked {
            if pick(p) {
                self.exec(&p.body);
            }
        }
        self.flush_nba();
    }
}

impl SimInstance {
    pub fn module_name(&self) -> &str {
        &self.module
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn output_names(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn port_classes(&self) -> &[PortClass] {
        &self.classes
    }

    pub fn output_width(&self, name: &str) -> Option<u32> {
        self.outputs.iter().find(|(n, _)| n == name).map(|&(_, i)| self.slots[i].width)
    }

    pub fn uses_iterative_settling(&self) -> bool {
        self.iterative
    }

    fn is_clock(&self, name: &str) -> bool {
        self.classes.iter().any(|c| c.role == PortRole::Clock && c.signal.as_str() == name)
    }

    /// Simulate one stimulus set from the all-zero initial state.
    pub fn run(&self, stim: &StimulusSet) -> Result<SimTrace, SimError> {
        let n = stim.n;
        let mut columns = Vec::new();
        for (name, slot) in &self.inputs {
            if self.is_clock(name) {
                continue;
            }
            let col = stim
                .column(name)
                .ok_or_else(|| SimError::StimulusMismatch(format!("no column for input `{name}`")))?;
            if col.len() != n {
                return Err(SimError::StimulusMismatch(format!(
                    "column `{name}` has {} values, expected {n}",
                    col.len()
                )));
            }
            let w = self.slots[*slot].width;
            if let Some(bad) = col.iter().find(|&&v| v & !mask(w) != 0) {
                return Err(SimError::StimulusMismatch(format!(
                    "value {bad} does not fit {w}-bit input `{name}`"
                )));
            }
            columns.push((*slot, col));
        }

        let mut resets: Vec<(usize, u64)> = Vec::new();
        for p in &self.clocked {
            if let Some((sig, edge)) = p.reset {
                if !resets.iter().any(|&(s, _)| s == sig) {
                    let name = &self.slots[sig].name;
                    let inactive = stim
                        .classes
                        .iter()
                        .find(|c| c.signal.as_str() == name.as_str())
                        .and_then(|c| c.reset_polarity)
                        .map(|pol| pol.inactive_value())
                        .unwrap_or(match edge {
                            Edge::Pos => 0,
                            Edge::Neg => 1,
                        });
                    resets.push((sig, inactive));
                }
            }
        }

        let mut m = Machine {
            inst: self,
            state: vec![0; self.slots.len()],
            nba: Vec::new(),
        };
        let mut outputs: Vec<Vec<u64>> = vec![Vec::with_capacity(n); self.outputs.len()];
        for cycle in 0..n {
            for &(slot, col) in &columns {
                m.state[slot] = col[cycle];
            }
            m.settle(cycle)?;
            for r in resets.iter_mut() {
                let now = m.state[r.0] & 1;
                let edge = match (r.1, now) {
                    (0, 1) => Some(Edge::Pos),
                    (1, 0) => Some(Edge::Neg),
                    _ => None,
                };
                r.1 = now;
                if let Some(e) = edge {
                    let sig = r.0;
                    m.fire(|p| p.reset == Some((sig, e)));
                    m.settle(cycle)?;
                }
            }
            for (o, &(_, slot)) in outputs.iter_mut().zip(&self.outputs) {
                o.push(m.state[slot]);
            }
            if !self.clocked.is_empty() {
                m.fire(|p| p.edge == Edge::Pos);
                m.settle(cycle)?;
                if self.clocked.iter().any(|p| p.edge == Edge::Neg) {
                    m.fire(|p| p.edge == Edge::Neg);
                    m.settle(cycle)?;
                }
            }
        }
        Ok(SimTrace {
            cycles: n,
            outputs: self.outputs.iter().map(|(name, _)| name.clone()).zip(outputs).collect(),
        })
    }
}

/// Elaborate and run in one step.
pub fn run(ast: &ModuleAst, stim: &StimulusSet) -> Result<SimTrace, SimError> {
    elaborate(ast)?.run(stim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_module, SourceText};
    use crate::stimulus::generate;

    fn inst(text: &str) -> SimInstance {
        elaborate(&parse_module(&SourceText::new(text, "t")).unwrap()).unwrap()
    }

    fn stim_for(i: &SimInstance, n: usize, seed: u64) -> StimulusSet {
        generate(i.port_classes(), n, seed).unwrap()
    }

    #[test]
    fn and_gate() {
        let i = inst("module m(input a, input b, output y); assign y = a & b; endmodule");
        let s = stim_for(&i, 64, 1);
        let t = i.run(&s).unwrap();
        for k in 0..64 {
            assert_eq!(t.output("y").unwrap()[k], s.column("a").unwrap()[k] & s.column("b").unwrap()[k]);
        }
    }

    #[test]
    fn counter_with_sync_reset() {
        let i = inst(
            "module m(input clk, input rst, output reg [3:0] q);\n always @(posedge clk) if (rst) q <= 0; else q <= q + 1;\nendmodule",
        );
        let t = i.run(&stim_for(&i, 8, 0)).unwrap();
        assert_eq!(t.output("q").unwrap(), &[0, 0, 0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn async_active_low_reset() {
        let i = inst(
            "module m(input clk, input rst_n, input d, output reg q);\n always @(posedge clk or negedge rst_n) if (!rst_n) q <= 1'b0; else q <= d;\nendmodule",
        );
        let s = stim_for(&i, 20, 9);
        let t = i.run(&s).unwrap();
        let d = s.column("d").unwrap();
        assert_eq!(&t.output("q").unwrap()[..3], &[0, 0, 0]);
        for k in 3..20 {
            assert_eq!(t.output("q").unwrap()[k], d[k - 1]);
        }
    }

    #[test]
    fn nonblocking_swap_is_atomic() {
        let i = inst(
            "module m(input clk, input rst, output reg [1:0] a, output reg [1:0] b);\n always @(posedge clk) if (rst) begin a <= 1; b <= 2; end else begin a <= b; b <= a; end\nendmodule",
        );
        let t = i.run(&stim_for(&i, 6, 0)).unwrap();
        assert_eq!(t.output("a").unwrap(), &[0, 1, 1, 2, 1, 2]);
        assert_eq!(t.output("b").unwrap(), &[0, 2, 2, 1, 2, 1]);
    }

    #[test]
    fn context_width_keeps_carry() {
        let i = inst(
            "module m(input [3:0] a, input [3:0] b, output [4:0] s, output c);\n assign s = a + b;\n assign c = (a + b) > 5'd15;\nendmodule",
        );
        let s = stim_for(&i, 200, 4);
        let t = i.run(&s).unwrap();
        for k in 0..200 {
            let (a, b) = (s.column("a").unwrap()[k], s.column("b").unwrap()[k]);
            assert_eq!(t.output("s").unwrap()[k], a + b);
            assert_eq!(t.output("c").unwrap()[k], (a + b > 15) as u64);
        }
    }

    #[test]
    fn concat_lvalue_and_case() {
        let i = inst(
            "module m(input [1:0] s, input [3:0] a, output reg [1:0] hi, output reg [1:0] lo);\n always @(*) begin\n  case (s)\n   2'd0: {hi, lo} = a;\n   2'd1: {hi, lo} = ~a;\n   default: {hi, lo} = 4'b1001;\n  endcase\n end\nendmodule",
        );
        let s = stim_for(&i, 100, 2);
        let t = i.run(&s).unwrap();
        for k in 0..100 {
            let (sel, a) = (s.column("s").unwrap()[k], s.column("a").unwrap()[k]);
            let v = match sel {
                0 => a,
                1 => !a & 15,
                _ => 9,
            };
            assert_eq!(t.output("hi").unwrap()[k], v >> 2);
            assert_eq!(t.output("lo").unwrap()[k], v & 3);
        }
    }

    #[test]
    fn casez_wildcards() {
        let i = inst(
            "module m(input [3:0] r, output reg [1:0] g);\n always @(*) casez (r)\n  4'b1???: g = 3;\n  4'b01??: g = 2;\n  4'b001?: g = 1;\n  default: g = 0;\n endcase\nendmodule",
        );
        let s = crate::stimulus::exhaustive(i.port_classes()).unwrap();
        let t = i.run(&s).unwrap();
        for k in 0..16 {
            let r = s.column("r").unwrap()[k];
            let want = if r >= 8 { 3 } else if r >= 4 { 2 } else if r >= 2 { 1 } else { 0 };
            assert_eq!(t.output("g").unwrap()[k], want);
        }
    }

    #[test]
    fn out_of_order_assigns_settle() {
        let i = inst("module m(input a, output y); wire t; assign y = ~t; assign t = a; endmodule");
        let s = stim_for(&i, 10, 3);
        let t = i.run(&s).unwrap();
        for k in 0..10 {
            assert_eq!(t.output("y").unwrap()[k], 1 ^ s.column("a").unwrap()[k]);
        }
    }

    #[test]
    fn oscillating_loop_never_settles() {
        let ast = parse_module(&SourceText::new(
            "module m(input a, output y); wire t; assign t = ~t ^ a; assign y = t; endmodule",
            "t",
        ))
        .unwrap();
        let i = elaborate(&ast).unwrap();
        assert!(i.uses_iterative_settling());
        assert_eq!(i.run(&stim_for(&i, 3, 0)).unwrap_err(), SimError::UnsettledLogic { cycle: 0 });
        assert!(matches!(
            elaborate_with(&ast, ElabOptions { allow_iterative: false }),
            Err(SimError::CombinationalLoop(_))
        ));
    }

    #[test]
    fn two_clocks_rejected() {
        let ast = parse_module(&SourceText::new(
            "module m(input c1, input c2, input d, output reg a, output reg b);\n always @(posedge c1) a <= d;\n always @(posedge c2) b <= d;\nendmodule",
            "t",
        ))
        .unwrap();
        assert!(matches!(elaborate(&ast), Err(SimError::MultipleClocks(_))));
    }

    #[test]
    fn stimulus_mismatch() {
        let i = inst("module m(input [1:0] a, output y); assign y = a[0]; endmodule");
        let mut s = stim_for(&i, 4, 0);
        s.columns.get_mut(&crate::SignalId::from("a")).unwrap()[2] = 7;
        assert!(matches!(i.run(&s), Err(SimError::StimulusMismatch(_))));
        s.columns.clear();
        assert!(matches!(i.run(&s), Err(SimError::StimulusMismatch(_))));
    }

    #[test]
    fn trace_json_round_trip() {
        let i = inst("module m(input [63:0] a, output [63:0] y); assign y = ~a; endmodule");
        let t = i.run(&stim_for(&i, 5, 11)).unwrap();
        let j = t.to_json();
        assert!(j.starts_with("{\"cycles\":5,\"outputs\":{\"y\":[\""));
        assert_eq!(SimTrace::from_json(&j).unwrap(), t);
    }

    #[test]
    fn descending_and_ascending_ranges() {
        let i = inst(
            "module m(input [0:3] a, input [7:4] b, output [1:0] x, output y); assign x = a[0:1]; assign y = b[7]; endmodule",
        );
        let s = stim_for(&i, 50, 5);
        let t = i.run(&s).unwrap();
        for k in 0..50 {
            let (a, b) = (s.column("a").unwrap()[k], s.column("b").unwrap()[k]);
            assert_eq!(t.output("x").unwrap()[k], a >> 2);
            assert_eq!(t.output("y").unwrap()[k], b >> 3);
        }
    }
}
