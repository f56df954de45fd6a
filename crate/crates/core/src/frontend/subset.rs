//! Guards the simulator's semantic domain: reports every construct outside
//! the synthesizable subset without aborting on the first one.

use std::collections::BTreeSet;

use super::ast::*;
use super::{const_eval_with, FrontendError, Span};
use crate::stimulus::is_reset_name;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsyncReset {
    pub signal: String,
    pub edge: Edge,
}

/// How an always block is scheduled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlwaysRole {
    Combinational,
    Clocked {
        clock: String,
        edge: Edge,
        reset: Option<AsyncReset>,
    },
}

/// Signal tested by a reset-style `if` condition: `r`, `!r`, `~r`, `r == k`.
fn condition_signal(cond: &Expr) -> Option<&str> {
    match &cond.kind {
        ExprKind::Ident(n) => Some(n),
        ExprKind::Unary(UnaryOp::LogNot | UnaryOp::BitNot, e) => condition_signal(e),
        ExprKind::Binary(BinaryOp::Eq | BinaryOp::Ne, a, b) => match (&a.kind, &b.kind) {
            (ExprKind::Ident(n), ExprKind::Literal(_)) | (ExprKind::Literal(_), ExprKind::Ident(n)) => Some(n),
            _ => None,
        },
        _ => None,
    }
}

fn first_if(s: &Stmt) -> Option<&Expr> {
    match &s.kind {
        StmtKind::If { cond, .. } => Some(cond),
        StmtKind::Block { stmts, .. } => stmts.first().and_then(first_if),
        _ => None,
    }
}

/// Identify clock and optional asynchronous reset of an always block.
pub fn always_role(block: &AlwaysBlock) -> Result<AlwaysRole, String> {
    let edges = block.sensitivity.edges();
    let level = match &block.sensitivity {
        Sensitivity::Star => 0,
        Sensitivity::List(items) => items.iter().filter(|i| i.edge.is_none()).count(),
    };
    match (edges.len(), level) {
        (0, _) => Ok(AlwaysRole::Combinational),
        (_, l) if l > 0 => Err("mixed edge and level sensitivity".into()),
        (1, _) => Ok(AlwaysRole::Clocked {
            clock: edges[0].0.name.clone(),
            edge: edges[0].1,
            reset: None,
        }),
        (2, _) => {
            let (a, b) = (edges[0], edges[1]);
            if a.0.name == b.0.name {
                return Err("same signal listed twice in edge sensitivity".into());
            }
            let tested = first_if(&block.body).and_then(condition_signal);
            let reset_is_a = match tested {
                Some(n) if n == a.0.name => true,
                Some(n) if n == b.0.name => false,
                _ => match (is_reset_name(&a.0.name), is_reset_name(&b.0.name)) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => return Err("cannot tell clock from asynchronous reset".into()),
                },
            };
            let (reset, clock) = if reset_is_a { (a, b) } else { (b, a) };
            Ok(AlwaysRole::Clocked {
                clock: clock.0.name.clone(),
                edge: clock.1,
                reset: Some(AsyncReset {
                    signal: reset.0.name.clone(),
                    edge: reset.1,
                }),
            })
        }
        _ => Err("more than two edges in sensitivity list".into()),
    }
}

struct Checker<'a> {
    ast: &'a ModuleAst,
    diags: Vec<FrontendError>,
}

fn unsupported(span: Span, construct: impl Into<String>) -> FrontendError {
    FrontendError::Unsupported {
        span,
        construct: construct.into(),
    }
}

impl<'a> Checker<'a> {
    fn lookup(&self) -> impl Fn(&str) -> Option<(u64, Option<u32>)> + 'a {
        let ast = self.ast;
        move |n: &str| ast.param(n).map(|p| (p.value, p.width))
    }

    fn const_value(&self, e: &Expr) -> Option<u64> {
        let lookup = self.lookup();
        const_eval_with(e, &lookup).map(|(v, _)| v)
    }

    /// Check an expression and return its self-determined width.
    fn expr(&mut self, e: &Expr) -> u32 {
        match &e.kind {
            ExprKind::Ident(n) => {
                if let Some((w, _)) = self.ast.signal_shape(n) {
                    w
                } else {
                    self.ast
                        .param(n)
                        .map_or(32, |p| p.width.unwrap_or(32))
                }
            }
            ExprKind::Literal(l) => l.self_width(),
            ExprKind::Unary(op, a) => {
                let w = self.expr(a);
                match op {
                    UnaryOp::RedNand | UnaryOp::RedNor | UnaryOp::RedXnor => {
                        self.diags.push(unsupported(e.span, format!("operator unary {}", op.symbol())));
                        1
                    }
                    UnaryOp::Plus | UnaryOp::Neg | UnaryOp::BitNot => w,
                    _ => 1,
                }
            }
            ExprKind::Binary(op, a, b) => {
                let wa = self.expr(a);
                let wb = self.expr(b);
                use BinaryOp::*;
                match op {
                    Div | Mod | Pow | AShl | AShr | CaseEq | CaseNe | BitXnor => {
                        self.diags.push(unsupported(e.span, format!("operator {}", op.symbol())));
                        wa.max(wb)
                    }
                    Shl | Shr => wa,
                    Lt | Le | Gt | Ge | Eq | Ne | LogAnd | LogOr => 1,
                    _ => wa.max(wb),
                }
            }
            ExprKind::Ternary(c, t, f) => {
                self.expr(c);
                self.expr(t).max(self.expr(f))
            }
            ExprKind::Concat(parts) => {
                let total: u32 = parts.iter().map(|p| self.expr(p)).sum();
                if total > 64 {
                    self.diags.push(FrontendError::WidthOverflow {
                        span: e.span,
                        width: total as u64,
                    });
                }
                total.min(64)
            }
            ExprKind::Repeat(n, parts) => {
                let inner: u32 = parts.iter().map(|p| self.expr(p)).sum();
                let Some(count) = self.const_value(n) else {
                    self.diags.push(unsupported(n.span, "non-constant replication count"));
                    return inner;
                };
                let total = inner as u64 * count;
                if total > 64 {
                    self.diags.push(FrontendError::WidthOverflow {
                        span: e.span,
                        width: total,
                    });
                }
                if count == 0 {
                    self.diags.push(unsupported(n.span, "zero replication count"));
                }
                total.min(64) as u32
            }
            ExprKind::Bit(base, idx) => {
                self.select(base, &[idx], e.span);
                1
            }
            ExprKind::Part(base, m, l) => self.select(base, &[m, l], e.span),
        }
    }

    fn select(&mut self, base: &Ident, indices: &[&Expr], span: Span) -> u32 {
        let Some((_, range)) = self.ast.signal_shape(&base.name) else {
            self.diags.push(unsupported(span, "select of a parameter"));
            return 1;
        };
        let mut positions = Vec::new();
        for idx in indices {
            for n in idx.idents() {
                if self.ast.is_signal(n) {
                    self.diags.push(unsupported(idx.span, "non-constant bit-select"));
                    return 1;
                }
            }
            let Some(v) = self.const_value(idx) else {
                self.diags.push(unsupported(idx.span, "non-constant bit-select"));
                return 1;
            };
            let range = range.unwrap_or(Range {
                msb: 0,
                lsb: 0,
                span: Span::default(),
            });
            match range.position(v as i64) {
                Some(p) => positions.push(p),
                None => {
                    self.diags.push(unsupported(idx.span, "out-of-range select"));
                    return 1;
                }
            }
        }
        if positions.len() == 2 {
            positions[0].abs_diff(positions[1]) + 1
        } else {
            1
        }
    }

    fn lvalue(&mut self, lv: &LValue, procedural: bool) {
        for t in lv.targets() {
            if let Some(p) = self.ast.port(&t.name) {
                if p.direction == Direction::Input {
                    self.diags.push(unsupported(t.span, format!("assignment to input `{}`", t.name)));
                    continue;
                }
            }
            let kind = self
                .ast
                .port(&t.name)
                .map(|p| p.kind)
                .or_else(|| self.ast.net(&t.name).map(|n| n.kind));
            match (kind, procedural) {
                (Some(NetKind::Wire), true) => self
                    .diags
                    .push(unsupported(t.span, format!("procedural assignment to wire `{}`", t.name))),
                (Some(NetKind::Reg), false) => self
                    .diags
                    .push(unsupported(t.span, format!("continuous assignment to reg `{}`", t.name))),
                _ => {}
            }
        }
        match lv {
            LValue::Ident(_) => {}
            LValue::Bit { base, index, span } => {
                self.select(base, &[index], *span);
            }
            LValue::Part { base, msb, lsb, span } => {
                self.select(base, &[msb, lsb], *span);
            }
            LValue::Concat { parts, .. } => parts.iter().for_each(|p| self.lvalue(p, procedural)),
        }
    }

    fn stmt(&mut self, s: &Stmt, reads: &mut BTreeSet<String>) {
        let note_reads = |e: &Expr, reads: &mut BTreeSet<String>| {
            for n in e.idents() {
                reads.insert(n.to_owned());
            }
        };
        match &s.kind {
            StmtKind::Block { stmts, .. } => stmts.iter().for_each(|c| self.stmt(c, reads)),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                self.expr(cond);
                note_reads(cond, reads);
                self.stmt(then_branch, reads);
                if let Some(e) = else_branch {
                    self.stmt(e, reads);
                }
            }
            StmtKind::Case {
                kind,
                subject,
                arms,
                ..
            } => {
                if *kind == CaseKind::Casex {
                    self.diags.push(unsupported(s.span, "casex"));
                }
                self.expr(subject);
                note_reads(subject, reads);
                for arm in arms {
                    for label in &arm.labels {
                        self.expr(label);
                        if label.idents().iter().any(|n| self.ast.is_signal(n)) || self.const_value(label).is_none() {
                            self.diags.push(unsupported(label.span, "non-constant case label"));
                        }
                        if *kind == CaseKind::Case {
                            if let ExprKind::Literal(l) = &label.kind {
                                if l.wildcard != 0 {
                                    self.diags.push(unsupported(label.span, "z/? bits in a case label"));
                                }
                            }
                        }
                    }
                    self.stmt(&arm.body, reads);
                }
            }
            StmtKind::Assign { assignment, .. } => {
                self.lvalue(&assignment.lhs, true);
                self.expr(&assignment.rhs);
                note_reads(&assignment.rhs, reads);
            }
            StmtKind::Null => {}
        }
    }

    fn always(&mut self, ab: &AlwaysBlock) {
        let role = match always_role(ab) {
            Ok(r) => r,
            Err(msg) => {
                self.diags.push(unsupported(ab.head, msg));
                return;
            }
        };
        let mut reads = BTreeSet::new();
        self.stmt(&ab.body, &mut reads);
        if let (AlwaysRole::Combinational, Sensitivity::List(items)) = (&role, &ab.sensitivity) {
            let listed: BTreeSet<&str> = items.iter().map(|i| i.signal.name.as_str()).collect();
            let written: BTreeSet<&str> = ab.body.assigned_signals().into_iter().collect();
            for r in &reads {
                if self.ast.is_signal(r) && !listed.contains(r.as_str()) && !written.contains(r.as_str()) {
                    self.diags.push(unsupported(
                        ab.head,
                        format!("incomplete sensitivity list (missing `{r}`)"),
                    ));
                }
            }
        }
        if let AlwaysRole::Clocked { clock, reset, .. } = &role {
            for sig in std::iter::once(clock).chain(reset.as_ref().map(|r| &r.signal)) {
                if self.ast.signal_shape(sig).map(|(w, _)| w) != Some(1) {
                    self.diags.push(unsupported(ab.head, format!("multi-bit edge signal `{sig}`")));
                }
            }
        }
    }
}

/// Every construct outside the simulated subset. Empty means the module
/// can be elaborated.
pub fn supported_subset_check(ast: &ModuleAst) -> Vec<FrontendError> {
    let mut c = Checker {
        ast,
        diags: Vec::new(),
    };
    for net in &ast.nets {
        if let Some(init) = &net.init {
            if net.kind == NetKind::Reg {
                c.diags.push(unsupported(net.span, "reg initializer"));
            }
            c.expr(init);
        }
    }
    for item in &ast.items {
        match item {
            Item::Unsupported { construct, span } => c.diags.push(unsupported(*span, construct.clone())),
            Item::Assign(ca) => {
                for a in &ca.assigns {
                    c.lvalue(&a.lhs, false);
                    c.expr(&a.rhs);
                }
            }
            Item::Always(ab) => c.always(ab),
        }
    }
    c.diags.sort_by_key(|d| d.span().start);
    c.diags
}
