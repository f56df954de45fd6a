//! Signal dependency graph, backward closure and span-faithful slicing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{
    parse_module, DeclGroupKind, Direction, Expr, ExprKind, Item, LValue, ModuleAst, NetKind,
    Sensitivity, SourceText, Span, Stmt, StmtKind,
};
use crate::SignalId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SliceError {
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("internal error: slice does not parse: {0}")]
    SliceNotCompilable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Data,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: SignalId,
    pub to: SignalId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalGraph {
    /// Signal name to bit width.
    pub nodes: BTreeMap<SignalId, u32>,
    pub edges: BTreeSet<GraphEdge>,
    pub def_sites: BTreeMap<SignalId, BTreeSet<Span>>,
    pub decl_sites: BTreeMap<SignalId, Span>,
    preds: BTreeMap<SignalId, BTreeSet<SignalId>>,
}

impl SignalGraph {
    pub fn contains(&self, s: &SignalId) -> bool {
        self.nodes.contains_key(s)
    }

    pub fn width(&self, s: &SignalId) -> Option<u32> {
        self.nodes.get(s).copied()
    }

    pub fn has_edge(&self, from: &str, to: &str, kind: EdgeKind) -> bool {
        self.edges.contains(&GraphEdge {
            from: from.into(),
            to: to.into(),
            kind,
        })
    }

    /// Direct predecessors over both edge kinds.
    pub fn predecessors(&self, s: &SignalId) -> impl Iterator<Item = &SignalId> {
        self.preds.get(s).into_iter().flatten()
    }

    fn add_edge(&mut self, from: &str, to: &str, kind: EdgeKind) {
        let (from, to) = (SignalId::from(from), SignalId::from(to));
        self.preds.entry(to.clone()).or_default().insert(from.clone());
        self.edges.insert(GraphEdge { from, to, kind });
    }
}

/// Signals feeding `e`, split into data reads and ternary conditions.
fn expr_deps<'a>(ast: &ModuleAst, e: &'a Expr, data: &mut BTreeSet<&'a str>, control: &mut BTreeSet<&'a str>) {
    match &e.kind {
        ExprKind::Ternary(c, t, f) => {
            c.for_each_ident(&mut |n, _| {
                if ast.is_signal(n) {
                    control.insert(n);
                }
            });
            expr_deps(ast, t, data, control);
            expr_deps(ast, f, data, control);
        }
        ExprKind::Unary(_, a) => expr_deps(ast, a, data, control),
        ExprKind::Binary(_, a, b) => {
            expr_deps(ast, a, data, control);
            expr_deps(ast, b, data, control);
        }
        ExprKind::Concat(parts) | ExprKind::Repeat(_, parts) => {
            parts.iter().for_each(|p| expr_deps(ast, p, data, control))
        }
        _ => e.for_each_ident(&mut |n, _| {
            if ast.is_signal(n) {
                data.insert(n);
            }
        }),
    }
}

fn lvalue_index_deps<'a>(ast: &ModuleAst, lv: &'a LValue, data: &mut BTreeSet<&'a str>) {
    let mut note = |e: &'a Expr| {
        e.for_each_ident(&mut |n, _| {
            if ast.is_signal(n) {
                data.insert(n);
            }
        })
    };
    match lv {
        LValue::Ident(_) => {}
        LValue::Bit { index, .. } => note(index),
        LValue::Part { msb, lsb, .. } => {
            note(msb);
            note(lsb);
        }
        LValue::Concat { parts, .. } => parts.iter().for_each(|p| lvalue_index_deps(ast, p, data)),
    }
}

struct Builder<'a> {
    ast: &'a ModuleAst,
    g: SignalGraph,
}

impl<'a> Builder<'a> {
    fn assignment(&mut self, lhs: &'a LValue, rhs: &'a Expr, guards: &[&'a str], site: Span) {
        let targets: Vec<&str> = lhs.targets().iter().map(|t| t.name.as_str()).collect();
        let mut data = BTreeSet::new();
        lvalue_index_deps(self.ast, lhs, &mut data);
        self.drive(&targets, data, rhs, guards, site);
    }

    fn drive(&mut self, targets: &[&str], mut data: BTreeSet<&'a str>, rhs: &'a Expr, guards: &[&'a str], site: Span) {
        let mut control = BTreeSet::new();
        expr_deps(self.ast, rhs, &mut data, &mut control);
        for t in targets {
            for d in &data {
                self.g.add_edge(d, t, EdgeKind::Data);
            }
            for c in control.iter().chain(guards) {
                self.g.add_edge(c, t, EdgeKind::Control);
            }
            self.g.def_sites.entry(SignalId::from(*t)).or_default().insert(site);
        }
    }

    fn guard_signals(&self, e: &'a Expr, out: &mut Vec<&'a str>) {
        e.for_each_ident(&mut |n, _| {
            if self.ast.is_signal(n) && !out.contains(&n) {
                out.push(n);
            }
        });
    }

    fn stmt(&mut self, s: &'a Stmt, guards: &mut Vec<&'a str>) {
        match &s.kind {
            StmtKind::Block { stmts, .. } => stmts.iter().for_each(|s| self.stmt(s, guards)),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let depth = guards.len();
                self.guard_signals(cond, guards);
                self.stmt(then_branch, guards);
                if let Some(e) = else_branch {
                    self.stmt(e, guards);
                }
                guards.truncate(depth);
            }
            StmtKind::Case { subject, arms, .. } => {
                let depth = guards.len();
                self.guard_signals(subject, guards);
                for a in arms {
                    a.labels.iter().for_each(|l| self.guard_signals(l, guards));
                }
                arms.iter().for_each(|a| self.stmt(&a.body, guards));
                guards.truncate(depth);
            }
            StmtKind::Assign { assignment, .. } => {
                self.assignment(&assignment.lhs, &assignment.rhs, guards, s.span);
            }
            StmtKind::Null => {}
        }
    }
}

/// Build the dependency graph of a module that passed the subset check.
pub fn build_graph(ast: &ModuleAst) -> SignalGraph {
    let mut b = Builder {
        ast,
        g: SignalGraph::default(),
    };
    for p in &ast.ports {
        b.g.nodes.insert(p.name.as_str().into(), p.width);
        b.g.decl_sites.insert(p.name.as_str().into(), p.span);
    }
    for n in &ast.nets {
        b.g.nodes.entry(n.name.as_str().into()).or_insert(n.width);
        b.g.decl_sites.entry(n.name.as_str().into()).or_insert(n.span);
    }
    for group in &ast.decl_groups {
        if matches!(group.kind, DeclGroupKind::Net(_)) {
            for d in &group.declarators {
                if let Some(init) = &d.init {
                    b.drive(&[d.name.name.as_str()], BTreeSet::new(), init, &[], d.span);
                }
            }
        }
    }
    for item in &ast.items {
        match item {
            Item::Assign(ca) => {
                for a in &ca.assigns {
                    b.assignment(&a.lhs, &a.rhs, &[], a.span);
                }
            }
            Item::Always(ab) => {
                let mut guards: Vec<&str> = ab.sensitivity.edges().iter().map(|(id, _)| id.name.as_str()).collect();
                b.stmt(&ab.body, &mut guards);
            }
            Item::Unsupported { .. } => {}
        }
    }
    b.g
}

/// Smallest superset of `targets` closed under predecessors.
pub fn backward_closure(graph: &SignalGraph, targets: &BTreeSet<SignalId>) -> Result<BTreeSet<SignalId>, SliceError> {
    for t in targets {
        if !graph.contains(t) {
            return Err(SliceError::UnknownSignal(t.0.clone()));
        }
    }
    let mut seen: BTreeSet<SignalId> = targets.clone();
    let mut queue: VecDeque<SignalId> = targets.iter().cloned().collect();
    while let Some(s) = queue.pop_front() {
        for p in graph.predecessors(&s) {
            if seen.insert(p.clone()) {
                queue.push_back(p.clone());
            }
        }
    }
    Ok(seen)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignalSlice {
    pub targets: BTreeSet<SignalId>,
    pub kept_signals: BTreeSet<SignalId>,
    /// Retained source bytes: the header, body fragments in order, `endmodule`.
    pub spans: Vec<Span>,
    pub text: String,
}

impl SignalSlice {
    /// Body fragments only, without header and `endmodule`.
    pub fn mask(&self) -> &[Span] {
        if self.spans.len() >= 2 {
            &self.spans[1..self.spans.len() - 1]
        } else {
            &[]
        }
    }

    pub fn spans_json(&self) -> String {
        serde_json::to_string(&self.spans).expect("span serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Dropped,
    Whole,
    Partial,
}

enum Frag {
    Src(Span),
    Glue(&'static str),
}

struct Emitter<'a> {
    kept: &'a BTreeSet<SignalId>,
}

fn is_kept(kept: &BTreeSet<SignalId>, name: &str) -> bool {
    kept.contains(&SignalId::from(name))
}

/// Ends with an `if` that has no `else`, so a following `else` would bind to it.
fn ends_open(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::If { else_branch: None, .. } => true,
        StmtKind::If {
            else_branch: Some(e), ..
        } => ends_open(e),
        _ => false,
    }
}

/// Whether two constant case labels can select the same subject value.
fn labels_may_overlap(a: &Expr, b: &Expr, casez: bool) -> bool {
    match (&a.kind, &b.kind) {
        (ExprKind::Literal(x), ExprKind::Literal(y)) => {
            let (Some(wx), Some(wy)) = (x.width, y.width) else {
                return true;
            };
            let w = wx.min(wy);
            let low = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
            let care = if casez { !x.wildcard & !y.wildcard } else { u64::MAX };
            let (vx, vy) = (x.value & !x.unknown, y.value & !y.unknown);
            (vx ^ vy) & care & low == 0
        }
        _ => true,
    }
}

impl<'a> Emitter<'a> {
    fn scan(&self, s: &Stmt) -> (bool, bool) {
        let mut kept_any = false;
        let mut dropped_any = false;
        s.for_each_assign(&mut |_, _, a| {
            if a.lhs.targets().iter().any(|t| is_kept(self.kept, &t.name)) {
                kept_any = true;
            } else {
                dropped_any = true;
            }
        });
        (kept_any, dropped_any)
    }

    fn class(&self, s: &Stmt) -> Class {
        match self.scan(s) {
            (false, _) => Class::Dropped,
            (true, false) => Class::Whole,
            (true, true) => Class::Partial,
        }
    }

    /// Emit a kept statement; returns whether the emitted text ends open.
    fn stmt(&self, s: &Stmt, out: &mut Vec<Frag>) -> bool {
        match self.class(s) {
            Class::Dropped => false,
            Class::Whole => {
                out.push(Frag::Src(s.span));
                ends_open(s)
            }
            Class::Partial => match &s.kind {
                StmtKind::Block { begin, stmts, end, .. } => {
                    out.push(Frag::Src(*begin));
                    for c in stmts {
                        self.stmt(c, out);
                    }
                    out.push(Frag::Src(*end));
                    false
                }
                StmtKind::If {
                    head,
                    then_branch,
                    else_kw,
                    else_branch,
                    ..
                } => {
                    let else_kept = else_branch.as_ref().is_some_and(|e| self.class(e) != Class::Dropped);
                    out.push(Frag::Src(*head));
                    if self.class(then_branch) == Class::Dropped {
                        out.push(Frag::Glue(";"));
                    } else {
                        let open = self.stmt(then_branch, out);
                        if !else_kept {
                            return true;
                        }
                        if open {
                            out.push(Frag::Glue("else"));
                            out.push(Frag::Glue(";"));
                        }
                    }
                    out.push(Frag::Src(else_kw.expect("else branch has a keyword")));
                    self.stmt(else_branch.as_ref().expect("kept else"), out)
                }
                StmtKind::Case {
                    head,
                    kind,
                    arms,
                    endcase,
                    ..
                } => {
                    let casez = *kind == crate::frontend::CaseKind::Casez;
                    let kept: Vec<bool> = arms.iter().map(|a| self.class(&a.body) != Class::Dropped).collect();
                    let default_kept = arms.iter().zip(&kept).any(|(a, &k)| a.is_default() && k);
                    out.push(Frag::Src(*head));
                    for (i, arm) in arms.iter().enumerate() {
                        if kept[i] {
                            out.push(Frag::Src(arm.head));
                            self.stmt(&arm.body, out);
                        } else if !arm.is_default() {
                            let shadows = default_kept
                                || arms[i + 1..].iter().zip(&kept[i + 1..]).any(|(later, &k)| {
                                    k && !later.is_default()
                                        && arm
                                            .labels
                                            .iter()
                                            .any(|l| later.labels.iter().any(|m| labels_may_overlap(l, m, casez)))
                                });
                            if shadows {
                                out.push(Frag::Src(arm.head));
                                out.push(Frag::Glue(";"));
                            }
                        }
                    }
                    out.push(Frag::Src(*endcase));
                    false
                }
                StmtKind::Assign { .. } | StmtKind::Null => unreachable!("leaf statements are never partial"),
            },
        }
    }

    fn list<T>(
        &self,
        span: Span,
        head: Span,
        entries: &[T],
        keep: impl Fn(&T) -> bool,
        entry_span: impl Fn(&T) -> Span,
    ) -> Vec<Frag> {
        let kept: Vec<&T> = entries.iter().filter(|e| keep(e)).collect();
        if kept.is_empty() {
            return Vec::new();
        }
        if kept.len() == entries.len() {
            return vec![Frag::Src(span)];
        }
        let mut out = vec![Frag::Src(head)];
        for (i, e) in kept.iter().enumerate() {
            if i > 0 {
                out.push(Frag::Glue(","));
            }
            out.push(Frag::Src(entry_span(e)));
        }
        out.push(Frag::Glue(";"));
        out
    }
}

/// Signals that must accompany kept ones for the slice to stay well formed:
/// every target of a kept concatenation assignment, and every signal named in
/// the level-sensitivity list of a kept always block.
fn companions(ast: &ModuleAst, kept: &BTreeSet<SignalId>) -> BTreeSet<SignalId> {
    let mut extra = BTreeSet::new();
    let note_lhs = |lv: &LValue, extra: &mut BTreeSet<SignalId>| {
        let targets = lv.targets();
        if targets.iter().any(|t| is_kept(kept, &t.name)) {
            for t in targets {
                extra.insert(SignalId::from(t.name.as_str()));
            }
        }
    };
    for item in &ast.items {
        match item {
            Item::Assign(ca) => ca.assigns.iter().for_each(|a| note_lhs(&a.lhs, &mut extra)),
            Item::Always(ab) => {
                let mut any = false;
                ab.body.for_each_assign(&mut |_, _, a| {
                    if a.lhs.targets().iter().any(|t| is_kept(kept, &t.name)) {
                        any = true;
                    }
                    note_lhs(&a.lhs, &mut extra);
                });
                if any {
                    if let Sensitivity::List(items) = &ab.sensitivity {
                        for i in items {
                            extra.insert(SignalId::from(i.signal.name.as_str()));
                        }
                    }
                }
            }
            Item::Unsupported { .. } => {}
        }
    }
    extra
}

fn render_header(src: &SourceText, ast: &ModuleAst, kept: &BTreeSet<SignalId>) -> String {
    let mut h = format!("module {}", ast.name.name);
    if let Some(pp) = ast.param_ports {
        h.push(' ');
        h.push_str(src.slice(pp));
    }
    let ports: Vec<_> = ast.ports.iter().filter(|p| is_kept(kept, &p.name)).collect();
    if ast.ansi {
        let decls: Vec<String> = ports
            .iter()
            .map(|p| {
                let mut d = String::from(match p.direction {
                    Direction::Input => "input",
                    Direction::Output => "output",
                });
                if p.kind == NetKind::Reg {
                    d.push_str(" reg");
                }
                if let Some(r) = p.range {
                    d.push(' ');
                    d.push_str(src.slice(r.span));
                }
                d.push(' ');
                d.push_str(&p.name);
                d
            })
            .collect();
        h.push_str(" (\n  ");
        h.push_str(&decls.join(",\n  "));
        h.push_str("\n);");
    } else {
        let names: Vec<&str> = ports.iter().map(|p| p.name.as_str()).collect();
        h.push_str(" (");
        h.push_str(&names.join(", "));
        h.push_str(");");
    }
    h
}

/// Extract the code implementing `targets` from the module in `src`.
pub fn extract_slice(
    src: &SourceText,
    ast: &ModuleAst,
    graph: &SignalGraph,
    targets: &BTreeSet<SignalId>,
) -> Result<SignalSlice, SliceError> {
    let mut kept = backward_closure(graph, targets)?;
    loop {
        let extra = companions(ast, &kept);
        if extra.is_subset(&kept) {
            break;
        }
        kept.extend(extra);
        kept = backward_closure(graph, &kept)?;
    }

    let em = Emitter { kept: &kept };
    let mut elements: Vec<(usize, Vec<Frag>)> = Vec::new();
    for g in &ast.decl_groups {
        let frags = match g.kind {
            DeclGroupKind::Param { .. } => vec![Frag::Src(g.span)],
            DeclGroupKind::Port { .. } | DeclGroupKind::Net(_) => {
                em.list(g.span, g.head, &g.declarators, |d| is_kept(&kept, &d.name.name), |d| d.span)
            }
        };
        elements.push((g.span.start, frags));
    }
    for item in &ast.items {
        let frags = match item {
            Item::Assign(ca) => em.list(
                ca.span,
                ca.keyword,
                &ca.assigns,
                |a| a.lhs.targets().iter().any(|t| is_kept(&kept, &t.name)),
                |a| a.span,
            ),
            Item::Always(ab) => match em.class(&ab.body) {
                Class::Dropped => Vec::new(),
                Class::Whole => vec![Frag::Src(ab.span)],
                Class::Partial => {
                    let mut out = vec![Frag::Src(ab.head)];
                    em.stmt(&ab.body, &mut out);
                    out
                }
            },
            Item::Unsupported { .. } => Vec::new(),
        };
        elements.push((item.span().start, frags));
    }
    elements.sort_by_key(|(start, _)| *start);

    let mut text = render_header(src, ast, &kept);
    let mut spans = vec![ast.header];
    for (_, frags) in elements.iter().filter(|(_, f)| !f.is_empty()) {
        text.push('\n');
        for (i, f) in frags.iter().enumerate() {
            let piece = match f {
                Frag::Src(s) => {
                    spans.push(*s);
                    src.slice(*s)
                }
                Frag::Glue(g) => g,
            };
            let attach = matches!(f, Frag::Glue("," | ";"));
            if i > 0 && !attach {
                text.push(' ');
            }
            text.push_str(piece);
        }
    }
    text.push_str("\nendmodule\n");
    spans.push(ast.endmodule);

    parse_module(&SourceText::new(text.as_str(), "<slice>")).map_err(|e| {
        let shown = SourceText::new(text.as_str(), "<slice>");
        SliceError::SliceNotCompilable(e.render(&shown))
    })?;
    Ok(SignalSlice {
        targets: targets.clone(),
        kept_signals: kept,
        spans,
        text,
    })
}

/// Convenience: graph plus slice for a single target.
pub fn slice_signal(src: &SourceText, ast: &ModuleAst, target: &str) -> Result<SignalSlice, SliceError> {
    let graph = build_graph(ast);
    extract_slice(src, ast, &graph, &BTreeSet::from([SignalId::from(target)]))
}
