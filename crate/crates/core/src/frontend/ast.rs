//! Syntax tree for one flat module. Every node carries the byte span it was
//! parsed from; `Display` prints a canonical form that ignores spans and
//! trivia, which is what "structurally equal" means throughout the crate.

use std::fmt;

use super::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Input,
    Output,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetKind {
    Wire,
    Reg,
}

/// Resolved `[msb:lsb]` declaration range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range {
    pub msb: i64,
    pub lsb: i64,
    /// Span of the bracketed text, used when a header is re-rendered.
    pub span: Span,
}

impl Range {
    pub fn width(&self) -> u32 {
        ((self.msb - self.lsb).unsigned_abs() + 1) as u32
    }

    /// Physical bit position (0 = LSB) of a declared index, if in range.
    pub fn position(&self, index: i64) -> Option<u32> {
        let (lo, hi) = if self.msb >= self.lsb {
            (self.lsb, self.msb)
        } else {
            (self.msb, self.lsb)
        };
        if index < lo || index > hi {
            return None;
        }
        Some(if self.msb >= self.lsb {
            (index - self.lsb) as u32
        } else {
            (self.lsb - index) as u32
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDecl {
    pub name: String,
    pub kind: NetKind,
    pub width: u32,
    pub range: Option<Range>,
    /// `wire x = expr;` net declaration assignment.
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub value: u64,
    /// `None` for unsized values, which behave as 32-bit.
    pub width: Option<u32>,
    pub local: bool,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclGroupKind {
    /// Non-ANSI body port declaration, e.g. `output reg [3:0] q;`.
    Port { direction: Direction, reg: bool },
    Net(NetKind),
    Param { local: bool },
}

/// One declaration statement in the module body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclGroup {
    pub kind: DeclGroupKind,
    /// Keywords and range, e.g. `wire [7:0]`.
    pub head: Span,
    pub declarators: Vec<Declarator>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declarator {
    pub name: Ident,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleAst {
    pub name: Ident,
    /// From `module` through the `;` ending the header.
    pub header: Span,
    /// `#( ... )` parameter port list, if any.
    pub param_ports: Option<Span>,
    pub ansi: bool,
    /// Ports in header order.
    pub ports: Vec<PortDecl>,
    pub params: Vec<ParamDecl>,
    /// Non-port nets.
    pub nets: Vec<NetDecl>,
    /// Body declaration statements in source order.
    pub decl_groups: Vec<DeclGroup>,
    pub items: Vec<Item>,
    pub endmodule: Span,
    pub span: Span,
}

impl ModuleAst {
    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn net(&self, name: &str) -> Option<&NetDecl> {
        self.nets.iter().find(|n| n.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    /// Width and range of a port or net.
    pub fn signal_shape(&self, name: &str) -> Option<(u32, Option<Range>)> {
        if let Some(p) = self.port(name) {
            return Some((p.width, p.range));
        }
        self.net(name).map(|n| (n.width, n.range))
    }

    pub fn is_signal(&self, name: &str) -> bool {
        self.port(name).is_some() || self.net(name).is_some()
    }

    /// Bytes strictly between the header and `endmodule`.
    pub fn body_span(&self) -> Span {
        Span::new(self.header.end, self.endmodule.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Assign(ContinuousAssign),
    Always(AlwaysBlock),
    /// Construct recognised but outside the simulated subset
    /// (`initial`, instantiation, functions, ...). Reported by the subset check.
    Unsupported { construct: String, span: Span },
}

impl Item {
    pub fn span(&self) -> Span {
        match self {
            Item::Assign(a) => a.span,
            Item::Always(a) => a.span,
            Item::Unsupported { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuousAssign {
    pub keyword: Span,
    pub assigns: Vec<Assignment>,
    pub span: Span,
}

/// `lhs = rhs` without the terminating `;`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub lhs: LValue,
    pub rhs: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Pos,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensItem {
    pub edge: Option<Edge>,
    pub signal: Ident,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sensitivity {
    Star,
    List(Vec<SensItem>),
}

impl Sensitivity {
    pub fn edges(&self) -> Vec<(&Ident, Edge)> {
        match self {
            Sensitivity::Star => Vec::new(),
            Sensitivity::List(items) => items
                .iter()
                .filter_map(|i| i.edge.map(|e| (&i.signal, e)))
                .collect(),
        }
    }

    pub fn is_edge_triggered(&self) -> bool {
        !self.edges().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlwaysBlock {
    /// `always @(...)`.
    pub head: Span,
    pub sensitivity: Sensitivity,
    pub body: Stmt,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseArm {
    /// Labels and `:`, or `default` with its optional `:`.
    pub head: Span,
    /// Empty for `default`.
    pub labels: Vec<Expr>,
    pub body: Stmt,
    pub span: Span,
}

impl CaseArm {
    pub fn is_default(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Block {
        /// `begin` plus optional `: label`.
        begin: Span,
        label: Option<Ident>,
        stmts: Vec<Stmt>,
        end: Span,
    },
    If {
        /// `if ( cond )`.
        head: Span,
        cond: Expr,
        then_branch: Box<Stmt>,
        else_kw: Option<Span>,
        else_branch: Option<Box<Stmt>>,
    },
    Case {
        /// `case ( subject )`.
        head: Span,
        kind: CaseKind,
        subject: Expr,
        arms: Vec<CaseArm>,
        endcase: Span,
    },
    Assign {
        blocking: bool,
        assignment: Assignment,
    },
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LValue {
    Ident(Ident),
    Bit { base: Ident, index: Expr, span: Span },
    Part { base: Ident, msb: Expr, lsb: Expr, span: Span },
    Concat { parts: Vec<LValue>, span: Span },
}

impl LValue {
    pub fn span(&self) -> Span {
        match self {
            LValue::Ident(i) => i.span,
            LValue::Bit { span, .. } | LValue::Part { span, .. } | LValue::Concat { span, .. } => *span,
        }
    }

    /// Signals written, in source order (may repeat).
    pub fn targets(&self) -> Vec<&Ident> {
        let mut out = Vec::new();
        self.collect_targets(&mut out);
        out
    }

    fn collect_targets<'a>(&'a self, out: &mut Vec<&'a Ident>) {
        match self {
            LValue::Ident(i) | LValue::Bit { base: i, .. } | LValue::Part { base: i, .. } => out.push(i),
            LValue::Concat { parts, .. } => parts.iter().for_each(|p| p.collect_targets(out)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    /// `None` for unsized literals (32 bits).
    pub width: Option<u32>,
    pub value: u64,
    /// Bits written as `?` or `z` (wildcards in `casez` labels).
    pub wildcard: u64,
    /// Bits written as `x`; two-state simulation reads them as 0.
    pub unknown: u64,
}

impl Literal {
    pub fn self_width(&self) -> u32 {
        self.width.unwrap_or(32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Plus,
    Neg,
    LogNot,
    BitNot,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Plus => "+",
            UnaryOp::Neg => "-",
            UnaryOp::LogNot => "!",
            UnaryOp::BitNot => "~",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXnor => "~^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Shl,
    Shr,
    AShl,
    AShr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    BitAnd,
    BitOr,
    BitXor,
    BitXnor,
    LogAnd,
    LogOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Pow => "**",
            Shl => "<<",
            Shr => ">>",
            AShl => "<<<",
            AShr => ">>>",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            CaseEq => "===",
            CaseNe => "!==",
            BitAnd => "&",
            BitOr => "|",
            BitXor => "^",
            BitXnor => "~^",
            LogAnd => "&&",
            LogOr => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Ident(String),
    Literal(Literal),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Repeat(Box<Expr>, Vec<Expr>),
    Bit(Ident, Box<Expr>),
    Part(Ident, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Visit every identifier read by this expression, including index
    /// expressions and selected bases.
    pub fn for_each_ident<'a>(&'a self, f: &mut impl FnMut(&'a str, Span)) {
        match &self.kind {
            ExprKind::Ident(name) => f(name, self.span),
            ExprKind::Literal(_) => {}
            ExprKind::Unary(_, e) => e.for_each_ident(f),
            ExprKind::Binary(_, a, b) => {
                a.for_each_ident(f);
                b.for_each_ident(f);
            }
            ExprKind::Ternary(c, t, e) => {
                c.for_each_ident(f);
                t.for_each_ident(f);
                e.for_each_ident(f);
            }
            ExprKind::Concat(parts) => parts.iter().for_each(|p| p.for_each_ident(f)),
            ExprKind::Repeat(n, parts) => {
                n.for_each_ident(f);
                parts.iter().for_each(|p| p.for_each_ident(f));
            }
            ExprKind::Bit(base, i) => {
                f(&base.name, base.span);
                i.for_each_ident(f);
            }
            ExprKind::Part(base, m, l) => {
                f(&base.name, base.span);
                m.for_each_ident(f);
                l.for_each_ident(f);
            }
        }
    }

    pub fn idents(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.for_each_ident(&mut |n, _| out.push(n));
        out
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.width {
            None if self.wildcard == 0 && self.unknown == 0 => write!(f, "{}", self.value),
            w => {
                let width = w.unwrap_or(32);
                if let Some(w) = w {
                    write!(f, "{w}")?;
                }
                f.write_str("'b")?;
                for bit in (0..width).rev() {
                    let m = 1u64 << bit;
                    let c = if self.wildcard & m != 0 {
                        '?'
                    } else if self.unknown & m != 0 {
                        'x'
                    } else if self.value & m != 0 {
                        '1'
                    } else {
                        '0'
                    };
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Ident(n) => f.write_str(n),
            ExprKind::Literal(l) => write!(f, "{l}"),
            ExprKind::Unary(op, e) => write!(f, "({}{})", op.symbol(), e),
            ExprKind::Binary(op, a, b) => write!(f, "({} {} {})", a, op.symbol(), b),
            ExprKind::Ternary(c, t, e) => write!(f, "({c} ? {t} : {e})"),
            ExprKind::Concat(parts) => {
                f.write_str("{")?;
                write_list(f, parts)?;
                f.write_str("}")
            }
            ExprKind::Repeat(n, parts) => {
                write!(f, "{{{n}{{")?;
                write_list(f, parts)?;
                f.write_str("}}")
            }
            ExprKind::Bit(b, i) => write!(f, "{}[{}]", b.name, i),
            ExprKind::Part(b, m, l) => write!(f, "{}[{}:{}]", b.name, m, l),
        }
    }
}

impl fmt::Display for LValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LValue::Ident(i) => f.write_str(&i.name),
            LValue::Bit { base, index, .. } => write!(f, "{}[{}]", base.name, index),
            LValue::Part { base, msb, lsb, .. } => write!(f, "{}[{}:{}]", base.name, msb, lsb),
            LValue::Concat { parts, .. } => {
                f.write_str("{")?;
                write_list(f, parts)?;
                f.write_str("}")
            }
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            StmtKind::Block { label, stmts, .. } => {
                f.write_str("begin")?;
                if let Some(l) = label {
                    write!(f, " : {}", l.name)?;
                }
                for s in stmts {
                    write!(f, " {s}")?;
                }
                f.write_str(" end")
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                write!(f, "if ({cond}) {then_branch}")?;
                if let Some(e) = else_branch {
                    write!(f, " else {e}")?;
                }
                Ok(())
            }
            StmtKind::Case {
                kind, subject, arms, ..
            } => {
                let kw = match kind {
                    CaseKind::Case => "case",
                    CaseKind::Casez => "casez",
                    CaseKind::Casex => "casex",
                };
                write!(f, "{kw} ({subject})")?;
                for arm in arms {
                    if arm.is_default() {
                        write!(f, " default: {}", arm.body)?;
                    } else {
                        f.write_str(" ")?;
                        write_list(f, &arm.labels)?;
                        write!(f, ": {}", arm.body)?;
                    }
                }
                f.write_str(" endcase")
            }
            StmtKind::Assign { blocking, assignment } => {
                let op = if *blocking { "=" } else { "<=" };
                write!(f, "{} {} {};", assignment.lhs, op, assignment.rhs)
            }
            StmtKind::Null => f.write_str(";"),
        }
    }
}

impl Stmt {
    /// Visit every assignment statement in this subtree.
    pub fn for_each_assign<'a>(&'a self, f: &mut impl FnMut(&'a Stmt, bool, &'a Assignment)) {
        match &self.kind {
            StmtKind::Block { stmts, .. } => stmts.iter().for_each(|s| s.for_each_assign(f)),
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.for_each_assign(f);
                if let Some(e) = else_branch {
                    e.for_each_assign(f);
                }
            }
            StmtKind::Case { arms, .. } => arms.iter().for_each(|a| a.body.for_each_assign(f)),
            StmtKind::Assign { blocking, assignment } => f(self, *blocking, assignment),
            StmtKind::Null => {}
        }
    }

    /// Every signal assigned anywhere in this subtree.
    pub fn assigned_signals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.for_each_assign(&mut |_, _, a| {
            for t in a.lhs.targets() {
                if !out.contains(&t.name.as_str()) {
                    out.push(t.name.as_str());
                }
            }
        });
        out
    }
}
