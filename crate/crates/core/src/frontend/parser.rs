use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::lexer::{lex, TokKind, Token};
use super::{FrontendError, SourceText, Span};

const MAX_WIDTH: u64 = 64;

const RESERVED: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "assign", "always", "initial",
    "begin", "end", "if", "else", "case", "casez", "casex", "endcase", "default", "posedge",
    "negedge", "or", "parameter", "localparam", "function", "endfunction", "task", "endtask",
    "generate", "endgenerate", "integer", "real", "time", "realtime", "genvar", "for", "while",
    "repeat", "forever", "signed", "unsigned", "fork", "join", "wait", "disable", "supply0",
    "supply1", "tri", "specify", "endspecify", "defparam", "event", "deassign", "force", "release",
];

const SYSTEMVERILOG: &[&str] = &[
    "always_ff", "always_comb", "always_latch", "logic", "bit", "byte", "int", "interface",
    "typedef", "enum", "struct", "unique", "priority",
];

type PResult<T> = Result<T, FrontendError>;

pub(crate) struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    params: HashMap<String, (u64, Option<u32>)>,
}

fn syntax(span: Span, message: impl Into<String>) -> FrontendError {
    FrontendError::Syntax {
        span,
        message: message.into(),
    }
}

fn unsupported(span: Span, construct: impl Into<String>) -> FrontendError {
    FrontendError::Unsupported {
        span,
        construct: construct.into(),
    }
}

impl<'a> Parser<'a> {
    pub(crate) fn new(text: &'a str) -> PResult<Self> {
        let lexed = lex(text)?;
        Ok(Parser {
            text,
            tokens: lexed.tokens,
            pos: 0,
            params: HashMap::new(),
        })
    }

    fn peek(&self) -> Token {
        self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> Token {
        self.tokens[(self.pos + ahead).min(self.tokens.len() - 1)]
    }

    fn tok_text(&self, t: Token) -> &'a str {
        &self.text[t.span.start..t.span.end]
    }

    fn at(&self, s: &str) -> bool {
        let t = self.peek();
        matches!(t.kind, TokKind::Sym | TokKind::Ident) && self.tok_text(t) == s
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokKind::Eof
    }

    fn bump(&mut self) -> Token {
        let t = self.peek();
        if t.kind != TokKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, s: &str) -> Option<Span> {
        if self.at(s) {
            Some(self.bump().span)
        } else {
            None
        }
    }

    fn expect(&mut self, s: &str) -> PResult<Span> {
        self.eat(s).ok_or_else(|| self.unexpected(&format!("`{s}`")))
    }

    fn unexpected(&self, wanted: &str) -> FrontendError {
        let t = self.peek();
        if t.kind == TokKind::Eof {
            syntax(t.span, format!("expected {wanted}, found end of input"))
        } else {
            syntax(t.span, format!("expected {wanted}, found `{}`", self.tok_text(t)))
        }
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn reject_foreign(&self) -> PResult<()> {
        let t = self.peek();
        if t.kind == TokKind::Ident && SYSTEMVERILOG.contains(&self.tok_text(t)) {
            return Err(unsupported(t.span, format!("SystemVerilog `{}`", self.tok_text(t))));
        }
        if t.kind == TokKind::SysIdent {
            return Err(unsupported(t.span, format!("system task `{}`", self.tok_text(t))));
        }
        Ok(())
    }

    fn expect_ident(&mut self) -> PResult<Ident> {
        self.reject_foreign()?;
        let t = self.peek();
        if t.kind != TokKind::Ident || RESERVED.contains(&self.tok_text(t)) {
            if self.tok_text(t) == "signed" {
                return Err(unsupported(t.span, "signed"));
            }
            return Err(self.unexpected("identifier"));
        }
        self.bump();
        Ok(Ident {
            name: self.tok_text(t).to_owned(),
            span: t.span,
        })
    }

    // ---------------------------------------------------------------- module

    pub(crate) fn parse_module(&mut self) -> PResult<ModuleAst> {
        if self.at_eof() {
            return Err(syntax(self.peek().span, "no module definition found"));
        }
        let start = self.expect("module")?;
        let name = self.expect_ident()?;

        let mut ast = ModuleAst {
            name,
            header: Span::default(),
            param_ports: None,
            ansi: false,
            ports: Vec::new(),
            params: Vec::new(),
            nets: Vec::new(),
            decl_groups: Vec::new(),
            items: Vec::new(),
            endmodule: Span::default(),
            span: Span::default(),
        };

        if let Some(hash) = self.eat("#") {
            self.expect("(")?;
            loop {
                self.eat("parameter");
                if self.at("integer") || self.at("signed") {
                    return Err(unsupported(self.peek().span, "typed parameter"));
                }
                if self.at("[") {
                    self.parse_range()?;
                }
                let p = self.parse_param_assign(false)?;
                ast.params.push(p);
                if self.eat(",").is_none() {
                    break;
                }
            }
            let close = self.expect(")")?;
            ast.param_ports = Some(hash.join(close));
        }

        let mut header_names: Vec<Ident> = Vec::new();
        if self.eat("(").is_some() {
            if self.at("input") || self.at("output") || self.at("inout") {
                ast.ansi = true;
                self.parse_ansi_ports(&mut ast)?;
            } else if !self.at(")") {
                loop {
                    header_names.push(self.expect_ident()?);
                    if self.eat(",").is_none() {
                        break;
                    }
                }
            }
            self.expect(")")?;
        }
        let semi = self.expect(";")?;
        ast.header = start.join(semi);

        // Non-ANSI port bookkeeping: name -> (direction, range, reg, span)
        let mut pending: HashMap<String, PendingPort> = HashMap::new();
        let header_set: HashSet<&str> = header_names.iter().map(|i| i.name.as_str()).collect();

        loop {
            if self.at("endmodule") {
                break;
            }
            if self.at_eof() {
                return Err(syntax(self.peek().span, "missing `endmodule`"));
            }
            self.parse_body_element(&mut ast, &header_set, &mut pending)?;
        }
        let end = self.expect("endmodule")?;
        ast.endmodule = end;
        ast.span = start.join(end);

        if !ast.ansi {
            for hn in &header_names {
                let Some(pp) = pending.remove(&hn.name) else {
                    return Err(syntax(hn.span, format!("port `{}` has no direction declaration", hn.name)));
                };
                let (width, range) = match (pp.range, pp.reg_range) {
                    (Some(r), _) | (None, Some(r)) => (r.width(), Some(r)),
                    (None, None) => (1, None),
                };
                ast.ports.push(PortDecl {
                    name: hn.name.clone(),
                    direction: pp.direction.ok_or_else(|| {
                        syntax(hn.span, format!("port `{}` has no direction declaration", hn.name))
                    })?,
                    width,
                    kind: if pp.reg { NetKind::Reg } else { NetKind::Wire },
                    range,
                    span: pp.span.unwrap_or(hn.span),
                });
            }
            if let Some((name, pp)) = pending.into_iter().find(|(_, pp)| pp.direction.is_some()) {
                return Err(syntax(
                    pp.span.unwrap_or_default(),
                    format!("`{name}` is declared as a port but is not in the module header"),
                ));
            }
        }

        if !self.at_eof() {
            if self.at("module") {
                return Err(FrontendError::MultipleModules { span: self.peek().span });
            }
            return Err(self.unexpected("end of input after `endmodule`"));
        }
        Ok(ast)
    }

    fn parse_dir(&mut self) -> PResult<Direction> {
        let t = self.peek();
        match self.tok_text(t) {
            "input" => {
                self.bump();
                Ok(Direction::Input)
            }
            "output" => {
                self.bump();
                Ok(Direction::Output)
            }
            "inout" => Err(unsupported(t.span, "inout port")),
            _ => Err(self.unexpected("port direction")),
        }
    }

    fn parse_ansi_ports(&mut self, ast: &mut ModuleAst) -> PResult<()> {
        let mut current: Option<(Direction, NetKind, Option<Range>)> = None;
        loop {
            let start = self.peek().span;
            if self.at("input") || self.at("output") || self.at("inout") {
                let dir = self.parse_dir()?;
                let kind = if self.eat("reg").is_some() {
                    NetKind::Reg
                } else {
                    self.eat("wire");
                    NetKind::Wire
                };
                if self.at("signed") {
                    return Err(unsupported(self.peek().span, "signed"));
                }
                if dir == Direction::Input && kind == NetKind::Reg {
                    return Err(syntax(start, "input ports cannot be declared `reg`"));
                }
                let range = if self.at("[") { Some(self.parse_range()?) } else { None };
                current = Some((dir, kind, range));
            }
            let Some((direction, kind, range)) = current else {
                return Err(self.unexpected("port direction"));
            };
            let name = self.expect_ident()?;
            if self.at("=") {
                return Err(unsupported(self.peek().span, "port initializer"));
            }
            if self.at("[") {
                return Err(unsupported(self.peek().span, "array port"));
            }
            if ast.ports.iter().any(|p| p.name == name.name) {
                return Err(syntax(name.span, format!("duplicate port `{}`", name.name)));
            }
            ast.ports.push(PortDecl {
                name: name.name.clone(),
                direction,
                width: range.map_or(1, |r| r.width()),
                kind,
                range,
                span: start.join(name.span),
            });
            if self.eat(",").is_none() {
                return Ok(());
            }
        }
    }

    fn parse_range(&mut self) -> PResult<Range> {
        let open = self.expect("[")?;
        let msb = self.parse_expr()?;
        self.expect(":")?;
        let lsb = self.parse_expr()?;
        let close = self.expect("]")?;
        let span = open.join(close);
        let (m, _) = self.const_eval(&msb)?;
        let (l, _) = self.const_eval(&lsb)?;
        let range = Range {
            msb: m as i64,
            lsb: l as i64,
            span,
        };
        let width = (range.msb - range.lsb).unsigned_abs() + 1;
        if width > MAX_WIDTH {
            return Err(FrontendError::WidthOverflow { span, width });
        }
        Ok(range)
    }

    fn parse_param_assign(&mut self, local: bool) -> PResult<ParamDecl> {
        let name = self.expect_ident()?;
        self.expect("=")?;
        let value = self.parse_expr()?;
        let (v, w) = self.const_eval(&value)?;
        if self.params.contains_key(&name.name) {
            return Err(syntax(name.span, format!("duplicate parameter `{}`", name.name)));
        }
        self.params.insert(name.name.clone(), (v, w));
        Ok(ParamDecl {
            name: name.name,
            value: v,
            width: w,
            local,
            span: name.span.join(value.span),
        })
    }

    fn check_fresh(&self, ast: &ModuleAst, name: &Ident) -> PResult<()> {
        let dup = ast.port(&name.name).is_some() && ast.ansi
            || ast.net(&name.name).is_some()
            || ast.param(&name.name).is_some();
        if dup {
            return Err(syntax(name.span, format!("duplicate declaration of `{}`", name.name)));
        }
        Ok(())
    }

    fn parse_body_element(
        &mut self,
        ast: &mut ModuleAst,
        header: &HashSet<&str>,
        pending: &mut HashMap<String, PendingPort>,
    ) -> PResult<()> {
        self.reject_foreign()?;
        let t = self.peek();
        let kw = self.tok_text(t);
        match kw {
            "input" | "output" | "inout" => {
                if ast.ansi {
                    return Err(syntax(t.span, "port declaration in body of a module with an ANSI header"));
                }
                let direction = self.parse_dir()?;
                let reg = self.eat("reg").is_some();
                if !reg {
                    self.eat("wire");
                }
                if self.at("signed") {
                    return Err(unsupported(self.peek().span, "signed"));
                }
                let range = if self.at("[") { Some(self.parse_range()?) } else { None };
                let head = t.span.join(Span::new(self.prev_end(), self.prev_end()));
                let mut declarators = Vec::new();
                loop {
                    let name = self.expect_ident()?;
                    if !header.contains(name.name.as_str()) {
                        return Err(syntax(
                            name.span,
                            format!("`{}` is declared as a port but is not in the module header", name.name),
                        ));
                    }
                    let pp = pending.entry(name.name.clone()).or_default();
                    if pp.direction.is_some() {
                        return Err(syntax(name.span, format!("duplicate direction for `{}`", name.name)));
                    }
                    pp.direction = Some(direction);
                    pp.range = range;
                    pp.reg |= reg;
                    pp.span = Some(name.span);
                    declarators.push(Declarator {
                        span: name.span,
                        name,
                        init: None,
                    });
                    if self.eat(",").is_none() {
                        break;
                    }
                }
                let semi = self.expect(";")?;
                ast.decl_groups.push(DeclGroup {
                    kind: DeclGroupKind::Port { direction, reg },
                    head,
                    declarators,
                    span: t.span.join(semi),
                });
                Ok(())
            }
            "wire" | "reg" => {
                self.bump();
                let kind = if kw == "reg" { NetKind::Reg } else { NetKind::Wire };
                if self.at("signed") {
                    return Err(unsupported(self.peek().span, "signed"));
                }
                let range = if self.at("[") { Some(self.parse_range()?) } else { None };
                let head = t.span.join(Span::new(self.prev_end(), self.prev_end()));
                let mut declarators = Vec::new();
                loop {
                    let name = self.expect_ident()?;
                    if self.at("[") {
                        return Err(unsupported(self.peek().span, "memory array"));
                    }
                    let init = if self.eat("=").is_some() {
                        Some(self.parse_expr()?)
                    } else {
                        None
                    };
                    let span = init.as_ref().map_or(name.span, |e| name.span.join(e.span));
                    if !ast.ansi && header.contains(name.name.as_str()) {
                        let pp = pending.entry(name.name.clone()).or_default();
                        if kind == NetKind::Reg {
                            pp.reg = true;
                            pp.reg_range = range;
                        }
                        if init.is_some() {
                            return Err(unsupported(span, "port initializer"));
                        }
                    } else {
                        if ast.port(&name.name).is_some() {
                            return Err(syntax(name.span, format!("duplicate declaration of `{}`", name.name)));
                        }
                        self.check_fresh(ast, &name)?;
                        ast.nets.push(NetDecl {
                            name: name.name.clone(),
                            kind,
                            width: range.map_or(1, |r| r.width()),
                            range,
                            init: init.clone(),
                            span,
                        });
                    }
                    declarators.push(Declarator { name, init, span });
                    if self.eat(",").is_none() {
                        break;
                    }
                }
                let semi = self.expect(";")?;
                ast.decl_groups.push(DeclGroup {
                    kind: DeclGroupKind::Net(kind),
                    head,
                    declarators,
                    span: t.span.join(semi),
                });
                Ok(())
            }
            "parameter" | "localparam" => {
                self.bump();
                let local = kw == "localparam";
                if self.at("integer") || self.at("signed") {
                    return Err(unsupported(self.peek().span, "typed parameter"));
                }
                if self.at("[") {
                    self.parse_range()?;
                }
                let head = t.span.join(Span::new(self.prev_end(), self.prev_end()));
                let mut declarators = Vec::new();
                loop {
                    let p = self.parse_param_assign(local)?;
                    let start = p.span.start;
                    let ident_end = start + p.name.len();
                    declarators.push(Declarator {
                        name: Ident {
                            name: p.name.clone(),
                            span: Span::new(start, ident_end),
                        },
                        init: None,
                        span: p.span,
                    });
                    ast.params.push(p);
                    if self.eat(",").is_none() {
                        break;
                    }
                }
                let semi = self.expect(";")?;
                ast.decl_groups.push(DeclGroup {
                    kind: DeclGroupKind::Param { local },
                    head,
                    declarators,
                    span: t.span.join(semi),
                });
                Ok(())
            }
            "assign" => {
                let keyword = self.bump().span;
                if self.at("#") {
                    return Err(unsupported(self.peek().span, "delay"));
                }
                let mut assigns = Vec::new();
                loop {
                    let lhs = self.parse_lvalue()?;
                    self.expect("=")?;
                    let rhs = self.parse_expr()?;
                    let span = lhs.span().join(rhs.span);
                    assigns.push(Assignment { lhs, rhs, span });
                    if self.eat(",").is_none() {
                        break;
                    }
                }
                let semi = self.expect(";")?;
                ast.items.push(Item::Assign(ContinuousAssign {
                    keyword,
                    assigns,
                    span: keyword.join(semi),
                }));
                Ok(())
            }
            "always" => {
                let block = self.parse_always()?;
                ast.items.push(Item::Always(block));
                Ok(())
            }
            "initial" => {
                let start = self.bump().span;
                self.skip_stmt()?;
                ast.items.push(Item::Unsupported {
                    construct: "initial".into(),
                    span: start.join(Span::new(self.prev_end(), self.prev_end())),
                });
                Ok(())
            }
            "function" | "task" | "generate" | "specify" => {
                let start = self.bump().span;
                let end_kw = format!("end{kw}");
                while !self.at(&end_kw) {
                    if self.at_eof() {
                        return Err(syntax(start, format!("missing `{end_kw}`")));
                    }
                    self.bump();
                }
                let end = self.bump().span;
                ast.items.push(Item::Unsupported {
                    construct: kw.to_owned(),
                    span: start.join(end),
                });
                Ok(())
            }
            "integer" | "real" | "time" | "realtime" | "genvar" | "event" | "defparam" | "supply0"
            | "supply1" | "tri" => {
                let start = self.bump().span;
                let end = self.skip_to_semi()?;
                ast.items.push(Item::Unsupported {
                    construct: format!("{kw} declaration"),
                    span: start.join(end),
                });
                Ok(())
            }
            _ if t.kind == TokKind::Ident
                && !RESERVED.contains(&kw)
                && (self.peek_at(1).kind == TokKind::Ident || self.tok_text(self.peek_at(1)) == "#") =>
            {
                let start = t.span;
                let end = self.skip_to_semi()?;
                ast.items.push(Item::Unsupported {
                    construct: "instantiation".into(),
                    span: start.join(end),
                });
                Ok(())
            }
            _ => Err(self.unexpected("module item")),
        }
    }

    fn skip_to_semi(&mut self) -> PResult<Span> {
        let mut depth = 0i32;
        loop {
            if self.at_eof() {
                return Err(self.unexpected("`;`"));
            }
            let t = self.bump();
            match self.tok_text(t) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                ";" if depth <= 0 => return Ok(t.span),
                _ => {}
            }
        }
    }

    fn skip_parens(&mut self) -> PResult<()> {
        self.expect("(")?;
        let mut depth = 1;
        while depth > 0 {
            if self.at_eof() {
                return Err(self.unexpected("`)`"));
            }
            let t = self.bump();
            match self.tok_text(t) {
                "(" => depth += 1,
                ")" => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    /// Skip one statement without building a tree (for unsupported regions).
    fn skip_stmt(&mut self) -> PResult<()> {
        if self.eat("begin").is_some() || self.eat("fork").is_some() {
            if self.eat(":").is_some() {
                self.bump();
            }
            while !(self.at("end") || self.at("join")) {
                if self.at_eof() {
                    return Err(self.unexpected("`end`"));
                }
                self.skip_stmt()?;
            }
            self.bump();
            return Ok(());
        }
        if self.eat("if").is_some() {
            self.skip_parens()?;
            self.skip_stmt()?;
            if self.eat("else").is_some() {
                self.skip_stmt()?;
            }
            return Ok(());
        }
        if self.at("case") || self.at("casez") || self.at("casex") {
            self.bump();
            while self.eat("endcase").is_none() {
                if self.at_eof() {
                    return Err(self.unexpected("`endcase`"));
                }
                self.bump();
            }
            return Ok(());
        }
        if self.at("for") || self.at("while") || self.at("repeat") || self.at("wait") {
            self.bump();
            self.skip_parens()?;
            return self.skip_stmt();
        }
        if self.eat("forever").is_some() {
            return self.skip_stmt();
        }
        if self.eat("#").is_some() {
            if self.at("(") {
                self.skip_parens()?;
            } else {
                self.bump();
            }
            if self.eat(";").is_some() {
                return Ok(());
            }
            return self.skip_stmt();
        }
        if self.eat("@").is_some() {
            if self.at("(") {
                self.skip_parens()?;
            } else {
                self.bump();
            }
            if self.eat(";").is_some() {
                return Ok(());
            }
            return self.skip_stmt();
        }
        self.skip_to_semi().map(|_| ())
    }

    // ---------------------------------------------------------------- always

    fn parse_always(&mut self) -> PResult<AlwaysBlock> {
        let start = self.expect("always")?;
        if !self.at("@") {
            return Err(unsupported(self.peek().span, "always without event control"));
        }
        self.bump();
        let sensitivity = if self.eat("*").is_some() {
            Sensitivity::Star
        } else {
            self.expect("(")?;
            if self.eat("*").is_some() {
                self.expect(")")?;
                Sensitivity::Star
            } else {
                let mut items = Vec::new();
                loop {
                    let edge = if self.eat("posedge").is_some() {
                        Some(Edge::Pos)
                    } else if self.eat("negedge").is_some() {
                        Some(Edge::Neg)
                    } else {
                        None
                    };
                    let signal = self.expect_ident()?;
                    if self.at("[") {
                        return Err(unsupported(self.peek().span, "bit-select in sensitivity list"));
                    }
                    items.push(SensItem { edge, signal });
                    if self.eat("or").is_none() && self.eat(",").is_none() {
                        break;
                    }
                }
                self.expect(")")?;
                Sensitivity::List(items)
            }
        };
        let head = start.join(Span::new(self.prev_end(), self.prev_end()));
        let body = self.parse_stmt()?;
        let span = start.join(body.span);
        Ok(AlwaysBlock {
            head,
            sensitivity,
            body,
            span,
        })
    }

    pub(crate) fn parse_stmt(&mut self) -> PResult<Stmt> {
        self.reject_foreign()?;
        let t = self.peek();
        match self.tok_text(t) {
            ";" => {
                self.bump();
                Ok(Stmt {
                    kind: StmtKind::Null,
                    span: t.span,
                })
            }
            "begin" => {
                self.bump();
                let label = if self.eat(":").is_some() {
                    Some(self.expect_ident()?)
                } else {
                    None
                };
                let begin = t.span.join(Span::new(self.prev_end(), self.prev_end()));
                let mut stmts = Vec::new();
                while !self.at("end") {
                    if self.at_eof() {
                        return Err(self.unexpected("`end`"));
                    }
                    if self.at("reg") || self.at("integer") || self.at("wire") {
                        return Err(unsupported(self.peek().span, "block-local declaration"));
                    }
                    stmts.push(self.parse_stmt()?);
                }
                let end = self.bump().span;
                Ok(Stmt {
                    kind: StmtKind::Block {
                        begin,
                        label,
                        stmts,
                        end,
                    },
                    span: t.span.join(end),
                })
            }
            "if" => {
                self.bump();
                self.expect("(")?;
                let cond = self.parse_expr()?;
                let close = self.expect(")")?;
                let then_branch = Box::new(self.parse_stmt()?);
                let (else_kw, else_branch) = match self.eat("else") {
                    Some(kw) => (Some(kw), Some(Box::new(self.parse_stmt()?))),
                    None => (None, None),
                };
                let end = else_branch.as_ref().map_or(then_branch.span, |e| e.span);
                Ok(Stmt {
                    kind: StmtKind::If {
                        head: t.span.join(close),
                        cond,
                        then_branch,
                        else_kw,
                        else_branch,
                    },
                    span: t.span.join(end),
                })
            }
            "case" | "casez" | "casex" => {
                let t = self.bump();
                let kind = match self.tok_text(t) {
                    "case" => CaseKind::Case,
                    "casez" => CaseKind::Casez,
                    _ => CaseKind::Casex,
                };
                self.expect("(")?;
                let subject = self.parse_expr()?;
                let close = self.expect(")")?;
                let mut arms = Vec::new();
                while !self.at("endcase") {
                    if self.at_eof() {
                        return Err(self.unexpected("`endcase`"));
                    }
                    let arm_start = self.peek().span;
                    let labels = if self.eat("default").is_some() {
                        self.eat(":");
                        Vec::new()
                    } else {
                        let mut labels = vec![self.parse_expr()?];
                        while self.eat(",").is_some() {
                            labels.push(self.parse_expr()?);
                        }
                        self.expect(":")?;
                        labels
                    };
                    let head = arm_start.join(Span::new(self.prev_end(), self.prev_end()));
                    let body = self.parse_stmt()?;
                    arms.push(CaseArm {
                        head,
                        labels,
                        span: arm_start.join(body.span),
                        body,
                    });
                }
                let endcase = self.bump().span;
                Ok(Stmt {
                    kind: StmtKind::Case {
                        head: t.span.join(close),
                        kind,
                        subject,
                        arms,
                        endcase,
                    },
                    span: t.span.join(endcase),
                })
            }
            "for" | "while" | "repeat" | "forever" | "wait" | "fork" | "disable" | "assign"
            | "deassign" | "force" | "release" => Err(unsupported(t.span, self.tok_text(t))),
            "#" => Err(unsupported(t.span, "delay")),
            "@" => Err(unsupported(t.span, "event control inside a statement")),
            _ => {
                let lhs = self.parse_lvalue()?;
                let blocking = if self.eat("=").is_some() {
                    true
                } else if self.eat("<=").is_some() {
                    false
                } else {
                    return Err(self.unexpected("`=` or `<=`"));
                };
                if self.at("#") || self.at("@") {
                    return Err(unsupported(self.peek().span, "intra-assignment delay"));
                }
                let rhs = self.parse_expr()?;
                let semi = self.expect(";")?;
                let span = lhs.span().join(rhs.span);
                Ok(Stmt {
                    kind: StmtKind::Assign {
                        blocking,
                        assignment: Assignment { lhs, rhs, span },
                    },
                    span: span.join(semi),
                })
            }
        }
    }

    fn parse_lvalue(&mut self) -> PResult<LValue> {
        if let Some(open) = self.eat("{") {
            let mut parts = vec![self.parse_lvalue()?];
            while self.eat(",").is_some() {
                parts.push(self.parse_lvalue()?);
            }
            let close = self.expect("}")?;
            return Ok(LValue::Concat {
                parts,
                span: open.join(close),
            });
        }
        let base = self.expect_ident()?;
        if self.eat("[").is_none() {
            return Ok(LValue::Ident(base));
        }
        let first = self.parse_expr()?;
        if self.at("+:") || self.at("-:") {
            return Err(unsupported(self.peek().span, "indexed part-select"));
        }
        if self.eat(":").is_some() {
            let lsb = self.parse_expr()?;
            let close = self.expect("]")?;
            return Ok(LValue::Part {
                span: base.span.join(close),
                base,
                msb: first,
                lsb,
            });
        }
        let close = self.expect("]")?;
        Ok(LValue::Bit {
            span: base.span.join(close),
            base,
            index: first,
        })
    }

    // ----------------------------------------------------------- expressions

    pub(crate) fn parse_expr(&mut self) -> PResult<Expr> {
        let cond = self.parse_binary(1)?;
        if self.eat("?").is_some() {
            let t = self.parse_expr()?;
            self.expect(":")?;
            let e = self.parse_expr()?;
            let span = cond.span.join(e.span);
            return Ok(Expr {
                kind: ExprKind::Ternary(Box::new(cond), Box::new(t), Box::new(e)),
                span,
            });
        }
        Ok(cond)
    }

    fn binary_op(&self) -> Option<(BinaryOp, u8)> {
        let t = self.peek();
        if t.kind != TokKind::Sym {
            return None;
        }
        use BinaryOp::*;
        Some(match self.tok_text(t) {
            "||" => (LogOr, 1),
            "&&" => (LogAnd, 2),
            "|" => (BitOr, 3),
            "^" => (BitXor, 4),
            "^~" | "~^" => (BitXnor, 4),
            "&" => (BitAnd, 5),
            "==" => (Eq, 6),
            "!=" => (Ne, 6),
            "===" => (CaseEq, 6),
            "!==" => (CaseNe, 6),
            "<" => (Lt, 7),
            "<=" => (Le, 7),
            ">" => (Gt, 7),
            ">=" => (Ge, 7),
            "<<" => (Shl, 8),
            ">>" => (Shr, 8),
            "<<<" => (AShl, 8),
            ">>>" => (AShr, 8),
            "+" => (Add, 9),
            "-" => (Sub, 9),
            "*" => (Mul, 10),
            "/" => (Div, 10),
            "%" => (Mod, 10),
            "**" => (Pow, 11),
            _ => return None,
        })
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        while let Some((op, prec)) = self.binary_op() {
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.parse_binary(prec + 1)?;
            let span = lhs.span.join(rhs.span);
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let t = self.peek();
        if t.kind == TokKind::Sym {
            let op = match self.tok_text(t) {
                "+" => Some(UnaryOp::Plus),
                "-" => Some(UnaryOp::Neg),
                "!" => Some(UnaryOp::LogNot),
                "~" => Some(UnaryOp::BitNot),
                "&" => Some(UnaryOp::RedAnd),
                "|" => Some(UnaryOp::RedOr),
                "^" => Some(UnaryOp::RedXor),
                "~&" => Some(UnaryOp::RedNand),
                "~|" => Some(UnaryOp::RedNor),
                "~^" | "^~" => Some(UnaryOp::RedXnor),
                _ => None,
            };
            if let Some(op) = op {
                self.bump();
                let operand = self.parse_unary()?;
                let span = t.span.join(operand.span);
                return Ok(Expr {
                    kind: ExprKind::Unary(op, Box::new(operand)),
                    span,
                });
            }
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        self.reject_foreign()?;
        let t = self.peek();
        match t.kind {
            TokKind::Number => {
                self.bump();
                let lit = parse_literal(self.tok_text(t), t.span)?;
                Ok(Expr {
                    kind: ExprKind::Literal(lit),
                    span: t.span,
                })
            }
            TokKind::Ident => {
                let base = self.expect_ident()?;
                if self.at("(") {
                    return Err(unsupported(base.span, "function call"));
                }
                if self.eat("[").is_none() {
                    return Ok(Expr {
                        span: base.span,
                        kind: ExprKind::Ident(base.name),
                    });
                }
                let first = self.parse_expr()?;
                if self.at("+:") || self.at("-:") {
                    return Err(unsupported(self.peek().span, "indexed part-select"));
                }
                if self.eat(":").is_some() {
                    let lsb = self.parse_expr()?;
                    let close = self.expect("]")?;
                    return Ok(Expr {
                        span: base.span.join(close),
                        kind: ExprKind::Part(base, Box::new(first), Box::new(lsb)),
                    });
                }
                let close = self.expect("]")?;
                if self.at("[") {
                    return Err(unsupported(self.peek().span, "multi-dimensional select"));
                }
                Ok(Expr {
                    span: base.span.join(close),
                    kind: ExprKind::Bit(base, Box::new(first)),
                })
            }
            TokKind::Sym if self.at("(") => {
                let open = self.bump().span;
                let inner = self.parse_expr()?;
                let close = self.expect(")")?;
                Ok(Expr {
                    kind: inner.kind,
                    span: open.join(close),
                })
            }
            TokKind::Sym if self.at("{") => {
                let open = self.bump().span;
                let first = self.parse_expr()?;
                if self.at("{") {
                    self.bump();
                    let mut parts = vec![self.parse_expr()?];
                    while self.eat(",").is_some() {
                        parts.push(self.parse_expr()?);
                    }
                    self.expect("}")?;
                    let close = self.expect("}")?;
                    return Ok(Expr {
                        kind: ExprKind::Repeat(Box::new(first), parts),
                        span: open.join(close),
                    });
                }
                let mut parts = vec![first];
                while self.eat(",").is_some() {
                    parts.push(self.parse_expr()?);
                }
                let close = self.expect("}")?;
                Ok(Expr {
                    kind: ExprKind::Concat(parts),
                    span: open.join(close),
                })
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    /// Evaluate a constant expression over literals and parameters.
    pub(crate) fn const_eval(&self, e: &Expr) -> PResult<(u64, Option<u32>)> {
        let lookup = |name: &str| self.params.get(name).copied();
        const_eval_with(e, &lookup).ok_or_else(|| {
            let mut first = None;
            e.for_each_ident(&mut |n, s| {
                if first.is_none() && lookup(n).is_none() {
                    first = Some((n.to_owned(), s));
                }
            });
            match first {
                Some((name, span)) => FrontendError::UnresolvedIdentifier { span, name },
                None => syntax(e.span, "expression is not constant"),
            }
        })
    }
}

#[derive(Default)]
struct PendingPort {
    direction: Option<Direction>,
    range: Option<Range>,
    reg_range: Option<Range>,
    reg: bool,
    span: Option<Span>,
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Constant folding with Verilog unsigned semantics at 64 bits. Returns the
/// value and the self-determined width (`None` = unsized).
pub(crate) fn const_eval_with(
    e: &Expr,
    lookup: &dyn Fn(&str) -> Option<(u64, Option<u32>)>,
) -> Option<(u64, Option<u32>)> {
    use BinaryOp::*;
    let r = match &e.kind {
        ExprKind::Literal(l) => (l.value, l.width),
        ExprKind::Ident(n) => lookup(n)?,
        ExprKind::Unary(op, a) => {
            let (v, w) = const_eval_with(a, lookup)?;
            let m = mask(w.unwrap_or(64));
            match op {
                UnaryOp::Plus => (v, w),
                UnaryOp::Neg => (v.wrapping_neg() & m, w),
                UnaryOp::BitNot => (!v & m, w),
                UnaryOp::LogNot => ((v == 0) as u64, Some(1)),
                UnaryOp::RedAnd => ((v & m == m) as u64, Some(1)),
                UnaryOp::RedOr => ((v != 0) as u64, Some(1)),
                UnaryOp::RedXor => ((v.count_ones() & 1) as u64, Some(1)),
                UnaryOp::RedNand => ((v & m != m) as u64, Some(1)),
                UnaryOp::RedNor => ((v == 0) as u64, Some(1)),
                UnaryOp::RedXnor => ((v.count_ones() & 1 == 0) as u64, Some(1)),
            }
        }
        ExprKind::Binary(op, a, b) => {
            let (x, wa) = const_eval_with(a, lookup)?;
            let (y, wb) = const_eval_with(b, lookup)?;
            let w = match (wa, wb) {
                (Some(p), Some(q)) => Some(p.max(q)),
                _ => None,
            };
            let m = mask(w.unwrap_or(64));
            let bool1 = |c: bool| (c as u64, Some(1));
            match op {
                Add => (x.wrapping_add(y) & m, w),
                Sub => (x.wrapping_sub(y) & m, w),
                Mul => (x.wrapping_mul(y) & m, w),
                Div => (x.checked_div(y)?, w),
                Mod => (x.checked_rem(y)?, w),
                Pow => (x.checked_pow(u32::try_from(y).ok()?)? & m, w),
                Shl | AShl => (if y >= 64 { 0 } else { (x << y) & m }, wa),
                Shr | AShr => (if y >= 64 { 0 } else { x >> y }, wa),
                Lt => bool1(x < y),
                Le => bool1(x <= y),
                Gt => bool1(x > y),
                Ge => bool1(x >= y),
                Eq | CaseEq => bool1(x == y),
                Ne | CaseNe => bool1(x != y),
                BitAnd => (x & y, w),
                BitOr => (x | y, w),
                BitXor => (x ^ y, w),
                BitXnor => (!(x ^ y) & m, w),
                LogAnd => bool1(x != 0 && y != 0),
                LogOr => bool1(x != 0 || y != 0),
            }
        }
        ExprKind::Ternary(c, t, f) => {
            let (cv, _) = const_eval_with(c, lookup)?;
            if cv != 0 {
                const_eval_with(t, lookup)?
            } else {
                const_eval_with(f, lookup)?
            }
        }
        ExprKind::Concat(parts) => {
            let mut acc = 0u64;
            let mut total = 0u32;
            for p in parts {
                let (v, w) = const_eval_with(p, lookup)?;
                let w = w.unwrap_or(32);
                acc = if w >= 64 { v } else { (acc << w) | (v & mask(w)) };
                total += w;
            }
            (acc & mask(total), Some(total.min(64)))
        }
        ExprKind::Repeat(n, parts) => {
            let (count, _) = const_eval_with(n, lookup)?;
            let inner = Expr {
                kind: ExprKind::Concat(parts.clone()),
                span: e.span,
            };
            let (v, w) = const_eval_with(&inner, lookup)?;
            let w = w.unwrap_or(32);
            let mut acc = 0u64;
            for _ in 0..count.min(64) {
                acc = if w >= 64 { v } else { (acc << w) | v };
            }
            let total = (w as u64 * count).min(64) as u32;
            (acc & mask(total), Some(total))
        }
        ExprKind::Bit(..) | ExprKind::Part(..) => return None,
    };
    Some(r)
}

/// Parse a Verilog integer literal token.
pub(crate) fn parse_literal(text: &str, span: Span) -> PResult<Literal> {
    let cleaned: String = text.chars().filter(|c| *c != '_' && !c.is_whitespace()).collect();
    let Some(tick) = cleaned.find('\'') else {
        let value: u64 = cleaned
            .parse()
            .map_err(|_| FrontendError::WidthOverflow { span, width: 65 })?;
        return Ok(Literal {
            width: None,
            value,
            wildcard: 0,
            unknown: 0,
        });
    };
    let width = if tick == 0 {
        None
    } else {
        let w: u64 = cleaned[..tick]
            .parse()
            .map_err(|_| FrontendError::WidthOverflow { span, width: u64::MAX })?;
        if w == 0 {
            return Err(syntax(span, "zero-width literal"));
        }
        if w > MAX_WIDTH {
            return Err(FrontendError::WidthOverflow { span, width: w });
        }
        Some(w as u32)
    };
    let mut rest = &cleaned[tick + 1..];
    if rest.starts_with(['s', 'S']) {
        return Err(unsupported(span, "signed literal"));
    }
    let base = rest.as_bytes()[0].to_ascii_lowercase();
    rest = &rest[1..];
    let (value, wildcard, unknown, digit_bits) = if base == b'd' {
        if rest.chars().all(|c| matches!(c, 'x' | 'X')) {
            (0u128, 0u128, u128::MAX, 128)
        } else if rest.chars().all(|c| matches!(c, 'z' | 'Z' | '?')) {
            (0, u128::MAX, 0, 128)
        } else {
            let v: u128 = rest
                .parse()
                .map_err(|_| syntax(span, format!("invalid decimal digits `{rest}`")))?;
            (v, 0, 0, 0)
        }
    } else {
        let bits_per = match base {
            b'b' => 1,
            b'o' => 3,
            b'h' => 4,
            _ => unreachable!("lexer only admits b/o/d/h"),
        };
        let mut v = 0u128;
        let mut wild = 0u128;
        let mut unk = 0u128;
        let mut nbits = 0u32;
        for c in rest.chars() {
            let m = (1u128 << bits_per) - 1;
            let (dv, dw, du) = match c.to_ascii_lowercase() {
                'x' => (0, m, true),
                'z' | '?' => (0, m, false),
                c => {
                    let d = c
                        .to_digit(1 << bits_per)
                        .ok_or_else(|| syntax(span, format!("invalid digit `{c}` in literal")))?;
                    (d as u128, 0, false)
                }
            };
            nbits += bits_per;
            if nbits > 128 {
                return Err(FrontendError::WidthOverflow { span, width: nbits as u64 });
            }
            v = (v << bits_per) | dv;
            if du {
                unk = (unk << bits_per) | dw;
                wild <<= bits_per;
            } else {
                wild = (wild << bits_per) | dw;
                unk <<= bits_per;
            }
        }
        // x/z/? in the leading digit extends to the full width.
        let first = rest.chars().next().map(|c| c.to_ascii_lowercase());
        let w = width.unwrap_or(32).max(nbits.min(64));
        if nbits < w {
            let ext = ((1u128 << w) - 1) & !((1u128 << nbits) - 1);
            match first {
                Some('x') => unk |= ext,
                Some('z' | '?') => wild |= ext,
                _ => {}
            }
        }
        (v, wild, unk, nbits)
    };
    let _ = digit_bits;
    let lit_width = match width {
        Some(w) => w,
        None => {
            let needed = 128 - value.leading_zeros();
            if needed > 64 {
                return Err(FrontendError::WidthOverflow { span, width: needed as u64 });
            }
            32.max(needed)
        }
    };
    let m = mask(lit_width) as u128;
    Ok(Literal {
        width: width.or(if lit_width > 32 { Some(lit_width) } else { None }),
        value: (value & m) as u64,
        wildcard: (wildcard & m) as u64,
        unknown: (unknown & m) as u64,
    })
}

/// Check that every identifier resolves to a declared signal or parameter.
pub(crate) fn resolve_names(ast: &ModuleAst) -> PResult<()> {
    let is_sig = |n: &str| ast.is_signal(n);
    let is_known = |n: &str| ast.is_signal(n) || ast.param(n).is_some();
    let check_expr = |e: &Expr| -> PResult<()> {
        let mut err = None;
        e.for_each_ident(&mut |n, s| {
            if err.is_none() && !is_known(n) {
                err = Some(FrontendError::UnresolvedIdentifier {
                    span: s,
                    name: n.to_owned(),
                });
            }
        });
        err.map_or(Ok(()), Err)
    };
    let check_lvalue = |lv: &LValue| -> PResult<()> {
        for t in lv.targets() {
            if !is_sig(&t.name) {
                if ast.param(&t.name).is_some() {
                    return Err(syntax(t.span, format!("cannot assign to parameter `{}`", t.name)));
                }
                return Err(FrontendError::UnresolvedIdentifier {
                    span: t.span,
                    name: t.name.clone(),
                });
            }
        }
        let mut stack = vec![lv];
        while let Some(lv) = stack.pop() {
            match lv {
                LValue::Ident(_) => {}
                LValue::Bit { index, .. } => check_expr(index)?,
                LValue::Part { msb, lsb, .. } => {
                    check_expr(msb)?;
                    check_expr(lsb)?;
                }
                LValue::Concat { parts, .. } => stack.extend(parts.iter()),
            }
        }
        Ok(())
    };
    fn walk(
        s: &Stmt,
        ce: &dyn Fn(&Expr) -> PResult<()>,
        cl: &dyn Fn(&LValue) -> PResult<()>,
    ) -> PResult<()> {
        match &s.kind {
            StmtKind::Block { stmts, .. } => stmts.iter().try_for_each(|s| walk(s, ce, cl)),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                ce(cond)?;
                walk(then_branch, ce, cl)?;
                else_branch.as_ref().map_or(Ok(()), |e| walk(e, ce, cl))
            }
            StmtKind::Case { subject, arms, .. } => {
                ce(subject)?;
                for arm in arms {
                    arm.labels.iter().try_for_each(ce)?;
                    walk(&arm.body, ce, cl)?;
                }
                Ok(())
            }
            StmtKind::Assign { assignment, .. } => {
                cl(&assignment.lhs)?;
                ce(&assignment.rhs)
            }
            StmtKind::Null => Ok(()),
        }
    }
    for net in &ast.nets {
        if let Some(init) = &net.init {
            check_expr(init)?;
        }
    }
    for item in &ast.items {
        match item {
            Item::Assign(ca) => {
                for a in &ca.assigns {
                    check_lvalue(&a.lhs)?;
                    check_expr(&a.rhs)?;
                }
            }
            Item::Always(ab) => {
                if let Sensitivity::List(items) = &ab.sensitivity {
                    for si in items {
                        if !is_sig(&si.signal.name) {
                            return Err(FrontendError::UnresolvedIdentifier {
                                span: si.signal.span,
                                name: si.signal.name.clone(),
                            });
                        }
                    }
                }
                walk(&ab.body, &check_expr, &check_lvalue)?;
            }
            Item::Unsupported { .. } => {}
        }
    }
    Ok(())
}

/// Parse a standalone statement (used to check span fidelity).
pub fn parse_stmt_fragment(text: &str) -> Result<Stmt, FrontendError> {
    let mut p = Parser::new(text)?;
    let s = p.parse_stmt()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of statement"));
    }
    Ok(s)
}

/// Parse a standalone expression.
pub fn parse_expr_fragment(text: &str) -> Result<Expr, FrontendError> {
    let mut p = Parser::new(text)?;
    let e = p.parse_expr()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

pub fn parse_module(src: &SourceText) -> Result<ModuleAst, FrontendError> {
    let mut p = Parser::new(src.text())?;
    let ast = p.parse_module()?;
    resolve_names(&ast)?;
    Ok(ast)
}
