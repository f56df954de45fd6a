//! Lexing, parsing and subset checking for single-module Verilog sources.

mod ast;
mod lexer;
mod parser;
mod source;
mod subset;

pub use ast::*;
pub use lexer::{lex, Lexed, TokKind, Token};
pub use parser::{parse_expr_fragment, parse_module, parse_stmt_fragment};
pub use source::{normalize_source, SourceText, Span};
pub use subset::{always_role, supported_subset_check, AlwaysRole, AsyncReset};

pub(crate) use parser::const_eval_with;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("source is not valid UTF-8 (first bad byte at offset {offset})")]
    InvalidEncoding { offset: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{message}")]
    Syntax { span: Span, message: String },
    #[error("unsupported construct: {construct}")]
    Unsupported { span: Span, construct: String },
    #[error("unresolved identifier `{name}`")]
    UnresolvedIdentifier { span: Span, name: String },
    #[error("width {width} exceeds the 64-bit limit")]
    WidthOverflow { span: Span, width: u64 },
    #[error("more than one module definition")]
    MultipleModules { span: Span },
}

impl FrontendError {
    /// Stable diagnostic code.
    pub fn code(&self) -> &'static str {
        match self {
            FrontendError::InvalidEncoding { .. } | FrontendError::Io { .. } => "E000",
            FrontendError::Syntax { .. } => "E001",
            FrontendError::Unsupported { .. } => "E002",
            FrontendError::UnresolvedIdentifier { .. } => "E003",
            FrontendError::WidthOverflow { .. } => "E004",
            FrontendError::MultipleModules { .. } => "E005",
        }
    }

    pub fn span(&self) -> Span {
        match self {
            FrontendError::InvalidEncoding { offset } => Span::new(*offset, *offset),
            FrontendError::Io { .. } => Span::default(),
            FrontendError::Syntax { span, .. }
            | FrontendError::Unsupported { span, .. }
            | FrontendError::UnresolvedIdentifier { span, .. }
            | FrontendError::WidthOverflow { span, .. }
            | FrontendError::MultipleModules { span } => *span,
        }
    }

    /// `origin:line:col: code: message`
    pub fn render(&self, src: &SourceText) -> String {
        let (line, col) = src.line_col(self.span().start);
        format!("{}:{}:{}: {}: {}", src.origin(), line, col, self.code(), self)
    }
}
