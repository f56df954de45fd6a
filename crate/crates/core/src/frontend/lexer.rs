//! Tokenizer for the Verilog subset. Comments and attributes are trivia:
//! they are dropped from the token stream but their positions are kept.

use super::{FrontendError, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    /// `$display` and friends.
    SysIdent,
    Sym,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub span: Span,
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub trivia: Vec<Span>,
}

// Longest first.
const SYMBOLS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "<<", ">>", "==", "!=", "<=", ">=", "&&", "||", "~&", "~|", "~^",
    "^~", "**", "+:", "-:", "->", "(", ")", "[", "]", "{", "}", ";", ",", ":", ".", "#", "@", "=",
    "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "?",
];

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

pub fn lex(text: &str) -> Result<Lexed, FrontendError> {
    let bytes = text.as_bytes();
    let mut out = Lexed::default();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            out.trivia.push(Span::new(start, i));
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let close = text[i + 2..].find("*/").ok_or_else(|| FrontendError::Syntax {
                span: Span::new(start, start + 2),
                message: "unterminated block comment".into(),
            })?;
            i = i + 2 + close + 2;
            out.trivia.push(Span::new(start, i));
            continue;
        }
        if b == b'(' && bytes.get(i + 1) == Some(&b'*') {
            // `(*)` inside `@(*)` is not an attribute.
            let mut j = i + 2;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if bytes.get(j) != Some(&b')') {
                let close = text[i + 2..].find("*)").ok_or_else(|| FrontendError::Syntax {
                    span: Span::new(start, start + 2),
                    message: "unterminated attribute".into(),
                })?;
                i = i + 2 + close + 2;
                out.trivia.push(Span::new(start, i));
                continue;
            }
        }
        if b == b'`' {
            let mut j = i + 1;
            while j < bytes.len() && is_ident_char(bytes[j]) {
                j += 1;
            }
            let directive = &text[i + 1..j];
            if directive == "timescale" {
                while j < bytes.len() && bytes[j] != b'\n' {
                    j += 1;
                }
                out.trivia.push(Span::new(start, j));
                i = j;
                continue;
            }
            return Err(FrontendError::Unsupported {
                span: Span::new(start, j),
                construct: format!("preprocessor directive `{directive}"),
            });
        }
        if b == b'\\' {
            let mut j = i;
            while j < bytes.len() && !bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            return Err(FrontendError::Unsupported {
                span: Span::new(start, j),
                construct: "escaped identifier".into(),
            });
        }
        if b == b'$' {
            i += 1;
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            out.tokens.push(Token {
                kind: TokKind::SysIdent,
                span: Span::new(start, i),
            });
            continue;
        }
        if is_ident_start(b) {
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            out.tokens.push(Token {
                kind: TokKind::Ident,
                span: Span::new(start, i),
            });
            continue;
        }
        if b.is_ascii_digit() || b == b'\'' {
            i = lex_number(text, i)?;
            out.tokens.push(Token {
                kind: TokKind::Number,
                span: Span::new(start, i),
            });
            continue;
        }
        if b.is_ascii() {
            if let Some(sym) = SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
                i += sym.len();
                out.tokens.push(Token {
                    kind: TokKind::Sym,
                    span: Span::new(start, i),
                });
                continue;
            }
        }
        let ch_len = text[i..].chars().next().map_or(1, char::len_utf8);
        return Err(FrontendError::Syntax {
            span: Span::new(start, i + ch_len),
            message: format!("unexpected character {:?}", &text[i..i + ch_len]),
        });
    }
    out.tokens.push(Token {
        kind: TokKind::Eof,
        span: Span::new(bytes.len(), bytes.len()),
    });
    Ok(out)
}

/// Scan `[size] 'base digits` or a plain decimal, returning the end offset.
fn lex_number(text: &str, start: usize) -> Result<usize, FrontendError> {
    let bytes = text.as_bytes();
    let mut i = start;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    let mut j = i;
    while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
        j += 1;
    }
    if bytes.get(j) != Some(&b'\'') {
        return Ok(i);
    }
    j += 1;
    if matches!(bytes.get(j), Some(b's' | b'S')) {
        j += 1;
    }
    match bytes.get(j) {
        Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H') => j += 1,
        _ => {
            return Err(FrontendError::Syntax {
                span: Span::new(start, (j + 1).min(bytes.len())),
                message: "malformed based literal".into(),
            })
        }
    }
    while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
        j += 1;
    }
    let digits_start = j;
    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'?') {
        j += 1;
    }
    if j == digits_start {
        return Err(FrontendError::Syntax {
            span: Span::new(start, j),
            message: "based literal without digits".into(),
        });
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        let lexed = lex(src).unwrap();
        lexed
            .tokens
            .iter()
            .filter(|t| t.kind != TokKind::Eof)
            .map(|t| src[t.span.start..t.span.end].to_string())
            .collect()
    }

    #[test]
    fn splits_operators_longest_first() {
        assert_eq!(texts("a<=b<<2"), ["a", "<=", "b", "<<", "2"]);
        assert_eq!(texts("x !== y"), ["x", "!==", "y"]);
    }

    #[test]
    fn star_sensitivity_is_not_an_attribute() {
        assert_eq!(texts("@(*)"), ["@", "(", "*", ")"]);
        assert_eq!(texts("@( * )"), ["@", "(", "*", ")"]);
        let lexed = lex("(* keep *) wire a;").unwrap();
        assert_eq!(lexed.trivia.len(), 1);
    }

    #[test]
    fn based_literals_are_single_tokens() {
        assert_eq!(texts("4'b10?1 + 8 'hFF + 'd3"), ["4'b10?1", "+", "8 'hFF", "+", "'d3"]);
    }

    #[test]
    fn comments_are_trivia() {
        let lexed = lex("a // c\n/* d */ b").unwrap();
        assert_eq!(lexed.tokens.len(), 3);
        assert_eq!(lexed.trivia, vec![Span::new(2, 6), Span::new(7, 14)]);
    }

    #[test]
    fn define_is_rejected() {
        let err = lex("`define W 4").unwrap_err();
        assert!(matches!(err, FrontendError::Unsupported { .. }));
    }
}
