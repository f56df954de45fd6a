use std::fmt;

use serde::{Deserialize, Serialize};

use super::FrontendError;

/// Half-open byte range `[start, end)` into a [`SourceText`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    /// Smallest span covering both.
    pub fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Rewrite CRLF and lone CR line endings to LF. Every other byte is kept.
pub fn normalize_source(raw: &str) -> String {
    if !raw.contains('\r') {
        return raw.to_owned();
    }
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\r' {
            if chars.peek() == Some(&'\n') {
                chars.next();
            }
            out.push('\n');
        } else {
            out.push(c);
        }
    }
    out
}

/// Normalized module text plus a label for diagnostics.
///
/// Every [`Span`] produced by the toolkit indexes into `text()` of the
/// `SourceText` it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceText {
    text: String,
    origin: String,
}

impl SourceText {
    pub fn new(raw: &str, origin: impl Into<String>) -> Self {
        SourceText {
            text: normalize_source(raw),
            origin: origin.into(),
        }
    }

    pub fn from_bytes(bytes: &[u8], origin: impl Into<String>) -> Result<Self, FrontendError> {
        match std::str::from_utf8(bytes) {
            Ok(s) => Ok(SourceText::new(s, origin)),
            Err(e) => Err(FrontendError::InvalidEncoding {
                offset: e.valid_up_to(),
            }),
        }
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, FrontendError> {
        let bytes = std::fs::read(path).map_err(|e| FrontendError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        SourceText::from_bytes(&bytes, path.display().to_string())
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn slice(&self, span: Span) -> &str {
        &self.text[span.start..span.end]
    }

    /// 1-based line and column of a byte offset.
    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.text.len());
        let before = &self.text.as_bytes()[..offset];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        (line, offset - line_start + 1)
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crlf_and_cr_become_lf() {
        assert_eq!(normalize_source("a\r\nb"), "a\nb");
        assert_eq!(normalize_source("a\nb"), "a\nb");
        assert_eq!(normalize_source("a\rb"), "a\nb");
        assert_eq!(normalize_source("a\r\r\nb\r"), "a\n\nb\n");
    }

    #[test]
    fn invalid_utf8_is_reported() {
        let err = SourceText::from_bytes(&[b'a', 0xff, b'b'], "x.v").unwrap_err();
        assert!(matches!(err, FrontendError::InvalidEncoding { offset: 1 }));
    }

    #[test]
    fn line_col_is_one_based() {
        let s = SourceText::new("ab\ncd", "t");
        assert_eq!(s.line_col(0), (1, 1));
        assert_eq!(s.line_col(4), (2, 2));
    }

    proptest::proptest! {
        #[test]
        fn normalization_is_idempotent(raw in "[a\\r\\n b]{0,40}") {
            let once = normalize_source(&raw);
            proptest::prop_assert_eq!(normalize_source(&once), once.clone());
            proptest::prop_assert!(!once.contains('\r'));
        }
    }
}
