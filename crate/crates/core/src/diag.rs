//! Diagnostics for the kernel front end.
//!
//! Every stage that can reject source (lexing, parsing, validation) reports
//! through [`Diagnostic`]. A diagnostic renders as
//! `file:line:col: severity[code]: message`, e.g.
//!
//! ```text
//! wave.occa:14:5: error[V1]: barrier inside an inner loop nest
//! ```
//!
//! The file name is supplied at render time; positions are 1-based.

use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Pos {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("warning"),
            Severity::Error => f.write_str("error"),
        }
    }
}

/// One finding against a kernel source file.
///
/// `code` identifies the rule that fired: `V1`..`V6` for validation rules,
/// and short stable slugs (`lex`, `syntax`, `unknown-occa-keyword`, `type`,
/// `structure`) for the rest of the front end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub pos: Pos,
}

impl Diagnostic {
    pub fn error(code: &'static str, pos: Pos, message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Error, code, message: message.into(), pos }
    }

    pub fn warning(code: &'static str, pos: Pos, message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Warning, code, message: message.into(), pos }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Renders the canonical one-line form, prefixed with `file`.
    pub fn render(&self, file: &str) -> String {
        format!("{}:{}: {}[{}]: {}", file, self.pos, self.severity, self.code, self.message)
    }
}

/// True if any diagnostic in the slice is an error.
pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_canonical_line() {
        let d = Diagnostic::error("V1", Pos::new(14, 5), "barrier inside an inner loop nest");
        assert_eq!(d.render("wave.occa"), "wave.occa:14:5: error[V1]: barrier inside an inner loop nest");
    }

    #[test]
    fn warning_renders_severity() {
        let d = Diagnostic::warning("structure", Pos::new(1, 1), "empty kernel body");
        assert!(d.render("k.occa").contains("warning[structure]"));
    }
}
