//! Token model for the kernel dialect.
//!
//! The lexer produces a flat [`TokenStream`]; every `occa`-prefixed word is
//! classified as a [`Keyword`] at lex time, so later stages never match on
//! raw strings. [`render_tokens`] reconstructs compilable source text and is
//! the single printer used by the emitters, which keeps
//! `tokenize(render(ts))` lossless.

use crate::diag::Pos;
use std::fmt;

/// Backend-portability keywords. One variant per table row; the `0/1/2`
/// suffix is the axis (0 = fastest varying).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Keyword {
    InnerId0,
    InnerId1,
    InnerId2,
    OuterId0,
    OuterId1,
    OuterId2,
    GlobalId0,
    GlobalId1,
    GlobalId2,
    InnerDim0,
    InnerDim1,
    InnerDim2,
    OuterDim0,
    OuterDim1,
    OuterDim2,
    GlobalDim0,
    GlobalDim1,
    GlobalDim2,
    InnerFor0,
    InnerFor1,
    InnerFor2,
    InnerFor,
    OuterFor0,
    OuterFor1,
    OuterFor2,
    GlobalFor0,
    GlobalFor1,
    GlobalFor2,
    Shared,
    Pointer,
    Constant,
    Variable,
    Restrict,
    Volatile,
    Const,
    Aligned,
    KernelInfoArg,
    FunctionInfoArg,
    FunctionInfo,
    Kernel,
    Function,
    FunctionShared,
    InnerReturn,
    LocalMemFence,
    GlobalMemFence,
    Barrier,
    PrivateArray,
    Private,
    Cpu,
    Gpu,
    OpenMp,
    OpenCl,
    Cuda,
}

impl Keyword {
    /// Every keyword the lexer recognizes.
    pub const ALL: [Keyword; 53] = [
        Keyword::InnerId0,
        Keyword::InnerId1,
        Keyword::InnerId2,
        Keyword::OuterId0,
        Keyword::OuterId1,
        Keyword::OuterId2,
        Keyword::GlobalId0,
        Keyword::GlobalId1,
        Keyword::GlobalId2,
        Keyword::InnerDim0,
        Keyword::InnerDim1,
        Keyword::InnerDim2,
        Keyword::OuterDim0,
        Keyword::OuterDim1,
        Keyword::OuterDim2,
        Keyword::GlobalDim0,
        Keyword::GlobalDim1,
        Keyword::GlobalDim2,
        Keyword::InnerFor0,
        Keyword::InnerFor1,
        Keyword::InnerFor2,
        Keyword::InnerFor,
        Keyword::OuterFor0,
        Keyword::OuterFor1,
        Keyword::OuterFor2,
        Keyword::GlobalFor0,
        Keyword::GlobalFor1,
        Keyword::GlobalFor2,
        Keyword::Shared,
        Keyword::Pointer,
        Keyword::Constant,
        Keyword::Variable,
        Keyword::Restrict,
        Keyword::Volatile,
        Keyword::Const,
        Keyword::Aligned,
        Keyword::KernelInfoArg,
        Keyword::FunctionInfoArg,
        Keyword::FunctionInfo,
        Keyword::Kernel,
        Keyword::Function,
        Keyword::FunctionShared,
        Keyword::InnerReturn,
        Keyword::LocalMemFence,
        Keyword::GlobalMemFence,
        Keyword::Barrier,
        Keyword::PrivateArray,
        Keyword::Private,
        Keyword::Cpu,
        Keyword::Gpu,
        Keyword::OpenMp,
        Keyword::OpenCl,
        Keyword::Cuda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::InnerId0 => "occaInnerId0",
            Keyword::InnerId1 => "occaInnerId1",
            Keyword::InnerId2 => "occaInnerId2",
            Keyword::OuterId0 => "occaOuterId0",
            Keyword::OuterId1 => "occaOuterId1",
            Keyword::OuterId2 => "occaOuterId2",
            Keyword::GlobalId0 => "occaGlobalId0",
            Keyword::GlobalId1 => "occaGlobalId1",
            Keyword::GlobalId2 => "occaGlobalId2",
            Keyword::InnerDim0 => "occaInnerDim0",
            Keyword::InnerDim1 => "occaInnerDim1",
            Keyword::InnerDim2 => "occaInnerDim2",
            Keyword::OuterDim0 => "occaOuterDim0",
            Keyword::OuterDim1 => "occaOuterDim1",
            Keyword::OuterDim2 => "occaOuterDim2",
            Keyword::GlobalDim0 => "occaGlobalDim0",
            Keyword::GlobalDim1 => "occaGlobalDim1",
            Keyword::GlobalDim2 => "occaGlobalDim2",
            Keyword::InnerFor0 => "occaInnerFor0",
            Keyword::InnerFor1 => "occaInnerFor1",
            Keyword::InnerFor2 => "occaInnerFor2",
            Keyword::InnerFor => "occaInnerFor",
            Keyword::OuterFor0 => "occaOuterFor0",
            Keyword::OuterFor1 => "occaOuterFor1",
            Keyword::OuterFor2 => "occaOuterFor2",
            Keyword::GlobalFor0 => "occaGlobalFor0",
            Keyword::GlobalFor1 => "occaGlobalFor1",
            Keyword::GlobalFor2 => "occaGlobalFor2",
            Keyword::Shared => "occaShared",
            Keyword::Pointer => "occaPointer",
            Keyword::Constant => "occaConstant",
            Keyword::Variable => "occaVariable",
            Keyword::Restrict => "occaRestrict",
            Keyword::Volatile => "occaVolatile",
            Keyword::Const => "occaConst",
            Keyword::Aligned => "occaAligned",
            Keyword::KernelInfoArg => "occaKernelInfoArg",
            Keyword::FunctionInfoArg => "occaFunctionInfoArg",
            Keyword::FunctionInfo => "occaFunctionInfo",
            Keyword::Kernel => "occaKernel",
            Keyword::Function => "occaFunction",
            Keyword::FunctionShared => "occaFunctionShared",
            Keyword::InnerReturn => "occaInnerReturn",
            Keyword::LocalMemFence => "occaLocalMemFence",
            Keyword::GlobalMemFence => "occaGlobalMemFence",
            Keyword::Barrier => "occaBarrier",
            Keyword::PrivateArray => "occaPrivateArray",
            Keyword::Private => "occaPrivate",
            Keyword::Cpu => "occaCPU",
            Keyword::Gpu => "occaGPU",
            Keyword::OpenMp => "occaOpenMP",
            Keyword::OpenCl => "occaOpenCL",
            Keyword::Cuda => "occaCUDA",
        }
    }

    pub fn from_str(s: &str) -> Option<Keyword> {
        Keyword::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident,
    /// Decimal integer literal.
    Int,
    /// `double` literal (has a `.` or an exponent).
    Float,
    /// `float` literal (trailing `f`/`F`).
    F32,
    /// Single punctuation byte: `( ) [ ] { } , ;`.
    Punct,
    /// Operator lexeme, max-munched: `+ - * / % = == != <= >= < > && || ! ++ -- += -= *= /=`.
    Op,
    /// Verbatim inline text spliced in by expansion, e.g. `threadIdx.x`.
    /// Never produced by the lexer.
    Raw,
    /// Verbatim text that must sit on its own line (pragmas, injected
    /// declarations). Never produced by the lexer.
    Directive,
}

/// Where a token came from; expansion-introduced tokens are distinguishable
/// so structural checks can recover the original token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Source,
    Expansion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub pos: Pos,
    pub origin: Origin,
}

impl Token {
    pub fn new(kind: TokenKind, lexeme: impl Into<String>, pos: Pos) -> Token {
        Token { kind, lexeme: lexeme.into(), pos, origin: Origin::Source }
    }

    pub fn synthetic(kind: TokenKind, lexeme: impl Into<String>) -> Token {
        Token { kind, lexeme: lexeme.into(), pos: Pos::new(0, 0), origin: Origin::Expansion }
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.lexeme == p
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.lexeme == op
    }

    pub fn is_keyword(&self, kw: Keyword) -> bool {
        self.kind == TokenKind::Keyword(kw)
    }

    pub fn is_ident(&self, name: &str) -> bool {
        self.kind == TokenKind::Ident && self.lexeme == name
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn new(tokens: Vec<Token>) -> TokenStream {
        TokenStream { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Source text reconstruction; see [`render_tokens`].
    pub fn render(&self) -> String {
        render_tokens(&self.tokens)
    }
}

/// Prints tokens as compilable text.
///
/// Layout rules: tokens are space-separated, newline after `{`, `}` and any
/// statement-level `;` (not inside parentheses), two-space indentation per
/// brace depth. `(` and `[` bind to a preceding identifier (`f(x)`, `a[i]`)
/// and suppress the space after themselves; `)`/`]`/`,`/`;` bind left;
/// `++`/`--` bind left after an identifier (postfix) and right otherwise
/// (prefix); `!` binds right. `Directive` tokens are emitted verbatim on
/// their own line; `Raw` tokens flow inline.
pub fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    let mut depth: usize = 0;
    let mut parens: usize = 0;
    let mut at_line_start = true;
    // True when the previous token suppresses the following space.
    let mut glue_right = false;
    let mut prev_wordlike = false;

    for tok in tokens {
        let lex = tok.lexeme.as_str();

        if tok.kind == TokenKind::Directive {
            if !at_line_start {
                out.push('\n');
            }
            for line in lex.lines() {
                indent(&mut out, depth);
                out.push_str(line);
                out.push('\n');
            }
            at_line_start = true;
            glue_right = false;
            prev_wordlike = false;
            continue;
        }

        if lex == "}" {
            depth = depth.saturating_sub(1);
        }

        let incr_like = matches!(lex, "++" | "--");
        let glue_left = matches!(lex, ")" | "]" | "," | ";")
            || (incr_like && prev_wordlike)
            || (matches!(lex, "(" | "[") && prev_wordlike);

        if at_line_start {
            indent(&mut out, depth);
        } else if !glue_right && !glue_left {
            out.push(' ');
        }
        out.push_str(lex);
        at_line_start = false;

        match lex {
            "(" => parens += 1,
            ")" => parens = parens.saturating_sub(1),
            _ => {}
        }

        if lex == "{" || lex == "}" || (lex == ";" && parens == 0) {
            if lex == "{" {
                depth += 1;
            }
            out.push('\n');
            at_line_start = true;
        }

        glue_right = matches!(lex, "(" | "[" | "!") || (incr_like && !prev_wordlike);
        prev_wordlike = matches!(tok.kind, TokenKind::Ident | TokenKind::Keyword(_));
    }
    if !at_line_start {
        out.push('\n');
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(kind: TokenKind, lexeme: &str) -> Token {
        Token::new(kind, lexeme, Pos::new(1, 1))
    }

    #[test]
    fn keyword_round_trip() {
        for kw in Keyword::ALL {
            assert_eq!(Keyword::from_str(kw.as_str()), Some(kw));
        }
    }

    #[test]
    fn keyword_names_all_occa_prefixed() {
        for kw in Keyword::ALL {
            assert!(kw.as_str().starts_with("occa"), "{kw:?}");
        }
    }

    #[test]
    fn operators_are_spaced() {
        let toks = vec![
            tok(TokenKind::Ident, "a"),
            tok(TokenKind::Op, "*"),
            tok(TokenKind::Ident, "b"),
            tok(TokenKind::Op, "+"),
            tok(TokenKind::Int, "1"),
        ];
        assert_eq!(render_tokens(&toks), "a * b + 1\n");
    }

    #[test]
    fn loop_headers_stay_on_one_line() {
        let toks = vec![
            tok(TokenKind::Ident, "for"),
            tok(TokenKind::Punct, "("),
            tok(TokenKind::Ident, "k"),
            tok(TokenKind::Op, "="),
            tok(TokenKind::Int, "0"),
            tok(TokenKind::Punct, ";"),
            tok(TokenKind::Ident, "k"),
            tok(TokenKind::Op, "<"),
            tok(TokenKind::Int, "4"),
            tok(TokenKind::Punct, ";"),
            tok(TokenKind::Op, "++"),
            tok(TokenKind::Ident, "k"),
            tok(TokenKind::Punct, ")"),
        ];
        assert_eq!(render_tokens(&toks), "for(k = 0; k < 4; ++k)\n");
    }

    #[test]
    fn postfix_increment_binds_left() {
        let toks = vec![
            tok(TokenKind::Ident, "k"),
            tok(TokenKind::Op, "++"),
            tok(TokenKind::Punct, ";"),
        ];
        assert_eq!(render_tokens(&toks), "k++;\n");
    }

    #[test]
    fn calls_and_statements_lay_out() {
        let toks = vec![
            tok(TokenKind::Ident, "f"),
            tok(TokenKind::Punct, "("),
            tok(TokenKind::Ident, "a"),
            tok(TokenKind::Punct, ","),
            tok(TokenKind::Int, "3"),
            tok(TokenKind::Punct, ")"),
            tok(TokenKind::Punct, ";"),
        ];
        assert_eq!(render_tokens(&toks), "f(a, 3);\n");
    }

    #[test]
    fn index_binds_to_identifier() {
        let toks = vec![
            tok(TokenKind::Ident, "u"),
            tok(TokenKind::Punct, "["),
            tok(TokenKind::Ident, "id"),
            tok(TokenKind::Punct, "]"),
            tok(TokenKind::Op, "="),
            tok(TokenKind::Int, "0"),
            tok(TokenKind::Punct, ";"),
        ];
        assert_eq!(render_tokens(&toks), "u[id] = 0;\n");
    }

    #[test]
    fn braces_indent() {
        let toks = vec![
            tok(TokenKind::Punct, "{"),
            tok(TokenKind::Ident, "x"),
            tok(TokenKind::Op, "="),
            tok(TokenKind::Int, "1"),
            tok(TokenKind::Punct, ";"),
            tok(TokenKind::Punct, "}"),
        ];
        assert_eq!(render_tokens(&toks), "{\n  x = 1;\n}\n");
    }
}
