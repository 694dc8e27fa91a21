//! Keyword expansion and translation-unit emission.
//!
//! [`expand`] rewrites a token stream for one backend. Replacement text is
//! spliced as tokens and rescanned, so nested keywords (`occaGlobalFor0` ->
//! `occaOuterFor0 occaInnerFor0` -> loops over `occaDims[...]`) resolve in
//! one call. The OpenMP id keywords expand to themselves as plain
//! identifiers, never as keywords, which is what terminates the rescan.
//!
//! On the loop backends (OpenMP, Serial) each kernel body opens with
//! injected declarations of the id variables the unwound loops drive, and
//! the emitted unit carries a preamble defining `occaPrivateClass`, the
//! register-emulation helper. OpenMP additionally places the work-group
//! parallelization pragma directly before the axis-0 group loop.

use crate::defines::DefineSet;
use crate::diag::{Diagnostic, Pos};
use crate::table::{expansion_table, Backend};
use crate::token::{render_tokens, Keyword, Token, TokenKind, TokenStream};
use std::collections::HashSet;

/// The parallel-for pragma emitted directly before the axis-0 group loop on
/// the OpenMP backend. The firstprivate list pins the per-thread id slots.
pub const OPENMP_PRAGMA: &str = "_Pragma(\"omp parallel for firstprivate(occaInnerId0, occaInnerId1, occaInnerId2, occaDims0, occaDims1, occaDims2)\")";

/// Declarations injected after each kernel's opening brace on the loop
/// backends: the unwound loops assign these, and the private-emulation hooks
/// let `occaPrivateClass` observe them.
pub const INNER_ID_DECLS: &str = "\
int occaInnerId0 = 0, occaInnerId1 = 0, occaInnerId2 = 0;
int occaOuterId0 = 0, occaOuterId1 = 0, occaOuterId2 = 0;
occaPrivateDims = occaDims;
occaPrivateId0 = &occaInnerId0;
occaPrivateId1 = &occaInnerId1;
occaPrivateId2 = &occaInnerId2;";

/// Self-contained support code for the loop backends. `occaPrivateClass`
/// gives every work-item of the running group its own slot, indexed by the
/// live inner ids; slots are picked out through thread-local hooks wired up
/// by [`INNER_ID_DECLS`].
pub const LOOP_PREAMBLE: &str = r#"#include <cmath>

static thread_local const int *occaPrivateDims = 0;
static thread_local const int *occaPrivateId0 = 0;
static thread_local const int *occaPrivateId1 = 0;
static thread_local const int *occaPrivateId2 = 0;

template <class T, int SZ>
class occaPrivateClass {
public:
  const int *dims;
  const int *id0;
  const int *id1;
  const int *id2;
  T *data;

  occaPrivateClass() :
    dims(occaPrivateDims), id0(occaPrivateId0), id1(occaPrivateId1), id2(occaPrivateId2) {
    data = new T[SZ * dims[0] * dims[1] * dims[2]]();
  }

  ~occaPrivateClass() { delete [] data; }

  int slot() const { return (*id0) + dims[0] * ((*id1) + dims[1] * (*id2)); }

  T & operator [] (int i) { return data[SZ * slot() + i]; }
  operator T & () { return data[SZ * slot()]; }

  occaPrivateClass & operator =  (const T &v) { data[SZ * slot()]  = v; return *this; }
  occaPrivateClass & operator += (const T &v) { data[SZ * slot()] += v; return *this; }
  occaPrivateClass & operator -= (const T &v) { data[SZ * slot()] -= v; return *this; }
  occaPrivateClass & operator *= (const T &v) { data[SZ * slot()] *= v; return *this; }
  occaPrivateClass & operator /= (const T &v) { data[SZ * slot()] /= v; return *this; }
};
"#;

/// One emitted translation unit: `defines`, then `preamble`, then the
/// expanded `kernel` text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedUnit {
    pub backend: Backend,
    pub preamble: String,
    pub defines: String,
    pub kernel: String,
}

impl EmittedUnit {
    /// Full file content, sections in order, separated by blank lines.
    pub fn source(&self) -> String {
        let mut out = String::new();
        for section in [&self.defines, &self.preamble, &self.kernel] {
            if section.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(section);
            if !section.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }

    /// Output file name for a kernel stem, e.g. `fd2d` -> `fd2d.cu`.
    pub fn file_name(&self, stem: &str) -> String {
        format!("{stem}{}", self.backend.suffix())
    }
}

/// Expands every keyword for `backend`. Input is expected to already be
/// lexed (and normally validated); the result renders with
/// [`render_tokens`].
pub fn expand(tokens: &TokenStream, backend: Backend) -> Result<Vec<Token>, Diagnostic> {
    let inject = kernel_body_braces(&tokens.tokens);
    let mut stream = Stream { pending: Vec::new(), src: &tokens.tokens, at: 0 };
    let mut out: Vec<Token> = Vec::new();

    while let Some((tok, src_idx)) = stream.next() {
        let kw = match tok.kind {
            TokenKind::Keyword(kw) => kw,
            _ => {
                let opens_kernel =
                    src_idx.map_or(false, |i| inject.contains(&i)) && backend.is_loop_backend();
                out.push(tok);
                if opens_kernel {
                    out.push(Token::synthetic(TokenKind::Directive, INNER_ID_DECLS));
                }
                continue;
            }
        };
        match action(kw, backend) {
            Action::PassIdent => {
                out.push(Token::synthetic(TokenKind::Ident, kw.as_str()));
            }
            Action::Erase => {}
            Action::Raw(text) => {
                out.push(Token::synthetic(TokenKind::Raw, text));
            }
            Action::Tokens(template) => {
                stream.push_tokens(template_tokens(template));
            }
            Action::PragmaLoop(template) => {
                out.push(Token::synthetic(TokenKind::Directive, OPENMP_PRAGMA));
                stream.push_tokens(template_tokens(template));
            }
            Action::Barrier => {
                expand_barrier(&mut stream, backend, &mut out, tok.pos)?;
            }
            Action::Private { array } => {
                expand_private(&mut stream, backend, &mut out, tok.pos, array)?;
            }
        }
    }
    Ok(out)
}

/// Emits one translation unit for `backend`. `defines` become `#define`
/// directives; they are informational in the emitted text since the lexer
/// already substituted them.
pub fn emit_kernel_unit(
    tokens: &TokenStream,
    backend: Backend,
    defines: &DefineSet,
) -> Result<EmittedUnit, Diagnostic> {
    let expanded = expand(tokens, backend)?;
    let mut define_text = String::new();
    for (name, value) in defines.iter() {
        define_text.push_str(&format!("#define {name} {value}\n"));
    }
    let preamble = if backend.is_loop_backend() { LOOP_PREAMBLE.to_string() } else { String::new() };
    Ok(EmittedUnit { backend, preamble, defines: define_text, kernel: render_tokens(&expanded) })
}

/// Table-keyword lexemes still present in emitted text. Empty for a correct
/// expansion; on the loop backends the id names that survive as plain
/// variables are permitted.
pub fn residual_table_keywords(text: &str, backend: Backend) -> Vec<&'static str> {
    let permitted: &[&str] = if backend.is_loop_backend() {
        &["occaInnerId0", "occaInnerId1", "occaInnerId2", "occaOuterId0", "occaOuterId1", "occaOuterId2"]
    } else {
        &[]
    };
    let mut found = Vec::new();
    for word in text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
    {
        if let Some(kw) = Keyword::from_str(word) {
            if !permitted.contains(&word) && !found.contains(&kw.as_str()) {
                found.push(kw.as_str());
            }
        }
    }
    found
}

enum Action {
    /// The keyword survives as a plain identifier (OpenMP/Serial ids).
    PassIdent,
    Erase,
    /// Atomic native text, spliced inline without rescanning.
    Raw(&'static str),
    /// Template text tokenized and rescanned, so nested keywords expand.
    Tokens(&'static str),
    /// OpenMP `occaOuterFor0`: pragma directive, then the loop template.
    PragmaLoop(&'static str),
    Barrier,
    Private { array: bool },
}

fn action(kw: Keyword, backend: Backend) -> Action {
    use Keyword::*;
    let cell = expansion_table(backend).cell(kw);
    match kw {
        Barrier => Action::Barrier,
        Private => Action::Private { array: false },
        PrivateArray => Action::Private { array: true },
        InnerId0 | InnerId1 | InnerId2 | OuterId0 | OuterId1 | OuterId2
            if backend.is_loop_backend() =>
        {
            Action::PassIdent
        }
        OuterFor0 if backend == Backend::OpenMp => Action::PragmaLoop(cell),
        // Signature plumbing keeps its exact table spacing.
        KernelInfoArg | FunctionInfoArg | FunctionInfo => Action::Raw(cell),
        _ if cell.is_empty() => Action::Erase,
        // Native text the dialect lexer has no tokens for stays atomic.
        _ if cell.contains('.') || cell.contains('"') || cell.contains("__attribute__") => {
            Action::Raw(cell)
        }
        _ => Action::Tokens(cell),
    }
}

fn expand_barrier(
    stream: &mut Stream,
    backend: Backend,
    out: &mut Vec<Token>,
    pos: Pos,
) -> Result<(), Diagnostic> {
    let malformed = |what: &str| {
        Diagnostic::error("syntax", pos, format!("malformed occaBarrier: expected {what}"))
    };
    match stream.next() {
        Some((t, _)) if t.is_punct("(") => {}
        _ => return Err(malformed("\"(\"")),
    }
    let fence = match stream.next() {
        Some((t, _)) if t.is_keyword(Keyword::LocalMemFence) => Keyword::LocalMemFence,
        Some((t, _)) if t.is_keyword(Keyword::GlobalMemFence) => Keyword::GlobalMemFence,
        _ => return Err(malformed("a memory fence keyword")),
    };
    match stream.next() {
        Some((t, _)) if t.is_punct(")") => {}
        _ => return Err(malformed("\")\"")),
    }
    match backend {
        Backend::OpenMp | Backend::Serial => {
            // Barriers compile away; the split into separate inner nests is
            // already the synchronization. Swallow the statement's `;`.
            if stream.peek_is_punct(";") {
                stream.next();
            }
        }
        Backend::OpenCl => {
            out.push(Token::synthetic(TokenKind::Ident, "barrier"));
            out.push(Token::synthetic(TokenKind::Punct, "("));
            out.push(Token::synthetic(
                TokenKind::Ident,
                expansion_table(backend).cell(fence),
            ));
            out.push(Token::synthetic(TokenKind::Punct, ")"));
        }
        Backend::Cuda => {
            out.push(Token::synthetic(TokenKind::Raw, "__syncthreads()"));
        }
    }
    Ok(())
}

fn expand_private(
    stream: &mut Stream,
    backend: Backend,
    out: &mut Vec<Token>,
    pos: Pos,
    array: bool,
) -> Result<(), Diagnostic> {
    let which = if array { "occaPrivateArray" } else { "occaPrivate" };
    let malformed = |what: &str| {
        Diagnostic::error("syntax", pos, format!("malformed {which}: expected {what}"))
    };
    match stream.next() {
        Some((t, _)) if t.is_punct("(") => {}
        _ => return Err(malformed("\"(\"")),
    }
    let ty = match stream.next() {
        Some((t, _)) if t.kind == TokenKind::Ident => t.lexeme,
        _ => return Err(malformed("a type")),
    };
    match stream.next() {
        Some((t, _)) if t.is_punct(",") => {}
        _ => return Err(malformed("\",\"")),
    }
    let name = match stream.next() {
        Some((t, _)) if t.kind == TokenKind::Ident => t.lexeme,
        _ => return Err(malformed("a name")),
    };
    let elems = if array {
        match stream.next() {
            Some((t, _)) if t.is_punct(",") => {}
            _ => return Err(malformed("\",\"")),
        }
        match stream.next() {
            Some((t, _)) if t.kind == TokenKind::Int => t.lexeme,
            _ => return Err(malformed("a literal length")),
        }
    } else {
        "1".to_string()
    };
    match stream.next() {
        Some((t, _)) if t.is_punct(")") => {}
        _ => return Err(malformed("\")\"")),
    }

    if backend.is_loop_backend() {
        out.push(Token::synthetic(
            TokenKind::Raw,
            format!("occaPrivateClass<{ty},{elems}> {name}"),
        ));
    } else {
        out.push(Token::synthetic(TokenKind::Ident, ty));
        out.push(Token::synthetic(TokenKind::Ident, name));
        if array {
            out.push(Token::synthetic(TokenKind::Punct, "["));
            out.push(Token::synthetic(TokenKind::Int, elems));
            out.push(Token::synthetic(TokenKind::Punct, "]"));
        }
    }
    Ok(())
}

/// Token source that interleaves rescanned replacement tokens with the
/// original stream. Replacements are processed before further source tokens.
struct Stream<'a> {
    pending: Vec<Token>,
    src: &'a [Token],
    at: usize,
}

impl Stream<'_> {
    fn next(&mut self) -> Option<(Token, Option<usize>)> {
        if let Some(t) = self.pending.pop() {
            return Some((t, None));
        }
        if self.at < self.src.len() {
            let i = self.at;
            self.at += 1;
            return Some((self.src[i].clone(), Some(i)));
        }
        None
    }

    fn peek_is_punct(&self, p: &str) -> bool {
        if let Some(t) = self.pending.last() {
            return t.is_punct(p);
        }
        self.src.get(self.at).map_or(false, |t| t.is_punct(p))
    }

    fn push_tokens(&mut self, tokens: Vec<Token>) {
        self.pending.extend(tokens.into_iter().rev());
    }
}

/// Source indices of each kernel's body-opening `{`.
fn kernel_body_braces(toks: &[Token]) -> HashSet<usize> {
    let mut out = HashSet::new();
    let mut depth: usize = 0;
    for (i, t) in toks.iter().enumerate() {
        if depth == 0 && t.is_keyword(Keyword::Kernel) {
            if let Some(j) = toks[i..].iter().position(|t| t.is_punct("{")) {
                out.insert(i + j);
            }
        }
        if t.is_punct("{") {
            depth += 1;
        } else if t.is_punct("}") {
            depth = depth.saturating_sub(1);
        }
    }
    out
}

/// Lexes replacement-template text. Identifiers are classified against the
/// keyword set so spliced templates rescan; the character set is exactly
/// what the tables use.
fn template_tokens(text: &str) -> Vec<Token> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\n' | b'\t' => i += 1,
            b'(' | b')' | b'[' | b']' | b'{' | b'}' | b',' | b';' => {
                out.push(Token::synthetic(TokenKind::Punct, (b as char).to_string()));
                i += 1;
            }
            b'+' if bytes.get(i + 1) == Some(&b'+') => {
                out.push(Token::synthetic(TokenKind::Op, "++"));
                i += 2;
            }
            b'+' | b'*' | b'<' | b'=' | b'-' => {
                out.push(Token::synthetic(TokenKind::Op, (b as char).to_string()));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                out.push(Token::synthetic(TokenKind::Int, &text[start..i]));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                match Keyword::from_str(word) {
                    Some(kw) => out.push(Token::synthetic(TokenKind::Keyword(kw), word)),
                    None => out.push(Token::synthetic(TokenKind::Ident, word)),
                }
            }
            other => unreachable!("template character {:?} in {text:?}", other as char),
        }
    }
    out
}
