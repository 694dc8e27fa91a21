//! Lexer for `.occa` kernel source.
//!
//! One pass over the bytes: strips `//` and `/* */` comments, classifies
//! every `occa`-prefixed word against the keyword set, and substitutes
//! compile-time defines as it goes. Substitution is single-pass by design;
//! a define value is never looked up again, so expansion cannot loop.
//!
//! Number literals are decimal. A literal with a `.` or exponent is a
//! `double`; a trailing `f`/`F` makes it a `float`; everything else is an
//! `int`.

use crate::defines::{DefineSet, DefineValue};
use crate::diag::{Diagnostic, Pos};
use crate::token::{Keyword, Token, TokenKind, TokenStream};

struct Lexer<'a> {
    src: &'a [u8],
    at: usize,
    line: u32,
    col: u32,
    defines: &'a DefineSet,
    out: Vec<Token>,
    diags: Vec<Diagnostic>,
}

pub fn tokenize(source: &str, defines: &DefineSet) -> Result<TokenStream, Vec<Diagnostic>> {
    let mut lx = Lexer {
        src: source.as_bytes(),
        at: 0,
        line: 1,
        col: 1,
        defines,
        out: Vec::new(),
        diags: Vec::new(),
    };
    lx.run();
    if lx.diags.is_empty() {
        Ok(TokenStream::new(lx.out))
    } else {
        Err(lx.diags)
    }
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.at + 1).copied()
    }

    fn bump(&mut self) -> u8 {
        let b = self.src[self.at];
        self.at += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        b
    }

    fn error(&mut self, code: &'static str, pos: Pos, msg: String) {
        self.diags.push(Diagnostic::error(code, pos, msg));
    }

    fn run(&mut self) {
        while let Some(b) = self.peek() {
            let pos = self.pos();
            match b {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b'/' if self.peek2() == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                b'/' if self.peek2() == Some(b'*') => {
                    self.bump();
                    self.bump();
                    let mut closed = false;
                    while let Some(c) = self.peek() {
                        if c == b'*' && self.peek2() == Some(b'/') {
                            self.bump();
                            self.bump();
                            closed = true;
                            break;
                        }
                        self.bump();
                    }
                    if !closed {
                        self.error("lex", pos, "unterminated block comment".to_string());
                    }
                }
                b'0'..=b'9' => self.number(),
                b'.' if matches!(self.peek2(), Some(b'0'..=b'9')) => self.number(),
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => self.word(),
                b'(' | b')' | b'[' | b']' | b'{' | b'}' | b',' | b';' => {
                    self.bump();
                    self.out.push(Token::new(TokenKind::Punct, (b as char).to_string(), pos));
                }
                b'+' | b'-' | b'*' | b'/' | b'%' | b'<' | b'>' | b'=' | b'!' | b'&' | b'|' => {
                    self.operator();
                }
                other => {
                    self.bump();
                    self.error("lex", pos, format!("unexpected character {:?}", other as char));
                }
            }
        }
    }

    fn operator(&mut self) {
        let pos = self.pos();
        let a = self.bump();
        let b = self.peek();
        let two = |second: u8| -> Option<&'static str> {
            match (a, second) {
                (b'=', b'=') => Some("=="),
                (b'!', b'=') => Some("!="),
                (b'<', b'=') => Some("<="),
                (b'>', b'=') => Some(">="),
                (b'&', b'&') => Some("&&"),
                (b'|', b'|') => Some("||"),
                (b'+', b'+') => Some("++"),
                (b'-', b'-') => Some("--"),
                (b'+', b'=') => Some("+="),
                (b'-', b'=') => Some("-="),
                (b'*', b'=') => Some("*="),
                (b'/', b'=') => Some("/="),
                (b'%', b'=') => Some("%="),
                _ => None,
            }
        };
        if let Some(second) = b {
            if let Some(lex) = two(second) {
                self.bump();
                self.out.push(Token::new(TokenKind::Op, lex, pos));
                return;
            }
        }
        match a {
            b'&' | b'|' => {
                self.error("lex", pos, format!("unexpected character {:?}", a as char));
            }
            _ => self.out.push(Token::new(TokenKind::Op, (a as char).to_string(), pos)),
        }
    }

    fn number(&mut self) {
        let pos = self.pos();
        let start = self.at;
        let mut saw_dot = false;
        let mut saw_exp = false;
        while let Some(c) = self.peek() {
            match c {
                b'0'..=b'9' => {
                    self.bump();
                }
                b'.' if !saw_dot && !saw_exp => {
                    saw_dot = true;
                    self.bump();
                }
                b'e' | b'E' if !saw_exp => {
                    saw_exp = true;
                    self.bump();
                    if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                        self.bump();
                    }
                }
                _ => break,
            }
        }
        let mut is_f32 = false;
        if matches!(self.peek(), Some(b'f') | Some(b'F')) {
            is_f32 = true;
            self.bump();
        }
        let lexeme = std::str::from_utf8(&self.src[start..self.at]).unwrap().to_string();
        let kind = if is_f32 {
            TokenKind::F32
        } else if saw_dot || saw_exp {
            TokenKind::Float
        } else {
            if lexeme.parse::<i64>().is_err() {
                self.error("lex", pos, format!("integer literal {lexeme} is out of range"));
                return;
            }
            TokenKind::Int
        };
        if matches!(kind, TokenKind::Float | TokenKind::F32) {
            let numeric = lexeme.trim_end_matches(['f', 'F']);
            if numeric.parse::<f64>().is_err() {
                self.error("lex", pos, format!("malformed number {lexeme}"));
                return;
            }
        }
        self.out.push(Token::new(kind, lexeme, pos));
    }

    fn word(&mut self) {
        let pos = self.pos();
        let start = self.at;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.bump();
            } else {
                break;
            }
        }
        let word = std::str::from_utf8(&self.src[start..self.at]).unwrap();

        if let Some(value) = self.defines.get(word) {
            self.substitute(value.clone(), pos);
            return;
        }
        if let Some(kw) = Keyword::from_str(word) {
            self.out.push(Token::new(TokenKind::Keyword(kw), word, pos));
            return;
        }
        if word.starts_with("occa") {
            self.error("unknown-occa-keyword", pos, format!("unknown occa keyword {word:?}"));
            return;
        }
        self.out.push(Token::new(TokenKind::Ident, word, pos));
    }

    fn substitute(&mut self, value: DefineValue, pos: Pos) {
        match value {
            DefineValue::Int(v) => {
                if v < 0 {
                    self.out.push(Token::new(TokenKind::Op, "-", pos));
                }
                let mut lexeme = v.to_string();
                if v < 0 {
                    lexeme.remove(0);
                }
                self.out.push(Token::new(TokenKind::Int, lexeme, pos));
            }
            DefineValue::Float(v) => {
                if v.is_sign_negative() {
                    self.out.push(Token::new(TokenKind::Op, "-", pos));
                }
                let lexeme = format!("{:?}", v.abs());
                self.out.push(Token::new(TokenKind::Float, lexeme, pos));
            }
            // Substituted identifiers are not looked up again: single pass.
            DefineValue::Ident(name) => match Keyword::from_str(&name) {
                Some(kw) => self.out.push(Token::new(TokenKind::Keyword(kw), name, pos)),
                None => self.out.push(Token::new(TokenKind::Ident, name, pos)),
            },
        }
    }
}
