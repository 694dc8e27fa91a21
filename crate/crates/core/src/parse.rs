//! Recursive-descent parser.
//!
//! Grammar shape, not C: a file is a sequence of device functions
//! (`occaFunction`) and kernels (`occaKernel`). A kernel body is exactly one
//! chain of outer loops with strictly descending axes; statements are only
//! allowed inside the innermost outer loop. Structural rules that need file
//! order (definition before use, call shapes, intrinsic arities) are checked
//! here; placement rules V1..V6 live in `validate`.

use crate::ast::*;
use crate::diag::{Diagnostic, Pos};
use crate::token::{Keyword, Token, TokenKind, TokenStream};

pub const INTRINSICS: [(&str, usize); 5] =
    [("sqrt", 1), ("fabs", 1), ("exp", 1), ("min", 2), ("max", 2)];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.iter().any(|(n, _)| *n == name)
}

/// Parses a token stream into a [`KernelFile`].
///
/// On error every collected diagnostic is returned; recovery is per
/// top-level definition, so one bad kernel does not hide the next one.
pub fn parse_kernel(tokens: &TokenStream) -> Result<KernelFile, Vec<Diagnostic>> {
    let mut p = Parser { toks: &tokens.tokens, at: 0 };
    let mut file = KernelFile { helpers: Vec::new(), kernels: Vec::new() };
    let mut diags = Vec::new();
    let mut order: Vec<(bool, usize)> = Vec::new(); // (is_helper, index) in file order

    while p.peek().is_some() {
        let result = if p.peek_keyword(Keyword::Function) {
            p.helper_def().map(|h| {
                order.push((true, file.helpers.len()));
                file.helpers.push(h);
            })
        } else if p.peek_keyword(Keyword::Kernel) {
            p.kernel_def().map(|k| {
                order.push((false, file.kernels.len()));
                file.kernels.push(k);
            })
        } else {
            let t = p.peek().unwrap();
            Err(Diagnostic::error(
                "syntax",
                t.pos,
                format!("expected occaKernel or occaFunction, found {:?}", t.lexeme),
            ))
        };
        if let Err(d) = result {
            diags.push(d);
            p.recover_to_top_level();
        }
    }

    check_structure(&file, &order, &mut diags);
    if diags.is_empty() {
        Ok(file)
    } else {
        Err(diags)
    }
}

/// File-order checks: unique names, helpers defined before use, helper calls
/// carry occaFunctionInfo, intrinsic arities.
fn check_structure(file: &KernelFile, order: &[(bool, usize)], diags: &mut Vec<Diagnostic>) {
    let mut seen: Vec<&str> = Vec::new();
    let mut defined_helpers: Vec<&str> = Vec::new();

    for &(is_helper, idx) in order {
        let (name, params, body, pos): (&str, &[Param], &Block, Pos) = if is_helper {
            let h = &file.helpers[idx];
            (&h.name, &h.params, &h.body, h.pos)
        } else {
            let k = &file.kernels[idx];
            (&k.name, &k.params, &k.body, k.pos)
        };
        if seen.contains(&name) {
            diags.push(Diagnostic::error("structure", pos, format!("duplicate definition of {name:?}")));
        }
        seen.push(name);
        let param_names: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
        for w in 0..param_names.len() {
            if param_names[w + 1..].contains(&param_names[w]) {
                diags.push(Diagnostic::error(
                    "structure",
                    pos,
                    format!("duplicate parameter {:?} in {name:?}", param_names[w]),
                ));
            }
        }
        check_calls_in_block(body, &defined_helpers, diags);
        if is_helper {
            defined_helpers.push(name);
        }
    }
}

fn check_calls_in_block(block: &Block, defined: &[&str], diags: &mut Vec<Diagnostic>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Decl { init: Some(e), .. } => check_calls_in_expr(e, defined, diags),
            Stmt::Assign { value, target, .. } => {
                if let Target::Index { index, .. } = target {
                    check_calls_in_expr(index, defined, diags);
                }
                check_calls_in_expr(value, defined, diags);
            }
            Stmt::If { cond, then_block, else_block, .. } => {
                check_calls_in_expr(cond, defined, diags);
                check_calls_in_block(then_block, defined, diags);
                if let Some(b) = else_block {
                    check_calls_in_block(b, defined, diags);
                }
            }
            Stmt::For { init, cond, step, body, .. } => {
                check_calls_in_block(&Block { stmts: vec![(**init).clone()] }, defined, diags);
                check_calls_in_expr(cond, defined, diags);
                check_calls_in_block(&Block { stmts: vec![(**step).clone()] }, defined, diags);
                check_calls_in_block(body, defined, diags);
            }
            Stmt::InnerFor { body, .. } => check_calls_in_block(body, defined, diags),
            Stmt::Return { value, .. } => check_calls_in_expr(value, defined, diags),
            Stmt::ExprStmt { expr, .. } => check_calls_in_expr(expr, defined, diags),
            _ => {}
        }
    }
}

fn check_calls_in_expr(expr: &Expr, defined: &[&str], diags: &mut Vec<Diagnostic>) {
    match expr {
        Expr::Call { name, info_arg, args, pos } => {
            if let Some((_, arity)) = INTRINSICS.iter().find(|(n, _)| n == name) {
                if *info_arg {
                    diags.push(Diagnostic::error(
                        "structure",
                        *pos,
                        format!("intrinsic {name:?} does not take occaFunctionInfo"),
                    ));
                }
                if args.len() != *arity {
                    diags.push(Diagnostic::error(
                        "structure",
                        *pos,
                        format!("intrinsic {name:?} expects {arity} argument(s), found {}", args.len()),
                    ));
                }
            } else if !defined.contains(&name.as_str()) {
                diags.push(Diagnostic::error(
                    "structure",
                    *pos,
                    format!("function {name:?} is not defined at this point"),
                ));
            } else if !*info_arg {
                diags.push(Diagnostic::error(
                    "structure",
                    *pos,
                    format!("call to {name:?} must pass occaFunctionInfo as its first argument"),
                ));
            }
            for a in args {
                check_calls_in_expr(a, defined, diags);
            }
        }
        Expr::Unary { operand, .. } => check_calls_in_expr(operand, defined, diags),
        Expr::Binary { lhs, rhs, .. } => {
            check_calls_in_expr(lhs, defined, diags);
            check_calls_in_expr(rhs, defined, diags);
        }
        Expr::Index { index, .. } => check_calls_in_expr(index, defined, diags),
        _ => {}
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    at: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.at)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.toks.get(self.at + n)
    }

    fn peek_keyword(&self, kw: Keyword) -> bool {
        self.peek().map_or(false, |t| t.is_keyword(kw))
    }

    fn peek_punct(&self, p: &str) -> bool {
        self.peek().map_or(false, |t| t.is_punct(p))
    }

    fn bump(&mut self) -> &'a Token {
        let t = &self.toks[self.at];
        self.at += 1;
        t
    }

    fn eof_pos(&self) -> Pos {
        self.toks.last().map_or(Pos::new(1, 1), |t| t.pos)
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        let (pos, found) = match self.peek() {
            Some(t) => (t.pos, format!("found {:?}", t.lexeme)),
            None => (self.eof_pos(), "found end of input".to_string()),
        };
        Diagnostic::error("syntax", pos, format!("{}, {found}", msg.into()))
    }

    fn expect_punct(&mut self, p: &str) -> PResult<&'a Token> {
        if self.peek_punct(p) {
            Ok(self.bump())
        } else {
            Err(self.err(format!("expected {p:?}")))
        }
    }

    fn expect_keyword(&mut self, kw: Keyword) -> PResult<&'a Token> {
        if self.peek_keyword(kw) {
            Ok(self.bump())
        } else {
            Err(self.err(format!("expected {}", kw.as_str())))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<&'a Token> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => Ok(self.bump()),
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    /// After a failed top-level definition, skip to the next occaKernel /
    /// occaFunction at brace depth zero.
    fn recover_to_top_level(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            if depth == 0 && (t.is_keyword(Keyword::Kernel) || t.is_keyword(Keyword::Function)) {
                return;
            }
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                depth = depth.saturating_sub(1);
            }
            self.bump();
        }
    }

    fn scalar_type(&mut self) -> PResult<ScalarType> {
        match self.peek() {
            Some(t) if t.is_ident("int") => {
                self.bump();
                Ok(ScalarType::Int)
            }
            Some(t) if t.is_ident("float") => {
                self.bump();
                Ok(ScalarType::Float)
            }
            Some(t) if t.is_ident("double") => {
                self.bump();
                Ok(ScalarType::Double)
            }
            _ => Err(self.err("expected a scalar type (int, float, double)")),
        }
    }

    fn qualifier(&mut self) -> Option<Qual> {
        let q = match self.peek()?.kind {
            TokenKind::Keyword(Keyword::Shared) => Qual::Shared,
            TokenKind::Keyword(Keyword::Pointer) => Qual::Pointer,
            TokenKind::Keyword(Keyword::Constant) => Qual::Constant,
            TokenKind::Keyword(Keyword::Variable) => Qual::Variable,
            TokenKind::Keyword(Keyword::Restrict) => Qual::Restrict,
            TokenKind::Keyword(Keyword::Volatile) => Qual::Volatile,
            TokenKind::Keyword(Keyword::Const) => Qual::Const,
            TokenKind::Keyword(Keyword::Aligned) => Qual::Aligned,
            TokenKind::Keyword(Keyword::FunctionShared) => Qual::FunctionShared,
            TokenKind::Ident if self.peek().unwrap().lexeme == "const" => Qual::PlainConst,
            _ => return None,
        };
        self.bump();
        Some(q)
    }

    fn param(&mut self, helper: bool) -> PResult<Param> {
        let start = self.peek().map_or(self.eof_pos(), |t| t.pos);
        let mut quals = Vec::new();
        while let Some(q) = self.qualifier() {
            quals.push(q);
        }
        let ty = self.scalar_type()?;
        let mut is_pointer = false;
        if self.peek().map_or(false, |t| t.is_op("*")) {
            self.bump();
            is_pointer = true;
        }
        let name = self.expect_ident("parameter name")?.lexeme.clone();
        if helper && (is_pointer || quals.contains(&Qual::FunctionShared)) {
            return Err(Diagnostic::error(
                "structure",
                start,
                format!("device function parameter {name:?} must be a scalar"),
            ));
        }
        Ok(Param { name, ty, is_pointer, quals, pos: start })
    }

    fn param_list(&mut self, info: Keyword, helper: bool) -> PResult<Vec<Param>> {
        self.expect_punct("(")?;
        self.expect_keyword(info)?;
        let mut params = Vec::new();
        while self.peek_punct(",") {
            self.bump();
            params.push(self.param(helper)?);
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    fn helper_def(&mut self) -> PResult<HelperDef> {
        let pos = self.expect_keyword(Keyword::Function)?.pos;
        let ret = self.scalar_type()?;
        let name = self.expect_ident("function name")?.lexeme.clone();
        let params = self.param_list(Keyword::FunctionInfoArg, true)?;
        let body = self.block(Ctx::Helper)?;
        Ok(HelperDef { name, ret, params, body, pos })
    }

    fn kernel_def(&mut self) -> PResult<KernelDef> {
        let pos = self.expect_keyword(Keyword::Kernel)?.pos;
        match self.peek() {
            Some(t) if t.is_ident("void") => {
                self.bump();
            }
            _ => return Err(self.err("kernels must return void")),
        }
        let name = self.expect_ident("kernel name")?.lexeme.clone();
        let params = self.param_list(Keyword::KernelInfoArg, false)?;
        self.expect_punct("{")?;
        let (outer_axes, body) = self.outer_chain()?;
        self.expect_punct("}")?;
        Ok(KernelDef { name, params, outer_axes, body, pos })
    }

    /// Parses the mandatory outer loop chain. Axes must strictly descend;
    /// nothing but the next outer loop may appear between chain levels.
    fn outer_chain(&mut self) -> PResult<(Vec<u8>, Block)> {
        let mut axes = Vec::new();
        let mut prev_axis: Option<u8> = None;

        loop {
            let (axis, global) = match self.peek().map(|t| t.kind) {
                Some(TokenKind::Keyword(Keyword::OuterFor0)) => (0, false),
                Some(TokenKind::Keyword(Keyword::OuterFor1)) => (1, false),
                Some(TokenKind::Keyword(Keyword::OuterFor2)) => (2, false),
                Some(TokenKind::Keyword(Keyword::GlobalFor0)) => (0, true),
                Some(TokenKind::Keyword(Keyword::GlobalFor1)) => (1, true),
                // Only reachable on the first token: the loop re-enters
                // solely when the next token is an outer loop keyword.
                _ => {
                    return Err(self.err(
                        "kernel body must begin with an outer loop (occaOuterFor* or occaGlobalFor0/1)",
                    ))
                }
            };
            let kw_tok = self.bump();
            if let Some(prev) = prev_axis {
                if axis >= prev {
                    return Err(Diagnostic::error(
                        "structure",
                        kw_tok.pos,
                        format!("outer loop axes must strictly descend, found axis {axis} after {prev}"),
                    ));
                }
            }
            prev_axis = Some(axis);
            axes.push(axis);
            self.expect_punct("{")?;

            if global {
                let inner_body = self.stmt_list(Ctx::Kernel { inner_axis: Some(axis) })?;
                let pos = kw_tok.pos;
                self.expect_punct("}")?;
                let body = Block { stmts: vec![Stmt::InnerFor { axis, body: inner_body, pos }] };
                let closed = close_chain(self, axes.len() - 1, body)?;
                return Ok((axes, closed));
            }

            let continues = matches!(
                self.peek().map(|t| t.kind),
                Some(TokenKind::Keyword(Keyword::OuterFor0))
                    | Some(TokenKind::Keyword(Keyword::OuterFor1))
                    | Some(TokenKind::Keyword(Keyword::OuterFor2))
                    | Some(TokenKind::Keyword(Keyword::GlobalFor0))
                    | Some(TokenKind::Keyword(Keyword::GlobalFor1))
            );
            if !continues {
                let body = self.stmt_list(Ctx::Kernel { inner_axis: None })?;
                let closed = close_chain(self, axes.len(), body)?;
                return Ok((axes, closed));
            }
        }

        // Closes the `}` of every outer level opened so far. `opened` counts
        // braces still open when the innermost body has been consumed.
        fn close_chain(p: &mut Parser, opened: usize, body: Block) -> PResult<Block> {
            for _ in 0..opened {
                if !p.peek_punct("}") {
                    return Err(p.err("statements are not allowed between outer loops; expected \"}\""));
                }
                p.bump();
            }
            Ok(body)
        }
    }

    fn block(&mut self, ctx: Ctx) -> PResult<Block> {
        self.expect_punct("{")?;
        let b = self.stmt_list(ctx)?;
        self.expect_punct("}")?;
        Ok(b)
    }

    fn stmt_list(&mut self, ctx: Ctx) -> PResult<Block> {
        let mut stmts = Vec::new();
        while let Some(t) = self.peek() {
            if t.is_punct("}") {
                break;
            }
            stmts.push(self.stmt(ctx)?);
        }
        Ok(Block { stmts })
    }

    fn stmt(&mut self, ctx: Ctx) -> PResult<Stmt> {
        let t = self.peek().ok_or_else(|| self.err("expected a statement"))?;
        let pos = t.pos;
        match t.kind {
            TokenKind::Keyword(Keyword::InnerFor0) => self.inner_for(0, ctx),
            TokenKind::Keyword(Keyword::InnerFor1) => self.inner_for(1, ctx),
            TokenKind::Keyword(Keyword::InnerFor2) => self.inner_for(2, ctx),
            TokenKind::Keyword(Keyword::GlobalFor2) => self.inner_for(2, ctx),
            TokenKind::Keyword(Keyword::InnerFor) => {
                // occaInnerFor is the full nest: axes 2, 1, 0.
                let kw = self.bump();
                if ctx.is_helper() {
                    return Err(helper_stmt_err(kw.pos, "inner loops"));
                }
                self.check_inner_axis(ctx, 2, kw.pos)?;
                let inner = Ctx::Kernel { inner_axis: Some(0) };
                self.expect_punct("{")?;
                let body = self.stmt_list(inner)?;
                self.expect_punct("}")?;
                let wrap = |axis: u8, body: Block| Stmt::InnerFor { axis, body, pos: kw.pos };
                Ok(wrap(2, Block { stmts: vec![wrap(1, Block { stmts: vec![wrap(0, body)] })] }))
            }
            TokenKind::Keyword(Keyword::OuterFor0)
            | TokenKind::Keyword(Keyword::OuterFor1)
            | TokenKind::Keyword(Keyword::OuterFor2)
            | TokenKind::Keyword(Keyword::GlobalFor0)
            | TokenKind::Keyword(Keyword::GlobalFor1) => Err(Diagnostic::error(
                "structure",
                pos,
                "outer loops may only appear at the top of a kernel body".to_string(),
            )),
            TokenKind::Keyword(Keyword::Barrier) => {
                let kw = self.bump();
                if ctx.is_helper() {
                    return Err(helper_stmt_err(kw.pos, "barriers"));
                }
                self.expect_punct("(")?;
                let fence = match self.peek().map(|t| t.kind) {
                    Some(TokenKind::Keyword(Keyword::LocalMemFence)) => {
                        self.bump();
                        Fence::Local
                    }
                    Some(TokenKind::Keyword(Keyword::GlobalMemFence)) => {
                        self.bump();
                        Fence::Global
                    }
                    _ => {
                        return Err(self.err(
                            "barrier fence must be occaLocalMemFence or occaGlobalMemFence",
                        ))
                    }
                };
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Ok(Stmt::Barrier { fence, pos: kw.pos })
            }
            TokenKind::Keyword(Keyword::InnerReturn) => {
                let kw = self.bump();
                if ctx.is_helper() {
                    return Err(helper_stmt_err(kw.pos, "occaInnerReturn"));
                }
                self.expect_punct(";")?;
                Ok(Stmt::InnerReturn { pos: kw.pos })
            }
            TokenKind::Keyword(Keyword::Private) | TokenKind::Keyword(Keyword::PrivateArray) => {
                let is_array = t.is_keyword(Keyword::PrivateArray);
                let kw = self.bump();
                if ctx.is_helper() {
                    return Err(helper_stmt_err(kw.pos, "private declarations"));
                }
                self.expect_punct("(")?;
                let ty = self.scalar_type()?;
                self.expect_punct(",")?;
                let name = self.expect_ident("private name")?.lexeme.clone();
                let elems = if is_array {
                    self.expect_punct(",")?;
                    self.array_len()?
                } else {
                    1
                };
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Ok(Stmt::PrivateDecl { ty, name, elems, is_array, pos: kw.pos })
            }
            _ if t.is_ident("if") => self.if_stmt(ctx),
            _ if t.is_ident("for") => self.for_stmt(ctx),
            _ if t.is_ident("return") => {
                let kw = self.bump();
                if !ctx.is_helper() {
                    return Err(Diagnostic::error(
                        "structure",
                        kw.pos,
                        "return is only valid in device functions; use occaInnerReturn in kernels"
                            .to_string(),
                    ));
                }
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Return { value, pos: kw.pos })
            }
            _ if self.starts_decl() => self.decl_stmt(ctx),
            TokenKind::Ident => self.assign_or_call(),
            TokenKind::Keyword(kw) => {
                if let Some(builtin) = builtin_of(kw) {
                    let kw_tok = self.bump();
                    let op = self.assign_op()?;
                    let value = self.expr()?;
                    self.expect_punct(";")?;
                    return Ok(Stmt::Assign {
                        target: Target::Builtin { builtin, pos: kw_tok.pos },
                        op,
                        value,
                        pos: kw_tok.pos,
                    });
                }
                Err(self.err("expected a statement"))
            }
            _ => Err(self.err("expected a statement")),
        }
    }

    fn check_inner_axis(&self, ctx: Ctx, axis: u8, pos: Pos) -> PResult<()> {
        if let Ctx::Kernel { inner_axis: Some(enclosing) } = ctx {
            if axis >= enclosing {
                return Err(Diagnostic::error(
                    "structure",
                    pos,
                    format!("inner loop axes must strictly descend, found axis {axis} inside {enclosing}"),
                ));
            }
        }
        Ok(())
    }

    fn inner_for(&mut self, axis: u8, ctx: Ctx) -> PResult<Stmt> {
        let kw = self.bump();
        if ctx.is_helper() {
            return Err(helper_stmt_err(kw.pos, "inner loops"));
        }
        self.check_inner_axis(ctx, axis, kw.pos)?;
        self.expect_punct("{")?;
        let body = self.stmt_list(Ctx::Kernel { inner_axis: Some(axis) })?;
        self.expect_punct("}")?;
        Ok(Stmt::InnerFor { axis, body, pos: kw.pos })
    }

    fn if_stmt(&mut self, ctx: Ctx) -> PResult<Stmt> {
        let kw = self.bump();
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_block = self.block(ctx)?;
        let else_block = match self.peek() {
            Some(t) if t.is_ident("else") => {
                self.bump();
                if self.peek().map_or(false, |t| t.is_ident("if")) {
                    let nested = self.if_stmt(ctx)?;
                    Some(Block { stmts: vec![nested] })
                } else {
                    Some(self.block(ctx)?)
                }
            }
            _ => None,
        };
        Ok(Stmt::If { cond, then_block, else_block, pos: kw.pos })
    }

    fn for_stmt(&mut self, ctx: Ctx) -> PResult<Stmt> {
        let kw = self.bump();
        self.expect_punct("(")?;
        let init = if self.starts_decl() {
            let pos = self.peek().unwrap().pos;
            let mut quals = Vec::new();
            while let Some(q) = self.qualifier() {
                quals.push(q);
            }
            let ty = self.scalar_type()?;
            let name = self.expect_ident("loop variable")?.lexeme.clone();
            match self.peek() {
                Some(t) if t.is_op("=") => {
                    self.bump();
                }
                _ => return Err(self.err("loop variable needs an initializer")),
            }
            let value = self.expr()?;
            Stmt::Decl { quals, ty, name, array_len: None, init: Some(value), shared: false, pos }
        } else {
            self.plain_assign()?
        };
        self.expect_punct(";")?;
        let cond = self.expr()?;
        self.expect_punct(";")?;
        let step = self.step_stmt()?;
        self.expect_punct(")")?;
        let body = self.block(ctx)?;
        Ok(Stmt::For { init: Box::new(init), cond, step: Box::new(step), body, pos: kw.pos })
    }

    /// `name++` / `name--` / assignment, without the trailing `;`.
    fn step_stmt(&mut self) -> PResult<Stmt> {
        let name_tok = self.expect_ident("loop step")?;
        let name = name_tok.lexeme.clone();
        match self.peek() {
            Some(t) if t.is_op("++") || t.is_op("--") => {
                let negative = t.is_op("--");
                self.bump();
                Ok(Stmt::Incr { name, negative, pos: name_tok.pos })
            }
            _ => {
                let op = self.assign_op()?;
                let value = self.expr()?;
                Ok(Stmt::Assign {
                    target: Target::Var { name, pos: name_tok.pos },
                    op,
                    value,
                    pos: name_tok.pos,
                })
            }
        }
    }

    fn plain_assign(&mut self) -> PResult<Stmt> {
        let name_tok = self.expect_ident("assignment")?;
        let name = name_tok.lexeme.clone();
        let op = self.assign_op()?;
        let value = self.expr()?;
        Ok(Stmt::Assign {
            target: Target::Var { name, pos: name_tok.pos },
            op,
            value,
            pos: name_tok.pos,
        })
    }

    fn assign_op(&mut self) -> PResult<AssignOp> {
        let op = match self.peek() {
            Some(t) if t.is_op("=") => AssignOp::Set,
            Some(t) if t.is_op("+=") => AssignOp::Add,
            Some(t) if t.is_op("-=") => AssignOp::Sub,
            Some(t) if t.is_op("*=") => AssignOp::Mul,
            Some(t) if t.is_op("/=") => AssignOp::Div,
            Some(t) if t.is_op("%=") => AssignOp::Mod,
            _ => return Err(self.err("expected an assignment operator")),
        };
        self.bump();
        Ok(op)
    }

    /// A declaration starts with a qualifier, `const`, or a scalar type
    /// followed by an identifier.
    fn starts_decl(&self) -> bool {
        let Some(t) = self.peek() else { return false };
        match t.kind {
            TokenKind::Keyword(
                Keyword::Shared
                | Keyword::Pointer
                | Keyword::Constant
                | Keyword::Variable
                | Keyword::Restrict
                | Keyword::Volatile
                | Keyword::Const
                | Keyword::Aligned,
            ) => true,
            TokenKind::Ident if t.lexeme == "const" => true,
            TokenKind::Ident if matches!(t.lexeme.as_str(), "int" | "float" | "double") => {
                matches!(self.peek_at(1), Some(n) if n.kind == TokenKind::Ident)
            }
            _ => false,
        }
    }

    fn array_len(&mut self) -> PResult<usize> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Int => {
                let n: usize = t.lexeme.parse().map_err(|_| {
                    Diagnostic::error("syntax", t.pos, format!("bad array length {:?}", t.lexeme))
                })?;
                self.bump();
                if n == 0 {
                    return Err(Diagnostic::error(
                        "structure",
                        self.toks[self.at - 1].pos,
                        "array length must be positive".to_string(),
                    ));
                }
                Ok(n)
            }
            _ => Err(self.err("expected a literal array length")),
        }
    }

    fn decl_stmt(&mut self, ctx: Ctx) -> PResult<Stmt> {
        let pos = self.peek().unwrap().pos;
        let mut quals = Vec::new();
        while let Some(q) = self.qualifier() {
            quals.push(q);
        }
        let shared = quals.contains(&Qual::Shared);
        if shared && ctx.is_helper() {
            return Err(helper_stmt_err(pos, "shared declarations"));
        }
        let ty = self.scalar_type()?;
        let name = self.expect_ident("declaration name")?.lexeme.clone();
        let mut array_len = None;
        if self.peek_punct("[") {
            self.bump();
            array_len = Some(self.array_len()?);
            self.expect_punct("]")?;
        }
        if shared && array_len.is_none() {
            return Err(Diagnostic::error(
                "structure",
                pos,
                "shared declarations need a literal array length".to_string(),
            ));
        }
        let mut init = None;
        if self.peek().map_or(false, |t| t.is_op("=")) {
            if array_len.is_some() {
                return Err(self.err("array declarations cannot take an initializer"));
            }
            self.bump();
            init = Some(self.expr()?);
        }
        self.expect_punct(";")?;
        Ok(Stmt::Decl { quals, ty, name, array_len, init, shared, pos })
    }

    fn assign_or_call(&mut self) -> PResult<Stmt> {
        let name_tok = self.expect_ident("statement")?;
        let name = name_tok.lexeme.clone();
        let pos = name_tok.pos;
        match self.peek() {
            Some(t) if t.is_punct("(") => {
                let expr = self.call_expr(name, pos)?;
                self.expect_punct(";")?;
                Ok(Stmt::ExprStmt { expr, pos })
            }
            Some(t) if t.is_punct("[") => {
                self.bump();
                let index = self.expr()?;
                self.expect_punct("]")?;
                let op = self.assign_op()?;
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Assign { target: Target::Index { name, index, pos }, op, value, pos })
            }
            Some(t) if t.is_op("++") || t.is_op("--") => {
                let negative = t.is_op("--");
                self.bump();
                self.expect_punct(";")?;
                Ok(Stmt::Incr { name, negative, pos })
            }
            _ => {
                let op = self.assign_op()?;
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Assign { target: Target::Var { name, pos }, op, value, pos })
            }
        }
    }

    fn call_expr(&mut self, name: String, pos: Pos) -> PResult<Expr> {
        self.expect_punct("(")?;
        let mut info_arg = false;
        let mut args = Vec::new();
        if self.peek_keyword(Keyword::FunctionInfo) {
            self.bump();
            info_arg = true;
            if self.peek_punct(",") {
                self.bump();
            }
        }
        if !self.peek_punct(")") {
            loop {
                args.push(self.expr()?);
                if self.peek_punct(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(Expr::Call { name, info_arg, args, pos })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.peek().map_or(false, |t| t.is_op("||")) {
            let pos = self.bump().pos;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary { op: BinOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.cmp_expr()?;
        while self.peek().map_or(false, |t| t.is_op("&&")) {
            let pos = self.bump().pos;
            let rhs = self.cmp_expr()?;
            lhs = Expr::Binary { op: BinOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_op("<") => BinOp::Lt,
                Some(t) if t.is_op("<=") => BinOp::Le,
                Some(t) if t.is_op(">") => BinOp::Gt,
                Some(t) if t.is_op(">=") => BinOp::Ge,
                Some(t) if t.is_op("==") => BinOp::Eq,
                Some(t) if t.is_op("!=") => BinOp::Ne,
                _ => break,
            };
            let pos = self.bump().pos;
            let rhs = self.add_expr()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_op("+") => BinOp::Add,
                Some(t) if t.is_op("-") => BinOp::Sub,
                _ => break,
            };
            let pos = self.bump().pos;
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_op("*") => BinOp::Mul,
                Some(t) if t.is_op("/") => BinOp::Div,
                Some(t) if t.is_op("%") => BinOp::Mod,
                _ => break,
            };
            let pos = self.bump().pos;
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        match self.peek() {
            Some(t) if t.is_op("-") => {
                let pos = self.bump().pos;
                let operand = self.unary_expr()?;
                Ok(Expr::Unary { op: UnOp::Neg, operand: Box::new(operand), pos })
            }
            Some(t) if t.is_op("!") => {
                let pos = self.bump().pos;
                let operand = self.unary_expr()?;
                Ok(Expr::Unary { op: UnOp::Not, operand: Box::new(operand), pos })
            }
            Some(t) if t.is_op("+") => {
                self.bump();
                self.unary_expr()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().ok_or_else(|| self.err("expected an expression"))?;
        let pos = t.pos;
        match t.kind {
            TokenKind::Int => {
                let v: i64 = t.lexeme.parse().map_err(|_| {
                    Diagnostic::error("syntax", pos, format!("integer literal {:?} is out of range", t.lexeme))
                })?;
                self.bump();
                Ok(Expr::IntLit(v, pos))
            }
            TokenKind::Float => {
                let v: f64 = t.lexeme.parse().unwrap();
                self.bump();
                Ok(Expr::FloatLit(v, pos))
            }
            TokenKind::F32 => {
                let v: f32 = t.lexeme.trim_end_matches(['f', 'F']).parse().unwrap();
                self.bump();
                Ok(Expr::F32Lit(v, pos))
            }
            TokenKind::Punct if t.lexeme == "(" => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            TokenKind::Ident => {
                let name = self.bump().lexeme.clone();
                match self.peek() {
                    Some(n) if n.is_punct("(") => self.call_expr(name, pos),
                    Some(n) if n.is_punct("[") => {
                        self.bump();
                        let index = self.expr()?;
                        self.expect_punct("]")?;
                        Ok(Expr::Index { name, index: Box::new(index), pos })
                    }
                    _ => Ok(Expr::Var { name, pos }),
                }
            }
            TokenKind::Keyword(kw) => match builtin_of(kw) {
                Some(builtin) => {
                    self.bump();
                    Ok(Expr::Builtin { builtin, pos })
                }
                None => Err(self.err(format!("{} is not valid in an expression", kw.as_str()))),
            },
            _ => Err(self.err("expected an expression")),
        }
    }
}

fn helper_stmt_err(pos: Pos, what: &str) -> Diagnostic {
    Diagnostic::error("structure", pos, format!("{what} are not allowed in device functions"))
}

#[derive(Debug, Clone, Copy)]
enum Ctx {
    Helper,
    Kernel { inner_axis: Option<u8> },
}

impl Ctx {
    fn is_helper(self) -> bool {
        matches!(self, Ctx::Helper)
    }
}

fn builtin_of(kw: Keyword) -> Option<Builtin> {
    Some(match kw {
        Keyword::InnerId0 => Builtin::InnerId(0),
        Keyword::InnerId1 => Builtin::InnerId(1),
        Keyword::InnerId2 => Builtin::InnerId(2),
        Keyword::OuterId0 => Builtin::OuterId(0),
        Keyword::OuterId1 => Builtin::OuterId(1),
        Keyword::OuterId2 => Builtin::OuterId(2),
        Keyword::GlobalId0 => Builtin::GlobalId(0),
        Keyword::GlobalId1 => Builtin::GlobalId(1),
        Keyword::GlobalId2 => Builtin::GlobalId(2),
        Keyword::InnerDim0 => Builtin::InnerDim(0),
        Keyword::InnerDim1 => Builtin::InnerDim(1),
        Keyword::InnerDim2 => Builtin::InnerDim(2),
        Keyword::OuterDim0 => Builtin::OuterDim(0),
        Keyword::OuterDim1 => Builtin::OuterDim(1),
        Keyword::OuterDim2 => Builtin::OuterDim(2),
        Keyword::GlobalDim0 => Builtin::GlobalDim(0),
        Keyword::GlobalDim1 => Builtin::GlobalDim(1),
        Keyword::GlobalDim2 => Builtin::GlobalDim(2),
        Keyword::Cpu => Builtin::Cpu,
        Keyword::Gpu => Builtin::Gpu,
        Keyword::OpenMp => Builtin::OpenMp,
        Keyword::OpenCl => Builtin::OpenCl,
        Keyword::Cuda => Builtin::Cuda,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defines::DefineSet;
    use crate::lex::tokenize;

    fn parse(src: &str) -> Result<KernelFile, Vec<Diagnostic>> {
        parse_kernel(&tokenize(src, &DefineSet::new()).unwrap())
    }

    fn parse_ok(src: &str) -> KernelFile {
        match parse(src) {
            Ok(f) => f,
            Err(diags) => panic!("parse failed: {}", diags[0].render("test.occa")),
        }
    }

    const MINIMAL: &str = "occaKernel void k(occaKernelInfoArg){ occaOuterFor0{ occaInnerFor0{ } } }";

    #[test]
    fn minimal_kernel_parses() {
        let f = parse_ok(MINIMAL);
        assert_eq!(f.kernels.len(), 1);
        let k = &f.kernels[0];
        assert_eq!(k.name, "k");
        assert_eq!(k.outer_axes, vec![0]);
        assert!(matches!(k.body.stmts[0], Stmt::InnerFor { axis: 0, .. }));
    }

    #[test]
    fn outer_chain_is_lifted() {
        let f = parse_ok(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor2{ occaOuterFor1{ occaOuterFor0{ occaInnerFor0{ } } } }
             }",
        );
        assert_eq!(f.kernels[0].outer_axes, vec![2, 1, 0]);
    }

    #[test]
    fn global_for_desugars_to_outer_plus_inner() {
        let f = parse_ok(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor1{ occaGlobalFor0{ int x = occaGlobalId0; } }
             }",
        );
        let k = &f.kernels[0];
        assert_eq!(k.outer_axes, vec![1, 0]);
        let Stmt::InnerFor { axis: 0, body, .. } = &k.body.stmts[0] else {
            panic!("expected wrapped inner loop");
        };
        assert_eq!(body.stmts.len(), 1);
    }

    #[test]
    fn bare_inner_for_expands_to_three_axes() {
        let f = parse_ok(
            "occaKernel void k(occaKernelInfoArg){ occaOuterFor0{ occaInnerFor{ int x = 1; } } }",
        );
        let Stmt::InnerFor { axis: 2, body, .. } = &f.kernels[0].body.stmts[0] else {
            panic!("expected axis-2 loop");
        };
        let Stmt::InnerFor { axis: 1, body, .. } = &body.stmts[0] else {
            panic!("expected axis-1 loop");
        };
        assert!(matches!(body.stmts[0], Stmt::InnerFor { axis: 0, .. }));
    }

    #[test]
    fn statements_between_outer_loops_are_rejected() {
        let err = parse(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor1{ occaOuterFor0{ occaInnerFor0{ } } int bad = 1; }
             }",
        )
        .unwrap_err();
        assert!(err[0].message.contains("between outer loops"), "{}", err[0].message);
    }

    #[test]
    fn ascending_outer_axes_are_rejected() {
        let err = parse(
            "occaKernel void k(occaKernelInfoArg){ occaOuterFor0{ occaOuterFor1{ occaInnerFor0{ } } } }",
        )
        .unwrap_err();
        assert_eq!(err[0].code, "structure");
        assert!(err[0].message.contains("strictly descend"));
    }

    #[test]
    fn missing_info_arg_is_rejected() {
        let err = parse("occaKernel void k(int n){ occaOuterFor0{ occaInnerFor0{ } } }").unwrap_err();
        assert!(err[0].message.contains("occaKernelInfoArg"));
    }

    #[test]
    fn helper_before_use_and_info_call() {
        let f = parse_ok(
            "occaFunction double square(occaFunctionInfoArg, double x){ return x * x; }
             occaKernel void k(occaKernelInfoArg, occaPointer double *out){
               occaOuterFor0{ occaInnerFor0{
                 out[occaGlobalId0] = square(occaFunctionInfo, 3.0);
               } }
             }",
        );
        assert_eq!(f.helpers.len(), 1);
        assert_eq!(f.helpers[0].params.len(), 1);
    }

    #[test]
    fn helper_called_before_definition_is_rejected() {
        let err = parse(
            "occaKernel void k(occaKernelInfoArg, occaPointer double *out){
               occaOuterFor0{ occaInnerFor0{ out[0] = square(occaFunctionInfo, 3.0); } }
             }
             occaFunction double square(occaFunctionInfoArg, double x){ return x * x; }",
        )
        .unwrap_err();
        assert!(err[0].message.contains("not defined at this point"));
    }

    #[test]
    fn helper_call_without_info_is_rejected() {
        let err = parse(
            "occaFunction double square(occaFunctionInfoArg, double x){ return x * x; }
             occaKernel void k(occaKernelInfoArg, occaPointer double *out){
               occaOuterFor0{ occaInnerFor0{ out[0] = square(3.0); } }
             }",
        )
        .unwrap_err();
        assert!(err[0].message.contains("occaFunctionInfo"));
    }

    #[test]
    fn intrinsic_arity_is_checked() {
        let err = parse(
            "occaKernel void k(occaKernelInfoArg, occaPointer double *out){
               occaOuterFor0{ occaInnerFor0{ out[0] = min(1.0); } }
             }",
        )
        .unwrap_err();
        assert!(err[0].message.contains("expects 2"));
    }

    #[test]
    fn shared_needs_array_length() {
        let err = parse(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaShared double s; occaInnerFor0{ } }
             }",
        )
        .unwrap_err();
        assert!(err[0].message.contains("array length"));
    }

    #[test]
    fn builtin_write_parses_for_validation() {
        let f = parse_ok(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaInnerFor0{ occaInnerId0 = 0; } }
             }",
        );
        let Stmt::InnerFor { body, .. } = &f.kernels[0].body.stmts[0] else { unreachable!() };
        assert!(matches!(
            body.stmts[0],
            Stmt::Assign { target: Target::Builtin { builtin: Builtin::InnerId(0), .. }, .. }
        ));
    }

    #[test]
    fn expression_precedence_matches_c() {
        let f = parse_ok(
            "occaKernel void k(occaKernelInfoArg, occaPointer double *u){
               occaOuterFor0{ occaInnerFor0{
                 u[0] = -2 * 3.0 + 1.0 - 0.5 * 0.5 * 4.0;
               } }
             }",
        );
        // ((-2 * 3.0) + 1.0) - ((0.5 * 0.5) * 4.0)
        let Stmt::InnerFor { body, .. } = &f.kernels[0].body.stmts[0] else { unreachable!() };
        let Stmt::Assign { value: Expr::Binary { op: BinOp::Sub, lhs, .. }, .. } = &body.stmts[0] else {
            panic!("expected top-level subtraction");
        };
        assert!(matches!(**lhs, Expr::Binary { op: BinOp::Add, .. }));
    }

    #[test]
    fn recovery_reports_errors_in_both_kernels() {
        let err = parse(
            "occaKernel void a(occaKernelInfoArg){ occaInnerFor0{ } }
             occaKernel void b(occaKernelInfoArg){ occaInnerFor0{ } }",
        )
        .unwrap_err();
        assert_eq!(err.len(), 2);
    }

    #[test]
    fn barriers_parse_with_both_fences() {
        let f = parse_ok(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{
                 occaInnerFor0{ }
                 occaBarrier(occaLocalMemFence);
                 occaBarrier(occaGlobalMemFence);
                 occaInnerFor0{ }
               }
             }",
        );
        let stmts = &f.kernels[0].body.stmts;
        assert!(matches!(stmts[1], Stmt::Barrier { fence: Fence::Local, .. }));
        assert!(matches!(stmts[2], Stmt::Barrier { fence: Fence::Global, .. }));
    }
}
