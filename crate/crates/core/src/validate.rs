//! Placement rules for work-group semantics.
//!
//! The parser guarantees shape; these rules guarantee that the shape means
//! the same thing on every backend:
//!
//! - `V1` barriers may not appear inside an inner loop nest
//! - `V2` shared and private declarations belong at outer scope
//! - `V3` private variables may only be touched inside an inner nest
//! - `V4` `occaInnerReturn` only makes sense inside an inner nest
//! - `V5` `occaInnerId*` / `occaGlobalId*` are undefined outside an inner nest
//! - `V6` work-size builtins are read-only

use crate::ast::*;
use crate::diag::Diagnostic;

pub fn validate(file: &KernelFile) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for kernel in &file.kernels {
        let mut privates = Vec::new();
        collect_privates(&kernel.body, &mut privates);
        let mut v = Validator { privates, inner_depth: 0, diags: &mut diags };
        v.block(&kernel.body);
    }
    diags
}

fn collect_privates(block: &Block, out: &mut Vec<String>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::PrivateDecl { name, .. } => out.push(name.clone()),
            Stmt::If { then_block, else_block, .. } => {
                collect_privates(then_block, out);
                if let Some(b) = else_block {
                    collect_privates(b, out);
                }
            }
            Stmt::For { body, .. } => collect_privates(body, out),
            Stmt::InnerFor { body, .. } => collect_privates(body, out),
            _ => {}
        }
    }
}

struct Validator<'a> {
    privates: Vec<String>,
    inner_depth: u32,
    diags: &'a mut Vec<Diagnostic>,
}

impl Validator<'_> {
    fn in_inner(&self) -> bool {
        self.inner_depth > 0
    }

    fn block(&mut self, block: &Block) {
        for stmt in &block.stmts {
            self.stmt(stmt);
        }
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::Barrier { pos, .. } => {
                if self.in_inner() {
                    self.diags.push(Diagnostic::error(
                        "V1",
                        *pos,
                        "barrier inside an inner loop nest",
                    ));
                }
            }
            Stmt::Decl { shared, init, name, pos, .. } => {
                if *shared && self.in_inner() {
                    self.diags.push(Diagnostic::error(
                        "V2",
                        *pos,
                        format!("shared declaration {name:?} must be at outer scope"),
                    ));
                }
                if let Some(e) = init {
                    self.expr(e);
                }
            }
            Stmt::PrivateDecl { name, pos, .. } => {
                if self.in_inner() {
                    self.diags.push(Diagnostic::error(
                        "V2",
                        *pos,
                        format!("private declaration {name:?} must be at outer scope"),
                    ));
                }
            }
            Stmt::Assign { target, value, .. } => {
                match target {
                    Target::Builtin { pos, .. } => {
                        self.diags.push(Diagnostic::error(
                            "V6",
                            *pos,
                            "work-size builtins are read-only",
                        ));
                    }
                    Target::Var { name, pos } => self.private_touch(name, *pos),
                    Target::Index { name, index, pos } => {
                        self.private_touch(name, *pos);
                        self.expr(index);
                    }
                }
                self.expr(value);
            }
            Stmt::Incr { name, pos, .. } => self.private_touch(name, *pos),
            Stmt::If { cond, then_block, else_block, .. } => {
                self.expr(cond);
                self.block(then_block);
                if let Some(b) = else_block {
                    self.block(b);
                }
            }
            Stmt::For { init, cond, step, body, .. } => {
                self.stmt(init);
                self.expr(cond);
                self.stmt(step);
                self.block(body);
            }
            Stmt::InnerFor { body, .. } => {
                self.inner_depth += 1;
                self.block(body);
                self.inner_depth -= 1;
            }
            Stmt::InnerReturn { pos } => {
                if !self.in_inner() {
                    self.diags.push(Diagnostic::error(
                        "V4",
                        *pos,
                        "occaInnerReturn outside an inner loop nest",
                    ));
                }
            }
            Stmt::Return { value, .. } => self.expr(value),
            Stmt::ExprStmt { expr, .. } => self.expr(expr),
        }
    }

    fn private_touch(&mut self, name: &str, pos: crate::diag::Pos) {
        if !self.in_inner() && self.privates.iter().any(|p| p == name) {
            self.diags.push(Diagnostic::error(
                "V3",
                pos,
                format!("private {name:?} accessed outside an inner loop nest"),
            ));
        }
    }

    fn expr(&mut self, expr: &Expr) {
        match expr {
            Expr::Var { name, pos } => self.private_touch(name, *pos),
            Expr::Index { name, index, pos } => {
                self.private_touch(name, *pos);
                self.expr(index);
            }
            Expr::Builtin { builtin, pos } => {
                let item_local = match builtin {
                    Builtin::InnerId(a) => Some(format!("occaInnerId{a}")),
                    Builtin::GlobalId(a) => Some(format!("occaGlobalId{a}")),
                    _ => None,
                };
                if let Some(name) = item_local {
                    if !self.in_inner() {
                        self.diags.push(Diagnostic::error(
                            "V5",
                            *pos,
                            format!("{name} read outside an inner loop nest"),
                        ));
                    }
                }
            }
            Expr::Unary { operand, .. } => self.expr(operand),
            Expr::Binary { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            Expr::Call { args, .. } => {
                for a in args {
                    self.expr(a);
                }
            }
            Expr::IntLit(..) | Expr::FloatLit(..) | Expr::F32Lit(..) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defines::DefineSet;
    use crate::lex::tokenize;
    use crate::parse::parse_kernel;

    fn check(src: &str) -> Vec<Diagnostic> {
        validate(&parse_kernel(&tokenize(src, &DefineSet::new()).unwrap()).unwrap())
    }

    #[test]
    fn clean_kernel_has_no_findings() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg, occaPointer double *u){
               occaOuterFor0{
                 occaShared double s[16];
                 occaPrivate(double, reg);
                 occaInnerFor0{
                   reg = u[occaGlobalId0];
                   s[occaInnerId0] = reg;
                 }
                 occaBarrier(occaLocalMemFence);
                 occaInnerFor0{
                   if(occaInnerId0 == 0){ occaInnerReturn; }
                   u[occaGlobalId0] = s[occaInnerDim0 - 1 - occaInnerId0];
                 }
               }
             }",
        );
        assert!(diags.is_empty(), "{diags:?}");
    }

    #[test]
    fn v1_barrier_inside_inner_nest() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaInnerFor0{ occaBarrier(occaLocalMemFence); } }
             }",
        );
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "V1");
    }

    #[test]
    fn v2_private_declared_inside_inner_nest() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaInnerFor0{ occaPrivate(int, reg); } }
             }",
        );
        assert_eq!(diags[0].code, "V2");
    }

    #[test]
    fn v3_private_access_at_outer_scope() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaPrivate(int, reg); reg = 1; occaInnerFor0{ } }
             }",
        );
        assert_eq!(diags[0].code, "V3");
    }

    #[test]
    fn v4_inner_return_at_outer_scope() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaInnerReturn; occaInnerFor0{ } }
             }",
        );
        assert_eq!(diags[0].code, "V4");
    }

    #[test]
    fn v5_item_id_at_outer_scope() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ int x = occaGlobalId0; occaInnerFor0{ } }
             }",
        );
        assert_eq!(diags[0].code, "V5");
    }

    #[test]
    fn v6_builtin_write() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{ occaInnerFor0{ occaInnerId0 = 0; } }
             }",
        );
        assert_eq!(diags[0].code, "V6");
    }

    #[test]
    fn outer_ids_and_dims_are_fine_at_outer_scope() {
        let diags = check(
            "occaKernel void k(occaKernelInfoArg){
               occaOuterFor0{
                 int group = occaOuterId0;
                 int span = occaInnerDim0 * occaOuterDim0;
                 int all = occaGlobalDim0;
                 occaInnerFor0{ group += span + all; }
               }
             }",
        );
        assert!(diags.is_empty(), "{diags:?}");
    }
}
