//! Abstract syntax for the kernel dialect.
//!
//! A parsed file holds device helper functions and kernels. A kernel body is
//! normalized at parse time: the mandatory chain of `occaOuterFor*` loops is
//! lifted into [`KernelDef::outer_axes`] and the chain's innermost block
//! becomes [`KernelDef::body`]. Inner loops stay in the statement tree as
//! [`Stmt::InnerFor`].

use crate::diag::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    Int,
    Float,
    Double,
}

impl ScalarType {
    pub fn name(self) -> &'static str {
        match self {
            ScalarType::Int => "int",
            ScalarType::Float => "float",
            ScalarType::Double => "double",
        }
    }
}

/// Portability qualifiers that may precede a declaration or parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qual {
    Shared,
    Pointer,
    Constant,
    Variable,
    Restrict,
    Volatile,
    Const,
    Aligned,
    FunctionShared,
    /// Plain C `const`.
    PlainConst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: ScalarType,
    pub is_pointer: bool,
    pub quals: Vec<Qual>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelFile {
    pub helpers: Vec<HelperDef>,
    pub kernels: Vec<KernelDef>,
}

impl KernelFile {
    pub fn kernel(&self, name: &str) -> Option<&KernelDef> {
        self.kernels.iter().find(|k| k.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDef {
    pub name: String,
    /// Parameters after the leading `occaKernelInfoArg`, in source order.
    pub params: Vec<Param>,
    /// Outer loop axes from outermost to innermost, e.g. `[1, 0]`.
    pub outer_axes: Vec<u8>,
    pub body: Block,
    pub pos: Pos,
}

/// Device function callable from kernels. Parameters are scalars; the
/// leading `occaFunctionInfoArg` is implicit and not listed.
#[derive(Debug, Clone, PartialEq)]
pub struct HelperDef {
    pub name: String,
    pub ret: ScalarType,
    pub params: Vec<Param>,
    pub body: Block,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Var { name: String, pos: Pos },
    Index { name: String, index: Expr, pos: Pos },
    /// Write to a work-size builtin; always rejected by validation (V6).
    Builtin { builtin: Builtin, pos: Pos },
}

impl Target {
    pub fn pos(&self) -> Pos {
        match self {
            Target::Var { pos, .. } | Target::Index { pos, .. } | Target::Builtin { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// Local declaration: `const int i = ...;`, `occaShared double s[16];`.
    Decl {
        quals: Vec<Qual>,
        ty: ScalarType,
        name: String,
        /// `Some(n)` for a fixed-length array declaration.
        array_len: Option<usize>,
        init: Option<Expr>,
        shared: bool,
        pos: Pos,
    },
    /// `occaPrivate(type, name)` or `occaPrivateArray(type, name, n)`.
    PrivateDecl { ty: ScalarType, name: String, elems: usize, is_array: bool, pos: Pos },
    Assign { target: Target, op: AssignOp, value: Expr, pos: Pos },
    /// `name++;` / `name--;` statements.
    Incr { name: String, negative: bool, pos: Pos },
    If { cond: Expr, then_block: Block, else_block: Option<Block>, pos: Pos },
    /// Counted sequential loop.
    For { init: Box<Stmt>, cond: Expr, step: Box<Stmt>, body: Block, pos: Pos },
    InnerFor { axis: u8, body: Block, pos: Pos },
    Barrier { fence: Fence, pos: Pos },
    InnerReturn { pos: Pos },
    /// `return expr;` inside a helper.
    Return { value: Expr, pos: Pos },
    /// Bare call statement, e.g. `f(occaFunctionInfo, x);`.
    ExprStmt { expr: Expr, pos: Pos },
}

impl Stmt {
    pub fn pos(&self) -> Pos {
        match self {
            Stmt::Decl { pos, .. }
            | Stmt::PrivateDecl { pos, .. }
            | Stmt::Assign { pos, .. }
            | Stmt::Incr { pos, .. }
            | Stmt::If { pos, .. }
            | Stmt::For { pos, .. }
            | Stmt::InnerFor { pos, .. }
            | Stmt::Barrier { pos, .. }
            | Stmt::InnerReturn { pos }
            | Stmt::Return { pos, .. }
            | Stmt::ExprStmt { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fence {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

/// Work-size and platform builtins readable in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    InnerId(u8),
    OuterId(u8),
    GlobalId(u8),
    InnerDim(u8),
    OuterDim(u8),
    GlobalDim(u8),
    /// Platform flags: fixed 0/1 per backend.
    Cpu,
    Gpu,
    OpenMp,
    OpenCl,
    Cuda,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    IntLit(i64, Pos),
    FloatLit(f64, Pos),
    F32Lit(f32, Pos),
    Var { name: String, pos: Pos },
    Index { name: String, index: Box<Expr>, pos: Pos },
    Builtin { builtin: Builtin, pos: Pos },
    Unary { op: UnOp, operand: Box<Expr>, pos: Pos },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, pos: Pos },
    /// Helper or intrinsic call. `info_arg` records a leading
    /// `occaFunctionInfo` argument.
    Call { name: String, info_arg: bool, args: Vec<Expr>, pos: Pos },
}

impl Expr {
    pub fn pos(&self) -> Pos {
        match self {
            Expr::IntLit(_, pos)
            | Expr::FloatLit(_, pos)
            | Expr::F32Lit(_, pos)
            | Expr::Var { pos, .. }
            | Expr::Index { pos, .. }
            | Expr::Builtin { pos, .. }
            | Expr::Unary { pos, .. }
            | Expr::Binary { pos, .. }
            | Expr::Call { pos, .. } => *pos,
        }
    }
}
