//! Portable kernel toolkit: a small C-like kernel dialect with work-group
//! semantics, per-backend source emitters, and a native execution engine.
//!
//! Pipeline:
//!
//! ```text
//! source --tokenize--> TokenStream --parse_kernel--> KernelFile
//!            |                                          |
//!            |                                     validate (V1..V6)
//!            |                                          |
//!            +--expand / emit_kernel_unit--> backend source text
//!                                                       |
//!                                  engine::Device::build_kernel --> run
//! ```
//!
//! The emitters target OpenMP, OpenCL, CUDA, and Serial source text; the
//! engine executes the same kernels natively with work-group scheduling on a
//! thread pool, so results can be checked without any GPU toolchain.

pub mod ast;
pub mod defines;
pub mod diag;
pub mod engine;
pub mod expand;
pub mod fd;
pub mod lex;
pub mod parse;
pub mod table;
pub mod token;
pub mod validate;

pub use defines::{DefineError, DefineSet, DefineValue};
pub use diag::{has_errors, Diagnostic, Pos, Severity};
pub use engine::{
    swap, Arg, Buffer, Device, ElemType, EngineError, Kernel, Mode, ParamInfo, WorkSize,
};
pub use expand::{emit_kernel_unit, expand, EmittedUnit};
pub use lex::tokenize;
pub use parse::parse_kernel;
pub use table::{expansion_table, Backend, ExpansionTable};
pub use token::{Keyword, Token, TokenKind, TokenStream};
pub use validate::validate;
