//! Kernel AST to bytecode compiler.
//!
//! The compiled program executes one whole work-group per run: inner loop
//! nests become counted loops over the inner-id slots, barriers compile to
//! nothing (items of a group already run in order), and `occaInnerReturn`
//! becomes a jump to the step point of the innermost enclosing inner loop.
//! Device functions are inlined at each call site; definition-before-use
//! ordering makes recursion impossible.
//!
//! Arithmetic follows C conversion rules over the engine's three value
//! types: int (64-bit, wrapping), float, and double. Literal subtrees fold
//! at compile time with the same semantics the interpreter uses, and every
//! distinct folded value is pinned to a preloaded frame slot so literals
//! cost no instructions. Platform flags fold to the CPU/OpenMP values the
//! engine pins down.
//!
//! Frame slots are allocated two-ended: variables and temporaries grow up
//! from the fixed prefix, pinned literals grow down from slot 255. All
//! destination slots must stay below 256; overflowing either end is a
//! compile error, not a runtime hazard.

use std::collections::HashMap;

use crate::ast::*;
use crate::diag::{Diagnostic, Pos};
use crate::engine::vm::{
    ElemType, Instr, Op, ParamKind, Program, StoreDecl, SLOT_FIRST_FREE, SLOT_INNER_DIM,
    SLOT_INNER_ID, SLOT_OUTER_DIM, SLOT_OUTER_ID, SLOT_ZERO,
};

const FRAME_SLOTS: u16 = 256;

/// Value type of a slot during compilation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    I,
    S,
    D,
}

impl Ty {
    fn rank(self) -> u8 {
        match self {
            Ty::I => 0,
            Ty::S => 1,
            Ty::D => 2,
        }
    }

    fn of(st: ScalarType) -> Ty {
        match st {
            ScalarType::Int => Ty::I,
            ScalarType::Float => Ty::S,
            ScalarType::Double => Ty::D,
        }
    }
}

fn promote(a: Ty, b: Ty) -> Ty {
    if a.rank() >= b.rank() {
        a
    } else {
        b
    }
}

fn elem_type(st: ScalarType) -> ElemType {
    match st {
        ScalarType::Int => ElemType::I32,
        ScalarType::Float => ElemType::F32,
        ScalarType::Double => ElemType::F64,
    }
}

#[derive(Debug, Clone)]
enum Binding {
    Var { slot: u16, ty: Ty, is_const: bool },
    Buf { idx: u16, ty: Ty },
    /// Shared array or plain local array: per-group storage.
    Store { id: u16, ty: Ty, len: u16 },
    Priv { id: u16, ty: Ty, elems: u16, is_array: bool },
}

struct RetCtx {
    slot: u16,
    ty: Ty,
    end_fixups: Vec<usize>,
}

struct Cx<'a> {
    file: &'a KernelFile,
    instrs: Vec<Instr>,
    pos: Vec<Pos>,
    cur_pos: Pos,
    scopes: Vec<HashMap<String, Binding>>,
    stores: Vec<StoreDecl>,
    /// Next variable slot (grows up) and lowest pinned literal slot
    /// (grows down); the two must never meet.
    next_slot: u16,
    const_floor: u16,
    const_init: Vec<(u16, u64)>,
    const_map: HashMap<(u8, u64), u16>,
    /// Nesting depth of inner loops at the current point.
    in_inner: u32,
    /// Jump fixups targeting the step point of each enclosing inner loop.
    inner_fixups: Vec<Vec<usize>>,
    ret_ctx: Option<RetCtx>,
}

type CResult<T> = Result<T, Diagnostic>;

fn terr<T>(pos: Pos, msg: impl Into<String>) -> CResult<T> {
    Err(Diagnostic::error("type", pos, msg.into()))
}

impl<'a> Cx<'a> {
    fn emit(&mut self, op: Op, a: u16, b: u16, c: u16, d: u16) -> usize {
        self.instrs.push(Instr::new(op, a, b, c, d));
        self.pos.push(self.cur_pos);
        self.instrs.len() - 1
    }

    fn here(&self) -> usize {
        self.instrs.len()
    }

    fn patch(&mut self, at: usize, target: usize) {
        debug_assert!(target <= u16::MAX as usize);
        self.instrs[at].b = target as u16;
    }

    fn patch_all(&mut self, fixups: &[usize], target: usize) {
        for &at in fixups {
            self.patch(at, target);
        }
    }

    fn alloc(&mut self, pos: Pos) -> CResult<u16> {
        if self.next_slot >= self.const_floor {
            return terr(pos, "kernel is too complex: variable slots exhausted");
        }
        let s = self.next_slot;
        self.next_slot += 1;
        Ok(s)
    }

    /// Pins a literal to a preloaded slot, reusing slots for equal values of
    /// the same type.
    fn const_slot(&mut self, ty: Ty, bits: u64, pos: Pos) -> CResult<u16> {
        let key = (ty.rank(), bits);
        if let Some(&s) = self.const_map.get(&key) {
            return Ok(s);
        }
        if self.const_floor <= self.next_slot {
            return terr(pos, "kernel is too complex: literal slots exhausted");
        }
        self.const_floor -= 1;
        let s = self.const_floor;
        self.const_init.push((s, bits));
        self.const_map.insert(key, s);
        Ok(s)
    }

    fn lookup(&self, name: &str) -> Option<&Binding> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn bind(&mut self, name: &str, b: Binding, pos: Pos) -> CResult<()> {
        let top = self.scopes.last_mut().expect("scope stack");
        if top.contains_key(name) {
            return Err(Diagnostic::error(
                "syntax",
                pos,
                format!("'{name}' is already declared in this scope"),
            ));
        }
        top.insert(name.to_string(), b);
        Ok(())
    }

    /// Emits a conversion writing `dst`; a Mov when no cast is needed.
    fn convert_into(&mut self, dst: u16, src: u16, from: Ty, to: Ty) {
        let op = match (from, to) {
            (Ty::I, Ty::D) => Op::IToD,
            (Ty::I, Ty::S) => Op::IToS,
            (Ty::S, Ty::D) => Op::SToD,
            (Ty::D, Ty::S) => Op::DToS,
            (Ty::D, Ty::I) => Op::DToI,
            (Ty::S, Ty::I) => Op::SToI,
            _ => {
                if dst != src {
                    self.emit(Op::Mov, dst, src, 0, 0);
                }
                return;
            }
        };
        self.emit(op, dst, src, 0, 0);
    }

    fn convert(&mut self, src: u16, from: Ty, to: Ty, pos: Pos) -> CResult<u16> {
        if from == to {
            return Ok(src);
        }
        let dst = self.alloc(pos)?;
        self.convert_into(dst, src, from, to);
        Ok(dst)
    }
}

/// Compile-time constant conversion, matching the interpreter's casts.
fn promote_const(bits: u64, from: Ty, to: Ty) -> u64 {
    match (from, to) {
        (Ty::I, Ty::D) => ((bits as i64) as f64).to_bits(),
        (Ty::I, Ty::S) => ((bits as i64) as f32).to_bits() as u64,
        (Ty::S, Ty::D) => (f32::from_bits(bits as u32) as f64).to_bits(),
        (Ty::D, Ty::S) => (f64::from_bits(bits) as f32).to_bits() as u64,
        (Ty::D, Ty::I) => (f64::from_bits(bits) as i64) as u64,
        (Ty::S, Ty::I) => (f32::from_bits(bits as u32) as i64) as u64,
        _ => bits,
    }
}

fn const_truthy(ty: Ty, bits: u64) -> bool {
    match ty {
        Ty::I => bits as i64 != 0,
        Ty::S => f32::from_bits(bits as u32) != 0.0,
        Ty::D => f64::from_bits(bits) != 0.0,
    }
}

fn fold_unary(op: UnOp, ty: Ty, bits: u64) -> (Ty, u64) {
    match op {
        UnOp::Neg => match ty {
            Ty::I => (Ty::I, (bits as i64).wrapping_neg() as u64),
            Ty::S => (Ty::S, (-f32::from_bits(bits as u32)).to_bits() as u64),
            Ty::D => (Ty::D, (-f64::from_bits(bits)).to_bits()),
        },
        UnOp::Not => (Ty::I, (!const_truthy(ty, bits)) as u64),
    }
}

fn fold_binary(op: BinOp, lhs: (Ty, u64), rhs: (Ty, u64)) -> Option<(Ty, u64)> {
    use BinOp::*;
    if matches!(op, And | Or) {
        let l = const_truthy(lhs.0, lhs.1);
        let r = const_truthy(rhs.0, rhs.1);
        let v = if op == And { l && r } else { l || r };
        return Some((Ty::I, v as u64));
    }
    let common = promote(lhs.0, rhs.0);
    let a = promote_const(lhs.1, lhs.0, common);
    let b = promote_const(rhs.1, rhs.0, common);
    if op == Mod {
        if common != Ty::I || b as i64 == 0 {
            return None;
        }
        return Some((Ty::I, (a as i64).wrapping_rem(b as i64) as u64));
    }
    match common {
        Ty::I => {
            let (x, y) = (a as i64, b as i64);
            let v = match op {
                Add => x.wrapping_add(y),
                Sub => x.wrapping_sub(y),
                Mul => x.wrapping_mul(y),
                Div => {
                    if y == 0 {
                        return None;
                    }
                    x.wrapping_div(y)
                }
                Lt => return Some((Ty::I, (x < y) as u64)),
                Le => return Some((Ty::I, (x <= y) as u64)),
                Gt => return Some((Ty::I, (x > y) as u64)),
                Ge => return Some((Ty::I, (x >= y) as u64)),
                Eq => return Some((Ty::I, (x == y) as u64)),
                Ne => return Some((Ty::I, (x != y) as u64)),
                Mod | And | Or => unreachable!(),
            };
            Some((Ty::I, v as u64))
        }
        Ty::S => {
            let (x, y) = (f32::from_bits(a as u32), f32::from_bits(b as u32));
            let v = match op {
                Add => x + y,
                Sub => x - y,
                Mul => x * y,
                Div => x / y,
                Lt => return Some((Ty::I, (x < y) as u64)),
                Le => return Some((Ty::I, (x <= y) as u64)),
                Gt => return Some((Ty::I, (x > y) as u64)),
                Ge => return Some((Ty::I, (x >= y) as u64)),
                Eq => return Some((Ty::I, (x == y) as u64)),
                Ne => return Some((Ty::I, (x != y) as u64)),
                Mod | And | Or => unreachable!(),
            };
            Some((Ty::S, v.to_bits() as u64))
        }
        Ty::D => {
            let (x, y) = (f64::from_bits(a), f64::from_bits(b));
            let v = match op {
                Add => x + y,
                Sub => x - y,
                Mul => x * y,
                Div => x / y,
                Lt => return Some((Ty::I, (x < y) as u64)),
                Le => return Some((Ty::I, (x <= y) as u64)),
                Gt => return Some((Ty::I, (x > y) as u64)),
                Ge => return Some((Ty::I, (x >= y) as u64)),
                Eq => return Some((Ty::I, (x == y) as u64)),
                Ne => return Some((Ty::I, (x != y) as u64)),
                Mod | And | Or => unreachable!(),
            };
            Some((Ty::D, v.to_bits()))
        }
    }
}

/// Evaluates a literal subtree at compile time. Platform flags fold to the
/// engine's fixed CPU/OpenMP values. Folding a division whose divisor is a
/// literal zero is refused so the runtime trap stays observable.
fn fold(e: &Expr) -> Option<(Ty, u64)> {
    match e {
        Expr::IntLit(v, _) => Some((Ty::I, *v as u64)),
        Expr::FloatLit(v, _) => Some((Ty::D, v.to_bits())),
        Expr::F32Lit(v, _) => Some((Ty::S, v.to_bits() as u64)),
        Expr::Builtin { builtin, .. } => match builtin {
            Builtin::Cpu | Builtin::OpenMp => Some((Ty::I, 1)),
            Builtin::Gpu | Builtin::OpenCl | Builtin::Cuda => Some((Ty::I, 0)),
            _ => None,
        },
        Expr::Unary { op, operand, .. } => fold(operand).map(|(t, b)| fold_unary(*op, t, b)),
        Expr::Binary { op, lhs, rhs, .. } => fold_binary(*op, fold(lhs)?, fold(rhs)?),
        _ => None,
    }
}

fn arith_op(op: BinOp, ty: Ty) -> Op {
    use BinOp::*;
    match (op, ty) {
        (Add, Ty::I) => Op::AddI,
        (Sub, Ty::I) => Op::SubI,
        (Mul, Ty::I) => Op::MulI,
        (Div, Ty::I) => Op::DivI,
        (Mod, Ty::I) => Op::RemI,
        (Add, Ty::S) => Op::AddS,
        (Sub, Ty::S) => Op::SubS,
        (Mul, Ty::S) => Op::MulS,
        (Div, Ty::S) => Op::DivS,
        (Add, Ty::D) => Op::AddD,
        (Sub, Ty::D) => Op::SubD,
        (Mul, Ty::D) => Op::MulD,
        (Div, Ty::D) => Op::DivD,
        _ => unreachable!("arith_op: {op:?} {ty:?}"),
    }
}

/// Comparison opcode with canonical operand order; Gt/Ge swap to Lt/Le.
fn cmp_op(op: BinOp, ty: Ty) -> (Op, bool) {
    use BinOp::*;
    let (base, swap) = match op {
        Eq => (0, false),
        Ne => (1, false),
        Lt => (2, false),
        Le => (3, false),
        Gt => (2, true),
        Ge => (3, true),
        _ => unreachable!(),
    };
    let ops = match ty {
        Ty::I => [Op::EqI, Op::NeI, Op::LtI, Op::LeI],
        Ty::D => [Op::EqD, Op::NeD, Op::LtD, Op::LeD],
        Ty::S => [Op::EqS, Op::NeS, Op::LtS, Op::LeS],
    };
    (ops[base], swap)
}

fn ld_buf(ty: Ty) -> Op {
    match ty {
        Ty::I => Op::LdBufI,
        Ty::S => Op::LdBufS,
        Ty::D => Op::LdBufD,
    }
}

fn st_buf(ty: Ty) -> Op {
    match ty {
        Ty::I => Op::StBufI,
        Ty::S => Op::StBufS,
        Ty::D => Op::StBufD,
    }
}

fn ld_store(ty: Ty) -> Op {
    match ty {
        Ty::I => Op::LdStI,
        Ty::S => Op::LdStS,
        Ty::D => Op::LdStD,
    }
}

fn st_store(ty: Ty) -> Op {
    match ty {
        Ty::I => Op::StStI,
        Ty::S => Op::StStS,
        Ty::D => Op::StStD,
    }
}

fn ld_priv(ty: Ty) -> Op {
    match ty {
        Ty::I => Op::LdPvI,
        Ty::S => Op::LdPvS,
        Ty::D => Op::LdPvD,
    }
}

fn st_priv(ty: Ty) -> Op {
    match ty {
        Ty::I => Op::StPvI,
        Ty::S => Op::StPvS,
        Ty::D => Op::StPvD,
    }
}

impl<'a> Cx<'a> {
    /// Compiles an expression into a readable slot. Variable and builtin-id
    /// reads return the live slot without copying; every operator allocates
    /// a fresh destination, so returned slots are never clobbered.
    fn expr(&mut self, e: &Expr) -> CResult<(u16, Ty)> {
        if let Some((ty, bits)) = fold(e) {
            let s = self.const_slot(ty, bits, e.pos())?;
            return Ok((s, ty));
        }
        match e {
            Expr::IntLit(..) | Expr::FloatLit(..) | Expr::F32Lit(..) => unreachable!(),
            Expr::Var { name, pos } => self.read_var(name, *pos),
            Expr::Index { name, index, pos } => self.read_index(name, index, *pos),
            Expr::Builtin { builtin, pos } => self.read_builtin(*builtin, *pos),
            Expr::Unary { op, operand, pos } => {
                let (s, ty) = self.expr(operand)?;
                self.cur_pos = *pos;
                match op {
                    UnOp::Neg => {
                        let dst = self.alloc(*pos)?;
                        let o = match ty {
                            Ty::I => Op::NegI,
                            Ty::S => Op::NegS,
                            Ty::D => Op::NegD,
                        };
                        self.emit(o, dst, s, 0, 0);
                        Ok((dst, ty))
                    }
                    UnOp::Not => {
                        let t = self.truthy01(s, ty, *pos)?;
                        let dst = self.alloc(*pos)?;
                        self.emit(Op::NotI, dst, t, 0, 0);
                        Ok((dst, Ty::I))
                    }
                }
            }
            Expr::Binary { op, lhs, rhs, pos } => self.binary(*op, lhs, rhs, *pos),
            Expr::Call { name, args, pos, .. } => self.call(name, args, *pos),
        }
    }

    /// Normalizes a value to int 0/1.
    fn truthy01(&mut self, s: u16, ty: Ty, pos: Pos) -> CResult<u16> {
        if ty == Ty::I {
            return Ok(s);
        }
        let dst = self.alloc(pos)?;
        let op = if ty == Ty::D { Op::NeD } else { Op::NeS };
        self.emit(op, dst, s, SLOT_ZERO, 0);
        Ok(dst)
    }

    /// Compiles one operand of a binary expression straight to `want`,
    /// promoting folded literals at compile time so mixed-type arithmetic
    /// with literals costs no runtime casts.
    fn operand_as(&mut self, e: &Expr, want: Ty) -> CResult<u16> {
        if let Some((ty, bits)) = fold(e) {
            return self.const_slot(want, promote_const(bits, ty, want), e.pos());
        }
        let (s, ty) = self.expr(e)?;
        self.convert(s, ty, want, e.pos())
    }

    fn operand_ty(&self, e: &Expr) -> CResult<Option<Ty>> {
        Ok(fold(e).map(|(t, _)| t))
    }

    fn binary(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr, pos: Pos) -> CResult<(u16, Ty)> {
        use BinOp::*;
        if matches!(op, And | Or) {
            return self.logic(op, lhs, rhs, pos);
        }

        // Establish operand types without emitting, folding literal sides.
        let lt = match self.operand_ty(lhs)? {
            Some(t) => t,
            None => self.peek_ty(lhs)?,
        };
        let rt = match self.operand_ty(rhs)? {
            Some(t) => t,
            None => self.peek_ty(rhs)?,
        };
        let common = promote(lt, rt);
        if op == Mod && common != Ty::I {
            return terr(pos, "operands of % must be integers");
        }

        let a = self.operand_as(lhs, common)?;
        let b = self.operand_as(rhs, common)?;
        self.cur_pos = pos;
        let dst = self.alloc(pos)?;
        match op {
            Add | Sub | Mul | Div | Mod => {
                self.emit(arith_op(op, common), dst, a, b, 0);
                Ok((dst, common))
            }
            Lt | Le | Gt | Ge | Eq | Ne => {
                let (o, swap) = cmp_op(op, common);
                let (x, y) = if swap { (b, a) } else { (a, b) };
                self.emit(o, dst, x, y, 0);
                Ok((dst, Ty::I))
            }
            And | Or => unreachable!(),
        }
    }

    /// Result type of an expression, computed without emitting code. Used to
    /// pick the promotion target before compiling operands.
    fn peek_ty(&mut self, e: &Expr) -> CResult<Ty> {
        Ok(match e {
            Expr::IntLit(..) => Ty::I,
            Expr::FloatLit(..) => Ty::D,
            Expr::F32Lit(..) => Ty::S,
            Expr::Var { name, pos } => match self.lookup(name) {
                Some(Binding::Var { ty, .. }) => *ty,
                Some(Binding::Priv { ty, .. }) => *ty,
                Some(Binding::Buf { .. }) | Some(Binding::Store { .. }) => {
                    return terr(*pos, format!("'{name}' needs an index here"));
                }
                None => return terr(*pos, format!("unknown variable '{name}'")),
            },
            Expr::Index { name, pos, .. } => match self.lookup(name) {
                Some(Binding::Buf { ty, .. })
                | Some(Binding::Store { ty, .. })
                | Some(Binding::Priv { ty, .. }) => *ty,
                Some(Binding::Var { .. }) => {
                    return terr(*pos, format!("'{name}' is not an array"));
                }
                None => return terr(*pos, format!("unknown variable '{name}'")),
            },
            Expr::Builtin { builtin, .. } => match builtin {
                Builtin::InnerId(_)
                | Builtin::OuterId(_)
                | Builtin::GlobalId(_)
                | Builtin::InnerDim(_)
                | Builtin::OuterDim(_)
                | Builtin::GlobalDim(_)
                | Builtin::Cpu
                | Builtin::Gpu
                | Builtin::OpenMp
                | Builtin::OpenCl
                | Builtin::Cuda => Ty::I,
            },
            Expr::Unary { op, operand, .. } => match op {
                UnOp::Neg => self.peek_ty(operand)?,
                UnOp::Not => Ty::I,
            },
            Expr::Binary { op, lhs, rhs, .. } => {
                use BinOp::*;
                match op {
                    Lt | Le | Gt | Ge | Eq | Ne | And | Or => Ty::I,
                    Mod => Ty::I,
                    _ => promote(self.peek_ty(lhs)?, self.peek_ty(rhs)?),
                }
            }
            Expr::Call { name, pos, .. } => match name.as_str() {
                "sqrt" | "fabs" | "exp" => Ty::D,
                "min" | "max" => {
                    if let Expr::Call { args, .. } = e {
                        promote(self.peek_ty(&args[0])?, self.peek_ty(&args[1])?)
                    } else {
                        unreachable!()
                    }
                }
                _ => match self.file.helpers.iter().find(|h| h.name == *name) {
                    Some(h) => Ty::of(h.ret),
                    None => return terr(*pos, format!("unknown function '{name}'")),
                },
            },
        })
    }

    /// Materialized `&&`/`||` producing int 0/1 with short-circuit order.
    fn logic(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr, pos: Pos) -> CResult<(u16, Ty)> {
        self.cur_pos = pos;
        let dst = self.alloc(pos)?;
        let (l, lt) = self.expr(lhs)?;
        let l01 = self.truthy01(l, lt, pos)?;
        self.emit(Op::Mov, dst, l01, 0, 0);
        let skip = if op == BinOp::And {
            self.emit(Op::Jz, dst, 0, 0, 0)
        } else {
            self.emit(Op::Jnz, dst, 0, 0, 0)
        };
        let (r, rt) = self.expr(rhs)?;
        let r01 = self.truthy01(r, rt, pos)?;
        self.emit(Op::Mov, dst, r01, 0, 0);
        let end = self.here();
        self.patch(skip, end);
        Ok((dst, Ty::I))
    }

    fn read_var(&mut self, name: &str, pos: Pos) -> CResult<(u16, Ty)> {
        self.cur_pos = pos;
        match self.lookup(name).cloned() {
            Some(Binding::Var { slot, ty, .. }) => Ok((slot, ty)),
            Some(Binding::Priv { id, ty, elems, is_array }) => {
                if is_array {
                    return terr(pos, format!("private array '{name}' needs an index"));
                }
                if self.in_inner == 0 {
                    self.emit(Op::TrapPriv, 0, 0, 0, 0);
                    return Ok((SLOT_ZERO, ty));
                }
                let dst = self.alloc(pos)?;
                self.emit(ld_priv(ty), dst, id, SLOT_ZERO, elems);
                Ok((dst, ty))
            }
            Some(Binding::Buf { .. }) => terr(pos, format!("buffer '{name}' needs an index")),
            Some(Binding::Store { .. }) => terr(pos, format!("array '{name}' needs an index")),
            None => terr(pos, format!("unknown variable '{name}'")),
        }
    }

    fn index_slot(&mut self, index: &Expr) -> CResult<u16> {
        let (s, ty) = self.expr(index)?;
        if ty != Ty::I {
            return terr(index.pos(), "array index must be an integer");
        }
        Ok(s)
    }

    fn read_index(&mut self, name: &str, index: &Expr, pos: Pos) -> CResult<(u16, Ty)> {
        match self.lookup(name).cloned() {
            Some(Binding::Buf { idx, ty }) => {
                let i = self.index_slot(index)?;
                self.cur_pos = pos;
                let dst = self.alloc(pos)?;
                self.emit(ld_buf(ty), dst, idx, i, 0);
                Ok((dst, ty))
            }
            Some(Binding::Store { id, ty, len }) => {
                let i = self.index_slot(index)?;
                self.cur_pos = pos;
                let dst = self.alloc(pos)?;
                self.emit(ld_store(ty), dst, id, i, len);
                Ok((dst, ty))
            }
            Some(Binding::Priv { id, ty, elems, is_array }) => {
                if !is_array {
                    return terr(pos, format!("'{name}' is not an array"));
                }
                if self.in_inner == 0 {
                    self.cur_pos = pos;
                    self.emit(Op::TrapPriv, 0, 0, 0, 0);
                    return Ok((SLOT_ZERO, ty));
                }
                let i = self.index_slot(index)?;
                self.cur_pos = pos;
                let dst = self.alloc(pos)?;
                self.emit(ld_priv(ty), dst, id, i, elems);
                Ok((dst, ty))
            }
            Some(Binding::Var { .. }) => terr(pos, format!("'{name}' is not an array")),
            None => terr(pos, format!("unknown variable '{name}'")),
        }
    }

    fn read_builtin(&mut self, b: Builtin, pos: Pos) -> CResult<(u16, Ty)> {
        self.cur_pos = pos;
        match b {
            Builtin::InnerId(a) => Ok((SLOT_INNER_ID + a as u16, Ty::I)),
            Builtin::OuterId(a) => Ok((SLOT_OUTER_ID + a as u16, Ty::I)),
            Builtin::InnerDim(a) => Ok((SLOT_INNER_DIM + a as u16, Ty::I)),
            Builtin::OuterDim(a) => Ok((SLOT_OUTER_DIM + a as u16, Ty::I)),
            Builtin::GlobalId(a) => {
                let dst = self.alloc(pos)?;
                self.emit(Op::GlobId, dst, a as u16, 0, 0);
                Ok((dst, Ty::I))
            }
            Builtin::GlobalDim(a) => {
                let dst = self.alloc(pos)?;
                self.emit(
                    Op::MulI,
                    dst,
                    SLOT_INNER_DIM + a as u16,
                    SLOT_OUTER_DIM + a as u16,
                    0,
                );
                Ok((dst, Ty::I))
            }
            // Platform flags fold before this point.
            Builtin::Cpu | Builtin::Gpu | Builtin::OpenMp | Builtin::OpenCl | Builtin::Cuda => {
                unreachable!("platform flags fold")
            }
        }
    }

    fn call(&mut self, name: &str, args: &[Expr], pos: Pos) -> CResult<(u16, Ty)> {
        match name {
            "sqrt" | "fabs" | "exp" => {
                let a = self.operand_as(&args[0], Ty::D)?;
                self.cur_pos = pos;
                let dst = self.alloc(pos)?;
                let op = match name {
                    "sqrt" => Op::SqrtD,
                    "fabs" => Op::FabsD,
                    _ => Op::ExpD,
                };
                self.emit(op, dst, a, 0, 0);
                Ok((dst, Ty::D))
            }
            "min" | "max" => {
                let lt = match self.operand_ty(&args[0])? {
                    Some(t) => t,
                    None => self.peek_ty(&args[0])?,
                };
                let rt = match self.operand_ty(&args[1])? {
                    Some(t) => t,
                    None => self.peek_ty(&args[1])?,
                };
                let common = promote(lt, rt);
                let a = self.operand_as(&args[0], common)?;
                let b = self.operand_as(&args[1], common)?;
                self.cur_pos = pos;
                let dst = self.alloc(pos)?;
                let op = match (name, common) {
                    ("min", Ty::I) => Op::MinI,
                    ("min", Ty::S) => Op::MinS,
                    ("min", Ty::D) => Op::MinD,
                    ("max", Ty::I) => Op::MaxI,
                    ("max", Ty::S) => Op::MaxS,
                    (_, Ty::D) => Op::MaxD,
                    _ => unreachable!(),
                };
                self.emit(op, dst, a, b, 0);
                Ok((dst, common))
            }
            _ => self.inline_helper(name, args, pos),
        }
    }

    fn inline_helper(&mut self, name: &str, args: &[Expr], pos: Pos) -> CResult<(u16, Ty)> {
        let h = match self.file.helpers.iter().find(|h| h.name == name) {
            Some(h) => h.clone(),
            None => return terr(pos, format!("unknown function '{name}'")),
        };
        if h.params.len() != args.len() {
            return terr(
                pos,
                format!("'{name}' takes {} argument(s), got {}", h.params.len(), args.len()),
            );
        }

        // Evaluate arguments in the caller's scope, then bind them to fresh
        // parameter slots visible only to the inlined body.
        let mut param_scope = HashMap::new();
        for (p, a) in h.params.iter().zip(args) {
            let want = Ty::of(p.ty);
            let src = self.operand_as(a, want)?;
            let slot = self.alloc(p.pos)?;
            self.cur_pos = pos;
            self.emit(Op::Mov, slot, src, 0, 0);
            param_scope.insert(
                p.name.clone(),
                Binding::Var { slot, ty: want, is_const: param_is_const(p) },
            );
        }

        let ret_ty = Ty::of(h.ret);
        let ret_slot = self.alloc(pos)?;
        // Falling off the end without a return yields zero.
        self.emit(Op::Mov, ret_slot, SLOT_ZERO, 0, 0);

        let saved_scopes = std::mem::replace(&mut self.scopes, vec![param_scope]);
        let saved_ret = self.ret_ctx.replace(RetCtx { slot: ret_slot, ty: ret_ty, end_fixups: Vec::new() });

        let result = self.block(&h.body);

        let ret = self.ret_ctx.take().expect("ret ctx");
        self.scopes = saved_scopes;
        self.ret_ctx = saved_ret;
        result?;
        let end = self.here();
        self.patch_all(&ret.end_fixups, end);
        Ok((ret_slot, ret_ty))
    }

    /// Emits jumps taken when `e` is false, appending their indices to
    /// `fixups`. Comparisons and short-circuit operators branch directly
    /// without materializing a 0/1 value.
    fn branch_false(&mut self, e: &Expr, fixups: &mut Vec<usize>) -> CResult<()> {
        if let Some((ty, bits)) = fold(e) {
            if !const_truthy(ty, bits) {
                self.cur_pos = e.pos();
                let j = self.emit(Op::Jmp, 0, 0, 0, 0);
                fixups.push(j);
            }
            return Ok(());
        }
        match e {
            Expr::Binary { op: BinOp::And, lhs, rhs, .. } => {
                self.branch_false(lhs, fixups)?;
                self.branch_false(rhs, fixups)
            }
            Expr::Binary { op: BinOp::Or, lhs, rhs, .. } => {
                let mut true_fix = Vec::new();
                self.branch_true(lhs, &mut true_fix)?;
                self.branch_false(rhs, fixups)?;
                let here = self.here();
                self.patch_all(&true_fix, here);
                Ok(())
            }
            Expr::Unary { op: UnOp::Not, operand, .. } => self.branch_true(operand, fixups),
            Expr::Binary { op, lhs, rhs, pos }
                if matches!(
                    op,
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
                ) =>
            {
                let (s, _) = self.binary(*op, lhs, rhs, *pos)?;
                let j = self.emit(Op::Jz, s, 0, 0, 0);
                fixups.push(j);
                Ok(())
            }
            _ => {
                let (s, ty) = self.expr(e)?;
                self.cur_pos = e.pos();
                // Raw nonzero test; no need to normalize to 0/1.
                let s = if ty == Ty::I {
                    s
                } else {
                    self.truthy01(s, ty, e.pos())?
                };
                let j = self.emit(Op::Jz, s, 0, 0, 0);
                fixups.push(j);
                Ok(())
            }
        }
    }

    /// Dual of [`Cx::branch_false`]: jumps taken when `e` is true.
    fn branch_true(&mut self, e: &Expr, fixups: &mut Vec<usize>) -> CResult<()> {
        if let Some((ty, bits)) = fold(e) {
            if const_truthy(ty, bits) {
                self.cur_pos = e.pos();
                let j = self.emit(Op::Jmp, 0, 0, 0, 0);
                fixups.push(j);
            }
            return Ok(());
        }
        match e {
            Expr::Binary { op: BinOp::Or, lhs, rhs, .. } => {
                self.branch_true(lhs, fixups)?;
                self.branch_true(rhs, fixups)
            }
            Expr::Binary { op: BinOp::And, lhs, rhs, .. } => {
                let mut false_fix = Vec::new();
                self.branch_false(lhs, &mut false_fix)?;
                self.branch_true(rhs, fixups)?;
                let here = self.here();
                self.patch_all(&false_fix, here);
                Ok(())
            }
            Expr::Unary { op: UnOp::Not, operand, .. } => self.branch_false(operand, fixups),
            Expr::Binary { op, lhs, rhs, pos }
                if matches!(
                    op,
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
                ) =>
            {
                let (s, _) = self.binary(*op, lhs, rhs, *pos)?;
                let j = self.emit(Op::Jnz, s, 0, 0, 0);
                fixups.push(j);
                Ok(())
            }
            _ => {
                let (s, ty) = self.expr(e)?;
                self.cur_pos = e.pos();
                let s = if ty == Ty::I {
                    s
                } else {
                    self.truthy01(s, ty, e.pos())?
                };
                let j = self.emit(Op::Jnz, s, 0, 0, 0);
                fixups.push(j);
                Ok(())
            }
        }
    }

    fn block(&mut self, b: &Block) -> CResult<()> {
        self.scopes.push(HashMap::new());
        let saved_next = self.next_slot;
        let r = b.stmts.iter().try_for_each(|s| self.stmt(s));
        self.next_slot = saved_next;
        self.scopes.pop();
        r
    }

    fn stmt(&mut self, s: &Stmt) -> CResult<()> {
        self.cur_pos = s.pos();
        match s {
            Stmt::Decl { quals, ty, name, array_len, init, shared, pos } => {
                self.decl(quals, *ty, name, *array_len, init.as_ref(), *shared, *pos)
            }
            Stmt::PrivateDecl { ty, name, elems, is_array, pos } => {
                if *elems == 0 || *elems > u16::MAX as usize {
                    return terr(*pos, "private array length out of range");
                }
                let id = self.stores.len() as u16;
                self.stores.push(StoreDecl::PerItem { elems: *elems });
                self.bind(
                    name,
                    Binding::Priv { id, ty: Ty::of(*ty), elems: *elems as u16, is_array: *is_array },
                    *pos,
                )
            }
            Stmt::Assign { target, op, value, pos } => self.assign(target, *op, value, *pos),
            Stmt::Incr { name, negative, pos } => self.incr(name, *negative, *pos),
            Stmt::If { cond, then_block, else_block, pos } => {
                self.cur_pos = *pos;
                let mut false_fix = Vec::new();
                self.branch_false(cond, &mut false_fix)?;
                self.block(then_block)?;
                match else_block {
                    Some(eb) => {
                        let skip = self.emit(Op::Jmp, 0, 0, 0, 0);
                        let here = self.here();
                        self.patch_all(&false_fix, here);
                        self.block(eb)?;
                        let end = self.here();
                        self.patch(skip, end);
                    }
                    None => {
                        let here = self.here();
                        self.patch_all(&false_fix, here);
                    }
                }
                Ok(())
            }
            Stmt::For { init, cond, step, body, .. } => {
                self.scopes.push(HashMap::new());
                let saved_next = self.next_slot;
                let r = (|| {
                    self.stmt(init)?;
                    let start = self.here();
                    let mut end_fix = Vec::new();
                    self.branch_false(cond, &mut end_fix)?;
                    self.block(body)?;
                    self.stmt(step)?;
                    let j = self.emit(Op::Jmp, 0, 0, 0, 0);
                    self.patch(j, start);
                    let end = self.here();
                    self.patch_all(&end_fix, end);
                    Ok(())
                })();
                self.next_slot = saved_next;
                self.scopes.pop();
                r
            }
            Stmt::InnerFor { axis, body, pos } => {
                self.cur_pos = *pos;
                let id = SLOT_INNER_ID + *axis as u16;
                let dim = SLOT_INNER_DIM + *axis as u16;
                self.emit(Op::Mov, id, SLOT_ZERO, 0, 0);
                let start = self.here();
                self.in_inner += 1;
                self.inner_fixups.push(Vec::new());
                let r = self.block(body);
                let fixups = self.inner_fixups.pop().expect("inner fixups");
                self.in_inner -= 1;
                r?;
                // Step point: occaInnerReturn jumps land here.
                let step = self.here();
                self.patch_all(&fixups, step);
                self.cur_pos = *pos;
                self.emit(Op::IncI, id, 0, 0, 0);
                let t = self.alloc(*pos)?;
                self.emit(Op::LtI, t, id, dim, 0);
                let j = self.emit(Op::Jnz, t, 0, 0, 0);
                self.patch(j, start);
                // Ids read as zero outside their nest.
                self.emit(Op::Mov, id, SLOT_ZERO, 0, 0);
                self.next_slot = t; // t was the last allocation
                Ok(())
            }
            Stmt::Barrier { .. } => Ok(()),
            Stmt::InnerReturn { pos } => {
                self.cur_pos = *pos;
                let j = self.emit(Op::Jmp, 0, 0, 0, 0);
                match self.inner_fixups.last_mut() {
                    Some(f) => {
                        f.push(j);
                        Ok(())
                    }
                    None => Err(Diagnostic::error(
                        "structure",
                        *pos,
                        "occaInnerReturn outside inner loops",
                    )),
                }
            }
            Stmt::Return { value, pos } => {
                self.cur_pos = *pos;
                if self.ret_ctx.is_none() {
                    return Err(Diagnostic::error(
                        "structure",
                        *pos,
                        "return outside a device function",
                    ));
                }
                let (slot, ty) = {
                    let r = self.ret_ctx.as_ref().unwrap();
                    (r.slot, r.ty)
                };
                let src = self.operand_as(value, ty)?;
                self.cur_pos = *pos;
                self.convert_into(slot, src, ty, ty);
                let j = self.emit(Op::Jmp, 0, 0, 0, 0);
                self.ret_ctx.as_mut().unwrap().end_fixups.push(j);
                Ok(())
            }
            Stmt::ExprStmt { expr, .. } => {
                let _ = self.expr(expr)?;
                Ok(())
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn decl(
        &mut self,
        quals: &[Qual],
        ty: ScalarType,
        name: &str,
        array_len: Option<usize>,
        init: Option<&Expr>,
        shared: bool,
        pos: Pos,
    ) -> CResult<()> {
        let vty = Ty::of(ty);
        if shared || array_len.is_some() {
            let len = array_len.unwrap_or(1);
            if len == 0 || len > u16::MAX as usize {
                return terr(pos, "array length out of range");
            }
            if init.is_some() {
                return terr(pos, "array declarations cannot have initializers");
            }
            let id = self.stores.len() as u16;
            self.stores.push(StoreDecl::Fixed { len });
            return self.bind(name, Binding::Store { id, ty: vty, len: len as u16 }, pos);
        }
        let is_const = quals
            .iter()
            .any(|q| matches!(q, Qual::Const | Qual::PlainConst | Qual::Constant));
        let slot = self.alloc(pos)?;
        match init {
            Some(e) => {
                let src = self.operand_as(e, vty)?;
                self.cur_pos = pos;
                if src != slot {
                    self.emit(Op::Mov, slot, src, 0, 0);
                }
            }
            None => {
                // Uninitialized variables read as zero: deterministic, and
                // slot reuse can never leak a previous value.
                self.emit(Op::Mov, slot, SLOT_ZERO, 0, 0);
            }
        }
        self.bind(name, Binding::Var { slot, ty: vty, is_const }, pos)
    }

    fn assign(&mut self, target: &Target, op: AssignOp, value: &Expr, pos: Pos) -> CResult<()> {
        let bin = match op {
            AssignOp::Set => None,
            AssignOp::Add => Some(BinOp::Add),
            AssignOp::Sub => Some(BinOp::Sub),
            AssignOp::Mul => Some(BinOp::Mul),
            AssignOp::Div => Some(BinOp::Div),
            AssignOp::Mod => Some(BinOp::Mod),
        };
        match target {
            Target::Var { name, pos: tpos } => match self.lookup(name).cloned() {
                Some(Binding::Var { slot, ty, is_const }) => {
                    if is_const {
                        return terr(*tpos, format!("assignment to const variable '{name}'"));
                    }
                    match bin {
                        None => {
                            let src = self.operand_as(value, ty)?;
                            self.cur_pos = pos;
                            if src != slot {
                                self.emit(Op::Mov, slot, src, 0, 0);
                            }
                            Ok(())
                        }
                        Some(b) => self.compound_into(slot, ty, b, value, pos),
                    }
                }
                Some(Binding::Priv { id, ty, elems, is_array }) => {
                    if is_array {
                        return terr(*tpos, format!("private array '{name}' needs an index"));
                    }
                    if self.in_inner == 0 {
                        self.cur_pos = pos;
                        self.emit(Op::TrapPriv, 0, 0, 0, 0);
                        return Ok(());
                    }
                    self.store_cell(
                        CellRef::Priv { id, elems },
                        ty,
                        SLOT_ZERO,
                        bin,
                        value,
                        pos,
                    )
                }
                Some(Binding::Buf { .. }) | Some(Binding::Store { .. }) => {
                    terr(*tpos, format!("'{name}' needs an index here"))
                }
                None => terr(*tpos, format!("unknown variable '{name}'")),
            },
            Target::Index { name, index, pos: tpos } => match self.lookup(name).cloned() {
                Some(Binding::Buf { idx, ty }) => {
                    let i = self.index_slot(index)?;
                    self.store_cell(CellRef::Buf { idx }, ty, i, bin, value, pos)
                }
                Some(Binding::Store { id, ty, len }) => {
                    let i = self.index_slot(index)?;
                    self.store_cell(CellRef::Store { id, len }, ty, i, bin, value, pos)
                }
                Some(Binding::Priv { id, ty, elems, is_array }) => {
                    if !is_array {
                        return terr(*tpos, format!("'{name}' is not an array"));
                    }
                    if self.in_inner == 0 {
                        self.cur_pos = pos;
                        self.emit(Op::TrapPriv, 0, 0, 0, 0);
                        return Ok(());
                    }
                    let i = self.index_slot(index)?;
                    self.store_cell(CellRef::Priv { id, elems }, ty, i, bin, value, pos)
                }
                Some(Binding::Var { .. }) => terr(*tpos, format!("'{name}' is not an array")),
                None => terr(*tpos, format!("unknown variable '{name}'")),
            },
            Target::Builtin { pos: tpos, .. } => {
                terr(*tpos, "cannot assign to a work-size builtin")
            }
        }
    }

    /// `slot = slot op value` with C conversions through the common type.
    fn compound_into(
        &mut self,
        slot: u16,
        ty: Ty,
        op: BinOp,
        value: &Expr,
        pos: Pos,
    ) -> CResult<()> {
        let rt = match self.operand_ty(value)? {
            Some(t) => t,
            None => self.peek_ty(value)?,
        };
        let common = promote(ty, rt);
        if op == BinOp::Mod && common != Ty::I {
            return terr(pos, "operands of % must be integers");
        }
        let rhs = self.operand_as(value, common)?;
        self.cur_pos = pos;
        if common == ty {
            self.emit(arith_op(op, common), slot, slot, rhs, 0);
        } else {
            let lhs = self.convert(slot, ty, common, pos)?;
            let tmp = self.alloc(pos)?;
            self.emit(arith_op(op, common), tmp, lhs, rhs, 0);
            self.convert_into(slot, tmp, common, ty);
        }
        Ok(())
    }

    /// Read-modify-write (or plain write) of a buffer, group-store, or
    /// private cell. The index slot is evaluated once and reused.
    fn store_cell(
        &mut self,
        cell: CellRef,
        ty: Ty,
        idx: u16,
        bin: Option<BinOp>,
        value: &Expr,
        pos: Pos,
    ) -> CResult<()> {
        let val = match bin {
            None => self.operand_as(value, ty)?,
            Some(op) => {
                let rt = match self.operand_ty(value)? {
                    Some(t) => t,
                    None => self.peek_ty(value)?,
                };
                let common = promote(ty, rt);
                if op == BinOp::Mod && common != Ty::I {
                    return terr(pos, "operands of % must be integers");
                }
                let rhs = self.operand_as(value, common)?;
                self.cur_pos = pos;
                let cur = self.alloc(pos)?;
                self.load_cell(cell, ty, cur, idx);
                let lhs = self.convert(cur, ty, common, pos)?;
                let tmp = self.alloc(pos)?;
                self.emit(arith_op(op, common), tmp, lhs, rhs, 0);
                self.convert(tmp, common, ty, pos)?
            }
        };
        self.cur_pos = pos;
        match cell {
            CellRef::Buf { idx: b } => {
                self.emit(st_buf(ty), val, b, idx, 0);
            }
            CellRef::Store { id, len } => {
                self.emit(st_store(ty), val, id, idx, len);
            }
            CellRef::Priv { id, elems } => {
                self.emit(st_priv(ty), val, id, idx, elems);
            }
        }
        Ok(())
    }

    fn load_cell(&mut self, cell: CellRef, ty: Ty, dst: u16, idx: u16) {
        match cell {
            CellRef::Buf { idx: b } => {
                self.emit(ld_buf(ty), dst, b, idx, 0);
            }
            CellRef::Store { id, len } => {
                self.emit(ld_store(ty), dst, id, idx, len);
            }
            CellRef::Priv { id, elems } => {
                self.emit(ld_priv(ty), dst, id, idx, elems);
            }
        }
    }

    fn incr(&mut self, name: &str, negative: bool, pos: Pos) -> CResult<()> {
        self.cur_pos = pos;
        match self.lookup(name).cloned() {
            Some(Binding::Var { slot, ty, is_const }) => {
                if is_const {
                    return terr(pos, format!("assignment to const variable '{name}'"));
                }
                if ty != Ty::I {
                    return terr(pos, "++/-- requires an integer variable");
                }
                self.emit(if negative { Op::DecI } else { Op::IncI }, slot, 0, 0, 0);
                Ok(())
            }
            Some(Binding::Priv { id, ty, elems, is_array }) => {
                if is_array {
                    return terr(pos, format!("private array '{name}' needs an index"));
                }
                if ty != Ty::I {
                    return terr(pos, "++/-- requires an integer variable");
                }
                if self.in_inner == 0 {
                    self.emit(Op::TrapPriv, 0, 0, 0, 0);
                    return Ok(());
                }
                let tmp = self.alloc(pos)?;
                self.emit(ld_priv(ty), tmp, id, SLOT_ZERO, elems);
                self.emit(if negative { Op::DecI } else { Op::IncI }, tmp, 0, 0, 0);
                self.emit(st_priv(ty), tmp, id, SLOT_ZERO, elems);
                Ok(())
            }
            Some(_) => terr(pos, format!("'{name}' is not an assignable variable")),
            None => terr(pos, format!("unknown variable '{name}'")),
        }
    }
}

#[derive(Clone, Copy)]
enum CellRef {
    Buf { idx: u16 },
    Store { id: u16, len: u16 },
    Priv { id: u16, elems: u16 },
}

fn param_is_const(p: &Param) -> bool {
    p.quals
        .iter()
        .any(|q| matches!(q, Qual::Const | Qual::PlainConst | Qual::Constant))
}

/// Compiles the named kernel of a parsed file. The caller has already run
/// validation; structural errors surfacing here are defensive.
pub(crate) fn compile(file: &KernelFile, name: &str) -> Result<Program, Diagnostic> {
    let kernel = file
        .kernel(name)
        .ok_or_else(|| {
            Diagnostic::error("structure", Pos::new(1, 1), format!("kernel '{name}' not found"))
        })?
        .clone();

    let mut cx = Cx {
        file,
        instrs: Vec::new(),
        pos: Vec::new(),
        cur_pos: kernel.pos,
        scopes: vec![HashMap::new()],
        stores: Vec::new(),
        next_slot: SLOT_FIRST_FREE,
        const_floor: FRAME_SLOTS,
        const_init: Vec::new(),
        const_map: HashMap::new(),
        in_inner: 0,
        inner_fixups: Vec::new(),
        ret_ctx: None,
    };

    let mut params = Vec::new();
    let mut param_names = Vec::new();
    let mut scalar_slots = Vec::new();
    let mut nbufs: u16 = 0;
    for p in &kernel.params {
        param_names.push(p.name.clone());
        if p.is_pointer {
            params.push(ParamKind::Buf(elem_type(p.ty)));
            cx.bind(&p.name, Binding::Buf { idx: nbufs, ty: Ty::of(p.ty) }, p.pos)?;
            nbufs += 1;
        } else {
            params.push(ParamKind::Scalar(elem_type(p.ty)));
            let slot = cx.alloc(p.pos)?;
            scalar_slots.push(slot);
            cx.bind(
                &p.name,
                Binding::Var { slot, ty: Ty::of(p.ty), is_const: param_is_const(p) },
                p.pos,
            )?;
        }
    }

    cx.block(&kernel.body)?;
    cx.emit(Op::Halt, 0, 0, 0, 0);

    let prog = Program {
        kernel_name: kernel.name.clone(),
        params,
        param_names,
        instrs: cx.instrs,
        pos: cx.pos,
        frame_len: FRAME_SLOTS as usize,
        stores: cx.stores,
        const_init: cx.const_init,
        scalar_slots,
    };
    if let Err(m) = crate::engine::vm::verify(&prog) {
        return Err(Diagnostic::error(
            "structure",
            kernel.pos,
            format!("internal compile check failed: {m}"),
        ));
    }
    Ok(prog)
}
