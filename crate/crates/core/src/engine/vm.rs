//! Bytecode interpreter for compiled kernels.
//!
//! A kernel compiles once into a flat register program (`Program`). The
//! engine then runs that program once per work-group with the group ids
//! preloaded into fixed slots. Inner loops are ordinary counted loops in the
//! bytecode, so one run of the program executes every work-item of the group
//! in the serial order the model prescribes (tZ outermost, tX innermost).
//!
//! Slot layout (u64 registers, fixed prefix):
//!   0..3   tX tY tZ   inner ids
//!   3..6   bX bY bZ   outer ids
//!   6..9   d0 d1 d2   inner dims
//!   9..12  D0 D1 D2   outer dims
//!   12     always 0
//!   13..   scalar params, then locals and temporaries
//!
//! Literal constants are not loaded by instructions: the compiler assigns
//! them slots at the top of the frame and [`Program::const_init`] seeds them
//! when the launch builds its frame template, so a literal costs nothing per
//! work-item.
//!
//! Integers are 64-bit two's complement with wrapping arithmetic; floats are
//! IEEE f64/f32 stored by bit pattern (f32 in the low 32 bits). Every buffer,
//! shared-array, and private access is bounds checked and traps instead of
//! touching memory out of range.

use crate::diag::Pos;

pub(crate) const SLOT_INNER_ID: u16 = 0;
pub(crate) const SLOT_OUTER_ID: u16 = 3;
pub(crate) const SLOT_INNER_DIM: u16 = 6;
pub(crate) const SLOT_OUTER_DIM: u16 = 9;
pub(crate) const SLOT_ZERO: u16 = 12;
pub(crate) const SLOT_FIRST_FREE: u16 = 13;

/// Element type of a buffer or scalar value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemType {
    I32,
    F32,
    F64,
}

impl ElemType {
    pub fn name(self) -> &'static str {
        match self {
            ElemType::I32 => "i32",
            ElemType::F32 => "f32",
            ElemType::F64 => "f64",
        }
    }

    pub fn byte_size(self) -> usize {
        match self {
            ElemType::I32 | ElemType::F32 => 4,
            ElemType::F64 => 8,
        }
    }
}

/// Kernel parameter kind, aligned with the source signature after the
/// info-arg placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ParamKind {
    Buf(ElemType),
    Scalar(ElemType),
}

/// Per-group storage: shared arrays and plain local arrays have a fixed
/// element count, private stores hold `elems` cells for each work-item.
#[derive(Debug, Clone)]
pub(crate) enum StoreDecl {
    Fixed { len: usize },
    PerItem { elems: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(clippy::upper_case_acronyms)]
pub(crate) enum Op {
    Halt,
    Jmp,
    Jz,
    Jnz,
    Mov,

    AddI,
    SubI,
    MulI,
    DivI,
    RemI,
    NegI,
    NotI,
    IncI,
    DecI,

    EqI,
    NeI,
    LtI,
    LeI,

    AddD,
    SubD,
    MulD,
    DivD,
    NegD,
    EqD,
    NeD,
    LtD,
    LeD,

    AddS,
    SubS,
    MulS,
    DivS,
    NegS,
    EqS,
    NeS,
    LtS,
    LeS,

    IToD,
    IToS,
    SToD,
    DToS,
    DToI,
    SToI,

    LdBufD,
    LdBufS,
    LdBufI,
    StBufD,
    StBufS,
    StBufI,

    LdStD,
    LdStS,
    LdStI,
    StStD,
    StStS,
    StStI,

    LdPvD,
    LdPvS,
    LdPvI,
    StPvD,
    StPvS,
    StPvI,

    GlobId,

    SqrtD,
    FabsD,
    ExpD,
    MinI,
    MaxI,
    MinD,
    MaxD,
    MinS,
    MaxS,

    TrapPriv,
}

/// One 8-byte instruction. `a` is the destination slot (or the value slot
/// for stores); `b`, `c`, `d` are source slots, table ids, immediate sizes,
/// or jump targets depending on the opcode.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Instr {
    pub op: Op,
    pub a: u8,
    pub b: u16,
    pub c: u16,
    pub d: u16,
}

impl Instr {
    pub(crate) fn new(op: Op, a: u16, b: u16, c: u16, d: u16) -> Instr {
        debug_assert!(a < 256);
        Instr { op, a: a as u8, b, c, d }
    }
}

/// A compiled kernel, shared immutably between worker threads.
#[derive(Debug)]
pub struct Program {
    pub(crate) kernel_name: String,
    pub(crate) params: Vec<ParamKind>,
    pub(crate) param_names: Vec<String>,
    pub(crate) instrs: Vec<Instr>,
    pub(crate) pos: Vec<Pos>,
    pub(crate) frame_len: usize,
    pub(crate) stores: Vec<StoreDecl>,
    /// Literal values preloaded into the frame template: (slot, bit pattern).
    pub(crate) const_init: Vec<(u16, u64)>,
    /// Frame slot of each scalar parameter, in scalar-parameter order.
    pub(crate) scalar_slots: Vec<u16>,
}

impl Program {
    pub fn name(&self) -> &str {
        &self.kernel_name
    }

    /// Name of the source parameter behind buffer-table entry `idx`.
    pub(crate) fn buf_name(&self, idx: usize) -> &str {
        let mut seen = 0;
        for (k, p) in self.params.iter().enumerate() {
            if let ParamKind::Buf(_) = p {
                if seen == idx {
                    return &self.param_names[k];
                }
                seen += 1;
            }
        }
        "?"
    }
}

/// Raw view of a buffer's storage, valid for the duration of one invoke.
#[derive(Clone, Copy)]
pub(crate) struct RawBuf {
    pub ptr: *mut u8,
    pub len: usize,
}

/// The buffer table handed to worker threads. Safety: invoke marks every
/// referenced buffer in-use before building the table and clears the marks
/// only after all groups finish, so the pointers stay valid and no host
/// access races the run.
pub(crate) struct BufTable(pub Vec<RawBuf>);

unsafe impl Send for BufTable {}
unsafe impl Sync for BufTable {}

#[derive(Debug, Clone)]
pub(crate) enum TrapKind {
    OobBuf { buf: usize, idx: i64, len: usize },
    OobStore { idx: i64, len: usize },
    OobPriv { idx: i64, elems: usize },
    DivZero,
    PrivOutsideNest,
}

#[derive(Debug, Clone)]
pub(crate) struct Trap {
    pub pc: usize,
    pub kind: TrapKind,
}

impl Trap {
    pub(crate) fn render(&self, prog: &Program) -> String {
        let pos = prog.pos.get(self.pc).copied().unwrap_or(Pos::new(0, 0));
        let at = format!("at {}:{}", pos.line, pos.col);
        match &self.kind {
            TrapKind::OobBuf { buf, idx, len } => format!(
                "kernel '{}': index {} out of range for buffer '{}' (length {}) {}",
                prog.kernel_name,
                idx,
                prog.buf_name(*buf),
                len,
                at
            ),
            TrapKind::OobStore { idx, len } => format!(
                "kernel '{}': index {} out of range for shared array (length {}) {}",
                prog.kernel_name, idx, len, at
            ),
            TrapKind::OobPriv { idx, elems } => format!(
                "kernel '{}': index {} out of range for private array (length {}) {}",
                prog.kernel_name, idx, elems, at
            ),
            TrapKind::DivZero => {
                format!("kernel '{}': division by zero {}", prog.kernel_name, at)
            }
            TrapKind::PrivOutsideNest => format!(
                "kernel '{}': private variable accessed outside an inner loop nest {}",
                prog.kernel_name, at
            ),
        }
    }
}

#[inline(always)]
fn gi(r: &[u64], s: u16) -> i64 {
    r[s as usize] as i64
}

#[inline(always)]
fn gd(r: &[u64], s: u16) -> f64 {
    f64::from_bits(r[s as usize])
}

#[inline(always)]
fn gs(r: &[u64], s: u16) -> f32 {
    f32::from_bits(r[s as usize] as u32)
}

#[inline(always)]
fn si(r: &mut [u64], s: u8, v: i64) {
    r[s as usize] = v as u64;
}

#[inline(always)]
fn sd(r: &mut [u64], s: u8, v: f64) {
    r[s as usize] = v.to_bits();
}

#[inline(always)]
fn ss(r: &mut [u64], s: u8, v: f32) {
    r[s as usize] = v.to_bits() as u64;
}

#[inline(always)]
fn bool_i(v: bool) -> i64 {
    v as i64
}

/// Flattened index of the current work-item inside its group.
#[inline(always)]
fn item_index(r: &[u64]) -> i64 {
    let tx = gi(r, SLOT_INNER_ID);
    let ty = gi(r, SLOT_INNER_ID + 1);
    let tz = gi(r, SLOT_INNER_ID + 2);
    let d0 = gi(r, SLOT_INNER_DIM);
    let d1 = gi(r, SLOT_INNER_DIM + 1);
    tx + d0 * (ty + d1 * tz)
}

/// Runs the compiled body once for one work-group. The caller preloads the
/// frame prefix (dims, outer ids, scalars) and zeroes the group stores.
pub(crate) fn run_group(
    p: &Program,
    // Whole-table reference so parallel callers capture the Sync wrapper,
    // not the raw pointer vec inside it.
    table: &BufTable,
    r: &mut [u64],
    stores: &mut [Vec<u64>],
) -> Result<(), Trap> {
    let code = p.instrs.as_slice();
    let bufs = table.0.as_slice();
    let mut pc = 0usize;
    macro_rules! trap {
        ($kind:expr) => {
            return Err(Trap { pc: pc - 1, kind: $kind })
        };
    }
    loop {
        let it = code[pc];
        pc += 1;
        match it.op {
            Op::Halt => return Ok(()),
            Op::Jmp => pc = it.b as usize,
            Op::Jz => {
                if r[it.a as usize] == 0 {
                    pc = it.b as usize;
                }
            }
            Op::Jnz => {
                if r[it.a as usize] != 0 {
                    pc = it.b as usize;
                }
            }
            Op::Mov => r[it.a as usize] = r[it.b as usize],

            Op::AddI => si(r, it.a, gi(r, it.b).wrapping_add(gi(r, it.c))),
            Op::SubI => si(r, it.a, gi(r, it.b).wrapping_sub(gi(r, it.c))),
            Op::MulI => si(r, it.a, gi(r, it.b).wrapping_mul(gi(r, it.c))),
            Op::DivI => {
                let d = gi(r, it.c);
                if d == 0 {
                    trap!(TrapKind::DivZero);
                }
                si(r, it.a, gi(r, it.b).wrapping_div(d));
            }
            Op::RemI => {
                let d = gi(r, it.c);
                if d == 0 {
                    trap!(TrapKind::DivZero);
                }
                si(r, it.a, gi(r, it.b).wrapping_rem(d));
            }
            Op::NegI => si(r, it.a, gi(r, it.b).wrapping_neg()),
            Op::NotI => si(r, it.a, bool_i(gi(r, it.b) == 0)),
            Op::IncI => {
                let s = it.a as usize;
                r[s] = (r[s] as i64).wrapping_add(1) as u64;
            }
            Op::DecI => {
                let s = it.a as usize;
                r[s] = (r[s] as i64).wrapping_sub(1) as u64;
            }
            Op::EqI => si(r, it.a, bool_i(gi(r, it.b) == gi(r, it.c))),
            Op::NeI => si(r, it.a, bool_i(gi(r, it.b) != gi(r, it.c))),
            Op::LtI => si(r, it.a, bool_i(gi(r, it.b) < gi(r, it.c))),
            Op::LeI => si(r, it.a, bool_i(gi(r, it.b) <= gi(r, it.c))),

            Op::AddD => sd(r, it.a, gd(r, it.b) + gd(r, it.c)),
            Op::SubD => sd(r, it.a, gd(r, it.b) - gd(r, it.c)),
            Op::MulD => sd(r, it.a, gd(r, it.b) * gd(r, it.c)),
            Op::DivD => sd(r, it.a, gd(r, it.b) / gd(r, it.c)),
            Op::NegD => sd(r, it.a, -gd(r, it.b)),
            Op::EqD => si(r, it.a, bool_i(gd(r, it.b) == gd(r, it.c))),
            Op::NeD => si(r, it.a, bool_i(gd(r, it.b) != gd(r, it.c))),
            Op::LtD => si(r, it.a, bool_i(gd(r, it.b) < gd(r, it.c))),
            Op::LeD => si(r, it.a, bool_i(gd(r, it.b) <= gd(r, it.c))),

            Op::AddS => ss(r, it.a, gs(r, it.b) + gs(r, it.c)),
            Op::SubS => ss(r, it.a, gs(r, it.b) - gs(r, it.c)),
            Op::MulS => ss(r, it.a, gs(r, it.b) * gs(r, it.c)),
            Op::DivS => ss(r, it.a, gs(r, it.b) / gs(r, it.c)),
            Op::NegS => ss(r, it.a, -gs(r, it.b)),
            Op::EqS => si(r, it.a, bool_i(gs(r, it.b) == gs(r, it.c))),
            Op::NeS => si(r, it.a, bool_i(gs(r, it.b) != gs(r, it.c))),
            Op::LtS => si(r, it.a, bool_i(gs(r, it.b) < gs(r, it.c))),
            Op::LeS => si(r, it.a, bool_i(gs(r, it.b) <= gs(r, it.c))),

            Op::IToD => sd(r, it.a, gi(r, it.b) as f64),
            Op::IToS => ss(r, it.a, gi(r, it.b) as f32),
            Op::SToD => sd(r, it.a, gs(r, it.b) as f64),
            Op::DToS => ss(r, it.a, gd(r, it.b) as f32),
            Op::DToI => si(r, it.a, gd(r, it.b) as i64),
            Op::SToI => si(r, it.a, gs(r, it.b) as i64),

            Op::LdBufD => {
                let buf = bufs[it.b as usize];
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= buf.len {
                    trap!(TrapKind::OobBuf { buf: it.b as usize, idx, len: buf.len });
                }
                let v = unsafe { *(buf.ptr as *const f64).add(idx as usize) };
                sd(r, it.a, v);
            }
            Op::LdBufS => {
                let buf = bufs[it.b as usize];
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= buf.len {
                    trap!(TrapKind::OobBuf { buf: it.b as usize, idx, len: buf.len });
                }
                let v = unsafe { *(buf.ptr as *const f32).add(idx as usize) };
                ss(r, it.a, v);
            }
            Op::LdBufI => {
                let buf = bufs[it.b as usize];
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= buf.len {
                    trap!(TrapKind::OobBuf { buf: it.b as usize, idx, len: buf.len });
                }
                let v = unsafe { *(buf.ptr as *const i32).add(idx as usize) };
                si(r, it.a, v as i64);
            }
            Op::StBufD => {
                let buf = bufs[it.b as usize];
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= buf.len {
                    trap!(TrapKind::OobBuf { buf: it.b as usize, idx, len: buf.len });
                }
                unsafe { *(buf.ptr as *mut f64).add(idx as usize) = gd(r, it.a as u16) };
            }
            Op::StBufS => {
                let buf = bufs[it.b as usize];
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= buf.len {
                    trap!(TrapKind::OobBuf { buf: it.b as usize, idx, len: buf.len });
                }
                unsafe { *(buf.ptr as *mut f32).add(idx as usize) = gs(r, it.a as u16) };
            }
            Op::StBufI => {
                let buf = bufs[it.b as usize];
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= buf.len {
                    trap!(TrapKind::OobBuf { buf: it.b as usize, idx, len: buf.len });
                }
                unsafe { *(buf.ptr as *mut i32).add(idx as usize) = gi(r, it.a as u16) as i32 };
            }

            Op::LdStD | Op::LdStS | Op::LdStI => {
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= it.d as usize {
                    trap!(TrapKind::OobStore { idx, len: it.d as usize });
                }
                let v = stores[it.b as usize][idx as usize];
                r[it.a as usize] = v;
            }
            Op::StStD | Op::StStS | Op::StStI => {
                let idx = gi(r, it.c);
                if idx < 0 || idx as usize >= it.d as usize {
                    trap!(TrapKind::OobStore { idx, len: it.d as usize });
                }
                stores[it.b as usize][idx as usize] = r[it.a as usize];
            }

            Op::LdPvD | Op::LdPvS | Op::LdPvI => {
                let idx = gi(r, it.c);
                let elems = it.d as i64;
                if idx < 0 || idx >= elems {
                    trap!(TrapKind::OobPriv { idx, elems: elems as usize });
                }
                let cell = (item_index(r) * elems + idx) as usize;
                r[it.a as usize] = stores[it.b as usize][cell];
            }
            Op::StPvD | Op::StPvS | Op::StPvI => {
                let idx = gi(r, it.c);
                let elems = it.d as i64;
                if idx < 0 || idx >= elems {
                    trap!(TrapKind::OobPriv { idx, elems: elems as usize });
                }
                let cell = (item_index(r) * elems + idx) as usize;
                stores[it.b as usize][cell] = r[it.a as usize];
            }

            Op::GlobId => {
                let axis = it.b;
                let v = gi(r, SLOT_INNER_ID + axis)
                    + gi(r, SLOT_INNER_DIM + axis) * gi(r, SLOT_OUTER_ID + axis);
                si(r, it.a, v);
            }

            Op::SqrtD => sd(r, it.a, gd(r, it.b).sqrt()),
            Op::FabsD => sd(r, it.a, gd(r, it.b).abs()),
            Op::ExpD => sd(r, it.a, gd(r, it.b).exp()),
            Op::MinI => si(r, it.a, gi(r, it.b).min(gi(r, it.c))),
            Op::MaxI => si(r, it.a, gi(r, it.b).max(gi(r, it.c))),
            Op::MinD => sd(r, it.a, gd(r, it.b).min(gd(r, it.c))),
            Op::MaxD => sd(r, it.a, gd(r, it.b).max(gd(r, it.c))),
            Op::MinS => ss(r, it.a, gs(r, it.b).min(gs(r, it.c))),
            Op::MaxS => ss(r, it.a, gs(r, it.b).max(gs(r, it.c))),

            Op::TrapPriv => trap!(TrapKind::PrivOutsideNest),
        }
    }
}

/// Structural sanity check run once at build time. After this passes, every
/// slot, const, store, buffer, and jump operand is known in range, so the
/// interpreter's plain indexing can never panic.
pub(crate) fn verify(p: &Program) -> Result<(), String> {
    let n = p.instrs.len();
    let frame = p.frame_len;
    let bufs = p.params.iter().filter(|k| matches!(k, ParamKind::Buf(_))).count();
    if n == 0 || p.instrs[n - 1].op != Op::Halt {
        return Err("program must end with Halt".into());
    }
    if p.pos.len() != n {
        return Err("position table length mismatch".into());
    }
    let slot = |s: u16| -> Result<(), String> {
        if (s as usize) < frame {
            Ok(())
        } else {
            Err(format!("slot {s} out of frame ({frame})"))
        }
    };
    for (s, _) in &p.const_init {
        slot(*s)?;
    }
    for s in &p.scalar_slots {
        slot(*s)?;
    }
    for (i, it) in p.instrs.iter().enumerate() {
        let err = |m: &str| Err(format!("instr {i}: {m}"));
        match it.op {
            Op::Halt => {}
            Op::Jmp => {
                if it.b as usize >= n {
                    return err("jump target out of range");
                }
            }
            Op::Jz | Op::Jnz => {
                slot(it.a as u16)?;
                if it.b as usize >= n {
                    return err("jump target out of range");
                }
            }
            Op::Mov | Op::NegI | Op::NotI | Op::NegD | Op::NegS | Op::IToD | Op::IToS
            | Op::SToD | Op::DToS | Op::DToI | Op::SToI | Op::SqrtD | Op::FabsD | Op::ExpD => {
                slot(it.a as u16)?;
                slot(it.b)?;
            }
            Op::IncI | Op::DecI | Op::TrapPriv => slot(it.a as u16)?,
            Op::LdBufD | Op::LdBufS | Op::LdBufI | Op::StBufD | Op::StBufS | Op::StBufI => {
                slot(it.a as u16)?;
                slot(it.c)?;
                if it.b as usize >= bufs {
                    return err("buffer index out of range");
                }
            }
            Op::LdStD | Op::LdStS | Op::LdStI | Op::StStD | Op::StStS | Op::StStI
            | Op::LdPvD | Op::LdPvS | Op::LdPvI | Op::StPvD | Op::StPvS | Op::StPvI => {
                slot(it.a as u16)?;
                slot(it.c)?;
                if it.b as usize >= p.stores.len() {
                    return err("store index out of range");
                }
            }
            Op::GlobId => {
                slot(it.a as u16)?;
                if it.b > 2 {
                    return err("axis out of range");
                }
            }
            _ => {
                // Remaining ops are plain three-address arithmetic.
                slot(it.a as u16)?;
                slot(it.b)?;
                slot(it.c)?;
            }
        }
    }
    Ok(())
}
