//! Per-backend keyword expansion tables.
//!
//! Every dialect keyword maps to backend text: OpenMP unwinds work-groups
//! into counted loops over a six-entry `occaDims` array (inner dims in
//! slots 0..2, group dims in slots 3..5), OpenCL and CUDA map ids onto their
//! native launch intrinsics and drop the loop keywords entirely, and Serial
//! shares the OpenMP table with the parallel pragma suppressed.
//!
//! A blank cell means the keyword contributes no text on that backend. For
//! loop and qualifier keywords the token simply disappears; for the OpenMP
//! id keywords it means there is no macro at all, and the name survives as a
//! plain variable declared in the kernel preamble.
//!
//! `occaBarrier`, `occaPrivate`, and `occaPrivateArray` consume arguments,
//! so their cells are written with the placeholders `Fence`, `type`, `name`,
//! `n`, and `sz`.

use crate::token::Keyword;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backend {
    OpenMp,
    OpenCl,
    Cuda,
    Serial,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::OpenMp, Backend::OpenCl, Backend::Cuda, Backend::Serial];

    pub fn name(self) -> &'static str {
        match self {
            Backend::OpenMp => "OpenMP",
            Backend::OpenCl => "OpenCL",
            Backend::Cuda => "CUDA",
            Backend::Serial => "Serial",
        }
    }

    /// File suffix for emitted translation units.
    pub fn suffix(self) -> &'static str {
        match self {
            Backend::OpenMp => ".omp.cpp",
            Backend::OpenCl => ".cl",
            Backend::Cuda => ".cu",
            Backend::Serial => ".serial.cpp",
        }
    }

    pub fn from_name(s: &str) -> Option<Backend> {
        match s {
            "OpenMP" | "openmp" | "omp" => Some(Backend::OpenMp),
            "OpenCL" | "opencl" | "cl" => Some(Backend::OpenCl),
            "CUDA" | "cuda" | "cu" => Some(Backend::Cuda),
            "Serial" | "serial" => Some(Backend::Serial),
            _ => None,
        }
    }

    /// True for backends that emulate work-items with loops (OpenMP, Serial).
    pub fn is_loop_backend(self) -> bool {
        matches!(self, Backend::OpenMp | Backend::Serial)
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The full keyword table for one backend.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionTable {
    backend: Backend,
}

pub fn expansion_table(backend: Backend) -> ExpansionTable {
    ExpansionTable { backend }
}

impl ExpansionTable {
    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Replacement text for `kw`, exactly as substituted (before any nested
    /// keywords in the replacement are themselves expanded).
    pub fn cell(&self, kw: Keyword) -> &'static str {
        let (omp, ocl, cuda) = triple(kw);
        match self.backend {
            Backend::OpenMp | Backend::Serial => omp,
            Backend::OpenCl => ocl,
            Backend::Cuda => cuda,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (Keyword, &'static str)> + '_ {
        Keyword::ALL.iter().map(move |&kw| (kw, self.cell(kw)))
    }
}

/// (OpenMP, OpenCL, CUDA) cells. Serial reuses the OpenMP column.
fn triple(kw: Keyword) -> (&'static str, &'static str, &'static str) {
    use Keyword::*;
    match kw {
        // Work-item and work-group ids.
        InnerId0 => ("", "get_local_id(0)", "threadIdx.x"),
        InnerId1 => ("", "get_local_id(1)", "threadIdx.y"),
        InnerId2 => ("", "get_local_id(2)", "threadIdx.z"),
        OuterId0 => ("", "get_group_id(0)", "blockIdx.x"),
        OuterId1 => ("", "get_group_id(1)", "blockIdx.y"),
        OuterId2 => ("", "get_group_id(2)", "blockIdx.z"),
        GlobalId0 => (
            "occaInnerId0 + occaInnerDim0*occaOuterId0",
            "get_global_id(0)",
            "threadIdx.x + blockIdx.x*blockDim.x",
        ),
        GlobalId1 => (
            "occaInnerId1 + occaInnerDim1*occaOuterId1",
            "get_global_id(1)",
            "threadIdx.y + blockIdx.y*blockDim.y",
        ),
        GlobalId2 => ("occaInnerId2", "get_global_id(2)", "threadIdx.z"),

        // Work sizes.
        InnerDim0 => ("occaDims[0]", "get_local_size(0)", "blockDim.x"),
        InnerDim1 => ("occaDims[1]", "get_local_size(1)", "blockDim.y"),
        InnerDim2 => ("occaDims[2]", "get_local_size(2)", "blockDim.z"),
        OuterDim0 => ("occaDims[3]", "get_num_groups(0)", "gridDim.x"),
        OuterDim1 => ("occaDims[4]", "get_num_groups(1)", "gridDim.y"),
        OuterDim2 => ("occaDims[5]", "get_num_groups(2)", "gridDim.z"),
        GlobalDim0 => ("occaInnerDim0*occaOuterDim0", "get_global_size(0)", "occaInnerDim0*occaOuterDim0"),
        GlobalDim1 => ("occaInnerDim1*occaOuterDim1", "get_global_size(1)", "occaInnerDim1*occaOuterDim1"),
        GlobalDim2 => ("occaInnerDim2*occaOuterDim2", "get_global_size(2)", "occaInnerDim2"),

        // Loop keywords; native work-item backends drop them and keep the
        // brace scope.
        InnerFor0 => ("for(occaInnerId0 = 0; occaInnerId0 < occaInnerDim0; ++occaInnerId0)", "", ""),
        InnerFor1 => ("for(occaInnerId1 = 0; occaInnerId1 < occaInnerDim1; ++occaInnerId1)", "", ""),
        InnerFor2 => ("for(occaInnerId2 = 0; occaInnerId2 < occaInnerDim2; ++occaInnerId2)", "", ""),
        InnerFor => ("occaInnerFor2 occaInnerFor1 occaInnerFor0", "", ""),
        OuterFor0 => ("for(occaOuterId0 = 0; occaOuterId0 < occaOuterDim0; ++occaOuterId0)", "", ""),
        OuterFor1 => ("for(occaOuterId1 = 0; occaOuterId1 < occaOuterDim1; ++occaOuterId1)", "", ""),
        OuterFor2 => ("", "", ""),
        GlobalFor0 => ("occaOuterFor0 occaInnerFor0", "", ""),
        GlobalFor1 => ("occaOuterFor1 occaInnerFor1", "", ""),
        GlobalFor2 => ("occaInnerFor2", "", ""),

        // Declaration qualifiers.
        Shared => ("", "__local", "__shared__"),
        Pointer => ("", "__global", ""),
        Constant => ("", "__constant", "__constant__"),
        Variable => ("", "", ""),
        Restrict => ("__restrict__", "restrict", "__restrict__"),
        Volatile => ("", "volatile", "__volatile__"),
        Const => ("const", "const", "const"),
        Aligned => ("__attribute__ ((aligned (__BIGGEST_ALIGNMENT__)))", "", ""),

        // Prototype plumbing.
        KernelInfoArg => ("const int *occaDims", "__global int *dims", "int *dims"),
        FunctionInfoArg => (
            "const int *occaDims, int occaInnerId0, int occaInnerId1, int occaInnerId2",
            "int _dummy",
            "int dummy",
        ),
        FunctionInfo => ("occaDims, occaInnerId0, occaInnerId1, occaInnerId2", "999", "1"),
        Kernel => ("extern \"C\"", "__kernel", "extern \"C\" __global__"),
        Function => ("", "", "__device__"),
        FunctionShared => ("", "__local", ""),
        InnerReturn => ("{continue;}", "{return;}", "{return;}"),

        // Barriers.
        LocalMemFence => ("", "CLK_LOCAL_MEM_FENCE", ""),
        GlobalMemFence => ("", "CLK_GLOBAL_MEM_FENCE", ""),
        Barrier => ("", "barrier(Fence)", "__syncthreads();"),

        // Register emulation.
        PrivateArray => ("occaPrivateClass<type,sz> name", "type name[n]", "type name[n]"),
        Private => ("occaPrivateClass<type,1> name", "type name", "type name"),

        // Platform flags.
        Cpu => ("1", "0", "0"),
        Gpu => ("0", "1", "1"),
        OpenMp => ("1", "0", "0"),
        OpenCl => ("0", "1", "0"),
        Cuda => ("0", "0", "1"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_keyword_resolves_on_every_backend() {
        for backend in Backend::ALL {
            let table = expansion_table(backend);
            assert_eq!(table.rows().count(), Keyword::ALL.len());
        }
    }

    #[test]
    fn serial_matches_openmp() {
        let omp = expansion_table(Backend::OpenMp);
        let serial = expansion_table(Backend::Serial);
        for kw in Keyword::ALL {
            assert_eq!(omp.cell(kw), serial.cell(kw), "{kw}");
        }
    }

    #[test]
    fn gpu_flags_are_consistent() {
        for backend in [Backend::OpenCl, Backend::Cuda] {
            let t = expansion_table(backend);
            assert_eq!(t.cell(Keyword::Gpu), "1");
            assert_eq!(t.cell(Keyword::Cpu), "0");
        }
        let t = expansion_table(Backend::OpenMp);
        assert_eq!(t.cell(Keyword::Gpu), "0");
        assert_eq!(t.cell(Keyword::Cpu), "1");
    }

    #[test]
    fn suffixes_are_distinct() {
        let mut suffixes: Vec<&str> = Backend::ALL.iter().map(|b| b.suffix()).collect();
        suffixes.sort();
        suffixes.dedup();
        assert_eq!(suffixes.len(), 4);
    }
}
