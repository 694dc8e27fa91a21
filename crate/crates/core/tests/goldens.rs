//! Golden-file tests: emitted translation units are compared byte for byte
//! against committed references, one per backend, for two kernels. `mix`
//! exercises the whole dialect surface (shared staging, barrier, register
//! emulation, a device function, intrinsics, early inner return); `fd2d` is
//! the finite-difference kernel the engine and bench paths run.

use occakit::{emit_kernel_unit, tokenize, Backend, DefineSet};

const MIX_SRC: &str = include_str!("goldens/mix.occa");

fn emit(source: &str, backend: Backend, defines: &DefineSet) -> String {
    let tokens = tokenize(source, defines).expect("lexes");
    emit_kernel_unit(&tokens, backend, defines).expect("emits").source()
}

fn fd2d_defines() -> DefineSet {
    let mut d = DefineSet::new();
    d.add_int("r", 3).unwrap();
    d.add_int("w", 32).unwrap();
    d.add_int("h", 32).unwrap();
    d.add_float("dx", 0.25).unwrap();
    d.add_float("dt", 0.1).unwrap();
    d
}

#[test]
fn mix_matches_the_goldens() {
    let cases = [
        (Backend::OpenMp, include_str!("goldens/mix.omp.cpp")),
        (Backend::OpenCl, include_str!("goldens/mix.cl")),
        (Backend::Cuda, include_str!("goldens/mix.cu")),
        (Backend::Serial, include_str!("goldens/mix.serial.cpp")),
    ];
    for (backend, want) in cases {
        let got = emit(MIX_SRC, backend, &DefineSet::new());
        assert_eq!(got, want, "{} drifted", backend.name());
    }
}

#[test]
fn fd2d_matches_the_goldens() {
    let defines = fd2d_defines();
    let cases = [
        (Backend::OpenMp, include_str!("goldens/fd2d.omp.cpp")),
        (Backend::OpenCl, include_str!("goldens/fd2d.cl")),
        (Backend::Cuda, include_str!("goldens/fd2d.cu")),
        (Backend::Serial, include_str!("goldens/fd2d.serial.cpp")),
    ];
    for (backend, want) in cases {
        let got = emit(occakit::fd::FD2D_SOURCE, backend, &defines);
        assert_eq!(got, want, "{} drifted", backend.name());
    }
}

#[test]
fn golden_file_names_follow_backend_suffixes() {
    let defines = fd2d_defines();
    let tokens = tokenize(occakit::fd::FD2D_SOURCE, &defines).unwrap();
    let names: Vec<String> = Backend::ALL
        .iter()
        .map(|b| emit_kernel_unit(&tokens, *b, &defines).unwrap().file_name("fd2d"))
        .collect();
    assert_eq!(names, ["fd2d.omp.cpp", "fd2d.cl", "fd2d.cu", "fd2d.serial.cpp"]);
}
