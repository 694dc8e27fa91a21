//! End-to-end tests of the installed binary: exit codes, translation
//! output, run/dump behavior, and the bench CSV format.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn occakit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occakit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const PROBE_SRC: &str = "occaKernel void probe(occaKernelInfoArg, occaPointer int *out){
    occaOuterFor0{ occaInnerFor0{
        out[occaGlobalId0] = occaGlobalId0;
    } }
}";

const BARRIER_SRC: &str = "occaKernel void rev(occaKernelInfoArg, \
                              occaPointer int *src, occaPointer int *dst){
    occaOuterFor0{
        occaShared int stage[4];
        occaInnerFor0{ stage[occaInnerId0] = src[occaGlobalId0]; }
        occaBarrier(occaLocalMemFence);
        occaInnerFor0{ dst[occaGlobalId0] = stage[occaInnerDim0 - 1 - occaInnerId0]; }
    }
}";

const V1_SRC: &str = "occaKernel void k(occaKernelInfoArg){
    occaOuterFor0{ occaInnerFor0{ occaBarrier(occaLocalMemFence); } }
}";

#[test]
fn missing_input_file_is_a_usage_error() {
    let out = occakit(&["translate", "/definitely/not/here.occa", "--backend", "cuda"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn unknown_backend_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "k.occa", PROBE_SRC);
    let out = occakit(&["translate", file.to_str().unwrap(), "--backend", "sycl"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn validator_findings_fail_translation() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "bad.occa", V1_SRC);
    let out = occakit(&["translate", file.to_str().unwrap(), "--backend", "openmp"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("V1"), "{}", stderr(&out));
}

#[test]
fn check_reports_no_kernel_in_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "empty.occa", "");
    let out = occakit(&["check", file.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no kernel found"), "{}", stderr(&out));
}

#[test]
fn check_passes_a_clean_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "probe.occa", PROBE_SRC);
    let out = occakit(&["check", file.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn translate_is_byte_stable_and_carries_backend_markers() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "rev.occa", BARRIER_SRC);
    let path = file.to_str().unwrap();

    for (backend, marker) in [
        ("cuda", "extern \"C\" __global__"),
        ("opencl", "__kernel"),
        ("openmp", "const int *occaDims"),
        ("serial", "const int *occaDims"),
    ] {
        let first = occakit(&["translate", path, "--backend", backend]);
        let second = occakit(&["translate", path, "--backend", backend]);
        assert_eq!(code(&first), 0, "{}", stderr(&first));
        assert_eq!(first.stdout, second.stdout, "{backend} output drifted");
        assert!(stdout(&first).contains(marker), "{backend}: missing {marker}");
    }

    let opencl = stdout(&occakit(&["translate", path, "--backend", "opencl"]));
    assert!(opencl.contains("barrier(CLK_LOCAL_MEM_FENCE)"), "{opencl}");
}

#[test]
fn translate_writes_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "probe.occa", PROBE_SRC);
    let out_path = dir.path().join("probe.cu");
    let out = occakit(&[
        "translate",
        file.to_str().unwrap(),
        "--backend",
        "cuda",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("extern \"C\" __global__"));
}

#[test]
fn run_dumps_the_id_probe_as_little_endian() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "probe.occa", PROBE_SRC);
    let dump = dir.path().join("dump");
    let out = occakit(&[
        "run",
        file.to_str().unwrap(),
        "--kernel",
        "probe",
        "--global",
        "8",
        "--local",
        "4",
        "--buffer",
        "out=zeros:i32:8",
        "--dump",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("out: 28"), "{}", stdout(&out));
    let bytes = std::fs::read(dump.join("out.bin")).unwrap();
    let want: Vec<u8> = (0..8i32).flat_map(|v| v.to_le_bytes()).collect();
    assert_eq!(bytes, want);
}

#[test]
fn run_rejects_a_mismatched_buffer_count() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "probe.occa", PROBE_SRC);
    let out = occakit(&[
        "run",
        file.to_str().unwrap(),
        "--kernel",
        "probe",
        "--global",
        "8",
        "--local",
        "4",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("buffer"), "{}", stderr(&out));
}

#[test]
fn run_rejects_zero_threads() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "probe.occa", PROBE_SRC);
    let out = occakit(&[
        "run",
        file.to_str().unwrap(),
        "--kernel",
        "probe",
        "--global",
        "8",
        "--local",
        "4",
        "--buffer",
        "out=zeros:i32:8",
        "--threads",
        "0",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn runtime_traps_exit_1_and_name_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "probe.occa", PROBE_SRC);
    let out = occakit(&[
        "run",
        file.to_str().unwrap(),
        "--kernel",
        "probe",
        "--global",
        "8",
        "--local",
        "4",
        "--buffer",
        "out=zeros:i32:4",
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("out of range"), "{err}");
    assert!(err.contains("'out'"), "{err}");
}

#[test]
fn run_handles_scalars_and_defines_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "fd2d.occa", occakit::fd::FD2D_SOURCE);
    // 16x16 grid, radius 1: one 16x16 work-group covers it exactly.
    let out = occakit(&[
        "run",
        file.to_str().unwrap(),
        "--kernel",
        "fd2d",
        "-D",
        "r=1",
        "-D",
        "w=16",
        "-D",
        "h=16",
        "-D",
        "dx=1.0",
        "-D",
        "dt=0.5",
        "--global",
        "16,16",
        "--local",
        "16,16",
        "--buffer",
        "u1=zeros:f64:256",
        "--buffer",
        "u2=zeros:f64:256",
        "--buffer",
        "u3=zeros:f64:256",
        "--buffer",
        "weight=zeros:f64:3",
        "--scalar",
        "currentTime=f64:0.5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("u3: 0"), "{}", stdout(&out));
}

#[test]
fn bench_appends_csv_rows_with_equal_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let out = occakit(&[
        "bench",
        "--width",
        "16",
        "--height",
        "16",
        "--radius",
        "1",
        "--steps",
        "2",
        "--threads",
        "1,2",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "backend,threads,w,h,r,steps,mnodes_per_s,checksum");
    assert_eq!(lines.len(), 3);
    let checksum = |line: &str| line.rsplit(',').next().unwrap().to_string();
    assert_eq!(checksum(lines[1]), checksum(lines[2]));
    assert!(lines[1].starts_with("native,1,16,16,1,2,"));
    assert!(lines[2].starts_with("native,2,16,16,1,2,"));
}

#[test]
fn bench_rejects_a_grid_narrower_than_the_stencil() {
    let out = occakit(&[
        "bench", "--width", "4", "--height", "32", "--radius", "3", "--steps", "1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_fails_on_an_unwritable_csv_path() {
    let out = occakit(&[
        "bench",
        "--width",
        "16",
        "--height",
        "16",
        "--radius",
        "1",
        "--steps",
        "1",
        "--csv",
        "/definitely/not/a/dir/rows.csv",
    ]);
    assert_eq!(code(&out), 1);
}
