//! Command-line surface for the kernel toolkit.
//!
//! Four subcommands: `translate` emits backend source text, `check` runs the
//! front end and reports diagnostics, `run` builds a kernel and invokes it
//! once on the native engine, `bench` times the finite-difference demo and
//! appends CSV rows.
//!
//! Exit codes are scriptable without parsing text: 0 success, 1 domain
//! failure (diagnostics, runtime traps, unwritable outputs), 2 usage error
//! (bad flags, unreadable inputs, argument lists that do not fit the
//! kernel).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use occakit::fd;
use occakit::{
    emit_kernel_unit, has_errors, parse_kernel, tokenize, validate, Arg, Backend, Buffer,
    DefineSet, Device, Diagnostic, ElemType, EngineError, Mode, ParamInfo,
};

#[derive(Parser)]
#[command(name = "occakit", version, about = "Kernel translation and execution toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Copy, Clone, ValueEnum)]
enum BackendArg {
    Openmp,
    Opencl,
    Cuda,
    Serial,
}

impl BackendArg {
    fn backend(self) -> Backend {
        match self {
            BackendArg::Openmp => Backend::OpenMp,
            BackendArg::Opencl => Backend::OpenCl,
            BackendArg::Cuda => Backend::Cuda,
            BackendArg::Serial => Backend::Serial,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Expand a kernel file into source text for one backend.
    Translate {
        /// Kernel source file.
        file: PathBuf,
        /// Target backend.
        #[arg(long, value_enum)]
        backend: BackendArg,
        /// Compile-time define; repeatable.
        #[arg(short = 'D', value_name = "NAME=VALUE")]
        define: Vec<String>,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a kernel file, printing diagnostics.
    Check {
        /// Kernel source file.
        file: PathBuf,
        /// Compile-time define; repeatable.
        #[arg(short = 'D', value_name = "NAME=VALUE")]
        define: Vec<String>,
    },
    /// Build one kernel and invoke it once on the native engine.
    Run {
        /// Kernel source file.
        file: PathBuf,
        /// Kernel to run.
        #[arg(long)]
        kernel: String,
        /// Global work size, comma separated (1 to 3 axes).
        #[arg(long)]
        global: String,
        /// Local work size, comma separated; same number of axes.
        #[arg(long)]
        local: String,
        /// Buffer argument: `name=zeros:f64:N`, `name=range:i32:N`, or
        /// `name=file:PATH:f64`. One per pointer parameter, in order.
        #[arg(long = "buffer", value_name = "SPEC")]
        buffer: Vec<String>,
        /// Scalar argument: `name=i32:7`, `name=f32:1.5`, `name=f64:0.5`.
        /// One per scalar parameter, in order.
        #[arg(long = "scalar", value_name = "SPEC")]
        scalar: Vec<String>,
        /// Compile-time define; repeatable.
        #[arg(short = 'D', value_name = "NAME=VALUE")]
        define: Vec<String>,
        /// Worker threads; serial when omitted.
        #[arg(long)]
        threads: Option<usize>,
        /// Directory to dump each buffer into as little-endian NAME.bin.
        #[arg(long, value_name = "DIR")]
        dump: Option<PathBuf>,
    },
    /// Time the finite-difference demo and append CSV rows.
    Bench {
        /// Grid width in nodes.
        #[arg(long)]
        width: usize,
        /// Grid height in nodes.
        #[arg(long)]
        height: usize,
        /// Stencil radius.
        #[arg(long)]
        radius: usize,
        /// Number of timesteps.
        #[arg(long)]
        steps: usize,
        /// Thread counts to time, comma separated.
        #[arg(long, default_value = "1")]
        threads: String,
        /// CSV file to append to; the header is written on creation.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Timestep length.
        #[arg(long, default_value_t = 0.5)]
        dt: f64,
        /// Node spacing.
        #[arg(long, default_value_t = 1.0)]
        dx: f64,
    },
}

/// A failed command. `Domain` exits 1, `Usage` exits 2.
enum Failure {
    Domain(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Domain(m) | Failure::Usage(m) => m,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn diags_failure(diags: &[Diagnostic], file: &str) -> Failure {
    let text: Vec<String> = diags.iter().map(|d| d.render(file)).collect();
    Failure::Domain(text.join("\n"))
}

fn engine_failure(e: EngineError, file: &str) -> Failure {
    match e {
        EngineError::Config(m) => Failure::Usage(m),
        EngineError::Build(diags) => diags_failure(&diags, file),
        EngineError::Trap(m) => Failure::Domain(m),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Translate { file, backend, define, out } => {
            cmd_translate(&file, backend.backend(), &define, out.as_deref())
        }
        Cmd::Check { file, define } => cmd_check(&file, &define),
        Cmd::Run { file, kernel, global, local, buffer, scalar, define, threads, dump } => cmd_run(
            &file,
            &kernel,
            &global,
            &local,
            &buffer,
            &scalar,
            &define,
            threads,
            dump.as_deref(),
        ),
        Cmd::Bench { width, height, radius, steps, threads, csv, dt, dx } => {
            cmd_bench(width, height, radius, steps, &threads, csv.as_deref(), dt, dx)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn read_source(file: &Path) -> Result<String, Failure> {
    fs::read_to_string(file)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", file.display())))
}

fn parse_defines(items: &[String]) -> Result<DefineSet, Failure> {
    let mut set = DefineSet::new();
    for item in items {
        let (name, value) = match item.split_once('=') {
            Some(pair) => pair,
            None => return usage(format!("define {item:?} must look like NAME=VALUE")),
        };
        let added = if let Ok(v) = value.parse::<i64>() {
            set.add_int(name, v)
        } else if let Ok(v) = value.parse::<f64>() {
            set.add_float(name, v)
        } else {
            set.add_ident(name, value)
        };
        if let Err(e) = added {
            return usage(e.to_string());
        }
    }
    Ok(set)
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, Failure> {
    let mut out = Vec::new();
    for part in text.split(',') {
        match part.trim().parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) => {
                return usage(format!("{what} {text:?}: {:?} is not a whole number", part.trim()))
            }
        }
    }
    Ok(out)
}

fn cmd_translate(
    file: &Path,
    backend: Backend,
    define: &[String],
    out: Option<&Path>,
) -> Result<(), Failure> {
    let defines = parse_defines(define)?;
    let source = read_source(file)?;
    let name = file.display().to_string();
    let tokens = tokenize(&source, &defines).map_err(|d| diags_failure(&d, &name))?;
    let parsed = parse_kernel(&tokens).map_err(|d| diags_failure(&d, &name))?;
    let diags = validate(&parsed);
    if has_errors(&diags) {
        return Err(diags_failure(&diags, &name));
    }
    for d in &diags {
        eprintln!("{}", d.render(&name));
    }
    let unit = emit_kernel_unit(&tokens, backend, &defines)
        .map_err(|d| diags_failure(std::slice::from_ref(&d), &name))?;
    let text = unit.source();
    match out {
        Some(path) => fs::write(path, &text)
            .map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_check(file: &Path, define: &[String]) -> Result<(), Failure> {
    let defines = parse_defines(define)?;
    let source = read_source(file)?;
    let name = file.display().to_string();
    let tokens = tokenize(&source, &defines).map_err(|d| diags_failure(&d, &name))?;
    let parsed = parse_kernel(&tokens).map_err(|d| diags_failure(&d, &name))?;
    if parsed.kernels.is_empty() {
        return Err(Failure::Domain(format!("{name}: no kernel found")));
    }
    let diags = validate(&parsed);
    if has_errors(&diags) {
        return Err(diags_failure(&diags, &name));
    }
    for d in &diags {
        println!("{}", d.render(&name));
    }
    Ok(())
}

/// Host-side contents for one `--buffer` spec.
enum BufData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I32(Vec<i32>),
}

enum ScalarVal {
    I32(i32),
    F32(f32),
    F64(f64),
}

fn parse_elem_type(text: &str, spec: &str) -> Result<ElemType, Failure> {
    match text {
        "i32" => Ok(ElemType::I32),
        "f32" => Ok(ElemType::F32),
        "f64" => Ok(ElemType::F64),
        _ => usage(format!("spec {spec:?}: unknown element type {text:?} (i32, f32, f64)")),
    }
}

fn parse_buffer_spec(spec: &str) -> Result<(String, BufData), Failure> {
    let (name, rest) = match spec.split_once('=') {
        Some(pair) => pair,
        None => return usage(format!("buffer spec {spec:?} must look like name=zeros:f64:N")),
    };
    let parts: Vec<&str> = rest.split(':').collect();
    let data = match parts.as_slice() {
        ["zeros", ty, n] => {
            let n = parse_count(n, spec)?;
            match parse_elem_type(ty, spec)? {
                ElemType::F64 => BufData::F64(vec![0.0; n]),
                ElemType::F32 => BufData::F32(vec![0.0; n]),
                ElemType::I32 => BufData::I32(vec![0; n]),
            }
        }
        ["range", ty, n] => {
            let n = parse_count(n, spec)?;
            match parse_elem_type(ty, spec)? {
                ElemType::F64 => BufData::F64((0..n).map(|i| i as f64).collect()),
                ElemType::F32 => BufData::F32((0..n).map(|i| i as f32).collect()),
                ElemType::I32 => BufData::I32((0..n).map(|i| i as i32).collect()),
            }
        }
        ["file", path, ty] => {
            let bytes = fs::read(path)
                .map_err(|e| Failure::Usage(format!("buffer spec {spec:?}: cannot read {path}: {e}")))?;
            let ty = parse_elem_type(ty, spec)?;
            if bytes.len() % ty.byte_size() != 0 {
                return usage(format!(
                    "buffer spec {spec:?}: {path} holds {} byte(s), not a multiple of {}",
                    bytes.len(),
                    ty.byte_size()
                ));
            }
            match ty {
                ElemType::F64 => BufData::F64(
                    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                ElemType::F32 => BufData::F32(
                    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                ElemType::I32 => BufData::I32(
                    bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
            }
        }
        _ => {
            return usage(format!(
                "buffer spec {spec:?}: expected zeros:TY:N, range:TY:N, or file:PATH:TY"
            ))
        }
    };
    Ok((name.to_string(), data))
}

fn parse_count(text: &str, spec: &str) -> Result<usize, Failure> {
    match text.parse::<usize>() {
        Ok(n) => Ok(n),
        Err(_) => usage(format!("spec {spec:?}: {text:?} is not a whole number")),
    }
}

fn parse_scalar_spec(spec: &str) -> Result<(String, ScalarVal), Failure> {
    let (name, rest) = match spec.split_once('=') {
        Some(pair) => pair,
        None => return usage(format!("scalar spec {spec:?} must look like name=f64:0.5")),
    };
    let (ty, value) = match rest.split_once(':') {
        Some(pair) => pair,
        None => return usage(format!("scalar spec {spec:?} must look like name=f64:0.5")),
    };
    let bad = || format!("scalar spec {spec:?}: {value:?} is not a {ty} value");
    let val = match parse_elem_type(ty, spec)? {
        ElemType::I32 => ScalarVal::I32(value.parse().map_err(|_| Failure::Usage(bad()))?),
        ElemType::F32 => ScalarVal::F32(value.parse().map_err(|_| Failure::Usage(bad()))?),
        ElemType::F64 => ScalarVal::F64(value.parse().map_err(|_| Failure::Usage(bad()))?),
    };
    Ok((name.to_string(), val))
}

fn checksum_line(name: &str, buf: &Buffer) -> String {
    match buf.elem_type() {
        ElemType::F64 => {
            let sum: f64 = buf.read_f64().unwrap().iter().map(|x| x.abs()).sum();
            format!("{name}: {sum:?}")
        }
        ElemType::F32 => {
            let sum: f64 = buf.read_f32().unwrap().iter().map(|x| x.abs() as f64).sum();
            format!("{name}: {sum:?}")
        }
        ElemType::I32 => {
            let sum: i64 = buf.read_i32().unwrap().iter().map(|x| (*x as i64).abs()).sum();
            format!("{name}: {sum}")
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    file: &Path,
    kernel_name: &str,
    global: &str,
    local: &str,
    buffer: &[String],
    scalar: &[String],
    define: &[String],
    threads: Option<usize>,
    dump: Option<&Path>,
) -> Result<(), Failure> {
    let defines = parse_defines(define)?;
    let source = read_source(file)?;
    let name = file.display().to_string();
    let global = parse_usize_list(global, "--global")?;
    let local = parse_usize_list(local, "--local")?;

    let mode = match threads {
        None => Mode::Serial,
        Some(t) => Mode::Parallel(t),
    };
    let device = Device::new(mode).map_err(|e| engine_failure(e, &name))?;
    let kernel = device
        .build_kernel(&source, kernel_name, &defines)
        .map_err(|e| engine_failure(e, &name))?;

    let params = kernel.params();
    let want_bufs = params.iter().filter(|(_, i)| matches!(i, ParamInfo::Buffer(_))).count();
    let want_scalars = params.len() - want_bufs;
    if buffer.len() != want_bufs {
        return usage(format!(
            "kernel '{kernel_name}' takes {want_bufs} buffer argument(s), got {}",
            buffer.len()
        ));
    }
    if scalar.len() != want_scalars {
        return usage(format!(
            "kernel '{kernel_name}' takes {want_scalars} scalar argument(s), got {}",
            scalar.len()
        ));
    }

    let mut created: Vec<(String, Buffer)> = Vec::new();
    for spec in buffer {
        let (bname, data) = parse_buffer_spec(spec)?;
        if created.iter().any(|(n, _)| *n == bname) {
            return usage(format!("buffer name {bname:?} given twice"));
        }
        let buf = match &data {
            BufData::F64(v) => device.buffer_from_f64(v),
            BufData::F32(v) => device.buffer_from_f32(v),
            BufData::I32(v) => device.buffer_from_i32(v),
        }
        .map_err(|e| engine_failure(e, &name))?;
        created.push((bname, buf));
    }
    let scalars: Vec<(String, ScalarVal)> =
        scalar.iter().map(|s| parse_scalar_spec(s)).collect::<Result<_, _>>()?;

    let mut next_buf = 0;
    let mut next_scalar = 0;
    let args: Vec<Arg> = params
        .iter()
        .map(|(_, info)| match info {
            ParamInfo::Buffer(_) => {
                let arg = Arg::Buf(&created[next_buf].1);
                next_buf += 1;
                arg
            }
            ParamInfo::Scalar(_) => {
                let arg = match scalars[next_scalar].1 {
                    ScalarVal::I32(v) => Arg::I32(v),
                    ScalarVal::F32(v) => Arg::F32(v),
                    ScalarVal::F64(v) => Arg::F64(v),
                };
                next_scalar += 1;
                arg
            }
        })
        .collect();

    kernel.set_thread_array(&global, &local).map_err(|e| engine_failure(e, &name))?;
    kernel.invoke(&args).map_err(|e| engine_failure(e, &name))?;

    for (bname, buf) in &created {
        println!("{}", checksum_line(bname, buf));
    }
    if let Some(dir) = dump {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Domain(format!("cannot create {}: {e}", dir.display())))?;
        for (bname, buf) in &created {
            let path = dir.join(format!("{bname}.bin"));
            let bytes = buf.read_bytes_le().map_err(|e| engine_failure(e, &name))?;
            fs::write(&path, bytes)
                .map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    width: usize,
    height: usize,
    radius: usize,
    steps: usize,
    threads: &str,
    csv: Option<&Path>,
    dt: f64,
    dx: f64,
) -> Result<(), Failure> {
    let threads = parse_usize_list(threads, "--threads")?;
    let config = FdConfigArgs { width, height, radius, dt, dx, steps }
        .build()
        .map_err(|e| engine_failure(e, "fd2d"))?;

    let mut rows = Vec::new();
    for &t in &threads {
        let mode = if t == 1 { Mode::Serial } else { Mode::Parallel(t) };
        let report = fd::bench(&config, mode).map_err(|e| engine_failure(e, "fd2d"))?;
        println!(
            "threads={t} {:.3} MNodes/s checksum {:?}",
            report.mnodes_per_s, report.checksum
        );
        rows.push(format!(
            "native,{t},{width},{height},{radius},{steps},{:.3},{:?}",
            report.mnodes_per_s, report.checksum
        ));
    }

    if let Some(path) = csv {
        let fresh = !path.exists();
        let mut out = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))?;
        let mut text = String::new();
        if fresh {
            text.push_str("backend,threads,w,h,r,steps,mnodes_per_s,checksum\n");
        }
        for row in &rows {
            text.push_str(row);
            text.push('\n');
        }
        out.write_all(text.as_bytes())
            .map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Bench geometry prior to validation; keeps `cmd_bench` argument plumbing
/// readable.
struct FdConfigArgs {
    width: usize,
    height: usize,
    radius: usize,
    dt: f64,
    dx: f64,
    steps: usize,
}

impl FdConfigArgs {
    fn build(self) -> Result<fd::FdConfig, EngineError> {
        fd::FdConfig::new(self.width, self.height, self.radius, self.dt, self.dx, self.steps)
    }
}
