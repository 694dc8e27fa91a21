//! Finite difference demo application: the 2D wave equation on a periodic
//! grid, driven through the engine with the same kernel source the emitters
//! translate.
//!
//! The update is the leapfrog-style two-level scheme of the shipped
//! `fd2d.occa` kernel: `u3 = -2*u1 + u2 - dt^2 * lap`, where `lap`
//! accumulates one horizontal and one vertical weighted sample per stencil
//! offset. After each step the fields rotate by two O(1) buffer swaps
//! (u1 <-> u2, then u2 <-> u3), leaving the newest field in `u2`. The sign
//! conventions follow the kernel as written; the scheme is numerically
//! unstable for most weight choices, which is irrelevant here since the
//! fields stay finite over test-sized runs and every test checks fidelity
//! against [`fd_reference`], not physics.
//!
//! [`fd_reference`] is a direct host-side transcription of the kernel body
//! with identical operation order, so engine output must match it bit for
//! bit.

use std::time::Instant;

use crate::defines::DefineSet;
use crate::engine::{swap, Arg, Buffer, Device, EngineError, Kernel, Mode};

/// Kernel source shipped with the crate; `fd_setup` builds exactly this.
pub const FD2D_SOURCE: &str = include_str!("../kernels/fd2d.occa");

/// Work-items per group on each grid axis.
const LOCAL: usize = 16;

/// Grid, stepping, and stencil configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    pub dt: f64,
    pub dx: f64,
    pub steps: usize,
    /// Stencil weights for offsets -radius..=radius; length 2*radius + 1.
    pub weights: Vec<f64>,
}

impl FdConfig {
    /// Configuration with the standard order-2r central second-difference
    /// weights scaled by 1/dx^2.
    pub fn new(
        width: usize,
        height: usize,
        radius: usize,
        dt: f64,
        dx: f64,
        steps: usize,
    ) -> Result<FdConfig, EngineError> {
        let weights = default_weights(radius, dx);
        FdConfig::with_weights(width, height, radius, dt, dx, steps, weights)
    }

    /// Configuration with caller-supplied stencil weights.
    pub fn with_weights(
        width: usize,
        height: usize,
        radius: usize,
        dt: f64,
        dx: f64,
        steps: usize,
        weights: Vec<f64>,
    ) -> Result<FdConfig, EngineError> {
        let cfg = FdConfig { width, height, radius, dt, dx, steps, weights };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), EngineError> {
        let err = |m: String| Err(EngineError::Config(m));
        if self.radius == 0 {
            return err("stencil radius must be at least 1".into());
        }
        let min = 2 * self.radius + 1;
        if self.width < min || self.height < min {
            return err(format!(
                "grid {}x{} is smaller than the stencil diameter {}",
                self.width, self.height, min
            ));
        }
        if !(self.dt > 0.0) {
            return err(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.dx > 0.0) {
            return err(format!("dx must be positive, got {}", self.dx));
        }
        if self.weights.len() != min {
            return err(format!(
                "need {} weights for radius {}, got {}",
                min,
                self.radius,
                self.weights.len()
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.width * self.height
    }
}

/// Central second-difference weights of order 2r, scaled by 1/dx^2:
/// c_0 = -2 * sum_{m=1..r} 1/m^2 and
/// c_k = 2 * (-1)^(k+1) * (r!)^2 / (k^2 * (r-k)! * (r+k)!) for k = 1..r,
/// laid out for offsets -r..=r. For r = 1 this is the familiar
/// [1, -2, 1] / dx^2.
pub fn default_weights(radius: usize, dx: f64) -> Vec<f64> {
    let r = radius as i64;
    let fact = |n: i64| -> f64 { (1..=n).map(|m| m as f64).product() };
    let scale = 1.0 / (dx * dx);
    let mut w = vec![0.0; 2 * radius + 1];
    let c0: f64 = -2.0 * (1..=r).map(|m| 1.0 / ((m * m) as f64)).sum::<f64>();
    w[radius] = c0 * scale;
    let rfact2 = fact(r) * fact(r);
    for k in 1..=r {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let ck = 2.0 * sign * rfact2 / ((k * k) as f64 * fact(r - k) * fact(r + k));
        w[(radius as i64 + k) as usize] = ck * scale;
        w[(radius as i64 - k) as usize] = ck * scale;
    }
    w
}

/// Live simulation state: three field buffers, the stencil weights, and the
/// built kernel with its work sizes already set.
pub struct FdState {
    pub device: Device,
    kernel: Kernel,
    u1: Buffer,
    u2: Buffer,
    u3: Buffer,
    weights: Buffer,
    pub current_time: f64,
    config: FdConfig,
}

/// Builds the device, kernel, and zero-initialized fields for `config`.
///
/// Grid extents and stencil parameters enter the kernel as build defines;
/// work sizes are a 16x16 local block with the global extents rounded up to
/// cover the grid (the kernel masks the overhang itself).
pub fn fd_setup(config: &FdConfig, mode: Mode) -> Result<FdState, EngineError> {
    let zero = vec![0.0f64; config.nodes()];
    fd_setup_with_fields(config, mode, &zero, &zero)
}

/// As [`fd_setup`], but seeds the two retained time levels.
pub fn fd_setup_with_fields(
    config: &FdConfig,
    mode: Mode,
    u1: &[f64],
    u2: &[f64],
) -> Result<FdState, EngineError> {
    config.validate()?;
    if u1.len() != config.nodes() || u2.len() != config.nodes() {
        return Err(EngineError::Config(format!(
            "initial fields must have {} nodes",
            config.nodes()
        )));
    }
    let device = Device::new(mode)?;

    let mut defines = DefineSet::new();
    let d = |r: Result<(), crate::defines::DefineError>| {
        r.map_err(|e| EngineError::Config(format!("define: {e}")))
    };
    d(defines.add_int("r", config.radius as i64))?;
    d(defines.add_int("w", config.width as i64))?;
    d(defines.add_int("h", config.height as i64))?;
    d(defines.add_float("dx", config.dx))?;
    d(defines.add_float("dt", config.dt))?;

    let kernel = device.build_kernel(FD2D_SOURCE, "fd2d", &defines)?;
    let round_up = |n: usize| LOCAL * n.div_ceil(LOCAL);
    kernel.set_thread_array(
        &[round_up(config.width), round_up(config.height)],
        &[LOCAL, LOCAL],
    )?;

    Ok(FdState {
        u1: device.buffer_from_f64(u1)?,
        u2: device.buffer_from_f64(u2)?,
        u3: device.buffer_from_f64(&vec![0.0; config.nodes()])?,
        weights: device.buffer_from_f64(&config.weights)?,
        device,
        kernel,
        current_time: 0.0,
        config: config.clone(),
    })
}

impl FdState {
    pub fn config(&self) -> &FdConfig {
        &self.config
    }

    /// Advances one time step: bumps the clock, computes `u3` from `u1` and
    /// `u2`, then rotates the fields with two O(1) swaps so `u2` holds the
    /// newest level.
    pub fn timestep(&mut self) -> Result<(), EngineError> {
        self.current_time += self.config.dt;
        self.kernel.invoke(&[
            Arg::Buf(&self.u1),
            Arg::Buf(&self.u2),
            Arg::Buf(&self.u3),
            Arg::Buf(&self.weights),
            Arg::F64(self.current_time),
        ])?;
        swap(&self.u1, &self.u2)?;
        swap(&self.u2, &self.u3)?;
        Ok(())
    }

    pub fn read_u1(&self) -> Result<Vec<f64>, EngineError> {
        self.u1.read_f64()
    }

    pub fn read_u2(&self) -> Result<Vec<f64>, EngineError> {
        self.u2.read_f64()
    }

    pub fn read_u3(&self) -> Result<Vec<f64>, EngineError> {
        self.u3.read_f64()
    }
}

/// One reference update step on the host, transcribing the kernel body with
/// identical arithmetic order so results match the engine bit for bit.
/// Returns the new field (the kernel's `u3`).
pub fn fd_reference(u1: &[f64], u2: &[f64], cfg: &FdConfig) -> Vec<f64> {
    let w = cfg.width as i64;
    let h = cfg.height as i64;
    let r = cfg.radius as i64;
    let dt = cfg.dt;
    let mut u3 = vec![0.0f64; u1.len()];
    for j in 0..h {
        for i in 0..w {
            let id = (j * w + i) as usize;
            let mut lap = 0.0f64;
            let r_u1 = u1[id];
            let r_u2 = u2[id];
            for k in -r..=r {
                let n_x = (i + k + w) % w;
                let n_y = (j + k + h) % h;
                let wk = cfg.weights[(r + k) as usize];
                lap += wk * u1[(j * w + n_x) as usize] + wk * u1[(n_y * w + i) as usize];
            }
            u3[id] = -2.0 * r_u1 + r_u2 - dt * dt * lap;
        }
    }
    u3
}

/// Advances `steps` reference updates with the same field rotation the
/// engine path uses; returns the final (u1, u2).
pub fn fd_reference_run(
    u1: &[f64],
    u2: &[f64],
    cfg: &FdConfig,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut a = u1.to_vec();
    let mut b = u2.to_vec();
    for _ in 0..steps {
        let new = fd_reference(&a, &b, cfg);
        // Mirror the two swaps: u1 <- u2, u2 <- u3.
        a = std::mem::replace(&mut b, new);
    }
    (a, b)
}

/// Result of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub mnodes_per_s: f64,
    pub wall_seconds: f64,
    /// Sum of |u2| over the final field; schedule-independent.
    pub checksum: f64,
}

/// Sum of absolute values, the checksum used by the benchmark and the CLI.
pub fn checksum(field: &[f64]) -> f64 {
    field.iter().map(|x| x.abs()).sum()
}

/// Times `config.steps` updates of an impulse-seeded field and reports the
/// throughput in millions of node updates per second.
pub fn bench(config: &FdConfig, mode: Mode) -> Result<BenchReport, EngineError> {
    if config.steps == 0 {
        return Err(EngineError::Config("benchmark needs at least 1 step".into()));
    }
    let mut init = vec![0.0f64; config.nodes()];
    init[(config.height / 2) * config.width + config.width / 2] = 1.0;
    let mut state = fd_setup_with_fields(config, mode, &init, &init)?;
    let start = Instant::now();
    for _ in 0..config.steps {
        state.timestep()?;
    }
    let wall = start.elapsed().as_secs_f64();
    let nodes = (config.nodes() * config.steps) as f64;
    Ok(BenchReport {
        mnodes_per_s: nodes / wall / 1.0e6,
        wall_seconds: wall,
        checksum: checksum(&state.read_u2()?),
    })
}
