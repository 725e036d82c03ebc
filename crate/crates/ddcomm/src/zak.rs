//! Grids, frames, sampled signals and the Zak transforms.
//!
//! The discrete pair [`dzt`]/[`idzt`] is exact and unitary. The continuous
//! transform is approximated on a lattice with delay step `T/(M*osr)` and
//! Doppler step `1/(N_ext*T)`; see [`zak_time_sampled`] and [`izak_time`].
//!
//! Frames are stored with the delay index as the fast axis, so the flat
//! vector of a frame is `vec[l + k*M]`.

use std::f64::consts::TAU;

use rustfft::FftPlanner;

use crate::{cis_cycles, lattice_index, Error, Result, C64};

/// Frame geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DDGrid {
    /// Delay bins per period.
    pub m: usize,
    /// Doppler bins per period.
    pub n: usize,
    /// Delay period in seconds.
    pub t: f64,
    /// Samples per delay bin.
    pub osr: usize,
    /// Extended delay bins (M~ >= M).
    pub m_ext: usize,
    /// Extended Doppler bins (N~ >= N).
    pub n_ext: usize,
}

impl DDGrid {
    /// Grid with `osr = 2` and no extension.
    pub fn new(m: usize, n: usize, t: f64) -> Result<Self> {
        let g = DDGrid { m, n, t, osr: 2, m_ext: m, n_ext: n };
        g.validate()?;
        Ok(g)
    }

    pub fn with_osr(mut self, osr: usize) -> Result<Self> {
        self.osr = osr;
        self.validate()?;
        Ok(self)
    }

    pub fn with_ext(mut self, m_ext: usize, n_ext: usize) -> Result<Self> {
        self.m_ext = m_ext;
        self.n_ext = n_ext;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.osr == 0 {
            return Err(Error::InvalidParameter(format!(
                "M={}, N={}, osr={} must all be >= 1",
                self.m, self.n, self.osr
            )));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParameter(format!("T={} must be positive", self.t)));
        }
        if self.m_ext < self.m || self.n_ext < self.n {
            return Err(Error::InvalidParameter(format!(
                "extended sizes ({}, {}) smaller than ({}, {})",
                self.m_ext, self.n_ext, self.m, self.n
            )));
        }
        Ok(())
    }

    /// Sample period `T/(M*osr)`.
    pub fn dt(&self) -> f64 {
        self.t / (self.m * self.osr) as f64
    }

    pub fn sample_rate(&self) -> f64 {
        (self.m * self.osr) as f64 / self.t
    }

    /// Samples per delay period.
    pub fn samples_per_period(&self) -> usize {
        self.m * self.osr
    }

    pub fn frame_duration(&self) -> f64 {
        self.n as f64 * self.t
    }

    pub fn bandwidth(&self) -> f64 {
        self.m as f64 / self.t
    }

    pub fn delay_resolution(&self) -> f64 {
        self.t / self.m as f64
    }

    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n as f64 * self.t)
    }

    /// Number of symbols `M*N`.
    pub fn size(&self) -> usize {
        self.m * self.n
    }

    pub fn tau(&self, l: i64) -> f64 {
        l as f64 * self.delay_resolution()
    }

    pub fn nu(&self, k: i64) -> f64 {
        k as f64 * self.doppler_resolution()
    }

    /// Doppler axis covering one period `[0, 1/T)` with step `1/(N_ext*T)`.
    pub fn nu_axis(&self) -> Vec<f64> {
        (0..self.n_ext)
            .map(|j| j as f64 / (self.n_ext as f64 * self.t))
            .collect()
    }

    /// Delay axis covering one period `[0, T)` with step `dt`.
    pub fn tau_axis(&self) -> Vec<f64> {
        (0..self.samples_per_period()).map(|i| i as f64 * self.dt()).collect()
    }
}

/// An `M x N` delay-Doppler frame, `data[l + k*M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DDFrame {
    pub grid: DDGrid,
    data: Vec<C64>,
}

impl DDFrame {
    pub fn zeros(grid: DDGrid) -> Self {
        DDFrame { grid, data: vec![C64::new(0.0, 0.0); grid.size()] }
    }

    pub fn from_vec(grid: DDGrid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.size() {
            return Err(Error::Dimension(format!(
                "frame needs {} entries, got {}",
                grid.size(),
                data.len()
            )));
        }
        Ok(DDFrame { grid, data })
    }

    pub fn from_fn(grid: DDGrid, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(grid.size());
        for k in 0..grid.n {
            for l in 0..grid.m {
                data.push(f(l, k));
            }
        }
        DDFrame { grid, data }
    }

    pub fn get(&self, l: usize, k: usize) -> C64 {
        self.data[l + k * self.grid.m]
    }

    pub fn set(&mut self, l: usize, k: usize, v: C64) {
        let m = self.grid.m;
        self.data[l + k * m] = v;
    }

    /// Flat view in `l + k*M` order.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Uniformly sampled complex baseband signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<C64>,
    pub sample_rate: f64,
    /// Time of the first sample in seconds.
    pub t0: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<C64>, sample_rate: f64, t0: f64) -> Self {
        TimeSignal { samples, sample_rate, t0 }
    }

    pub fn zeros(len: usize, sample_rate: f64, t0: f64) -> Self {
        TimeSignal::new(vec![C64::new(0.0, 0.0); len], sample_rate, t0)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt()
    }

    /// `sum |x|^2 dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dt()
    }

    /// Offset in samples of time `t` from `t0`, if `t` is on this signal's lattice.
    pub fn lattice_offset(&self, t: f64) -> Option<i64> {
        lattice_index(t - self.t0, self.dt())
    }

    /// Sample at integer offset `i` from `t0`, zero outside the buffer.
    pub fn at(&self, i: i64) -> C64 {
        if i < 0 || i as usize >= self.samples.len() {
            C64::new(0.0, 0.0)
        } else {
            self.samples[i as usize]
        }
    }

    pub(crate) fn check_rate(&self, rate: f64) -> Result<()> {
        if ((self.sample_rate - rate) / rate).abs() > 1e-9 {
            return Err(Error::RateMismatch(self.sample_rate, rate));
        }
        Ok(())
    }
}

/// `<x, y> = sum x y* dt` over the union of supports; both signals must share
/// a sample lattice.
pub fn inner_product(x: &TimeSignal, y: &TimeSignal) -> Result<C64> {
    y.check_rate(x.sample_rate)?;
    let off = x
        .lattice_offset(y.t0)
        .ok_or_else(|| Error::Quantization("signals are on different lattices".into()))?;
    let mut acc = C64::new(0.0, 0.0);
    for (j, yv) in y.samples.iter().enumerate() {
        acc += x.at(off + j as i64) * yv.conj();
    }
    Ok(acc * x.dt())
}

/// A function sampled over a rectangular `(tau, nu)` lattice, `values[i][j]`
/// stored row-major with `i` indexing delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DDSampledSurface {
    pub grid: DDGrid,
    pub tau_axis: Vec<f64>,
    pub nu_axis: Vec<f64>,
    values: Vec<C64>,
}

impl DDSampledSurface {
    pub fn new(grid: DDGrid, tau_axis: Vec<f64>, nu_axis: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if values.len() != tau_axis.len() * nu_axis.len() {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} lattice",
                values.len(),
                tau_axis.len(),
                nu_axis.len()
            )));
        }
        check_uniform(&tau_axis, "tau")?;
        check_uniform(&nu_axis, "nu")?;
        Ok(DDSampledSurface { grid, tau_axis, nu_axis, values })
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.nu_axis.len() + j]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tau_axis.len(), self.nu_axis.len())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn check_uniform(axis: &[f64], name: &str) -> Result<()> {
    if axis.len() < 2 {
        return Ok(());
    }
    let step = axis[1] - axis[0];
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("{name} axis not increasing")));
    }
    for w in axis.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(axis[0].abs() * 1e-6) {
            return Err(Error::InvalidParameter(format!("{name} axis not uniform")));
        }
    }
    Ok(())
}

fn dzt_core(input: &[C64], m: usize, n: usize, inverse: bool) -> Vec<C64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for l in 0..m {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = input[l + i * m];
        }
        fft.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            out[l + i * m] = *b * scale;
        }
    }
    out
}

/// Discrete Zak transform of a length `M*N` vector:
/// `X[l,k] = N^{-1/2} sum_n x[l + nM] e^{-j 2pi nk/N}`.
pub fn dzt(x: &[C64], grid: &DDGrid) -> Result<DDFrame> {
    if x.len() != grid.size() {
        return Err(Error::Dimension(format!("dzt needs {} samples, got {}", grid.size(), x.len())));
    }
    Ok(DDFrame { grid: *grid, data: dzt_core(x, grid.m, grid.n, false) })
}

/// Inverse of [`dzt`]: `x[l + nM] = N^{-1/2} sum_k X[l,k] e^{+j 2pi nk/N}`.
pub fn idzt(frame: &DDFrame) -> Vec<C64> {
    dzt_core(&frame.data, frame.grid.m, frame.grid.n, true)
}

/// Sampled continuous Zak transform over one delay period and one Doppler
/// period: `Z(tau, nu) = sqrt(T) sum_{|k|<=R} x(tau + kT) e^{-j 2pi k nu T}`.
pub fn zak_time_sampled(x: &TimeSignal, grid: &DDGrid, replicas: usize) -> Result<DDSampledSurface> {
    zak_time_on(x, grid, replicas, &grid.tau_axis(), &grid.nu_axis())
}

/// Same sum as [`zak_time_sampled`] on caller-chosen axes. Delays must lie on
/// the signal's sample lattice; Doppler values are arbitrary.
pub fn zak_time_on(
    x: &TimeSignal,
    grid: &DDGrid,
    replicas: usize,
    tau_axis: &[f64],
    nu_axis: &[f64],
) -> Result<DDSampledSurface> {
    grid.validate()?;
    x.check_rate(grid.sample_rate())?;
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be >= 1".into()));
    }
    if x.duration() < grid.t * (1.0 - 1e-12) {
        return Err(Error::Coverage(format!(
            "signal spans {} s, shorter than one period {} s",
            x.duration(),
            grid.t
        )));
    }
    let p = grid.samples_per_period() as i64;
    let r = replicas as i64;
    let mut values = Vec::with_capacity(tau_axis.len() * nu_axis.len());
    let mut taps = Vec::with_capacity(2 * replicas + 1);
    for &tau in tau_axis {
        let i0 = x
            .lattice_offset(tau)
            .ok_or_else(|| Error::Quantization(format!("tau={tau} is off the sample lattice")))?;
        taps.clear();
        for k in -r..=r {
            let v = x.at(i0 + k * p);
            if v != C64::new(0.0, 0.0) {
                taps.push((k, v));
            }
        }
        for &nu in nu_axis {
            let nt = nu * grid.t;
            let mut acc = C64::new(0.0, 0.0);
            for &(k, v) in &taps {
                acc += v * cis_cycles(-(k as f64) * nt);
            }
            values.push(acc * grid.t.sqrt());
        }
    }
    DDSampledSurface::new(*grid, tau_axis.to_vec(), nu_axis.to_vec(), values)
}

fn check_doppler_period(z: &DDSampledSurface) -> Result<f64> {
    let t = z.grid.t;
    let nj = z.nu_axis.len();
    if nj == 0 {
        return Err(Error::Coverage("empty Doppler axis".into()));
    }
    let step = if nj > 1 { z.nu_axis[1] - z.nu_axis[0] } else { 1.0 / t };
    if z.nu_axis[0].abs() > 1e-9 / t || ((step * nj as f64 * t) - 1.0).abs() > 1e-9 {
        return Err(Error::Coverage("Doppler axis must cover [0, 1/T) uniformly".into()));
    }
    Ok(step)
}

/// Inverse Zak transform by a Riemann sum over one Doppler period:
/// `x(t) = sqrt(T) sum_j Z(t, nu_j) dnu`, for `t` on the surface's delay axis.
pub fn izak_time(z: &DDSampledSurface) -> Result<TimeSignal> {
    izak_time_periods(z, 0, 1)
}

/// Inverse Zak transform over `periods` consecutive delay periods starting at
/// period `first`, using `Z(tau + pT, nu) = e^{j 2pi p nu T} Z(tau, nu)`.
/// The delay axis must hold exactly one period for the output to be contiguous.
pub fn izak_time_periods(z: &DDSampledSurface, first: i64, periods: usize) -> Result<TimeSignal> {
    let dnu = check_doppler_period(z)?;
    let (ni, nj) = z.shape();
    let t = z.grid.t;
    if periods > 1 && ni != z.grid.samples_per_period() {
        return Err(Error::Coverage("delay axis must hold exactly one period".into()));
    }
    let scale = t.sqrt() * dnu;
    let mut out = Vec::with_capacity(ni * periods);
    for p in first..first + periods as i64 {
        let tw: Vec<C64> = z.nu_axis.iter().map(|&nu| cis_cycles(p as f64 * nu * t)).collect();
        for i in 0..ni {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..nj {
                acc += tw[j] * z.get(i, j);
            }
            out.push(acc * scale);
        }
    }
    let t0 = z.tau_axis.first().copied().unwrap_or(0.0) + first as f64 * t;
    Ok(TimeSignal::new(out, z.grid.sample_rate(), t0))
}

/// Fold `(l, k)` into `[0, lp) x [0, kp)` and return the phase picked up by
/// the delay folds: `X[l, k] = phase * X[lw, kw]`, with `e^{+j 2pi kw/kp}` per
/// fold of `+lp` and Doppler folds contributing nothing.
pub fn wrap_lattice(l: i64, k: i64, lp: usize, kp: usize) -> (usize, usize, C64) {
    let (lp, kp) = (lp as i64, kp as i64);
    let folds = l.div_euclid(lp);
    let lw = l.rem_euclid(lp);
    let kw = k.rem_euclid(kp);
    let cyc = (folds * kw).rem_euclid(kp) as f64 / kp as f64;
    (lw as usize, kw as usize, C64::from_polar(1.0, TAU * cyc))
}

/// [`wrap_lattice`] on the frame lattice `(M, N)`.
pub fn quasi_periodic_wrap(l: i64, k: i64, grid: &DDGrid) -> (usize, usize, C64) {
    wrap_lattice(l, k, grid.m, grid.n)
}

/// Largest deviations from quasi-periodicity of the sampled Zak transform of
/// `x`, relative to the surface peak: `(delay, doppler)` with
/// `|Z(tau + T, nu) - e^{j 2pi nu T} Z(tau, nu)|` and `|Z(tau, nu + 1/T) - Z(tau, nu)|`
/// over the fundamental rectangle on the grid lattice.
pub fn quasi_periodicity_residual(x: &TimeSignal, grid: &DDGrid, replicas: usize) -> Result<(f64, f64)> {
    let taus = grid.tau_axis();
    let nus = grid.nu_axis();
    let z = zak_time_on(x, grid, replicas, &taus, &nus)?;
    let shifted_tau: Vec<f64> = taus.iter().map(|t| t + grid.t).collect();
    let shifted_nu: Vec<f64> = nus.iter().map(|v| v + 1.0 / grid.t).collect();
    let zt = zak_time_on(x, grid, replicas, &shifted_tau, &nus)?;
    let zn = zak_time_on(x, grid, replicas, &taus, &shifted_nu)?;
    let peak = z.max_abs();
    if peak == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (ni, nj) = z.shape();
    let (mut rd, mut rn) = (0.0f64, 0.0f64);
    for i in 0..ni {
        for (j, nu) in nus.iter().enumerate().take(nj) {
            let base = z.get(i, j);
            rd = rd.max((zt.get(i, j) - cis_cycles(nu * grid.t) * base).norm());
            rn = rn.max((zn.get(i, j) - base).norm());
        }
    }
    Ok((rd / peak, rn / peak))
}
