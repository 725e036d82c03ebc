//! IDZT + cyclic prefix + pulse-shaping transceiver and its effective channel.
//!
//! Transmit: `s(t) = sqrt(NT) TW(t) sum_i x_cp[i] FW_T(t - i T/M)`, with
//! `FW_T` the impulse response of the frequency window. The filter is applied
//! by FFT on a circular buffer at least twice the window support, whose
//! length is a multiple of `2 M osr` so window edges land on FFT bins.
//!
//! Receive: window by `TW*`, correlate with `FW_T` at the lattice points,
//! drop the CP, then DZT (or the scheme's own symbol transform).

use std::sync::Arc;

use faer::Mat;
use rustfft::{Fft, FftPlanner};

use crate::ambiguity::{af_truncated_closed_form, lattice_delta_kernel, AfModel};
use crate::channel::{apply_time_channel, crystallization_check, DDChannel, TwistedConvolve};
use crate::pulses::{BasisConfig, WindowDomain, WindowKind, WindowSpec};
use crate::zak::{dzt, idzt, DDFrame, DDGrid, TimeSignal};
use crate::{cis_cycles, lattice_index, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModemConfig {
    pub basis: BasisConfig,
    /// Cyclic prefix length in delay bins (`T/M` samples).
    pub cp_len: usize,
    /// Apply the `sqrt(NT)` factor at both ends.
    pub normalize: bool,
}

impl ModemConfig {
    pub fn new(basis: BasisConfig, cp_len: usize) -> Self {
        ModemConfig { basis, cp_len, normalize: true }
    }

    pub fn grid(&self) -> DDGrid {
        self.basis.grid
    }

    pub fn cp_duration(&self) -> f64 {
        self.cp_len as f64 * self.basis.grid.delay_resolution()
    }
}

/// Unitary map between the length-`MN` time vector and the symbol domain.
pub trait SymbolTransform: Send + Sync {
    fn to_symbols(&self, x: &[C64]) -> Vec<C64>;
    fn to_time(&self, s: &[C64]) -> Vec<C64>;
}

/// The DZT pair.
#[derive(Debug, Clone, Copy)]
pub struct ZakDomain(pub DDGrid);

impl SymbolTransform for ZakDomain {
    fn to_symbols(&self, x: &[C64]) -> Vec<C64> {
        dzt(x, &self.0).expect("length checked by caller").into_vec()
    }

    fn to_time(&self, s: &[C64]) -> Vec<C64> {
        idzt(&DDFrame::from_vec(self.0, s.to_vec()).expect("length checked by caller"))
    }
}

/// Where the lattice samples go: one CP for the whole frame, or one per
/// block of `M` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpLayout {
    Frame(usize),
    PerSymbol(usize),
}

/// Precomputed transceiver for one configuration.
pub struct Modem {
    grid: DDGrid,
    layout: CpLayout,
    /// `(lattice index, data index)` for every transmitted lattice pulse.
    tx_pos: Vec<(i64, usize)>,
    /// Lattice index of each data sample at the receiver.
    rx_pos: Vec<i64>,
    /// First sample (in `dt` units from t = 0) of the time-window support.
    s0: i64,
    tw: Vec<f64>,
    fw_bins: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    gain: f64,
    time_window: WindowSpec,
    tw_start: f64,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem")
            .field("grid", &self.grid)
            .field("layout", &self.layout)
            .field("support", &(self.s0, self.tw.len()))
            .field("buffer", &self.fw_bins.len())
            .finish()
    }
}

impl Modem {
    /// DD transceiver with a single frame CP.
    pub fn new(cfg: &ModemConfig) -> Result<Self> {
        cfg.basis.validate()?;
        Self::build(
            cfg.basis.grid,
            CpLayout::Frame(cfg.cp_len),
            cfg.basis.time_window.kind,
            cfg.basis.freq_window,
            cfg.normalize,
        )
    }

    pub(crate) fn build(
        grid: DDGrid,
        layout: CpLayout,
        tw_kind: WindowKind,
        freq_window: WindowSpec,
        normalize: bool,
    ) -> Result<Self> {
        grid.validate()?;
        let (m, n, osr) = (grid.m, grid.n, grid.osr);
        let mn = m * n;
        let (tx_pos, rx_pos): (Vec<(i64, usize)>, Vec<i64>) = match layout {
            CpLayout::Frame(cp) => {
                if cp > mn {
                    return Err(Error::InvalidParameter(format!("cp_len {cp} exceeds frame length {mn}")));
                }
                let tx = (-(cp as i64)..mn as i64).map(|i| (i, i.rem_euclid(mn as i64) as usize)).collect();
                (tx, (0..mn as i64).collect())
            }
            CpLayout::PerSymbol(cp) => {
                if cp > m {
                    return Err(Error::InvalidParameter(format!("per-symbol cp {cp} exceeds M={m}")));
                }
                let blk = (m + cp) as i64;
                let mut tx = Vec::with_capacity(n * (m + cp));
                let mut rx = Vec::with_capacity(mn);
                for s in 0..n {
                    let base = s as i64 * blk;
                    for o in 0..(m + cp) {
                        let d = if o < cp { s * m + m - cp + o } else { s * m + o - cp };
                        tx.push((base + o as i64, d));
                    }
                    for o in 0..m {
                        rx.push(base + (cp + o) as i64);
                    }
                }
                (tx, rx)
            }
        };
        let dt = grid.dt();
        let bin_t = grid.delay_resolution();
        let first = tx_pos.first().map(|p| p.0).unwrap_or(0);
        let last = tx_pos.last().map(|p| p.0).unwrap_or(0);
        let nominal = (last - first + 1) as f64 * bin_t;
        let time_window = WindowSpec::of_kind(tw_kind, WindowDomain::Time, nominal)?;
        let tw_start = first as f64 * bin_t - tw_kind.beta() * nominal / 2.0;
        let s0 = (tw_start / dt + 1e-9).floor() as i64;
        let s1 = ((tw_start + time_window.span) / dt - 1e-9).ceil() as i64;
        // unit power over the N T data part, so the CP extension adds energy
        // rather than diluting it
        let tw_scale = (nominal / grid.frame_duration()).sqrt();
        let tw: Vec<f64> = (s0..s1).map(|s| tw_scale * time_window.value(s as f64 * dt - tw_start)).collect();
        let unit = 2 * m * osr;
        let buf = (2 * tw.len()).div_ceil(unit) * unit;
        if freq_window.span > grid.sample_rate() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter("frequency window wider than the sample rate".into()));
        }
        let df = 1.0 / (buf as f64 * dt);
        let fw_bins = (0..buf).map(|b| freq_window.value(b as f64 * df)).collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(buf);
        let ifft = planner.plan_fft_inverse(buf);
        let gain = if normalize { grid.frame_duration().sqrt() } else { 1.0 };
        Ok(Modem { grid, layout, tx_pos, rx_pos, s0, tw, fw_bins, fft, ifft, gain, time_window, tw_start })
    }

    pub fn grid(&self) -> &DDGrid {
        &self.grid
    }

    pub fn layout(&self) -> CpLayout {
        self.layout
    }

    /// Time window actually applied, with the time of its span start.
    pub fn time_window(&self) -> (WindowSpec, f64) {
        (self.time_window, self.tw_start)
    }

    fn buf_index(&self, lattice: i64) -> usize {
        (lattice * self.grid.osr as i64 - self.s0) as usize
    }

    /// Shape, window and scale a length-`MN` time vector (before CP).
    pub fn transmit_time(&self, x: &[C64]) -> Result<TimeSignal> {
        let mn = self.grid.size();
        if x.len() != mn {
            return Err(Error::Dimension(format!("expected {mn} samples, got {}", x.len())));
        }
        let b = self.fw_bins.len();
        let mut buf = vec![C64::new(0.0, 0.0); b];
        for &(i, d) in &self.tx_pos {
            buf[self.buf_index(i)] = x[d];
        }
        self.fft.process(&mut buf);
        for (v, &w) in buf.iter_mut().zip(&self.fw_bins) {
            *v *= w;
        }
        self.ifft.process(&mut buf);
        let scale = self.gain / (b as f64 * self.grid.dt());
        let out = self.tw.iter().zip(&buf).map(|(&w, v)| v * (w * scale)).collect();
        Ok(TimeSignal::new(out, self.grid.sample_rate(), self.s0 as f64 * self.grid.dt()))
    }

    /// Matched filter at the data lattice points; returns the length-`MN`
    /// time vector after CP removal.
    pub fn receive_time(&self, r: &TimeSignal) -> Result<Vec<C64>> {
        r.check_rate(self.grid.sample_rate())?;
        let dt = self.grid.dt();
        let off = r
            .lattice_offset(self.s0 as f64 * dt)
            .ok_or_else(|| Error::Quantization("received signal is off the modem lattice".into()))?;
        let len = self.tw.len() as i64;
        if off < 0 || off + len > r.len() as i64 {
            return Err(Error::Dimension(format!(
                "received signal must cover samples [{}, {}) of the window support",
                self.s0,
                self.s0 + len
            )));
        }
        let b = self.fw_bins.len();
        let mut buf = vec![C64::new(0.0, 0.0); b];
        for (n, &w) in self.tw.iter().enumerate() {
            buf[n] = r.samples[(off + n as i64) as usize] * w;
        }
        self.fft.process(&mut buf);
        for (v, &w) in buf.iter_mut().zip(&self.fw_bins) {
            *v *= w;
        }
        self.ifft.process(&mut buf);
        let scale = self.gain / b as f64;
        Ok(self.rx_pos.iter().map(|&i| buf[self.buf_index(i)] * scale).collect())
    }

    /// DD frame in, time signal out.
    pub fn transmit(&self, x: &DDFrame) -> Result<TimeSignal> {
        self.transmit_time(&idzt(x))
    }

    pub fn receive(&self, r: &TimeSignal) -> Result<DDFrame> {
        dzt(&self.receive_time(r)?, &self.grid)
    }

    /// Per-sample AWGN variance that yields variance `n0` per unit-energy
    /// symbol before receive filtering.
    pub fn sample_noise_variance(&self, n0: f64) -> f64 {
        n0 / self.grid.dt()
    }

    /// Mean noise variance at the receiver output for input noise of
    /// [`sample_noise_variance`](Self::sample_noise_variance)`(n0)`.
    pub fn output_noise_variance(&self, n0: f64) -> f64 {
        let b = self.fw_bins.len();
        let dt = self.grid.dt();
        let mut h: Vec<C64> = self.fw_bins.iter().map(|&w| C64::new(w, 0.0)).collect();
        self.ifft.process(&mut h);
        let df = 1.0 / (b as f64 * dt);
        let mut acc = 0.0;
        for &i in &self.rx_pos {
            let p = self.buf_index(i) as i64;
            let mut s = 0.0;
            for (nidx, &w) in self.tw.iter().enumerate() {
                let k = (nidx as i64 - p).rem_euclid(b as i64) as usize;
                s += w * w * (h[k] * df).norm_sqr();
            }
            acc += s;
        }
        let per = acc / self.rx_pos.len() as f64;
        self.sample_noise_variance(n0) * self.gain * self.gain * dt * dt * per
    }

    /// Probe the chain with every unit vector: `H_T[:, j] = rx(ch(tx(e_j)))`.
    pub fn probe_time_matrix(&self, ch: &DDChannel) -> Result<Mat<C64>> {
        let mn = self.grid.size();
        let mut h = Mat::<C64>::zeros(mn, mn);
        let mut e = vec![C64::new(0.0, 0.0); mn];
        for j in 0..mn {
            e[j] = C64::new(1.0, 0.0);
            let s = self.transmit_time(&e)?;
            let r = apply_time_channel(&s, ch)?;
            let y = self.receive_time(&r)?;
            for (i, v) in y.into_iter().enumerate() {
                h[(i, j)] = v;
            }
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(h)
    }

    /// Effective channel with the symbol-domain matrix taken through `tr`.
    pub fn effective_channel(&self, ch: &DDChannel, tr: &dyn SymbolTransform) -> Result<EffectiveChannel> {
        if !crystallization_check(ch, self.grid.t) {
            return Err(Error::Crystallization("channel spreads exceed (T, 1/T)".into()));
        }
        let h_t = self.probe_time_matrix(ch)?;
        let h_dd = conjugate_by(&h_t, tr);
        let band_half_width = band_width(&h_t, 1e-10);
        Ok(EffectiveChannel { h_t, h_dd, band_half_width })
    }
}

/// `A H A^H` for the unitary `A` applied by `tr.to_symbols`.
pub fn conjugate_by(h: &Mat<C64>, tr: &dyn SymbolTransform) -> Mat<C64> {
    let n = h.nrows();
    let apply_cols = |m: &Mat<C64>| -> Mat<C64> {
        let mut out = Mat::<C64>::zeros(n, n);
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = m[(i, j)];
            }
            for (i, v) in tr.to_symbols(&col).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    };
    let b = apply_cols(h);
    let bh = b.adjoint().to_owned();
    apply_cols(&bh).adjoint().to_owned()
}

/// Smallest circular half-width `L` with every entry beyond it below
/// `rel_tol` of the largest entry.
pub fn band_width(h: &Mat<C64>, rel_tol: f64) -> usize {
    let n = h.nrows();
    let mut peak: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            peak = peak.max(h[(i, j)].norm());
        }
    }
    let mut l = 0;
    for j in 0..n {
        for i in 0..n {
            if h[(i, j)].norm() >= rel_tol * peak {
                let d = i.abs_diff(j);
                l = l.max(d.min(n - d));
            }
        }
    }
    l
}

#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    /// `y_T = H_T x_T`, both after CP handling.
    pub h_t: Mat<C64>,
    /// `H_DD = (F_N (x) I_M) H_T (F_N^H (x) I_M)`.
    pub h_dd: Mat<C64>,
    pub band_half_width: usize,
}

pub fn transmit(x: &DDFrame, cfg: &ModemConfig) -> Result<TimeSignal> {
    Modem::new(cfg)?.transmit(x)
}

pub fn receive(r: &TimeSignal, cfg: &ModemConfig) -> Result<DDFrame> {
    Modem::new(cfg)?.receive(r)
}

pub fn effective_time_matrix(cfg: &ModemConfig, ch: &DDChannel) -> Result<EffectiveChannel> {
    let cp = cfg.cp_duration();
    if ch.max_delay() > cp + 1e-12 * cfg.grid().t {
        return Err(Error::InvalidParameter(format!(
            "max delay {} exceeds CP duration {cp}",
            ch.max_delay()
        )));
    }
    let modem = Modem::new(cfg)?;
    modem.effective_channel(ch, &ZakDomain(cfg.grid()))
}

/// `Y[l,k] = sum_p h_p e^{j 2pi k_p (l - l_p)/(MN)} alpha X[[l - l_p]_M, [k - k_p]_N]`.
pub fn io_integer_closed_form(x: &DDFrame, ch: &DDChannel) -> Result<DDFrame> {
    x.twisted_convolve(ch)
}

/// Ambiguity used by [`io_asymptotic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoKernel {
    /// Closed form for the windows as constructed.
    Truncated,
    /// Periodic-window closed form (Rect/Cosine only).
    Periodic,
    /// Origin value repeated on the `(M~, N~)` lattice and zero elsewhere;
    /// needs an integer channel and `M~ = M`, `N~ = N`.
    LatticeDelta,
}

/// Symbol-wise IO relation
/// `Y[l,k] = sum_p h_p sum_{l',k'} e^{j 2pi nu_p (tau_l - tau_p)}
///   e^{j 2pi nu_k' (tau_l - tau_p - tau_l')} X[l',k'] A(tau_l - tau_p - tau_l', nu_k - nu_p - nu_k')`.
/// Kernel entries below `1e-6` of the peak are skipped.
pub fn io_asymptotic(x: &DDFrame, ch: &DDChannel, cfg: &BasisConfig, kernel: IoKernel) -> Result<DDFrame> {
    let g = x.grid;
    let (m, n) = (g.m as i64, g.n as i64);
    let (dl, dn) = (g.delay_resolution(), g.doppler_resolution());
    let mn = (m * n) as f64;
    let mut y = DDFrame::zeros(g);
    for p in &ch.paths {
        // table over (l - l', k - k') in (-M, M) x (-N, N)
        let nl = (2 * m - 1) as usize;
        let nk = (2 * n - 1) as usize;
        let table: Vec<C64> = match kernel {
            IoKernel::LatticeDelta => {
                if cfg.grid.m_ext != g.m || cfg.grid.n_ext != g.n {
                    return Err(Error::UnsupportedWindow("lattice kernel needs M~ = M and N~ = N".into()));
                }
                let lp = lattice_index(p.tau, dl);
                let kp = lattice_index(p.nu, dn);
                let (lp, kp) = match (lp, kp) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Error::NonIntegerChannel(format!("path ({}, {})", p.tau, p.nu))),
                };
                let mut t = Vec::with_capacity(nl * nk);
                for a in -(m - 1)..m {
                    for b in -(n - 1)..n {
                        t.push(lattice_delta_kernel(cfg, a - lp, b - kp));
                    }
                }
                t
            }
            IoKernel::Truncated | IoKernel::Periodic => {
                let model = if kernel == IoKernel::Truncated { AfModel::Truncated } else { AfModel::Periodic };
                let taus: Vec<f64> = (-(m - 1)..m).map(|a| a as f64 * dl - p.tau).collect();
                let nus: Vec<f64> = (-(n - 1)..n).map(|b| b as f64 * dn - p.nu).collect();
                af_truncated_closed_form(cfg, &taus, &nus, model)?.values().to_vec()
            }
        };
        let peak = table.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let floor = 1e-6 * peak;
        let taup_bins = p.tau / dl;
        for l in 0..m {
            let outer = p.gain * cis_cycles(p.nu * (l as f64 * dl - p.tau));
            for k in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for lq in 0..m {
                    for kq in 0..n {
                        let a = table[((l - lq + m - 1) as usize) * nk + (k - kq + n - 1) as usize];
                        if a.norm() <= floor {
                            continue;
                        }
                        let ph = cis_cycles(kq as f64 * ((l - lq) as f64 - taup_bins) / mn);
                        acc += ph * a * x.get(lq as usize, kq as usize);
                    }
                }
                let v = y.get(l as usize, k as usize) + outer * acc;
                y.set(l as usize, k as usize, v);
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Path;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rect_cfg(m: usize, n: usize, cp: usize) -> ModemConfig {
        ModemConfig::new(BasisConfig::new(m, n, 1.0, 2, WindowKind::Rect, WindowKind::Rect).unwrap(), cp)
    }

    fn frame(g: DDGrid, seed: u64) -> DDFrame {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut r = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        DDFrame::from_fn(g, |_, _| c(r(), r()))
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = rect_cfg(8, 4, 2);
        let m = Modem::new(&cfg).unwrap();
        let s = m.transmit(&DDFrame::zeros(cfg.grid())).unwrap();
        assert!(s.samples.iter().all(|v| v.norm() == 0.0));
        let y = m.receive(&s).unwrap();
        assert_eq!(y.norm_sqr(), 0.0);
    }

    #[test]
    fn single_symbol_is_a_pulse_train() {
        let cfg = rect_cfg(16, 8, 0);
        let m = Modem::new(&cfg).unwrap();
        let mut x = DDFrame::zeros(cfg.grid());
        x.set(0, 0, c(1.0, 0.0));
        let s = m.transmit(&x).unwrap();
        let p = cfg.grid().samples_per_period();
        let off = s.lattice_offset(0.0).unwrap() as usize;
        let peaks: Vec<f64> = (0..8).map(|n| s.samples[off + n * p].norm()).collect();
        for v in &peaks {
            assert!((v - peaks[0]).abs() < 0.05 * peaks[0], "{peaks:?}");
        }
        let mid = s.samples[off + p / 2].norm();
        assert!(mid < 0.2 * peaks[0]);
    }

    #[test]
    fn transmit_is_linear() {
        let cfg = rect_cfg(8, 8, 3);
        let m = Modem::new(&cfg).unwrap();
        let (a, b) = (frame(cfg.grid(), 1), frame(cfg.grid(), 2));
        let sum = DDFrame::from_vec(cfg.grid(), a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| u + v).collect()).unwrap();
        let (sa, sb, ss) = (m.transmit(&a).unwrap(), m.transmit(&b).unwrap(), m.transmit(&sum).unwrap());
        for i in 0..ss.len() {
            assert!((ss.samples[i] - sa.samples[i] - sb.samples[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_roundtrip_has_common_gain() {
        // sinc tails cut by the rectangular window leave a few percent of
        // leakage on the symbols next to the window edges
        let cfg = rect_cfg(16, 16, 4);
        let m = Modem::new(&cfg).unwrap();
        let x = frame(cfg.grid(), 5);
        let y = m.receive(&m.transmit(&x).unwrap()).unwrap();
        let gain: C64 = y.as_slice().iter().zip(x.as_slice()).map(|(u, v)| u * v.conj()).sum::<C64>() / x.norm_sqr();
        assert!((gain - 1.0).norm() < 5e-3, "{gain}");
        let err: f64 = y.as_slice().iter().zip(x.as_slice()).map(|(u, v)| (u - gain * v).norm_sqr()).sum();
        assert!((err / x.norm_sqr()).sqrt() < 3e-2);
    }

    #[test]
    fn receive_rejects_short_signal() {
        let cfg = rect_cfg(8, 4, 2);
        let m = Modem::new(&cfg).unwrap();
        let s = m.transmit(&frame(cfg.grid(), 3)).unwrap();
        let short = TimeSignal::new(s.samples[..s.len() / 2].to_vec(), s.sample_rate, s.t0);
        assert!(matches!(m.receive(&short), Err(Error::Dimension(_))));
    }

    /// Direct lattice quadrature of the effective-channel integral.
    fn quadrature_h_t(m: &Modem, ch: &DDChannel) -> Mat<C64> {
        let g = m.grid;
        let mn = g.size();
        let b = m.fw_bins.len();
        let dt = g.dt();
        let df = 1.0 / (b as f64 * dt);
        let h: Vec<C64> = (0..b)
            .map(|k| {
                (0..b)
                    .map(|q| cis_cycles((q * k % b) as f64 / b as f64) * m.fw_bins[q])
                    .sum::<C64>()
                    * df
            })
            .collect();
        let hat = |i: i64| h[i.rem_euclid(b as i64) as usize];
        let len = m.tw.len() as i64;
        let tw = |n: i64| if (0..len).contains(&n) { m.tw[n as usize] } else { 0.0 };
        let mut out = Mat::<C64>::zeros(mn, mn);
        for (row, &irx) in m.rx_pos.iter().enumerate() {
            let prx = m.buf_index(irx) as i64;
            for &(itx, d) in &m.tx_pos {
                let ptx = m.buf_index(itx) as i64;
                let mut acc = C64::new(0.0, 0.0);
                for p in &ch.paths {
                    let dp = lattice_index(p.tau, dt).unwrap();
                    for n in 0..len {
                        let t = (m.s0 + n) as f64 * dt;
                        acc += p.gain
                            * cis_cycles(p.nu * (t - p.tau))
                            * hat(n - dp - ptx)
                            * (tw(n - dp) * tw(n))
                            * hat(n - prx).conj();
                    }
                }
                out[(row, d)] += acc * (m.gain * m.gain * dt);
            }
        }
        out
    }

    #[test]
    fn probe_matches_quadrature() {
        let g = DDGrid::new(8, 4, 1.0).unwrap();
        let basis = BasisConfig::from_grid(g, WindowKind::Rect, WindowKind::Rect).unwrap();
        let cfg = ModemConfig::new(basis, 2);
        let m = Modem::new(&cfg).unwrap();
        let ch = DDChannel::new(vec![
            Path { gain: c(0.8, 0.1), tau: 0.125, nu: 0.3 },
            Path { gain: c(-0.2, 0.5), tau: 0.1875, nu: -0.17 },
        ]);
        let probe = m.probe_time_matrix(&ch).unwrap();
        let quad = quadrature_h_t(&m, &ch);
        let mut worst: f64 = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                worst = worst.max((probe[(i, j)] - quad[(i, j)]).norm());
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn identity_channel_is_nearly_diagonal() {
        let cfg = rect_cfg(8, 8, 2);
        let eff = effective_time_matrix(&cfg, &DDChannel::identity()).unwrap();
        let n = 64;
        let (mut diag, mut off) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let e = eff.h_t[(i, j)].norm_sqr();
                if i == j {
                    diag += e;
                } else {
                    off += e;
                    assert!(eff.h_t[(i, j)].norm() < 0.1 * eff.h_t[(j, j)].norm(), "({i},{j})");
                }
            }
        }
        assert!(off < 2e-3 * diag, "{}", off / diag);
    }

    #[test]
    fn corner_block_rows_below_band() {
        let cfg = rect_cfg(8, 4, 3);
        let g = cfg.grid();
        let ch = DDChannel::from_bins(&g, &[(c(1.0, 0.0), 2.0, 1.0), (c(0.3, 0.2), 0.0, -1.0)]);
        let eff = effective_time_matrix(&cfg, &ch).unwrap();
        let n = g.size();
        let peak = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| eff.h_t[(i, j)].norm()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                if j > i + n / 2 && eff.h_t[(i, j)].norm() >= 1e-10 * peak {
                    assert!(i < eff.band_half_width, "({i},{j}) L={}", eff.band_half_width);
                }
            }
        }
    }

    #[test]
    fn dd_matrix_is_the_conjugated_time_matrix() {
        let cfg = rect_cfg(8, 4, 2);
        let g = cfg.grid();
        let ch = DDChannel::from_bins(&g, &[(c(1.0, 0.0), 1.0, 1.0)]);
        let eff = effective_time_matrix(&cfg, &ch).unwrap();
        // explicit Kronecker construction
        let n = g.size();
        let a = Mat::<C64>::from_fn(n, n, |r, q| {
            let (l1, k) = (r % g.m, r / g.m);
            let (l2, nn) = (q % g.m, q / g.m);
            if l1 == l2 {
                cis_cycles(-((k * nn) as f64) / g.n as f64) / (g.n as f64).sqrt()
            } else {
                c(0.0, 0.0)
            }
        });
        let want = &a * &eff.h_t * a.adjoint();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((want[(i, j)] - eff.h_dd[(i, j)]).norm());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn integer_kernel_examples() {
        let g = DDGrid::new(8, 4, 1.0).unwrap();
        let x = frame(g, 9);
        let y = io_integer_closed_form(&x, &DDChannel::identity()).unwrap();
        assert_eq!(y, x);
        let ch = DDChannel::from_bins(&g, &[(c(1.0, 0.0), 1.0, 0.0)]);
        let y = io_integer_closed_form(&x, &ch).unwrap();
        for k in 0..4 {
            assert!((y.get(0, k) - x.get(7, k) * cis_cycles(-(k as f64) / 4.0)).norm() < 1e-12);
            assert!((y.get(3, k) - x.get(2, k)).norm() < 1e-12);
        }
    }

    #[test]
    fn asymptotic_identity_with_ideal_kernel() {
        let cfg = BasisConfig::new(8, 8, 1.0, 2, WindowKind::Rect, WindowKind::Rect).unwrap();
        let x = frame(cfg.grid, 4);
        let y = io_asymptotic(&x, &DDChannel::identity(), &cfg, IoKernel::LatticeDelta).unwrap();
        let a0 = lattice_delta_kernel(&cfg, 0, 0);
        for (u, v) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((u - a0 * v).norm() < 1e-12);
        }
    }
}
