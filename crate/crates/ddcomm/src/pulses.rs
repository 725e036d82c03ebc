//! Windows and truncated delay-Doppler basis functions.
//!
//! A window lives on `[0, span)`. Each kind is stored as a short list of
//! pieces, each a sum of complex exponentials, so that products and shifted
//! overlaps can be integrated exactly (see [`window_ambiguity`]).

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::zak::{DDGrid, TimeSignal};
use crate::{cis_cycles, lattice_index, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowKind {
    Rect,
    /// Raised-cosine-shaped magnitude with roll-off `beta` in `[0, 1)`.
    Rrc(f64),
    /// `cos(x)` with `x` measured from the start of the span.
    Cosine,
}

impl WindowKind {
    pub fn beta(&self) -> f64 {
        match *self {
            WindowKind::Rrc(b) => b,
            _ => 0.0,
        }
    }

    /// Rect and Cosine are treated as periodic windows by the Dirichlet closed form.
    pub fn is_periodic(&self) -> bool {
        !matches!(self, WindowKind::Rrc(_))
    }

    pub fn label(&self) -> String {
        match *self {
            WindowKind::Rect => "rect".into(),
            WindowKind::Rrc(b) => format!("rrc({b})"),
            WindowKind::Cosine => "cos".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowDomain {
    Time,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub domain: WindowDomain,
    /// Support length: seconds for time windows, Hz for frequency windows.
    pub span: f64,
    /// Width of the flat part plus half of each roll-off. Equal to `span`
    /// except for RRC, whose profile is centred in the span.
    pub nominal: f64,
    pub power_normalized: bool,
}

/// One segment `[a, b)` of a window: `sum_i c_i e^{j 2pi f_i x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub terms: Vec<(C64, f64)>,
}

impl WindowSpec {
    pub fn rect(domain: WindowDomain, span: f64) -> Result<Self> {
        Self::build(WindowKind::Rect, domain, span, span)
    }

    pub fn cosine(domain: WindowDomain, span: f64) -> Result<Self> {
        Self::build(WindowKind::Cosine, domain, span, span)
    }

    /// RRC window of nominal width `nominal` centred in `span >= (1+beta)*nominal`.
    pub fn rrc(domain: WindowDomain, beta: f64, nominal: f64, span: f64) -> Result<Self> {
        Self::build(WindowKind::Rrc(beta), domain, nominal, span)
    }

    /// Window of `kind` with nominal width `nominal`; RRC spans `(1+beta)*nominal`.
    pub fn of_kind(kind: WindowKind, domain: WindowDomain, nominal: f64) -> Result<Self> {
        let span = nominal * (1.0 + kind.beta());
        Self::build(kind, domain, nominal, span)
    }

    fn build(kind: WindowKind, domain: WindowDomain, nominal: f64, span: f64) -> Result<Self> {
        let w = WindowSpec { kind, domain, span, nominal, power_normalized: true };
        w.validate()?;
        Ok(w)
    }

    pub fn unnormalized(mut self) -> Self {
        self.power_normalized = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.span > 0.0 && self.span.is_finite()) || !(self.nominal > 0.0) {
            return Err(Error::InvalidParameter(format!("window span {} must be positive", self.span)));
        }
        if let WindowKind::Rrc(b) = self.kind {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("roll-off {b} outside [0, 1)")));
            }
            if self.span < (1.0 + b) * self.nominal * (1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "span {} cannot hold RRC support {}",
                    self.span,
                    (1.0 + b) * self.nominal
                )));
            }
        }
        Ok(())
    }

    /// Energy of the unnormalized profile, `int |w|^2`.
    fn raw_energy(&self) -> f64 {
        match self.kind {
            WindowKind::Rect => self.span,
            WindowKind::Rrc(_) => self.nominal,
            WindowKind::Cosine => self.span / 2.0 + (2.0 * self.span).sin() / 4.0,
        }
    }

    pub fn amplitude(&self) -> f64 {
        if self.power_normalized {
            1.0 / self.raw_energy().sqrt()
        } else {
            1.0
        }
    }

    /// Value at `x` (measured from the span start); zero outside `[0, span)`.
    pub fn value(&self, x: f64) -> f64 {
        if !(0.0..self.span).contains(&x) {
            return 0.0;
        }
        let a = self.amplitude();
        match self.kind {
            WindowKind::Rect => a,
            WindowKind::Cosine => a * x.cos(),
            WindowKind::Rrc(beta) => {
                let d = (x - self.span / 2.0).abs();
                let lo = (1.0 - beta) * self.nominal / 2.0;
                let hi = (1.0 + beta) * self.nominal / 2.0;
                if d <= lo {
                    a
                } else if d >= hi {
                    0.0
                } else {
                    a * (FRAC_PI_2 * (d - lo) / (beta * self.nominal)).cos()
                }
            }
        }
    }

    /// Exact piecewise-exponential representation of [`value`](Self::value).
    pub fn pieces(&self) -> Vec<Piece> {
        let a = self.amplitude();
        let flat = |lo: f64, hi: f64| Piece { a: lo, b: hi, terms: vec![(C64::new(a, 0.0), 0.0)] };
        match self.kind {
            WindowKind::Rect => vec![flat(0.0, self.span)],
            WindowKind::Cosine => {
                let f = 1.0 / TAU;
                vec![Piece {
                    a: 0.0,
                    b: self.span,
                    terms: vec![(C64::new(a / 2.0, 0.0), f), (C64::new(a / 2.0, 0.0), -f)],
                }]
            }
            WindowKind::Rrc(beta) => {
                let c = self.span / 2.0;
                let lo = (1.0 - beta) * self.nominal / 2.0;
                let hi = (1.0 + beta) * self.nominal / 2.0;
                if beta == 0.0 {
                    return vec![flat(c - lo, c + lo)];
                }
                let w = FRAC_PI_2 / (beta * self.nominal);
                let f = w / TAU;
                // left: cos(w(c - lo - x)); right: cos(w(x - c - lo))
                let t0 = w * (c - lo);
                let t1 = -w * (c + lo);
                vec![
                    Piece {
                        a: c - hi,
                        b: c - lo,
                        terms: vec![(C64::from_polar(a / 2.0, t0), -f), (C64::from_polar(a / 2.0, -t0), f)],
                    },
                    flat(c - lo, c + lo),
                    Piece {
                        a: c + lo,
                        b: c + hi,
                        terms: vec![(C64::from_polar(a / 2.0, t1), f), (C64::from_polar(a / 2.0, -t1), -f)],
                    },
                ]
            }
        }
    }
}

/// Window samples at `offset + i*step` for every lattice point before the span end.
pub fn window_samples(w: &WindowSpec, step: f64, offset: f64) -> Result<Vec<C64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step {step} must be positive")));
    }
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let x = offset + i as f64 * step;
        if x >= w.span {
            break;
        }
        out.push(C64::new(w.value(x), 0.0));
        i += 1;
    }
    Ok(out)
}

/// `int_a^b e^{j 2pi g x} dx`, stable for small `g`.
pub(crate) fn exp_integral(g: f64, a: f64, b: f64) -> C64 {
    let len = b - a;
    if len <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let u = g * len;
    let ur = u.round();
    if ur != 0.0 && (u - ur).abs() < 1e-12 {
        return C64::new(0.0, 0.0);
    }
    let sinc = if u.abs() < 1e-8 { 1.0 - (PI * u).powi(2) / 6.0 } else { (PI * u).sin() / (PI * u) };
    cis_cycles(g * (a + b) / 2.0) * (len * sinc)
}

/// Exact window self-ambiguity
/// `A_w(tau, nu) = int w(x) w*(x - tau) e^{-j 2pi nu (x - tau)} dx`.
pub fn window_ambiguity(w: &WindowSpec, tau: f64, nu: f64) -> C64 {
    window_ambiguity_pieces(&w.pieces(), tau, nu)
}

pub(crate) fn window_ambiguity_pieces(pieces: &[Piece], tau: f64, nu: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for p in pieces {
        for q in pieces {
            let a = p.a.max(q.a + tau);
            let b = p.b.min(q.b + tau);
            if b <= a {
                continue;
            }
            for &(c1, f1) in &p.terms {
                for &(c2, f2) in &q.terms {
                    // w*(x - tau) term: conj(c2) e^{j2pi f2 tau} e^{-j2pi f2 x}
                    let coef = c1 * c2.conj() * cis_cycles(f2 * tau + nu * tau);
                    acc += coef * exp_integral(f1 - f2 - nu, a, b);
                }
            }
        }
    }
    acc
}

/// Pulse atom placed on the DD lattice. Only the delta atom is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AtomSpec {
    #[default]
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig {
    pub grid: DDGrid,
    pub atom: AtomSpec,
    /// Spans `N_ext * T`, nominal `N * T`.
    pub time_window: WindowSpec,
    /// Spans `M_ext / T`, nominal `M / T`.
    pub freq_window: WindowSpec,
}

/// Extended size for a window kind: `ceil(n (1 + beta))` for RRC.
pub fn extended_size(n: usize, kind: WindowKind) -> usize {
    match kind {
        WindowKind::Rrc(b) => ((n as f64) * (1.0 + b) - 1e-9).ceil() as usize,
        _ => n,
    }
}

impl BasisConfig {
    pub fn new(m: usize, n: usize, t: f64, osr: usize, tw: WindowKind, fw: WindowKind) -> Result<Self> {
        let grid = DDGrid::new(m, n, t)?.with_osr(osr)?;
        Self::from_grid(grid, tw, fw)
    }

    /// Builds the windows and sets `M_ext`, `N_ext` on the grid from the kinds.
    pub fn from_grid(grid: DDGrid, tw: WindowKind, fw: WindowKind) -> Result<Self> {
        let m_ext = extended_size(grid.m, fw);
        let n_ext = extended_size(grid.n, tw);
        let grid = grid.with_ext(m_ext, n_ext)?;
        let t = grid.t;
        let time_window = match tw {
            WindowKind::Rrc(b) => WindowSpec::rrc(WindowDomain::Time, b, grid.n as f64 * t, n_ext as f64 * t)?,
            WindowKind::Rect => WindowSpec::rect(WindowDomain::Time, n_ext as f64 * t)?,
            WindowKind::Cosine => WindowSpec::cosine(WindowDomain::Time, n_ext as f64 * t)?,
        };
        let freq_window = match fw {
            WindowKind::Rrc(b) => WindowSpec::rrc(WindowDomain::Frequency, b, grid.m as f64 / t, m_ext as f64 / t)?,
            WindowKind::Rect => WindowSpec::rect(WindowDomain::Frequency, m_ext as f64 / t)?,
            WindowKind::Cosine => WindowSpec::cosine(WindowDomain::Frequency, m_ext as f64 / t)?,
        };
        let cfg = BasisConfig { grid, atom: AtomSpec::Delta, time_window, freq_window };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.time_window.validate()?;
        self.freq_window.validate()?;
        let g = &self.grid;
        let ts = g.n_ext as f64 * g.t;
        let fs = g.m_ext as f64 / g.t;
        if (self.time_window.span - ts).abs() > 1e-9 * ts || (self.freq_window.span - fs).abs() > 1e-9 * fs {
            return Err(Error::InvalidParameter("window spans must equal N_ext*T and M_ext/T".into()));
        }
        if self.time_window.domain != WindowDomain::Time || self.freq_window.domain != WindowDomain::Frequency {
            return Err(Error::InvalidParameter("window domains swapped".into()));
        }
        if g.m_ext > g.samples_per_period() {
            return Err(Error::InvalidParameter(format!(
                "M_ext={} exceeds M*osr={}; raise osr",
                g.m_ext,
                g.samples_per_period()
            )));
        }
        Ok(())
    }

    /// `FW_F(q/T)` for `q = 0..M_ext`.
    pub fn freq_samples(&self) -> Vec<f64> {
        (0..self.grid.m_ext)
            .map(|q| self.freq_window.value(q as f64 / self.grid.t))
            .collect()
    }
}

/// Pulse train `P(s) = (1/T) sum_q FW_F(q/T) e^{j 2pi q s/T}` on one period of
/// the sample lattice.
fn pulse_train_period(cfg: &BasisConfig) -> Vec<C64> {
    let g = &cfg.grid;
    let p = g.samples_per_period();
    let fq = cfg.freq_samples();
    (0..p)
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for (q, &f) in fq.iter().enumerate() {
                if f != 0.0 {
                    let cyc = ((q * i) % p) as f64 / p as f64;
                    acc += C64::from_polar(f, TAU * cyc);
                }
            }
            acc / g.t
        })
        .collect()
}

/// Sampled truncated basis function for lattice point `(l, k)`:
/// `sqrt(T) e^{j 2pi nu_k (t - tau_l)} P(t - tau_l) TW(t - tau_l)` on
/// `[tau_l, tau_l + N_ext T)`.
pub fn pulsone_time(l: usize, k: usize, cfg: &BasisConfig) -> Result<TimeSignal> {
    let g = &cfg.grid;
    if l >= g.m || k >= g.n {
        return Err(Error::IndexOutOfRange(format!("(l, k) = ({l}, {k}) outside {}x{}", g.m, g.n)));
    }
    let p = g.samples_per_period();
    let dt = g.dt();
    let len = (cfg.time_window.span / dt).round() as usize;
    let train = pulse_train_period(cfg);
    let period = g.n * p; // nu_k * s = k * i / (N * M * osr)
    let st = g.t.sqrt();
    let samples = (0..len)
        .map(|i| {
            let tone = C64::from_polar(1.0, TAU * ((k * i) % period) as f64 / period as f64);
            tone * train[i % p] * cfg.time_window.value(i as f64 * dt) * st
        })
        .collect();
    Ok(TimeSignal::new(samples, g.sample_rate(), g.tau(l as i64)))
}

/// `sin(pi K x) / sin(pi x)` with its limits at the integers.
pub fn dirichlet(k: usize, x: f64) -> f64 {
    let kf = k as f64;
    let xr = x - 2.0 * (x / 2.0).round();
    let s = (PI * xr).sin();
    if s.abs() < 1e-9 {
        kf * (PI * kf * xr).cos() / (PI * xr).cos()
    } else if ((kf * xr) - (kf * xr).round()).abs() < 1e-12 {
        0.0
    } else {
        (PI * kf * xr).sin() / s
    }
}

/// Closed-form truncated DD basis function for periodic windows:
/// `FW_F(0) TW_T(tau) e^{j pi (M~-1) tau/T} e^{-j pi (N~-1) nu T} D_M~(tau/T) D_N~(nu T)`.
pub fn truncated_basis_dd_closed_form(tau: f64, nu: f64, cfg: &BasisConfig) -> Result<C64> {
    for w in [&cfg.time_window, &cfg.freq_window] {
        if !w.kind.is_periodic() {
            return Err(Error::UnsupportedWindow(format!(
                "{} is not a periodic window",
                w.kind.label()
            )));
        }
    }
    let g = &cfg.grid;
    let (mt, nt) = (g.m_ext, g.n_ext);
    let x = tau / g.t;
    let y = nu * g.t;
    let amp = cfg.freq_window.value(0.0) * cfg.time_window.value(tau);
    let phase = cis_cycles((mt as f64 - 1.0) * x / 2.0 - (nt as f64 - 1.0) * y / 2.0);
    Ok(phase * (amp * dirichlet(mt, x) * dirichlet(nt, y)))
}

/// `e^{j 2pi nu0 (t - tau0)} base(t - tau0)` with `tau0` on the sample lattice.
pub fn tf_consistent_shift(base: &TimeSignal, tau0: f64, nu0: f64) -> Result<TimeSignal> {
    let dt = base.dt();
    let d = lattice_index(tau0, dt)
        .ok_or_else(|| Error::Quantization(format!("tau0={tau0} is not a multiple of {dt}")))?;
    let samples = base
        .samples
        .iter()
        .enumerate()
        .map(|(i, v)| v * cis_cycles(nu0 * (base.t0 + i as f64 * dt)))
        .collect();
    Ok(TimeSignal::new(samples, base.sample_rate, base.t0 + d as f64 * dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_cfg(m: usize, n: usize) -> BasisConfig {
        BasisConfig::new(m, n, 1.0, 2, WindowKind::Rect, WindowKind::Rect).unwrap()
    }

    #[test]
    fn rect_window_level() {
        let w = WindowSpec::rect(WindowDomain::Time, 8.0).unwrap();
        assert!((w.value(3.3) - 1.0 / 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(w.value(8.0), 0.0);
        assert_eq!(w.value(-0.1), 0.0);
    }

    #[test]
    fn rrc_half_power_at_nominal_edge() {
        let w = WindowSpec::of_kind(WindowKind::Rrc(0.3), WindowDomain::Frequency, 16.0).unwrap();
        let plateau = w.value(w.span / 2.0);
        let edge = w.value(w.span / 2.0 + 8.0);
        assert!((edge / plateau - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pieces_match_values() {
        for kind in [WindowKind::Rect, WindowKind::Rrc(0.3), WindowKind::Rrc(0.0), WindowKind::Cosine] {
            let w = WindowSpec::rrc(WindowDomain::Time, kind.beta(), 5.0, 7.0)
                .map(|mut w| {
                    w.kind = kind;
                    w
                })
                .unwrap();
            let pieces = w.pieces();
            for i in 0..700 {
                let x = i as f64 * 0.01 + 0.005;
                let mut v = C64::new(0.0, 0.0);
                for p in &pieces {
                    if x >= p.a && x < p.b {
                        for &(c, f) in &p.terms {
                            v += c * cis_cycles(f * x);
                        }
                    }
                }
                assert!((v.re - w.value(x)).abs() < 1e-12 && v.im.abs() < 1e-12, "{kind:?} at {x}");
            }
        }
    }

    #[test]
    fn window_ambiguity_matches_quadrature() {
        let w = WindowSpec::rrc(WindowDomain::Time, 0.3, 4.0, 5.5).unwrap();
        for &(tau, nu) in &[(0.0, 0.0), (0.7, 0.13), (-1.3, -0.4), (2.2, 1.7)] {
            let h = 1e-4;
            let mut q = C64::new(0.0, 0.0);
            let mut x = -8.0 + h / 2.0;
            while x < 8.0 {
                q += cis_cycles(-nu * (x - tau)) * (w.value(x) * w.value(x - tau) * h);
                x += h;
            }
            let a = window_ambiguity(&w, tau, nu);
            assert!((a - q).norm() < 1e-6, "{tau} {nu}: {a} vs {q}");
        }
    }

    #[test]
    fn pulsone_peaks_on_train() {
        let cfg = rect_cfg(8, 4);
        let x = pulsone_time(0, 0, &cfg).unwrap();
        let p = cfg.grid.samples_per_period();
        let peak = x.samples[0].norm();
        for n in 0..cfg.grid.n_ext {
            assert!((x.samples[n * p].norm() - peak).abs() < 1e-12);
        }
        let off_peak = x.samples.iter().enumerate().filter(|(i, _)| i % p != 0).map(|(_, v)| v.norm()).fold(0.0, f64::max);
        assert!(off_peak < peak);
        assert!((x.energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pulsone_delay_step() {
        let cfg = rect_cfg(8, 4);
        let a = pulsone_time(0, 0, &cfg).unwrap();
        let b = pulsone_time(1, 0, &cfg).unwrap();
        assert!((b.t0 - a.t0 - cfg.grid.t / 8.0).abs() < 1e-15);
        for (u, v) in a.samples.iter().zip(&b.samples) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn pulsone_rejects_bad_index() {
        let cfg = rect_cfg(8, 4);
        assert!(matches!(pulsone_time(8, 0, &cfg), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn closed_form_special_points() {
        let cfg = rect_cfg(16, 8);
        let g = cfg.grid;
        let v = truncated_basis_dd_closed_form(0.0, 0.0, &cfg).unwrap();
        let want = cfg.freq_window.value(0.0) * cfg.time_window.value(0.0) * 16.0 * 8.0;
        assert!((v - C64::new(want, 0.0)).norm() < 1e-12);
        let z = truncated_basis_dd_closed_form(0.0, 1.0 / (g.n_ext as f64 * g.t), &cfg).unwrap();
        assert!(z.norm() < 1e-12);
        let rrc = BasisConfig::new(16, 8, 1.0, 2, WindowKind::Rrc(0.1), WindowKind::Rrc(0.3)).unwrap();
        assert!(matches!(truncated_basis_dd_closed_form(0.0, 0.0, &rrc), Err(Error::UnsupportedWindow(_))));
    }

    #[test]
    fn dirichlet_limits() {
        assert_eq!(dirichlet(5, 0.0), 5.0);
        assert!((dirichlet(4, 1.0) + 4.0).abs() < 1e-12);
        assert!((dirichlet(5, 1.0) - 5.0).abs() < 1e-12);
        assert!((dirichlet(4, 1.0 + 1e-12) + 4.0).abs() < 1e-9);
    }

    #[test]
    fn shift_rejects_off_lattice_delay() {
        let cfg = rect_cfg(4, 4);
        let x = pulsone_time(0, 0, &cfg).unwrap();
        assert!(matches!(tf_consistent_shift(&x, 0.3 * x.dt(), 0.0), Err(Error::Quantization(_))));
        let y = tf_consistent_shift(&x, 3.0 * x.dt(), 0.0).unwrap();
        assert_eq!(y.samples, x.samples);
        assert!((y.t0 - 3.0 * x.dt()).abs() < 1e-15);
    }

    #[test]
    fn extended_sizes() {
        assert_eq!(extended_size(16, WindowKind::Rrc(0.3)), 21);
        assert_eq!(extended_size(16, WindowKind::Rrc(0.1)), 18);
        assert_eq!(extended_size(10, WindowKind::Rrc(0.3)), 13);
        assert_eq!(extended_size(16, WindowKind::Rect), 16);
    }
}
