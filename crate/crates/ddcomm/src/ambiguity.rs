//! Cross-ambiguity functions of sampled signals and of truncated DD basis
//! functions.
//!
//! Convention: `A_{x,y}(tau, nu) = int x(t) y*(t - tau) e^{-j 2pi nu (t - tau)} dt`.

use crate::pulses::{exp_integral, window_ambiguity_pieces, BasisConfig};
use crate::zak::{check_uniform, zak_time_sampled, DDGrid, TimeSignal};
use crate::{cis_cycles, Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub tau_axis: Vec<f64>,
    pub nu_axis: Vec<f64>,
    values: Vec<C64>,
    pub source: String,
}

impl AmbiguitySurface {
    fn new(tau_axis: Vec<f64>, nu_axis: Vec<f64>, values: Vec<C64>, source: String) -> Result<Self> {
        check_uniform(&tau_axis, "tau")?;
        check_uniform(&nu_axis, "nu")?;
        debug_assert_eq!(values.len(), tau_axis.len() * nu_axis.len());
        Ok(AmbiguitySurface { tau_axis, nu_axis, values, source })
    }

    /// Value at delay index `i`, Doppler index `j`.
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

    /// `max |a - b| / max |b|` over two surfaces on the same lattice.
    pub fn rel_linf_error(&self, reference: &AmbiguitySurface) -> f64 {
        let num = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        num / reference.max_abs()
    }
}

/// Sampled cross-ambiguity, `sum_t x(t) y*(t - tau) e^{-j 2pi nu (t - tau)} dt`.
/// Delays must be integer sample shifts; Doppler values are arbitrary.
pub fn cross_ambiguity(x: &TimeSignal, y: &TimeSignal, tau_axis: &[f64], nu_axis: &[f64]) -> Result<AmbiguitySurface> {
    y.check_rate(x.sample_rate)?;
    let dt = x.dt();
    let mut values = Vec::with_capacity(tau_axis.len() * nu_axis.len());
    let mut prod: Vec<C64> = Vec::new();
    for &tau in tau_axis {
        // y(t - tau) at x's sample i sits at y index i + off
        let off = y
            .lattice_offset(x.t0 - tau)
            .ok_or_else(|| Error::Quantization(format!("tau={tau} is off the sample lattice")))?;
        let lo = (-off).max(0) as usize;
        let hi = (y.len() as i64 - off).clamp(0, x.len() as i64) as usize;
        prod.clear();
        if lo < hi {
            prod.extend((lo..hi).map(|i| x.samples[i] * y.samples[(i as i64 + off) as usize].conj()));
        }
        for &nu in nu_axis {
            let mut acc = C64::new(0.0, 0.0);
            if !prod.is_empty() {
                let step = cis_cycles(-nu * dt);
                let start = x.t0 + lo as f64 * dt - tau;
                let mut ph = C64::new(0.0, 0.0);
                for (n, p) in prod.iter().enumerate() {
                    if n % 64 == 0 {
                        ph = cis_cycles(-nu * (start + n as f64 * dt));
                    }
                    acc += p * ph;
                    ph *= step;
                }
            }
            values.push(acc * dt);
        }
    }
    AmbiguitySurface::new(tau_axis.to_vec(), nu_axis.to_vec(), values, "sampled".into())
}

/// Which window model the closed form uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfModel {
    /// Windows as constructed: the time-window overlap shrinks with `|tau|`.
    Truncated,
    /// Periodic-window idealisation: `FW_F(q/T) = FW_F(0)` for all `q < M~`
    /// and the time-window overlap is the full `N~ T` at every delay. Only
    /// defined for Rect and Cosine windows.
    Periodic,
}

/// Closed-form ambiguity of the truncated base pulse (lattice point (0, 0)).
///
/// Writing the pulse train as a Fourier series in `FW_F(q/T)` turns the
/// double sum over window ambiguities into
/// `A(tau, nu) = (1/T) sum_d C_d(tau) A_TW(tau, nu - d/T)`,
/// `C_d(tau) = sum_q FW_F(q/T) FW_F((q-d)/T) e^{j 2pi q tau / T}`,
/// with `A_TW` integrated exactly from the window's piecewise form.
pub fn af_truncated_closed_form(
    cfg: &BasisConfig,
    tau_axis: &[f64],
    nu_axis: &[f64],
    model: AfModel,
) -> Result<AmbiguitySurface> {
    cfg.validate()?;
    let g = &cfg.grid;
    let t = g.t;
    let q_len = g.m_ext;
    let periodic = model == AfModel::Periodic;
    if periodic && !(cfg.time_window.kind.is_periodic() && cfg.freq_window.kind.is_periodic()) {
        return Err(Error::UnsupportedWindow("periodic model needs Rect or Cosine windows".into()));
    }
    let fq: Vec<f64> = if periodic {
        vec![cfg.freq_window.value(0.0); q_len]
    } else {
        cfg.freq_samples()
    };
    let tw0 = cfg.time_window.value(0.0);
    let tspan = cfg.time_window.span;
    let pieces = cfg.time_window.pieces();
    let a_tw = |tau: f64, nu: f64| -> C64 {
        if periodic {
            cis_cycles(nu * tau) * exp_integral(-nu, 0.0, tspan) * (tw0 * tw0)
        } else {
            window_ambiguity_pieces(&pieces, tau, nu)
        }
    };
    let nd = 2 * q_len - 1;
    let mut values = Vec::with_capacity(tau_axis.len() * nu_axis.len());
    let mut cd = vec![C64::new(0.0, 0.0); nd];
    for &tau in tau_axis {
        for (di, c) in cd.iter_mut().enumerate() {
            let d = di as i64 - (q_len as i64 - 1);
            let qa = d.max(0) as usize;
            let qb = (q_len as i64 + d.min(0)) as usize;
            *c = if periodic {
                // geometric sum, kept exact at the lattice zeros
                let x = tau / t;
                let k = qb - qa;
                cis_cycles((qa + qb - 1) as f64 * x / 2.0)
                    * (crate::pulses::dirichlet(k, x) * fq[0] * fq[0])
            } else {
                (qa..qb)
                    .map(|q| cis_cycles(q as f64 * tau / t) * (fq[q] * fq[(q as i64 - d) as usize]))
                    .sum()
            };
        }
        for &nu in nu_axis {
            let mut acc = C64::new(0.0, 0.0);
            for (di, c) in cd.iter().enumerate() {
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                let d = di as f64 - (q_len as f64 - 1.0);
                acc += c * a_tw(tau, nu - d / t);
            }
            values.push(acc / t);
        }
    }
    let source = format!(
        "closed-form {:?} tw={} fw={}",
        model,
        cfg.time_window.kind.label(),
        cfg.freq_window.kind.label()
    );
    AmbiguitySurface::new(tau_axis.to_vec(), nu_axis.to_vec(), values, source)
}

/// Doppler harmonics `m` used by [`zak_af_identity_check`]: `|m| <= m_max`
/// restricted to one alias period of the sample lattice.
fn harmonic_range(m_max: usize, period: usize) -> std::ops::RangeInclusive<i64> {
    let lo = -(period as i64 / 2);
    let hi = period as i64 - period as i64 / 2 - 1;
    (-(m_max as i64)).max(lo)..=(m_max as i64).min(hi)
}

/// Largest `|Z_x Z_y^* - sum_n sum_m A_{x,y}(nT, m/T) e^{-j 2pi n nu T} e^{j 2pi m tau/T}|`
/// over the sampled fundamental rectangle.
///
/// On a lattice with `P = M*osr` samples per period, harmonic `m` aliases
/// with `m + P`; the sum over `m` is therefore kept inside one alias period.
pub fn zak_af_identity_check(x: &TimeSignal, y: &TimeSignal, grid: &DDGrid, n_max: usize, m_max: usize) -> Result<f64> {
    let t = grid.t;
    let reach = [x.t0, x.t0 + x.duration(), y.t0, y.t0 + y.duration()]
        .iter()
        .map(|v| (v.abs() / t).ceil() as usize)
        .max()
        .unwrap_or(0);
    let replicas = reach + 1;
    let zx = zak_time_sampled(x, grid, replicas)?;
    let zy = zak_time_sampled(y, grid, replicas)?;
    let ns: Vec<f64> = (-(n_max as i64)..=n_max as i64).map(|n| n as f64 * t).collect();
    let ms: Vec<i64> = harmonic_range(m_max, grid.samples_per_period()).collect();
    let mus: Vec<f64> = ms.iter().map(|&m| m as f64 / t).collect();
    let a = cross_ambiguity(x, y, &ns, &mus)?;
    let (ni, nj) = zx.shape();
    let mut worst: f64 = 0.0;
    for i in 0..ni {
        let tau = zx.tau_axis[i];
        // inner sum over m depends only on tau
        let inner: Vec<C64> = (0..ns.len())
            .map(|a_n| {
                ms.iter()
                    .enumerate()
                    .map(|(a_m, &m)| a.get(a_n, a_m) * cis_cycles(m as f64 * tau / t))
                    .sum()
            })
            .collect();
        for j in 0..nj {
            let nu = zx.nu_axis[j];
            let lhs = zx.get(i, j) * zy.get(i, j).conj();
            let rhs: C64 = inner
                .iter()
                .enumerate()
                .map(|(a_n, v)| v * cis_cycles(-(a_n as f64 - n_max as f64) * nu * t))
                .sum();
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityEntry {
    pub l1: i64,
    pub k1: i64,
    /// `|A|` normalised to the origin.
    pub magnitude: f64,
    /// `|l1| = M~` or `|k1| = N~`: a quasi-periodic echo of the origin.
    pub echo: bool,
    pub orthogonal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub m_ext: usize,
    pub n_ext: usize,
    pub threshold: f64,
    pub entries: Vec<OrthogonalityEntry>,
}

impl OrthogonalityReport {
    /// Every point other than the origin and the echoes is below threshold.
    pub fn interior_orthogonal(&self) -> bool {
        self.entries
            .iter()
            .filter(|e| !e.echo && (e.l1, e.k1) != (0, 0))
            .all(|e| e.orthogonal)
    }

    pub fn worst_interior(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.echo && (e.l1, e.k1) != (0, 0))
            .map(|e| e.magnitude)
            .fold(0.0, f64::max)
    }
}

/// `|A|` of the truncated base pulse at `(l1 T/M~, k1/(N~ T))` for
/// `l1 in [-M~, M~]`, `k1 in [-N~, N~]`.
pub fn dd_orthogonality_report(cfg: &BasisConfig, threshold: f64) -> Result<OrthogonalityReport> {
    let g = &cfg.grid;
    let (mt, nt) = (g.m_ext as i64, g.n_ext as i64);
    let taus: Vec<f64> = (-mt..=mt).map(|l| l as f64 * g.t / mt as f64).collect();
    let nus: Vec<f64> = (-nt..=nt).map(|k| k as f64 / (nt as f64 * g.t)).collect();
    let s = af_truncated_closed_form(cfg, &taus, &nus, AfModel::Truncated)?;
    let peak = s.get(mt as usize, nt as usize).norm();
    let mut entries = Vec::with_capacity(taus.len() * nus.len());
    for (i, l1) in (-mt..=mt).enumerate() {
        for (j, k1) in (-nt..=nt).enumerate() {
            let magnitude = s.get(i, j).norm() / peak;
            entries.push(OrthogonalityEntry {
                l1,
                k1,
                magnitude,
                echo: l1.abs() == mt || k1.abs() == nt,
                orthogonal: magnitude <= threshold,
            });
        }
    }
    Ok(OrthogonalityReport { m_ext: g.m_ext, n_ext: g.n_ext, threshold, entries })
}

/// Base-pulse ambiguity values at lattice points `(l1 T/M~, k1/(N~ T))` under
/// the periodic-window model.
pub fn af_lattice_closed_form(cfg: &BasisConfig, l1: i64, k1: i64) -> Result<C64> {
    let g = &cfg.grid;
    let tau = l1 as f64 * g.t / g.m_ext as f64;
    let nu = k1 as f64 / (g.n_ext as f64 * g.t);
    let s = af_truncated_closed_form(cfg, &[tau], &[nu], AfModel::Periodic)?;
    Ok(s.get(0, 0))
}

/// Theorem-style lattice kernel: the origin value on the `(M~, N~)`-periodic
/// lattice of origin copies and zero elsewhere. Used as the ideal ambiguity
/// when reducing the symbol-wise IO relation for Rect windows.
pub fn lattice_delta_kernel(cfg: &BasisConfig, l1: i64, k1: i64) -> C64 {
    let g = &cfg.grid;
    if l1.rem_euclid(g.m_ext as i64) == 0 && k1.rem_euclid(g.n_ext as i64) == 0 {
        let f0 = cfg.freq_window.value(0.0);
        let t0 = cfg.time_window.value(0.0);
        C64::new((g.m_ext * g.n_ext) as f64 * f0 * f0 * t0 * t0, 0.0)
    } else {
        C64::new(0.0, 0.0)
    }
}
