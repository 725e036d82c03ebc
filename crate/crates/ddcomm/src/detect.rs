//! QPSK mapping and the two detectors.
//!
//! Bit labels: symbol `i` (frame storage order, `l + k M`) carries bits
//! `2i` and `2i+1`. Bit 0 selects the sign of the real part and bit 1 the
//! sign of the imaginary part, with `0 -> +`, so `00 -> (1+j)/sqrt2`.
//! LLRs are `log P(b=0)/P(b=1)`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::modem::SymbolTransform;
use crate::zak::{DDFrame, DDGrid};
use crate::{Error, Result, C64};

pub const LLR_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstellationKind {
    Qpsk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub kind: ConstellationKind,
    /// Point for each label, label bits read MSB-first as (b0, b1).
    pub points: Vec<C64>,
}

impl Constellation {
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Constellation {
            kind: ConstellationKind::Qpsk,
            points: vec![C64::new(a, a), C64::new(a, -a), C64::new(-a, a), C64::new(-a, -a)],
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        2
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Gaussian bit LLRs of `y = x + n`, `E|n|^2 = var`.
    pub fn llrs(&self, y: C64, var: f64) -> [f64; 2] {
        let s = 2.0 * std::f64::consts::SQRT_2 / var;
        [clamp_llr(s * y.re), clamp_llr(s * y.im)]
    }

    /// Posterior mean and variance of the symbol given bit LLRs.
    pub fn soft_symbol(&self, llr: [f64; 2]) -> (C64, f64) {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let m = C64::new(a * (llr[0] / 2.0).tanh(), a * (llr[1] / 2.0).tanh());
        (m, (1.0 - m.norm_sqr()).max(0.0))
    }
}

fn clamp_llr(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

pub fn map_bits(bits: &[u8], c: &Constellation, grid: &DDGrid) -> Result<DDFrame> {
    let need = grid.size() * c.bits_per_symbol();
    if bits.len() != need {
        return Err(Error::Dimension(format!("expected {need} bits, got {}", bits.len())));
    }
    let data = bits
        .chunks(2)
        .map(|b| c.points[((b[0] & 1) << 1 | (b[1] & 1)) as usize])
        .collect();
    DDFrame::from_vec(*grid, data)
}

/// Hard bits and LLRs for every symbol of `y` at noise variance `var`.
pub fn demap(y: &[C64], c: &Constellation, var: f64) -> (Vec<u8>, Vec<[f64; 2]>) {
    let llrs: Vec<[f64; 2]> = y.iter().map(|&v| c.llrs(v, var)).collect();
    (hard_bits(&llrs), llrs)
}

/// `0` for non-negative LLR, else `1`.
pub fn hard_bits(llrs: &[[f64; 2]]) -> Vec<u8> {
    llrs.iter().flat_map(|l| l.iter().map(|&v| u8::from(v < 0.0))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    /// LMMSE output (biased towards zero).
    pub estimate: Vec<C64>,
    /// Nearest constellation point per symbol.
    pub hard: Vec<C64>,
    pub llrs: Vec<[f64; 2]>,
    pub iterations: usize,
    /// `||y - H x_soft||^2` of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    /// Set when the system had to be regularised.
    pub regularized: bool,
}

impl DetectorOutput {
    pub fn bits(&self) -> Vec<u8> {
        hard_bits(&self.llrs)
    }
}

fn hard_from_llrs(llrs: &[[f64; 2]], c: &Constellation) -> Vec<C64> {
    llrs.iter()
        .map(|l| c.points[(usize::from(l[0] < 0.0) << 1) | usize::from(l[1] < 0.0)])
        .collect()
}

fn matvec(h: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    let (r, c) = (h.nrows(), h.ncols());
    let mut y = vec![C64::new(0.0, 0.0); r];
    for j in 0..c {
        let xj = x[j];
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        for (yi, &hij) in y.iter_mut().zip(h.col_as_slice(j)) {
            *yi += hij * xj;
        }
    }
    y
}

fn matvec_adj(h: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    (0..h.ncols())
        .map(|j| h.col_as_slice(j).iter().zip(x).map(|(a, b)| a.conj() * b).sum())
        .collect()
}

/// `x_hat = H^H (H H^H + N0 I)^{-1} y`, demapped with the bias-corrected
/// per-symbol variance `(1 - mu_i)/mu_i`, `mu_i = [H^H (H H^H + N0 I)^{-1} H]_ii`.
pub fn lmmse_dd(y: &[C64], h: &Mat<C64>, n0: f64, c: &Constellation) -> Result<DetectorOutput> {
    let n = h.nrows();
    if h.ncols() != n || y.len() != n {
        return Err(Error::Dimension(format!("H is {}x{}, y has {}", h.nrows(), h.ncols(), y.len())));
    }
    if n0 < 0.0 {
        return Err(Error::InvalidParameter("N0 must be >= 0".into()));
    }
    let gram = h * h.adjoint();
    let scale = (0..n).map(|i| gram[(i, i)].re).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut reg = n0;
    let mut regularized = false;
    if reg <= 1e-14 * scale {
        reg = 1e-12 * scale;
        regularized = n0 == 0.0;
    }
    let mut cm = gram;
    for i in 0..n {
        cm[(i, i)] += C64::new(reg, 0.0);
    }
    let lu = cm.partial_piv_lu();
    let mut rhs = Mat::<C64>::zeros(n, n + 1);
    for j in 0..n {
        for i in 0..n {
            rhs[(i, j)] = h[(i, j)];
        }
    }
    for i in 0..n {
        rhs[(i, n)] = y[i];
    }
    let sol = lu.solve(&rhs);
    // G = C^{-1} H, w = C^{-1} y
    let mut est = vec![C64::new(0.0, 0.0); n];
    let mut mu = vec![0.0; n];
    for j in 0..n {
        let hj = h.col_as_slice(j);
        let mut e = C64::new(0.0, 0.0);
        let mut d = C64::new(0.0, 0.0);
        for i in 0..n {
            e += hj[i].conj() * sol[(i, n)];
            d += hj[i].conj() * sol[(i, j)];
        }
        est[j] = e;
        mu[j] = d.re;
    }
    if est.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("LMMSE solve produced non-finite values".into()));
    }
    let llrs: Vec<[f64; 2]> = est
        .iter()
        .zip(&mu)
        .map(|(&e, &m)| {
            let m = m.clamp(1e-12, 1.0 - 1e-12);
            c.llrs(e / m, (1.0 - m) / m)
        })
        .collect();
    let residual = y
        .iter()
        .zip(matvec(h, &est))
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(DetectorOutput {
        hard: hard_from_llrs(&llrs, c),
        estimate: est,
        llrs,
        iterations: 1,
        residual,
        converged: true,
        regularized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeConfig {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        IterativeConfig { max_iters: 10, damping: 0.5, tol: 1e-4 }
    }
}

/// Per-frame factorisation reused across noise levels: `H H^H = U diag(lambda) U^H`
/// and `W = A H^H U` with `A` the symbol transform.
pub struct CrossDomainDetector<'a> {
    h: &'a Mat<C64>,
    tr: &'a dyn SymbolTransform,
    u: Mat<C64>,
    lambda: Vec<f64>,
    /// `|W_ij|^2`, row-major by symbol.
    w2: Vec<f64>,
}

impl<'a> CrossDomainDetector<'a> {
    pub fn new(h: &'a Mat<C64>, tr: &'a dyn SymbolTransform) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::Dimension("H_T must be square".into()));
        }
        let gram = h * h.adjoint();
        let evd = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::InvalidParameter(format!("eigendecomposition failed: {e:?}")))?;
        let u = evd.U().to_owned();
        let s = evd.S().column_vector();
        let lambda: Vec<f64> = (0..n).map(|i| s[i].re.max(0.0)).collect();
        let hu = h.adjoint() * &u;
        let mut w2 = vec![0.0; n * n];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            col.copy_from_slice(hu.col_as_slice(j));
            for (i, v) in tr.to_symbols(&col).into_iter().enumerate() {
                w2[i * n + j] = v.norm_sqr();
            }
        }
        Ok(CrossDomainDetector { h, tr, u, lambda, w2 })
    }

    /// Runs the iterations for one received vector at noise variance `n0`.
    pub fn detect(&self, y: &[C64], n0: f64, c: &Constellation, cfg: &IterativeConfig) -> Result<DetectorOutput> {
        let n = self.h.nrows();
        if y.len() != n {
            return Err(Error::Dimension(format!("y has {} samples, H_T is {n}x{n}", y.len())));
        }
        if cfg.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        let n0 = n0.max(1e-12 * self.lambda.iter().cloned().fold(0.0, f64::max).max(1e-300));
        let mut mean = vec![C64::new(0.0, 0.0); n];
        let mut var = vec![1.0; n];
        let mut best: Option<DetectorOutput> = None;
        let mut converged = false;
        let mut iters = 0;
        for it in 0..cfg.max_iters {
            iters = it + 1;
            let vbar = (var.iter().sum::<f64>() / n as f64).max(1e-12);
            // time-domain LMMSE around the prior mean
            let xm = self.tr.to_time(&mean);
            let hm = matvec(self.h, &xm);
            let r: Vec<C64> = y.iter().zip(&hm).map(|(a, b)| a - b).collect();
            let mut ur = matvec_adj(&self.u, &r);
            for (v, &l) in ur.iter_mut().zip(&self.lambda) {
                *v *= vbar / (vbar * l + n0);
            }
            let back = matvec(&self.u, &ur);
            let dx = matvec_adj(self.h, &back);
            let ds = self.tr.to_symbols(&dx);
            // per-symbol extrinsic
            let d: Vec<f64> = self.lambda.iter().map(|&l| vbar / (vbar * l + n0)).collect();
            let mut llrs = Vec::with_capacity(n);
            let mut est = Vec::with_capacity(n);
            for i in 0..n {
                let row = &self.w2[i * n..(i + 1) * n];
                let mu = row.iter().zip(&d).map(|(w, d)| w * d).sum::<f64>().clamp(1e-12, 1.0 - 1e-12);
                let z = mean[i] + ds[i] / mu;
                let e = vbar * (1.0 - mu) / mu;
                est.push(mean[i] + ds[i]);
                llrs.push(c.llrs(z, e.max(1e-12)));
            }
            let residual = {
                let soft: Vec<C64> = llrs.iter().map(|&l| c.soft_symbol(l).0).collect();
                let hx = matvec(self.h, &self.tr.to_time(&soft));
                y.iter().zip(&hx).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
            };
            let cand = DetectorOutput {
                hard: hard_from_llrs(&llrs, c),
                estimate: est,
                llrs: llrs.clone(),
                iterations: iters,
                residual,
                converged: false,
                regularized: false,
            };
            if best.as_ref().is_none_or(|b| residual <= b.residual) {
                best = Some(cand);
            }
            // posterior update with damping
            let mut change: f64 = 0.0;
            for i in 0..n {
                let (m, v) = c.soft_symbol(llrs[i]);
                let nm = cfg.damping * m + (1.0 - cfg.damping) * mean[i];
                let nv = cfg.damping * v + (1.0 - cfg.damping) * var[i];
                change = change.max((nm - mean[i]).norm());
                mean[i] = nm;
                var[i] = nv;
            }
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
        let mut out = best.expect("at least one iteration");
        out.iterations = iters;
        out.converged = converged;
        Ok(out)
    }
}

/// One-shot form of [`CrossDomainDetector`].
pub fn cross_domain_detect(
    y_t: &[C64],
    h_t: &Mat<C64>,
    n0: f64,
    c: &Constellation,
    tr: &dyn SymbolTransform,
    cfg: &IterativeConfig,
) -> Result<DetectorOutput> {
    CrossDomainDetector::new(h_t, tr)?.detect(y_t, n0, c, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::ZakDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn labels() {
        let q = Constellation::qpsk();
        let g = DDGrid::new(2, 1, 1.0).unwrap();
        let f = map_bits(&[0, 0, 1, 1], &q, &g).unwrap();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(f.as_slice()[0], c(a, a));
        assert_eq!(f.as_slice()[1], c(-a, -a));
        assert!((q.mean_power() - 1.0).abs() < 1e-15);
        assert!(map_bits(&[0, 1, 0], &q, &g).is_err());
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let q = Constellation::qpsk();
        for a in 0..4usize {
            for b in 0..4usize {
                let d = (q.points[a] - q.points[b]).norm();
                if (d - 2f64.sqrt()).abs() < 1e-12 {
                    assert_eq!((a ^ b).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn noiseless_roundtrip() {
        let q = Constellation::qpsk();
        let g = DDGrid::new(8, 4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..64).map(|_| rng.random_range(0..2)).collect();
        let f = map_bits(&bits, &q, &g).unwrap();
        let (hard, llrs) = demap(f.as_slice(), &q, 0.1);
        assert_eq!(hard, bits);
        for (p, l) in f.as_slice().iter().zip(&llrs) {
            let nearest = hard_from_llrs(&[*l], &q)[0];
            assert_eq!(*p, nearest);
        }
    }

    #[test]
    fn lmmse_scalar_wiener() {
        let q = Constellation::qpsk();
        let n = 4;
        let cc = c(0.6, -0.3);
        let h = Mat::<C64>::from_fn(n, n, |i, j| if i == j { cc } else { c(0.0, 0.0) });
        let y: Vec<C64> = (0..n).map(|i| c(i as f64 - 1.0, 0.5)).collect();
        let out = lmmse_dd(&y, &h, 0.2, &q).unwrap();
        for (e, v) in out.estimate.iter().zip(&y) {
            let want = cc.conj() * v / (cc.norm_sqr() + 0.2);
            assert!((e - want).norm() < 1e-12);
        }
        let id = Mat::<C64>::identity(n, n);
        let out = lmmse_dd(&y, &id, 1e-13, &q).unwrap();
        for (e, v) in out.estimate.iter().zip(&y) {
            assert!((e - v).norm() < 1e-9);
        }
    }

    #[test]
    fn lmmse_matches_normal_equations() {
        let q = Constellation::qpsk();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 16;
        let h = Mat::<C64>::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let y: Vec<C64> = (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let n0 = 0.05;
        let out = lmmse_dd(&y, &h, n0, &q).unwrap();
        // (H^H H + N0 I) x = H^H y
        let mut a = h.adjoint() * &h;
        for i in 0..n {
            a[(i, i)] += c(n0, 0.0);
        }
        let hy = matvec_adj(&h, &y);
        let rhs = Mat::<C64>::from_fn(n, 1, |i, _| hy[i]);
        let x = a.partial_piv_lu().solve(&rhs);
        for i in 0..n {
            assert!((x[(i, 0)] - out.estimate[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn iterative_identity_channel() {
        let q = Constellation::qpsk();
        let g = DDGrid::new(4, 4, 1.0).unwrap();
        let tr = ZakDomain(g);
        let bits: Vec<u8> = (0..32).map(|i| ((i * 7) % 3 % 2) as u8).collect();
        let x = map_bits(&bits, &q, &g).unwrap();
        let xt = tr.to_time(x.as_slice());
        let h = Mat::<C64>::identity(16, 16);
        let out = cross_domain_detect(&xt, &h, 1e-6, &q, &tr, &IterativeConfig::default()).unwrap();
        assert_eq!(out.bits(), bits);
        assert_eq!(out.hard, x.as_slice());
        assert!(out.residual < 1e-6);
    }
}
