//! Link-level metrics: bit error rate, BICM pragmatic capacity and Welch PSD.

use rustfft::FftPlanner;

use crate::zak::TimeSignal;
use crate::{Error, Result, C64};

/// A curve with per-point spread and trial counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSeries {
    pub name: String,
    pub x_label: String,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_trials: Vec<usize>,
}

impl MetricSeries {
    pub fn new(name: &str, x_label: &str) -> Self {
        MetricSeries { name: name.into(), x_label: x_label.into(), ..Default::default() }
    }

    pub fn push(&mut self, x: f64, value: f64, stderr: f64, n_trials: usize) {
        self.x.push(x);
        self.values.push(value);
        self.stderr.push(stderr);
        self.n_trials.push(n_trials);
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self, min_trials: usize) -> Result<()> {
        if self.values.iter().chain(&self.x).chain(&self.stderr).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{}: non-finite value", self.name)));
        }
        if self.n_trials.iter().any(|&n| n < min_trials) {
            return Err(Error::InsufficientSamples(format!("{}: fewer than {min_trials} trials", self.name)));
        }
        Ok(())
    }

    /// `x,value,stderr,n_trials` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},value,stderr,n_trials\n", self.x_label);
        for i in 0..self.len() {
            s.push_str(&format!("{:.10e},{:.10e},{:.10e},{}\n", self.x[i], self.values[i], self.stderr[i], self.n_trials[i]));
        }
        s
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(Error::Dimension(format!("bit streams differ in length: {} vs {}", tx.len(), rx.len())));
    }
    if tx.is_empty() {
        return Ok(0.0);
    }
    Ok(bit_errors(tx, rx) as f64 / tx.len() as f64)
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> usize {
    tx.iter().zip(rx).filter(|(a, b)| (*a & 1) != (*b & 1)).count()
}

/// `log2(1 + e^{-x})` without overflow.
pub fn log2_1p_exp_neg(x: f64) -> f64 {
    let v = if x > 0.0 { (-x).exp().ln_1p() } else { -x + x.exp().ln_1p() };
    v / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    /// Bits per channel use, clipped to `[0, bits_per_symbol]`.
    pub bits: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Fewer than `1e4` LLRs per bit level.
    pub wide_confidence: bool,
}

/// `sum_levels (1 - E[log2(1 + e^{-(1-2b) L})])` with `L = log P(0)/P(1)`.
/// `llrs[i * bps + level]` belongs to `bits[i * bps + level]`.
pub fn pragmatic_capacity(llrs: &[f64], bits: &[u8], bits_per_symbol: usize) -> Result<CapacityEstimate> {
    if llrs.len() != bits.len() {
        return Err(Error::Dimension(format!("{} LLRs for {} bits", llrs.len(), bits.len())));
    }
    if bits_per_symbol == 0 || !bits.len().is_multiple_of(bits_per_symbol) {
        return Err(Error::Dimension("bit count is not a multiple of bits per symbol".into()));
    }
    let per_level = bits.len() / bits_per_symbol;
    if per_level == 0 {
        return Err(Error::InsufficientSamples("no LLRs".into()));
    }
    let mut total = 0.0;
    let mut var_sum = 0.0;
    for level in 0..bits_per_symbol {
        let mut s = KahanSum::default();
        let mut s2 = KahanSum::default();
        for i in 0..per_level {
            let k = i * bits_per_symbol + level;
            let sign = if bits[k] & 1 == 0 { 1.0 } else { -1.0 };
            let v = log2_1p_exp_neg(sign * llrs[k]);
            s.add(v);
            s2.add(v * v);
        }
        let mean = s.value() / per_level as f64;
        let var = (s2.value() / per_level as f64 - mean * mean).max(0.0);
        total += 1.0 - mean;
        var_sum += var / per_level as f64;
    }
    Ok(CapacityEstimate {
        bits: total.clamp(0.0, bits_per_symbol as f64),
        stderr: var_sum.sqrt(),
        samples: per_level,
        wide_confidence: per_level < 10_000,
    })
}

/// Welch PSD (Hann segments) as a density: `sum(values) * df` is the mean
/// power. Frequencies run from `-fs/2` to `fs/2` (FFT-shifted) and are
/// offset by nothing; the signal is complex baseband.
pub fn psd(s: &TimeSignal, nfft: usize, overlap: usize) -> Result<MetricSeries> {
    if nfft == 0 || overlap >= nfft {
        return Err(Error::InvalidParameter(format!("nfft={nfft}, overlap={overlap}")));
    }
    if s.len() < nfft {
        return Err(Error::InsufficientSamples(format!("signal has {} samples, nfft is {nfft}", s.len())));
    }
    let fs = s.sample_rate;
    let win: Vec<f64> = (0..nfft)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / nfft as f64).cos())
        .collect();
    let wpow: f64 = win.iter().map(|w| w * w).sum();
    let plan = FftPlanner::new().plan_fft_forward(nfft);
    let hop = nfft - overlap;
    let mut acc = vec![0.0; nfft];
    let mut segs = 0;
    let mut buf = vec![C64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + nfft <= s.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = s.samples[start + i] * win[i];
        }
        plan.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segs += 1;
        start += hop;
    }
    let scale = 1.0 / (segs as f64 * fs * wpow);
    let df = fs / nfft as f64;
    let mut out = MetricSeries::new("psd", "frequency_hz");
    let half = nfft / 2;
    for i in 0..nfft {
        let k = (i + nfft - half) % nfft;
        let f = (i as f64 - half as f64) * df;
        out.push(f, acc[k] * scale, 0.0, segs);
    }
    Ok(out)
}

/// `10 log10` of a linear PSD relative to its mean over `band`.
pub fn psd_db_relative(p: &MetricSeries, band: (f64, f64)) -> Result<MetricSeries> {
    let inband: Vec<f64> = p
        .x
        .iter()
        .zip(&p.values)
        .filter(|(f, _)| (band.0..=band.1).contains(*f))
        .map(|(_, v)| *v)
        .collect();
    if inband.is_empty() {
        return Err(Error::InvalidParameter("band contains no PSD bins".into()));
    }
    let refp = inband.iter().sum::<f64>() / inband.len() as f64;
    let mut out = p.clone();
    out.name = format!("{}_db", p.name);
    for v in out.values.iter_mut() {
        *v = 10.0 * (*v / refp).max(1e-300).log10();
    }
    Ok(out)
}

/// Fraction of PSD power at `|f - center| > edge`.
pub fn oob_fraction(p: &MetricSeries, center: f64, edge: f64) -> f64 {
    let total: f64 = p.values.iter().sum();
    let out: f64 = p
        .x
        .iter()
        .zip(&p.values)
        .filter(|(f, _)| (*f - center).abs() > edge)
        .map(|(_, v)| *v)
        .sum();
    if total > 0.0 {
        out / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ber_counts() {
        let a = vec![0u8; 1000];
        let mut b = a.clone();
        assert_eq!(ber(&a, &b).unwrap(), 0.0);
        for i in [3, 500, 999] {
            b[i] = 1;
        }
        assert!((ber(&a, &b).unwrap() - 0.003).abs() < 1e-15);
        let c: Vec<u8> = a.iter().map(|v| 1 - v).collect();
        assert_eq!(ber(&a, &c).unwrap(), 1.0);
        assert!(ber(&a, &c[..10]).is_err());
    }

    #[test]
    fn capacity_limits() {
        let bits: Vec<u8> = (0..20000).map(|i| (i % 3 == 0) as u8).collect();
        let perfect: Vec<f64> = bits.iter().map(|&b| if b == 0 { 30.0 } else { -30.0 }).collect();
        let c = pragmatic_capacity(&perfect, &bits, 2).unwrap();
        assert!((c.bits - 2.0).abs() < 1e-9);
        let zero = vec![0.0; bits.len()];
        assert_eq!(pragmatic_capacity(&zero, &bits, 2).unwrap().bits, 0.0);
        assert!(pragmatic_capacity(&zero[..10], &bits[..10], 2).unwrap().wide_confidence);
    }

    #[test]
    fn tone_has_one_peak() {
        let fs = 64.0;
        let f0 = 5.0;
        let x: Vec<C64> = (0..4096)
            .map(|i| C64::from_polar(1.0, std::f64::consts::TAU * f0 * i as f64 / fs))
            .collect();
        let p = psd(&TimeSignal::new(x, fs, 0.0), 256, 128).unwrap();
        let (imax, _) = p.values.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert!((p.x[imax] - f0).abs() < 1e-9);
        let total: f64 = p.values.iter().sum::<f64>() * fs / 256.0;
        assert!((total - 1.0).abs() < 0.01);
    }

    #[test]
    fn white_noise_is_flat_and_parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64 * 201;
        let x: Vec<C64> = (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        let power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let p = psd(&TimeSignal::new(x, 1.0, 0.0), 128, 64).unwrap();
        assert!(p.n_trials[0] >= 199);
        let total: f64 = p.values.iter().sum::<f64>() / 128.0;
        assert!((total - power).abs() < 0.01 * power);
        let db = psd_db_relative(&p, (-0.5, 0.5)).unwrap();
        assert!(db.values.iter().all(|v| v.abs() < 1.0), "{:?}", db.values);
    }

    #[test]
    fn psd_rejects_short_signal() {
        let s = TimeSignal::new(vec![C64::new(1.0, 0.0); 10], 1.0, 0.0);
        assert!(matches!(psd(&s, 64, 32), Err(Error::InsufficientSamples(_))));
    }
}
