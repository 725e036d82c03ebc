//! Transmit-spectrum experiment: a stream of back-to-back frames, its Welch
//! PSD and the out-of-band power fraction.

use ddcomm::detect::{map_bits, Constellation};
use ddcomm::metrics::{oob_fraction, psd, MetricSeries};
use ddcomm::modem::{Modem, ModemConfig, SymbolTransform, ZakDomain};
use ddcomm::pulses::{BasisConfig, WindowKind};
use ddcomm::zak::{DDGrid, TimeSignal};
use ddcomm::{Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::link::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub grid: DDGrid,
    pub cp_len: usize,
    pub frames: usize,
    pub nfft: usize,
    pub overlap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub label: String,
    /// Linear density, FFT-shifted.
    pub psd: MetricSeries,
    pub center: f64,
    pub edge: f64,
    pub oob: f64,
}

impl SpectrumResult {
    pub fn oob_db(&self) -> f64 {
        10.0 * self.oob.max(1e-300).log10()
    }
}

/// Overlap-adds `frames` DD frames at the frame period `(MN + cp) T/M`.
pub fn frame_stream(modem: &Modem, cfg: &SpectrumConfig, seed: u64) -> Result<TimeSignal> {
    let g = *modem.grid();
    let c = Constellation::qpsk();
    let tr = ZakDomain(g);
    let hop = (g.size() + cfg.cp_len) * g.osr;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<C64> = Vec::new();
    let mut t0 = 0.0;
    for f in 0..cfg.frames {
        let bits: Vec<u8> = (0..2 * g.size()).map(|_| rng.random_range(0..2u8)).collect();
        let x = map_bits(&bits, &c, &g)?;
        let s = modem.transmit_time(&tr.to_time(x.as_slice()))?;
        if f == 0 {
            t0 = s.t0;
        }
        let off = f * hop;
        if out.len() < off + s.len() {
            out.resize(off + s.len(), C64::new(0.0, 0.0));
        }
        for (o, v) in out[off..].iter_mut().zip(&s.samples) {
            *o += v;
        }
    }
    Ok(TimeSignal::new(out, g.sample_rate(), t0))
}

/// PSD of a DD stream with the same window kind in time and frequency.
/// Out-of-band is `|f - M~/(2T)| > 1.25 (1 + beta) M/(2T)`.
pub fn dd_spectrum(label: &str, window: WindowKind, cfg: &SpectrumConfig) -> Result<SpectrumResult> {
    let g = cfg.grid;
    let basis = BasisConfig::new(g.m, g.n, g.t, g.osr, window, window)?;
    let modem = Modem::new(&ModemConfig { basis, cp_len: cfg.cp_len, normalize: true })?;
    let stream = frame_stream(&modem, cfg, derive_seed(cfg.seed, 0, 3, 0))?;
    let p = psd(&stream, cfg.nfft, cfg.overlap)?;
    let bg = basis.grid;
    let center = bg.m_ext as f64 / (2.0 * bg.t);
    let edge = 1.25 * (1.0 + window.beta()) * bg.m as f64 / (2.0 * bg.t);
    let oob = oob_fraction(&p, center, edge);
    Ok(SpectrumResult { label: label.into(), psd: p, center, edge, oob })
}
