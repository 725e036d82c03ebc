//! Monte Carlo link sweeps: BER and pragmatic capacity per scheme and SNR.
//!
//! Every frame draws one channel (shared by all schemes), one bit vector and
//! one noise stream per SNR point. The channel matrix and its factorisation
//! are built once per frame and scheme and reused across SNR points.

use ddcomm::channel::{add_awgn_with, apply_time_channel, sample_random_channel, DDChannel};
use ddcomm::detect::{map_bits, Constellation, CrossDomainDetector, IterativeConfig, lmmse_dd};
use ddcomm::metrics::log2_1p_exp_neg;
use ddcomm::modem::{conjugate_by, Modem, ModemConfig, SymbolTransform, ZakDomain};
use ddcomm::ofdm::{OfdmConfig, OfdmDomain};
use ddcomm::pulses::{BasisConfig, WindowKind};
use ddcomm::zak::{DDGrid, TimeSignal};
use ddcomm::{Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    Dd { time: WindowKind, freq: WindowKind },
    Ofdm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub label: String,
    pub kind: SchemeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    CrossDomain,
    Lmmse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub grid: DDGrid,
    pub cp_len: usize,
    pub normalize: bool,
    pub paths: usize,
    pub l_max: f64,
    pub k_max: f64,
    pub fractional: bool,
    pub detector: DetectorKind,
    pub iterative: IterativeConfig,
    pub snr_db: Vec<f64>,
    pub frames: usize,
    pub seed: u64,
    pub threads: usize,
}

/// Totals for one scheme at one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointStats {
    pub bit_errors: u64,
    pub bits: u64,
    /// Per-frame pragmatic capacity, summed and squared-summed.
    pub cap_sum: f64,
    pub cap_sq_sum: f64,
    /// Per-frame BER squared-summed, for the standard error.
    pub ber_sq_sum: f64,
    pub frames: usize,
}

impl PointStats {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    pub fn ber_stderr(&self) -> f64 {
        stderr(self.ber(), self.ber_sq_sum, self.frames)
    }

    pub fn capacity(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.cap_sum / self.frames as f64
        }
    }

    pub fn capacity_stderr(&self) -> f64 {
        stderr(self.capacity(), self.cap_sq_sum, self.frames)
    }

    fn merge(&mut self, o: &PointStats) {
        self.bit_errors += o.bit_errors;
        self.bits += o.bits;
        self.cap_sum += o.cap_sum;
        self.cap_sq_sum += o.cap_sq_sum;
        self.ber_sq_sum += o.ber_sq_sum;
        self.frames += o.frames;
    }
}

fn stderr(mean: f64, sq_sum: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let var = (sq_sum / n as f64 - mean * mean).max(0.0) * n as f64 / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCurve {
    pub label: String,
    pub snr_db: Vec<f64>,
    pub points: Vec<PointStats>,
}

/// Seed for stream `(a, b, c)` under the run seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ c.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Prepared {
    modem: Modem,
    tr: Box<dyn SymbolTransform>,
}

fn prepare(spec: &SchemeSpec, cfg: &LinkConfig) -> Result<Prepared> {
    let g = cfg.grid;
    Ok(match spec.kind {
        SchemeKind::Dd { time, freq } => {
            let basis = BasisConfig::new(g.m, g.n, g.t, g.osr, time, freq)?;
            let mc = ModemConfig { basis, cp_len: cfg.cp_len, normalize: cfg.normalize };
            Prepared { modem: Modem::new(&mc)?, tr: Box::new(ZakDomain(basis.grid)) }
        }
        SchemeKind::Ofdm => {
            let oc = OfdmConfig::matching_frame_cp(g, cfg.cp_len);
            Prepared { modem: oc.modem()?, tr: Box::new(OfdmDomain(g)) }
        }
    })
}

/// Per-frame pragmatic capacity `sum_levels 1 - mean log2(1 + e^{-(1-2b)L})`.
fn frame_capacity(llrs: &[[f64; 2]], bits: &[u8]) -> f64 {
    let mut acc = [0.0; 2];
    for (i, l) in llrs.iter().enumerate() {
        for lev in 0..2 {
            let s = if bits[2 * i + lev] == 0 { 1.0 } else { -1.0 };
            acc[lev] += log2_1p_exp_neg(s * l[lev]);
        }
    }
    let n = llrs.len() as f64;
    ((1.0 - acc[0] / n) + (1.0 - acc[1] / n)).clamp(0.0, 2.0)
}

fn run_frame(
    f: usize,
    schemes: &[Prepared],
    cfg: &LinkConfig,
    c: &Constellation,
) -> Result<Vec<Vec<PointStats>>> {
    let g = cfg.grid;
    let ch: DDChannel = sample_random_channel(
        cfg.paths,
        cfg.l_max,
        cfg.k_max,
        &g,
        cfg.fractional,
        derive_seed(cfg.seed, f as u64, 0, 0),
    )?;
    let mut brng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, f as u64, 1, 0));
    let bits: Vec<u8> = (0..2 * g.size()).map(|_| brng.random_range(0..2u8)).collect();
    let x = map_bits(&bits, c, &g)?;
    let mut out = Vec::with_capacity(schemes.len());
    for p in schemes {
        let h_t = p.modem.probe_time_matrix(&ch)?;
        let xt = p.tr.to_time(x.as_slice());
        let s = p.modem.transmit_time(&xt)?;
        let r = apply_time_channel(&s, &ch)?;
        let y_clean = p.modem.receive_time(&r)?;
        let det = match cfg.detector {
            DetectorKind::CrossDomain => Some(CrossDomainDetector::new(&h_t, p.tr.as_ref())?),
            DetectorKind::Lmmse => None,
        };
        let h_sym = match cfg.detector {
            DetectorKind::Lmmse => Some(conjugate_by(&h_t, p.tr.as_ref())),
            DetectorKind::CrossDomain => None,
        };
        let mut row = Vec::with_capacity(cfg.snr_db.len());
        for (k, &snr) in cfg.snr_db.iter().enumerate() {
            let n0 = 10f64.powf(-snr / 10.0);
            let mut nrng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, f as u64, 2, k as u64));
            let mut noise = TimeSignal::zeros(r.len(), r.sample_rate, r.t0);
            add_awgn_with(&mut noise.samples, p.modem.sample_noise_variance(n0), &mut nrng);
            let yn = p.modem.receive_time(&noise)?;
            let y: Vec<C64> = y_clean.iter().zip(&yn).map(|(a, b)| a + b).collect();
            let var = p.modem.output_noise_variance(n0);
            let res = match (&det, &h_sym) {
                (Some(d), _) => d.detect(&y, var, c, &cfg.iterative)?,
                (None, Some(h)) => lmmse_dd(&p.tr.to_symbols(&y), h, var, c)?,
                _ => unreachable!(),
            };
            let rx = res.bits();
            let errs = rx.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
            let fb = errs as f64 / bits.len() as f64;
            let cap = frame_capacity(&res.llrs, &bits);
            row.push(PointStats {
                bit_errors: errs,
                bits: bits.len() as u64,
                cap_sum: cap,
                cap_sq_sum: cap * cap,
                ber_sq_sum: fb * fb,
                frames: 1,
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Runs `cfg.frames` frames over all schemes. Frames are split into
/// contiguous blocks per thread and reduced in frame order, so results do
/// not depend on the thread count.
pub fn run_link_sweep(schemes: &[SchemeSpec], cfg: &LinkConfig) -> Result<Vec<SchemeCurve>> {
    let c = Constellation::qpsk();
    let prepared: Vec<Prepared> = schemes.iter().map(|s| prepare(s, cfg)).collect::<Result<_>>()?;
    let threads = cfg.threads.max(1).min(cfg.frames.max(1));
    let per_frame: Vec<Result<Vec<Vec<PointStats>>>> = if threads == 1 {
        (0..cfg.frames).map(|f| run_frame(f, &prepared, cfg, &c)).collect()
    } else {
        let chunk = cfg.frames.div_ceil(threads);
        let prepared_per_thread: Vec<Vec<Prepared>> = (0..threads)
            .map(|_| schemes.iter().map(|s| prepare(s, cfg)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        std::thread::scope(|sc| {
            let handles: Vec<_> = prepared_per_thread
                .iter()
                .enumerate()
                .map(|(t, prep)| {
                    let c = &c;
                    sc.spawn(move || {
                        let lo = t * chunk;
                        let hi = ((t + 1) * chunk).min(cfg.frames);
                        (lo..hi).map(|f| run_frame(f, prep, cfg, c)).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    let mut curves: Vec<SchemeCurve> = schemes
        .iter()
        .map(|s| SchemeCurve { label: s.label.clone(), snr_db: cfg.snr_db.clone(), points: vec![PointStats::default(); cfg.snr_db.len()] })
        .collect();
    for fr in per_frame {
        let fr = fr?;
        for (curve, row) in curves.iter_mut().zip(&fr) {
            for (acc, p) in curve.points.iter_mut().zip(row) {
                acc.merge(p);
            }
        }
    }
    Ok(curves)
}
