//! Sparse doubly-dispersive channels: sampling, time-domain application,
//! twisted convolution in the DD domain, and AWGN.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::zak::{wrap_lattice, DDFrame, DDGrid, DDSampledSurface, TimeSignal};
use crate::{cis_cycles, lattice_index, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    /// Delay in seconds.
    pub tau: f64,
    /// Doppler in Hz.
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DDChannel {
    pub paths: Vec<Path>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Variance per complex sample.
    pub n0: f64,
    pub seed: u64,
}

impl DDChannel {
    pub fn new(paths: Vec<Path>) -> Self {
        DDChannel { paths, seed: None }
    }

    /// Single unit path at the origin.
    pub fn identity() -> Self {
        DDChannel::new(vec![Path { gain: C64::new(1.0, 0.0), tau: 0.0, nu: 0.0 }])
    }

    /// Channel from `(gain, delay bins, Doppler bins)` on a frame grid.
    pub fn from_bins(grid: &DDGrid, paths: &[(C64, f64, f64)]) -> Self {
        DDChannel::new(
            paths
                .iter()
                .map(|&(gain, l, k)| Path { gain, tau: l * grid.delay_resolution(), nu: k * grid.doppler_resolution() })
                .collect(),
        )
    }

    pub fn max_delay(&self) -> f64 {
        self.paths.iter().map(|p| p.tau).fold(0.0, f64::max)
    }

    /// Integer `(l, k)` bins of every path on `grid`, or an error if any path
    /// falls between lattice points.
    pub fn integer_bins(&self, grid: &DDGrid) -> Result<Vec<(C64, i64, i64)>> {
        self.paths
            .iter()
            .map(|p| {
                let l = lattice_index(p.tau, grid.delay_resolution());
                let k = lattice_index(p.nu, grid.doppler_resolution());
                match (l, k) {
                    (Some(l), Some(k)) => Ok((p.gain, l, k)),
                    _ => Err(Error::NonIntegerChannel(format!("path at tau={}, nu={}", p.tau, p.nu))),
                }
            })
            .collect()
    }

    /// Text record: one `re im delay_ticks doppler_hz` line per path, with
    /// delays counted in ticks of `tick` seconds.
    pub fn to_record(&self, tick: f64) -> String {
        let mut s = format!("# ddchannel v1\ntick_s {tick:e}\n");
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed {seed}\n"));
        }
        for p in &self.paths {
            let ticks = (p.tau / tick).round() as i64;
            s.push_str(&format!("path {:e} {:e} {} {:e}\n", p.gain.re, p.gain.im, ticks, p.nu));
        }
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let bad = |n: usize, msg: &str| Error::InvalidParameter(format!("channel record line {}: {msg}", n + 1));
        let mut tick = None;
        let mut seed = None;
        let mut paths = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[0] {
                "tick_s" if f.len() == 2 => tick = Some(f[1].parse::<f64>().map_err(|_| bad(n, "bad tick"))?),
                "seed" if f.len() == 2 => seed = Some(f[1].parse::<u64>().map_err(|_| bad(n, "bad seed"))?),
                "path" if f.len() == 5 => {
                    let tick = tick.ok_or_else(|| bad(n, "path before tick_s"))?;
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
                    let ticks: i64 = f[3].parse().map_err(|_| bad(n, "bad delay ticks"))?;
                    paths.push(Path { gain: C64::new(num(f[1])?, num(f[2])?), tau: ticks as f64 * tick, nu: num(f[4])? });
                }
                _ => return Err(bad(n, "unrecognised entry")),
            }
        }
        Ok(DDChannel { paths, seed })
    }
}

/// Draw `p` paths with delays uniform on `[0, l_max]` delay bins and Dopplers
/// uniform on `[-k_max/2, k_max/2]` Doppler bins. Integer draws are uniform
/// over the integers in those ranges. Delays are quantised to the sample
/// lattice `T/(M osr)`; gains are CN(0, 1/p). Delay-Doppler pairs are distinct.
pub fn sample_random_channel(
    p: usize,
    l_max: f64,
    k_max: f64,
    grid: &DDGrid,
    fractional: bool,
    seed: u64,
) -> Result<DDChannel> {
    if p == 0 {
        return Err(Error::InvalidParameter("at least one path is required".into()));
    }
    if !(l_max >= 0.0 && k_max >= 0.0) {
        return Err(Error::InvalidParameter("spreads must be non-negative".into()));
    }
    if l_max >= grid.m as f64 || k_max >= grid.n as f64 {
        return Err(Error::Crystallization(format!(
            "l_max={l_max} must be < M={} and k_max={k_max} < N={}",
            grid.m, grid.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let osr = grid.osr as f64;
    let kh = (k_max / 2.0).floor() as i64;
    let distinct_slots = if fractional { usize::MAX } else { ((l_max.floor() as usize) + 1) * (2 * kh as usize + 1) };
    if p > distinct_slots {
        return Err(Error::InvalidParameter(format!("{p} distinct integer paths do not fit the spread")));
    }
    let sd = (0.5 / p as f64).sqrt();
    let mut paths: Vec<Path> = Vec::with_capacity(p);
    while paths.len() < p {
        let (l, k) = if fractional {
            let l: f64 = rng.random::<f64>() * l_max;
            let k: f64 = (rng.random::<f64>() - 0.5) * k_max;
            ((l * osr).round() / osr, k)
        } else {
            let l = rng.random_range(0..=l_max.floor() as i64) as f64;
            let k = rng.random_range(-kh..=kh) as f64;
            (l, k)
        };
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let path = Path { gain: C64::new(re * sd, im * sd), tau: l * grid.delay_resolution(), nu: k * grid.doppler_resolution() };
        if paths.iter().all(|q| (q.tau - path.tau).abs() > 1e-15 || (q.nu - path.nu).abs() > 1e-15) {
            paths.push(path);
        }
    }
    Ok(DDChannel { paths, seed: Some(seed) })
}

/// Delay spread `< T` and Doppler spread `< 1/T`, both strict.
pub fn crystallization_check(ch: &DDChannel, t: f64) -> bool {
    if ch.paths.is_empty() {
        return true;
    }
    let (mut tmin, mut tmax, mut nmin, mut nmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &ch.paths {
        tmin = tmin.min(p.tau);
        tmax = tmax.max(p.tau);
        nmin = nmin.min(p.nu);
        nmax = nmax.max(p.nu);
    }
    tmax - tmin < t && nmax - nmin < 1.0 / t
}

/// `r(t) = sum_p h_p e^{j 2pi nu_p (t - tau_p)} s(t - tau_p)`, extended by the
/// largest delay.
pub fn apply_time_channel(s: &TimeSignal, ch: &DDChannel) -> Result<TimeSignal> {
    let dt = s.dt();
    let mut shifts = Vec::with_capacity(ch.paths.len());
    for p in &ch.paths {
        let d = lattice_index(p.tau, dt)
            .filter(|d| *d >= 0)
            .ok_or_else(|| Error::Quantization(format!("path delay {} is not a non-negative multiple of {dt}", p.tau)))?;
        shifts.push(d as usize);
    }
    let dmax = shifts.iter().copied().max().unwrap_or(0);
    let mut out = vec![C64::new(0.0, 0.0); s.len() + dmax];
    for (p, &d) in ch.paths.iter().zip(&shifts) {
        for (i, v) in s.samples.iter().enumerate() {
            let n = i + d;
            // t - tau_p = t0 + i dt
            out[n] += p.gain * cis_cycles(p.nu * (s.t0 + i as f64 * dt)) * v;
        }
    }
    Ok(TimeSignal::new(out, s.sample_rate, s.t0))
}

/// Objects the twisted convolution acts on.
pub trait TwistedConvolve: Sized {
    fn twisted_convolve(&self, ch: &DDChannel) -> Result<Self>;
}

/// `r(tau, nu) = sum_p h_p e^{j 2pi nu_p (tau - tau_p)} s(tau - tau_p, nu - nu_p)`,
/// with out-of-rectangle arguments folded by quasi-periodicity.
pub fn twisted_convolve_dd<S: TwistedConvolve>(s: &S, ch: &DDChannel) -> Result<S> {
    s.twisted_convolve(ch)
}

impl TwistedConvolve for DDFrame {
    fn twisted_convolve(&self, ch: &DDChannel) -> Result<Self> {
        let g = self.grid;
        let bins = ch.integer_bins(&g)?;
        let mn = g.size() as f64;
        let mut out = DDFrame::zeros(g);
        for &(h, lp, kp) in &bins {
            for k in 0..g.n {
                for l in 0..g.m {
                    let dl = l as i64 - lp;
                    let (lw, kw, alpha) = wrap_lattice(dl, k as i64 - kp, g.m, g.n);
                    let ph = cis_cycles(kp as f64 * dl as f64 / mn);
                    let v = out.get(l, k) + h * ph * alpha * self.get(lw, kw);
                    out.set(l, k, v);
                }
            }
        }
        Ok(out)
    }
}

impl TwistedConvolve for DDSampledSurface {
    fn twisted_convolve(&self, ch: &DDChannel) -> Result<Self> {
        let g = self.grid;
        let (ni, nj) = self.shape();
        let p = g.samples_per_period();
        let dt = g.dt();
        let dnu = 1.0 / (g.n_ext as f64 * g.t);
        let on_lattice = |a: &[f64], step: f64| a.first().is_some_and(|v| v.abs() < 1e-9 * step) && a.len() > 1 && ((a[1] - a[0]) / step - 1.0).abs() < 1e-9;
        if ni != p || nj != g.n_ext || !on_lattice(&self.tau_axis, dt) || !on_lattice(&self.nu_axis, dnu) {
            return Err(Error::NotQuasiPeriodic(
                "surface must hold exactly one delay and one Doppler period on the grid lattice".into(),
            ));
        }
        let mut shifts = Vec::with_capacity(ch.paths.len());
        for path in &ch.paths {
            let d = lattice_index(path.tau, dt);
            let e = lattice_index(path.nu, dnu);
            match (d, e) {
                (Some(d), Some(e)) => shifts.push((path.gain, d, e, path.nu)),
                _ => return Err(Error::Quantization(format!("path ({}, {}) off the surface lattice", path.tau, path.nu))),
            }
        }
        let mut vals = vec![C64::new(0.0, 0.0); ni * nj];
        for &(h, d, e, nu) in &shifts {
            for i in 0..ni {
                let ph = h * cis_cycles(nu * (i as i64 - d) as f64 * dt);
                for j in 0..nj {
                    let (iw, jw, alpha) = wrap_lattice(i as i64 - d, j as i64 - e, ni, nj);
                    vals[i * nj + j] += ph * alpha * self.get(iw, jw);
                }
            }
        }
        DDSampledSurface::new(g, self.tau_axis.clone(), self.nu_axis.clone(), vals)
    }
}

/// Adds CN(0, N0) samples from a ChaCha8 stream seeded by `noise.seed`.
pub fn add_awgn(s: &TimeSignal, noise: &NoiseSpec) -> TimeSignal {
    let mut out = s.clone();
    if noise.n0 <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    add_awgn_with(&mut out.samples, noise.n0, &mut rng);
    out
}

pub fn add_awgn_with<R: Rng>(x: &mut [C64], n0: f64, rng: &mut R) {
    let sd = (n0 / 2.0).sqrt();
    for v in x.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += C64::new(re * sd, im * sd);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn default_channel_shape() {
        let g = DDGrid::new(16, 16, 1.0).unwrap();
        for seed in 0..50 {
            let ch = sample_random_channel(4, 5.0, 3.0, &g, true, seed).unwrap();
            assert_eq!(ch.paths.len(), 4);
            for p in &ch.paths {
                assert!(p.tau <= 5.0 / 16.0 + 1e-12);
                assert!(p.nu.abs() <= 1.5 / 16.0 + 1e-12);
                assert!(lattice_index(p.tau, g.dt()).is_some());
            }
            assert!(crystallization_check(&ch, g.t));
        }
    }

    #[test]
    fn degenerate_single_path() {
        let g = DDGrid::new(16, 16, 1.0).unwrap();
        let ch = sample_random_channel(1, 0.0, 0.0, &g, false, 9).unwrap();
        assert_eq!(ch.paths.len(), 1);
        assert_eq!((ch.paths[0].tau, ch.paths[0].nu), (0.0, 0.0));
    }

    #[test]
    fn seeds_reproduce() {
        let g = DDGrid::new(16, 16, 1.0).unwrap();
        let a = sample_random_channel(4, 5.0, 3.0, &g, true, 7).unwrap();
        let b = sample_random_channel(4, 5.0, 3.0, &g, true, 7).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample_random_channel(0, 5.0, 3.0, &g, true, 7), Err(Error::InvalidParameter(_))));
        assert!(matches!(sample_random_channel(2, 16.0, 3.0, &g, true, 7), Err(Error::Crystallization(_))));
    }

    #[test]
    fn crystallization_is_strict() {
        let one = DDChannel::new(vec![Path { gain: c(1.0, 0.0), tau: 0.3, nu: 0.1 }]);
        assert!(crystallization_check(&one, 1.0));
        let two = DDChannel::new(vec![
            Path { gain: c(1.0, 0.0), tau: 0.0, nu: 0.0 },
            Path { gain: c(1.0, 0.0), tau: 1.0, nu: 0.0 },
        ]);
        assert!(!crystallization_check(&two, 1.0));
    }

    #[test]
    fn identity_channel_is_identity() {
        let s = TimeSignal::new(vec![c(1.0, 2.0), c(-0.5, 0.1), c(0.0, 3.0)], 4.0, -0.25);
        let r = apply_time_channel(&s, &DDChannel::identity()).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn single_path_sample_formula() {
        let s = TimeSignal::new((0..20).map(|i| c(i as f64, 1.0)).collect(), 8.0, 0.5);
        let p = Path { gain: c(0.3, -0.4), tau: 3.0 / 8.0, nu: 0.7 };
        let r = apply_time_channel(&s, &DDChannel::new(vec![p])).unwrap();
        assert_eq!(r.len(), 23);
        for n in 0..r.len() {
            let t = r.time(n);
            let src = s.at(n as i64 - 3);
            let want = p.gain * cis_cycles(p.nu * (t - p.tau)) * src;
            assert!((r.samples[n] - want).norm() < 1e-12);
        }
        let bad = Path { tau: 0.1, ..p };
        assert!(matches!(apply_time_channel(&s, &DDChannel::new(vec![bad])), Err(Error::Quantization(_))));
    }

    #[test]
    fn frame_single_path_kernel() {
        let g = DDGrid::new(8, 4, 1.0).unwrap();
        let x = DDFrame::from_fn(g, |l, k| c(l as f64 + 0.1 * k as f64, k as f64));
        let ch = DDChannel::from_bins(&g, &[(c(1.0, 0.0), 1.0, 0.0)]);
        let y = twisted_convolve_dd(&x, &ch).unwrap();
        for k in 0..4 {
            for l in 1..8 {
                assert!((y.get(l, k) - x.get(l - 1, k)).norm() < 1e-12);
            }
            let alpha = cis_cycles(-(k as f64) / 4.0);
            assert!((y.get(0, k) - alpha * x.get(7, k)).norm() < 1e-12);
        }
    }

    #[test]
    fn record_roundtrip() {
        let g = DDGrid::new(16, 16, 1.0).unwrap();
        let ch = sample_random_channel(4, 5.0, 3.0, &g, true, 3).unwrap();
        let back = DDChannel::from_record(&ch.to_record(g.dt())).unwrap();
        assert_eq!(back.seed, ch.seed);
        for (a, b) in ch.paths.iter().zip(&back.paths) {
            assert_eq!(a.gain, b.gain);
            assert!((a.tau - b.tau).abs() < 1e-15);
            assert_eq!(a.nu, b.nu);
        }
        assert!(DDChannel::from_record("path 1 2 3 4").is_err());
    }

    #[test]
    fn awgn_zero_and_seeded() {
        let s = TimeSignal::zeros(1000, 1.0, 0.0);
        assert_eq!(add_awgn(&s, &NoiseSpec { n0: 0.0, seed: 1 }), s);
        let a = add_awgn(&s, &NoiseSpec { n0: 0.5, seed: 1 });
        let b = add_awgn(&s, &NoiseSpec { n0: 0.5, seed: 1 });
        assert_eq!(a, b);
    }

    #[test]
    fn awgn_variance() {
        let s = TimeSignal::zeros(1_000_000, 1.0, 0.0);
        let r = add_awgn(&s, &NoiseSpec { n0: 0.37, seed: 11 });
        let var = r.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / r.len() as f64;
        assert!((var / 0.37 - 1.0).abs() < 0.01, "{var}");
    }
}
