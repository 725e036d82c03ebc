//! Subcommand bodies. Each returns the tables to write and the extra
//! manifest parameters; file handling lives in [`run`].

use std::path::{Path, PathBuf};

use ddcomm::ambiguity::{af_lattice_closed_form, af_truncated_closed_form, dd_orthogonality_report, lattice_delta_kernel, AfModel};
use ddcomm::channel::{apply_time_channel, sample_random_channel, twisted_convolve_dd, DDChannel};
use ddcomm::detect::{demap, lmmse_dd, map_bits, Constellation};
use ddcomm::metrics::{psd, psd_db_relative};
use ddcomm::modem::{io_asymptotic, io_integer_closed_form, IoKernel, Modem, ModemConfig, ZakDomain};
use ddcomm::pulses::{pulsone_time, BasisConfig, WindowKind};
use ddcomm::zak::{dzt, idzt, quasi_periodicity_residual, zak_time_sampled, DDFrame, DDGrid, TimeSignal};
use ddcomm::C64;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Format};
use crate::link::{derive_seed, run_link_sweep, SchemeCurve, SchemeKind};
use crate::output::{sha256_hex, OutputDir, Table};
use crate::spectrum::dd_spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Ambiguity,
    Basis,
    ChannelMatrix,
    Ber,
    Capacity,
    Psd,
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ambiguity => "ambiguity",
            Command::Basis => "basis",
            Command::ChannelMatrix => "channel-matrix",
            Command::Ber => "ber",
            Command::Capacity => "capacity",
            Command::Psd => "psd",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "{m}"),
            RunError::Numeric(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ddcomm::Error> for RunError {
    fn from(e: ddcomm::Error) -> Self {
        match e {
            ddcomm::Error::InvalidParameter(_) | ddcomm::Error::UnsupportedWindow(_) => RunError::Config(e.to_string()),
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Options that override or complement the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub format: Option<Format>,
}

pub struct Artifacts {
    pub tables: Vec<(String, Table)>,
    pub params: Map<String, Value>,
    /// Set by `selftest` when a check fails; the outputs are still written.
    pub failure: Option<String>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { tables: Vec::new(), params: Map::new(), failure: None }
    }
}

/// Runs `cmd` and writes its outputs plus `manifest.json` into the output
/// directory. Partial outputs are removed if anything fails before the
/// manifest is written.
pub fn run(cmd: Command, mut cfg: ExperimentConfig, config_text: Option<&str>, opts: &RunOptions) -> Result<PathBuf, RunError> {
    if let Some(s) = opts.seed {
        cfg.channel.seed = s;
    }
    if let Some(f) = opts.format {
        cfg.outputs.format = f;
    }
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir));
    cfg.outputs.dir = dir.display().to_string();
    let art = execute(cmd, &cfg, opts.threads)?;
    let mut out = OutputDir::create(&dir, cfg.outputs.format)?;
    let written: Result<(), RunError> = art.tables.iter().try_for_each(|(stem, t)| out.write_table(stem, t).map_err(RunError::from));
    if let Err(e) = written {
        out.abort();
        return Err(e);
    }
    let manifest = manifest(cmd, &cfg, config_text, art.params);
    if let Some(msg) = art.failure {
        out.finish(manifest)?;
        return Err(RunError::Numeric(msg));
    }
    match out.finish(manifest.clone()) {
        Ok(p) => Ok(p),
        Err(e) => {
            // finish consumed the directory handle; remove what we can
            let _ = std::fs::remove_file(dir.join("manifest.json"));
            Err(e.into())
        }
    }
}

fn manifest(cmd: Command, cfg: &ExperimentConfig, config_text: Option<&str>, params: Map<String, Value>) -> Map<String, Value> {
    let resolved = serde_json::to_value(cfg).expect("config serialises");
    let canonical = serde_json::to_string(&resolved).expect("config serialises");
    let mut m = Map::new();
    m.insert("tool".into(), json!("ddcomm"));
    m.insert("cli_version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("library_version".into(), json!(ddcomm::VERSION));
    m.insert("subcommand".into(), json!(cmd.name()));
    m.insert("seed".into(), json!(cfg.channel.seed));
    m.insert("config_sha256".into(), json!(sha256_hex(canonical.as_bytes())));
    if let Some(t) = config_text {
        m.insert("config_file_sha256".into(), json!(sha256_hex(t.as_bytes())));
    }
    m.insert("config".into(), resolved);
    m.insert("parameters".into(), Value::Object(params));
    m
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig, threads: usize) -> Result<Artifacts, RunError> {
    match cmd {
        Command::Ambiguity => ambiguity(cfg),
        Command::Basis => basis(cfg),
        Command::ChannelMatrix => channel_matrix(cfg),
        Command::Ber | Command::Capacity => link(cmd, cfg, threads),
        Command::Psd => spectrum(cfg),
        Command::Selftest => selftest(cfg),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn ambiguity(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let basis = cfg.basis()?;
    let a = &cfg.ambiguity;
    let t = basis.grid.t;
    let taus = linspace(-a.tau_extent * t, a.tau_extent * t, a.tau_points);
    let nus = linspace(-a.nu_extent / t, a.nu_extent / t, a.nu_points);
    let s = af_truncated_closed_form(&basis, &taus, &nus, AfModel::Truncated)?;
    let mut art = Artifacts::new();
    let mut surf = Table::new(&["tau", "nu", "re", "im", "abs"]);
    for (i, &tau) in taus.iter().enumerate() {
        for (j, &nu) in nus.iter().enumerate() {
            let v = s.get(i, j);
            surf.push(vec![tau.into(), nu.into(), v.re.into(), v.im.into(), v.norm().into()]);
        }
    }
    let delay_cut = af_truncated_closed_form(&basis, &taus, &[0.0], AfModel::Truncated)?;
    let mut dc = Table::new(&["tau", "re", "im", "abs"]);
    for (i, &tau) in taus.iter().enumerate() {
        let v = delay_cut.get(i, 0);
        dc.push(vec![tau.into(), v.re.into(), v.im.into(), v.norm().into()]);
    }
    let doppler_cut = af_truncated_closed_form(&basis, &[0.0], &nus, AfModel::Truncated)?;
    let mut nc = Table::new(&["nu", "re", "im", "abs"]);
    for (j, &nu) in nus.iter().enumerate() {
        let v = doppler_cut.get(0, j);
        nc.push(vec![nu.into(), v.re.into(), v.im.into(), v.norm().into()]);
    }
    let rep = dd_orthogonality_report(&basis, 1e-2)?;
    let mut lt = Table::new(&["l1", "k1", "magnitude", "echo", "orthogonal"]);
    for e in &rep.entries {
        lt.push(vec![e.l1.into(), e.k1.into(), e.magnitude.into(), e.echo.into(), e.orthogonal.into()]);
    }
    art.params.insert("m_ext".into(), json!(basis.grid.m_ext));
    art.params.insert("n_ext".into(), json!(basis.grid.n_ext));
    art.params.insert("model".into(), json!("truncated closed form"));
    art.params.insert("worst_interior_lattice_magnitude".into(), json!(rep.worst_interior()));
    art.tables = vec![
        ("ambiguity_surface".into(), surf),
        ("ambiguity_delay_cut".into(), dc),
        ("ambiguity_doppler_cut".into(), nc),
        ("ambiguity_lattice".into(), lt),
    ];
    Ok(art)
}

fn basis(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let basis = cfg.basis()?;
    let b = &cfg.basis;
    let x = pulsone_time(b.l, b.k, &basis)?;
    let mut time = Table::new(&["t", "re", "im"]);
    for (i, v) in x.samples.iter().enumerate() {
        time.push(vec![x.time(i).into(), v.re.into(), v.im.into()]);
    }
    // direct DFT on [0, fs) at the record resolution, scaled to approximate
    // the continuous transform
    let n = x.len();
    let dt = x.dt();
    let mut freq = Table::new(&["f", "re", "im"]);
    for j in 0..n {
        let f = j as f64 / (n as f64 * dt);
        let mut acc = C64::new(0.0, 0.0);
        for (i, v) in x.samples.iter().enumerate() {
            let cyc = ((i * j) % n) as f64 / n as f64;
            acc += v * C64::from_polar(1.0, -std::f64::consts::TAU * cyc);
        }
        let acc = acc * C64::from_polar(dt, -std::f64::consts::TAU * f * x.t0);
        freq.push(vec![f.into(), acc.re.into(), acc.im.into()]);
    }
    let z = zak_time_sampled(&x, &basis.grid, b.replicas)?;
    let mut dd = Table::new(&["tau", "nu", "re", "im"]);
    let (ni, nj) = z.shape();
    for i in 0..ni {
        for j in 0..nj {
            let v = z.get(i, j);
            dd.push(vec![z.tau_axis[i].into(), z.nu_axis[j].into(), v.re.into(), v.im.into()]);
        }
    }
    let mut art = Artifacts::new();
    art.params.insert("lattice_point".into(), json!([b.l, b.k]));
    art.params.insert("energy".into(), json!(x.energy()));
    art.tables = vec![("basis_time".into(), time), ("basis_freq".into(), freq), ("basis_dd".into(), dd)];
    Ok(art)
}

fn matrix_table(h: &Mat<C64>) -> Table {
    let mut t = Table::new(&["row", "col", "re", "im"]);
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            let v = h[(i, j)];
            t.push(vec![i.into(), j.into(), v.re.into(), v.im.into()]);
        }
    }
    t
}

fn channel_matrix(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let basis = cfg.basis()?;
    let g = basis.grid;
    let c = &cfg.channel;
    let ch = sample_random_channel(c.paths, c.l_max, c.k_max, &g, c.fractional, c.seed)?;
    let modem = Modem::new(&ModemConfig { basis, cp_len: cfg.modem.cp_len, normalize: cfg.modem.normalize })?;
    let eff = modem.effective_channel(&ch, &ZakDomain(g))?;
    let mut paths = Table::new(&["path", "gain_re", "gain_im", "tau", "nu", "delay_bins", "doppler_bins"]);
    for (i, p) in ch.paths.iter().enumerate() {
        paths.push(vec![
            i.into(),
            p.gain.re.into(),
            p.gain.im.into(),
            p.tau.into(),
            p.nu.into(),
            (p.tau / g.delay_resolution()).into(),
            (p.nu / g.doppler_resolution()).into(),
        ]);
    }
    let mut art = Artifacts::new();
    art.params.insert("band_half_width".into(), json!(eff.band_half_width));
    art.params.insert("matrix_order".into(), json!("column-major, vec(X) with delay fastest"));
    art.tables = vec![
        ("channel_paths".into(), paths),
        ("h_time".into(), matrix_table(&eff.h_t)),
        ("h_dd".into(), matrix_table(&eff.h_dd)),
    ];
    Ok(art)
}

fn link(cmd: Command, cfg: &ExperimentConfig, threads: usize) -> Result<Artifacts, RunError> {
    let schemes = cfg.schemes();
    let lc = cfg.link_config(threads);
    let curves = run_link_sweep(&schemes, &lc)?;
    let mut art = Artifacts::new();
    let table = match cmd {
        Command::Ber => ber_table(&curves),
        _ => capacity_table(&curves),
    };
    for c in &curves {
        for p in &c.points {
            if !(0.0..=1.0).contains(&p.ber()) || !(0.0..=2.0).contains(&p.capacity()) {
                return Err(RunError::Numeric(format!("{}: metric outside its range", c.label)));
            }
        }
    }
    art.params.insert("snr_definition".into(), json!("Es/N0 with unit-energy QPSK symbols"));
    art.params.insert("bits_per_frame".into(), json!(2 * lc.grid.size()));
    if schemes.iter().any(|s| s.kind == SchemeKind::Ofdm) {
        art.params.insert("ofdm_cp_per_symbol".into(), json!(cfg.modem.cp_len.div_ceil(lc.grid.n)));
        art.params.insert("ofdm_layout".into(), json!("DMT, unitary per-symbol DFT over M subcarriers, sinc pulses"));
    }
    art.tables = vec![(cmd.name().into(), table)];
    Ok(art)
}

pub fn ber_table(curves: &[SchemeCurve]) -> Table {
    let mut t = Table::new(&["scheme", "snr_db", "value", "stderr", "n_trials", "bit_errors", "bits"]);
    for c in curves {
        for (snr, p) in c.snr_db.iter().zip(&c.points) {
            t.push(vec![
                c.label.as_str().into(),
                (*snr).into(),
                p.ber().into(),
                p.ber_stderr().into(),
                p.frames.into(),
                p.bit_errors.into(),
                p.bits.into(),
            ]);
        }
    }
    t
}

pub fn capacity_table(curves: &[SchemeCurve]) -> Table {
    let mut t = Table::new(&["scheme", "snr_db", "value", "stderr", "n_trials"]);
    for c in curves {
        for (snr, p) in c.snr_db.iter().zip(&c.points) {
            t.push(vec![c.label.as_str().into(), (*snr).into(), p.capacity().into(), p.capacity_stderr().into(), p.frames.into()]);
        }
    }
    t
}

fn spectrum(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let sc = cfg.spectrum_config();
    let mut curves = Table::new(&["curve", "frequency_hz", "value", "stderr", "n_trials"]);
    let mut oob = Table::new(&["curve", "center_hz", "edge_hz", "oob_fraction", "oob_db"]);
    for cv in &cfg.psd.curves {
        let r = dd_spectrum(&cv.label, cv.window.kind(), &sc)?;
        let half = r.edge / 1.25;
        let db = psd_db_relative(&r.psd, (r.center - half, r.center + half))?;
        for i in 0..db.len() {
            curves.push(vec![cv.label.as_str().into(), db.x[i].into(), db.values[i].into(), db.stderr[i].into(), db.n_trials[i].into()]);
        }
        oob.push(vec![cv.label.as_str().into(), r.center.into(), r.edge.into(), r.oob.into(), r.oob_db().into()]);
    }
    let mut art = Artifacts::new();
    art.params.insert("psd_scale".into(), json!("dB relative to the in-band mean"));
    art.params.insert("oob_edge".into(), json!("1.25 (1 + beta) M / (2T) from the band centre M_ext / (2T)"));
    art.tables = vec![("psd".into(), curves), ("psd_oob".into(), oob)];
    Ok(art)
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
}

fn random_frame(g: DDGrid, rng: &mut ChaCha8Rng) -> DDFrame {
    DDFrame::from_fn(g, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum();
    let den: f64 = b.iter().map(|v| v.norm_sqr()).sum();
    (num / den).sqrt()
}

/// DZT of the CP-extended, channel-applied lattice signal against the
/// twisted convolution of the DZT.
pub fn channel_equivalence_error(x: &DDFrame, ch: &DDChannel, cp: usize) -> ddcomm::Result<f64> {
    let g = x.grid;
    let mn = g.size();
    let xt = idzt(x);
    let dt = g.delay_resolution();
    let samples: Vec<C64> = (0..cp + mn).map(|i| xt[(i + mn - cp) % mn]).collect();
    let s = TimeSignal::new(samples, 1.0 / dt, -(cp as f64) * dt);
    let r = apply_time_channel(&s, ch)?;
    let y = dzt(&r.samples[cp..cp + mn], &g)?;
    let want = twisted_convolve_dd(x, ch)?;
    Ok(rel(y.as_slice(), want.as_slice()))
}

fn selftest(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let seed = cfg.channel.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 9, 0));
    let mut checks = Vec::new();

    let (mut rt, mut pv) = (0.0f64, 0.0f64);
    for m in [4, 8, 16] {
        for n in [4, 8, 16] {
            let g = DDGrid::new(m, n, 1.0)?;
            for _ in 0..10 {
                let x = random_frame(g, &mut rng);
                let t = idzt(&x);
                let back = dzt(&t, &g)?;
                rt = rt.max(rel(back.as_slice(), x.as_slice()));
                let et: f64 = t.iter().map(|v| v.norm_sqr()).sum();
                pv = pv.max((et - x.norm_sqr()).abs() / x.norm_sqr());
            }
        }
    }
    checks.push(Check { name: "dzt_roundtrip", value: rt, threshold: 1e-12 });
    checks.push(Check { name: "dzt_parseval", value: pv, threshold: 1e-12 });

    let rect8 = BasisConfig::new(8, 8, 1.0, 2, WindowKind::Rect, WindowKind::Rect)?;
    let mut qp = 0.0f64;
    for (l, k) in [(0, 0), (3, 5), (7, 7)] {
        let x = pulsone_time(l, k, &rect8)?;
        let (d, n) = quasi_periodicity_residual(&x, &rect8.grid, 2 * rect8.grid.n_ext + 4)?;
        qp = qp.max(d).max(n);
    }
    checks.push(Check { name: "zak_quasi_periodicity", value: qp, threshold: 1e-9 });

    let g8 = DDGrid::new(8, 8, 1.0)?;
    let mut eq = 0.0f64;
    for i in 0..5 {
        let ch = sample_random_channel(3, 3.0, 2.0, &g8, false, derive_seed(seed, i, 10, 0))?;
        let x = random_frame(g8, &mut rng);
        eq = eq.max(channel_equivalence_error(&x, &ch, 3)?);
    }
    checks.push(Check { name: "channel_dd_equivalence", value: eq, threshold: 1e-9 });

    let rect16 = BasisConfig::new(16, 8, 1.0, 2, WindowKind::Rect, WindowKind::Rect)?;
    let a0 = af_lattice_closed_form(&rect16, 0, 0)?;
    let want = lattice_delta_kernel(&rect16, 0, 0);
    let mut af = (a0 - want).norm() / want.norm();
    for (l1, k1) in [(1, 0), (0, 1), (5, -3), (-15, 7)] {
        af = af.max(af_lattice_closed_form(&rect16, l1, k1)?.norm() / want.norm());
    }
    checks.push(Check { name: "ambiguity_lattice_values", value: af, threshold: 1e-12 });

    let g16 = rect16.grid;
    let ch = sample_random_channel(4, 5.0, 3.0, &g16, false, derive_seed(seed, 0, 11, 0))?;
    let x = random_frame(g16, &mut rng);
    let ya = io_asymptotic(&x, &ch, &rect16, IoKernel::LatticeDelta)?;
    let yc = io_integer_closed_form(&x, &ch)?;
    let yc: Vec<C64> = yc.as_slice().iter().map(|v| v * want).collect();
    checks.push(Check { name: "io_reduction", value: rel(ya.as_slice(), &yc), threshold: 1e-9 });

    let basis = cfg.basis()?;
    let modem = Modem::new(&ModemConfig { basis, cp_len: cfg.modem.cp_len, normalize: true })?;
    let x = random_frame(basis.grid, &mut rng);
    let y = modem.receive(&modem.transmit(&x)?)?;
    let gain: C64 = y.as_slice().iter().zip(x.as_slice()).map(|(u, v)| u * v.conj()).sum::<C64>() / x.norm_sqr();
    checks.push(Check { name: "modem_identity_gain", value: (gain - 1.0).norm(), threshold: 5e-3 });

    let c = Constellation::qpsk();
    let bits: Vec<u8> = (0..2 * g16.size()).map(|_| rng.random_range(0..2u8)).collect();
    let xs = map_bits(&bits, &c, &g16)?;
    let (hard, _) = demap(xs.as_slice(), &c, 1e-3);
    let ident = Mat::<C64>::identity(g16.size(), g16.size());
    let det = lmmse_dd(xs.as_slice(), &ident, 1e-6, &c)?;
    let errs = hard.iter().zip(&bits).filter(|(a, b)| a != b).count() + det.bits().iter().zip(&bits).filter(|(a, b)| a != b).count();
    checks.push(Check { name: "noiseless_detection_errors", value: errs as f64, threshold: 0.0 });

    let sc = cfg.spectrum_config();
    let stream = crate::spectrum::frame_stream(
        &Modem::new(&ModemConfig {
            basis: BasisConfig::new(sc.grid.m, sc.grid.n, sc.grid.t, sc.grid.osr, WindowKind::Rect, WindowKind::Rect)?,
            cp_len: sc.cp_len,
            normalize: true,
        })?,
        &sc,
        derive_seed(seed, 0, 12, 0),
    )?;
    let p = psd(&stream, sc.nfft, sc.overlap)?;
    let df = p.x[1] - p.x[0];
    let total: f64 = p.values.iter().sum::<f64>() * df;
    let power = stream.energy() / stream.duration();
    checks.push(Check { name: "psd_parseval", value: (total - power).abs() / power, threshold: 1e-2 });

    let mut table = Table::new(&["check", "value", "threshold", "pass"]);
    let mut failed = Vec::new();
    for ck in &checks {
        let pass = ck.value <= ck.threshold && ck.value.is_finite();
        if !pass {
            failed.push(ck.name);
        }
        table.push(vec![ck.name.into(), ck.value.into(), ck.threshold.into(), pass.into()]);
    }
    let mut art = Artifacts::new();
    art.params.insert("checks".into(), json!(checks.len()));
    art.params.insert("failed".into(), json!(failed));
    if !failed.is_empty() {
        art.failure = Some(format!("selftest checks failed: {}", failed.join(", ")));
    }
    art.tables = vec![("selftest".into(), table)];
    Ok(art)
}

/// Reads and validates a config file, or returns defaults when `path` is
/// `None`.
pub fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, Option<String>), RunError> {
    match path {
        None => Ok((ExperimentConfig::default(), None)),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("cannot read {}: {e}", p.display())))?;
            let cfg = ExperimentConfig::parse(&text).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
            Ok((cfg, Some(text)))
        }
    }
}
