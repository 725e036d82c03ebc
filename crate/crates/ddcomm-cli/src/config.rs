//! Experiment configuration: TOML or JSON, unknown keys rejected, every value
//! re-validated against the library before a run starts.

use std::path::Path;

use ddcomm::detect::IterativeConfig;
use ddcomm::pulses::{BasisConfig, WindowKind};
use ddcomm::zak::DDGrid;
use serde::{Deserialize, Serialize};

use crate::link::{DetectorKind, LinkConfig, SchemeKind, SchemeSpec};
use crate::spectrum::SpectrumConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    /// Parse failure; the message already carries line and column.
    Parse(String),
    /// Semantic failure at a dotted key, with its line when it could be found.
    Invalid { key: String, line: Option<usize>, msg: String },
    Io(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid { key, line: Some(l), msg } => write!(f, "config error at line {l} ({key}): {msg}"),
            ConfigError::Invalid { key, line: None, msg } => write!(f, "config error ({key}): {msg}"),
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConf {
    pub m: usize,
    pub n: usize,
    pub t: f64,
    pub osr: usize,
}

impl Default for GridConf {
    fn default() -> Self {
        GridConf { m: 16, n: 16, t: 1.0, osr: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowName {
    Rect,
    Rrc,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConf {
    pub kind: WindowName,
    #[serde(default)]
    pub beta: f64,
}

impl WindowConf {
    pub const RECT: WindowConf = WindowConf { kind: WindowName::Rect, beta: 0.0 };

    pub fn rrc(beta: f64) -> Self {
        WindowConf { kind: WindowName::Rrc, beta }
    }

    pub fn kind(&self) -> WindowKind {
        match self.kind {
            WindowName::Rect => WindowKind::Rect,
            WindowName::Rrc => WindowKind::Rrc(self.beta),
            WindowName::Cosine => WindowKind::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowsConf {
    pub time: WindowConf,
    pub freq: WindowConf,
}

impl Default for WindowsConf {
    fn default() -> Self {
        WindowsConf { time: WindowConf::RECT, freq: WindowConf::RECT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConf {
    pub paths: usize,
    pub l_max: f64,
    pub k_max: f64,
    pub fractional: bool,
    pub seed: u64,
}

impl Default for ChannelConf {
    fn default() -> Self {
        ChannelConf { paths: 4, l_max: 5.0, k_max: 3.0, fractional: false, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModemConf {
    pub cp_len: usize,
    pub normalize: bool,
}

impl Default for ModemConf {
    fn default() -> Self {
        ModemConf { cp_len: 5, normalize: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorName {
    CrossDomain,
    Lmmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConf {
    pub kind: DetectorName,
    pub iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for DetectorConf {
    fn default() -> Self {
        DetectorConf { kind: DetectorName::CrossDomain, iters: 10, damping: 0.5, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Dd,
    Ofdm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConf {
    pub label: String,
    pub kind: SchemeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<WindowConf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq: Option<WindowConf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConf {
    pub snr_db: Vec<f64>,
    pub frames: usize,
    pub schemes: Vec<SchemeConf>,
}

impl Default for SweepConf {
    fn default() -> Self {
        SweepConf {
            snr_db: vec![6.0, 8.0, 10.0, 12.0, 14.0, 16.0],
            frames: 500,
            schemes: vec![
                SchemeConf { label: "dd-rect".into(), kind: SchemeName::Dd, time: Some(WindowConf::RECT), freq: Some(WindowConf::RECT) },
                SchemeConf { label: "dd-rrc".into(), kind: SchemeName::Dd, time: Some(WindowConf::rrc(0.1)), freq: Some(WindowConf::rrc(0.3)) },
                SchemeConf { label: "ofdm".into(), kind: SchemeName::Ofdm, time: None, freq: None },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdCurveConf {
    pub label: String,
    /// Used in both time and frequency.
    pub window: WindowConf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdConf {
    pub m: usize,
    pub n: usize,
    pub osr: usize,
    pub frames: usize,
    pub nfft: usize,
    pub overlap: usize,
    pub curves: Vec<PsdCurveConf>,
}

impl Default for PsdConf {
    fn default() -> Self {
        PsdConf {
            m: 16,
            n: 8,
            osr: 4,
            frames: 64,
            nfft: 512,
            overlap: 256,
            curves: vec![
                PsdCurveConf { label: "rect".into(), window: WindowConf::RECT },
                PsdCurveConf { label: "rrc-0.1".into(), window: WindowConf::rrc(0.1) },
                PsdCurveConf { label: "rrc-0.3".into(), window: WindowConf::rrc(0.3) },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbiguityConf {
    pub tau_points: usize,
    pub nu_points: usize,
    /// Delay axis covers `[-tau_extent T, tau_extent T]`.
    pub tau_extent: f64,
    /// Doppler axis covers `[-nu_extent / T, nu_extent / T]`.
    pub nu_extent: f64,
}

impl Default for AmbiguityConf {
    fn default() -> Self {
        AmbiguityConf { tau_points: 129, nu_points: 129, tau_extent: 0.5, nu_extent: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConf {
    pub l: usize,
    pub k: usize,
    pub replicas: usize,
}

impl Default for BasisConf {
    fn default() -> Self {
        BasisConf { l: 0, k: 0, replicas: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConf {
    pub dir: String,
    pub format: Format,
}

impl Default for OutputsConf {
    fn default() -> Self {
        OutputsConf { dir: "out".into(), format: Format::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridConf,
    pub windows: WindowsConf,
    pub channel: ChannelConf,
    pub modem: ModemConf,
    pub detector: DetectorConf,
    pub sweep: SweepConf,
    pub psd: PsdConf,
    pub ambiguity: AmbiguityConf,
    pub basis: BasisConf,
    pub outputs: OutputsConf,
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the text starts with `{`, then validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(toml_message(text, &e)))?
        };
        cfg.validate().map_err(|(key, msg)| ConfigError::Invalid { line: find_key_line(text, &key), key, msg })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks every section; on failure returns the offending dotted key.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |k: &str, m: String| Err((k.to_string(), m));
        let g = &self.grid;
        if let Err(e) = self.dd_grid() {
            return err("grid", e.to_string());
        }
        if !(g.t > 0.0 && g.t.is_finite()) {
            return err("grid.t", "must be positive".into());
        }
        for (k, w) in [("windows.time", self.windows.time), ("windows.freq", self.windows.freq)] {
            check_window(k, &w)?;
        }
        if let Err(e) = self.basis_config(self.windows.time, self.windows.freq) {
            return err("windows", e.to_string());
        }
        let c = &self.channel;
        if c.paths == 0 {
            return err("channel.paths", "at least one path is required".into());
        }
        if !(c.l_max >= 0.0 && c.l_max.is_finite()) {
            return err("channel.l_max", "must be a non-negative number".into());
        }
        if !(c.k_max >= 0.0 && c.k_max.is_finite()) {
            return err("channel.k_max", "must be a non-negative number".into());
        }
        if c.l_max >= g.m as f64 {
            return err("channel.l_max", format!("delay spread must stay below one period (M = {})", g.m));
        }
        if c.k_max >= g.n as f64 {
            return err("channel.k_max", format!("Doppler spread must stay below 1/T (N = {})", g.n));
        }
        if !c.fractional && c.paths > (c.l_max.floor() as usize + 1) * (c.k_max.floor() as usize + 1) {
            return err("channel.paths", "more paths than distinct integer (delay, Doppler) bins".into());
        }
        if self.modem.cp_len > g.m * g.n {
            return err("modem.cp_len", "longer than the frame".into());
        }
        if (self.modem.cp_len as f64) < c.l_max.ceil() {
            return err("modem.cp_len", format!("must cover the delay spread l_max = {}", c.l_max));
        }
        let d = &self.detector;
        if d.iters == 0 {
            return err("detector.iters", "must be at least 1".into());
        }
        if !(d.damping > 0.0 && d.damping <= 1.0) {
            return err("detector.damping", "must lie in (0, 1]".into());
        }
        if !(d.tol >= 0.0 && d.tol.is_finite()) {
            return err("detector.tol", "must be a non-negative number".into());
        }
        let s = &self.sweep;
        if s.snr_db.is_empty() || s.snr_db.iter().any(|v| !v.is_finite()) {
            return err("sweep.snr_db", "needs at least one finite SNR value".into());
        }
        if s.frames == 0 {
            return err("sweep.frames", "must be at least 1".into());
        }
        if s.schemes.is_empty() {
            return err("sweep.schemes", "needs at least one scheme".into());
        }
        let mut labels = std::collections::BTreeSet::new();
        for sc in &s.schemes {
            if sc.label.is_empty() || !sc.label.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch)) {
                return err("sweep.schemes.label", format!("label {:?} must be non-empty [A-Za-z0-9._-]", sc.label));
            }
            if !labels.insert(sc.label.clone()) {
                return err("sweep.schemes.label", format!("duplicate label {:?}", sc.label));
            }
            match sc.kind {
                SchemeName::Dd => {
                    let (tw, fw) = (sc.time.unwrap_or(WindowConf::RECT), sc.freq.unwrap_or(WindowConf::RECT));
                    check_window("sweep.schemes.time", &tw)?;
                    check_window("sweep.schemes.freq", &fw)?;
                    if let Err(e) = self.basis_config(tw, fw) {
                        return err("sweep.schemes", format!("{}: {e}", sc.label));
                    }
                }
                SchemeName::Ofdm => {
                    if sc.time.is_some() || sc.freq.is_some() {
                        return err("sweep.schemes", format!("{}: OFDM takes no windows", sc.label));
                    }
                    if self.modem.cp_len.div_ceil(g.n) > g.m {
                        return err("modem.cp_len", "per-symbol OFDM CP exceeds M".into());
                    }
                }
            }
        }
        let p = &self.psd;
        if let Err(e) = DDGrid::new(p.m, p.n, g.t).and_then(|x| x.with_osr(p.osr)) {
            return err("psd", e.to_string());
        }
        if p.frames == 0 {
            return err("psd.frames", "must be at least 1".into());
        }
        if p.nfft < 2 || p.overlap >= p.nfft {
            return err("psd.overlap", "need nfft >= 2 and overlap < nfft".into());
        }
        let stream = (p.frames * (p.m * p.n + self.modem.cp_len) + p.m * p.n) * p.osr;
        if stream < p.nfft {
            return err("psd.nfft", format!("longer than the {stream}-sample stream"));
        }
        for cv in &p.curves {
            check_window("psd.curves.window", &cv.window)?;
            if let Err(e) = self.spectrum_config().grid.validate().and_then(|_| {
                let sg = self.spectrum_config().grid;
                BasisConfig::new(sg.m, sg.n, sg.t, sg.osr, cv.window.kind(), cv.window.kind()).map(|_| ())
            }) {
                return err("psd.curves", format!("{}: {e}", cv.label));
            }
        }
        let a = &self.ambiguity;
        if a.tau_points == 0 || a.nu_points == 0 {
            return err("ambiguity.tau_points", "axes need at least one point".into());
        }
        if !(a.tau_extent > 0.0 && a.nu_extent > 0.0) {
            return err("ambiguity.tau_extent", "extents must be positive".into());
        }
        let b = &self.basis;
        if b.l >= g.m || b.k >= g.n {
            return err("basis.l", format!("(l, k) must lie in {}x{}", g.m, g.n));
        }
        if b.replicas == 0 {
            return err("basis.replicas", "must be at least 1".into());
        }
        if self.outputs.dir.is_empty() {
            return err("outputs.dir", "must not be empty".into());
        }
        Ok(())
    }

    pub fn dd_grid(&self) -> ddcomm::Result<DDGrid> {
        DDGrid::new(self.grid.m, self.grid.n, self.grid.t)?.with_osr(self.grid.osr)
    }

    pub fn basis_config(&self, tw: WindowConf, fw: WindowConf) -> ddcomm::Result<BasisConfig> {
        let g = &self.grid;
        BasisConfig::new(g.m, g.n, g.t, g.osr, tw.kind(), fw.kind())
    }

    /// Basis built from the `windows` section.
    pub fn basis(&self) -> ddcomm::Result<BasisConfig> {
        self.basis_config(self.windows.time, self.windows.freq)
    }

    pub fn schemes(&self) -> Vec<SchemeSpec> {
        self.sweep
            .schemes
            .iter()
            .map(|s| SchemeSpec {
                label: s.label.clone(),
                kind: match s.kind {
                    SchemeName::Dd => SchemeKind::Dd {
                        time: s.time.unwrap_or(WindowConf::RECT).kind(),
                        freq: s.freq.unwrap_or(WindowConf::RECT).kind(),
                    },
                    SchemeName::Ofdm => SchemeKind::Ofdm,
                },
            })
            .collect()
    }

    pub fn link_config(&self, threads: usize) -> LinkConfig {
        LinkConfig {
            grid: self.dd_grid().expect("validated"),
            cp_len: self.modem.cp_len,
            normalize: self.modem.normalize,
            paths: self.channel.paths,
            l_max: self.channel.l_max,
            k_max: self.channel.k_max,
            fractional: self.channel.fractional,
            detector: match self.detector.kind {
                DetectorName::CrossDomain => DetectorKind::CrossDomain,
                DetectorName::Lmmse => DetectorKind::Lmmse,
            },
            iterative: IterativeConfig { max_iters: self.detector.iters, damping: self.detector.damping, tol: self.detector.tol },
            snr_db: self.sweep.snr_db.clone(),
            frames: self.sweep.frames,
            seed: self.channel.seed,
            threads,
        }
    }

    pub fn spectrum_config(&self) -> SpectrumConfig {
        let p = &self.psd;
        SpectrumConfig {
            grid: DDGrid::new(p.m, p.n, self.grid.t).and_then(|g| g.with_osr(p.osr)).expect("validated"),
            cp_len: self.modem.cp_len,
            frames: p.frames,
            nfft: p.nfft,
            overlap: p.overlap,
            seed: self.channel.seed,
        }
    }
}

fn check_window(key: &str, w: &WindowConf) -> Result<(), (String, String)> {
    match w.kind {
        WindowName::Rrc if !(0.0..1.0).contains(&w.beta) => {
            Err((format!("{key}.beta"), format!("roll-off {} outside [0, 1)", w.beta)))
        }
        WindowName::Rect | WindowName::Cosine if w.beta != 0.0 => {
            Err((format!("{key}.beta"), "only RRC windows take a roll-off".into()))
        }
        _ => Ok(()),
    }
}

fn toml_message(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

/// Best-effort line of a dotted key in TOML or JSON text: the first line
/// inside the key's top-level section that assigns the last path component
/// (and the middle component, for inline tables). Falls back to the section
/// header.
pub fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let parts: Vec<&str> = key.split('.').collect();
    let sec = parts[0];
    let leaf = *parts.last()?;
    let mid = (parts.len() >= 3).then(|| parts[1]);
    let json = text.trim_start().starts_with('{');
    let mut in_section = false;
    let mut header_mid = false;
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if !json && line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']' || c == ' ');
            in_section = name == sec || name.starts_with(&format!("{sec}."));
            header_mid = mid.is_some_and(|m| name == format!("{sec}.{m}"));
            if in_section && section_line.is_none() {
                section_line = Some(i + 1);
            }
            continue;
        }
        if json && assigns(line, sec) {
            in_section = true;
            section_line.get_or_insert(i + 1);
            if parts.len() == 1 {
                return section_line;
            }
        }
        if in_section && parts.len() > 1 && assigns_anywhere(line, leaf) {
            match mid {
                Some(m) if !header_mid && !assigns_anywhere(line, m) => {}
                _ => return Some(i + 1),
            }
        }
    }
    section_line
}

/// `line` starts by assigning `key` (`key =`, `"key":`).
fn assigns(line: &str, key: &str) -> bool {
    let l = line.trim_start_matches(['"', '{', ' ']);
    l.strip_prefix(key).is_some_and(|r| r.trim_start_matches('"').trim_start().starts_with(['=', ':']))
}

fn assigns_anywhere(line: &str, key: &str) -> bool {
    line.match_indices(key).any(|(i, _)| {
        let before = line[..i].chars().last();
        let boundary = before.is_none_or(|c| matches!(c, ' ' | '{' | ',' | '"'));
        boundary && assigns(&line[i..], key)
    })
}
