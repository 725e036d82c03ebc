//! CP-OFDM baseline sharing the lattice, pulse shaping and channel model of
//! the DD modem.
//!
//! Symbol `n` carries `X[m, n]` on subcarrier `m` (a [`DDFrame`] with
//! `l -> subcarrier`, `k -> OFDM symbol`). Each symbol gets its own CP of
//! `cp` lattice samples, so the frame is `N (M + cp)` samples long.

use rustfft::FftPlanner;

use crate::channel::DDChannel;
use crate::modem::{CpLayout, EffectiveChannel, Modem, SymbolTransform};
use crate::pulses::{WindowDomain, WindowKind, WindowSpec};
use crate::zak::{DDFrame, DDGrid, TimeSignal};
use crate::{Error, Result, C64};

/// Per-symbol unitary DFT: `x[n M + t] = M^{-1/2} sum_m X[m, n] e^{j 2pi m t/M}`.
#[derive(Debug, Clone, Copy)]
pub struct OfdmDomain(pub DDGrid);

impl OfdmDomain {
    fn run(&self, v: &[C64], inverse: bool) -> Vec<C64> {
        let m = self.0.m;
        let mut planner = FftPlanner::new();
        let plan = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
        let mut out = v.to_vec();
        for blk in out.chunks_mut(m) {
            plan.process(blk);
        }
        let s = 1.0 / (m as f64).sqrt();
        out.iter_mut().for_each(|z| *z *= s);
        out
    }
}

impl SymbolTransform for OfdmDomain {
    fn to_symbols(&self, x: &[C64]) -> Vec<C64> {
        self.run(x, false)
    }

    fn to_time(&self, s: &[C64]) -> Vec<C64> {
        self.run(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmConfig {
    pub grid: DDGrid,
    /// CP per OFDM symbol, in lattice samples.
    pub cp: usize,
}

impl OfdmConfig {
    /// Per-symbol CP of `ceil(frame_cp / N)`, the same total overhead as a
    /// frame CP of `frame_cp`.
    pub fn matching_frame_cp(grid: DDGrid, frame_cp: usize) -> Self {
        OfdmConfig { grid, cp: frame_cp.div_ceil(grid.n) }
    }

    pub fn modem(&self) -> Result<Modem> {
        if self.cp > self.grid.m {
            return Err(Error::InvalidParameter(format!("cp {} exceeds M={}", self.cp, self.grid.m)));
        }
        let fw = WindowSpec::rect(WindowDomain::Frequency, self.grid.bandwidth())?;
        Modem::build(self.grid, CpLayout::PerSymbol(self.cp), WindowKind::Rect, fw, true)
    }
}

pub fn ofdm_transmit(x: &DDFrame, cfg: &OfdmConfig) -> Result<TimeSignal> {
    let modem = cfg.modem()?;
    modem.transmit_time(&OfdmDomain(cfg.grid).to_time(x.as_slice()))
}

pub fn ofdm_receive(r: &TimeSignal, cfg: &OfdmConfig) -> Result<DDFrame> {
    let modem = cfg.modem()?;
    let y = modem.receive_time(r)?;
    DDFrame::from_vec(cfg.grid, OfdmDomain(cfg.grid).to_symbols(&y))
}

/// Delays beyond the per-symbol CP are allowed; the resulting inter-symbol
/// interference is part of `H_T`.
pub fn ofdm_effective_channel(cfg: &OfdmConfig, ch: &DDChannel) -> Result<EffectiveChannel> {
    cfg.modem()?.effective_channel(ch, &OfdmDomain(cfg.grid))
}
