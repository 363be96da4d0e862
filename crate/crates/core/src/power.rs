//! Parametric feeder: amplitude-switched sinusoids per phase.
//!
//! Sample `n` of a channel is `X_peak * sin(2π f n / Fs + φ)`, where the peak
//! depends on fault and breaker state at the sampling instant. Fault inception
//! therefore snaps to the first sampling instant at or after the configured
//! time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("RMS window has {actual} samples, expected one cycle of {expected}")]
    WindowLength { expected: usize, actual: usize },
    #[error("invalid feeder configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct FeederConfig {
    pub frequency_hz: u32,
    pub sampling_rate: u32,
    /// Per-phase current peak in normal operation, amperes.
    pub normal_current_peak_a: f64,
    /// Per-phase (line-to-ground) voltage peak, volts.
    pub nominal_voltage_peak_v: f64,
    pub phase_angles_rad: [f64; 3],
}

impl Default for FeederConfig {
    fn default() -> Self {
        FeederConfig {
            frequency_hz: 60,
            sampling_rate: 4800,
            // 223 A RMS
            normal_current_peak_a: 315.37,
            // 13.8 kV line-to-line
            nominal_voltage_peak_v: 11_267.65,
            phase_angles_rad: [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0],
        }
    }
}

impl FeederConfig {
    pub fn validate(&self) -> Result<(), PowerError> {
        if self.sampling_rate == 0 || self.frequency_hz == 0 {
            return Err(PowerError::Config(
                "frequency and sampling rate must be positive".into(),
            ));
        }
        if !self.sampling_rate.is_multiple_of(self.frequency_hz) {
            return Err(PowerError::Config(format!(
                "sampling rate {} is not a multiple of {} Hz",
                self.sampling_rate, self.frequency_hz
            )));
        }
        let bad = |x: f64| x.is_nan() || x < 0.0;
        if bad(self.normal_current_peak_a) || bad(self.nominal_voltage_peak_v) {
            return Err(PowerError::Config("peaks must be non-negative".into()));
        }
        Ok(())
    }

    pub fn samples_per_cycle(&self) -> usize {
        (self.sampling_rate / self.frequency_hz) as usize
    }

    /// Sampling instant of sample `n`: `floor(n * 1e9 / Fs)` ns.
    pub fn sample_time(&self, n: u64) -> SimTime {
        SimTime((n as u128 * 1_000_000_000 / self.sampling_rate as u128) as u64)
    }

    /// Index of the first sampling instant at or after `t`.
    pub fn sample_index_at_or_after(&self, t: SimTime) -> u64 {
        let fs = self.sampling_rate as u128;
        let n = (t.0 as u128 * fs).div_ceil(1_000_000_000) as u64;
        // floor() in sample_time can land one instant early; step forward.
        if self.sample_time(n) < t {
            n + 1
        } else {
            n
        }
    }

    /// Phase of sample `n` within its cycle, as a fraction in [0, 1).
    fn cycle_fraction(&self, n: u64) -> f64 {
        let fs = self.sampling_rate as u64;
        ((self.frequency_hz as u64 * (n % fs)) % fs) as f64 / fs as f64
    }

    /// `peak * sin(2π f n / Fs + φ)`, reducing `n` exactly before the sine.
    pub fn waveform(&self, peak: f64, n: u64, phi: f64) -> f64 {
        peak * (2.0 * PI * self.cycle_fraction(n) + phi).sin()
    }
}

/// Line-to-ground fault. Only the faulted phase carries fault current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FaultSpec {
    #[serde(default = "default_fault_phase")]
    pub phase: Phase,
    pub inception_ns: SimTime,
    pub fault_current_peak_a: f64,
    /// Fault extinguished at this time (e.g. after the breaker opened).
    #[serde(default)]
    pub clear_ns: Option<SimTime>,
}

fn default_fault_phase() -> Phase {
    Phase::A
}

impl FaultSpec {
    fn active_at(&self, t: SimTime) -> bool {
        t >= self.inception_ns && self.clear_ns.is_none_or(|c| t < c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BreakerState {
    pub closed: bool,
    pub last_change_at: SimTime,
}

impl Default for BreakerState {
    fn default() -> Self {
        BreakerState {
            closed: true,
            last_change_at: SimTime::ZERO,
        }
    }
}

impl BreakerState {
    fn conducting_at(&self, t: SimTime) -> bool {
        self.closed || t < self.last_change_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub current_a: f64,
    pub voltage_v: f64,
}

/// Sample `n` of one phase given fault and breaker state.
pub fn sample(
    config: &FeederConfig,
    faults: &[FaultSpec],
    breaker: &BreakerState,
    n: u64,
    phase: Phase,
) -> PhaseSample {
    let t = config.sample_time(n);
    let phi = config.phase_angles_rad[phase.index()];
    let peak = if !breaker.conducting_at(t) {
        0.0
    } else {
        faults
            .iter()
            .filter(|f| f.phase == phase && f.active_at(t))
            .map(|f| f.fault_current_peak_a)
            .fold(config.normal_current_peak_a, f64::max)
    };
    PhaseSample {
        current_a: config.waveform(peak, n, phi),
        voltage_v: config.waveform(config.nominal_voltage_peak_v, n, phi),
    }
}

/// Root mean square over exactly one cycle of samples.
pub fn rms(window: &[f64], samples_per_cycle: usize) -> Result<f64, PowerError> {
    if window.len() != samples_per_cycle || samples_per_cycle == 0 {
        return Err(PowerError::WindowLength {
            expected: samples_per_cycle,
            actual: window.len(),
        });
    }
    let sum: f64 = window.iter().map(|x| x * x).sum();
    Ok((sum / window.len() as f64).sqrt())
}

/// Physical layer of one scenario: feeder, faults and the breaker XCBR1.
#[derive(Debug, Clone)]
pub struct Plant {
    pub feeder: FeederConfig,
    pub faults: Vec<FaultSpec>,
    pub breaker: BreakerState,
    /// (time, closed) after every state change, oldest first.
    pub breaker_history: Vec<(SimTime, bool)>,
}

impl Plant {
    pub fn new(feeder: FeederConfig, faults: Vec<FaultSpec>) -> Self {
        Plant {
            feeder,
            faults,
            breaker: BreakerState::default(),
            breaker_history: Vec::new(),
        }
    }

    fn breaker_at(&self, t: SimTime) -> BreakerState {
        let mut state = BreakerState::default();
        for &(at, closed) in &self.breaker_history {
            if at > t {
                break;
            }
            state = BreakerState {
                closed,
                last_change_at: at,
            };
        }
        state
    }

    /// Currents (Ia, Ib, Ic, In) and voltages (Va, Vb, Vc, Vn) of sample `n`.
    pub fn channels(&self, n: u64) -> ([f64; 4], [f64; 4]) {
        let breaker = self.breaker_at(self.feeder.sample_time(n));
        let mut i = [0.0; 4];
        let mut v = [0.0; 4];
        for p in Phase::ALL {
            let s = sample(&self.feeder, &self.faults, &breaker, n, p);
            i[p.index()] = s.current_a;
            v[p.index()] = s.voltage_v;
        }
        i[3] = i[0] + i[1] + i[2];
        v[3] = v[0] + v[1] + v[2];
        (i, v)
    }

    /// Returns whether the breaker changed state.
    pub fn set_breaker(&mut self, closed: bool, at: SimTime) -> bool {
        if self.breaker.closed == closed {
            return false;
        }
        self.breaker = BreakerState {
            closed,
            last_change_at: at,
        };
        self.breaker_history.push((at, closed));
        true
    }

    /// True feeder RMS of the worst phase over the cycle ending just before `t`.
    pub fn feeder_rms_before(&self, t: SimTime) -> f64 {
        let spc = self.feeder.samples_per_cycle() as u64;
        let end = self.feeder.sample_index_at_or_after(t);
        let start = end.saturating_sub(spc);
        if end - start < spc {
            return 0.0;
        }
        let mut per_phase = [Vec::new(), Vec::new(), Vec::new()];
        for n in start..end {
            let (i, _) = self.channels(n);
            for p in 0..3 {
                per_phase[p].push(i[p]);
            }
        }
        per_phase
            .iter()
            .map(|w| rms(w, spc as usize).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }
}
