//! Interaction window, pump envelopes and the dimensionless run parameters.
//!
//! Positions are in mm, times in ps, couplings in (mm ps)^-1/2. The time axis
//! is the frame co-moving with the scattered pulse, so a pump travelling at a
//! different group velocity appears as an envelope whose centre drifts by
//! `delta_beta` ps per mm of propagation.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-centred sampling of the rectangle `0 < z < L`, `-T < t < T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    length: f64,
    half_window: f64,
    nz: usize,
    nt: usize,
}

impl SimulationGrid {
    pub fn new(length: f64, half_window: f64, nz: usize, nt: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!(
                "medium length must be positive, got {length}"
            )));
        }
        if !(half_window.is_finite() && half_window > 0.0) {
            return Err(Error::invalid(format!(
                "half time-window must be positive, got {half_window}"
            )));
        }
        if nz < 2 || nt < 2 {
            return Err(Error::invalid(format!(
                "grid needs at least 2 points per axis, got nz={nz}, nt={nt}"
            )));
        }
        Ok(Self {
            length,
            half_window,
            nz,
            nt,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn half_window(&self) -> f64 {
        self.half_window
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dz(&self) -> f64 {
        self.length / self.nz as f64
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.half_window / self.nt as f64
    }

    /// Midpoint of the i-th spatial cell.
    pub fn z(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dz()
    }

    /// Midpoint of the j-th temporal cell.
    pub fn t(&self, j: usize) -> f64 {
        -self.half_window + (j as f64 + 0.5) * self.dt()
    }

    pub fn z_samples(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.z(i)).collect()
    }

    pub fn t_samples(&self) -> Vec<f64> {
        (0..self.nt).map(|j| self.t(j)).collect()
    }

    /// Same length and spatial sampling, so atomic mode vectors transfer as-is.
    pub fn shares_z_axis(&self, other: &SimulationGrid) -> bool {
        self.nz == other.nz && (self.length - other.length).abs() <= 1e-12 * self.length
    }
}

/// Sizes the window as `T = tau_p (margin + |L delta_beta / tau_p| / 2)` so the
/// pump has decayed at both time edges for every z.
pub fn make_grid(
    length: f64,
    tau_p: f64,
    delta_beta: f64,
    nz: usize,
    nt: usize,
    margin: f64,
) -> Result<SimulationGrid> {
    if !(tau_p.is_finite() && tau_p > 0.0) {
        return Err(Error::invalid(format!(
            "pump duration must be positive, got {tau_p}"
        )));
    }
    if !delta_beta.is_finite() {
        return Err(Error::invalid("delta_beta must be finite"));
    }
    if !(margin.is_finite() && margin >= 2.0) {
        return Err(Error::invalid(format!(
            "window margin must be >= 2, got {margin}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::invalid(format!(
            "medium length must be positive, got {length}"
        )));
    }
    let walkoff = (length * delta_beta / tau_p).abs();
    SimulationGrid::new(length, tau_p * (margin + walkoff / 2.0), nz, nt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpShape {
    Gaussian,
    Square,
}

impl std::str::FromStr for PumpShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(PumpShape::Gaussian),
            "square" => Ok(PumpShape::Square),
            other => Err(Error::invalid(format!(
                "unknown pump shape '{other}' (expected gaussian or square)"
            ))),
        }
    }
}

impl std::fmt::Display for PumpShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PumpShape::Gaussian => "gaussian",
            PumpShape::Square => "square",
        })
    }
}

/// Pump pulse of one pass. `tau_p` is the intensity FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    pub tau_p: f64,
    pub delta_beta: f64,
    pub g0: f64,
    pub shape: PumpShape,
}

impl PumpConfig {
    pub fn new(tau_p: f64, delta_beta: f64, g0: f64, shape: PumpShape) -> Result<Self> {
        let cfg = Self {
            tau_p,
            delta_beta,
            g0,
            shape,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gaussian(tau_p: f64, delta_beta: f64, g0: f64) -> Result<Self> {
        Self::new(tau_p, delta_beta, g0, PumpShape::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_p.is_finite() && self.tau_p > 0.0) {
            return Err(Error::invalid(format!(
                "pump duration must be positive, got {}",
                self.tau_p
            )));
        }
        if !(self.g0.is_finite() && self.g0 >= 0.0) {
            return Err(Error::invalid(format!(
                "coupling must be non-negative, got {}",
                self.g0
            )));
        }
        if !self.delta_beta.is_finite() {
            return Err(Error::invalid("delta_beta must be finite"));
        }
        Ok(())
    }

    pub fn with_g0(self, g0: f64) -> Self {
        Self { g0, ..self }
    }

    /// Envelope `A_p(z, t)` for a medium of length `length`; unit peak.
    pub fn envelope(&self, length: f64, z: f64, t: f64) -> Result<Complex64> {
        if !(0.0..=length).contains(&z) {
            return Err(Error::invalid(format!(
                "z = {z} lies outside the medium [0, {length}]"
            )));
        }
        Ok(Complex64::new(self.envelope_unchecked(length, z, t), 0.0))
    }

    pub(crate) fn envelope_unchecked(&self, length: f64, z: f64, t: f64) -> f64 {
        let offset = t - (z - 0.5 * length) * self.delta_beta;
        match self.shape {
            PumpShape::Gaussian => {
                let x = offset / self.tau_p;
                (-2.0 * LN_2 * x * x).exp()
            }
            PumpShape::Square => {
                if offset.abs() <= 0.5 * self.tau_p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn dimensionless(&self, length: f64) -> DimensionlessParams {
        dimensionless(self, length)
    }
}

/// Free function form of [`PumpConfig::envelope`].
pub fn pump_envelope(cfg: &PumpConfig, length: f64, z: f64, t: f64) -> Result<Complex64> {
    cfg.envelope(length, z, t)
}

/// Squeezing strength and walkoff, the only two numbers a run depends on
/// once the pump shape is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub gamma: f64,
    pub delta: f64,
}

pub fn dimensionless(cfg: &PumpConfig, length: f64) -> DimensionlessParams {
    DimensionlessParams {
        gamma: cfg.g0 * (length * cfg.tau_p).sqrt(),
        delta: length * cfg.delta_beta / cfg.tau_p,
    }
}
