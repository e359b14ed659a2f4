//! Physical and numerical constants of the reduced energy.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Gl2dError, Result};

/// Interface width `epsilon`, Ginzburg-Landau parameter `kappa`, external field
/// `b_ext`, and the phase stiffness `alpha = 1 / (kappa * epsilon^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub epsilon: f64,
    pub kappa: f64,
    pub b_ext: f64,
    pub alpha: f64,
}

impl Params {
    /// Validates `epsilon > 0`, `0 < kappa < 1/sqrt(2)` and `0 <= b_ext < kappa/sqrt(2)`.
    pub fn new(epsilon: f64, kappa: f64, b_ext: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Gl2dError::Validation(format!(
                "epsilon must be > 0 (got {epsilon})"
            )));
        }
        if !(kappa > 0.0) {
            return Err(Gl2dError::Validation(format!(
                "kappa must be > 0 (got {kappa})"
            )));
        }
        if kappa >= 1.0 / SQRT_2 {
            return Err(Gl2dError::Validation(format!(
                "kappa >= 1/sqrt(2) (got {kappa}); only type-I superconductors are supported"
            )));
        }
        if !(b_ext >= 0.0) {
            return Err(Gl2dError::Validation(format!(
                "b_ext must be >= 0 (got {b_ext})"
            )));
        }
        if b_ext >= kappa / SQRT_2 {
            return Err(Gl2dError::Validation(format!(
                "b_ext >= kappa/sqrt(2) (got b_ext = {b_ext}, kappa/sqrt(2) = {})",
                kappa / SQRT_2
            )));
        }
        Ok(Params {
            epsilon,
            kappa,
            b_ext,
            alpha: 1.0 / (kappa * epsilon * epsilon),
        })
    }

    /// Net flux through the unit torus, `b_ext / kappa`.
    pub fn flux(&self) -> f64 {
        self.b_ext / self.kappa
    }

    /// Same `kappa` and `b_ext` at a new interface width.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Params::new(epsilon, self.kappa, self.b_ext)
    }
}

/// Shorthand for [`Params::new`].
pub fn make_params(epsilon: f64, kappa: f64, b_ext: f64) -> Result<Params> {
    Params::new(epsilon, kappa, b_ext)
}

/// Interface width at which `b_ext / (kappa^2 epsilon^2) = 2 pi m`.
pub fn quantized_epsilon(kappa: f64, b_ext: f64, m: u64) -> f64 {
    (b_ext / (2.0 * PI * m as f64 * kappa * kappa)).sqrt()
}

/// Snaps `epsilon_hint` to the nearest `epsilon` satisfying the flux
/// quantization `b_ext / (kappa^2 epsilon^2) in 2 pi Z`, returning it with its
/// integer `m >= 1`.
pub fn admissible_epsilons(kappa: f64, b_ext: f64, epsilon_hint: f64) -> Result<(f64, u64)> {
    if b_ext == 0.0 {
        return Err(Gl2dError::NoQuantization);
    }
    // range checks on kappa / b_ext
    Params::new(1.0, kappa, b_ext)?;
    if !(epsilon_hint > 0.0) {
        return Err(Gl2dError::Validation(format!(
            "epsilon_hint must be > 0 (got {epsilon_hint})"
        )));
    }
    let m_real = b_ext / (2.0 * PI * kappa * kappa * epsilon_hint * epsilon_hint);
    let lo = (m_real.floor() as u64).max(1);
    let hi = (m_real.ceil() as u64).max(1);
    let (e_lo, e_hi) = (
        quantized_epsilon(kappa, b_ext, lo),
        quantized_epsilon(kappa, b_ext, hi),
    );
    if (e_lo - epsilon_hint).abs() <= (e_hi - epsilon_hint).abs() {
        Ok((e_lo, lo))
    } else {
        Ok((e_hi, hi))
    }
}

/// Converts a sample of side `sample_side` (in coherence-length units) into
/// the reduced parameters, `epsilon = 1 / (kappa L)`.
pub fn nondimensionalize(kappa: f64, sample_side: f64, b_ext: f64) -> Result<Params> {
    if !(sample_side > 0.0) {
        return Err(Gl2dError::Validation(format!(
            "sample side L must be > 0 (got {sample_side})"
        )));
    }
    Params::new(1.0 / (kappa * sample_side), kappa, b_ext)
}
