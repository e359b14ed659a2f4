use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Gl2dError {
    /// A parameter is out of its admissible range.
    #[error("validation error: {0}")]
    Validation(String),

    /// `b_ext = 0`: every epsilon is admissible.
    #[error("no quantization constraint (b_ext = 0); skip epsilon snapping")]
    NoQuantization,

    #[error("block flux out of range: {flux} not in ({lo}, {hi}]")]
    BlockFluxOutOfRange { flux: f64, lo: f64, hi: f64 },

    /// The edge decomposition cannot be built at this square side.
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("flux offset root not bracketed for component {component}: h(lo) = {h_lo}, h(hi) = {h_hi}, target = {target}; use a smaller epsilon")]
    NotBracketed {
        component: usize,
        h_lo: f64,
        h_hi: f64,
        target: f64,
    },

    #[error("quantization violated: worst loop defect {defect_over_2pi} (in units of 2*pi) at link {link:?}, enclosed components {enclosed:?}")]
    QuantizationViolated {
        /// Distance of the worst defect to the nearest integer, in units of 2π.
        defect_over_2pi: f64,
        link: (usize, usize),
        enclosed: Vec<usize>,
    },

    #[error("solver did not converge: last gradient norm {grad_norm}")]
    NonConvergence { grad_norm: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Gl2dError {
    /// `true` for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Gl2dError::NotBracketed { .. }
                | Gl2dError::QuantizationViolated { .. }
                | Gl2dError::NonConvergence { .. }
                | Gl2dError::BlockFluxOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Gl2dError>;
