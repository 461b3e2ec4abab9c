use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while loading inputs or evaluating a link.
///
/// Variants split into two families: configuration problems (bad files, bad
/// parameters) and domain problems (a well-formed input that lands outside
/// the physical region of a formula). [`Error::is_config`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {row}: {message}")]
    InvalidSample { row: usize, message: String },

    #[error("unknown radiance unit tag `{0}` (expected W_m2_sr_nm or W_cm2_sr_um)")]
    UnknownUnit(String),

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("wavelength {wavelength} nm outside tabulated range [{min}, {max}] nm")]
    OutOfRange { wavelength: f64, min: f64, max: f64 },

    #[error("negative altitude {0} m")]
    NegativeAltitude(f64),

    #[error("focal length required for physical spot diameters")]
    MissingFocalLength,

    #[error("background probability {0} exceeds 1; radiance/FOV combination is nonphysical")]
    Saturated(f64),

    #[error("QBER undefined: no clicks (zero gain)")]
    UndefinedQber,

    #[error("decoy-state estimate degenerate: single-photon yield {0} after clamping")]
    DegenerateDecoy(f64),

    #[error("{0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input files or parameters.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::InvalidSample { .. }
                | Error::UnknownUnit(_)
                | Error::InvalidParameter { .. }
                | Error::Scenario(_)
                | Error::MissingFocalLength
        )
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && !value.is_nan() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be > 0, got {value}")))
    }
}

pub(crate) fn ensure_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must lie in [0, 1], got {value}"),
        ))
    }
}
