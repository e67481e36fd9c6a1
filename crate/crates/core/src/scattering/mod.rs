//! Order-2 windowed scattering: path enumeration, the FFT cascade, a direct
//! spatial reference implementation and memory accounting.

mod coeffs;
mod engine;
mod memory;
mod oracle;
mod paths;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::filterbank::MorletParams;
use crate::grid::{BoundaryMode, Precision};

pub use coeffs::{CoeffShape, Cotangent, ScatteringCoeffs};
pub(crate) use engine::inv_pow4;
pub use engine::{forward, forward_batch, plan_for, Scattering, Transform, Workspace};
pub use memory::{memory_report, tree_coeffs, MemoryReport};
pub use oracle::forward_oracle;
pub use paths::{path_count, path_table, PathIndex};

/// Where intermediate moduli are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CascadeMode {
    /// Each branch lives at the resolution of its own scale.
    #[default]
    Subsampled,
    /// Every intermediate stays on the full grid; only the output is
    /// subsampled. Slower, free of intermediate aliasing.
    FullResolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub j: u32,
    pub l: usize,
    pub boundary: BoundaryMode,
    pub precision: Precision,
    pub params: MorletParams,
    pub mode: CascadeMode,
}

impl ScatteringConfig {
    /// Reflect boundary, single precision, default Morlet design.
    pub fn new(j: u32, l: usize) -> Self {
        ScatteringConfig {
            j,
            l,
            boundary: BoundaryMode::Reflect,
            precision: Precision::Single,
            params: MorletParams::for_angles(l),
            mode: CascadeMode::Subsampled,
        }
    }

    pub fn with_boundary(mut self, boundary: BoundaryMode) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_mode(mut self, mode: CascadeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.j < 1 || self.l < 1 {
            return Err(invalid(format!(
                "need J >= 1 and L >= 1, got J={} L={}",
                self.j, self.l
            )));
        }
        if self.j > 12 {
            return Err(invalid(format!("J={} is too large", self.j)));
        }
        self.params.validate()
    }

    pub fn path_count(&self) -> usize {
        path_count(self.j, self.l)
    }
}
