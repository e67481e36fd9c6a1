//! Order-2 windowed scattering transform on 2-D images, with its exact
//! adjoint, reconstruction from coefficients, linear probes and the
//! angular-frequency analysis of trained weights.

pub mod adjoint;
pub mod bench;
pub mod classify;
pub mod error;
pub mod filterbank;
pub mod format;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod real;
pub mod recon;
pub mod scattering;
pub mod synth;
pub mod verify;

pub use adjoint::{backward, forward_with_tape, recon_loss_grad, Tape};
pub use classify::{LinearModel, TrainConfig};
pub use error::{Error, Result};
pub use filterbank::{FilterBank, MorletParams};
pub use grid::{BoundaryMode, ColorSpace, ImageGrid, Precision};
pub use recon::{reconstruct, ReconConfig};
pub use scattering::{
    forward, forward_batch, forward_oracle, CascadeMode, CoeffShape, Cotangent, PathIndex,
    ScatteringCoeffs, ScatteringConfig, Transform,
};
