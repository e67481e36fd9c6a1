use crate::error::Result;
use crate::grid::{BoundaryMode, ColorSpace, ImageGrid};
use crate::scattering::engine::Transform;
use crate::scattering::ScatteringConfig;

/// Storage of the level-order (tree) evaluation versus the measured arena of
/// the infix traversal, both in complex slots for one single-channel image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryReport {
    pub n: usize,
    pub tree_coeffs: usize,
    pub infix_peak: usize,
}

/// Intermediates stored by a wavelet layer whose inputs live at resolution
/// `2^from` and whose outputs are wavelets at scales `from+offset..J`, each
/// subsampled by its own scale, plus one low-pass output at `2^J`.
fn layer_storage(n: usize, j: u32, l: usize, first_scale: u32) -> usize {
    let n2 = n * n;
    let wavelets: usize = (first_scale..j).map(|s| l * (n2 >> (2 * s))).sum();
    wavelets + (n2 >> (2 * j))
}

/// Coefficients held at once by the tree implementation: the first layer,
/// the second layer grown from each first-order branch, and the averaged
/// second-order outputs.
pub fn tree_coeffs(j: u32, l: usize, n: usize) -> usize {
    let first = layer_storage(n, j, l, 0);
    let second: usize = (0..j).map(|j1| l * layer_storage(n, j, l, j1 + 1)).sum();
    let averaged = (j as usize * (j as usize).saturating_sub(1) / 2) * l * l * ((n * n) >> (2 * j));
    first + second + averaged
}

/// Runs the engine on an `n x n` periodic zero image to measure its arena.
pub fn memory_report(cfg: &ScatteringConfig, n: usize) -> Result<MemoryReport> {
    let cfg = ScatteringConfig {
        boundary: BoundaryMode::Periodic,
        ..*cfg
    };
    let (transform, _) = Transform::for_input(&cfg, n)?;
    let img = ImageGrid::zeros(n, n, ColorSpace::Gray);
    let (_, infix_peak) = transform.forward_instrumented(&img)?;
    Ok(MemoryReport {
        n,
        tree_coeffs: tree_coeffs(cfg.j, cfg.l, n),
        infix_peak,
    })
}
