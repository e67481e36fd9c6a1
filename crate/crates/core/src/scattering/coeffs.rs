use std::sync::Arc;

use crate::error::{mismatch, Result};
use crate::grid::BoundaryMode;
use crate::scattering::paths::{path_table, PathIndex};

/// Order 0/1/2 coefficients indexed `[input_channel][path][y][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringCoeffs {
    j: u32,
    l: usize,
    input_size: usize,
    boundary: BoundaryMode,
    spatial: usize,
    input_channels: usize,
    paths: Arc<[PathIndex]>,
    data: Vec<f64>,
}

/// Gradient of a scalar with respect to a [`ScatteringCoeffs`]; same layout.
pub type Cotangent = ScatteringCoeffs;

/// Layout description shared by coefficient tensors of one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoeffShape {
    pub j: u32,
    pub l: usize,
    pub input_size: usize,
    pub boundary: BoundaryMode,
    pub spatial: usize,
    pub input_channels: usize,
}

impl CoeffShape {
    pub fn paths(&self) -> usize {
        super::paths::path_count(self.j, self.l)
    }

    pub fn len(&self) -> usize {
        self.input_channels * self.paths() * self.spatial * self.spatial
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ScatteringCoeffs {
    pub fn new(shape: CoeffShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(mismatch(shape.len(), data.len()));
        }
        Ok(ScatteringCoeffs {
            j: shape.j,
            l: shape.l,
            input_size: shape.input_size,
            boundary: shape.boundary,
            spatial: shape.spatial,
            input_channels: shape.input_channels,
            paths: path_table(shape.j, shape.l).into(),
            data,
        })
    }

    pub fn zeros(shape: CoeffShape) -> Self {
        Self::new(shape, vec![0.0; shape.len()]).expect("length matches")
    }

    pub fn shape(&self) -> CoeffShape {
        CoeffShape {
            j: self.j,
            l: self.l,
            input_size: self.input_size,
            boundary: self.boundary,
            spatial: self.spatial,
            input_channels: self.input_channels,
        }
    }

    pub fn scales(&self) -> u32 {
        self.j
    }

    pub fn angles(&self) -> usize {
        self.l
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn spatial(&self) -> usize {
        self.spatial
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn paths(&self) -> &[PathIndex] {
        &self.paths
    }

    /// Channels seen by a downstream model: `input_channels · paths`.
    pub fn channel_count(&self) -> usize {
        self.input_channels * self.paths.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The `spatial²` block of one `(input_channel, path)` pair.
    pub fn block(&self, c: usize, p: usize) -> &[f64] {
        let s2 = self.spatial * self.spatial;
        let start = (c * self.paths.len() + p) * s2;
        &self.data[start..start + s2]
    }

    pub fn block_mut(&mut self, c: usize, p: usize) -> &mut [f64] {
        let s2 = self.spatial * self.spatial;
        let start = (c * self.paths.len() + p) * s2;
        &mut self.data[start..start + s2]
    }

    #[inline]
    pub fn get(&self, c: usize, p: usize, y: usize, x: usize) -> f64 {
        self.block(c, p)[y * self.spatial + x]
    }

    pub fn same_shape(&self, other: &ScatteringCoeffs) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, other: &ScatteringCoeffs) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(mismatch(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(mismatch(self.data.len(), data.len()));
        }
        Ok(ScatteringCoeffs {
            data,
            ..self.clone()
        })
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Norm with each cell weighted by its area on the input grid,
    /// `2^J · |S|₂`, comparable with the input's `|x|₂`.
    pub fn grid_norm(&self) -> f64 {
        (1u64 << self.scales()) as f64 * self.norm()
    }

    pub fn dot(&self, other: &ScatteringCoeffs) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self - other`, shapes must agree.
    pub fn sub(&self, other: &ScatteringCoeffs) -> Result<Self> {
        self.check_shape(other)?;
        self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn scaled(&self, a: f64) -> Self {
        ScatteringCoeffs {
            data: self.data.iter().map(|v| v * a).collect(),
            ..self.clone()
        }
    }

    /// Keeps the `count x count` window starting at cell `(start, start)`.
    pub(crate) fn crop(&self, start: usize, count: usize) -> Self {
        let mut data = Vec::with_capacity(self.input_channels * self.paths.len() * count * count);
        for c in 0..self.input_channels {
            for p in 0..self.paths.len() {
                let b = self.block(c, p);
                for y in start..start + count {
                    data.extend_from_slice(
                        &b[y * self.spatial + start..y * self.spatial + start + count],
                    );
                }
            }
        }
        ScatteringCoeffs {
            spatial: count,
            data,
            ..self.clone()
        }
    }

    /// Circular shift of every block by `(dy, dx)` cells.
    pub fn roll(&self, dy: usize, dx: usize) -> Self {
        let s = self.spatial;
        let mut out = self.clone();
        for c in 0..self.input_channels {
            for p in 0..self.paths.len() {
                let src = self.block(c, p).to_vec();
                let dst = out.block_mut(c, p);
                for y in 0..s {
                    for x in 0..s {
                        dst[((y + dy) % s) * s + (x + dx) % s] = src[y * s + x];
                    }
                }
            }
        }
        out
    }
}
