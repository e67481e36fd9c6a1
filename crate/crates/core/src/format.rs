//! Binary containers: `SCT1` for coefficients and `SLM1` for linear models.
//!
//! Both are a 4-byte magic, `u32` version, `u32` JSON header length, the JSON
//! header, then little-endian `f32` payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{LinearModel, ModelMeta};
use crate::error::{Error, Result};
use crate::filterbank::MorletParams;
use crate::grid::BoundaryMode;
use crate::scattering::{path_table, CoeffShape, PathIndex, ScatteringCoeffs};

pub const FORMAT_VERSION: u32 = 1;

fn format_error(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}

fn frame(magic: &[u8; 4], header: &[u8], payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + header.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn unframe<'a>(
    name: &'static str,
    magic: &[u8; 4],
    bytes: &'a [u8],
) -> Result<(&'a [u8], Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(format_error(name, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_error(name, format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[12..];
    if rest.len() < len {
        return Err(format_error(name, "truncated header"));
    }
    let (header, payload) = rest.split_at(len);
    if payload.len() % 4 != 0 {
        return Err(format_error(
            name,
            "payload is not a whole number of f32 values",
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((header, values))
}

#[derive(Debug, Serialize, Deserialize)]
struct CoeffHeader {
    #[serde(rename = "J")]
    j: u32,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "N")]
    n: usize,
    boundary: BoundaryMode,
    input_channels: usize,
    spatial: usize,
    paths: Vec<[i64; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    morlet: Option<MorletParams>,
}

/// Serializes coefficients; `params` is recorded when given.
pub fn encode_sct1(coeffs: &ScatteringCoeffs, params: Option<&MorletParams>) -> Result<Vec<u8>> {
    let header = CoeffHeader {
        j: coeffs.scales(),
        l: coeffs.angles(),
        n: coeffs.input_size(),
        boundary: coeffs.boundary(),
        input_channels: coeffs.input_channels(),
        spatial: coeffs.spatial(),
        paths: coeffs.paths().iter().map(PathIndex::to_row).collect(),
        morlet: params.copied(),
    };
    let json = serde_json::to_vec(&header)?;
    Ok(frame(b"SCT1", &json, coeffs.data().iter().copied()))
}

/// Coefficients and the recorded Morlet parameters, if any.
pub fn decode_sct1(bytes: &[u8]) -> Result<(ScatteringCoeffs, Option<MorletParams>)> {
    let (header, values) = unframe("SCT1", b"SCT1", bytes)?;
    let h: CoeffHeader = serde_json::from_slice(header)?;
    let paths = h
        .paths
        .iter()
        .map(|r| PathIndex::from_row(*r))
        .collect::<Result<Vec<_>>>()?;
    if paths != path_table(h.j, h.l) {
        return Err(format_error("SCT1", "path table does not match J and L"));
    }
    let shape = CoeffShape {
        j: h.j,
        l: h.l,
        input_size: h.n,
        boundary: h.boundary,
        spatial: h.spatial,
        input_channels: h.input_channels,
    };
    if values.len() != shape.len() {
        return Err(format_error(
            "SCT1",
            format!(
                "payload has {} values, header implies {}",
                values.len(),
                shape.len()
            ),
        ));
    }
    Ok((ScatteringCoeffs::new(shape, values)?, h.morlet))
}

pub fn write_sct1(
    path: &Path,
    coeffs: &ScatteringCoeffs,
    params: Option<&MorletParams>,
) -> Result<()> {
    fs::write(path, encode_sct1(coeffs, params)?)?;
    Ok(())
}

pub fn read_sct1(path: &Path) -> Result<(ScatteringCoeffs, Option<MorletParams>)> {
    decode_sct1(&fs::read(path)?)
}

/// Serializes a model: metadata as JSON, then weights, then biases.
pub fn encode_slm1(model: &LinearModel) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(model.meta())?;
    Ok(frame(
        b"SLM1",
        &json,
        model.weights().iter().chain(model.bias()).copied(),
    ))
}

pub fn decode_slm1(bytes: &[u8]) -> Result<LinearModel> {
    let (header, values) = unframe("SLM1", b"SLM1", bytes)?;
    let meta: ModelMeta = serde_json::from_slice(header)?;
    let nw = meta.classes * meta.layout.len();
    if values.len() != nw + meta.classes {
        return Err(format_error(
            "SLM1",
            format!(
                "payload has {} values, metadata implies {}",
                values.len(),
                nw + meta.classes
            ),
        ));
    }
    let bias = values[nw..].to_vec();
    let mut weights = values;
    weights.truncate(nw);
    LinearModel::new(meta, weights, bias)
}

pub fn write_slm1(path: &Path, model: &LinearModel) -> Result<()> {
    fs::write(path, encode_slm1(model)?)?;
    Ok(())
}

pub fn read_slm1(path: &Path) -> Result<LinearModel> {
    decode_slm1(&fs::read(path)?)
}
