//! Checkpoint container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! bytes 0..8    magic "SDFMAPV1"
//! bytes 8..12   header length N as u32
//! bytes 12..12+N  header JSON
//! then          payload: f64 blocks in file order
//! ```
//!
//! The header records the format version, the trunk config, the encoder
//! config when present, the (out, in) shape of every layer, and the total
//! payload count. The payload holds the encoder's 32x3 frequency matrix (if
//! any) followed by each layer's weights then bias. A loaded model either
//! reproduces the saved one bit for bit or the load fails whole; there is no
//! partial result.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, FourierEncoder, FREQUENCY_ROWS};
use super::{Layer, MlpConfig, ModelError, SdfModel};

const MAGIC: &[u8; 8] = b"SDFMAPV1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    mlp: MlpConfig,
    encoder: Option<EncoderConfig>,
    /// (out_dim, in_dim) per layer, in file order.
    shapes: Vec<(usize, usize)>,
    payload_f64_count: u64,
}

/// Serialize a model. The written file reproduces the model exactly on load.
pub fn save_checkpoint<P: AsRef<Path>>(model: &SdfModel, path: P) -> Result<(), ModelError> {
    let path_str = path.as_ref().display().to_string();
    let shapes: Vec<(usize, usize)> = model.layers.iter().map(|l| (l.out_dim, l.in_dim)).collect();
    let encoder_values = model
        .encoder
        .as_ref()
        .map_or(0, |e| e.frequencies().len());
    let payload_f64_count = (encoder_values
        + model
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()) as u64;
    let header = Header {
        version: FORMAT_VERSION,
        mlp: model.config,
        encoder: model.encoder.as_ref().map(|e| *e.config()),
        shapes,
        payload_f64_count,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut bytes = Vec::with_capacity(12 + header_json.len() + payload_f64_count as usize * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    if let Some(enc) = &model.encoder {
        for v in enc.frequencies() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for layer in &model.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&path, bytes).map_err(|source| ModelError::Io {
        path: path_str,
        source,
    })
}

/// Load a model saved by [`save_checkpoint`].
pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<SdfModel, ModelError> {
    let path_str = path.as_ref().display().to_string();
    let bytes = fs::read(&path).map_err(|source| ModelError::Io {
        path: path_str,
        source,
    })?;
    let corrupt = |reason: &str| ModelError::CorruptCheckpoint(reason.into());

    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12usize
        .checked_add(header_len)
        .ok_or_else(|| corrupt("header length overflows"))?;
    if payload_start > bytes.len() {
        return Err(corrupt("header length exceeds file size"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| ModelError::CorruptCheckpoint(format!("bad header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    header.mlp.validate()?;

    // The shape manifest must agree with the config it claims to hold.
    let in_dim = if header.encoder.is_some() {
        super::encoder::ENCODED_DIM
    } else {
        3
    };
    let expected = SdfModel::expected_shapes(&header.mlp, in_dim);
    if header.shapes != expected {
        return Err(ModelError::ShapeMismatch(format!(
            "manifest shapes {:?} do not match config shapes {:?}",
            header.shapes, expected
        )));
    }

    let encoder_values = if header.encoder.is_some() {
        FREQUENCY_ROWS * 3
    } else {
        0
    };
    let expected_count = encoder_values
        + header
            .shapes
            .iter()
            .map(|(out, inp)| out * inp + out)
            .sum::<usize>();
    if header.payload_f64_count != expected_count as u64 {
        return Err(corrupt("payload count disagrees with shape manifest"));
    }
    let payload = &bytes[payload_start..];
    if payload.len() != expected_count * 8 {
        return Err(corrupt("truncated or oversized payload"));
    }

    let mut cursor = 0usize;
    let mut take = |n: usize| {
        let out: Vec<f64> = payload[cursor * 8..(cursor + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += n;
        out
    };

    let encoder = match header.encoder {
        Some(config) => Some(FourierEncoder::from_parts(config, take(encoder_values))?),
        None => None,
    };
    let mut layers = Vec::with_capacity(header.shapes.len());
    for &(out_dim, in_dim) in &header.shapes {
        let weights = take(out_dim * in_dim);
        let bias = take(out_dim);
        layers.push(Layer {
            weights,
            bias,
            in_dim,
            out_dim,
        });
    }
    let model = SdfModel {
        encoder,
        layers,
        config: header.mlp,
    };
    if !model.all_parameters_finite() {
        return Err(ModelError::NonFinite("loaded parameters".into()));
    }
    Ok(model)
}
