//! `PTWT` weights file: little-endian, f32 payload.
//!
//! ```text
//! "PTWT" u32 version=1 u32 layer_count
//! per layer: u32 out u32 in u8 activation (0=tanh, 1=identity)
//!            out*in f32 weights (row-major), out f32 biases
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Layer, MlpParams};
use crate::binio::{read_f32s, read_magic, read_u32, read_u8, write_f32s};
use crate::error::{Error, PathContext, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PTWT";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_weights<W: Write>(mut w: W, params: &MlpParams) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&(params.layers().len() as u32).to_le_bytes())?;
    for layer in params.layers() {
        w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
        w.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
        w.write_all(&[layer.activation.tag()])?;
        write_f32s(&mut w, layer.weight.iter().copied())?;
        write_f32s(&mut w, layer.bias.iter().copied())?;
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<MlpParams> {
    const WHAT: &str = "weights file";
    read_magic(&mut r, WEIGHTS_MAGIC, WHAT)?;
    let version = read_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format {
            what: WHAT,
            detail: format!("unsupported version {version}"),
        });
    }
    let n = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let out = read_u32(&mut r)? as usize;
        let inp = read_u32(&mut r)? as usize;
        let tag = read_u8(&mut r)?;
        let activation = Activation::from_tag(tag).ok_or_else(|| Error::Format {
            what: WHAT,
            detail: format!("unknown activation tag {tag}"),
        })?;
        let weight = Array2::from_shape_vec((out, inp), read_f32s(&mut r, out * inp)?)
            .map_err(|e| Error::shape(e.to_string()))?;
        let bias = Array1::from(read_f32s(&mut r, out)?);
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    MlpParams::from_layers(layers)
}

pub fn save_weights(path: &Path, params: &MlpParams) -> Result<()> {
    let f = std::fs::File::create(path).at_path(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_weights(&mut w, params)?;
    w.flush().at_path(path)
}

pub fn load_weights(path: &Path) -> Result<MlpParams> {
    let f = std::fs::File::open(path).at_path(path)?;
    read_weights(std::io::BufReader::new(f))
}

/// Round every parameter through f32, i.e. what a save/load cycle yields.
pub fn quantize_f32(params: &MlpParams) -> MlpParams {
    let mut out = params.clone();
    for l in out.layers_mut() {
        l.weight.mapv_inplace(|v| v as f32 as f64);
        l.bias.mapv_inplace(|v| v as f32 as f64);
    }
    out
}
