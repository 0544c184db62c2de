//! Model checkpoints: a versioned binary container holding the network
//! description as text followed by one FMAP-encoded blob per parameter
//! tensor (weights then biases, in layer order). Files round-trip
//! bit-exactly: load followed by save reproduces the identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::cnn::network::{LayerSpec, ModelParams, NetworkSpec, ParamPair};
use crate::cnn::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imaging::FMAP_MAGIC;

const CHECKPOINT_MAGIC: &[u8; 4] = b"GSCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Render a network spec as its text form.
pub fn spec_to_text(spec: &NetworkSpec) -> String {
    let mut s = String::new();
    s.push_str(&format!("input {} {}\n", spec.input_channels, spec.input_size));
    s.push_str(&format!("classes {}\n", spec.classes));
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv { filters, kernel } => {
                s.push_str(&format!("conv {filters} {kernel}\n"))
            }
            LayerSpec::Relu => s.push_str("relu\n"),
            LayerSpec::MaxPool => s.push_str("maxpool\n"),
            LayerSpec::FullyConnected { units } => s.push_str(&format!("fc {units}\n")),
            LayerSpec::Dropout { rate } => s.push_str(&format!("dropout {rate}\n")),
            LayerSpec::Softmax => s.push_str("softmax\n"),
        }
    }
    s
}

/// Parse the text form produced by [`spec_to_text`].
pub fn spec_from_text(text: &str) -> Result<NetworkSpec> {
    let bad = |ln: usize, msg: String| Error::Data(format!("network spec line {}: {msg}", ln + 1));
    let mut input: Option<(usize, usize)> = None;
    let mut classes: Option<usize> = None;
    let mut layers = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let usize_arg = |i: usize| -> Result<usize> {
            tokens
                .get(i)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(ln, format!("bad integer field in {line:?}")))
        };
        match tokens[0] {
            "input" => input = Some((usize_arg(1)?, usize_arg(2)?)),
            "classes" => classes = Some(usize_arg(1)?),
            "conv" => layers.push(LayerSpec::Conv {
                filters: usize_arg(1)?,
                kernel: usize_arg(2)?,
            }),
            "relu" => layers.push(LayerSpec::Relu),
            "maxpool" => layers.push(LayerSpec::MaxPool),
            "fc" => layers.push(LayerSpec::FullyConnected { units: usize_arg(1)? }),
            "dropout" => {
                let rate: f64 = tokens
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(ln, "bad dropout rate".into()))?;
                layers.push(LayerSpec::Dropout { rate });
            }
            "softmax" => layers.push(LayerSpec::Softmax),
            other => return Err(bad(ln, format!("unknown layer kind {other:?}"))),
        }
    }
    let (input_channels, input_size) =
        input.ok_or_else(|| Error::Data("network spec missing input line".into()))?;
    let classes = classes.ok_or_else(|| Error::Data("network spec missing classes line".into()))?;
    let spec = NetworkSpec {
        input_channels,
        input_size,
        classes,
        layers,
    };
    spec.shape_chain()?;
    Ok(spec)
}

fn push_fmap_blob(out: &mut Vec<u8>, data: &[f64]) {
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_fmap_blob(path: &Path, bytes: &[u8], offset: &mut usize, expect: usize) -> Result<Vec<f64>> {
    let corrupt = |detail: String| Error::CorruptPayload {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < *offset + 16 {
        return Err(corrupt("truncated tensor header".into()));
    }
    if &bytes[*offset..*offset + 4] != FMAP_MAGIC {
        return Err(corrupt("tensor block missing FMAP magic".into()));
    }
    let field = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let len = field(*offset + 4) * field(*offset + 8) * field(*offset + 12);
    if len != expect {
        return Err(corrupt(format!("tensor has {len} samples, expected {expect}")));
    }
    *offset += 16;
    if bytes.len() < *offset + 4 * len {
        return Err(corrupt("truncated tensor payload".into()));
    }
    let mut data = Vec::with_capacity(len);
    for i in 0..len {
        let o = *offset + 4 * i;
        data.push(f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64);
    }
    *offset += 4 * len;
    Ok(data)
}

/// Write spec and parameters to a checkpoint file. Parameters are stored
/// as 32-bit floats, the FMAP sample type.
pub fn save_checkpoint(spec: &NetworkSpec, params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = spec_to_text(spec);
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let pairs: Vec<&ParamPair> = params.layers.iter().flatten().collect();
    out.extend_from_slice(&(2 * pairs.len() as u32).to_le_bytes());
    for p in pairs {
        push_fmap_blob(&mut out, &p.weight.data);
        push_fmap_blob(&mut out, &p.bias);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    f.write_all(&out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read a checkpoint back. Tensor shapes are reconstructed from the spec
/// text and validated against the stored blob lengths.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkSpec, ModelParams)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let header = |detail: String| Error::CorruptHeader {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(header("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(header(format!("unsupported checkpoint version {version}")));
    }
    let text_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + text_len + 4 {
        return Err(header("truncated spec text".into()));
    }
    let text = std::str::from_utf8(&bytes[12..12 + text_len])
        .map_err(|_| header("spec text is not UTF-8".into()))?;
    let spec = spec_from_text(text)?;

    let mut offset = 12 + text_len;
    let n_tensors =
        u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
    offset += 4;

    let shapes = spec.shape_chain()?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut read = 0usize;
    for (i, layer) in spec.layers.iter().enumerate() {
        let pair = match layer {
            LayerSpec::Conv { filters, kernel } => {
                let in_c = shapes[i].features() / {
                    // spatial input: features = c*h*w, we need c
                    match shapes[i] {
                        crate::cnn::network::Activation::Spatial { h, w, .. } => h * w,
                        _ => 1,
                    }
                };
                let wlen = filters * in_c * kernel * kernel;
                let weight = read_fmap_blob(path, &bytes, &mut offset, wlen)?;
                let bias = read_fmap_blob(path, &bytes, &mut offset, *filters)?;
                read += 2;
                Some(ParamPair {
                    weight: Tensor::from_vec(*filters, in_c, *kernel, *kernel, weight),
                    bias,
                })
            }
            LayerSpec::FullyConnected { units } => {
                let features = shapes[i].features();
                let weight = read_fmap_blob(path, &bytes, &mut offset, units * features)?;
                let bias = read_fmap_blob(path, &bytes, &mut offset, *units)?;
                read += 2;
                Some(ParamPair {
                    weight: Tensor::from_vec(*units, features, 1, 1, weight),
                    bias,
                })
            }
            _ => None,
        };
        layers.push(pair);
    }
    if read != n_tensors {
        return Err(Error::CorruptPayload {
            path: path.to_path_buf(),
            detail: format!("header promises {n_tensors} tensors, spec needs {read}"),
        });
    }
    Ok((spec, ModelParams { layers }))
}
