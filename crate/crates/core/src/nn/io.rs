//! Model checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LDRM" | version u16 | tensor count u16
//! per tensor:  name len u16 | UTF-8 name | rank u8 | dims u32 each | f64 LE row-major data
//! metadata:    byte len u32 | UTF-8 "key=value\n" lines
//! ```
//!
//! Tensors are written in canonical key order and values as IEEE-754 bits, so
//! save/load round-trips are bit-exact and identical models serialize to
//! identical bytes.

use super::{
    Activation, FreezeMask, Layer, LayerSpec, ModelParams, SideBranch, TensorGroup, TensorKey,
};
use crate::error::{Error, Result};
use crate::ldr::{LdrConfig, ScaleDimMode};
use crate::numerics::Matrix;
use crate::Scalar;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"LDRM";
pub const FORMAT_VERSION: u16 = 1;

fn write_tensor<F: Scalar>(buf: &mut Vec<u8>, name: &str, m: &Matrix<F>) {
    let name_bytes = name.as_bytes();
    buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
    buf.extend_from_slice(name_bytes);
    buf.push(2u8); // rank
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        buf.extend_from_slice(&v.to_f64().to_le_bytes());
    }
}

fn metadata_text<F: Scalar>(params: &ModelParams<F>) -> String {
    let mut meta = String::new();
    let enc_acts: Vec<&str> = params.encoder.iter().map(|l| l.spec.activation.name()).collect();
    let dec_acts: Vec<&str> = params.decoder.iter().map(|l| l.spec.activation.name()).collect();
    let frozen: Vec<String> = params.freeze.frozen_keys().map(|k| k.name()).collect();
    let scale_dim = match params.ldr.scale_dim {
        ScaleDimMode::LatentDim => "latent".to_string(),
        ScaleDimMode::InputDim(d) => format!("input:{d}"),
    };
    meta.push_str(&format!("d_in={}\n", params.d_in));
    meta.push_str(&format!("d_y={}\n", params.d_y));
    meta.push_str(&format!("k={}\n", params.k));
    meta.push_str(&format!("side_dim={}\n", params.side_dim));
    meta.push_str(&format!("side_normalize={}\n", params.side.normalize));
    meta.push_str(&format!("enc_acts={}\n", enc_acts.join(",")));
    meta.push_str(&format!("dec_acts={}\n", dec_acts.join(",")));
    meta.push_str(&format!("init_seed={}\n", params.init_seed));
    meta.push_str(&format!("eps_sq={}\n", params.ldr.eps_sq));
    meta.push_str(&format!("scale_dim={scale_dim}\n"));
    meta.push_str(&format!("normalize_columns={}\n", params.ldr.normalize_columns));
    meta.push_str(&format!("frozen={}\n", frozen.join(",")));
    meta
}

/// Serializes the model to its checkpoint byte image.
pub fn model_bytes<F: Scalar>(params: &ModelParams<F>) -> Vec<u8> {
    let keys = params.tensor_keys();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(keys.len() as u16).to_le_bytes());
    for key in &keys {
        write_tensor(&mut buf, &key.name(), params.tensor(*key));
    }
    let meta = metadata_text(params);
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    buf
}

/// SHA-256 of the checkpoint image, hex-encoded. The content hash recorded
/// next to experiment outputs.
pub fn model_checksum<F: Scalar>(params: &ModelParams<F>) -> String {
    let digest = Sha256::digest(model_bytes(params));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model<F: Scalar>(params: &ModelParams<F>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&model_bytes(params))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::FormatError("unexpected end of model file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn parse_meta(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

fn meta_get<'m>(meta: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str> {
    meta.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::FormatError(format!("missing metadata key {key:?}")))
}

fn meta_parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta_get(meta, key)?
        .parse()
        .map_err(|_| Error::FormatError(format!("bad metadata value for {key:?}")))
}

pub fn load_model<F: Scalar>(path: &Path) -> Result<ModelParams<F>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    model_from_bytes(&bytes)
}

pub fn model_from_bytes<F: Scalar>(bytes: &[u8]) -> Result<ModelParams<F>> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::FormatError("bad magic, not a model file".into()));
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::FormatError(format!("unsupported version {version}")));
    }
    let count = cur.u16()? as usize;
    let mut tensors: Vec<(TensorKey, Matrix<F>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::FormatError("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u8()?;
        if rank != 2 {
            return Err(Error::FormatError(format!("tensor {name}: rank {rank} != 2")));
        }
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::FormatError(format!("tensor {name}: zero dimension")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let raw = cur.take(8)?;
            data.push(F::from_f64(f64::from_le_bytes(raw.try_into().unwrap())));
        }
        let key = TensorKey::parse(&name)?;
        tensors.push((
            key,
            Matrix::from_vec(rows, cols, data)
                .map_err(|e| Error::FormatError(format!("tensor {name}: {e}")))?,
        ));
    }
    let meta_len = cur.u32()? as usize;
    let meta_text = std::str::from_utf8(cur.take(meta_len)?)
        .map_err(|_| Error::FormatError("metadata is not UTF-8".into()))?;
    let meta = parse_meta(meta_text);

    let d_in: usize = meta_parse(&meta, "d_in")?;
    let d_y: usize = meta_parse(&meta, "d_y")?;
    let k: usize = meta_parse(&meta, "k")?;
    let side_dim: usize = meta_parse(&meta, "side_dim")?;
    let side_normalize: bool = meta_parse(&meta, "side_normalize")?;
    let init_seed: u64 = meta_parse(&meta, "init_seed")?;
    let eps_sq: f64 = meta_parse(&meta, "eps_sq")?;
    let normalize_columns: bool = meta_parse(&meta, "normalize_columns")?;
    let scale_dim = match meta_get(&meta, "scale_dim")? {
        "latent" => ScaleDimMode::LatentDim,
        other => match other.strip_prefix("input:") {
            Some(d) => ScaleDimMode::InputDim(
                d.parse()
                    .map_err(|_| Error::FormatError("bad scale_dim".into()))?,
            ),
            None => return Err(Error::FormatError(format!("bad scale_dim {other:?}"))),
        },
    };

    let acts = |key: &str| -> Result<Vec<Activation>> {
        let raw = meta_get(&meta, key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',').map(Activation::parse).collect()
    };
    let enc_acts = acts("enc_acts")?;
    let dec_acts = acts("dec_acts")?;

    let mut by_key: BTreeMap<TensorKey, Matrix<F>> = tensors.into_iter().collect();
    let mut take = |key: TensorKey| -> Result<Matrix<F>> {
        by_key
            .remove(&key)
            .ok_or_else(|| Error::FormatError(format!("missing tensor {}", key.name())))
    };

    let build_layers = |take: &mut dyn FnMut(TensorKey) -> Result<Matrix<F>>,
                        group: TensorGroup,
                        acts: &[Activation]|
     -> Result<Vec<Layer<F>>> {
        let mut layers = Vec::with_capacity(acts.len());
        for (i, &activation) in acts.iter().enumerate() {
            let w = take(TensorKey { group, layer: i, kind: super::TensorKind::Weight })?;
            let b = take(TensorKey { group, layer: i, kind: super::TensorKind::Bias })?;
            if b.rows() != w.rows() || b.cols() != 1 {
                return Err(Error::FormatError(format!(
                    "bias shape {}x{} inconsistent with weight {}x{}",
                    b.rows(),
                    b.cols(),
                    w.rows(),
                    w.cols()
                )));
            }
            layers.push(Layer {
                spec: LayerSpec { in_dim: w.cols(), out_dim: w.rows(), activation },
                w,
                b,
            });
        }
        Ok(layers)
    };

    let encoder = build_layers(&mut take, TensorGroup::Encoder, &enc_acts)?;
    let decoder = build_layers(&mut take, TensorGroup::Decoder, &dec_acts)?;
    let side_w = take(TensorKey { group: TensorGroup::Side, layer: 0, kind: super::TensorKind::Weight })?;
    let side_b = take(TensorKey { group: TensorGroup::Side, layer: 0, kind: super::TensorKind::Bias })?;

    let mut freeze = FreezeMask::none();
    let frozen_raw = meta_get(&meta, "frozen")?;
    if !frozen_raw.is_empty() {
        for name in frozen_raw.split(',') {
            freeze.set(TensorKey::parse(name)?, true);
        }
    }

    let params = ModelParams {
        encoder,
        decoder,
        side: SideBranch { w: side_w, b: side_b, normalize: side_normalize },
        freeze,
        d_in,
        d_y,
        k,
        side_dim,
        init_seed,
        ldr: LdrConfig { eps_sq, scale_dim, normalize_columns },
    };

    // Structural consistency.
    if let Some(first) = params.encoder.first() {
        if first.spec.in_dim != d_in {
            return Err(Error::FormatError("encoder input width != d_in".into()));
        }
    }
    let enc_out = params.encoder.last().map(|l| l.spec.out_dim).unwrap_or(d_in);
    if enc_out != d_y {
        return Err(Error::FormatError("encoder output width != d_y".into()));
    }
    let dec_out = params.decoder.last().map(|l| l.spec.out_dim).unwrap_or(d_y);
    if dec_out != k {
        return Err(Error::FormatError("decoder output width != k".into()));
    }
    if params.side.w.cols() != d_y || params.side.w.rows() != side_dim {
        return Err(Error::FormatError("side branch shape inconsistent".into()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TensorKind;

    fn model(seed: u64) -> ModelParams<f64> {
        let mut m = ModelParams::new(6, &[8], 4, &[5], 3, 4, LdrConfig::default(), seed);
        m.freeze_group(TensorGroup::Decoder, true);
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model(21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ldrm");
        save_model(&m, &path).unwrap();
        let loaded: ModelParams<f64> = load_model(&path).unwrap();
        assert_eq!(m, loaded);
        // Bytes stable: re-serialization is identical.
        assert_eq!(model_bytes(&m), model_bytes(&loaded));
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let m = model(22);
        let mut bytes = model_bytes(&m);
        bytes[0] = b'X';
        assert!(matches!(model_from_bytes::<f64>(&bytes), Err(Error::FormatError(_))));
    }

    #[test]
    fn header_fields_match_construction() {
        // Field-by-field check of the serialized image against the spec of
        // its construction.
        let m = model(23);
        let bytes = model_bytes(&m);
        assert_eq!(&bytes[0..4], b"LDRM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), FORMAT_VERSION);
        let count = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        assert_eq!(count, m.tensor_keys().len());
        // First tensor record: name "enc.0.w", rank 2, dims 8 x 6.
        let name_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!(&bytes[10..10 + name_len], b"enc.0.w");
        let p = 10 + name_len;
        assert_eq!(bytes[p], 2); // rank
        let rows = u32::from_le_bytes(bytes[p + 1..p + 5].try_into().unwrap());
        let cols = u32::from_le_bytes(bytes[p + 5..p + 9].try_into().unwrap());
        assert_eq!((rows, cols), (8, 6));
        let first = f64::from_le_bytes(bytes[p + 9..p + 17].try_into().unwrap());
        assert_eq!(first.to_bits(), m.encoder[0].w.get(0, 0).to_bits());
    }

    #[test]
    fn checksum_distinguishes_models() {
        let a = model(24);
        let mut b = a.clone();
        let key = TensorKey { group: TensorGroup::Side, layer: 0, kind: TensorKind::Bias };
        b.tensor_mut(key).set(0, 0, 1e-9);
        assert_ne!(model_checksum(&a), model_checksum(&b));
        assert_eq!(model_checksum(&a), model_checksum(&a.clone()));
    }

    #[test]
    fn f32_round_trip_preserves_values() {
        let m32: ModelParams<f32> = ModelParams::new(3, &[4], 2, &[3], 2, 2, LdrConfig::default(), 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m32.ldrm");
        save_model(&m32, &path).unwrap();
        let loaded: ModelParams<f32> = load_model(&path).unwrap();
        // f32 -> f64 -> f32 widening round-trip is lossless.
        assert_eq!(m32, loaded);
    }
}
