//! Bit-exact serialized latent: self-describing header plus a range-coded
//! payload.
//!
//! Layout, integers little-endian:
//!
//! ```text
//! magic "LDRB" | version u16 | d_y u16 | scale f32 | kept bitmap ceil(d_y/8) |
//! payload len u32 | payload
//! ```
//!
//! Each kept entry is coded against a frozen discretized-Gaussian model with
//! variance `(sigma_i / q_i)^2` integrated over unit bins, plus an escape
//! symbol that carries out-of-range values as raw 32-bit integers. Encoder
//! and decoder derive identical tables from the shared profile, so decoding
//! with the profile that produced the stream is exact.

use super::range::{RangeDecoder, RangeEncoder, PROB_TOTAL};
use super::QuantizationProfile;
use crate::error::{Error, Result};

pub const STREAM_MAGIC: &[u8; 4] = b"LDRB";
pub const STREAM_VERSION: u16 = 1;

/// Serialized quantized latent; owns the full header + payload image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentBitstream {
    bytes: Vec<u8>,
}

impl LatentBitstream {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        LatentBitstream { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len_bytes(&self) -> usize {
        self.bytes.len()
    }

    pub fn len_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }

    pub fn header_len(d_y: usize) -> usize {
        4 + 2 + 2 + 4 + d_y.div_ceil(8) + 4
    }

    /// Payload length in bytes (excluding the header).
    pub fn payload_len(&self, d_y: usize) -> usize {
        self.bytes.len().saturating_sub(Self::header_len(d_y))
    }
}

/// Frozen per-entry symbol model: values `-support ..= support` plus a
/// trailing escape symbol, with 16-bit cumulative frequencies.
pub(crate) struct EntryModel {
    support: i32,
    cum: Vec<u32>,
}

const MAX_SUPPORT: i64 = 16_384;

impl EntryModel {
    /// `ratio = sigma / q`, the modeled standard deviation of the quantized
    /// integers. A non-finite or tiny ratio degenerates to a point mass at 0.
    pub(crate) fn new(ratio: f64) -> EntryModel {
        let ratio = if ratio.is_finite() && ratio > 0.0 { ratio } else { 0.0 };
        let support = (((8.0 * ratio).ceil() as i64) + 2).clamp(1, MAX_SUPPORT) as i32;
        let n_sym = (2 * support + 2) as usize; // values plus escape
        let phi = |x: f64| 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
        let bin_mass = |v: i64| -> f64 {
            if ratio == 0.0 {
                return if v == 0 { 1.0 } else { 0.0 };
            }
            phi((v as f64 + 0.5) / ratio) - phi((v as f64 - 0.5) / ratio)
        };

        let mut masses = Vec::with_capacity(n_sym);
        let mut in_range = 0.0;
        for v in -(support as i64)..=(support as i64) {
            let m = bin_mass(v);
            masses.push(m);
            in_range += m;
        }
        masses.push((1.0 - in_range).max(0.0)); // escape: tail mass

        // Integer frequencies: one guaranteed count per symbol, the rest
        // proportional; leftover goes to the most probable symbol.
        let budget = PROB_TOTAL - n_sym as u32;
        let mut freqs: Vec<u32> = masses
            .iter()
            .map(|m| 1 + (m * budget as f64).floor() as u32)
            .collect();
        let assigned: u32 = freqs.iter().sum();
        debug_assert!(assigned <= PROB_TOTAL);
        let argmax = masses
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        freqs[argmax] += PROB_TOTAL - assigned;

        let mut cum = Vec::with_capacity(n_sym + 1);
        let mut acc = 0u32;
        cum.push(0);
        for f in &freqs {
            acc += f;
            cum.push(acc);
        }
        debug_assert_eq!(acc, PROB_TOTAL);
        EntryModel { support, cum }
    }

    fn sym_index(&self, v: i32) -> Option<usize> {
        if v.unsigned_abs() <= self.support as u32 {
            Some((v as i64 + self.support as i64) as usize)
        } else {
            None
        }
    }

    fn escape_index(&self) -> usize {
        (2 * self.support + 1) as usize
    }

    fn freq(&self, idx: usize) -> (u32, u32) {
        (self.cum[idx], self.cum[idx + 1] - self.cum[idx])
    }

    pub(crate) fn encode_value(&self, enc: &mut RangeEncoder, v: i32) {
        match self.sym_index(v) {
            Some(idx) => {
                let (start, freq) = self.freq(idx);
                enc.encode(start, freq, PROB_TOTAL);
            }
            None => {
                let (start, freq) = self.freq(self.escape_index());
                enc.encode(start, freq, PROB_TOTAL);
                for b in v.to_le_bytes() {
                    enc.encode(b as u32, 1, 256);
                }
            }
        }
    }

    pub(crate) fn decode_value(&self, dec: &mut RangeDecoder<'_>) -> i32 {
        let target = dec.decode_freq(PROB_TOTAL);
        let idx = self.cum.partition_point(|&c| c <= target) - 1;
        let (start, freq) = self.freq(idx);
        dec.update(start, freq);
        if idx == self.escape_index() {
            let mut raw = [0u8; 4];
            for b in &mut raw {
                let f = dec.decode_freq(256);
                dec.update(f, 1);
                *b = f as u8;
            }
            i32::from_le_bytes(raw)
        } else {
            idx as i32 - self.support
        }
    }

    /// Ideal code length of `v` under this integer model, bits. Escapes cost
    /// the escape symbol plus 32 raw bits.
    pub(crate) fn bits_for(&self, v: i32) -> f64 {
        match self.sym_index(v) {
            Some(idx) => {
                let (_, f) = self.freq(idx);
                -((f as f64 / PROB_TOTAL as f64).log2())
            }
            None => {
                let (_, f) = self.freq(self.escape_index());
                -((f as f64 / PROB_TOTAL as f64).log2()) + 32.0
            }
        }
    }
}

pub(crate) fn entry_models(prof: &QuantizationProfile) -> Vec<EntryModel> {
    prof.kept_indices()
        .into_iter()
        .map(|i| EntryModel::new(prof.sigma()[i] / prof.steps()[i]))
        .collect()
}

/// Ideal code length of a quantized latent under the coder's own integer
/// model, bits. The measured payload of [`encode_stream`] tracks this up to
/// coder overhead; rate accounting in benchmarks compares against it.
pub fn model_cross_entropy_bits(v: &[i32], prof: &QuantizationProfile) -> Result<f64> {
    if v.len() != prof.kept_count() {
        return Err(Error::ProfileMismatch(format!(
            "{} coefficients for {} kept entries",
            v.len(),
            prof.kept_count()
        )));
    }
    let models = entry_models(prof);
    Ok(v.iter().zip(&models).map(|(x, m)| m.bits_for(*x)).sum())
}

fn write_header(prof: &QuantizationProfile, payload_len: usize, out: &mut Vec<u8>) {
    out.extend_from_slice(STREAM_MAGIC);
    out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
    out.extend_from_slice(&(prof.d_y() as u16).to_le_bytes());
    out.extend_from_slice(&(prof.scale() as f32).to_le_bytes());
    out.extend_from_slice(&prof.mask_bitmap());
    out.extend_from_slice(&(payload_len as u32).to_le_bytes());
}

/// Encodes one quantized latent (kept entries, index order) into a
/// self-describing bitstream.
pub fn encode_stream(v: &[i32], prof: &QuantizationProfile) -> Result<LatentBitstream> {
    if v.len() != prof.kept_count() {
        return Err(Error::ProfileMismatch(format!(
            "{} coefficients for {} kept entries",
            v.len(),
            prof.kept_count()
        )));
    }
    let models = entry_models(prof);
    let mut enc = RangeEncoder::new();
    for (value, model) in v.iter().zip(&models) {
        model.encode_value(&mut enc, *value);
    }
    let payload = enc.finish();
    let mut bytes = Vec::with_capacity(LatentBitstream::header_len(prof.d_y()) + payload.len());
    write_header(prof, payload.len(), &mut bytes);
    bytes.extend_from_slice(&payload);
    Ok(LatentBitstream { bytes })
}

/// Decodes a bitstream against the profile that produced it. The header must
/// match the profile exactly; the decoded integers equal the encoded ones.
pub fn decode_stream(stream: &LatentBitstream, prof: &QuantizationProfile) -> Result<Vec<i32>> {
    let bytes = &stream.bytes;
    let header_len = LatentBitstream::header_len(prof.d_y());
    if bytes.len() < 12 {
        return Err(Error::FormatError("stream shorter than fixed header".into()));
    }
    if &bytes[0..4] != STREAM_MAGIC {
        return Err(Error::FormatError("bad magic, not a latent bitstream".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != STREAM_VERSION {
        return Err(Error::FormatError(format!("unsupported stream version {version}")));
    }
    let d_y = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if d_y != prof.d_y() {
        return Err(Error::ModelMismatch(format!(
            "stream carries d_y = {d_y}, profile has {}",
            prof.d_y()
        )));
    }
    if bytes.len() < header_len {
        return Err(Error::FormatError("stream shorter than its header".into()));
    }
    let s_bits = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if s_bits != (prof.scale() as f32).to_bits() {
        return Err(Error::ModelMismatch("stream scale differs from profile".into()));
    }
    let bitmap_len = d_y.div_ceil(8);
    let bitmap = &bytes[12..12 + bitmap_len];
    if bitmap != prof.mask_bitmap() {
        return Err(Error::ModelMismatch("stream kept-entry bitmap differs from profile".into()));
    }
    let payload_len =
        u32::from_le_bytes(bytes[12 + bitmap_len..12 + bitmap_len + 4].try_into().unwrap()) as usize;
    let payload = &bytes[header_len..];
    if payload.len() != payload_len {
        return Err(Error::FormatError(format!(
            "payload length field {payload_len} does not match {} bytes present",
            payload.len()
        )));
    }

    let models = entry_models(prof);
    let mut dec = RangeDecoder::new(payload);
    Ok(models.iter().map(|m| m.decode_value(&mut dec)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{fit_profile, quantize};
    use crate::numerics::{Matrix, SeededRng};

    fn gaussian_profile(d_y: usize, scale: f64, seed: u64) -> QuantizationProfile {
        let mut rng = SeededRng::new(seed);
        let train = Matrix::<f64>::from_fn(d_y, 128, |r, _| (0.5 + r as f64) * rng.standard_normal());
        fit_profile(&train, scale, None).unwrap()
    }

    #[test]
    fn all_zero_vector_round_trips_with_tiny_payload() {
        let prof = gaussian_profile(16, 2.0, 1);
        let v = vec![0i32; 16];
        let stream = encode_stream(&v, &prof).unwrap();
        assert_eq!(decode_stream(&stream, &prof).unwrap(), v);
        // Zero is the modal symbol everywhere; the payload stays near the
        // 6-byte coder flush.
        assert!(stream.payload_len(16) <= 24, "payload {}", stream.payload_len(16));
    }

    #[test]
    fn seeded_round_trips_are_bit_exact() {
        for seed in 0..100u64 {
            let mut rng = SeededRng::new(1000 + seed);
            let prof = gaussian_profile(8, 0.5, seed);
            let y: Vec<f64> = (0..8).map(|i| (1.0 + i as f64) * rng.standard_normal()).collect();
            let v = quantize(&y, &prof).unwrap();
            let stream = encode_stream(&v, &prof).unwrap();
            assert_eq!(decode_stream(&stream, &prof).unwrap(), v, "seed {seed}");
        }
    }

    #[test]
    fn escape_path_handles_extreme_values() {
        let prof = gaussian_profile(4, 1.0, 7);
        for v in [
            vec![i32::MAX, i32::MIN, 0, 1],
            vec![100_000, -100_000, 40_000, -2],
            vec![i32::MIN + 1, 0, 0, i32::MAX - 1],
        ] {
            let stream = encode_stream(&v, &prof).unwrap();
            assert_eq!(decode_stream(&stream, &prof).unwrap(), v);
        }
    }

    #[test]
    fn header_is_self_describing_and_checked() {
        let prof = gaussian_profile(10, 0.75, 9);
        let v = vec![1i32; 10];
        let stream = encode_stream(&v, &prof).unwrap();
        let bytes = stream.as_bytes();
        assert_eq!(&bytes[0..4], b"LDRB");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), STREAM_VERSION);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 10);
        assert_eq!(
            f32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            prof.scale() as f32
        );

        // Corrupt magic -> FormatError.
        let mut bad = bytes.to_vec();
        bad[0] = b'X';
        assert!(matches!(
            decode_stream(&LatentBitstream::from_bytes(bad), &prof),
            Err(Error::FormatError(_))
        ));

        // Different profile (other scale) -> ModelMismatch.
        let other = prof.with_scale(1.5).unwrap();
        assert!(matches!(
            decode_stream(&stream, &other),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn wrong_coefficient_count_rejected() {
        let prof = gaussian_profile(6, 1.0, 11);
        assert!(matches!(
            encode_stream(&[0, 1, 2], &prof),
            Err(Error::ProfileMismatch(_))
        ));
    }

    #[test]
    fn payload_tracks_model_cross_entropy() {
        // Long vectors; measured payload within 2% + 8 bytes of the ideal
        // code length under the integer model.
        for seed in [3u64, 4, 5] {
            let mut rng = SeededRng::new(seed);
            let d_y = 256;
            let prof = gaussian_profile(d_y, 0.35, 2000 + seed);
            let models = entry_models(&prof);
            let mut v = Vec::with_capacity(d_y);
            for i in 0..d_y {
                let ratio = prof.sigma()[i] / prof.steps()[i];
                v.push((ratio * rng.standard_normal()).round() as i32);
            }
            let ideal_bits: f64 = v.iter().zip(&models).map(|(x, m)| m.bits_for(*x)).sum();
            let stream = encode_stream(&v, &prof).unwrap();
            let payload_bits = stream.payload_len(d_y) as f64 * 8.0;
            assert!(
                payload_bits <= ideal_bits * 1.02 + 64.0,
                "seed {seed}: payload {payload_bits} vs ideal {ideal_bits}"
            );
            assert_eq!(decode_stream(&stream, &prof).unwrap(), v);
        }
    }

    #[test]
    fn masked_profile_streams_fewer_entries() {
        let prof = gaussian_profile(16, 0.5, 13);
        let masked = crate::codec::apply_mask(&prof, crate::codec::MaskSpec::KeepFirstFraction(0.5)).unwrap();
        let v = vec![2i32; 8];
        let stream = encode_stream(&v, &masked).unwrap();
        assert_eq!(decode_stream(&stream, &masked).unwrap(), v);
        // Full profile cannot decode: bitmap mismatch.
        assert!(matches!(
            decode_stream(&stream, &prof),
            Err(Error::ModelMismatch(_))
        ));
    }
}
