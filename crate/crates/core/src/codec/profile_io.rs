//! Quantization profile file: text header, binary statistics, checksum.
//!
//! ```text
//! LDRP v1\n
//! d_y=..\n s=..\n h_min=..\n step_rule=..\n mask=<hex bitmap>\n ---\n
//! mu[d_y] f64 LE | sigma[d_y] f64 LE | H[d_y] f64 LE | crc32 u32 LE
//! ```
//!
//! The checksum covers every preceding byte. Floats serialize as IEEE-754
//! bits, so save/load round-trips are exact and the steps rederive from
//! `s` and `H` on load.

use super::{derive_steps, QuantizationProfile, StepRule};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// CRC-32 (IEEE 802.3, reflected), bitwise.
fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

pub fn profile_bytes(prof: &QuantizationProfile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"LDRP v1\n");
    let hex: String = prof.mask_bitmap().iter().map(|b| format!("{b:02x}")).collect();
    let header = format!(
        "d_y={}\ns={}\nh_min={}\nstep_rule={}\nmask={}\n---\n",
        prof.d_y(),
        // Full round-trip precision for the scale.
        format_f64_exact(prof.scale()),
        format_f64_exact(prof.h_min()),
        prof.step_rule().name(),
        hex
    );
    out.extend_from_slice(header.as_bytes());
    for arr in [prof.mu(), prof.sigma(), prof.entropy_bits()] {
        for &v in arr {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Shortest decimal that parses back to the same f64.
fn format_f64_exact(v: f64) -> String {
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:?}")
    }
}

pub fn save_profile(prof: &QuantizationProfile, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&profile_bytes(prof))?;
    Ok(())
}

pub fn load_profile(path: &Path) -> Result<QuantizationProfile> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    profile_from_bytes(&bytes)
}

pub(crate) fn profile_from_bytes(bytes: &[u8]) -> Result<QuantizationProfile> {
    if bytes.len() < 4 {
        return Err(Error::FormatError("profile file too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let want = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32(body) != want {
        return Err(Error::FormatError("profile checksum mismatch".into()));
    }
    let sep = b"---\n";
    let split = body
        .windows(sep.len())
        .position(|w| w == sep)
        .ok_or_else(|| Error::FormatError("missing header separator".into()))?;
    let header = std::str::from_utf8(&body[..split])
        .map_err(|_| Error::FormatError("profile header is not UTF-8".into()))?;
    let bin = &body[split + sep.len()..];

    let mut lines = header.lines();
    if lines.next() != Some("LDRP v1") {
        return Err(Error::FormatError("bad profile magic".into()));
    }
    let mut d_y = None;
    let mut s = None;
    let mut h_min = None;
    let mut rule = None;
    let mut mask_hex = None;
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::FormatError(format!("bad header line {line:?}")))?;
        match k {
            "d_y" => d_y = Some(v.parse::<usize>().map_err(|_| Error::FormatError("bad d_y".into()))?),
            "s" => s = Some(v.parse::<f64>().map_err(|_| Error::FormatError("bad s".into()))?),
            "h_min" => h_min = Some(v.parse::<f64>().map_err(|_| Error::FormatError("bad h_min".into()))?),
            "step_rule" => rule = Some(StepRule::parse(v)?),
            "mask" => mask_hex = Some(v.to_string()),
            other => return Err(Error::FormatError(format!("unknown header key {other:?}"))),
        }
    }
    let d_y = d_y.ok_or_else(|| Error::FormatError("missing d_y".into()))?;
    let s = s.ok_or_else(|| Error::FormatError("missing s".into()))?;
    let h_min = h_min.ok_or_else(|| Error::FormatError("missing h_min".into()))?;
    let rule = rule.ok_or_else(|| Error::FormatError("missing step_rule".into()))?;
    let mask_hex = mask_hex.ok_or_else(|| Error::FormatError("missing mask".into()))?;

    let bitmap_len = d_y.div_ceil(8);
    if mask_hex.len() != bitmap_len * 2 {
        return Err(Error::FormatError("mask hex length mismatch".into()));
    }
    let mut bitmap = Vec::with_capacity(bitmap_len);
    for i in 0..bitmap_len {
        let byte = u8::from_str_radix(&mask_hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::FormatError("bad mask hex".into()))?;
        bitmap.push(byte);
    }
    let mask: Vec<bool> = (0..d_y).map(|i| bitmap[i / 8] >> (i % 8) & 1 == 1).collect();

    if bin.len() != 3 * d_y * 8 {
        return Err(Error::FormatError(format!(
            "expected {} statistic bytes, found {}",
            3 * d_y * 8,
            bin.len()
        )));
    }
    let read_arr = |offset: usize| -> Vec<f64> {
        (0..d_y)
            .map(|i| f64::from_le_bytes(bin[offset + 8 * i..offset + 8 * i + 8].try_into().unwrap()))
            .collect()
    };
    let mu = read_arr(0);
    let sigma = read_arr(d_y * 8);
    let entropy_bits = read_arr(2 * d_y * 8);
    let steps = derive_steps(&entropy_bits, s, rule);

    Ok(QuantizationProfile {
        d_y,
        mu,
        sigma,
        entropy_bits,
        scale: s,
        steps,
        mask,
        h_min,
        step_rule: rule,
    })
}
