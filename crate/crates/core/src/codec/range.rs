//! Byte-oriented range coder (carry-counting variant).
//!
//! Frequencies are 16-bit: every `encode`/`decode` pair works against a
//! cumulative table with total exactly `PROB_TOTAL`, which keeps
//! `range / total` nonzero after normalization. The first output byte is the
//! flushed initial cache and is always zero; the decoder skips it.

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Narrows the interval to `[start, start + freq) / total`.
    pub fn encode(&mut self, start: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0);
        debug_assert!(start + freq <= total);
        debug_assert!(total <= PROB_TOTAL);
        let r = self.range / total;
        self.low += start as u64 * r as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.shift_low();
            self.range <<= 8;
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut b = self.cache;
            loop {
                self.out.push(b.wrapping_add(carry));
                b = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = ((self.low as u32) << 8) as u64;
    }

    /// Flushes the interval; the returned bytes fully determine the stream.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    r: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder { code: 0, range: u32::MAX, r: 0, input, pos: 1 };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative frequency of the pending symbol; caller looks it up in its
    /// table and must follow with [`RangeDecoder::update`].
    pub fn decode_freq(&mut self, total: u32) -> u32 {
        self.r = self.range / total;
        (self.code / self.r).min(total - 1)
    }

    pub fn update(&mut self, start: u32, freq: u32) {
        self.code -= start * self.r;
        self.range = self.r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    /// Uniform byte model: every symbol costs exactly 8 bits.
    fn encode_bytes(data: &[u8]) -> Vec<u8> {
        let mut enc = RangeEncoder::new();
        for &b in data {
            enc.encode(b as u32, 1, 256);
        }
        enc.finish()
    }

    fn decode_bytes(stream: &[u8], n: usize) -> Vec<u8> {
        let mut dec = RangeDecoder::new(stream);
        (0..n)
            .map(|_| {
                let f = dec.decode_freq(256);
                dec.update(f, 1);
                f as u8
            })
            .collect()
    }

    #[test]
    fn uniform_bytes_round_trip() {
        let mut rng = SeededRng::new(1);
        for len in [0usize, 1, 2, 17, 256, 4096] {
            let data: Vec<u8> = (0..len).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
            let stream = encode_bytes(&data);
            assert_eq!(decode_bytes(&stream, len), data, "len {len}");
            // 8 bits/symbol plus the 5-byte flush and the leading zero.
            assert!(stream.len() <= len + 7, "len {len}: stream {}", stream.len());
        }
    }

    #[test]
    fn skewed_model_round_trip_and_compression() {
        // Two symbols: p(0) = 65535/65536. A run of zeros must shrink a lot.
        let cum = [0u32, 65535, 65536];
        let n = 10_000;
        let mut enc = RangeEncoder::new();
        for _ in 0..n {
            enc.encode(cum[0], cum[1] - cum[0], PROB_TOTAL);
        }
        let stream = enc.finish();
        // Ideal: n * -log2(65535/65536) bits ~ 28 bits total.
        assert!(stream.len() < 32, "stream {}", stream.len());
        let mut dec = RangeDecoder::new(&stream);
        for _ in 0..n {
            let f = dec.decode_freq(PROB_TOTAL);
            let sym = if f < 65535 { 0 } else { 1 };
            assert_eq!(sym, 0);
            dec.update(cum[sym], cum[sym + 1] - cum[sym]);
        }
    }

    #[test]
    fn carry_propagation_fuzz() {
        // Mixed totals and frequencies across many seeds; exact round trips.
        for seed in 0..50u64 {
            let mut rng = SeededRng::new(seed);
            let n = 200 + rng.next_index(200);
            let mut symbols = Vec::with_capacity(n);
            let mut enc = RangeEncoder::new();
            for _ in 0..n {
                let b = (rng.next_u64() & 0xFF) as u8;
                symbols.push(b);
                enc.encode(b as u32, 1, 256);
            }
            let stream = enc.finish();
            assert_eq!(decode_bytes(&stream, n), symbols, "seed {seed}");
        }
    }
}
