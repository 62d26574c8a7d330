//! Bit-level view of BFloat16 words and component statistics.
//!
//! A BF16 word is laid out as `s eeeeeeee mmmmmmm` from the most significant
//! bit down. The codec only ever touches bit patterns; [`Bf16Word::value`]
//! exists for reports and tests.

use std::fmt;

use crate::error::{Error, Result};

pub const SIGN_MASK: u16 = 0x8000;
pub const EXPONENT_MASK: u16 = 0x7F80;
pub const MANTISSA_MASK: u16 = 0x007F;

/// A raw 16-bit BFloat16 bit pattern.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct Bf16Word(pub u16);

impl fmt::Debug for Bf16Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bf16Word({:#06x})", self.0)
    }
}

impl Bf16Word {
    #[inline]
    pub fn sign(self) -> u8 {
        (self.0 >> 15) as u8
    }

    #[inline]
    pub fn exponent(self) -> u8 {
        ((self.0 & EXPONENT_MASK) >> 7) as u8
    }

    #[inline]
    pub fn mantissa(self) -> u8 {
        (self.0 & MANTISSA_MASK) as u8
    }

    /// `(sign, exponent, mantissa)`.
    #[inline]
    pub fn decompose(self) -> (u8, u8, u8) {
        (self.sign(), self.exponent(), self.mantissa())
    }

    pub fn compose(sign: u8, exponent: u8, mantissa: u8) -> Result<Self> {
        if sign > 1 {
            return Err(Error::Range {
                component: "sign",
                value: sign.into(),
                max: 1,
            });
        }
        if mantissa > 0x7F {
            return Err(Error::Range {
                component: "mantissa",
                value: mantissa.into(),
                max: 0x7F,
            });
        }
        Ok(Self::from_parts(sign, exponent, mantissa))
    }

    /// Unchecked composition; out-of-range bits are masked off.
    #[inline]
    pub fn from_parts(sign: u8, exponent: u8, mantissa: u8) -> Self {
        Bf16Word(((sign as u16 & 1) << 15) | ((exponent as u16) << 7) | (mantissa as u16 & 0x7F))
    }

    /// Composes a word from a packed sign/mantissa byte (sign in bit 7) and a
    /// decoded exponent, the way the decode kernel does it.
    #[inline]
    pub fn from_packed(sign_mantissa: u8, exponent: u8) -> Self {
        let sign = (sign_mantissa & 0b1000_0000) as u16;
        let mantissa = (sign_mantissa & 0b0111_1111) as u16;
        Bf16Word((sign << 8) | ((exponent as u16) << 7) | mantissa)
    }

    /// Sign bit in bit 7, mantissa in bits 6..0.
    #[inline]
    pub fn packed_sign_mantissa(self) -> u8 {
        ((self.0 >> 8) as u8 & 0x80) | self.mantissa()
    }

    /// Numeric value. Exponent 0 is treated as zero/subnormal and 255 as
    /// infinity or NaN.
    pub fn value(self) -> f64 {
        let (sign, exponent, mantissa) = self.decompose();
        let s = if sign == 1 { -1.0 } else { 1.0 };
        let frac = mantissa as f64 / 128.0;
        match exponent {
            0 => s * 2f64.powi(-126) * frac,
            255 if mantissa == 0 => s * f64::INFINITY,
            255 => f64::NAN,
            e => s * 2f64.powi(e as i32 - 127) * (1.0 + frac),
        }
    }

    /// Round-to-nearest-even conversion from `f32`.
    pub fn from_f32(x: f32) -> Self {
        let bits = x.to_bits();
        if x.is_nan() {
            return Bf16Word(((bits >> 16) as u16) | 0x0040);
        }
        let rounding = 0x7FFF + ((bits >> 16) & 1);
        Bf16Word((bits.wrapping_add(rounding) >> 16) as u16)
    }

    pub fn to_f32(self) -> f32 {
        f32::from_bits((self.0 as u32) << 16)
    }
}

impl From<u16> for Bf16Word {
    fn from(raw: u16) -> Self {
        Bf16Word(raw)
    }
}

impl From<Bf16Word> for u16 {
    fn from(w: Bf16Word) -> Self {
        w.0
    }
}

/// Interprets a byte buffer as little-endian 16-bit words.
pub fn words_from_le_bytes(bytes: &[u8]) -> Result<Vec<u16>> {
    if !bytes.len().is_multiple_of(2) {
        return Err(Error::Structure(format!(
            "BF16 buffer has odd length {}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn words_to_le_bytes(words: &[u16]) -> Vec<u8> {
    let mut out = Vec::with_capacity(words.len() * 2);
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Shannon entropy in bits of a histogram, with `0 log 0 = 0`.
pub fn entropy(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // Single-symbol histograms otherwise come out as -0.0.
    h.max(0.0)
}

/// Histograms of the three BF16 fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentHistograms {
    pub sign: [u64; 2],
    pub exponent: [u64; 256],
    pub mantissa: [u64; 128],
    pub total: u64,
}

impl Default for ComponentHistograms {
    fn default() -> Self {
        Self {
            sign: [0; 2],
            exponent: [0; 256],
            mantissa: [0; 128],
            total: 0,
        }
    }
}

impl ComponentHistograms {
    pub fn accumulate(&mut self, words: &[u16]) {
        for &w in words {
            let (s, e, m) = Bf16Word(w).decompose();
            self.sign[s as usize] += 1;
            self.exponent[e as usize] += 1;
            self.mantissa[m as usize] += 1;
        }
        self.total += words.len() as u64;
    }

    /// Associative, commutative merge of shards.
    pub fn merge(&mut self, other: &ComponentHistograms) {
        for (a, b) in self.sign.iter_mut().zip(&other.sign) {
            *a += b;
        }
        for (a, b) in self.exponent.iter_mut().zip(&other.exponent) {
            *a += b;
        }
        for (a, b) in self.mantissa.iter_mut().zip(&other.mantissa) {
            *a += b;
        }
        self.total += other.total;
    }
}

/// Per-field histograms and entropies of a word sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentStats {
    pub hist: ComponentHistograms,
    pub sign_entropy: f64,
    pub exponent_entropy: f64,
    pub mantissa_entropy: f64,
}

impl ComponentStats {
    pub fn from_histograms(hist: ComponentHistograms) -> Result<Self> {
        if hist.total == 0 {
            return Err(Error::EmptyInput("component statistics need at least one word"));
        }
        Ok(Self {
            sign_entropy: entropy(&hist.sign),
            exponent_entropy: entropy(&hist.exponent),
            mantissa_entropy: entropy(&hist.mantissa),
            hist,
        })
    }

    pub fn total(&self) -> u64 {
        self.hist.total
    }

    pub fn distinct_exponents(&self) -> usize {
        self.hist.exponent.iter().filter(|&&c| c > 0).count()
    }

    /// Exponents sorted by descending frequency, ties by exponent value.
    pub fn exponent_ranking(&self) -> Vec<(u8, u64)> {
        let mut ranked: Vec<(u8, u64)> = self
            .hist
            .exponent
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(e, &c)| (e as u8, c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}

pub fn component_stats(words: &[u16]) -> Result<ComponentStats> {
    let mut hist = ComponentHistograms::default();
    hist.accumulate(words);
    ComponentStats::from_histograms(hist)
}

pub fn exponent_histogram(words: &[u16]) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &w in words {
        hist[Bf16Word(w).exponent() as usize] += 1;
    }
    hist
}
