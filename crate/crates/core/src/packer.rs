//! BF16 tensor to DF11 layout.
//!
//! Exponents are Huffman coded into `encoded_exponent` (MSB first, zero
//! padded to a byte). Sign and mantissa stay as one byte per element. The
//! encoded stream is cut into `n`-byte chunks, one per decode thread, and
//! `T` chunks form a block. Two small arrays let threads start anywhere:
//!
//! * `gaps[c]`: bit offset of the first codeword starting at or after the
//!   start of chunk `c`, relative to that start (always `< 32`).
//! * `block_output_pos[b]`: index of the first element whose codeword
//!   starts inside block `b`; a final entry holds the element count.

use crate::bf16::{exponent_histogram, Bf16Word};
use crate::bits::{gap_at, pack_gaps, packed_gap_len, BitWriter};
use crate::error::{Error, Result};
use crate::huffman::{ExponentCodebook, FIRST_RESERVED};
use crate::lut::{decodable_codebook, LutHierarchy};

pub const DEFAULT_THREADS_PER_BLOCK: u32 = 256;
pub const DEFAULT_BYTES_PER_THREAD: u32 = 8;
/// Smallest chunk that is guaranteed to contain a codeword start when codes
/// may be 32 bits long.
pub const MIN_BYTES_PER_THREAD: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecodeGeometry {
    pub threads_per_block: u32,
    pub bytes_per_thread: u32,
}

impl Default for DecodeGeometry {
    fn default() -> Self {
        Self {
            threads_per_block: DEFAULT_THREADS_PER_BLOCK,
            bytes_per_thread: DEFAULT_BYTES_PER_THREAD,
        }
    }
}

impl DecodeGeometry {
    pub fn new(threads_per_block: u32, bytes_per_thread: u32) -> Result<Self> {
        let g = Self {
            threads_per_block,
            bytes_per_thread,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads_per_block == 0 {
            return Err(Error::Geometry("threads per block must be at least 1".into()));
        }
        if self.bytes_per_thread < MIN_BYTES_PER_THREAD {
            return Err(Error::Geometry(format!(
                "bytes per thread must be at least {MIN_BYTES_PER_THREAD}, got {}",
                self.bytes_per_thread
            )));
        }
        if (self.threads_per_block as u64) * (self.bytes_per_thread as u64) > u32::MAX as u64 {
            return Err(Error::Geometry("block size overflows 32 bits".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn block_bytes(&self) -> usize {
        self.threads_per_block as usize * self.bytes_per_thread as usize
    }

    pub fn num_blocks(&self, encoded_len: usize) -> usize {
        encoded_len.div_ceil(self.block_bytes())
    }
}

/// A compressed BF16 tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Df11Tensor {
    encoded_exponent: Vec<u8>,
    packed_sign_mantissa: Vec<u8>,
    gaps: Vec<u8>,
    block_output_pos: Vec<u32>,
    geometry: DecodeGeometry,
    codebook: ExponentCodebook,
    shape: Vec<usize>,
}

impl Df11Tensor {
    /// Reassembles a tensor from stored parts, checking every structural
    /// invariant the decoders rely on.
    pub fn from_parts(
        encoded_exponent: Vec<u8>,
        packed_sign_mantissa: Vec<u8>,
        gaps: Vec<u8>,
        block_output_pos: Vec<u32>,
        geometry: DecodeGeometry,
        codebook: ExponentCodebook,
        shape: Vec<usize>,
    ) -> Result<Self> {
        geometry.validate()?;
        let num_elements = packed_sign_mantissa.len();
        if num_elements == 0 {
            return Err(Error::Structure("tensor has no elements".into()));
        }
        if shape_elements(&shape) != Some(num_elements) {
            return Err(Error::Structure(format!(
                "shape {shape:?} does not match {num_elements} elements"
            )));
        }
        let blocks = geometry.num_blocks(encoded_exponent.len());
        if encoded_exponent.is_empty() {
            return Err(Error::Structure("encoded exponent stream is empty".into()));
        }
        if block_output_pos.len() != blocks + 1 {
            return Err(Error::Structure(format!(
                "expected {} block output positions, found {}",
                blocks + 1,
                block_output_pos.len()
            )));
        }
        let threads = blocks * geometry.threads_per_block as usize;
        if gaps.len() != packed_gap_len(threads) {
            return Err(Error::Structure(format!(
                "expected {} packed gap bytes, found {}",
                packed_gap_len(threads),
                gaps.len()
            )));
        }
        if block_output_pos[0] != 0 || *block_output_pos.last().unwrap() as usize != num_elements {
            return Err(Error::Structure(
                "block output positions must run from 0 to the element count".into(),
            ));
        }
        if block_output_pos.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Structure("block output positions decrease".into()));
        }
        if gap_at(&gaps, 0) != 0 {
            return Err(Error::Structure("first gap must be zero".into()));
        }
        // Every codeword takes at least one bit.
        if num_elements as u64 > encoded_exponent.len() as u64 * 8 {
            return Err(Error::Structure(
                "more elements than encoded bits".into(),
            ));
        }
        Ok(Self {
            encoded_exponent,
            packed_sign_mantissa,
            gaps,
            block_output_pos,
            geometry,
            codebook,
            shape,
        })
    }

    pub fn encoded_exponent(&self) -> &[u8] {
        &self.encoded_exponent
    }

    pub fn packed_sign_mantissa(&self) -> &[u8] {
        &self.packed_sign_mantissa
    }

    /// Packed 5-bit gap array.
    pub fn packed_gaps(&self) -> &[u8] {
        &self.gaps
    }

    pub fn gap(&self, thread: usize) -> u8 {
        gap_at(&self.gaps, thread)
    }

    pub fn gaps(&self) -> Vec<u8> {
        (0..self.num_threads()).map(|i| self.gap(i)).collect()
    }

    pub fn block_output_pos(&self) -> &[u32] {
        &self.block_output_pos
    }

    pub fn geometry(&self) -> DecodeGeometry {
        self.geometry
    }

    pub fn codebook(&self) -> &ExponentCodebook {
        &self.codebook
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn num_elements(&self) -> usize {
        self.packed_sign_mantissa.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.block_output_pos.len() - 1
    }

    pub fn num_threads(&self) -> usize {
        self.num_blocks() * self.geometry.threads_per_block as usize
    }

    pub fn measure(&self) -> CompressionReport {
        CompressionReport::of(self)
    }

    #[doc(hidden)]
    pub fn encoded_exponent_mut(&mut self) -> &mut Vec<u8> {
        &mut self.encoded_exponent
    }

    #[doc(hidden)]
    pub fn block_output_pos_mut(&mut self) -> &mut Vec<u32> {
        &mut self.block_output_pos
    }
}

pub(crate) fn shape_elements(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Checks that every exponent in `hist` is codable by `codebook`.
fn check_coverage(codebook: &ExponentCodebook, hist: &[u64; 256]) -> Result<()> {
    if let Some((s, &c)) = hist
        .iter()
        .enumerate()
        .skip(FIRST_RESERVED)
        .find(|(_, &c)| c > 0)
    {
        return Err(Error::ReservedSymbol {
            symbol: s as u8,
            count: c,
        });
    }
    match hist
        .iter()
        .enumerate()
        .find(|(s, &c)| c > 0 && codebook.len_of(*s as u8) == 0)
    {
        Some((s, _)) => Err(Error::Inconsistent { symbol: s as u8 }),
        None => Ok(()),
    }
}

/// Compresses `words` (with logical `shape`) for the given decode geometry.
/// Without a codebook one is built from the tensor's own exponents.
pub fn compress(
    words: &[u16],
    shape: &[usize],
    geometry: DecodeGeometry,
    codebook: Option<&ExponentCodebook>,
) -> Result<Df11Tensor> {
    geometry.validate()?;
    if words.is_empty() {
        return Err(Error::EmptyInput("cannot compress an empty tensor"));
    }
    if words.len() > u32::MAX as usize {
        return Err(Error::Range {
            component: "element count",
            value: u32::MAX,
            max: u32::MAX - 1,
        });
    }
    if shape_elements(shape) != Some(words.len()) {
        return Err(Error::Structure(format!(
            "shape {shape:?} does not match {} elements",
            words.len()
        )));
    }
    let hist = exponent_histogram(words);
    let codebook = match codebook {
        Some(cb) => {
            check_coverage(cb, &hist)?;
            cb.clone()
        }
        None => decodable_codebook(&hist)?,
    };
    // Refuse codebooks the block-parallel decoder cannot index.
    LutHierarchy::build(&codebook)?;

    let total_bits = codebook.encoded_bits(&hist);
    let mut writer = BitWriter::with_capacity(total_bits.div_ceil(8) as usize);
    let mut packed_sign_mantissa = Vec::with_capacity(words.len());

    let chunk_bits = geometry.bytes_per_thread as u64 * 8;
    let tpb = geometry.threads_per_block as u64;
    let block_bits = chunk_bits * tpb;
    let blocks = geometry.num_blocks(total_bits.div_ceil(8) as usize);
    let threads = blocks * tpb as usize;
    let mut gaps = vec![0u8; threads];
    let mut block_output_pos = vec![words.len() as u32; blocks + 1];

    let mut next_chunk = 0u64;
    let mut next_block = 0u64;
    for (i, &w) in words.iter().enumerate() {
        let word = Bf16Word(w);
        let start = writer.position();
        while next_chunk * chunk_bits <= start {
            let gap = start - next_chunk * chunk_bits;
            debug_assert!(gap < 32);
            gaps[next_chunk as usize] = gap as u8;
            next_chunk += 1;
        }
        while next_block * block_bits <= start {
            block_output_pos[next_block as usize] = i as u32;
            next_block += 1;
        }
        let cw = codebook.codeword(word.exponent());
        writer.write(cw.code, cw.len);
        packed_sign_mantissa.push(word.packed_sign_mantissa());
    }
    let (encoded_exponent, bits) = writer.finish();
    debug_assert_eq!(bits, total_bits);
    // Chunks holding only the tail of the last codeword point at the end of
    // the stream; chunks past the end keep gap 0.
    while next_chunk * chunk_bits < total_bits {
        gaps[next_chunk as usize] = (total_bits - next_chunk * chunk_bits) as u8;
        next_chunk += 1;
    }

    Ok(Df11Tensor {
        encoded_exponent,
        packed_sign_mantissa,
        gaps: pack_gaps(&gaps),
        block_output_pos,
        geometry,
        codebook,
        shape: shape.to_vec(),
    })
}

/// Bytes of the fixed part of a container tensor record (everything except
/// the name and the shape dimensions).
pub const RECORD_FIXED_BYTES: usize = 2 + 1 + 8 + 3 * 4 + 4 + 4 + 4 * (8 + 8 + 4);
pub const CODEBOOK_BYTES: usize = 256;

/// Size accounting for one compressed tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionReport {
    pub num_elements: usize,
    pub original_bytes: usize,
    pub encoded_exponent_bytes: usize,
    pub sign_mantissa_bytes: usize,
    pub gap_bytes: usize,
    pub block_pos_bytes: usize,
    pub codebook_bytes: usize,
    pub header_bytes: usize,
    pub compressed_bytes: usize,
    pub max_code_len: u8,
    pub lut_tables: usize,
    pub lut_bytes: usize,
    pub exponent_entropy: f64,
    pub mean_code_len: f64,
}

impl CompressionReport {
    fn of(t: &Df11Tensor) -> Self {
        let num_elements = t.num_elements();
        let gap_bytes = packed_gap_len(t.num_threads());
        let block_pos_bytes = 4 * t.block_output_pos.len();
        let compressed_bytes = t.encoded_exponent.len()
            + t.packed_sign_mantissa.len()
            + gap_bytes
            + block_pos_bytes
            + CODEBOOK_BYTES
            + RECORD_FIXED_BYTES;
        let lut = LutHierarchy::build(&t.codebook).ok();
        CompressionReport {
            num_elements,
            original_bytes: 2 * num_elements,
            encoded_exponent_bytes: t.encoded_exponent.len(),
            sign_mantissa_bytes: t.packed_sign_mantissa.len(),
            gap_bytes,
            block_pos_bytes,
            codebook_bytes: CODEBOOK_BYTES,
            header_bytes: RECORD_FIXED_BYTES,
            compressed_bytes,
            max_code_len: t.codebook.max_len(),
            lut_tables: lut.as_ref().map_or(0, |l| l.num_tables()),
            lut_bytes: lut.as_ref().map_or(0, |l| l.resident_bytes()),
            exponent_entropy: f64::NAN,
            mean_code_len: f64::NAN,
        }
    }

    /// Adds entropy figures that need the original exponent histogram.
    pub fn with_histogram(mut self, codebook: &ExponentCodebook, hist: &[u64; 256]) -> Self {
        self.exponent_entropy = crate::bf16::entropy(hist);
        self.mean_code_len = codebook.expected_code_length(hist).unwrap_or(f64::NAN);
        self
    }

    /// compressed / original.
    pub fn ratio(&self) -> f64 {
        self.compressed_bytes as f64 / self.original_bytes as f64
    }

    pub fn avg_bit_width(&self) -> f64 {
        8.0 * self.compressed_bytes as f64 / self.num_elements as f64
    }

    pub fn metadata_bytes(&self) -> usize {
        self.gap_bytes + self.block_pos_bytes
    }

    /// Gap and block-position bytes as a fraction of the compressed size.
    pub fn metadata_fraction(&self) -> f64 {
        self.metadata_bytes() as f64 / self.compressed_bytes as f64
    }

    /// Sums sizes over several tensors. Per-tensor figures (code length,
    /// LUT count, entropy) keep their maximum.
    pub fn total<'a>(reports: impl IntoIterator<Item = &'a CompressionReport>) -> Self {
        let mut acc = CompressionReport {
            num_elements: 0,
            original_bytes: 0,
            encoded_exponent_bytes: 0,
            sign_mantissa_bytes: 0,
            gap_bytes: 0,
            block_pos_bytes: 0,
            codebook_bytes: 0,
            header_bytes: 0,
            compressed_bytes: 0,
            max_code_len: 0,
            lut_tables: 0,
            lut_bytes: 0,
            exponent_entropy: f64::NAN,
            mean_code_len: f64::NAN,
        };
        for r in reports {
            acc.num_elements += r.num_elements;
            acc.original_bytes += r.original_bytes;
            acc.encoded_exponent_bytes += r.encoded_exponent_bytes;
            acc.sign_mantissa_bytes += r.sign_mantissa_bytes;
            acc.gap_bytes += r.gap_bytes;
            acc.block_pos_bytes += r.block_pos_bytes;
            acc.codebook_bytes += r.codebook_bytes;
            acc.header_bytes += r.header_bytes;
            acc.compressed_bytes += r.compressed_bytes;
            acc.max_code_len = acc.max_code_len.max(r.max_code_len);
            acc.lut_tables = acc.lut_tables.max(r.lut_tables);
            acc.lut_bytes = acc.lut_bytes.max(r.lut_bytes);
        }
        acc
    }
}
