//! MSB-first bitstream writer, 32-bit window reads, and 5-bit gap packing.

/// Appends codewords most significant bit first.
#[derive(Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
    bits: u64,
}

impl BitWriter {
    pub fn with_capacity(bytes: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(bytes),
            ..Self::default()
        }
    }

    /// Bits written so far.
    #[inline]
    pub fn position(&self) -> u64 {
        self.bits
    }

    /// Writes the low `len` bits of `code`, `len <= 32`.
    #[inline]
    pub fn write(&mut self, code: u32, len: u8) {
        debug_assert!(len <= 32);
        let len = len as u32;
        self.acc = (self.acc << len) | (code as u64 & ((1u64 << len) - 1));
        self.filled += len;
        self.bits += len as u64;
        while self.filled >= 8 {
            self.filled -= 8;
            self.bytes.push((self.acc >> self.filled) as u8);
        }
    }

    /// Flushes a partial byte, zero-padding its low bits.
    pub fn finish(mut self) -> (Vec<u8>, u64) {
        if self.filled > 0 {
            self.bytes.push((self.acc << (8 - self.filled)) as u8);
        }
        (self.bytes, self.bits)
    }
}

/// Reads 32 bits starting at `bit`, zero-extended past the end of `bytes`.
#[inline(always)]
pub fn read_window(bytes: &[u8], bit: usize) -> u32 {
    let byte = bit / 8;
    let raw = match bytes.get(byte..byte + 8) {
        Some(s) => u64::from_be_bytes(s.try_into().unwrap()),
        None => read_tail(bytes, byte),
    };
    ((raw << (bit % 8)) >> 32) as u32
}

#[cold]
fn read_tail(bytes: &[u8], byte: usize) -> u64 {
    let mut raw = [0u8; 8];
    if byte < bytes.len() {
        let n = bytes.len() - byte;
        raw[..n].copy_from_slice(&bytes[byte..]);
    }
    u64::from_be_bytes(raw)
}

/// MSB-first reader holding up to 64 stream bits in a register. Reads past
/// the end of `bytes` yield zeros.
pub struct BitReader<'a> {
    bytes: &'a [u8],
    next_byte: usize,
    buf: u64,
    avail: u32,
}

impl<'a> BitReader<'a> {
    #[inline(always)]
    pub fn new(bytes: &'a [u8], bit: usize) -> Self {
        let mut r = Self {
            bytes,
            next_byte: bit / 8,
            buf: 0,
            avail: 0,
        };
        r.refill();
        r.consume((bit % 8) as u32);
        r
    }

    #[inline(always)]
    fn refill(&mut self) {
        let raw = match self.bytes.get(self.next_byte..self.next_byte + 8) {
            Some(s) => u64::from_be_bytes(s.try_into().unwrap()),
            None => read_tail(self.bytes, self.next_byte),
        };
        // Bits past `avail` already equal the stream, so OR-ing is exact.
        self.buf |= raw >> self.avail;
        let take = (63 - self.avail) / 8;
        self.next_byte += take as usize;
        self.avail += 8 * take;
    }

    /// The next 32 bits.
    #[inline(always)]
    pub fn peek32(&mut self) -> u32 {
        if self.avail < 32 {
            self.refill();
        }
        (self.buf >> 32) as u32
    }

    /// Drops `len <= 32` bits; call only after `peek32`.
    #[inline(always)]
    pub fn consume(&mut self, len: u32) {
        self.buf <<= len;
        self.avail -= len;
    }
}

pub const GAP_BITS: u32 = 5;

/// Bytes needed to hold `count` 5-bit entries.
pub fn packed_gap_len(count: usize) -> usize {
    (count * GAP_BITS as usize).div_ceil(8)
}

/// Packs 5-bit values LSB-first: entry `i` occupies stream bits
/// `5i..5i+5`, where stream bit `j` is bit `j % 8` of byte `j / 8`.
pub fn pack_gaps(gaps: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; packed_gap_len(gaps.len())];
    for (i, &g) in gaps.iter().enumerate() {
        debug_assert!(g < 32);
        let bit = i * GAP_BITS as usize;
        let v = (g as u16 & 0x1F) << (bit % 8);
        out[bit / 8] |= v as u8;
        if bit % 8 > 3 {
            out[bit / 8 + 1] |= (v >> 8) as u8;
        }
    }
    out
}

#[inline]
pub fn gap_at(packed: &[u8], index: usize) -> u8 {
    let bit = index * GAP_BITS as usize;
    let lo = packed[bit / 8] as u16;
    let hi = packed.get(bit / 8 + 1).copied().unwrap_or(0) as u16;
    (((hi << 8 | lo) >> (bit % 8)) & 0x1F) as u8
}
