//! Hierarchical 256-entry decode tables.
//!
//! The code tree is cut into subtrees of height 8. Each subtree becomes one
//! table indexed by the next byte of the stream. An entry below 240 is a
//! decoded exponent; an entry `v >= 240` points at table `256 - v` (table 0
//! is the root), so 16 child tables are addressable. The `CodeLengths`
//! table then tells the caller how many bits the decoded symbol used.
//!
//! Entries no codeword reaches hold an invalid marker: the smallest exponent
//! without a code (its code length is 0), or failing that the pointer to the
//! first unallocated table. Either way decoding fails loudly on them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::huffman::{ExponentCodebook, FIRST_RESERVED, NUM_SYMBOLS};

pub const TABLE_LEN: usize = 256;
pub const POINTER_BASE: u8 = FIRST_RESERVED as u8;
/// Child tables addressable by the 16 pointer values.
pub const MAX_CHILD_TABLES: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LutHierarchy {
    /// `k` tables of 256 entries, root first.
    tables: Vec<u8>,
    code_lengths: [u8; NUM_SYMBOLS],
    /// Bits consumed per table level (8 outside of tests).
    width: u8,
    invalid: u8,
    depth_profile: Vec<usize>,
}

impl LutHierarchy {
    pub fn build(codebook: &ExponentCodebook) -> Result<Self> {
        Self::build_with_width(codebook, 8)
    }

    /// Builds tables decoding `width` bits per level. Only the first
    /// `2^width` entries of each table are meaningful when `width < 8`.
    #[doc(hidden)]
    pub fn build_with_width(codebook: &ExponentCodebook, width: u8) -> Result<Self> {
        assert!((1..=8).contains(&width));
        let b = width as u32;
        let order = codebook.canonical_order();

        // (depth, prefix) of every subtree root below the root table, in
        // breadth-first canonical order.
        let mut children: BTreeMap<(u32, u64), usize> = BTreeMap::new();
        for &sym in &order {
            let cw = codebook.codeword(sym);
            let len = cw.len as u32;
            for depth in 1..=(len - 1) / b {
                let prefix = (cw.code as u64) >> (len - depth * b);
                children.insert((depth, prefix), 0);
            }
        }
        let mut profile = vec![1usize];
        for &(depth, _) in children.keys() {
            if profile.len() <= depth as usize {
                profile.resize(depth as usize + 1, 0);
            }
            profile[depth as usize] += 1;
        }
        if children.len() > MAX_CHILD_TABLES {
            return Err(Error::HierarchyOverflow {
                needed: children.len(),
                profile,
            });
        }
        for (i, idx) in children.values_mut().enumerate() {
            *idx = i + 1;
        }
        let k = children.len() + 1;

        let invalid = match (0..FIRST_RESERVED).find(|&s| codebook.len_of(s as u8) == 0) {
            Some(s) => s as u8,
            None if k <= MAX_CHILD_TABLES => (TABLE_LEN - k) as u8,
            None if codebook.is_complete() => 0,
            None => {
                return Err(Error::MalformedCodebook(
                    "incomplete code leaves no byte value for invalid LUT entries".into(),
                ))
            }
        };

        let mut tables = vec![invalid; k * TABLE_LEN];
        let mask = (1u64 << b) - 1;
        for (&(depth, prefix), &idx) in &children {
            let parent = if depth == 1 {
                0
            } else {
                children[&(depth - 1, prefix >> b)]
            };
            tables[parent * TABLE_LEN + (prefix & mask) as usize] = (TABLE_LEN - idx) as u8;
        }
        for &sym in &order {
            let cw = codebook.codeword(sym);
            let len = cw.len as u32;
            let depth = (len - 1) / b;
            let table = if depth == 0 {
                0
            } else {
                children[&(depth, (cw.code as u64) >> (len - depth * b))]
            };
            let rem = len - depth * b;
            let local = (cw.code as u64 & ((1u64 << rem) - 1)) << (b - rem);
            let start = table * TABLE_LEN + local as usize;
            tables[start..start + (1usize << (b - rem))].fill(sym);
        }

        Ok(Self {
            tables,
            code_lengths: *codebook.lengths(),
            width,
            invalid,
            depth_profile: profile,
        })
    }

    /// Number of tables `k`, root included.
    pub fn num_tables(&self) -> usize {
        self.tables.len() / TABLE_LEN
    }

    pub fn table(&self, index: usize) -> &[u8] {
        &self.tables[index * TABLE_LEN..(index + 1) * TABLE_LEN]
    }

    pub fn code_lengths(&self) -> &[u8; NUM_SYMBOLS] {
        &self.code_lengths
    }

    pub fn invalid_marker(&self) -> u8 {
        self.invalid
    }

    /// Tables per depth level, root level first.
    pub fn depth_profile(&self) -> &[usize] {
        &self.depth_profile
    }

    /// Bytes held by all tables plus `CodeLengths`: `(k + 1) * 256`.
    pub fn resident_bytes(&self) -> usize {
        self.tables.len() + self.code_lengths.len()
    }

    /// Decodes the symbol at the front of a left-aligned 32-bit window.
    /// Returns `(exponent, code length)`, or `None` on an invalid entry.
    #[inline(always)]
    pub fn decode(&self, window: u32) -> Option<(u8, u8)> {
        debug_assert_eq!(self.width, 8);
        let tables = &self.tables[..];
        let mut e = tables[(window >> 24) as usize];
        if e >= POINTER_BASE {
            let mut shift = 16i32;
            loop {
                if shift < 0 {
                    return None;
                }
                let t = TABLE_LEN - e as usize;
                let entry = *tables.get(t * TABLE_LEN + ((window >> shift) & 0xFF) as usize)?;
                e = entry;
                if e < POINTER_BASE {
                    break;
                }
                shift -= 8;
            }
        }
        match self.code_lengths[e as usize] {
            0 => None,
            len => Some((e, len)),
        }
    }

    /// One decode step over the next 32 bits of the stream.
    pub fn decode_step(&self, window: u32) -> Result<(u8, u8)> {
        self.decode_any_width(window).ok_or_else(|| {
            Error::CorruptStream(format!("window {window:#010x} hits an invalid LUT entry"))
        })
    }

    /// Width-generic decode used with test hierarchies.
    fn decode_any_width(&self, window: u32) -> Option<(u8, u8)> {
        if self.width == 8 {
            return self.decode(window);
        }
        let b = self.width as u32;
        let mut table = 0usize;
        let mut consumed = 0u32;
        loop {
            if consumed + b > 32 {
                return None;
            }
            let idx = ((window << consumed) >> (32 - b)) as usize;
            let e = *self.tables.get(table * TABLE_LEN + idx)?;
            consumed += b;
            if e < POINTER_BASE {
                return match self.code_lengths[e as usize] {
                    0 => None,
                    len => Some((e, len)),
                };
            }
            table = TABLE_LEN - e as usize;
        }
    }
}

/// Code for `hist` whose hierarchy fits the addressable child tables. An
/// optimal code that needs more has its length limit lowered until it fits;
/// any code of at most 8 bits lives in the root table alone.
pub fn decodable_codebook(hist: &[u64; NUM_SYMBOLS]) -> Result<ExponentCodebook> {
    let optimal = ExponentCodebook::build(hist)?;
    let mut overflow = match LutHierarchy::build(&optimal) {
        Ok(_) => return Ok(optimal),
        Err(e @ Error::HierarchyOverflow { .. }) => e,
        Err(e) => return Err(e),
    };
    for limit in (8..optimal.max_len()).rev() {
        let cb = ExponentCodebook::build_limited(hist, limit)?;
        match LutHierarchy::build(&cb) {
            Ok(_) => return Ok(cb),
            Err(e @ Error::HierarchyOverflow { .. }) => overflow = e,
            Err(e) => return Err(e),
        }
    }
    Err(overflow)
}

/// A flat `2^L`-entry table mapping every L-bit index to the symbol whose
/// code prefixes it. Only practical for small L; `None` above 24 bits.
/// Unreachable entries hold `None`.
pub fn monolithic_lut(codebook: &ExponentCodebook) -> Option<Vec<Option<u8>>> {
    let l = codebook.max_len() as u32;
    if l > 24 {
        return None;
    }
    let mut lut = vec![None; 1usize << l];
    for sym in codebook.canonical_order() {
        let cw = codebook.codeword(sym);
        let span = 1usize << (l - cw.len as u32);
        let start = (cw.code as usize) << (l - cw.len as u32);
        lut[start..start + span].fill(Some(sym));
    }
    Some(lut)
}
