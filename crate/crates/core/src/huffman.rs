//! Canonical, length-limited Huffman codes over the 256 exponent symbols.
//!
//! Codes are canonical in (length, symbol) order, so a codebook is fully
//! described by its 256 code lengths. Symbols 240..=255 are never coded:
//! the LUT hierarchy uses those byte values as table pointers.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub const NUM_SYMBOLS: usize = 256;
/// First exponent value reserved as a LUT pointer.
pub const FIRST_RESERVED: usize = 240;
pub const MAX_CODE_LEN: u8 = 32;

/// A codeword, right-aligned in `code`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Codeword {
    pub code: u32,
    pub len: u8,
}

#[derive(Clone, PartialEq, Eq)]
pub struct ExponentCodebook {
    lengths: [u8; NUM_SYMBOLS],
    codes: [u32; NUM_SYMBOLS],
    max_len: u8,
}

impl std::fmt::Debug for ExponentCodebook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let present: Vec<(usize, u8)> = self
            .lengths
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(|(s, &l)| (s, l))
            .collect();
        f.debug_struct("ExponentCodebook")
            .field("max_len", &self.max_len)
            .field("lengths", &present)
            .finish()
    }
}

impl ExponentCodebook {
    /// Builds an optimal code for `hist`, limited to 32-bit codewords.
    pub fn build(hist: &[u64; NUM_SYMBOLS]) -> Result<Self> {
        Self::build_limited(hist, MAX_CODE_LEN)
    }

    /// Builds the cheapest code for `hist` with no codeword longer than
    /// `max_len` bits.
    pub fn build_limited(hist: &[u64; NUM_SYMBOLS], max_len: u8) -> Result<Self> {
        if hist.iter().all(|&c| c == 0) {
            return Err(Error::EmptyInput("exponent histogram is all zero"));
        }
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

        let symbols: Vec<usize> = (0..NUM_SYMBOLS).filter(|&s| hist[s] > 0).collect();
        if max_len == 0 || max_len > MAX_CODE_LEN || symbols.len() > 1usize << max_len.min(16) {
            return Err(Error::Range {
                component: "code length limit",
                value: max_len as u32,
                max: MAX_CODE_LEN as u32,
            });
        }
        let mut lengths = [0u8; NUM_SYMBOLS];
        if symbols.len() == 1 {
            lengths[symbols[0]] = 1;
        } else {
            let weights: Vec<u64> = symbols.iter().map(|&s| hist[s]).collect();
            let mut lens = huffman_lengths(&weights);
            if lens.iter().any(|&l| l > max_len as u32) {
                lens = package_merge(&weights, max_len as u32);
            }
            for (&s, &l) in symbols.iter().zip(&lens) {
                lengths[s] = l as u8;
            }
        }
        Self::from_lengths(lengths)
    }

    /// Rebuilds canonical codes from lengths alone.
    pub fn from_lengths(lengths: [u8; NUM_SYMBOLS]) -> Result<Self> {
        if lengths.iter().all(|&l| l == 0) {
            return Err(Error::MalformedCodebook("no symbol has a code".into()));
        }
        if let Some((s, &l)) = lengths.iter().enumerate().find(|(_, &l)| l > MAX_CODE_LEN) {
            return Err(Error::MalformedCodebook(format!(
                "symbol {s} has code length {l} > {MAX_CODE_LEN}"
            )));
        }
        if let Some(s) = (FIRST_RESERVED..NUM_SYMBOLS).find(|&s| lengths[s] > 0) {
            return Err(Error::MalformedCodebook(format!(
                "reserved symbol {s} has a code"
            )));
        }
        // Kraft sum scaled by 2^32.
        let kraft: u64 = lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| 1u64 << (MAX_CODE_LEN - l))
            .sum();
        if kraft > 1u64 << MAX_CODE_LEN {
            return Err(Error::MalformedCodebook(
                "code lengths violate the Kraft inequality".into(),
            ));
        }

        let max_len = *lengths.iter().max().unwrap();
        let mut count_per_len = [0u32; MAX_CODE_LEN as usize + 1];
        for &l in &lengths {
            if l > 0 {
                count_per_len[l as usize] += 1;
            }
        }
        let mut next_code = [0u64; MAX_CODE_LEN as usize + 2];
        let mut code = 0u64;
        for len in 1..=MAX_CODE_LEN as usize {
            code = (code + count_per_len[len - 1] as u64) << 1;
            next_code[len] = code;
        }
        let mut codes = [0u32; NUM_SYMBOLS];
        for s in 0..NUM_SYMBOLS {
            let l = lengths[s] as usize;
            if l > 0 {
                codes[s] = next_code[l] as u32;
                next_code[l] += 1;
            }
        }
        Ok(Self {
            lengths,
            codes,
            max_len,
        })
    }

    pub fn lengths(&self) -> &[u8; NUM_SYMBOLS] {
        &self.lengths
    }

    #[inline]
    pub fn len_of(&self, symbol: u8) -> u8 {
        self.lengths[symbol as usize]
    }

    #[inline]
    pub fn codeword(&self, symbol: u8) -> Codeword {
        Codeword {
            code: self.codes[symbol as usize],
            len: self.lengths[symbol as usize],
        }
    }

    /// Longest code length L.
    pub fn max_len(&self) -> u8 {
        self.max_len
    }

    pub fn num_symbols(&self) -> usize {
        self.lengths.iter().filter(|&&l| l > 0).count()
    }

    /// Present symbols in canonical order (length, then symbol).
    pub fn canonical_order(&self) -> Vec<u8> {
        let mut syms: Vec<u8> = (0..NUM_SYMBOLS)
            .filter(|&s| self.lengths[s] > 0)
            .map(|s| s as u8)
            .collect();
        syms.sort_by_key(|&s| (self.lengths[s as usize], s));
        syms
    }

    /// True when the Kraft sum is exactly one.
    pub fn is_complete(&self) -> bool {
        let kraft: u64 = self
            .lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| 1u64 << (MAX_CODE_LEN - l))
            .sum();
        kraft == 1u64 << MAX_CODE_LEN
    }

    /// Wire form: byte `i` is the code length of symbol `i`.
    pub fn to_bytes(&self) -> [u8; NUM_SYMBOLS] {
        self.lengths
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let lengths: [u8; NUM_SYMBOLS] = bytes.try_into().map_err(|_| {
            Error::MalformedCodebook(format!("expected 256 length bytes, got {}", bytes.len()))
        })?;
        Self::from_lengths(lengths)
    }

    /// Mean code length in bits under `hist`.
    pub fn expected_code_length(&self, hist: &[u64; NUM_SYMBOLS]) -> Result<f64> {
        let mut total = 0u64;
        let mut bits = 0u128;
        for (s, &c) in hist.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let l = self.lengths[s];
            if l == 0 {
                return Err(Error::Inconsistent { symbol: s as u8 });
            }
            total += c;
            bits += c as u128 * l as u128;
        }
        if total == 0 {
            return Err(Error::EmptyInput("histogram is all zero"));
        }
        Ok(bits as f64 / total as f64)
    }

    /// Total encoded bits for `hist`.
    pub fn encoded_bits(&self, hist: &[u64; NUM_SYMBOLS]) -> u64 {
        hist.iter()
            .zip(&self.lengths)
            .map(|(&c, &l)| c * l as u64)
            .sum()
    }
}

/// Unconstrained Huffman code lengths. Ties are broken by creation order,
/// so the result is a pure function of `weights`.
pub fn huffman_lengths(weights: &[u64]) -> Vec<u32> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![1];
    }
    // parent[i] for the 2n-1 nodes; leaves first.
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        weights.iter().enumerate().map(|(i, &w)| Reverse((w, i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    let root = 2 * n - 2;
    let mut depth = vec![0u32; 2 * n - 1];
    for i in (0..root).rev() {
        depth[i] = depth[parent[i]] + 1;
    }
    depth.truncate(n);
    depth
}

#[derive(Clone, Copy)]
enum PmNode {
    Leaf(usize),
    Package(usize, usize),
}

/// Optimal code lengths subject to `len <= max_len` (package-merge).
///
/// Panics if `weights.len() > 2^max_len`.
pub fn package_merge(weights: &[u64], max_len: u32) -> Vec<u32> {
    let n = weights.len();
    assert!(n as u128 <= 1u128 << max_len, "too many symbols for max_len");
    if n == 1 {
        return vec![1];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (weights[i], i));

    let mut arena: Vec<PmNode> = order.iter().map(|&i| PmNode::Leaf(i)).collect();
    let leaves: Vec<(u64, usize)> = order
        .iter()
        .enumerate()
        .map(|(node, &i)| (weights[i], node))
        .collect();

    let mut list = leaves.clone();
    for _ in 1..max_len {
        let mut packages = Vec::with_capacity(list.len() / 2);
        for pair in list.chunks_exact(2) {
            arena.push(PmNode::Package(pair[0].1, pair[1].1));
            packages.push((pair[0].0 + pair[1].0, arena.len() - 1));
        }
        // Merge keeping leaves first on equal weight.
        let mut merged = Vec::with_capacity(leaves.len() + packages.len());
        let (mut i, mut j) = (0, 0);
        while i < leaves.len() || j < packages.len() {
            if j == packages.len() || (i < leaves.len() && leaves[i].0 <= packages[j].0) {
                merged.push(leaves[i]);
                i += 1;
            } else {
                merged.push(packages[j]);
                j += 1;
            }
        }
        list = merged;
    }

    let mut lengths = vec![0u32; n];
    let mut stack = Vec::new();
    for &(_, node) in &list[..2 * n - 2] {
        stack.push(node);
        while let Some(id) = stack.pop() {
            match arena[id] {
                PmNode::Leaf(sym) => lengths[sym] += 1,
                PmNode::Package(a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
    }
    lengths
}

const NO_CHILD: u32 = u32::MAX;

/// Binary decoding tree for bit-by-bit traversal.
#[derive(Clone, Debug)]
pub struct CodeTree {
    // children[node] = [zero, one]; leaves are encoded as `LEAF | symbol`.
    children: Vec<[u32; 2]>,
}

const LEAF: u32 = 1 << 31;

impl CodeTree {
    pub fn new(codebook: &ExponentCodebook) -> Self {
        let mut children = vec![[NO_CHILD; 2]];
        for sym in codebook.canonical_order() {
            let cw = codebook.codeword(sym);
            let mut node = 0usize;
            for i in (0..cw.len).rev() {
                let bit = ((cw.code >> i) & 1) as usize;
                if i == 0 {
                    children[node][bit] = LEAF | sym as u32;
                } else {
                    let next = children[node][bit];
                    if next == NO_CHILD {
                        children.push([NO_CHILD; 2]);
                        let id = (children.len() - 1) as u32;
                        children[node][bit] = id;
                        node = id as usize;
                    } else {
                        node = next as usize;
                    }
                }
            }
        }
        Self { children }
    }

    /// Walks the tree one bit at a time; `bit(i)` yields the i-th bit of
    /// the input or `None` past its end. Returns `(symbol, bits consumed)`.
    pub fn walk(&self, mut bit: impl FnMut(usize) -> Option<u8>) -> Option<(u8, u8)> {
        let mut node = 0usize;
        let mut consumed = 0usize;
        loop {
            let b = bit(consumed)?;
            consumed += 1;
            let next = self.children[node][b as usize];
            if next == NO_CHILD {
                return None;
            }
            if next & LEAF != 0 {
                return Some(((next & 0xFF) as u8, consumed as u8));
            }
            node = next as usize;
        }
    }

    /// Decodes one symbol from a left-aligned 32-bit window.
    pub fn decode_window(&self, window: u32) -> Option<(u8, u8)> {
        self.walk(|i| (i < 32).then(|| ((window >> (31 - i)) & 1) as u8))
    }
}
