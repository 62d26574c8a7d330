//! DF11 decoders.
//!
//! [`decompress_sequential`] walks the code tree bit by bit and is the
//! reference every other path is checked against. [`Decoder`] runs the
//! two-phase block kernel: blocks are independent work items spread over a
//! worker pool, and the `T` threads of a block are stepped through in
//! lockstep phases:
//!
//! 1. stage the block's bytes (plus 4 bytes of look-ahead) once;
//! 2. phase 1: every thread decodes its chunk from its gap and counts;
//! 3. barrier, then an exclusive Blelloch scan of the counts;
//! 4. phase 2: every thread re-decodes and writes into the block buffer;
//! 5. one contiguous copy of the buffer into the output.

use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;

use crate::bf16::Bf16Word;
use crate::bits::BitReader;
use crate::error::{Error, Result};
use crate::huffman::CodeTree;
use crate::lut::LutHierarchy;
use crate::packer::Df11Tensor;

/// Look-ahead staged past a block so the last thread can finish a codeword
/// that spills into the next block.
const SPILL_BYTES: usize = 4;

/// Upper bound on phantom symbols decoded from the zero padding of the
/// final byte.
const MAX_PADDING_SYMBOLS: u64 = 7;

pub fn decompress_sequential(t: &Df11Tensor) -> Result<Vec<u16>> {
    let tree = CodeTree::new(t.codebook());
    let bytes = t.encoded_exponent();
    let sign_mantissa = t.packed_sign_mantissa();
    let mut out = Vec::with_capacity(t.num_elements());
    let mut pos = 0usize;
    for (i, &sm) in sign_mantissa.iter().enumerate() {
        let (exponent, len) = tree
            .walk(|k| {
                let bit = pos + k;
                bytes.get(bit / 8).map(|&b| (b >> (7 - bit % 8)) & 1)
            })
            .ok_or_else(|| {
                Error::CorruptStream(format!(
                    "stream ended or hit an unused code at element {i} (bit {pos})"
                ))
            })?;
        pos += len as usize;
        out.push(Bf16Word::from_packed(sm, exponent).0);
    }
    Ok(out)
}

/// Work-efficient exclusive prefix sum (up-sweep, then down-sweep) over a
/// thread group. Each level is one lockstep step with a barrier after it.
pub fn exclusive_scan(counts: &[u32]) -> Vec<u32> {
    let mut buf = Vec::new();
    exclusive_scan_into(counts, &mut buf);
    buf.truncate(counts.len());
    buf
}

fn exclusive_scan_into(counts: &[u32], buf: &mut Vec<u32>) {
    let n = counts.len();
    let m = n.next_power_of_two().max(1);
    buf.clear();
    buf.extend_from_slice(counts);
    buf.resize(m, 0);

    let mut stride = 2;
    while stride <= m {
        for i in (0..m).step_by(stride) {
            buf[i + stride - 1] = buf[i + stride - 1].wrapping_add(buf[i + stride / 2 - 1]);
        }
        stride *= 2;
    }
    buf[m - 1] = 0;
    let mut stride = m;
    while stride >= 2 {
        let half = stride / 2;
        for i in (0..m).step_by(stride) {
            let left = buf[i + half - 1];
            buf[i + half - 1] = buf[i + stride - 1];
            buf[i + stride - 1] = buf[i + stride - 1].wrapping_add(left);
        }
        stride /= 2;
    }
}

/// Counts how many times each block's encoded bytes were staged.
#[derive(Debug)]
pub struct StagingLog {
    offsets: Vec<usize>,
    reads: Vec<AtomicU32>,
}

impl StagingLog {
    pub fn new(tensors: &[&Df11Tensor]) -> Self {
        let mut offsets = Vec::with_capacity(tensors.len() + 1);
        let mut total = 0;
        for t in tensors {
            offsets.push(total);
            total += t.num_blocks();
        }
        offsets.push(total);
        Self {
            offsets,
            reads: (0..total).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    pub fn reads(&self, tensor: usize, block: usize) -> u32 {
        self.reads[self.offsets[tensor] + block].load(Ordering::Relaxed)
    }

    /// Read counts of every block of every tensor, in order.
    pub fn all(&self) -> Vec<u32> {
        self.reads.iter().map(|r| r.load(Ordering::Relaxed)).collect()
    }

    fn record(&self, tensor: usize, block: usize) {
        self.reads[self.offsets[tensor] + block].fetch_add(1, Ordering::Relaxed);
    }
}

/// Per-thread bookkeeping of one decoded block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockTrace {
    /// Phase-1 element counts per thread.
    pub num_elements: Vec<u32>,
    /// Absolute output index of each thread's first element.
    pub thread_output_pos: Vec<u32>,
}

#[derive(Default)]
struct Scratch {
    staged: Vec<u8>,
    counts: Vec<u32>,
    scan: Vec<u32>,
    write_buffer: Vec<u16>,
}

struct BlockJob<'a> {
    tensor: usize,
    block: usize,
    out: &'a mut [u16],
}

/// Decodes one block into `out` (its slice of the output).
fn decode_block(
    t: &Df11Tensor,
    lut: &LutHierarchy,
    block: usize,
    out: &mut [u16],
    scratch: &mut Scratch,
    trace: Option<&mut BlockTrace>,
) -> Result<()> {
    let geometry = t.geometry();
    let tpb = geometry.threads_per_block as usize;
    let n = geometry.bytes_per_thread as usize;
    let encoded = t.encoded_exponent();
    let block_start = block * geometry.block_bytes();
    let data_len = geometry.block_bytes().min(encoded.len() - block_start);
    let first = t.block_output_pos()[block] as usize;
    let expected = out.len();
    let is_last = block + 1 == t.num_blocks();

    // Stage once; both phases read only the staged copy.
    let staged_end = (block_start + data_len + SPILL_BYTES).min(encoded.len());
    scratch.staged.clear();
    scratch.staged.extend_from_slice(&encoded[block_start..staged_end]);
    let staged = &scratch.staged[..];
    let gap_base = block * tpb;
    let chunk_bits = |thread: usize| 8 * n.min(data_len.saturating_sub(thread * n));

    // Phase 1: count.
    scratch.counts.clear();
    for thread in 0..tpb {
        let limit = chunk_bits(thread);
        let base = thread * n * 8;
        let mut bit = t.gap(gap_base + thread) as usize;
        let mut reader = BitReader::new(staged, base + bit);
        let mut count = 0u32;
        while bit < limit {
            let (_, len) = lut.decode(reader.peek32()).ok_or_else(|| {
                Error::CorruptStream(format!(
                    "block {block} thread {thread}: invalid code at bit {}",
                    8 * block_start + base + bit
                ))
            })?;
            reader.consume(len as u32);
            bit += len as usize;
            count += 1;
        }
        scratch.counts.push(count);
    }

    // Barrier, then scan.
    exclusive_scan_into(&scratch.counts, &mut scratch.scan);
    let decoded: u64 = scratch.counts.iter().map(|&c| c as u64).sum();
    let consistent = if is_last {
        decoded >= expected as u64 && decoded - expected as u64 <= MAX_PADDING_SYMBOLS
    } else {
        decoded == expected as u64
    };
    if !consistent {
        return Err(Error::MetadataMismatch {
            block,
            expected: expected as u64,
            found: decoded,
        });
    }

    // Phase 2: decode again and write. Positions at or past `expected` can
    // only come from padding bits of the final byte.
    let sign_mantissa = &t.packed_sign_mantissa()[first..first + expected];
    scratch.write_buffer.clear();
    scratch.write_buffer.resize(expected, 0);
    let buffer = &mut scratch.write_buffer[..];
    for thread in 0..tpb {
        let limit = chunk_bits(thread);
        let base = thread * n * 8;
        let mut bit = t.gap(gap_base + thread) as usize;
        let mut reader = BitReader::new(staged, base + bit);
        let mut pos = scratch.scan[thread] as usize;
        let start_pos = pos;
        while bit < limit && pos < expected {
            // Phase 1 already validated every window of this thread.
            let (exponent, len) = lut.decode(reader.peek32()).unwrap();
            reader.consume(len as u32);
            buffer[pos] = Bf16Word::from_packed(sign_mantissa[pos], exponent).0;
            bit += len as usize;
            pos += 1;
        }
        debug_assert_eq!(
            (pos - start_pos) as u32,
            scratch.counts[thread].min(expected.saturating_sub(start_pos) as u32)
        );
    }

    out.copy_from_slice(buffer);

    if let Some(trace) = trace {
        trace.num_elements = scratch.counts.clone();
        trace.thread_output_pos = scratch.scan[..tpb]
            .iter()
            .map(|&p| first as u32 + p)
            .collect();
    }
    Ok(())
}

/// Runs the two-phase block kernel and returns the per-thread counts and
/// output positions it computed for `block`.
pub fn trace_block(t: &Df11Tensor, block: usize) -> Result<BlockTrace> {
    let lut = LutHierarchy::build(t.codebook())?;
    let lo = t.block_output_pos()[block] as usize;
    let hi = t.block_output_pos()[block + 1] as usize;
    let mut out = vec![0u16; hi - lo];
    let mut trace = BlockTrace {
        num_elements: Vec::new(),
        thread_output_pos: Vec::new(),
    };
    decode_block(t, &lut, block, &mut out, &mut Scratch::default(), Some(&mut trace))?;
    Ok(trace)
}

/// Block-parallel decoder bound to a fixed-size worker pool.
pub struct Decoder {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Decoder {
    pub fn new(workers: usize) -> Result<Self> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("df11-worker-{i}"))
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        Ok(Self { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn decompress(&self, t: &Df11Tensor) -> Result<Vec<u16>> {
        let mut out = self.run(&[t], None)?;
        Ok(out.pop().unwrap())
    }

    /// Decodes all tensors as one launch: every block of every tensor joins
    /// a single work pool.
    pub fn decompress_group(&self, tensors: &[&Df11Tensor]) -> Result<Vec<Vec<u16>>> {
        self.run(tensors, None)
    }

    pub fn decompress_group_traced(
        &self,
        tensors: &[&Df11Tensor],
        log: &StagingLog,
    ) -> Result<Vec<Vec<u16>>> {
        self.run(tensors, Some(log))
    }

    fn run(&self, tensors: &[&Df11Tensor], log: Option<&StagingLog>) -> Result<Vec<Vec<u16>>> {
        if tensors.is_empty() {
            return Err(Error::EmptyInput("decode group has no tensors"));
        }
        let wrap = tensors.len() > 1;
        let luts = tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                LutHierarchy::build(t.codebook()).map_err(|e| tag(e, i, wrap))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut outputs: Vec<Vec<u16>> =
            tensors.iter().map(|t| vec![0u16; t.num_elements()]).collect();
        let mut jobs = Vec::new();
        for (ti, (t, out)) in tensors.iter().zip(outputs.iter_mut()).enumerate() {
            let bop = t.block_output_pos();
            let mut rest: &mut [u16] = out;
            for b in 0..t.num_blocks() {
                let (head, tail) = rest.split_at_mut((bop[b + 1] - bop[b]) as usize);
                jobs.push(BlockJob {
                    tensor: ti,
                    block: b,
                    out: head,
                });
                rest = tail;
            }
        }

        self.pool.install(|| {
            jobs.into_par_iter().try_for_each_init(Scratch::default, |scratch, job| {
                if let Some(log) = log {
                    log.record(job.tensor, job.block);
                }
                decode_block(
                    tensors[job.tensor],
                    &luts[job.tensor],
                    job.block,
                    job.out,
                    scratch,
                    None,
                )
                .map_err(|e| tag(e, job.tensor, wrap))
            })
        })?;
        Ok(outputs)
    }
}

fn tag(e: Error, tensor: usize, wrap: bool) -> Error {
    if wrap {
        e.in_tensor(&format!("#{tensor}"))
    } else {
        e
    }
}

pub fn decompress_parallel(t: &Df11Tensor, workers: usize) -> Result<Vec<u16>> {
    Decoder::new(workers)?.decompress(t)
}

pub fn decompress_group(tensors: &[&Df11Tensor], workers: usize) -> Result<Vec<Vec<u16>>> {
    Decoder::new(workers)?.decompress_group(tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bf16::Bf16Word;
    use crate::huffman::ExponentCodebook;
    use crate::packer::{compress, DecodeGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_scan(counts: &[u32]) -> Vec<u32> {
        let mut acc = 0;
        counts
            .iter()
            .map(|&c| {
                let o = acc;
                acc += c;
                o
            })
            .collect()
    }

    fn random_words(rng: &mut ChaCha8Rng, n: usize) -> Vec<u16> {
        (0..n)
            .map(|_| {
                let e = 110 + (rng.random::<u32>().trailing_zeros() as u8).min(25);
                Bf16Word::from_parts(rng.random_range(0..2), e, rng.random_range(0..128)).0
            })
            .collect()
    }

    #[test]
    fn scan_examples() {
        assert_eq!(exclusive_scan(&[3, 1, 7, 0]), vec![0, 3, 4, 11]);
        assert_eq!(exclusive_scan(&[0; 9]), vec![0; 9]);
        assert_eq!(exclusive_scan(&[5]), vec![0]);
        assert_eq!(exclusive_scan(&[]), Vec::<u32>::new());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [3usize, 256, 257, 1000] {
            let c: Vec<u32> = (0..t).map(|_| rng.random_range(0..100)).collect();
            assert_eq!(exclusive_scan(&c), naive_scan(&c));
        }
    }

    #[test]
    fn sequential_roundtrip_and_truncation() {
        let w = Bf16Word::from_parts(1, 3, 77).0;
        let t = compress(&[w], &[1], DecodeGeometry::default(), None).unwrap();
        assert_eq!(decompress_sequential(&t).unwrap(), vec![w]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let words = random_words(&mut rng, 3000);
        let mut t = compress(&words, &[3000], DecodeGeometry::default(), None).unwrap();
        assert_eq!(decompress_sequential(&t).unwrap(), words);
        let len = t.encoded_exponent().len();
        t.encoded_exponent_mut().truncate(len / 2);
        assert!(matches!(decompress_sequential(&t), Err(Error::CorruptStream(_))));
    }

    #[test]
    fn single_thread_geometry_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let words = random_words(&mut rng, 700);
        let t = compress(&words, &[700], DecodeGeometry::new(1, 5).unwrap(), None).unwrap();
        assert_eq!(decompress_parallel(&t, 1).unwrap(), words);
        let big = DecodeGeometry::new(1, 100_000).unwrap();
        let t = compress(&words, &[700], big, None).unwrap();
        assert_eq!(t.num_blocks(), 1);
        assert_eq!(decompress_parallel(&t, 1).unwrap(), decompress_sequential(&t).unwrap());
    }

    #[test]
    fn worker_counts_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let words = random_words(&mut rng, 50_000);
        let t = compress(&words, &[50_000], DecodeGeometry::new(32, 8).unwrap(), None).unwrap();
        let oracle = decompress_sequential(&t).unwrap();
        assert_eq!(oracle, words);
        for workers in [1, 2, 8] {
            assert_eq!(decompress_parallel(&t, workers).unwrap(), oracle);
        }
    }

    #[test]
    fn codeword_spanning_block_boundary() {
        // A=0 (1 bit), B=1 followed by 19 more bits. With T=1, n=5 a block
        // is 40 bits: 30 A's then B starting at bit 30 spans into block 1.
        let mut lengths = [0u8; 256];
        lengths[120] = 1;
        lengths[121] = 20;
        for (s, len) in lengths.iter_mut().enumerate().take(140).skip(122) {
            *len = (s - 120) as u8;
        }
        lengths[140] = 20;
        let cb = ExponentCodebook::from_lengths(lengths).unwrap();
        assert!(cb.is_complete());
        let a = Bf16Word::from_parts(0, 120, 1).0;
        let b = Bf16Word::from_parts(1, 121, 2).0;
        let mut words = vec![a; 30];
        words.push(b);
        words.extend(vec![a; 50]);
        let g = DecodeGeometry::new(1, 5).unwrap();
        let t = compress(&words, &[words.len()], g, Some(&cb)).unwrap();
        assert_eq!(t.codebook().codeword(121).len, 20);
        // B occupies bits 30..50; block 1 starts at bit 40
        assert_eq!(t.gap(1), 10);
        assert_eq!(t.block_output_pos()[1], 31);
        let trace0 = trace_block(&t, 0).unwrap();
        assert_eq!(trace0.num_elements, vec![31]);
        let trace1 = trace_block(&t, 1).unwrap();
        assert_eq!(trace1.thread_output_pos, vec![31]);
        assert_eq!(decompress_parallel(&t, 2).unwrap(), words);
    }

    #[test]
    fn metadata_mismatch_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let words = random_words(&mut rng, 20_000);
        let t = compress(&words, &[20_000], DecodeGeometry::new(8, 8).unwrap(), None).unwrap();
        assert!(t.num_blocks() > 3);
        let mut bad = t.clone();
        bad.block_output_pos_mut()[2] += 1;
        let err = decompress_parallel(&bad, 2).unwrap_err();
        assert!(matches!(err, Error::MetadataMismatch { .. }), "{err}");
    }

    #[test]
    fn group_matches_individual_and_stages_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let tensors: Vec<Df11Tensor> = (0..7)
            .map(|i| {
                let n = 1 + i * 977;
                let g = DecodeGeometry::new(1 + i as u32 * 5, 5 + i as u32).unwrap();
                compress(&random_words(&mut rng, n), &[n], g, None).unwrap()
            })
            .collect();
        let refs: Vec<&Df11Tensor> = tensors.iter().collect();
        let decoder = Decoder::new(4).unwrap();
        let log = StagingLog::new(&refs);
        let group = decoder.decompress_group_traced(&refs, &log).unwrap();
        assert!(log.all().iter().all(|&r| r == 1));
        for (t, out) in tensors.iter().zip(&group) {
            assert_eq!(out, &decompress_sequential(t).unwrap());
            assert_eq!(out, &decoder.decompress(t).unwrap());
        }
        let one = decoder.decompress_group(&refs[..1]).unwrap();
        assert_eq!(one[0], decoder.decompress(refs[0]).unwrap());
        assert!(decoder.decompress_group(&[]).is_err());
    }
}
