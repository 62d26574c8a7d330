//! The DF11 multi-tensor container. Byte layout is documented in
//! `docs/FORMAT.md`; all integers are little-endian.
//!
//! A container has a 16-byte preamble, a CRC-protected metadata block
//! (codebooks, decode groups, tensor records) and a payload region holding
//! the four sections of every tensor back to back. Each section carries its
//! own CRC32 so a reader can load one decode group without touching the
//! others.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use regex::Regex;

use crate::bits::packed_gap_len;
use crate::decoder::Decoder;
use crate::error::{Error, Result};
use crate::huffman::ExponentCodebook;
use crate::packer::{shape_elements, DecodeGeometry, Df11Tensor, CODEBOOK_BYTES};

pub const MAGIC: [u8; 4] = *b"DF11";
pub const VERSION: u16 = 1;
pub const BYTE_ORDER_LE: u8 = 0;
pub const PREAMBLE_LEN: usize = 16;

/// Where the tensors came from; decompression writes the same kind back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SourceKind {
    #[default]
    Raw = 0,
    Safetensors = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionKind {
    EncodedExponent,
    PackedSignMantissa,
    Gaps,
    BlockOutputPos,
}

impl SectionKind {
    pub const ALL: [SectionKind; 4] = [
        SectionKind::EncodedExponent,
        SectionKind::PackedSignMantissa,
        SectionKind::Gaps,
        SectionKind::BlockOutputPos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SectionKind::EncodedExponent => "encoded_exponent",
            SectionKind::PackedSignMantissa => "packed_sign_mantissa",
            SectionKind::Gaps => "gaps",
            SectionKind::BlockOutputPos => "block_output_pos",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Section {
    pub offset: u64,
    pub len: u64,
    pub crc: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub num_elements: u64,
    pub geometry: DecodeGeometry,
    pub num_blocks: u32,
    pub codebook: u32,
    pub group: u32,
    pub sections: [Section; 4],
}

impl TensorRecord {
    pub fn section(&self, kind: SectionKind) -> Section {
        self.sections[kind as usize]
    }

    pub fn payload_bytes(&self) -> u64 {
        self.sections.iter().map(|s| s.len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupRecord {
    pub label: String,
    /// Indices into the tensor records, in decode order.
    pub members: Vec<u32>,
}

/// A tensor to be stored, with its decode group index.
#[derive(Clone, Debug)]
pub struct NamedTensor {
    pub name: String,
    pub group: u32,
    pub tensor: Df11Tensor,
}

/// Everything needed to write a container.
#[derive(Clone, Debug, Default)]
pub struct ContainerSpec {
    pub source: SourceKind,
    pub group_labels: Vec<String>,
    pub tensors: Vec<NamedTensor>,
}

impl ContainerSpec {
    /// One group per tensor, labelled with the tensor name.
    pub fn ungrouped(source: SourceKind, tensors: Vec<(String, Df11Tensor)>) -> Self {
        let group_labels = tensors.iter().map(|(n, _)| n.clone()).collect();
        let tensors = tensors
            .into_iter()
            .enumerate()
            .map(|(i, (name, tensor))| NamedTensor {
                name,
                group: i as u32,
                tensor,
            })
            .collect();
        Self {
            source,
            group_labels,
            tensors,
        }
    }
}

/// Name fragments marking token embeddings and output heads, which always
/// decode on their own.
const STANDALONE_MARKERS: [&str; 4] = ["embed", "lm_head", "wte", "wpe"];

pub fn is_standalone_tensor(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    STANDALONE_MARKERS.iter().any(|m| lower.contains(m))
}

/// Assigns decode groups. Without a pattern every tensor is its own group.
/// With one, tensors whose names match share the group keyed by the first
/// capture (or the whole match); everything else, and embedding-like
/// tensors, stay alone. Groups are numbered in order of first appearance.
pub fn plan_groups(names: &[&str], pattern: Option<&Regex>) -> (Vec<String>, Vec<u32>) {
    let mut labels: Vec<String> = Vec::new();
    let mut by_key: HashMap<String, u32> = HashMap::new();
    let mut assignment = Vec::with_capacity(names.len());
    for &name in names {
        let key = pattern
            .filter(|_| !is_standalone_tensor(name))
            .and_then(|re| re.captures(name))
            .map(|c| c.get(1).unwrap_or_else(|| c.get(0).unwrap()).as_str().to_owned());
        let id = match key {
            Some(key) => *by_key.entry(key.clone()).or_insert_with(|| {
                labels.push(key);
                (labels.len() - 1) as u32
            }),
            None => {
                labels.push(name.to_owned());
                (labels.len() - 1) as u32
            }
        };
        assignment.push(id);
    }
    (labels, assignment)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str16(&mut self, s: &str) -> Result<()> {
        let len: u16 = s
            .len()
            .try_into()
            .map_err(|_| Error::Structure(format!("name longer than 65535 bytes: {s:.40}...")))?;
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

fn crc32(parts: &[&[u8]]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for p in parts {
        h.update(p);
    }
    h.finalize()
}

fn block_pos_bytes(t: &Df11Tensor) -> Vec<u8> {
    t.block_output_pos()
        .iter()
        .flat_map(|p| p.to_le_bytes())
        .collect()
}

/// Serializes a container. Output is a pure function of `spec`.
pub fn encode_container(spec: &ContainerSpec) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    for t in &spec.tensors {
        if !seen.insert(t.name.as_str()) {
            return Err(Error::DuplicateName(t.name.clone()));
        }
        if t.group as usize >= spec.group_labels.len() {
            return Err(Error::Structure(format!(
                "tensor {:?} references missing group {}",
                t.name, t.group
            )));
        }
        if t.tensor.shape().len() > u8::MAX as usize
            || t.tensor.shape().iter().any(|&d| d > u32::MAX as usize)
        {
            return Err(Error::Structure(format!(
                "tensor {:?}: shape {:?} does not fit the record",
                t.name,
                t.tensor.shape()
            )));
        }
    }

    // Codebooks shared by identical length tables are stored once.
    let mut codebooks: Vec<[u8; 256]> = Vec::new();
    let mut codebook_ids = Vec::with_capacity(spec.tensors.len());
    for t in &spec.tensors {
        let bytes = t.tensor.codebook().to_bytes();
        let id = match codebooks.iter().position(|c| *c == bytes) {
            Some(id) => id,
            None => {
                codebooks.push(bytes);
                codebooks.len() - 1
            }
        };
        codebook_ids.push(id as u32);
    }

    let payloads: Vec<[Vec<u8>; 4]> = spec
        .tensors
        .iter()
        .map(|t| {
            [
                t.tensor.encoded_exponent().to_vec(),
                t.tensor.packed_sign_mantissa().to_vec(),
                t.tensor.packed_gaps().to_vec(),
                block_pos_bytes(&t.tensor),
            ]
        })
        .collect();

    let metadata_len = metadata_size(spec, codebooks.len());
    let mut offset = (PREAMBLE_LEN + metadata_len) as u64;

    let mut meta = Writer(Vec::with_capacity(metadata_len));
    meta.u8(spec.source as u8);
    meta.u32(codebooks.len() as u32);
    for c in &codebooks {
        meta.0.extend_from_slice(c);
    }
    meta.u32(spec.group_labels.len() as u32);
    for (g, label) in spec.group_labels.iter().enumerate() {
        meta.str16(label)?;
        let members: Vec<u32> = spec
            .tensors
            .iter()
            .enumerate()
            .filter(|(_, t)| t.group as usize == g)
            .map(|(i, _)| i as u32)
            .collect();
        meta.u32(members.len() as u32);
        for m in members {
            meta.u32(m);
        }
    }
    meta.u32(spec.tensors.len() as u32);
    for ((t, payload), &codebook) in spec.tensors.iter().zip(&payloads).zip(&codebook_ids) {
        let tensor = &t.tensor;
        let geometry = tensor.geometry();
        meta.str16(&t.name)?;
        meta.u8(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            meta.u32(d as u32);
        }
        meta.u64(tensor.num_elements() as u64);
        meta.u32(geometry.threads_per_block);
        meta.u32(geometry.bytes_per_thread);
        meta.u32(tensor.num_blocks() as u32);
        meta.u32(codebook);
        meta.u32(t.group);
        for section in payload {
            meta.u64(offset);
            meta.u64(section.len() as u64);
            meta.u32(crc32(&[section]));
            offset += section.len() as u64;
        }
    }
    debug_assert_eq!(meta.0.len(), metadata_len);

    let mut preamble = Writer(Vec::with_capacity(PREAMBLE_LEN));
    preamble.0.extend_from_slice(&MAGIC);
    preamble.u16(VERSION);
    preamble.u8(BYTE_ORDER_LE);
    preamble.u8(0);
    preamble.u32(metadata_len as u32);
    let crc = crc32(&[&preamble.0, &meta.0]);
    preamble.u32(crc);

    let mut out = preamble.0;
    out.extend_from_slice(&meta.0);
    for payload in &payloads {
        for section in payload {
            out.extend_from_slice(section);
        }
    }
    Ok(out)
}

fn metadata_size(spec: &ContainerSpec, codebooks: usize) -> usize {
    let groups: usize = spec.group_labels.iter().map(|l| 2 + l.len() + 4).sum::<usize>()
        + 4 * spec.tensors.len();
    let records: usize = spec
        .tensors
        .iter()
        .map(|t| crate::packer::RECORD_FIXED_BYTES + t.name.len() + 4 * t.tensor.shape().len())
        .sum();
    1 + 4 + codebooks * CODEBOOK_BYTES + 4 + groups + 4 + records
}

pub fn write_container(spec: &ContainerSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_container(spec)?)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Structure(format!(
                "metadata ends inside {what} (offset {})",
                PREAMBLE_LEN + self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn str16(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        String::from_utf8(self.take(len, what)?.to_vec())
            .map_err(|_| Error::Structure(format!("{what} is not UTF-8")))
    }
    /// Bounds a count read from the file by the bytes left, assuming each
    /// item needs at least `min_item` bytes.
    fn count(&mut self, min_item: usize, what: &str) -> Result<usize> {
        let n = self.u32(what)? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(Error::Structure(format!("{what} {n} exceeds metadata size")));
        }
        Ok(n)
    }
}

/// A byte range read from the payload region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PayloadRead {
    pub offset: u64,
    pub len: u64,
}

/// An opened container. Only the metadata is read up front; tensor payloads
/// are fetched on demand.
pub struct ContainerReader<R> {
    inner: R,
    source: SourceKind,
    file_len: u64,
    codebooks: Vec<ExponentCodebook>,
    groups: Vec<GroupRecord>,
    tensors: Vec<TensorRecord>,
    by_name: HashMap<String, usize>,
    reads: Vec<PayloadRead>,
}

impl ContainerReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

fn truncated(what: impl Into<String>, needed: u64, available: u64) -> Error {
    Error::Truncated {
        what: what.into(),
        needed,
        available,
    }
}

impl<R: Read + Seek> ContainerReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let file_len = inner.seek(SeekFrom::End(0))?;
        inner.seek(SeekFrom::Start(0))?;
        let mut preamble = [0u8; PREAMBLE_LEN];
        let head = (file_len as usize).min(PREAMBLE_LEN);
        inner.read_exact(&mut preamble[..head])?;
        if head < MAGIC.len() || preamble[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if head < PREAMBLE_LEN {
            return Err(truncated("preamble", PREAMBLE_LEN as u64, file_len));
        }
        let version = u16::from_le_bytes([preamble[4], preamble[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if preamble[6] != BYTE_ORDER_LE {
            return Err(Error::Structure(format!("unknown byte order tag {}", preamble[6])));
        }
        if preamble[7] != 0 {
            return Err(Error::Structure("reserved preamble byte is not zero".into()));
        }
        let metadata_len = u32::from_le_bytes(preamble[8..12].try_into().unwrap()) as u64;
        let stored_crc = u32::from_le_bytes(preamble[12..16].try_into().unwrap());
        let metadata_end = PREAMBLE_LEN as u64 + metadata_len;
        if metadata_end > file_len {
            return Err(truncated("metadata", metadata_end, file_len));
        }
        let mut metadata = vec![0u8; metadata_len as usize];
        inner.read_exact(&mut metadata)?;
        let computed = crc32(&[&preamble[..12], &metadata]);
        if computed != stored_crc {
            return Err(Error::Crc {
                section: "metadata".into(),
                stored: stored_crc,
                computed,
            });
        }

        let mut c = Cursor {
            buf: &metadata,
            pos: 0,
        };
        let source = match c.u8("source kind")? {
            0 => SourceKind::Raw,
            1 => SourceKind::Safetensors,
            k => return Err(Error::Structure(format!("unknown source kind {k}"))),
        };
        let num_codebooks = c.count(CODEBOOK_BYTES, "codebook count")?;
        let codebooks = (0..num_codebooks)
            .map(|i| {
                ExponentCodebook::from_bytes(c.take(CODEBOOK_BYTES, "codebook")?).map_err(|e| {
                    Error::Structure(format!("codebook {i}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let num_groups = c.count(6, "group count")?;
        let mut groups = Vec::with_capacity(num_groups);
        for _ in 0..num_groups {
            let label = c.str16("group label")?;
            let n = c.count(4, "group member count")?;
            let members = (0..n)
                .map(|_| c.u32("group member"))
                .collect::<Result<Vec<_>>>()?;
            groups.push(GroupRecord { label, members });
        }
        let num_tensors = c.count(crate::packer::RECORD_FIXED_BYTES, "tensor count")?;
        let mut tensors = Vec::with_capacity(num_tensors);
        let mut by_name = HashMap::new();
        let mut expected_offset = metadata_end;
        for i in 0..num_tensors {
            let name = c.str16("tensor name")?;
            let rank = c.u8("rank")? as usize;
            let shape = (0..rank)
                .map(|_| c.u32("shape").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let num_elements = c.u64("element count")?;
            let geometry = DecodeGeometry {
                threads_per_block: c.u32("threads per block")?,
                bytes_per_thread: c.u32("bytes per thread")?,
            };
            let num_blocks = c.u32("block count")?;
            let codebook = c.u32("codebook id")?;
            let group = c.u32("group id")?;
            let mut sections = [Section {
                offset: 0,
                len: 0,
                crc: 0,
            }; 4];
            for s in &mut sections {
                s.offset = c.u64("section offset")?;
                s.len = c.u64("section length")?;
                s.crc = c.u32("section crc")?;
            }
            let record = TensorRecord {
                name,
                shape,
                num_elements,
                geometry,
                num_blocks,
                codebook,
                group,
                sections,
            };
            validate_record(&record, num_codebooks, &groups, i)?;
            for (kind, s) in SectionKind::ALL.iter().zip(&record.sections) {
                if s.offset != expected_offset {
                    return Err(Error::Structure(format!(
                        "tensor {:?} section {} starts at {}, expected {}",
                        record.name,
                        kind.name(),
                        s.offset,
                        expected_offset
                    )));
                }
                expected_offset = s
                    .offset
                    .checked_add(s.len)
                    .ok_or_else(|| Error::Structure("section length overflows".into()))?;
                if expected_offset > file_len {
                    return Err(truncated(
                        format!("tensor {:?} section {}", record.name, kind.name()),
                        expected_offset,
                        file_len,
                    ));
                }
            }
            if by_name.insert(record.name.clone(), i).is_some() {
                return Err(Error::DuplicateName(record.name));
            }
            tensors.push(record);
        }
        if c.pos != metadata.len() {
            return Err(Error::Structure(format!(
                "{} unused metadata bytes",
                metadata.len() - c.pos
            )));
        }
        if expected_offset != file_len {
            return Err(Error::Structure(format!(
                "{} trailing bytes after the last section",
                file_len - expected_offset
            )));
        }
        let mut member_count = 0;
        for (g, group) in groups.iter().enumerate() {
            for &m in &group.members {
                let ok = tensors
                    .get(m as usize)
                    .is_some_and(|t| t.group as usize == g);
                if !ok {
                    return Err(Error::Structure(format!(
                        "group {:?} lists tensor {m} which is not in it",
                        group.label
                    )));
                }
                member_count += 1;
            }
        }
        if member_count != tensors.len() {
            return Err(Error::Structure(
                "group table does not cover every tensor exactly once".into(),
            ));
        }

        Ok(Self {
            inner,
            source,
            file_len,
            codebooks,
            groups,
            tensors,
            by_name,
            reads: Vec::new(),
        })
    }

    pub fn source(&self) -> SourceKind {
        self.source
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    pub fn tensors(&self) -> &[TensorRecord] {
        &self.tensors
    }

    pub fn groups(&self) -> &[GroupRecord] {
        &self.groups
    }

    pub fn codebooks(&self) -> &[ExponentCodebook] {
        &self.codebooks
    }

    pub fn tensor_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Payload byte ranges read so far.
    pub fn payload_reads(&self) -> &[PayloadRead] {
        &self.reads
    }

    pub fn clear_payload_reads(&mut self) {
        self.reads.clear();
    }

    fn read_section(&mut self, record: usize, kind: SectionKind) -> Result<Vec<u8>> {
        let r = &self.tensors[record];
        let s = r.section(kind);
        self.inner.seek(SeekFrom::Start(s.offset))?;
        let mut buf = vec![0u8; s.len as usize];
        self.inner.read_exact(&mut buf)?;
        self.reads.push(PayloadRead {
            offset: s.offset,
            len: s.len,
        });
        let computed = crc32(&[&buf]);
        if computed != s.crc {
            return Err(Error::Crc {
                section: format!("tensor {:?} section {}", r.name, kind.name()),
                stored: s.crc,
                computed,
            });
        }
        Ok(buf)
    }

    /// Loads and CRC-checks one tensor.
    pub fn load_tensor(&mut self, index: usize) -> Result<Df11Tensor> {
        let mut sections = SectionKind::ALL
            .iter()
            .map(|&k| self.read_section(index, k))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let r = &self.tensors[index];
        let encoded = sections.next().unwrap();
        let sign_mantissa = sections.next().unwrap();
        let gaps = sections.next().unwrap();
        let block_pos: Vec<u32> = sections
            .next()
            .unwrap()
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Df11Tensor::from_parts(
            encoded,
            sign_mantissa,
            gaps,
            block_pos,
            r.geometry,
            self.codebooks[r.codebook as usize].clone(),
            r.shape.clone(),
        )
        .map_err(|e| e.in_tensor(&r.name))
    }

    pub fn load_by_name(&mut self, name: &str) -> Result<Df11Tensor> {
        let index = self
            .tensor_index(name)
            .ok_or_else(|| Error::UnknownTensor(name.to_owned()))?;
        self.load_tensor(index)
    }

    /// Loads every tensor of one decode group, in group order.
    pub fn load_group(&mut self, group: usize) -> Result<Vec<(String, Df11Tensor)>> {
        let members = self
            .groups
            .get(group)
            .ok_or_else(|| Error::Structure(format!("no decode group {group}")))?
            .members
            .clone();
        members
            .into_iter()
            .map(|m| {
                let t = self.load_tensor(m as usize)?;
                Ok((self.tensors[m as usize].name.clone(), t))
            })
            .collect()
    }

    /// Loads and decodes one group as a single batched launch.
    pub fn decode_group(
        &mut self,
        group: usize,
        decoder: &Decoder,
    ) -> Result<Vec<(String, Vec<u16>)>> {
        let loaded = self.load_group(group)?;
        let refs: Vec<&Df11Tensor> = loaded.iter().map(|(_, t)| t).collect();
        let outputs = decoder.decompress_group(&refs).map_err(|e| match e {
            Error::Tensor { name, source } => {
                let idx: usize = name.trim_start_matches('#').parse().unwrap_or(0);
                source.in_tensor(&loaded[idx].0)
            }
            e if loaded.len() == 1 => e.in_tensor(&loaded[0].0),
            e => e,
        })?;
        Ok(loaded.into_iter().map(|(n, _)| n).zip(outputs).collect())
    }

    /// Decodes every group; results are in tensor-record order.
    pub fn decode_all(&mut self, decoder: &Decoder) -> Result<Vec<(String, Vec<u16>)>> {
        let mut out: Vec<Option<(String, Vec<u16>)>> = vec![None; self.tensors.len()];
        for g in 0..self.groups.len() {
            for (name, words) in self.decode_group(g, decoder)? {
                let i = self.by_name[&name];
                out[i] = Some((name, words));
            }
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }

    /// Loads every tensor, checking all CRCs and structural invariants.
    pub fn verify_all(&mut self) -> Result<()> {
        for i in 0..self.tensors.len() {
            self.load_tensor(i)?;
        }
        Ok(())
    }
}

fn validate_record(
    r: &TensorRecord,
    num_codebooks: usize,
    groups: &[GroupRecord],
    index: usize,
) -> Result<()> {
    let fail = |msg: String| Err(Error::Structure(format!("tensor {index} ({:?}): {msg}", r.name)));
    if r.codebook as usize >= num_codebooks {
        return fail(format!("missing codebook {}", r.codebook));
    }
    if r.group as usize >= groups.len() {
        return fail(format!("missing group {}", r.group));
    }
    if let Err(e) = r.geometry.validate() {
        return fail(e.to_string());
    }
    if shape_elements(&r.shape).map(|n| n as u64) != Some(r.num_elements) || r.num_elements == 0 {
        return fail(format!("shape {:?} vs {} elements", r.shape, r.num_elements));
    }
    let sec = |k: SectionKind| r.section(k).len;
    let blocks = r.geometry.num_blocks(sec(SectionKind::EncodedExponent) as usize) as u64;
    if blocks != r.num_blocks as u64 {
        return fail(format!("{} blocks recorded, stream implies {blocks}", r.num_blocks));
    }
    let threads = blocks as usize * r.geometry.threads_per_block as usize;
    let expected = [
        (SectionKind::PackedSignMantissa, r.num_elements),
        (SectionKind::Gaps, packed_gap_len(threads) as u64),
        (SectionKind::BlockOutputPos, 4 * (blocks + 1)),
    ];
    for (kind, len) in expected {
        if sec(kind) != len {
            return fail(format!("section {} is {} bytes, expected {len}", kind.name(), sec(kind)));
        }
    }
    Ok(())
}
