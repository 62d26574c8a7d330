//! C ABI over the `dfloat11` codec.
//!
//! Every fallible call returns a [`Df11Status`]; on failure the message is
//! available from [`df11_last_error_message`] on the same thread. Handles are
//! opaque and owned by the caller until passed to their `_free` function.
//! Panics never cross the boundary: they surface as `DF11_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dfloat11::container::{write_container, ContainerReader, ContainerSpec, SourceKind};
use dfloat11::{compress, DecodeGeometry, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Df11Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Corrupt = 5,
    ReservedExponent = 6,
    BufferSize = 7,
    NotFound = 8,
    Panic = 9,
}

impl From<&Error> for Df11Status {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::Io(_) => Df11Status::Io,
            Error::ReservedSymbol { .. } => Df11Status::ReservedExponent,
            Error::UnknownTensor(_) => Df11Status::NotFound,
            Error::Crc { .. } | Error::CorruptStream(_) | Error::MetadataMismatch { .. } => Df11Status::Corrupt,
            Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::Structure(_)
            | Error::Safetensors(_)
            | Error::MalformedCodebook(_) => Df11Status::Format,
            _ => Df11Status::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: Df11Status, msg: impl Into<String>) -> Df11Status {
    set_error(msg);
    status
}

fn fail_with(e: Error) -> Df11Status {
    let status = Df11Status::from(&e);
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into `Panic`.
fn guard(f: impl FnOnce() -> Df11Status) -> Df11Status {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
            .unwrap_or_else(|| "panic".into());
        fail(Df11Status::Panic, format!("internal panic: {msg}"))
    })
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(Df11Status::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// A compressed tensor.
pub struct Df11Tensor {
    inner: dfloat11::Df11Tensor,
}

/// A worker pool for block-parallel decoding.
pub struct Df11Decoder {
    inner: dfloat11::Decoder,
}

/// An open container file.
pub struct Df11Container {
    reader: ContainerReader<BufReader<File>>,
    names: Vec<CString>,
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn df11_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df11_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Compresses `len` BF16 words. `shape` may be null when `rank` is 0, which
/// means a flat tensor. A zero `threads_per_block` or `bytes_per_thread`
/// selects the default geometry (256 x 8).
///
/// # Safety
/// `words` must point to `len` readable `u16`s, `shape` to `rank` readable
/// `size_t`s, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df11_compress(
    words: *const u16,
    len: usize,
    shape: *const usize,
    rank: usize,
    threads_per_block: u32,
    bytes_per_thread: u32,
    out: *mut *mut Df11Tensor,
) -> Df11Status {
    guard(|| {
        non_null!(words, out);
        if rank > 0 && shape.is_null() {
            return fail(Df11Status::NullPointer, "`shape` is null but `rank` is nonzero");
        }
        let words = std::slice::from_raw_parts(words, len);
        let shape = if rank == 0 {
            vec![len]
        } else {
            std::slice::from_raw_parts(shape, rank).to_vec()
        };
        let geometry = if threads_per_block == 0 || bytes_per_thread == 0 {
            DecodeGeometry::default()
        } else {
            match DecodeGeometry::new(threads_per_block, bytes_per_thread) {
                Ok(g) => g,
                Err(e) => return fail_with(e),
            }
        };
        match compress(words, &shape, geometry, None) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(Df11Tensor { inner: t }));
                Df11Status::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `tensor` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df11_tensor_free(tensor: *mut Df11Tensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

/// Element count, or 0 for a null handle.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_tensor_num_elements(tensor: *const Df11Tensor) -> usize {
    tensor.as_ref().map_or(0, |t| t.inner.num_elements())
}

/// Total compressed size in bytes (streams, metadata, codebook and record
/// header), or 0 for a null handle.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_tensor_compressed_bytes(tensor: *const Df11Tensor) -> usize {
    tensor.as_ref().map_or(0, |t| t.inner.measure().compressed_bytes)
}

/// Copies up to `capacity` dimensions into `dims` and stores the rank in
/// `rank`. Fails with `BufferSize` when `capacity` is smaller than the rank.
///
/// # Safety
/// `tensor` must be live, `dims` writable for `capacity` entries (or null
/// when `capacity` is 0), and `rank` writable.
#[no_mangle]
pub unsafe extern "C" fn df11_tensor_shape(
    tensor: *const Df11Tensor,
    dims: *mut usize,
    capacity: usize,
    rank: *mut usize,
) -> Df11Status {
    guard(|| {
        non_null!(tensor, rank);
        let shape = (*tensor).inner.shape();
        *rank = shape.len();
        if capacity < shape.len() {
            return fail(Df11Status::BufferSize, format!("rank is {}, capacity {capacity}", shape.len()));
        }
        non_null!(dims);
        ptr::copy_nonoverlapping(shape.as_ptr(), dims, shape.len());
        Df11Status::Ok
    })
}

/// Creates a decoder with `workers` threads (0 means one).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df11_decoder_new(workers: usize, out: *mut *mut Df11Decoder) -> Df11Status {
    guard(|| {
        non_null!(out);
        match dfloat11::Decoder::new(workers) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(Df11Decoder { inner: d }));
                Df11Status::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `decoder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_decoder_free(decoder: *mut Df11Decoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Decodes `tensor` into `out`, which must hold exactly
/// `df11_tensor_num_elements(tensor)` words.
///
/// # Safety
/// Handles must be live; `out` must be writable for `out_len` words.
#[no_mangle]
pub unsafe extern "C" fn df11_decompress(
    decoder: *const Df11Decoder,
    tensor: *const Df11Tensor,
    out: *mut u16,
    out_len: usize,
) -> Df11Status {
    guard(|| {
        non_null!(decoder, tensor, out);
        let t = &(*tensor).inner;
        if out_len != t.num_elements() {
            return fail(
                Df11Status::BufferSize,
                format!("output holds {out_len} words, tensor has {}", t.num_elements()),
            );
        }
        match (*decoder).inner.decompress(t) {
            Ok(words) => {
                ptr::copy_nonoverlapping(words.as_ptr(), out, words.len());
                Df11Status::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Writes `count` tensors to a container at `path`, one decode group per
/// tensor. `source` is 0 for raw and 1 for safetensors provenance.
///
/// # Safety
/// `path` must be a NUL-terminated string; `names` and `tensors` must each
/// point to `count` valid entries (NUL-terminated strings and live handles).
#[no_mangle]
pub unsafe extern "C" fn df11_container_write(
    path: *const c_char,
    names: *const *const c_char,
    tensors: *const *const Df11Tensor,
    count: usize,
    source: u8,
) -> Df11Status {
    guard(|| {
        non_null!(path, names, tensors);
        let source = match source {
            0 => SourceKind::Raw,
            1 => SourceKind::Safetensors,
            s => return fail(Df11Status::InvalidArgument, format!("unknown source kind {s}")),
        };
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let (name, tensor) = (*names.add(i), *tensors.add(i));
            if name.is_null() || tensor.is_null() {
                return fail(Df11Status::NullPointer, format!("entry {i} is null"));
            }
            let name = match CStr::from_ptr(name).to_str() {
                Ok(n) => n.to_owned(),
                Err(_) => return fail(Df11Status::InvalidArgument, format!("name {i} is not UTF-8")),
            };
            entries.push((name, (*tensor).inner.clone()));
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(Df11Status::InvalidArgument, "path is not UTF-8");
        };
        match write_container(&ContainerSpec::ungrouped(source, entries), Path::new(path)) {
            Ok(()) => Df11Status::Ok,
            Err(e) => fail_with(e),
        }
    })
}

/// Opens a container and validates its header and metadata. Payload CRCs
/// are checked as tensors load.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df11_container_open(path: *const c_char, out: *mut *mut Df11Container) -> Df11Status {
    guard(|| {
        non_null!(path, out);
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(Df11Status::InvalidArgument, "path is not UTF-8");
        };
        match ContainerReader::open(path) {
            Ok(reader) => {
                let names = reader
                    .tensors()
                    .iter()
                    .map(|t| CString::new(t.name.replace('\0', " ")).unwrap())
                    .collect();
                *out = Box::into_raw(Box::new(Df11Container { reader, names }));
                Df11Status::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_container_free(container: *mut Df11Container) {
    if !container.is_null() {
        drop(Box::from_raw(container));
    }
}

/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_container_num_tensors(container: *const Df11Container) -> usize {
    container.as_ref().map_or(0, |c| c.names.len())
}

/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_container_num_groups(container: *const Df11Container) -> usize {
    container.as_ref().map_or(0, |c| c.reader.groups().len())
}

/// Name of tensor `index`, owned by the container; null when out of range.
///
/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df11_container_tensor_name(container: *const Df11Container, index: usize) -> *const c_char {
    container
        .as_ref()
        .and_then(|c| c.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Looks a tensor up by name.
///
/// # Safety
/// `container` must be live, `name` NUL-terminated and `index` writable.
#[no_mangle]
pub unsafe extern "C" fn df11_container_tensor_index(
    container: *const Df11Container,
    name: *const c_char,
    index: *mut usize,
) -> Df11Status {
    guard(|| {
        non_null!(container, name, index);
        let name = CStr::from_ptr(name).to_string_lossy();
        match (*container).reader.tensor_index(&name) {
            Some(i) => {
                *index = i;
                Df11Status::Ok
            }
            None => fail(Df11Status::NotFound, format!("no tensor named {name:?}")),
        }
    })
}

/// Loads tensor `index` with CRC checks into a new tensor handle.
///
/// # Safety
/// `container` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df11_container_load_tensor(
    container: *mut Df11Container,
    index: usize,
    out: *mut *mut Df11Tensor,
) -> Df11Status {
    guard(|| {
        non_null!(container, out);
        let c = &mut *container;
        if index >= c.names.len() {
            return fail(Df11Status::NotFound, format!("tensor index {index} out of range"));
        }
        match c.reader.load_tensor(index) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(Df11Tensor { inner: t }));
                Df11Status::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}
