#ifndef DFLOAT11_H
#define DFLOAT11_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  DF11_STATUS_OK = 0,
  DF11_STATUS_NULL_POINTER = 1,
  DF11_STATUS_INVALID_ARGUMENT = 2,
  DF11_STATUS_IO = 3,
  DF11_STATUS_FORMAT = 4,
  DF11_STATUS_CORRUPT = 5,
  DF11_STATUS_RESERVED_EXPONENT = 6,
  DF11_STATUS_BUFFER_SIZE = 7,
  DF11_STATUS_NOT_FOUND = 8,
  DF11_STATUS_PANIC = 9,
} Df11Status;

/**
 * An open container file.
 */
typedef struct Df11Container Df11Container;

/**
 * A worker pool for block-parallel decoding.
 */
typedef struct Df11Decoder Df11Decoder;

/**
 * A compressed tensor.
 */
typedef struct Df11Tensor Df11Tensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *df11_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *df11_version(void);

/**
 * Compresses `len` BF16 words. `shape` may be null when `rank` is 0, which
 * means a flat tensor. A zero `threads_per_block` or `bytes_per_thread`
 * selects the default geometry (256 x 8).
 *
 * # Safety
 * `words` must point to `len` readable `u16`s, `shape` to `rank` readable
 * `size_t`s, and `out` must be writable.
 */
Df11Status df11_compress(const uint16_t *words,
                         size_t len,
                         const size_t *shape,
                         size_t rank,
                         uint32_t threads_per_block,
                         uint32_t bytes_per_thread,
                         Df11Tensor **out);

/**
 * # Safety
 * `tensor` must be null or a handle from this library not yet freed.
 */
void df11_tensor_free(Df11Tensor *tensor);

/**
 * Element count, or 0 for a null handle.
 *
 * # Safety
 * `tensor` must be null or a live handle.
 */
size_t df11_tensor_num_elements(const Df11Tensor *tensor);

/**
 * Total compressed size in bytes (streams, metadata, codebook and record
 * header), or 0 for a null handle.
 *
 * # Safety
 * `tensor` must be null or a live handle.
 */
size_t df11_tensor_compressed_bytes(const Df11Tensor *tensor);

/**
 * Copies up to `capacity` dimensions into `dims` and stores the rank in
 * `rank`. Fails with `BufferSize` when `capacity` is smaller than the rank.
 *
 * # Safety
 * `tensor` must be live, `dims` writable for `capacity` entries (or null
 * when `capacity` is 0), and `rank` writable.
 */
Df11Status df11_tensor_shape(const Df11Tensor *tensor, size_t *dims, size_t capacity, size_t *rank);

/**
 * Creates a decoder with `workers` threads (0 means one).
 *
 * # Safety
 * `out` must be writable.
 */
Df11Status df11_decoder_new(size_t workers, Df11Decoder **out);

/**
 * # Safety
 * `decoder` must be null or a live handle.
 */
void df11_decoder_free(Df11Decoder *decoder);

/**
 * Decodes `tensor` into `out`, which must hold exactly
 * `df11_tensor_num_elements(tensor)` words.
 *
 * # Safety
 * Handles must be live; `out` must be writable for `out_len` words.
 */
Df11Status df11_decompress(const Df11Decoder *decoder,
                           const Df11Tensor *tensor,
                           uint16_t *out,
                           size_t out_len);

/**
 * Writes `count` tensors to a container at `path`, one decode group per
 * tensor. `source` is 0 for raw and 1 for safetensors provenance.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `names` and `tensors` must each
 * point to `count` valid entries (NUL-terminated strings and live handles).
 */
Df11Status df11_container_write(const char *path,
                                const char *const *names,
                                const Df11Tensor *const *tensors,
                                size_t count,
                                uint8_t source);

/**
 * Opens a container and validates its header and metadata. Payload CRCs
 * are checked as tensors load.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
Df11Status df11_container_open(const char *path, Df11Container **out);

/**
 * # Safety
 * `container` must be null or a live handle.
 */
void df11_container_free(Df11Container *container);

/**
 * # Safety
 * `container` must be null or a live handle.
 */
size_t df11_container_num_tensors(const Df11Container *container);

/**
 * # Safety
 * `container` must be null or a live handle.
 */
size_t df11_container_num_groups(const Df11Container *container);

/**
 * Name of tensor `index`, owned by the container; null when out of range.
 *
 * # Safety
 * `container` must be null or a live handle.
 */
const char *df11_container_tensor_name(const Df11Container *container, size_t index);

/**
 * Looks a tensor up by name.
 *
 * # Safety
 * `container` must be live, `name` NUL-terminated and `index` writable.
 */
Df11Status df11_container_tensor_index(const Df11Container *container,
                                       const char *name,
                                       size_t *index);

/**
 * Loads tensor `index` with CRC checks into a new tensor handle.
 *
 * # Safety
 * `container` must be live and `out` writable.
 */
Df11Status df11_container_load_tensor(Df11Container *container, size_t index, Df11Tensor **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DFLOAT11_H */
