#ifndef DPC_H
#define DPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DpcConnectivity {
  DPC_CONNECTIVITY_FACE = 0,
  DPC_CONNECTIVITY_FREUDENTHAL = 1,
} DpcConnectivity;

typedef enum DpcDirection {
  DPC_DIRECTION_DESCENDING = 0,
  DPC_DIRECTION_ASCENDING = 1,
} DpcDirection;

typedef enum DpcMaskKind {
  /**
   * `value` is a percentage in (0, 100].
   */
  DPC_MASK_KIND_TOP_PERCENT = 0,
  /**
   * Vertices with scalar strictly above `value`.
   */
  DPC_MASK_KIND_THRESHOLD = 1,
} DpcMaskKind;

/**
 * Result of every fallible call.
 */
typedef enum DpcStatus {
  DPC_STATUS_OK = 0,
  DPC_STATUS_NULL_POINTER = 1,
  DPC_STATUS_INVALID_ARGUMENT = 2,
  DPC_STATUS_INVALID_FIELD = 3,
  DPC_STATUS_BUFFER_TOO_SMALL = 4,
  DPC_STATUS_PROTOCOL = 5,
  DPC_STATUS_INTERNAL = 6,
  DPC_STATUS_IO = 7,
  DPC_STATUS_PANIC = 8,
} DpcStatus;

/**
 * Opaque domain handle.
 */
typedef struct DpcDomain DpcDomain;

/**
 * How a run is spread out: simulated rank count and worker threads per rank.
 */
typedef struct DpcRunOptions {
  size_t ranks;
  size_t workers;
} DpcRunOptions;

/**
 * Run statistics summed or maximized over ranks.
 */
typedef struct DpcRunSummary {
  uint64_t rounds;
  uint64_t sweeps;
  uint64_t bytes_sent;
  uint64_t ghost_records;
  double wall_seconds;
} DpcRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a structured grid; use 1 for unused trailing axes.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum DpcStatus dpc_grid_new(size_t nx,
                            size_t ny,
                            size_t nz,
                            enum DpcConnectivity connectivity,
                            struct DpcDomain **out);

/**
 * Creates an explicit graph from `edge_count` pairs stored flat in `edges`.
 *
 * # Safety
 * `edges` must hold `2 * edge_count` values; `out` must be writable.
 */
enum DpcStatus dpc_graph_new(uint64_t vertex_count,
                             const uint64_t *edges,
                             size_t edge_count,
                             struct DpcDomain **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `domain` must come from this library and not be freed twice.
 */
void dpc_domain_free(struct DpcDomain *domain);

/**
 * Vertex count of the domain, 0 for null.
 *
 * # Safety
 * `domain` must be a live handle or null.
 */
uint64_t dpc_domain_vertex_count(const struct DpcDomain *domain);

/**
 * Labels every vertex with the extremum its steepest path ends at.
 * `summary` may be null.
 *
 * # Safety
 * `field` must hold `field_len` values, `labels` must hold `labels_len`
 * writable values and `summary`, when not null, must be writable.
 */
enum DpcStatus dpc_segment(const struct DpcDomain *domain,
                           const double *field,
                           size_t field_len,
                           enum DpcDirection direction,
                           struct DpcRunOptions options,
                           int64_t *labels,
                           size_t labels_len,
                           struct DpcRunSummary *summary);

/**
 * Labels every masked vertex with the largest id of its component and
 * every other vertex with -1. `summary` may be null.
 *
 * # Safety
 * Same contract as [`dpc_segment`].
 */
enum DpcStatus dpc_components(const struct DpcDomain *domain,
                              const double *field,
                              size_t field_len,
                              enum DpcMaskKind mask,
                              double value,
                              struct DpcRunOptions options,
                              int64_t *labels,
                              size_t labels_len,
                              struct DpcRunSummary *summary);

/**
 * Fills `out` with a seeded Perlin noise volume, x fastest.
 *
 * # Safety
 * `out` must hold `out_len` writable values.
 */
enum DpcStatus dpc_perlin(size_t nx,
                          size_t ny,
                          size_t nz,
                          double frequency,
                          double amplitude,
                          uint64_t seed,
                          double *out,
                          size_t out_len);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to fit, into `buf`. Returns the full message length without
 * the terminator, so a call with a null `buf` sizes the buffer.
 *
 * # Safety
 * `buf` must hold `len` writable bytes or be null.
 */
size_t dpc_last_error_message(char *buf, size_t len);

/**
 * Static name of a status code.
 */
const char *dpc_status_name(enum DpcStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPC_H */
