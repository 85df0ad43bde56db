#ifndef GATECERT_H
#define GATECERT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GcStatus {
  GC_STATUS_OK = 0,
  GC_STATUS_NULL_POINTER = 1,
  GC_STATUS_INVALID_ARGUMENT = 2,
  GC_STATUS_PARSE = 3,
  GC_STATUS_DIMENSION = 4,
  GC_STATUS_NUMERICAL = 5,
  GC_STATUS_NOT_CERTIFIED = 6,
  GC_STATUS_IO = 7,
  GC_STATUS_PANIC = 8,
} GcStatus;

typedef enum GcScheme {
  GC_SCHEME_ALMOST_DI = 0,
  GC_SCHEME_DI = 1,
} GcScheme;

typedef enum GcBranch {
  GC_BRANCH_PLUS = 0,
  GC_BRANCH_MINUS = 1,
} GcBranch;

// A network realization together with its target gate.
typedef struct GcRealization GcRealization;

typedef struct GcReport GcReport;

typedef struct GcTable GcTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gc_version(void);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next `gc_*` call on the same thread.
const char *gc_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void gc_string_free(char *s);

// Reference realization for a named gate (`"cnot"`, `"toffoli"`, ...) or
// `"random:<seed>"`.
//
// # Safety
// `gate_name` must be a valid C string and `out` a writable pointer.
enum GcStatus gc_realization_reference(enum GcScheme scheme,
                                       uint32_t n,
                                       const char *gate_name,
                                       enum GcBranch branch,
                                       struct GcRealization **out);

// Reference realization for an explicit `2^n × 2^n` gate given as
// row-major real and imaginary parts.
//
// # Safety
// `re` and `im` must each point to `4^n` doubles; `out` must be writable.
enum GcStatus gc_realization_from_matrix(enum GcScheme scheme,
                                         uint32_t n,
                                         const double *re,
                                         const double *im,
                                         enum GcBranch branch,
                                         struct GcRealization **out);

// Apply a JSON adversary script, producing a new realization.
//
// # Safety
// `real` must be a live handle, `script` a valid C string, `out` writable.
enum GcStatus gc_realization_attack(const struct GcRealization *real,
                                    const char *script,
                                    struct GcRealization **out);

// # Safety
// `real` must be null or a handle not yet freed.
void gc_realization_free(struct GcRealization *real);

// Exact Born table of a realization.
//
// # Safety
// `real` must be a live handle and `out` writable.
enum GcStatus gc_table_simulate(const struct GcRealization *real, struct GcTable **out);

// Parse a table from its JSON-lines text.
//
// # Safety
// `text` must be a valid C string and `out` writable.
enum GcStatus gc_table_from_jsonl(const char *text, struct GcTable **out);

// Serialize a table as JSON lines. Free the result with [`gc_string_free`].
//
// # Safety
// `table` must be a live handle and `out` writable.
enum GcStatus gc_table_to_jsonl(const struct GcTable *table, char **out);

// Number of recorded entries.
//
// # Safety
// `table` must be a live handle and `out` writable.
enum GcStatus gc_table_len(const struct GcTable *table, size_t *out);

// Largest absolute entry difference between two tables of the same shape.
//
// # Safety
// Both tables must be live handles and `out` writable.
enum GcStatus gc_table_distance(const struct GcTable *a, const struct GcTable *b, double *out);

// # Safety
// `table` must be null or a handle not yet freed.
void gc_table_free(struct GcTable *table);

// Certify a table against a gate given by name or `"random:<seed>"`.
//
// # Safety
// `table` must be a live handle, `gate_name` a valid C string, `out` writable.
enum GcStatus gc_certify_table(const struct GcTable *table,
                               const char *gate_name,
                               double tol,
                               struct GcReport **out);

// Statistical and operator-level certification of a realization against
// its own target gate.
//
// # Safety
// `real` must be a live handle and `out` writable.
enum GcStatus gc_certify_realization(const struct GcRealization *real,
                                     double tol,
                                     struct GcReport **out);

// 1 if certified, 0 if not, -1 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
int32_t gc_report_certified(const struct GcReport *report);

// # Safety
// `report` must be a live handle and `out` writable.
enum GcStatus gc_report_max_residual(const struct GcReport *report, double *out);

// Number of failing checks.
//
// # Safety
// `report` must be a live handle and `out` writable.
enum GcStatus gc_report_failing(const struct GcReport *report, size_t *out);

// Full report as JSON. Free the result with [`gc_string_free`].
//
// # Safety
// `report` must be a live handle and `out` writable.
enum GcStatus gc_report_to_json(const struct GcReport *report, char **out);

// # Safety
// `report` must be null or a handle not yet freed.
void gc_report_free(struct GcReport *report);

// Local (deterministic) maximum of the GHZ-type functional with label `l`
// (bits packed most significant first).
//
// # Safety
// `out` must be writable.
enum GcStatus gc_classical_bound_ghz(uint32_t n, uint32_t l, double *out);

// Local maximum of the swap functional of `subnet` for repeater outcome
// `r = 2 r1 + r2`.
//
// # Safety
// `out` must be writable.
enum GcStatus gc_classical_bound_swap(uint32_t n, uint32_t subnet, uint32_t r, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GATECERT_H */
