#ifndef LASTAR_H
#define LASTAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum LastarStatus {
  LASTAR_STATUS_OK = 0,
  LASTAR_STATUS_NULL_POINTER = 1,
  LASTAR_STATUS_INVALID_ARGUMENT = 2,
  LASTAR_STATUS_INDEX_OUT_OF_RANGE = 3,
  LASTAR_STATUS_CYCLIC = 4,
  LASTAR_STATUS_NOT_EXTENDABLE = 5,
  LASTAR_STATUS_INCONSISTENT_MARKS = 6,
  LASTAR_STATUS_TOO_LARGE = 7,
  LASTAR_STATUS_CLUSTER_TOO_LARGE = 8,
  LASTAR_STATUS_SINGULAR_INPUT = 9,
  LASTAR_STATUS_NOT_ENOUGH_SAMPLES = 10,
  LASTAR_STATUS_INFEASIBLE = 11,
  LASTAR_STATUS_TIMEOUT = 12,
  LASTAR_STATUS_INVALID_CONSTRAINTS = 13,
  LASTAR_STATUS_PARSE = 14,
  LASTAR_STATUS_IO = 15,
  LASTAR_STATUS_PANIC = 16,
} LastarStatus;

// Search method for [`lastar_search`].
typedef enum LastarMethod {
  LASTAR_METHOD_DP = 0,
  LASTAR_METHOD_ASTAR = 1,
  LASTAR_METHOD_ASTAR_SS = 2,
  LASTAR_METHOD_LOCAL_ASTAR = 3,
} LastarMethod;

// Edge mark between `i` and `j` reported by [`lastar_graph_mark`].
typedef enum LastarMark {
  LASTAR_MARK_NONE = 0,
  // `i -> j`
  LASTAR_MARK_FORWARD = 1,
  // `j -> i`
  LASTAR_MARK_BACKWARD = 2,
  LASTAR_MARK_UNDIRECTED = 3,
} LastarMark;

// `n x d` sample matrix.
typedef struct LastarDataset LastarDataset;

// Partially directed graph; undirected graphs have only undirected marks.
typedef struct LastarGraph LastarGraph;

// Ground-truth linear-Gaussian model.
typedef struct LastarModel LastarModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next `lastar_*` call on the same thread.
const char *lastar_last_error_message(void);

// Random ER DAG with expected degree `degree`, weights and noise variances
// drawn from `seed`.
//
// # Safety
// `out` must be valid for writes.
enum LastarStatus lastar_model_simulate(uintptr_t d,
                                        double degree,
                                        uint64_t seed,
                                        struct LastarModel **out);

// # Safety
// `model` must be a live handle.
uintptr_t lastar_model_num_vars(const struct LastarModel *model);

// # Safety
// `model` must be a live handle; `out` valid for writes.
enum LastarStatus lastar_model_sample(const struct LastarModel *model,
                                      uintptr_t n,
                                      uint64_t seed,
                                      struct LastarDataset **out);

// CPDAG of the model's equivalence class.
//
// # Safety
// `model` must be a live handle; `out` valid for writes.
enum LastarStatus lastar_model_true_cpdag(const struct LastarModel *model,
                                          struct LastarGraph **out);

// # Safety
// `model` must be null or a handle not yet freed.
void lastar_model_free(struct LastarModel *model);

// Dataset from `n * d` row-major values.
//
// # Safety
// `values` must point to `n * d` readable doubles; `out` valid for writes.
enum LastarStatus lastar_dataset_from_rows(const double *values,
                                           uintptr_t n,
                                           uintptr_t d,
                                           struct LastarDataset **out);

// Dataset from a CSV file with a header row.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid for writes.
enum LastarStatus lastar_dataset_from_csv(const char *path, struct LastarDataset **out);

// # Safety
// `data` must be a live handle.
uintptr_t lastar_dataset_num_samples(const struct LastarDataset *data);

// # Safety
// `data` must be a live handle.
uintptr_t lastar_dataset_num_vars(const struct LastarDataset *data);

// # Safety
// `data` must be null or a handle not yet freed.
void lastar_dataset_free(struct LastarDataset *data);

// Graphical-lasso super-structure. A negative `lambda` selects the
// dimension-dependent default.
//
// # Safety
// `data` must be a live handle; `out` valid for writes.
enum LastarStatus lastar_estimate_superstructure(const struct LastarDataset *data,
                                                 double lambda,
                                                 struct LastarGraph **out);

// Learns a CPDAG from `data`. `superstructure` may be null except for
// `AstarSs` and `LocalAstar`, which read its skeleton.
//
// # Safety
// Handles must be live or null as described; `out` valid for writes.
enum LastarStatus lastar_search(const struct LastarDataset *data,
                                enum LastarMethod method,
                                const struct LastarGraph *superstructure,
                                struct LastarGraph **out);

// # Safety
// `graph` must be a live handle.
uintptr_t lastar_graph_num_vars(const struct LastarGraph *graph);

// # Safety
// `graph` must be a live handle; `out` valid for writes.
enum LastarStatus lastar_graph_mark(const struct LastarGraph *graph,
                                    uintptr_t i,
                                    uintptr_t j,
                                    enum LastarMark *out);

// Graph as `{"d": .., "edges": [[i, j, "->" | "--"], ..]}`. Release the
// string with [`lastar_string_free`].
//
// # Safety
// `graph` must be a live handle; `out` valid for writes.
enum LastarStatus lastar_graph_to_json(const struct LastarGraph *graph, char **out);

// Structural Hamming distance between two CPDAGs.
//
// # Safety
// Both handles must be live; `out` valid for writes.
enum LastarStatus lastar_shd(const struct LastarGraph *est,
                             const struct LastarGraph *truth,
                             uintptr_t *out);

// # Safety
// `graph` must be null or a handle not yet freed.
void lastar_graph_free(struct LastarGraph *graph);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void lastar_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LASTAR_H */
