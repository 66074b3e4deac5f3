#ifndef GGM_H
#define GGM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible function.
typedef enum GgmStatus {
  GGM_STATUS_OK = 0,
  GGM_STATUS_NULL_POINTER = 1,
  GGM_STATUS_INVALID_ARGUMENT = 2,
  GGM_STATUS_DIMENSION_MISMATCH = 3,
  GGM_STATUS_LABEL_MISMATCH = 4,
  GGM_STATUS_IO = 5,
  GGM_STATUS_PARSE = 6,
  GGM_STATUS_NUMERICAL = 7,
  // The solver hit its sweep limit; the returned model is the last iterate.
  GGM_STATUS_NOT_CONVERGED = 8,
  GGM_STATUS_BUFFER_TOO_SMALL = 9,
  GGM_STATUS_PANIC = 10,
} GgmStatus;

// Opaque dataset (subjects × regions with labels).
typedef struct GgmDataset GgmDataset;

// Opaque prior graph.
typedef struct GgmGraph GgmGraph;

// Opaque fitted model.
typedef struct GgmModel GgmModel;

// Solver settings passed by value.
typedef struct GgmSolverConfig {
  double tol;
  size_t max_sweeps;
  bool penalize_diagonal;
} GgmSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread (empty after a success).
// The pointer stays valid until the next `ggm_*` call on this thread.
const char *ggm_last_error_message(void);

// Default solver settings.
struct GgmSolverConfig ggm_solver_config_default(void);

// Builds a dataset from a row-major `n_subjects × n_regions` array with
// generated labels.
//
// # Safety
// `values` must point to `n_subjects * n_regions` readable doubles and
// `out` must be valid for writing one pointer.
enum GgmStatus ggm_dataset_new(const double *values,
                               size_t n_subjects,
                               size_t n_regions,
                               struct GgmDataset **out);

// Reads a dataset CSV.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GgmStatus ggm_dataset_load_csv(const char *path, struct GgmDataset **out);

// # Safety
// `ds` must be null or a live dataset handle.
enum GgmStatus ggm_dataset_shape(const struct GgmDataset *ds,
                                 size_t *n_subjects,
                                 size_t *n_regions);

// # Safety
// `ds` must be null or a handle from this library not yet freed.
void ggm_dataset_free(struct GgmDataset *ds);

// Graph on `d` nodes from `n_edges` index pairs stored as `[i0, j0, i1, j1, ...]`.
//
// # Safety
// `edges` must point to `2 * n_edges` readable values; `out` must be writable.
enum GgmStatus ggm_graph_from_edges(size_t d,
                                    const size_t *edges,
                                    size_t n_edges,
                                    struct GgmGraph **out);

// Four-neighbour `rows × cols` grid graph.
//
// # Safety
// `out` must be writable.
enum GgmStatus ggm_graph_lattice(size_t rows, size_t cols, struct GgmGraph **out);

// Graph without edges.
//
// # Safety
// `out` must be writable.
enum GgmStatus ggm_graph_node_only(size_t d, struct GgmGraph **out);

// Complete graph.
//
// # Safety
// `out` must be writable.
enum GgmStatus ggm_graph_full(size_t d, struct GgmGraph **out);

// Reads a graph JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GgmStatus ggm_graph_load_json(const char *path, struct GgmGraph **out);

// Number of undirected edges, or 0 for a null handle.
//
// # Safety
// `g` must be null or a live graph handle.
size_t ggm_graph_edge_count(const struct GgmGraph *g);

// # Safety
// `g` must be null or a handle from this library not yet freed.
void ggm_graph_free(struct GgmGraph *g);

// Fits mean and precision of `data` under `graph` with penalty `rho`.
//
// Returns `NotConverged` (with `*out` set) when the sweep limit is reached.
//
// # Safety
// `data` and `graph` must be live handles; `out` must be writable.
enum GgmStatus ggm_fit(const struct GgmDataset *data,
                       const struct GgmGraph *graph,
                       double rho,
                       struct GgmSolverConfig config,
                       struct GgmModel **out);

// Reads a model JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GgmStatus ggm_model_load_json(const char *path, struct GgmModel **out);

// Writes a model JSON file.
//
// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
enum GgmStatus ggm_model_save_json(const struct GgmModel *model, const char *path);

// Number of regions, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live model handle.
size_t ggm_model_dim(const struct GgmModel *model);

// Copies the `d × d` precision matrix into `out` (row-major, `len >= d*d`).
//
// # Safety
// `model` must be a live handle and `out` must be writable for `len` doubles.
enum GgmStatus ggm_model_precision(const struct GgmModel *model, double *out, size_t len);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void ggm_model_free(struct GgmModel *model);

// Mahalanobis distance of `z` (length `len` = model dimension).
//
// # Safety
// `model` must be a live handle, `z` readable for `len` doubles and `out` writable.
enum GgmStatus ggm_mahalanobis(const struct GgmModel *model,
                               const double *z,
                               size_t len,
                               double *out);

// Greedy region sort of `z`. Each output array holds `len` entries:
// `order` the region indices, `distances` the accumulated squared distances
// `D_1..D_len`, and `abnormality` the per-position ratios. `cutoff`
// receives the number of regions kept as normal.
//
// # Safety
// `model` must be a live handle, `z` readable for `len` doubles and every
// output pointer writable for `len` elements (`cutoff` for one).
enum GgmStatus ggm_greedy_sort(const struct GgmModel *model,
                               const double *z,
                               size_t len,
                               size_t *order,
                               double *distances,
                               double *abnormality,
                               size_t *cutoff);

// χ² CDF with `k` degrees of freedom.
//
// # Safety
// `out` must be writable.
enum GgmStatus ggm_chi2_cdf(double x, uint32_t k, double *out);

// Area under the ROC curve for positive scores `pos` against negatives `neg`.
//
// # Safety
// `pos`/`neg` must be readable for `n_pos`/`n_neg` doubles; `out` writable.
enum GgmStatus ggm_roc_auc(const double *pos,
                           size_t n_pos,
                           const double *neg,
                           size_t n_neg,
                           double *out);

// Library version as a static NUL-terminated string.
const char *ggm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GGM_H */
