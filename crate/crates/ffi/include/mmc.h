#ifndef MMC_H
#define MMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MmcStatus {
  MMC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MMC_STATUS_NULL = 1,
  /**
   * Invalid parameter or configuration.
   */
  MMC_STATUS_CONFIG = 2,
  /**
   * Malformed or unusable input data.
   */
  MMC_STATUS_DATA = 3,
  /**
   * The algorithm could not produce a result (e.g. too few components).
   */
  MMC_STATUS_ALGORITHM = 4,
  /**
   * An internal panic was caught.
   */
  MMC_STATUS_PANIC = 5,
} MmcStatus;

/**
 * Kernel used by [`mmc_cluster`].
 */
typedef enum MmcKernel {
  MMC_KERNEL_IK_HYPERSPHERE = 0,
  MMC_KERNEL_IK_VORONOI = 1,
  MMC_KERNEL_GAUSSIAN_NYSTROM = 2,
} MmcKernel;

typedef enum MmcMechanism {
  MMC_MECHANISM_HYPERSPHERE = 0,
  MMC_MECHANISM_VORONOI = 1,
} MmcMechanism;

/**
 * Opaque clustering result handle.
 */
typedef struct MmcAssignment MmcAssignment;

/**
 * Opaque dataset handle.
 */
typedef struct MmcDataset MmcDataset;

/**
 * Opaque fitted isolation kernel handle.
 */
typedef struct MmcIkModel MmcIkModel;

/**
 * Clustering parameters. Fill with [`mmc_params_default`] and override.
 */
typedef struct MmcClusterParams {
  size_t k;
  size_t s;
  double tau;
  enum MmcKernel kernel;
  /**
   * ψ for the isolation kernels (a whole number), σ for the Gaussian kernel.
   */
  double kernel_param;
  size_t t;
  size_t landmarks;
  uint64_t seed;
  size_t max_refine_iters;
} MmcClusterParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mmc_last_error(void);

/**
 * Creates a dataset from `n * d` row-major coordinates. `labels` may be
 * null; otherwise it must hold `n` class labels.
 *
 * # Safety
 * `points` must be valid for `n * d` reads, `labels` (if non-null) for `n`
 * reads, and `out` for one write.
 */
enum MmcStatus mmc_dataset_new(const double *points,
                               size_t n,
                               size_t d,
                               const size_t *labels,
                               struct MmcDataset **out);

/**
 * Generates a labeled, normalized synthetic dataset. `family` accepts the
 * same names as the command line (e.g. `"3g"`, `"w50gaussian"`).
 *
 * # Safety
 * `family` must be a NUL-terminated string and `out` valid for one write.
 */
enum MmcStatus mmc_dataset_generate(const char *family,
                                    size_t n,
                                    uint64_t seed,
                                    struct MmcDataset **out);

/**
 * Writes a min-max normalized copy of `data` to `out`.
 *
 * # Safety
 * `data` must be a live handle and `out` valid for one write.
 */
enum MmcStatus mmc_dataset_normalize(const struct MmcDataset *data, struct MmcDataset **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `data` must be a live handle or null.
 */
size_t mmc_dataset_len(const struct MmcDataset *data);

/**
 * Number of features, or 0 for a null handle.
 *
 * # Safety
 * `data` must be a live handle or null.
 */
size_t mmc_dataset_dim(const struct MmcDataset *data);

/**
 * Copies the coordinates (row-major, `len * dim` values) into `buf`.
 *
 * # Safety
 * `data` must be a live handle and `buf` valid for `cap` writes.
 */
enum MmcStatus mmc_dataset_points(const struct MmcDataset *data, double *buf, size_t cap);

/**
 * Copies the ground-truth labels into `buf`. Fails with a data error when
 * the dataset is unlabeled.
 *
 * # Safety
 * `data` must be a live handle and `buf` valid for `cap` writes.
 */
enum MmcStatus mmc_dataset_labels(const struct MmcDataset *data, size_t *buf, size_t cap);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `data` must come from this library and not be used afterwards.
 */
void mmc_dataset_free(struct MmcDataset *data);

/**
 * Fills `out` with the library defaults for the given kernel.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum MmcStatus mmc_params_default(enum MmcKernel kernel,
                                  double kernel_param,
                                  size_t k,
                                  struct MmcClusterParams *out);

/**
 * Clusters `data`.
 *
 * # Safety
 * `data` and `params` must be live pointers and `out` valid for one write.
 */
enum MmcStatus mmc_cluster(const struct MmcDataset *data,
                           const struct MmcClusterParams *params,
                           struct MmcAssignment **out);

/**
 * Number of labeled points, or 0 for a null handle.
 *
 * # Safety
 * `a` must be a live handle or null.
 */
size_t mmc_assignment_len(const struct MmcAssignment *a);

/**
 * Copies the 0-based cluster labels into `buf`.
 *
 * # Safety
 * `a` must be a live handle and `buf` valid for `cap` writes.
 */
enum MmcStatus mmc_assignment_labels(const struct MmcAssignment *a, size_t *buf, size_t cap);

/**
 * Final objective `M(D)`, or NaN for a null handle.
 *
 * # Safety
 * `a` must be a live handle or null.
 */
double mmc_assignment_objective(const struct MmcAssignment *a);

/**
 * Objective before refinement, or NaN for a null handle.
 *
 * # Safety
 * `a` must be a live handle or null.
 */
double mmc_assignment_objective_before_refine(const struct MmcAssignment *a);

/**
 * Refinement iterations performed, or 0 for a null handle.
 *
 * # Safety
 * `a` must be a live handle or null.
 */
size_t mmc_assignment_refine_iters(const struct MmcAssignment *a);

/**
 * Releases an assignment. Null is ignored.
 *
 * # Safety
 * `a` must come from this library and not be used afterwards.
 */
void mmc_assignment_free(struct MmcAssignment *a);

/**
 * Micro-averaged F1 under the optimal cluster-to-class matching.
 *
 * # Safety
 * `pred` and `truth` must be valid for `n` reads, `out` for one write.
 */
enum MmcStatus mmc_f1_score(const size_t *pred, const size_t *truth, size_t n, double *out);

/**
 * Adjusted mutual information (max normalization).
 *
 * # Safety
 * `pred` and `truth` must be valid for `n` reads, `out` for one write.
 */
enum MmcStatus mmc_ami_score(const size_t *pred, const size_t *truth, size_t n, double *out);

/**
 * Fits an isolation kernel on `data`.
 *
 * # Safety
 * `data` must be a live handle and `out` valid for one write.
 */
enum MmcStatus mmc_ik_fit(const struct MmcDataset *data,
                          size_t psi,
                          size_t t,
                          enum MmcMechanism mechanism,
                          uint64_t seed,
                          struct MmcIkModel **out);

/**
 * Isolation kernel similarity of two `d`-dimensional points.
 *
 * # Safety
 * `model` must be a live handle, `x` and `y` valid for `d` reads and `out`
 * for one write.
 */
enum MmcStatus mmc_ik_similarity(const struct MmcIkModel *model,
                                 const double *x,
                                 const double *y,
                                 size_t d,
                                 double *out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void mmc_ik_free(struct MmcIkModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMC_H */
