/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef LATENTCARVE_H
#define LATENTCARVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LcStatus {
  LC_STATUS_OK = 0,
  // Null pointer, bad length or malformed value.
  LC_STATUS_INVALID_ARGUMENT = 1,
  // Malformed or missing input data.
  LC_STATUS_INPUT_ERROR = 2,
  // The numerics failed (non-finite values, degenerate search).
  LC_STATUS_NUMERICAL_ERROR = 3,
  // A Rust panic was caught at the boundary.
  LC_STATUS_PANIC = 4,
} LcStatus;

// Opaque latent object.
typedef struct LcLatent LcLatent;

typedef struct LcIntrinsics {
  double fu;
  double fv;
  double u0;
  double v0;
  uint32_t width;
  uint32_t height;
} LcIntrinsics;

// Object-to-camera pose.
typedef struct LcPose {
  double quaternion_wxyz[4];
  double translation[3];
} LcPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *lc_last_error(void);

// Loads the output directory of `latentcarve reconstruct`.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` valid for writes.
enum LcStatus lc_latent_load(const char *dir, struct LcLatent **out);

// Builds a latent from every view of a scene directory by carving at `resolution`.
//
// # Safety
// `scene_dir` must be a NUL-terminated string and `out` valid for writes.
enum LcStatus lc_latent_from_scene(const char *scene_dir,
                                   uint32_t resolution,
                                   struct LcLatent **out);

// Releases a latent; null is ignored.
//
// # Safety
// `latent` must come from this library and not be used afterwards.
void lc_latent_free(struct LcLatent *latent);

// Radius of the latent's bounding cube in meters.
//
// # Safety
// Pointers must be valid.
enum LcStatus lc_latent_radius(const struct LcLatent *latent, double *out);

// Renders depth (meters, 0 where empty) and soft mask for `pose` into
// row-major buffers of `len = width * height` values each.
//
// # Safety
// Pointers must be valid; the buffers must hold `len` doubles.
enum LcStatus lc_render(const struct LcLatent *latent,
                        const struct LcIntrinsics *k,
                        const struct LcPose *pose,
                        double *depth_out,
                        double *mask_out,
                        uintptr_t len);

// Estimates the pose of an observed depth map and mask (`width * height`,
// row-major, depth in meters, mask nonzero inside) with the default
// configuration and the given search seed. `loss_out` may be null.
//
// # Safety
// Pointers must be valid; `depth` and `mask` must hold `width * height` values.
enum LcStatus lc_estimate(const struct LcLatent *latent,
                          const struct LcIntrinsics *k,
                          const double *depth,
                          const uint8_t *mask,
                          uint64_t seed,
                          struct LcPose *pose_out,
                          double *loss_out);

// Unit quaternion `w, x, y, z` of a log quaternion (rotation angle `2 |omega|`).
//
// # Safety
// `omega` must hold 3 doubles and `q_out` 4.
enum LcStatus lc_quat_exp(const double *omega, double *q_out);

// Mean distance between `n` object points (`3n` doubles) under the two poses.
//
// # Safety
// `points` must hold `3 * n` doubles; other pointers must be valid.
enum LcStatus lc_metric_add(const double *points,
                            uintptr_t n,
                            const struct LcPose *gt,
                            const struct LcPose *pred,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATENTCARVE_H */
