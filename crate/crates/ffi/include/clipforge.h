#ifndef CLIPFORGE_H
#define CLIPFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every call.
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_ARGUMENT = 2,
  CF_STATUS_SHAPE = 3,
  CF_STATUS_NON_FINITE = 4,
  CF_STATUS_FORMAT = 5,
  CF_STATUS_IO = 6,
  CF_STATUS_CONFIG = 7,
  CF_STATUS_DIVERGED = 8,
  CF_STATUS_PANIC = 9,
} CfStatus;

// Episode mode for [`cf_run_episode`].
typedef enum CfMode {
  // Most probable action each step.
  CF_MODE_POLICY = 0,
  // Every frame at full resolution.
  CF_MODE_BASELINE = 1,
} CfMode;

// Loaded engine.
typedef struct CfEngine CfEngine;

// Loaded video.
typedef struct CfVideo CfVideo;

// Outcome of one episode.
typedef struct CfEpisodeSummary {
  size_t steps;
  size_t frames;
  // Feature extraction FLOPs.
  uint64_t flops;
  // Station points and policy FLOPs.
  uint64_t overhead_flops;
  // Probability of the positive class.
  double positive_probability;
  bool predicted_positive;
} CfEpisodeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes of writes.
size_t cf_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *cf_version(void);

// Builds an engine from a run configuration file (null for defaults) and
// loads parameters from a checkpoint (null for a seeded random init).
//
// # Safety
// Path arguments must be null or NUL-terminated strings; `out` must be
// valid for one write.
enum CfStatus cf_engine_load(const char *config_path,
                             const char *checkpoint_path,
                             uint64_t seed,
                             struct CfEngine **out);

// # Safety
// `engine` must be null or a handle from [`cf_engine_load`] not yet freed.
void cf_engine_free(struct CfEngine *engine);

// Number of actions of the engine's action space.
//
// # Safety
// `engine` must be a live handle; `out` valid for one write.
enum CfStatus cf_engine_num_actions(const struct CfEngine *engine, size_t *out);

// Loads a `.clpv` file, a `.pgm`/`.ppm` image or a directory of images.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid for one write.
enum CfStatus cf_video_load(const char *path, struct CfVideo **out);

// Builds a video from `frames * channels * height * width` pixels in
// `[0, 1]`, frame-major then `[C, H, W]`.
//
// # Safety
// `pixels` must be valid for that many reads; `out` for one write.
enum CfStatus cf_video_from_pixels(const double *pixels,
                                   size_t frames,
                                   size_t channels,
                                   size_t height,
                                   size_t width,
                                   bool label,
                                   struct CfVideo **out);

// # Safety
// `video` must be null or a live handle.
void cf_video_free(struct CfVideo *video);

// # Safety
// `video` must be a live handle; `out` valid for one write.
enum CfStatus cf_video_len(const struct CfVideo *video, size_t *out);

// Runs one deterministic episode and reports its cost and prediction.
// `mode` is a [`CfMode`] value.
//
// # Safety
// Handles must be live; `out` valid for one write.
enum CfStatus cf_run_episode(const struct CfEngine *engine,
                             const struct CfVideo *video,
                             uint32_t mode,
                             uint64_t seed,
                             struct CfEpisodeSummary *out);

// Per-frame importance scores. `variant` is 1, 2 or 3; `scores` must hold
// the video's frame count.
//
// # Safety
// Handles must be live; `scores` valid for `len` writes.
enum CfStatus cf_score_frames(const struct CfEngine *engine,
                              const struct CfVideo *video,
                              uint32_t variant,
                              uint64_t seed,
                              double *scores,
                              size_t len);

// IoU of two `[x_min, y_min, x_max, y_max]` boxes.
//
// # Safety
// `a` and `b` must each point to 4 doubles; `out` valid for one write.
enum CfStatus cf_iou(const double *a, const double *b, double *out);

// CIoU loss of `pred` against `gt`, both `[x_min, y_min, x_max, y_max]`.
//
// # Safety
// `pred` and `gt` must each point to 4 doubles; `out` valid for one write.
enum CfStatus cf_ciou_loss(const double *pred, const double *gt, double *out);

// F-beta from match counts.
//
// # Safety
// `out` must be valid for one write.
enum CfStatus cf_fbeta(uint64_t tp, uint64_t fp, uint64_t fn_, double beta, double *out);

// mAP at IoU 0.5 from ground-truth and prediction interchange CSV files.
//
// # Safety
// Paths must be NUL-terminated strings; `out` valid for one write.
enum CfStatus cf_map50_files(const char *gt_path, const char *pred_path, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLIPFORGE_H */
