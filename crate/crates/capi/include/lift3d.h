#ifndef LIFT3D_H
#define LIFT3D_H

/* Generated by cbindgen from lift3d-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes for every fallible entry point.
 */
typedef enum {
  L3D_STATUS_OK = 0,
  L3D_STATUS_INVALID_ARGUMENT = 1,
  L3D_STATUS_PARSE_ERROR = 2,
  L3D_STATUS_BEHIND_CAMERA = 3,
  L3D_STATUS_BUFFER_TOO_SMALL = 4,
} L3dStatus;

/**
 * Opaque parsed box token. Create with `l3d_box_token_parse`, release with
 * `l3d_box_token_free`.
 */
typedef struct L3dBoxToken L3dBoxToken;

/**
 * Pinhole intrinsics. `width`/`height` are the image size in pixels.
 */
typedef struct {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} L3dIntrinsics;

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *l3d_last_error(void);

/**
 * Crate version as a static NUL-terminated string.
 */
const char *l3d_version(void);

/**
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 * On success `*out` owns a token that must be released with
 * `l3d_box_token_free`.
 */
L3dStatus l3d_box_token_parse(const char *text, L3dBoxToken **out);

/**
 * # Safety
 * `token` must come from `l3d_box_token_parse` and not be freed twice.
 */
void l3d_box_token_free(L3dBoxToken *token);

/**
 * # Safety
 * `token` must be a live handle.
 */
uint32_t l3d_box_token_id(const L3dBoxToken *token);

/**
 * Category string of the token; valid until the token is freed.
 *
 * # Safety
 * `token` must be a live handle.
 */
const char *l3d_box_token_category(const L3dBoxToken *token);

/**
 * Writes (u, v, z) into `out[0..3]`.
 *
 * # Safety
 * `token` must be a live handle and `out` must point at 3 doubles.
 */
L3dStatus l3d_box_token_uvz(const L3dBoxToken *token, double *out);

/**
 * Writes (sx, sy, sz) into `out[0..3]`.
 *
 * # Safety
 * `token` must be a live handle and `out` must point at 3 doubles.
 */
L3dStatus l3d_box_token_size(const L3dBoxToken *token, double *out);

/**
 * Renders the canonical wire form of a token into `buf`.
 *
 * # Safety
 * `token` must be a live handle and `buf` must hold at least `cap` bytes.
 */
L3dStatus l3d_box_token_render(const L3dBoxToken *token, char *buf, size_t cap);

/**
 * Serializes a metric box to its wire token: center/size are camera-frame
 * meters, the center is projected through the intrinsics.
 *
 * # Safety
 * `category` must be a valid NUL-terminated string, `center` and `size`
 * must point at 3 doubles each, and `buf` must hold at least `cap` bytes.
 */
L3dStatus l3d_serialize_box(uint32_t id,
                            const char *category,
                            const double *center,
                            const double *size,
                            const L3dIntrinsics *intr,
                            char *buf,
                            size_t cap);

/**
 * Back-projects pixel (u, v) at depth z to camera-frame meters in `out[0..3]`.
 *
 * # Safety
 * `intr` must be valid and `out` must point at 3 doubles.
 */
L3dStatus l3d_uvz_to_xyz(const L3dIntrinsics *intr, double u, double v, double z, double *out);

/**
 * Projects a camera-frame point to (u, v, z) in `out[0..3]`.
 *
 * # Safety
 * `intr` must be valid, `xyz` and `out` must point at 3 doubles each.
 */
L3dStatus l3d_xyz_to_uvz(const L3dIntrinsics *intr, const double *xyz, double *out);

/**
 * IoU of two axis-aligned camera-frame boxes given as center/size triples.
 *
 * # Safety
 * All four pointers must reference 3 doubles each.
 */
double l3d_iou3d(const double *center_a,
                 const double *size_a,
                 const double *center_b,
                 const double *size_b);

/**
 * Clock-hour bearing (1..=12) of `target` from `reference` on the xz-plane.
 *
 * # Safety
 * `reference` and `target` must point at 3 doubles each; `out_hour` must be
 * a valid pointer.
 */
L3dStatus l3d_clock_direction(const double *reference, const double *target, uint8_t *out_hour);

/**
 * Grades a free-text numeric prediction against a metric reference with a
 * relative tolerance (boundary inclusive).
 *
 * # Safety
 * `prediction` must be a valid NUL-terminated string and `out_correct` a
 * valid pointer.
 */
L3dStatus l3d_grade_numeric(const char *prediction,
                            double reference_m,
                            double tolerance,
                            bool *out_correct);

/**
 * Grades a free-text clock-direction prediction against a reference hour.
 *
 * # Safety
 * `prediction` must be a valid NUL-terminated string and `out_correct` a
 * valid pointer.
 */
L3dStatus l3d_grade_direction(const char *prediction, uint8_t reference_hour, bool *out_correct);

#endif /* LIFT3D_H */
