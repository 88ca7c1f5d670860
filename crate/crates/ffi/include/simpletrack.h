#ifndef SIMPLETRACK_H
#define SIMPLETRACK_H

/* Generated by cbindgen from the simpletrack-ffi sources. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_ARGUMENT = 2,
  ST_STATUS_CONFIG_ERROR = 3,
  ST_STATUS_OUT_OF_ORDER_FRAME = 4,
  ST_STATUS_MALFORMED_DETECTION = 5,
  ST_STATUS_BUFFER_TOO_SMALL = 6,
  ST_STATUS_PANIC = 7,
} StStatus;

/*
 Opaque tracker handle.
 */
typedef struct StTracker StTracker;

/*
 Oriented box: center, dimensions, and heading in radians.
 */
typedef struct StBox {
  double center_x;
  double center_y;
  double center_z;
  double length;
  double width;
  double height;
  double yaw;
} StBox;

/*
 One input detection. `class_name` is a NUL-terminated UTF-8 string.
 */
typedef struct StDetection {
  struct StBox bbox;
  double score;
  const char *class_name;
  /*
   True when `velocity_x` and `velocity_y` are set, in meters per frame.
   */
  bool has_velocity;
  double velocity_x;
  double velocity_y;
} StDetection;

/*
 One reported tracklet state.

 `class_name` stays valid until the next push on the same tracker or until
 the tracker is freed.
 */
typedef struct StTrack {
  uint64_t frame_index;
  uint64_t track_id;
  struct StBox bbox;
  double score;
  const char *class_name;
  /*
   True when the state is a motion prediction rather than a detection.
   */
  bool is_prediction;
} StTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Creates a tracker from a named profile (`"wod"` or `"nuscenes"`).

 # Safety
 `profile` must be a NUL-terminated string and `out` a writable pointer.
 */
enum StStatus st_tracker_new_profile(const char *profile, struct StTracker **out);

/*
 Creates a tracker from configuration text in the key-value format.

 # Safety
 `config_text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum StStatus st_tracker_new_config(const char *config_text, struct StTracker **out);

/*
 Releases a tracker. Passing null is a no-op.

 # Safety
 `tracker` must come from a constructor in this library and not be used again.
 */
void st_tracker_free(struct StTracker *tracker);

/*
 Runs one frame. Frame indices must strictly increase.

 On success `out_count` receives the number of outputs for this frame,
 which is zero on non-evaluation frames.

 # Safety
 `tracker` must be valid, `detections` must point to `count` entries (it
 may be null when `count` is 0), and `out_count` must be writable.
 */
enum StStatus st_tracker_push_frame(struct StTracker *tracker,
                                    uint64_t frame_index,
                                    bool is_evaluation_frame,
                                    const struct StDetection *detections,
                                    size_t count,
                                    size_t *out_count);

/*
 Copies the outputs of the last pushed frame into `buffer`.

 `written` always receives the number of available outputs. When
 `capacity` is smaller, nothing is copied and `BUFFER_TOO_SMALL` is returned.

 # Safety
 `tracker` must be valid, `buffer` must hold `capacity` entries (it may be
 null when `capacity` is 0), and `written` must be writable.
 */
enum StStatus st_tracker_outputs(const struct StTracker *tracker,
                                 struct StTrack *buffer,
                                 size_t capacity,
                                 size_t *written);

/*
 Number of live tracklets, including tentative ones.

 # Safety
 `tracker` must be valid or null.
 */
size_t st_tracker_live_count(const struct StTracker *tracker);

/*
 Volumetric IoU of two boxes.

 # Safety
 All pointers must be valid.
 */
enum StStatus st_iou_3d(const struct StBox *a, const struct StBox *b, double *out);

/*
 Generalized IoU of two boxes, in `[-1, 1]`.

 # Safety
 All pointers must be valid.
 */
enum StStatus st_giou_3d(const struct StBox *a, const struct StBox *b, double *out);

/*
 Message of the last failed call on this thread, or an empty string.

 The pointer stays valid until the next failing call on the same thread.
 */
const char *st_last_error_message(void);

/*
 Library version as a NUL-terminated string.
 */
const char *st_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIMPLETRACK_H */
