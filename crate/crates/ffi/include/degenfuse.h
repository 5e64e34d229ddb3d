/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef DEGENFUSE_H
#define DEGENFUSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  DF_STATUS_INVALID_ARGUMENT = 2,
  DF_STATUS_PARSE_ERROR = 3,
  DF_STATUS_VALIDATION_ERROR = 4,
  DF_STATUS_CONFIG_ERROR = 5,
  DF_STATUS_IO_ERROR = 6,
  DF_STATUS_INSUFFICIENT_DATA = 7,
  DF_STATUS_RUNTIME_ERROR = 8,
  DF_STATUS_BUFFER_TOO_SMALL = 9,
  DF_STATUS_PANIC = 10,
} DfStatus;

// Cloud chosen for odometry in one frame.
typedef enum DfSource {
  DF_SOURCE_LIDAR = 0,
  DF_SOURCE_RADAR = 1,
  DF_SOURCE_SKIP = 2,
} DfSource;

// Opaque LiDAR point cloud.
typedef struct DfLidarCloud DfLidarCloud;

// Opaque pipeline parameters.
typedef struct DfParams DfParams;

// Opaque radar point cloud with Doppler.
typedef struct DfRadarCloud DfRadarCloud;

// Opaque per-frame selection result.
typedef struct DfSelection DfSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *df_version(void);

// Message of the last failed call on this thread, or NULL. Valid until
// the next failing call on the same thread.
const char *df_last_error(void);

// Builds a LiDAR cloud from `n` interleaved `x, y, z` triples.
enum DfStatus df_lidar_cloud_new(double timestamp,
                                 const double *xyz,
                                 size_t n,
                                 struct DfLidarCloud **out);

// Reads a `t,x,y,z` CSV frame.
enum DfStatus df_lidar_cloud_read(const char *path, struct DfLidarCloud **out);

// Number of points; 0 for NULL.
size_t df_lidar_cloud_len(const struct DfLidarCloud *cloud);

void df_lidar_cloud_free(struct DfLidarCloud *cloud);

// Builds a radar cloud from `n` interleaved `x, y, z` triples and `n`
// Doppler values (m/s, positive = receding).
enum DfStatus df_radar_cloud_new(double timestamp,
                                 const double *xyz,
                                 const double *doppler,
                                 size_t n,
                                 struct DfRadarCloud **out);

// Reads a `t,x,y,z,doppler[,power]` CSV frame.
enum DfStatus df_radar_cloud_read(const char *path, struct DfRadarCloud **out);

// Number of points; 0 for NULL.
size_t df_radar_cloud_len(const struct DfRadarCloud *cloud);

void df_radar_cloud_free(struct DfRadarCloud *cloud);

// Default parameters.
enum DfStatus df_params_default(struct DfParams **out);

// Parameters from an INI pipeline config; unknown keys are rejected.
enum DfStatus df_params_load(const char *path, struct DfParams **out);

void df_params_free(struct DfParams *params);

// Radar ego-velocity in the sensor frame, written to `velocity[0..3]`.
// `n_inliers` may be NULL. Fails with `INSUFFICIENT_DATA` when the frame
// cannot support an estimate.
enum DfStatus df_estimate_ego_velocity(const struct DfRadarCloud *radar,
                                       const struct DfParams *params,
                                       double *velocity,
                                       size_t *n_inliers);

// Full per-frame selection. `lidar` may be NULL for a missing scan.
enum DfStatus df_select(const struct DfLidarCloud *lidar,
                        const struct DfRadarCloud *radar,
                        const struct DfParams *params,
                        struct DfSelection **out);

// Source picked for the frame; `SKIP` for NULL.
enum DfSource df_selection_source(const struct DfSelection *sel);

// Match ratio of radar static points against the LiDAR scan.
double df_selection_ratio(const struct DfSelection *sel);

bool df_selection_use_lidar(const struct DfSelection *sel);

// LiDAR points removed as dynamic.
size_t df_selection_removed_count(const struct DfSelection *sel);

// Points in the selected cloud.
size_t df_selection_cloud_len(const struct DfSelection *sel);

// Copies the selected cloud as `x, y, z` triples into `xyz`, which holds
// `capacity` doubles. Fails with `BUFFER_TOO_SMALL` if it cannot hold
// `3 * df_selection_cloud_len(sel)` values.
enum DfStatus df_selection_cloud_points(const struct DfSelection *sel,
                                        double *xyz,
                                        size_t capacity);

void df_selection_free(struct DfSelection *sel);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEGENFUSE_H */
