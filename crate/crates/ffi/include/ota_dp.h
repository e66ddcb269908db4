#ifndef OTA_DP_H
#define OTA_DP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum OtaStatus {
  OTA_STATUS_OK = 0,
  OTA_STATUS_NULL_POINTER = 1,
  OTA_STATUS_INVALID_ARGUMENT = 2,
  OTA_STATUS_INVALID_CONFIG = 3,
  OTA_STATUS_INFEASIBLE = 4,
  OTA_STATUS_NUMERICAL_FAILURE = 5,
  OTA_STATUS_SERIALIZATION = 6,
  OTA_STATUS_PANIC = 7,
} OtaStatus;

/**
 * Channel realisation, one column per device.
 */
typedef struct OtaChannel OtaChannel;

/**
 * System configuration.
 */
typedef struct OtaConfig OtaConfig;

/**
 * Transceiver design.
 */
typedef struct OtaDesign OtaDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ota_last_error_message(void);

/**
 * Default scenario: M=10, N=20, d=20, T=30, SNR 15 dB, ε=30.
 */
enum OtaStatus ota_config_default(struct OtaConfig **out);

/**
 * Parses a configuration from NUL-terminated JSON.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum OtaStatus ota_config_from_json(const char *json, struct OtaConfig **out);

/**
 * Sets the same privacy target for every device; pass `INFINITY` for none.
 *
 * # Safety
 * `cfg` must be a handle from this library.
 */
enum OtaStatus ota_config_set_epsilon(struct OtaConfig *cfg, double epsilon);

/**
 * # Safety
 * `cfg` must be a handle from this library.
 */
enum OtaStatus ota_config_set_snr_db(struct OtaConfig *cfg, double snr_db);

/**
 * # Safety
 * `cfg` must be a handle from this library or NULL.
 */
void ota_config_free(struct OtaConfig *cfg);

/**
 * Draws a Rayleigh channel of the configured shape from `seed`.
 *
 * # Safety
 * `cfg` must be a handle from this library and `out` a valid pointer.
 */
enum OtaStatus ota_channel_generate(const struct OtaConfig *cfg,
                                    uint64_t seed,
                                    struct OtaChannel **out);

/**
 * Builds a channel from interleaved `(re, im)` pairs, column-major with
 * `num_antennas` rows and `num_devices` columns.
 *
 * # Safety
 * `data` must point to `2·num_antennas·num_devices` doubles.
 */
enum OtaStatus ota_channel_from_data(const double *data,
                                     size_t num_antennas,
                                     size_t num_devices,
                                     struct OtaChannel **out);

/**
 * # Safety
 * `channel` must be a handle from this library or NULL.
 */
void ota_channel_free(struct OtaChannel *channel);

/**
 * Runs the alternating transceiver optimisation from the default starting
 * point drawn with `cfg.rng_seed`.
 *
 * # Safety
 * `cfg` and `channel` must be handles from this library and `out` a valid pointer.
 */
enum OtaStatus ota_optimize(const struct OtaConfig *cfg,
                            const struct OtaChannel *channel,
                            bool with_dp,
                            struct OtaDesign **out);

/**
 * Closed-form design for a single-antenna receiver (`num_antennas == 1`).
 *
 * # Safety
 * `cfg` and `channel` must be handles from this library and `out` a valid pointer.
 */
enum OtaStatus ota_miso_design(const struct OtaConfig *cfg,
                               const struct OtaChannel *channel,
                               struct OtaDesign **out);

/**
 * Noise-induced loss term `A` of a design.
 *
 * # Safety
 * All handles must come from this library and `out` must be valid.
 */
enum OtaStatus ota_design_objective(const struct OtaDesign *design,
                                    const struct OtaConfig *cfg,
                                    const struct OtaChannel *channel,
                                    double *out);

/**
 * Privacy level ε_BS of `device` under the design's extractors.
 *
 * # Safety
 * All handles must come from this library and `out` must be valid.
 */
enum OtaStatus ota_design_epsilon_bs(const struct OtaDesign *design,
                                     const struct OtaConfig *cfg,
                                     const struct OtaChannel *channel,
                                     size_t device,
                                     double *out);

/**
 * Aggregation normaliser η of a design.
 *
 * # Safety
 * `design` must be a handle from this library and `out` must be valid.
 */
enum OtaStatus ota_design_eta(const struct OtaDesign *design, double *out);

/**
 * Serialises a design as JSON; release the string with [`ota_string_free`].
 *
 * # Safety
 * `design` must be a handle from this library and `out` must be valid.
 */
enum OtaStatus ota_design_to_json(const struct OtaDesign *design, char **out);

/**
 * # Safety
 * `design` must be a handle from this library or NULL.
 */
void ota_design_free(struct OtaDesign *design);

/**
 * # Safety
 * `s` must be a string returned by this library or NULL.
 */
void ota_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTA_DP_H */
