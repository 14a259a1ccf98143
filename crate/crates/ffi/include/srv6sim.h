#ifndef SRV6SIM_H
#define SRV6SIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Srv6Status {
  SRV6_STATUS_OK = 0,
  SRV6_STATUS_NULL_POINTER = -1,
  SRV6_STATUS_PARSE_ERROR = -2,
  SRV6_STATUS_INVALID_SRH = -3,
  SRV6_STATUS_NO_TRANSPORT = -4,
  SRV6_STATUS_BUFFER_TOO_SMALL = -5,
  SRV6_STATUS_CONFIG_ERROR = -6,
  SRV6_STATUS_IO_ERROR = -7,
  SRV6_STATUS_INVALID_UTF8 = -8,
  SRV6_STATUS_PANIC = -9,
} Srv6Status;

/**
 * A decoded IPv6 packet.
 */
typedef struct Srv6Packet Srv6Packet;

/**
 * A simulation built from a JSON scenario.
 */
typedef struct Srv6Simulation Srv6Simulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *srv6_last_error(void);

/**
 * Decodes `len` octets at `buf` into a new packet handle.
 *
 * # Safety
 * `buf` must point to `len` readable octets and `out` must be writable.
 */
enum Srv6Status srv6_packet_decode(const uint8_t *buf, uintptr_t len, struct Srv6Packet **out);

/**
 * Encodes `packet` into `buf`. `out_len` receives the encoded length,
 * also when the buffer is too small.
 *
 * # Safety
 * `packet` must come from [`srv6_packet_decode`]; `buf` must point to
 * `cap` writable octets (it may be null when `cap` is 0).
 */
enum Srv6Status srv6_packet_encode(const struct Srv6Packet *packet,
                                   uint8_t *buf,
                                   uintptr_t cap,
                                   uintptr_t *out_len);

/**
 * Checks every SRH and the length fields of `packet`.
 *
 * # Safety
 * `packet` must come from [`srv6_packet_decode`].
 */
enum Srv6Status srv6_packet_validate(const struct Srv6Packet *packet);

/**
 * UDP checksum over the pseudo-header the packet's final destination
 * implies.
 *
 * # Safety
 * `packet` must come from [`srv6_packet_decode`] and `out` be writable.
 */
enum Srv6Status srv6_packet_udp_checksum(const struct Srv6Packet *packet, uint16_t *out);

/**
 * Segments left of the outermost SRH, or -1 without one.
 *
 * # Safety
 * `packet` must come from [`srv6_packet_decode`].
 */
int32_t srv6_packet_segments_left(const struct Srv6Packet *packet);

/**
 * # Safety
 * `packet` must come from [`srv6_packet_decode`] or be null, and must
 * not be used afterwards.
 */
void srv6_packet_free(struct Srv6Packet *packet);

/**
 * Builds a simulation from a NUL-terminated JSON scenario.
 *
 * # Safety
 * `json` must be a valid C string and `out` writable.
 */
enum Srv6Status srv6_sim_from_json(const char *json, struct Srv6Simulation **out);

/**
 * Advances the simulation clock to `t_ns`.
 *
 * # Safety
 * `sim` must come from [`srv6_sim_from_json`].
 */
enum Srv6Status srv6_sim_run_until(struct Srv6Simulation *sim, uint64_t t_ns);

/**
 * Current simulation time in nanoseconds, or 0 for a null handle.
 *
 * # Safety
 * `sim` must come from [`srv6_sim_from_json`] or be null.
 */
uint64_t srv6_sim_now(const struct Srv6Simulation *sim);

/**
 * Writes the trace collected so far as TSV to `path`.
 *
 * # Safety
 * `sim` must come from [`srv6_sim_from_json`] and `path` be a valid C
 * string.
 */
enum Srv6Status srv6_sim_write_trace(const struct Srv6Simulation *sim, const char *path);

/**
 * # Safety
 * `sim` must come from [`srv6_sim_from_json`] or be null, and must not
 * be used afterwards.
 */
void srv6_sim_free(struct Srv6Simulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRV6SIM_H */
