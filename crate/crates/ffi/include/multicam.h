#ifndef MULTICAM_H
#define MULTICAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum McStatus {
  MC_STATUS_OK = 0,
  MC_STATUS_NULL_POINTER = 1,
  MC_STATUS_INVALID_UTF8 = 2,
  MC_STATUS_INVALID_ARGUMENT = 3,
  MC_STATUS_CONFIG = 4,
  MC_STATUS_PROTOCOL = 5,
  MC_STATUS_NO_FRAME = 6,
  MC_STATUS_BUFFER_TOO_SMALL = 7,
  MC_STATUS_WRONG_CLOCK_MODE = 8,
  /**
   * The request has no path to a pipeline (no application running).
   */
  MC_STATUS_NO_CONTROL_PATH = 9,
  MC_STATUS_PANIC = 99,
} McStatus;

typedef enum McPeer {
  MC_PEER_A = 0,
  MC_PEER_B = 1,
} McPeer;

typedef enum McTarget {
  MC_TARGET_LOCAL = 0,
  MC_TARGET_REMOTE = 1,
} McTarget;

typedef enum McMessageKind {
  MC_MESSAGE_KIND_PING = 0,
  MC_MESSAGE_KIND_PONG = 1,
  MC_MESSAGE_KIND_ASK_NUM_CAMS = 2,
  MC_MESSAGE_KIND_REPLY_NUM_CAMS = 3,
  MC_MESSAGE_KIND_ASK_VERSION = 4,
  MC_MESSAGE_KIND_REPLY_VERSION = 5,
  MC_MESSAGE_KIND_ADVANCE_CAMERA = 6,
} McMessageKind;

/**
 * Opaque session handle.
 */
typedef struct McSession McSession;

/**
 * A view: `primary` is the 1-based camera ordinal, or 0 for the tiled view.
 */
typedef struct McViewState {
  uint32_t primary;
  uint32_t num_cams;
} McViewState;

/**
 * Size of a peer's current output frame; `bytes` is `width * height * 3`
 * (packed RGB24, rows top to bottom).
 */
typedef struct McFrameInfo {
  uint32_t width;
  uint32_t height;
  size_t bytes;
  uint64_t seq;
  uint64_t timestamp_us;
} McFrameInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. Valid until
 * the next call into this library on the same thread.
 */
const char *mc_last_error(void);

/**
 * Library version, NUL-terminated, static.
 */
const char *mc_version(void);

/**
 * Default two-peer session on the virtual clock.
 */
enum McStatus mc_session_new_default(struct McSession **out);

/**
 * Session from a TOML config document.
 */
enum McStatus mc_session_from_toml(const char *toml, struct McSession **out);

/**
 * Releases a session; null is ignored.
 */
void mc_session_free(struct McSession *s);

/**
 * Advances the virtual clock by `dt_us` microseconds.
 */
enum McStatus mc_session_step(struct McSession *s, uint64_t dt_us);

enum McStatus mc_session_now_us(const struct McSession *s, uint64_t *out);

/**
 * An advance request by `actor`'s user. Returns `NoControlPath` without
 * changing anything if the request cannot reach a pipeline.
 */
enum McStatus mc_session_request_advance(struct McSession *s,
                                         enum McPeer actor,
                                         enum McTarget target);

/**
 * Sends an instant message from `from` to the other peer.
 */
enum McStatus mc_session_deliver_im(struct McSession *s, enum McPeer from, const char *text);

enum McStatus mc_session_view_state(const struct McSession *s,
                                    enum McPeer peer,
                                    struct McViewState *out);

enum McStatus mc_session_frame_info(const struct McSession *s,
                                    enum McPeer peer,
                                    struct McFrameInfo *out);

/**
 * Copies the peer's current output frame (packed RGB24) into `buf`.
 */
enum McStatus mc_session_copy_frame(const struct McSession *s,
                                    enum McPeer peer,
                                    uint8_t *buf,
                                    size_t cap,
                                    size_t *needed);

/**
 * Encodes an application-to-application message. `num_cams` is used by
 * `ReplyNumCams` only; `ReplyVersion` carries this library's versions.
 */
enum McStatus mc_ap2ap_encode(enum McMessageKind kind,
                              uint32_t num_cams,
                              char *buf,
                              size_t cap,
                              size_t *needed);

/**
 * Decodes an application-to-application message. `num_cams` receives the
 * count of a `ReplyNumCams` and is set to 0 otherwise; may be null.
 */
enum McStatus mc_ap2ap_decode(const char *text, enum McMessageKind *kind, uint32_t *num_cams);

/**
 * `ALTER APPLICATION <connection> WRITE <stream> <payload>`, NUL-terminated.
 */
enum McStatus mc_wrap_host_command(const char *connection,
                                   const char *stream,
                                   const char *payload,
                                   char *buf,
                                   size_t cap,
                                   size_t *needed);

/**
 * Next view in the advance cycle. `primary` is 0 for tiled.
 */
enum McStatus mc_advance(uint32_t primary, uint32_t num_cams, bool tiled_enabled, uint32_t *out);

/**
 * Raw RGB24 data rate of one camera in MiB per second; negative if the
 * arguments do not describe a camera mode.
 */
double mc_bandwidth_mib_per_s(uint32_t width, uint32_t height, double fps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTICAM_H */
