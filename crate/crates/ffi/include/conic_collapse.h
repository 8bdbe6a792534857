#ifndef CONIC_COLLAPSE_H
#define CONIC_COLLAPSE_H

#include <stddef.h>
#include <stdint.h>

typedef enum CcStatus {
  CC_STATUS_OK = 0,
  CC_STATUS_NULL_POINTER = 1,
  CC_STATUS_INVALID_VELOCITY = 2,
  CC_STATUS_NO_INTERSECTION = 3,
  CC_STATUS_CAUSAL_VIOLATION = 4,
  CC_STATUS_CONSUMED = 5,
  CC_STATUS_NOT_READY = 6,
  CC_STATUS_INVALID_ARGUMENT = 7,
  CC_STATUS_CONFIG = 8,
  CC_STATUS_NUMERICAL = 9,
  CC_STATUS_SERIALIZATION = 10,
  CC_STATUS_PANIC = 11,
} CcStatus;

/*
 A qRule equation. A collapse consumes it; only `cc_equation_free` and
 read-only queries remain valid afterwards.
 */
typedef struct CcEquation CcEquation;

/*
 Upper envelope of inserted backward cones.
 */
typedef struct CcFrontier CcFrontier;

/*
 An event `(x, t)` in units with c = 1.
 */
typedef struct CcEvent {
  double x;
  double t;
} CcEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after success.
 The pointer stays valid until the next call on this thread.
 */
const char *cc_last_error(void);

/*
 Lorentz boost of `e` into the frame moving with velocity `v`.

 # Safety
 `out` must be null or valid for writes.
 */
enum CcStatus cc_boost(struct CcEvent e, double v, struct CcEvent *out);

/*
 Time of the backward cone of `vertex` at position `x`.

 # Safety
 `out` must be null or valid for writes.
 */
enum CcStatus cc_cone_time(struct CcEvent vertex, double x, double *out);

/*
 Where the backward cone of `vertex` crosses the unbounded worldline
 through `origin` with velocity `velocity`.

 # Safety
 `out` must be null or valid for writes.
 */
enum CcStatus cc_cone_intersect_worldline(struct CcEvent vertex,
                                          struct CcEvent origin,
                                          double velocity,
                                          struct CcEvent *out);

/*
 Empty frontier. Release with `cc_frontier_free`.
 */
struct CcFrontier *cc_frontier_new(void);

/*
 # Safety
 `f` must be null or a handle from `cc_frontier_new` not yet freed.
 */
void cc_frontier_free(struct CcFrontier *f);

/*
 Inserts a reduction vertex. Fails with `CausalViolation` and leaves the
 frontier unchanged when the vertex lies below it.

 # Safety
 `f` must be null or a live frontier handle.
 */
enum CcStatus cc_frontier_insert(struct CcFrontier *f, struct CcEvent vertex);

/*
 Frontier time at `x`. An empty frontier is `InvalidArgument`.

 # Safety
 `f` must be null or a live frontier handle; `out` null or writable.
 */
enum CcStatus cc_frontier_eval(const struct CcFrontier *f, double x, double *out);

/*
 Copies up to `cap` breakpoints into `buf` and stores the total count in
 `len`. Pass `buf = NULL, cap = 0` to query the count.

 # Safety
 `f` must be a live frontier handle; `buf` valid for `cap` writes; `len` writable.
 */
enum CcStatus cc_frontier_breakpoints(const struct CcFrontier *f,
                                      struct CcEvent *buf,
                                      size_t cap,
                                      size_t *len);

/*
 New equation with one realized component labelled `label`.

 # Safety
 `label` must be a NUL-terminated string; `out` writable.
 */
enum CcStatus cc_equation_realized(double clock, const char *label, struct CcEquation **out);

/*
 # Safety
 `eq` must be null or a handle not yet freed.
 */
void cc_equation_free(struct CcEquation *eq);

/*
 Adds a ready component with qvalue 0 and returns its id.

 # Safety
 `eq` must be a live handle; `label` NUL-terminated; `out_id` writable.
 */
enum CcStatus cc_equation_add_ready(struct CcEquation *eq, const char *label, uint32_t *out_id);

/*
 Collapses onto ready component `branch` at conic time `t_hit` with
 reduction `vertex`. The old handle is consumed; the successor is written
 to `out`. When `frontier` is non-null the vertex is inserted into it.

 # Safety
 `eq` must be a live handle; `frontier` null or live; `out` writable.
 */
enum CcStatus cc_equation_collapse(struct CcEquation *eq,
                                   uint32_t branch,
                                   double t_hit,
                                   struct CcEvent vertex,
                                   struct CcFrontier *frontier,
                                   struct CcEquation **out);

/*
 Sum of qvalues over all components.

 # Safety
 `eq` must be a live handle; `out` writable.
 */
enum CcStatus cc_equation_total_qvalue(const struct CcEquation *eq, double *out);

/*
 Runs one scenario and returns its trace as JSON. `config` is either a
 built-in name or a configuration document.

 # Safety
 `config` must be NUL-terminated; `out_json` writable.
 */
enum CcStatus cc_run_scenario_json(const char *config, uint64_t seed, char **out_json);

/*
 Renders a trace as SVG in the frame moving with velocity `boost`.

 # Safety
 `trace_json` must be NUL-terminated; `out_svg` writable.
 */
enum CcStatus cc_render_svg(const char *trace_json, double boost, char **out_svg);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be null or a pointer returned through a `char **` out
 parameter of this library, not yet freed.
 */
void cc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONIC_COLLAPSE_H */
