#ifndef GCTS_H
#define GCTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GctsStatus {
  GCTS_STATUS_OK = 0,
  GCTS_STATUS_NULL_ARGUMENT = 1,
  GCTS_STATUS_INVALID_ARGUMENT = 2,
  GCTS_STATUS_IO = 3,
  GCTS_STATUS_PARSE = 4,
  GCTS_STATUS_CONFIG = 5,
  GCTS_STATUS_STRUCTURE = 6,
  GCTS_STATUS_INFEASIBLE = 7,
  GCTS_STATUS_NUMERICAL = 8,
  GCTS_STATUS_AUDIT = 9,
  GCTS_STATUS_BUFFER_TOO_SMALL = 10,
  GCTS_STATUS_PANIC = 11,
} GctsStatus;

typedef enum GctsMechanism {
  GCTS_MECHANISM_JED = 0,
  GCTS_MECHANISM_CTS = 1,
  GCTS_MECHANISM_GCTS = 2,
} GctsMechanism;

// The outcome of one clearing.
typedef struct GctsSolution GctsSolution;

// A loaded network with its bids and scenario settings.
typedef struct GctsStudy GctsStudy;

// Cost components of a solution, $/h.
typedef struct GctsCosts {
  double generation;
  double interface;
  double total;
} GctsCosts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a study. `bids_path` and `scenario_path` may be null; without a bid
// book every tie-line gets one bid in each direction.
//
// # Safety
// Paths must be null or nul-terminated strings; `out` must be writable.
enum GctsStatus gcts_study_load(const char *stitch_path,
                                const char *bids_path,
                                const char *scenario_path,
                                struct GctsStudy **out);

// # Safety
// `study` must be null or come from [`gcts_study_load`], freed once.
void gcts_study_free(struct GctsStudy *study);

// Number of buses, zero for a null study.
//
// # Safety
// `study` must be null or a live study.
size_t gcts_study_num_buses(const struct GctsStudy *study);

// # Safety
// `study` must be null or a live study.
size_t gcts_study_num_branches(const struct GctsStudy *study);

// # Safety
// `study` must be null or a live study.
size_t gcts_study_num_areas(const struct GctsStudy *study);

// # Safety
// `study` must be null or a live study.
size_t gcts_study_num_bids(const struct GctsStudy *study);

// Clears the study with one mechanism. `loads` holds one MW value per bus
// in bus order; pass null to use the forecast loads.
//
// # Safety
// `study` must be a live study, `loads` null or `num_loads` readable
// values, `out` writable.
enum GctsStatus gcts_study_solve(const struct GctsStudy *study,
                                 enum GctsMechanism mechanism,
                                 const double *loads,
                                 size_t num_loads,
                                 struct GctsSolution **out);

// # Safety
// `solution` must be null or come from [`gcts_study_solve`], freed once.
void gcts_solution_free(struct GctsSolution *solution);

// # Safety
// `solution` must be a live solution and `out` writable.
enum GctsStatus gcts_solution_costs(const struct GctsSolution *solution, struct GctsCosts *out);

// Copies the nodal prices ($/MWh, bus order) into `buf`. `written`
// receives the number of values; when the buffer is null or short it
// receives the required length and the status is `BUFFER_TOO_SMALL`.
//
// # Safety
// `solution` must be live, `buf` null or `capacity` writable values,
// `written` writable.
enum GctsStatus gcts_solution_prices(const struct GctsSolution *solution,
                                     double *buf,
                                     size_t capacity,
                                     size_t *written);

// Branch flows in MW, branch order. Buffer rules as for prices.
//
// # Safety
// As for [`gcts_solution_prices`].
enum GctsStatus gcts_solution_flows(const struct GctsSolution *solution,
                                    double *buf,
                                    size_t capacity,
                                    size_t *written);

// Generator dispatch in MW, generator order.
//
// # Safety
// As for [`gcts_solution_prices`].
enum GctsStatus gcts_solution_dispatch(const struct GctsSolution *solution,
                                       double *buf,
                                       size_t capacity,
                                       size_t *written);

// Cleared bid quantities in MW, bid order; empty for joint dispatch.
//
// # Safety
// As for [`gcts_solution_prices`].
enum GctsStatus gcts_solution_cleared(const struct GctsSolution *solution,
                                      double *buf,
                                      size_t capacity,
                                      size_t *written);

// Net export of each area in MW, area order.
//
// # Safety
// As for [`gcts_solution_prices`].
enum GctsStatus gcts_solution_net_export(const struct GctsSolution *solution,
                                         double *buf,
                                         size_t capacity,
                                         size_t *written);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into the library from the same thread.
const char *gcts_last_error(void);

// Library version as a static nul-terminated string.
const char *gcts_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCTS_H */
