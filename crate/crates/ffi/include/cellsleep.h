#ifndef CELLSLEEP_H
#define CELLSLEEP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A load was outside `[0, 1]` or otherwise out of the model's domain.
   */
  CS_STATUS_DOMAIN_ERROR = 3,
  /**
   * The instance is too large for the requested policy.
   */
  CS_STATUS_TOO_LARGE = 4,
  CS_STATUS_IO_ERROR = 5,
} CsStatus;

/**
 * Station classes, macro included.
 */
typedef enum {
  CS_BS_CLASS_MACRO = 0,
  CS_BS_CLASS_RRH = 1,
  CS_BS_CLASS_MICRO = 2,
  CS_BS_CLASS_PICO = 3,
  CS_BS_CLASS_FEMTO = 4,
} CsBsClass;

/**
 * How sleeping-cell traffic converts onto the macro station.
 */
typedef enum {
  CS_OFFLOAD_SCALING_BANDWIDTH_SCALED = 0,
  CS_OFFLOAD_SCALING_LITERAL = 1,
} CsOffloadScaling;

/**
 * The built-in switching policies.
 */
typedef enum {
  CS_POLICY_AAO = 0,
  CS_POLICY_ES = 1,
  CS_POLICY_MLC = 2,
  CS_POLICY_THESIS = 3,
} CsPolicy;

/**
 * Opaque macro-cell handle: topology, capacity limit and power constants.
 */
typedef struct CsCell CsCell;

/**
 * Opaque trained-predictor handle.
 */
typedef struct CsPredictor CsPredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a macro cell from its small-cell classes. `sbs_classes` points at
 * `n_sbs` entries; the macro station is implicit. The default per-class
 * power constants apply.
 *
 * # Safety
 * `sbs_classes` must be readable for `n_sbs` entries and `out_cell` must be
 * writable.
 */
CsStatus cs_cell_new(const CsBsClass *sbs_classes,
                     size_t n_sbs,
                     double mbs_capacity_limit,
                     CsOffloadScaling scaling,
                     CsCell **out_cell);

/**
 * Releases a cell handle. Null is a no-op.
 *
 * # Safety
 * `cell` must have come from `cs_cell_new` and not been freed before.
 */
void cs_cell_free(CsCell *cell);

/**
 * Stations in the cell, macro included; 0 for a null handle.
 *
 * # Safety
 * `cell` must be a live handle or null.
 */
size_t cs_cell_n_bs(const CsCell *cell);

/**
 * Instantaneous draw of one station class at `load`, or its sleep constant
 * when `is_on` is false.
 *
 * # Safety
 * `cell` must be a live handle and `out_watts` writable.
 */
CsStatus cs_instantaneous_power(const CsCell *cell,
                                CsBsClass class_,
                                double load,
                                bool is_on,
                                double *out_watts);

/**
 * Evaluates one switch assignment: total power, post-offload macro load and
 * feasibility. `raw_loads` holds `n_bs` per-station loads (macro first);
 * `sbs_on` holds `n_sbs` flags, nonzero meaning on. Null out-pointers are
 * skipped.
 *
 * # Safety
 * `cell` must be a live handle; `raw_loads` and `sbs_on` must be readable
 * for `n_bs` and `n_sbs` entries respectively.
 */
CsStatus cs_evaluate_switch(const CsCell *cell,
                            const double *raw_loads,
                            const uint8_t *sbs_on,
                            double *out_power_w,
                            double *out_effective_mbs_load,
                            uint8_t *out_feasible);

/**
 * Instantaneous power saved by an assignment relative to all-on; negative
 * when sleeping costs more at the macro than it saves locally.
 *
 * # Safety
 * Same buffer contracts as `cs_evaluate_switch`, plus a writable
 * `out_watts`.
 */
CsStatus cs_power_saved(const CsCell *cell,
                        const double *raw_loads,
                        const uint8_t *sbs_on,
                        double *out_watts);

/**
 * Runs a reference policy on one slot of loads. `out_sbs_on` receives
 * `n_sbs` flags; `out_power_w` (optional) the resulting network power.
 * Exhaustive search refuses cells past its 20-small-cell cap with
 * `CS_STATUS_TOO_LARGE`.
 *
 * # Safety
 * `cell` must be a live handle; `raw_loads` readable for `n_bs` entries;
 * `out_sbs_on` writable for `n_sbs` entries.
 */
CsStatus cs_policy_run(const CsCell *cell,
                       CsPolicy policy,
                       const double *raw_loads,
                       uint64_t seed,
                       uint8_t *out_sbs_on,
                       double *out_power_w);

/**
 * Loads a predictor checkpoint written by the training pipeline.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_predictor` writable.
 */
CsStatus cs_predictor_load(const char *path, CsPredictor **out_predictor);

/**
 * Releases a predictor handle. Null is a no-op.
 *
 * # Safety
 * `predictor` must have come from `cs_predictor_load` and not been freed
 * before.
 */
void cs_predictor_free(CsPredictor *predictor);

/**
 * History length the predictor consumes; 0 for a null handle.
 *
 * # Safety
 * `predictor` must be a live handle or null.
 */
size_t cs_predictor_window(const CsPredictor *predictor);

/**
 * Predicts the next-slot load from at least `cs_predictor_window` recent
 * loads (the most recent last). The estimate is clipped into `[0, 1]`.
 *
 * # Safety
 * `predictor` must be a live handle, `history` readable for `len` entries,
 * `out_load` writable.
 */
CsStatus cs_predictor_predict(const CsPredictor *predictor,
                              const double *history,
                              size_t len,
                              double *out_load);

/**
 * Static description of a status code.
 */
const char *cs_status_message(CsStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CELLSLEEP_H */
