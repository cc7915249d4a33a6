#ifndef RINGTRAP_H
#define RINGTRAP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_NULL_POINTER = 1,
  RT_STATUS_INVALID_ARGUMENT = 2,
  RT_STATUS_UNKNOWN_SPECIES = 3,
  RT_STATUS_RESOLUTION_TOO_COARSE = 4,
  RT_STATUS_MEMORY_BUDGET = 5,
  RT_STATUS_NON_CONVERGENCE = 6,
  RT_STATUS_NO_MINIMUM = 7,
  RT_STATUS_NO_TRAP_IN_RANGE = 8,
  RT_STATUS_OUT_OF_DOMAIN = 9,
  RT_STATUS_INSIDE_CONDUCTOR = 10,
  RT_STATUS_OTHER = 11,
  RT_STATUS_PANIC = 12,
} RtStatus;

/**
 * Solved unit-voltage field of one disk geometry.
 */
typedef struct RtField RtField;

/**
 * Field plus mirror and species.
 */
typedef struct RtSystem RtSystem;

/**
 * Trap characterization at one voltage. SI units; `volume_m3` is NaN when
 * the threshold lies above the trap depth.
 */
typedef struct RtTrap {
  double voltage;
  double rho_min;
  double z_min;
  double u_min_j;
  double depth_j;
  double depth_mhz;
  double omega_r;
  double omega_perp;
  double mode_r;
  double mode_perp;
  double eta_r;
  double eta_perp;
  double b_min_t;
  double volume_m3;
} RtTrap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static NUL-terminated string.
 */
const char *rt_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated,
 * NUL-terminated) and returns its full length without the NUL; 0 if none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t rt_last_error(char *buf, size_t len);

/**
 * Solves the field of a disk of radius `r` at height `d` (m) with grid
 * spacing `spacing` (m) and default everything else.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum RtStatus rt_field_solve(double r, double d, double spacing, struct RtField **out);

/**
 * # Safety
 * `field` must be null or come from [`rt_field_solve`] and not be freed twice.
 */
void rt_field_free(struct RtField *field);

/**
 * Grid size and spacing of a solved field.
 *
 * # Safety
 * `field` must be a live handle; outputs must be valid or null.
 */
enum RtStatus rt_field_grid(const struct RtField *field, size_t *n_rho, size_t *n_z, double *h);

/**
 * Builds a trap system from a field, a species name ("Cs", "Rb", "K") and
 * the mirror surface field (T) and period (m). The field handle stays owned
 * by the caller.
 *
 * # Safety
 * `field` must be a live handle, `species` a NUL-terminated string and
 * `out` valid for a pointer write.
 */
enum RtStatus rt_system_new(const struct RtField *field,
                            const char *species,
                            double b0_surface,
                            double period_a,
                            struct RtSystem **out);

/**
 * # Safety
 * `sys` must be null or come from [`rt_system_new`] and not be freed twice.
 */
void rt_system_free(struct RtSystem *sys);

/**
 * Includes or removes gravity along −z.
 *
 * # Safety
 * `sys` must be a live handle.
 */
enum RtStatus rt_system_set_gravity(struct RtSystem *sys, bool on);

/**
 * Depth-maximizing disk voltage over the default scan range.
 *
 * # Safety
 * `sys` must be a live handle and `v_star` valid for a write.
 */
enum RtStatus rt_system_optimal_voltage(const struct RtSystem *sys, double *v_star);

/**
 * Characterizes the trap at `voltage`.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for a write.
 */
enum RtStatus rt_system_characterize(const struct RtSystem *sys,
                                     double voltage,
                                     struct RtTrap *out);

/**
 * Potential (J) and force (N) at a Cartesian point (m) for disk voltage
 * `voltage`. `force` may be null; otherwise it receives three values.
 *
 * # Safety
 * `sys` must be a live handle, `u` valid for a write and `force` null or
 * valid for three writes.
 */
enum RtStatus rt_system_potential(const struct RtSystem *sys,
                                  double voltage,
                                  double x,
                                  double y,
                                  double z,
                                  double *u,
                                  double *force);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RINGTRAP_H */
