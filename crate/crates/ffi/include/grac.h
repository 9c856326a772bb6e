#ifndef GRAC_H
#define GRAC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum GracStatus {
  GRAC_STATUS_OK = 0,
  // A required pointer was null.
  GRAC_STATUS_NULL_POINTER = 1,
  GRAC_STATUS_INVALID_ARGUMENT = 2,
  // The requested discretisation cannot be built.
  GRAC_STATUS_CONFIG = 3,
  // The consistency equations have no solution.
  GRAC_STATUS_INFEASIBLE = 4,
  GRAC_STATUS_NOT_CONVERGED = 5,
  // A deformation collapsed a bond.
  GRAC_STATUS_SINGULAR = 6,
  GRAC_STATUS_IO = 7,
  GRAC_STATUS_INTERNAL = 8,
} GracStatus;

// How interface coefficients are chosen.
typedef enum GracFit {
  // Unmodified site energies (has ghost forces).
  GRAC_FIT_IDENTITY = 0,
  // ℓ¹-minimal consistent coefficients.
  GRAC_FIT_L1 = 1,
  // Minimum-norm consistent coefficients.
  GRAC_FIT_L2 = 2,
} GracFit;

// A coupled model together with its last equilibrium.
typedef struct GracModel GracModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *grac_last_error(void);

// Library version as a static NUL-terminated string.
const char *grac_version(void);

// Ground-state lattice stretch `α*` (so `F₀ = α* I`) for the default
// potential and the given hop radius.
//
// # Safety
// `alpha` must be null or point to a writable double.
enum GracStatus grac_ground_state(uint32_t hop_radius, double *alpha);

// Builds a coupled model around a row of `defect_size` vacancies with
// atomistic radius `k_atom`, `k_atom²` layers in total, interaction range
// `hop_radius`, coupling method 1 or 2, coefficient fit `fit` and
// stabilisation `kappa`. Fitting may take seconds for larger `k_atom`.
//
// # Safety
// `out` must be null or point to a writable pointer.
enum GracStatus grac_model_new(uint32_t defect_size,
                               uint32_t k_atom,
                               uint32_t hop_radius,
                               uint32_t coupling,
                               enum GracFit fit,
                               double kappa,
                               struct GracModel **out);

// Releases a model; null is ignored.
//
// # Safety
// `model` must be null or a handle from [`grac_model_new`] not yet freed.
void grac_model_free(struct GracModel *model);

// Number of degrees of freedom (lattice sites and mesh nodes).
//
// # Safety
// `n` must be null or point to a writable `size_t`.
enum GracStatus grac_model_num_dofs(const struct GracModel *model, size_t *n);

// Largest ghost force of the model's defect-free twin under the uniform
// deformation `f` (row-major 2×2).
//
// # Safety
// `f` must point to four doubles and `max_force` to a writable double.
enum GracStatus grac_model_ghost_force(const struct GracModel *model,
                                       const double *f,
                                       double *max_force);

// Minimises the energy with far-field deformation `b` (row-major 2×2)
// until the largest gradient component is below `grad_tol`. Writes the
// energy relative to `y = Bx` and, if `positions` is not null, the
// deformed positions as `2 · num_dofs` doubles.
//
// # Safety
// `b` must point to four doubles, `energy` to a writable double, and
// `positions` must be null or hold `2 · num_dofs` writable doubles.
enum GracStatus grac_model_minimize(struct GracModel *model,
                                    const double *b,
                                    double grad_tol,
                                    double *energy,
                                    double *positions);

// Smallest eigenvalue of the Hessian at the last equilibrium found by
// [`grac_model_minimize`].
//
// # Safety
// `lambda` must be null or point to a writable double.
enum GracStatus grac_model_min_eigenvalue(const struct GracModel *model, double *lambda);

// Least-squares slope of `log err` against `log dof` over `n` points.
//
// # Safety
// `dof` and `err` must point to `n` doubles; `slope` to a writable double.
enum GracStatus grac_fit_slope(const double *dof, const double *err, size_t n, double *slope);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAC_H */
