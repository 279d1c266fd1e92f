#ifndef RELAXCTL_H
#define RELAXCTL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RELAX_OK 0

#define RELAX_ERR_NULL 1

#define RELAX_ERR_DIMENSION 2

#define RELAX_ERR_SINGULAR 3

#define RELAX_ERR_NUMERICAL 4

#define RELAX_ERR_GRID 5

#define RELAX_ERR_INVALID 6

#define RELAX_ERR_PANIC 7

// Opaque system handle. Three-scale models expose their macro/meso part.
typedef struct RelaxSystem RelaxSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must point to `len` writable bytes or be null.
size_t relax_last_error(char *buf, size_t len);

// Builds a two-scale system with constant coefficients.
//
// Shapes: `a1` m×n, `a2` n×n, `b1` m×p, `b2` n×q, `c1` m, `c2` n; the boxes
// are given by lower/upper corners.
//
// # Safety
// Every pointer must reference the number of doubles implied by its shape,
// and `out` must be writable.
int relax_system_new(size_t m,
                     size_t n,
                     size_t p,
                     size_t q,
                     const double *a1,
                     const double *a2,
                     const double *b1,
                     const double *b2,
                     const double *c1,
                     const double *c2,
                     const double *alpha_lower,
                     const double *alpha_upper,
                     const double *beta_lower,
                     const double *beta_upper,
                     double epsilon,
                     struct RelaxSystem **out);

// Builds a registered zoo model with `d` cells (0 for the default) at `epsilon`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` writable.
int relax_model_new(const char *name, size_t d, double epsilon, struct RelaxSystem **out);

// # Safety
// `sys` must come from a constructor of this library, or be null.
void relax_system_free(struct RelaxSystem *sys);

// Writes the dimensions `(m, n, p, q)`.
//
// # Safety
// `sys` must be a live handle and `dims` must hold 4 writable `size_t`.
int relax_system_dims(const struct RelaxSystem *sys, size_t *dims);

// Fast equilibrium `y = ψ(z, β)`.
//
// # Safety
// `z` holds m doubles, `beta` q, and `y` n writable doubles.
int relax_static_map(const struct RelaxSystem *sys, const double *z, const double *beta, double *y);

// Reduced slow drift `ż = F(z, α, β)`.
//
// # Safety
// `z` holds m doubles, `alpha` p, `beta` q, and `dz` m writable doubles.
int relax_reduced_rhs(const struct RelaxSystem *sys,
                      const double *z,
                      const double *alpha,
                      const double *beta,
                      double *dz);

// Ergodic constant of the fast cell problem from its closed form.
//
// # Safety
// `z` and `p` hold m doubles; `lambda` is writable.
int relax_lambda1(const struct RelaxSystem *sys, const double *z, const double *p, double *lambda);

// Discounted cell-problem estimate of the ergodic constant on a uniform fast
// grid with `nodes[k]` points on `[lower[k], upper[k]]`.
//
// # Safety
// `z`, `p` hold m doubles; `lower`, `upper`, `nodes` hold n entries; `lambda` is writable.
int relax_cell_lambda(const struct RelaxSystem *sys,
                      const double *z,
                      const double *p,
                      const double *lower,
                      const double *upper,
                      const size_t *nodes,
                      double delta,
                      double *lambda);

// Stiff integration over `[0, horizon]` with constant controls; writes the
// final `(z, y)` (m + n doubles).
//
// # Safety
// `alpha` holds p doubles, `beta` q, `z0` m, `y0` n; `state` has m + n writable doubles.
int relax_integrate(const struct RelaxSystem *sys,
                    const double *alpha,
                    const double *beta,
                    const double *z0,
                    const double *y0,
                    double horizon,
                    size_t steps,
                    double *state);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAXCTL_H */
