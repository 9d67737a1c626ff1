#ifndef TRAPGAP_H
#define TRAPGAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Boundary condition on the cell's outer edges.
 */
typedef enum TgOuter {
  TG_OUTER_NEUMANN = 0,
  TG_OUTER_DIRICHLET = 1,
  TG_OUTER_BLOCH = 2,
} TgOuter;

/**
 * Status codes; the numeric values of 2, 3 and 4 match the CLI exit codes.
 */
typedef enum TgStatus {
  TG_STATUS_OK = 0,
  TG_STATUS_INVALID_ARGUMENT = 2,
  TG_STATUS_NUMERICAL_FAILURE = 3,
  TG_STATUS_CONSISTENCY_FAILURE = 4,
  TG_STATUS_NULL_POINTER = 5,
  TG_STATUS_BUFFER_TOO_SMALL = 6,
  TG_STATUS_PANIC = 7,
} TgStatus;

/**
 * Opaque cell mesh.
 */
typedef struct TgMesh TgMesh;

/**
 * Opaque eigenvalue list.
 */
typedef struct TgSpectrum TgSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * call into the library from the same thread.
 */
const char *tg_last_error(void);

/**
 * Limiting gap edges. Pass NaN as `cap_t` to use the built-in capacity.
 */
enum TgStatus tg_gap_edges(uint32_t n, double d, double b, double cap_t, double *sigma, double *mu);

enum TgStatus tg_inverse_design(double sigma,
                                double mu,
                                uint32_t n,
                                double cap_t,
                                double *d,
                                double *b);

/**
 * Aperture radius at period `eps`.
 */
enum TgStatus tg_hole_radius(uint32_t n, double d, double b, double eps, double *r);

/**
 * Two-trap gap edges, written as `[sigma1, mu1, sigma2, mu2]`.
 */
enum TgStatus tg_two_screen(uint32_t n,
                            double d1,
                            double d2,
                            double vol1,
                            double vol2,
                            bool symmetrized,
                            double cap_t,
                            double *edges);

/**
 * Maxwell frequency gaps, written as `[-sqrt(mu), -sqrt(sigma), sqrt(sigma), sqrt(mu)]`.
 */
enum TgStatus tg_maxwell_gap(double sigma, double mu, double *edges);

/**
 * Extrapolated capacity of the unit (n-1)-disc in R^n.
 */
enum TgStatus tg_disc_capacity(uint32_t n, double h, double *value);

/**
 * Builds a cell mesh; `h_max <= 0` selects the default size.
 */
enum TgStatus tg_mesh_build(double b, double hole_radius, double h_max, struct TgMesh **mesh_out);

enum TgStatus tg_mesh_node_count(const struct TgMesh *mesh, uintptr_t *count);

enum TgStatus tg_mesh_triangle_count(const struct TgMesh *mesh, uintptr_t *count);

/**
 * Whether every mesh quality check passes.
 */
enum TgStatus tg_mesh_validate(const struct TgMesh *mesh, bool *passed);

/**
 * Releases a mesh. NULL is ignored.
 */
void tg_mesh_free(struct TgMesh *mesh);

/**
 * Smallest `k` eigenvalues of the cell. `phi1`, `phi2` are used for
 * `TgOuter::Bloch` only. `tol <= 0` selects the default tolerance.
 */
enum TgStatus tg_spectrum_compute(const struct TgMesh *mesh,
                                  enum TgOuter outer,
                                  double phi1,
                                  double phi2,
                                  bool screen_dirichlet,
                                  uintptr_t k,
                                  double tol,
                                  uint64_t seed,
                                  struct TgSpectrum **spectrum_out);

enum TgStatus tg_spectrum_len(const struct TgSpectrum *spectrum, uintptr_t *len);

enum TgStatus tg_spectrum_iterations(const struct TgSpectrum *spectrum, uintptr_t *iterations);

/**
 * Copies the eigenvalues (ascending) into `buf`.
 */
enum TgStatus tg_spectrum_values(const struct TgSpectrum *spectrum, double *buf, uintptr_t len);

enum TgStatus tg_spectrum_residuals(const struct TgSpectrum *spectrum, double *buf, uintptr_t len);

/**
 * Releases a spectrum. NULL is ignored.
 */
void tg_spectrum_free(struct TgSpectrum *spectrum);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAPGAP_H */
