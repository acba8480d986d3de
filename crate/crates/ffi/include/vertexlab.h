#ifndef VERTEXLAB_H
#define VERTEXLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define VL_OK 0

#define VL_ERR_NULL 1

#define VL_ERR_INVALID_Q 2

#define VL_ERR_INVALID_PARAMS 3

#define VL_ERR_COLLISION 4

#define VL_ERR_NUMERICAL 5

#define VL_ERR_IO 6

#define VL_ERR_CONFIG 7

#define VL_ERR_BUFFER 8

#define VL_ERR_PANIC 9

/*
 Model parameters `q`, `u_1..u_T`, `a_1..a_N`, `nu_1..nu_N`.
 */
typedef struct VlParams VlParams;

/*
 A vertex-model sampler in a fixed window with its own random stream.
 */
typedef struct VlSampler VlSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Free the result
 with [`vl_string_free`].
 */
char *vl_last_error_message(void);

/*
 # Safety
 `s` must come from this library and not have been freed.
 */
void vl_string_free(char *s);

/*
 Library version as a static string.
 */
const char *vl_version(void);

/*
 # Safety
 `u` must point to `t_len` doubles, `a` and `nu` to `n_len` doubles each,
 and `out` to writable storage for one handle.
 */
int32_t vl_params_new(double q,
                      const double *u,
                      size_t t_len,
                      const double *a,
                      const double *nu,
                      size_t n_len,
                      struct VlParams **out);

/*
 # Safety
 `p` must be null or a handle from [`vl_params_new`] not yet freed.
 */
void vl_params_free(struct VlParams *p);

/*
 `order` 0 selects the step boundary, `r >= 1` the step-Bernoulli boundary
 of order `r` (needs `nu_1 = ... = nu_r = 0`).

 # Safety
 `params` must be a live handle and `out` writable.
 */
int32_t vl_sampler_new(const struct VlParams *params,
                       uint32_t order,
                       size_t n_max,
                       size_t t_max,
                       uint64_t seed,
                       struct VlSampler **out);

/*
 Number of heights one sample writes: `(n_max + 1) * (t_max + 1)`.

 # Safety
 `s` must be a live handle.
 */
size_t vl_sampler_field_len(const struct VlSampler *s);

/*
 Draws the next sample and writes `h(N, T)` at index `T * (n_max + 1) + N - 1`.
 Sample `k` of a sampler created with `seed` is the same on every platform.

 # Safety
 `s` must be a live handle, `heights` must point to `len` writable values.
 */
int32_t vl_sampler_sample(struct VlSampler *s, uint32_t *heights, size_t len);

/*
 # Safety
 `s` must be null or a handle from [`vl_sampler_new`] not yet freed.
 */
void vl_sampler_free(struct VlSampler *s);

/*
 `E prod_i q^{h(N_i + 1, T)}` under the step boundary, exactly.

 # Safety
 `params` must be a live handle, `n_list` must point to `len` values and
 `out` must be writable.
 */
int32_t vl_moment(const struct VlParams *params,
                  const size_t *n_list,
                  size_t len,
                  size_t t,
                  double *out);

/*
 Writes `P(length = k)` for `k = 0..=t` in the homogeneous Schur setup.

 # Safety
 `law` must point to `len >= t + 1` writable doubles.
 */
int32_t vl_schur_length_law(double q,
                            double u,
                            double a1,
                            size_t n,
                            size_t t,
                            double *law,
                            size_t len);

double vl_tracy_widom_cdf(double r);

/*
 Runs one acceptance check by id. `pass` receives 1 or 0; `report_json`,
 when not null, receives the report, to be freed with [`vl_string_free`].

 # Safety
 `id` must be a NUL-terminated string, `pass` writable.
 */
int32_t vl_run_check(const char *id, uint64_t seed, int32_t *pass, char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VERTEXLAB_H */
