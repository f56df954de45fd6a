#ifndef SALVKIT_H
#define SALVKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SalvStatus {
  SALV_STATUS_OK = 0,
  SALV_STATUS_NULL_POINTER = 1,
  SALV_STATUS_INVALID_UTF8 = 2,
  SALV_STATUS_PARSE_ERROR = 3,
  SALV_STATUS_SLICE_ERROR = 4,
  SALV_STATUS_DPO_ERROR = 5,
  SALV_STATUS_DOMAIN_ERROR = 6,
  SALV_STATUS_VERIFY_ERROR = 7,
  SALV_STATUS_OUT_OF_RANGE = 8,
  SALV_STATUS_PANIC = 9,
} SalvStatus;

// A parsed module together with its source text.
typedef struct SalvModule SalvModule;

// A slice of a module for a set of target signals.
typedef struct SalvSlice SalvSlice;

// Borrowed view of a preference pair's log-probabilities.
// Masks hold one byte per position, nonzero meaning selected.
typedef struct SalvDpoBatch {
  const double *w_policy_logps;
  const double *w_ref_logps;
  const uint8_t *w_mask;
  size_t w_len;
  const double *l_policy_logps;
  const double *l_ref_logps;
  const uint8_t *l_mask;
  size_t l_len;
  double beta;
} SalvDpoBatch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse Verilog `text`; `origin` names it in diagnostics and may be null.
//
// # Safety
// `text` and `origin` must be null or NUL-terminated; `out` must be writable.
enum SalvStatus salv_module_parse(const char *text, const char *origin, struct SalvModule **out);

// # Safety
// `module` must be null or come from [`salv_module_parse`], freed once.
void salv_module_free(struct SalvModule *module);

// Slice `module` down to the `n_targets` signal names in `targets`.
//
// # Safety
// `module` must be a live handle; `targets` must hold `n_targets` C strings.
enum SalvStatus salv_slice_extract(const struct SalvModule *module,
                                   const char *const *targets,
                                   size_t n_targets,
                                   struct SalvSlice **out);

// Slice text, owned by the handle. Null if `slice` is null.
//
// # Safety
// `slice` must be null or a live handle.
const char *salv_slice_text(const struct SalvSlice *slice);

// Number of retained source spans, header and `endmodule` included.
//
// # Safety
// `slice` must be null or a live handle.
size_t salv_slice_span_count(const struct SalvSlice *slice);

// Byte range `[start, end)` of span `index` in the original source.
//
// # Safety
// `slice` must be a live handle; `start` and `end` must be writable.
enum SalvStatus salv_slice_span(const struct SalvSlice *slice,
                                size_t index,
                                size_t *start,
                                size_t *end);

// # Safety
// `slice` must be null or come from [`salv_slice_extract`], freed once.
void salv_slice_free(struct SalvSlice *slice);

// Masked sum of `policy[t] - reference[t]`.
//
// # Safety
// The three arrays must hold `len` elements; `out` must be writable.
enum SalvStatus salv_masked_logratio(const double *policy,
                                     const double *reference,
                                     const uint8_t *mask,
                                     size_t len,
                                     double *out);

// Loss and margin of one pair. `margin` may be null.
//
// # Safety
// `batch` must describe valid arrays; `loss` must be writable.
enum SalvStatus salv_dpo_loss(const struct SalvDpoBatch *batch, double *loss, double *margin);

// Gradient of the loss with respect to the policy log-probabilities, written
// to `d_w` (`w_len` entries) and `d_l` (`l_len` entries).
//
// # Safety
// `batch` must describe valid arrays; the outputs must hold their lengths.
enum SalvStatus salv_dpo_grad(const struct SalvDpoBatch *batch, double *d_w, double *d_l);

// Unbiased pass@k from `n` samples with `c` correct.
//
// # Safety
// `out` must be writable.
enum SalvStatus salv_pass_at_k(uint64_t n, uint64_t c, uint64_t k, double *out);

// Verify candidates against a reference with `n_stimuli` random cycles.
// On success `*json_out` holds a JSON array of reports, released with
// [`salv_string_free`].
//
// # Safety
// `reference` and each of the `n_candidates` entries must be C strings;
// `json_out` must be writable.
enum SalvStatus salv_verify_prompt(const char *reference,
                                   const char *const *candidates,
                                   size_t n_candidates,
                                   size_t n_stimuli,
                                   uint64_t seed,
                                   char **json_out);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void salv_string_free(char *s);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *salv_last_error(void);

const char *salv_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SALVKIT_H */
