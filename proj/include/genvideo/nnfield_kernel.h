/* Binding contract for an accelerated nearest-neighbour field kernel.
 *
 * A kernel library exports
 *   int32_t genvideo_nn_field_version(void);          returns GENVIDEO_NN_FIELD_ABI
 *   int32_t genvideo_nn_field_v1(const genvideo_feature_slab* fi,
 *                                const genvideo_feature_slab* fj,
 *                                int32_t lo, int32_t hi, int32_t* offsets);
 *
 * Slabs are contiguous [height, width, channels] row-major doubles. For every
 * location p of fi the kernel writes (dy, dx) to offsets[2 * p] and
 * offsets[2 * p + 1]: the in-bounds q = p + (dy, dx) with dy, dx in [lo, hi]
 * maximizing cosine similarity
 *   sim = dot / (norm_i * norm_j),  dot and squared norms summed sequentially
 *                                   over channels 0..C-1, norm = sqrt(sum)
 * with sim := 0 when either norm < 1e-12. Ties: larger sim, then smaller
 * |dy| + |dx|, then smaller dy, then smaller dx.
 *
 * Return codes: 0 ok, 1 dimension mismatch, 2 non-finite input, 3 bad window.
 */
#ifndef GENVIDEO_NNFIELD_KERNEL_H
#define GENVIDEO_NNFIELD_KERNEL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define GENVIDEO_NN_FIELD_ABI 1

typedef struct genvideo_feature_slab {
  const double* data;
  int32_t height;
  int32_t width;
  int32_t channels;
} genvideo_feature_slab;

typedef int32_t (*genvideo_nn_field_fn)(const genvideo_feature_slab* fi,
                                        const genvideo_feature_slab* fj, int32_t lo, int32_t hi,
                                        int32_t* offsets);

#ifdef __cplusplus
}
#endif

#endif
