#include "fixtures.hpp"

#include "genvideo/error.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace gvtest;

namespace {

int32_t failing_kernel(const genvideo_feature_slab*, const genvideo_feature_slab*, int32_t,
                       int32_t, int32_t*) {
  return 2;
}

int32_t wild_kernel(const genvideo_feature_slab* fi, const genvideo_feature_slab*, int32_t,
                    int32_t hi, int32_t* offsets) {
  for (int32_t p = 0; p < fi->height * fi->width; ++p) {
    offsets[2 * p] = hi + 1;
    offsets[2 * p + 1] = 0;
  }
  return 0;
}

void expect_equivalent_on_random_instances(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 12), ch(1, 8), rad(0, 3);
  std::uniform_int_distribution<int> q(-1, 1);
  for (int trial = 0; trial < count; ++trial) {
    const Index h = dim(rng), w = dim(rng), c = ch(rng);
    Tensor4d a = random_normal(1, c, h, w, rng), b = random_normal(1, c, h, w, rng);
    if (trial % 3 == 0) {
      for (Index i = 0; i < a.size(); ++i) a.data()[i] = q(rng);
      for (Index i = 0; i < b.size(); ++i) b.data()[i] = q(rng);
    }
    const SearchWindow win =
        trial % 2 ? SearchWindow::symmetric(rad(rng)) : SearchWindow::from_extent(1 + rad(rng));
    ASSERT_EQ(compute_nn_field(a, b, win), compute_nn_field_reference(a, b, win))
        << "trial " << trial;
  }
}

}  // namespace

// Runs first: the environment is read once, on the first field computation.
TEST(KernelBinding, EnvironmentVariableSelectsKernel) {
  ::setenv("GENVIDEO_NN_KERNEL", NNFIELD_TEST_KERNEL_PATH, 1);
  std::mt19937_64 rng(1);
  const Tensor4d a = random_normal(1, 2, 3, 3, rng);
  compute_nn_field(a, a, {});
  EXPECT_EQ(nn_field_kernel_name(), NNFIELD_TEST_KERNEL_PATH);
  set_nn_field_kernel(nullptr);
  ::unsetenv("GENVIDEO_NN_KERNEL");
}

TEST(KernelBinding, ReferenceIsTheDefault) {
  set_nn_field_kernel(nullptr);
  EXPECT_EQ(nn_field_kernel_name(), "reference");
  expect_equivalent_on_random_instances(50, 3);
}

TEST(KernelBinding, LoadedKernelMatchesReference) {
  ASSERT_TRUE(load_nn_field_kernel(NNFIELD_TEST_KERNEL_PATH));
  EXPECT_EQ(nn_field_kernel_name(), NNFIELD_TEST_KERNEL_PATH);
  expect_equivalent_on_random_instances(500, 11);
  set_nn_field_kernel(nullptr);
}

TEST(KernelBinding, MissingLibraryFallsBack) {
  set_nn_field_kernel(nullptr);
  EXPECT_FALSE(load_nn_field_kernel("/nonexistent/libnnfield.so"));
  EXPECT_EQ(nn_field_kernel_name(), "reference");
  // A library without the symbols is refused too.
  EXPECT_FALSE(load_nn_field_kernel("libm.so.6"));
  EXPECT_EQ(nn_field_kernel_name(), "reference");
  expect_equivalent_on_random_instances(20, 5);
}

TEST(KernelBinding, KernelErrorsSurface) {
  std::mt19937_64 rng(2);
  const Tensor4d a = random_normal(1, 2, 4, 4, rng);
  set_nn_field_kernel(failing_kernel, "failing");
  EXPECT_THROW(compute_nn_field(a, a, {}), Error);
  set_nn_field_kernel(wild_kernel, "wild");
  EXPECT_THROW(compute_nn_field(a, a, {}), Error);
  set_nn_field_kernel(nullptr);
  EXPECT_NO_THROW(compute_nn_field(a, a, {}));
}

TEST(KernelBinding, InputsAreValidatedBeforeTheKernel) {
  ASSERT_TRUE(load_nn_field_kernel(NNFIELD_TEST_KERNEL_PATH));
  EXPECT_THROW(compute_nn_field(Tensor4d(1, 1, 2, 2), Tensor4d(1, 1, 2, 3), {}), Error);
  EXPECT_THROW(compute_nn_field(Tensor4d(1, 1, 2, 2), Tensor4d(1, 1, 2, 2), {1, 1}), Error);
  set_nn_field_kernel(nullptr);
}
