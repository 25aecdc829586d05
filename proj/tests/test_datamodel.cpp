#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "raddepth/dataio.hpp"
#include "raddepth/types.hpp"

using namespace rd;

TEST_CASE("valid_mask counts nonzero entries") {
  SparseDepthMap d(4, 4);
  CHECK(valid_mask(d).count == 0);

  d.at(0, 0) = 1.5f;
  d.at(2, 3) = 10.0f;
  d.at(3, 1) = 79.0f;
  ValidMask m = valid_mask(d);
  CHECK(m.count == 3);
  CHECK(m.at(0, 0));
  CHECK(m.at(2, 3));
  CHECK(m.at(3, 1));
  CHECK_FALSE(m.at(1, 1));

  for (auto& v : d.depth) v = 2.0f;
  CHECK(valid_mask(d).count == 16);
}

TEST_CASE("valid_mask is idempotent and self-masking is identity") {
  SparseDepthMap d(3, 5);
  d.at(1, 2) = 7.25f;
  d.at(2, 4) = 0.125f;
  ValidMask m1 = valid_mask(d);
  SparseDepthMap masked = d;
  for (size_t i = 0; i < d.depth.size(); ++i)
    if (!m1.mask[i]) masked.depth[i] = 0;
  CHECK(masked.depth == d.depth);
  ValidMask m2 = valid_mask(masked);
  CHECK(m1.mask == m2.mask);
}

TEST_CASE("depth serialization round-trips bit-exactly") {
  SparseDepthMap d(6, 7);
  d.at(0, 0) = quantize_mm(12.345f);
  d.at(3, 2) = quantize_mm(0.001f);
  d.at(5, 6) = quantize_mm(65.535f);
  d.at(2, 2) = quantize_mm(79.9f);  // saturates at the u16 ceiling
  auto tmp = std::filesystem::temp_directory_path() / "rd_depth16_test";
  write_depth16(tmp, d);
  SparseDepthMap r = read_depth16(tmp);
  REQUIRE(r.height == d.height);
  REQUIRE(r.width == d.width);
  for (size_t i = 0; i < d.depth.size(); ++i) {
    const float expect = d.depth[i] > 65.535f ? 65.535f : d.depth[i];
    CHECK(r.depth[i] == expect);
  }
  // second cycle is exact
  write_depth16(tmp, r);
  CHECK(read_depth16(tmp).depth == r.depth);
  std::filesystem::remove(tmp);
}
