#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "ata/ataf.hpp"
#include "ata/error.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace ata;

namespace {

// Byte-by-byte serializer written independently of encode_tensor.
std::vector<unsigned char> naive_encode_f32(std::uint64_t rows, std::uint64_t cols,
                                            const std::vector<float>& values) {
  std::vector<unsigned char> out = {'A', 'T', 'A', 'F', 1, 0, 0, 0, 1, 2, 0, 0, 0, 0, 0, 0};
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  put_u64(rows);
  put_u64(cols);
  for (float f : values) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  return out;
}

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("2x3 matrix writes header plus 24 payload bytes and reads back exactly") {
  testutil::TempDir tmp("ataf");
  Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  write_tensor(tmp / "m.ataf", t);
  CHECK(std::filesystem::file_size(tmp / "m.ataf") == kAtafPreambleBytes + 2 * 8 + 24);
  CHECK(read_tensor(tmp / "m.ataf") == t);
}

TEST_CASE("empty feature matrix is rejected") {
  FeatureMatrix m;
  m.data.resize(0, 768);
  CHECK_THROWS_WITH_AS(validate_features(m), doctest::Contains("empty"), Error);
}

TEST_CASE("non-finite feature value names the row") {
  FeatureMatrix m;
  m.data = RowMatrixF::Zero(4, 3);
  m.data(2, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(validate_features(m), doctest::Contains("row 2"), Error);
}

TEST_CASE("file bytes match an independent byte-level serializer") {
  testutil::TempDir tmp("ataf");
  Eigen::MatrixXd r = oracle::random_matrix(1, 768, 5);
  FeatureMatrix m;
  m.data = r.cast<float>();
  write_features(m, tmp / "x.ataf");
  std::vector<float> values(m.data.data(), m.data.data() + m.data.size());
  CHECK(file_bytes(tmp / "x.ataf") == naive_encode_f32(1, 768, values));
  FeatureMatrix back = read_features(tmp / "x.ataf", Modality::kVision);
  CHECK(back.data == m.data);
}

TEST_CASE("round trip is bit exact over random shapes and dtypes") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::uint64_t rows = 1 + rng.below(20), cols = 1 + rng.below(20);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10);
    Tensor td({rows, cols}, v);
    CHECK(decode_tensor(encode_tensor(td)) == td);
    std::vector<float> f(v.begin(), v.end());
    Tensor tf({rows, cols}, f);
    CHECK(decode_tensor(encode_tensor(tf)) == tf);
  }
}

TEST_CASE("decoder rejects malformed input") {
  Tensor t({2, 2}, std::vector<float>{1, 2, 3, 4});
  auto bytes = encode_tensor(t);

  SUBCASE("bad magic") {
    bytes[0] = std::byte{'X'};
    CHECK_THROWS_WITH_AS(decode_tensor(bytes), doctest::Contains("magic"), Error);
  }
  SUBCASE("bad version") {
    bytes[4] = std::byte{9};
    CHECK_THROWS_WITH_AS(decode_tensor(bytes), doctest::Contains("version"), Error);
  }
  SUBCASE("bad dtype") {
    bytes[8] = std::byte{7};
    CHECK_THROWS_WITH_AS(decode_tensor(bytes), doctest::Contains("dtype"), Error);
  }
  SUBCASE("truncated payload") {
    bytes.pop_back();
    CHECK_THROWS_AS(decode_tensor(bytes), Error);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(std::byte{0});
    CHECK_THROWS_AS(decode_tensor(bytes), Error);
  }
  SUBCASE("short header") {
    bytes.resize(6);
    CHECK_THROWS_WITH_AS(decode_tensor(bytes), doctest::Contains("truncated"), Error);
  }
}

TEST_CASE("typed views enforce dtype") {
  Tensor t({2}, std::vector<double>{1.0, 2.0});
  CHECK(t.dtype() == DType::kFloat64);
  CHECK_THROWS_AS(t.f32(), Error);
  CHECK(t.to_f64() == std::vector<double>{1.0, 2.0});
}

TEST_CASE("matrix helpers round trip float64 bit exactly") {
  testutil::TempDir tmp("ataf");
  Eigen::MatrixXd m = oracle::random_matrix(7, 5, 3);
  write_matrix(tmp / "m.ataf", m);
  CHECK(read_matrix(tmp / "m.ataf") == m);
  Eigen::VectorXd v = m.col(2);
  write_vector(tmp / "v.ataf", v);
  CHECK(read_vector(tmp / "v.ataf") == v);
  CHECK_THROWS_AS(read_vector(tmp / "m.ataf"), Error);
}
