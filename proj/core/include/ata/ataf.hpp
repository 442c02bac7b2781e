#pragma once

// ATAF: a minimal little-endian tensor container.
//
//   offset  size  field
//   0       4     magic "ATAF"
//   4       4     u32 version (= 1)
//   8       1     u8 dtype (1 = float32, 2 = float64)
//   9       1     u8 rank
//   10      6     zero padding to the 8-byte boundary
//   16      8*r   u64 dimensions
//   ...           row-major payload
//
// Feature matrices are always float32. Fitted model parameters use float64
// so that a reloaded model scores bit-identically to the in-memory one.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace ata {

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

inline constexpr std::uint32_t kAtafVersion = 1;
inline constexpr std::size_t kAtafPreambleBytes = 16;

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::uint64_t> shape, std::vector<float> values);
  Tensor(std::vector<std::uint64_t> shape, std::vector<double> values);

  DType dtype() const;
  std::span<const std::uint64_t> shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t element_count() const;

  /// Typed views; throw Error when the dtype differs.
  std::span<const float> f32() const;
  std::span<const double> f64() const;

  /// Values widened to double regardless of storage dtype.
  std::vector<double> to_f64() const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  std::vector<std::uint64_t> shape_;
  std::variant<std::vector<float>, std::vector<double>> values_;
};

std::vector<std::byte> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

using RowMatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Model-parameter helpers (float64). A vector is stored with rank 1.
Tensor to_tensor(const Eigen::MatrixXd& matrix);
Tensor to_tensor(const Eigen::VectorXd& vector);
Eigen::MatrixXd to_matrix(const Tensor& tensor);
Eigen::VectorXd to_vector(const Tensor& tensor);

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);
Eigen::VectorXd read_vector(const std::filesystem::path& path);

}  // namespace ata
