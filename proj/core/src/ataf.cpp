#include "ata/ataf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ata/error.hpp"

namespace ata {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'A', 'F'};

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::span<const std::byte> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(std::to_integer<U>(bytes[offset + i])) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

std::size_t product(std::span<const std::uint64_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void check_count(std::span<const std::uint64_t> shape, std::size_t count) {
  if (product(shape) != count) {
    std::ostringstream msg;
    msg << "tensor shape holds " << product(shape) << " elements but "
        << count << " values were supplied";
    throw Error(msg.str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::uint64_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_count(shape_, std::get<0>(values_).size());
}

Tensor::Tensor(std::vector<std::uint64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_count(shape_, std::get<1>(values_).size());
}

DType Tensor::dtype() const {
  return values_.index() == 0 ? DType::kFloat32 : DType::kFloat64;
}

std::size_t Tensor::element_count() const { return product(shape_); }

std::span<const float> Tensor::f32() const {
  if (dtype() != DType::kFloat32) throw Error("tensor dtype is not float32");
  return std::get<0>(values_);
}

std::span<const double> Tensor::f64() const {
  if (dtype() != DType::kFloat64) throw Error("tensor dtype is not float64");
  return std::get<1>(values_);
}

std::vector<double> Tensor::to_f64() const {
  if (dtype() == DType::kFloat64) return std::get<1>(values_);
  const auto& v = std::get<0>(values_);
  return std::vector<double>(v.begin(), v.end());
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_ || a.values_.index() != b.values_.index()) {
    return false;
  }
  // Bitwise comparison: NaN payloads and signed zeros must survive too.
  return std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        const auto& vb = std::get<V>(b.values_);
        return va.size() == vb.size() &&
               (va.empty() ||
                std::memcmp(va.data(), vb.data(),
                            va.size() * sizeof(typename V::value_type)) == 0);
      },
      a.values_);
}

std::vector<std::byte> encode_tensor(const Tensor& tensor) {
  if (tensor.rank() > 255) throw Error("tensor rank exceeds 255");
  std::vector<std::byte> out;
  const std::size_t width = tensor.dtype() == DType::kFloat32 ? 4 : 8;
  out.reserve(kAtafPreambleBytes + 8 * tensor.rank() +
              width * tensor.element_count());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(out, kAtafVersion);
  out.push_back(static_cast<std::byte>(tensor.dtype()));
  out.push_back(static_cast<std::byte>(tensor.rank()));
  out.resize(kAtafPreambleBytes, std::byte{0});
  for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
  if (tensor.dtype() == DType::kFloat32) {
    for (float v : tensor.f32()) put_le<float>(out, v);
  } else {
    for (double v : tensor.f64()) put_le<double>(out, v);
  }
  return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < kAtafPreambleBytes) throw Error("ATAF: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error("ATAF: bad magic");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kAtafVersion) {
    throw Error("ATAF: unsupported version " + std::to_string(version));
  }
  const auto dtype = std::to_integer<std::uint8_t>(bytes[8]);
  const auto rank = std::to_integer<std::uint8_t>(bytes[9]);
  if (dtype != 1 && dtype != 2) {
    throw Error("ATAF: unsupported dtype " + std::to_string(dtype));
  }
  for (std::size_t i = 10; i < kAtafPreambleBytes; ++i) {
    if (bytes[i] != std::byte{0}) throw Error("ATAF: non-zero header padding");
  }
  const std::size_t dims_end = kAtafPreambleBytes + 8 * std::size_t{rank};
  if (bytes.size() < dims_end) throw Error("ATAF: truncated dimensions");
  std::vector<std::uint64_t> shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint64_t>(bytes, kAtafPreambleBytes + 8 * i);
  }
  const std::size_t count = product(shape);
  const std::size_t width = dtype == 1 ? 4 : 8;
  if (bytes.size() != dims_end + width * count) {
    std::ostringstream msg;
    msg << "ATAF: payload is " << bytes.size() - dims_end << " bytes, expected "
        << width * count;
    throw Error(msg.str());
  }
  if (dtype == 1) {
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = get_le<float>(bytes, dims_end + 4 * i);
    }
    return Tensor(std::move(shape), std::move(values));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = get_le<double>(bytes, dims_end + 8 * i);
  }
  return Tensor(std::move(shape), std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  try {
    return decode_tensor(std::as_bytes(std::span<const char>(raw)));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Tensor to_tensor(const Eigen::MatrixXd& matrix) {
  std::vector<double> values(static_cast<std::size_t>(matrix.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) values[k++] = matrix(r, c);
  }
  return Tensor({static_cast<std::uint64_t>(matrix.rows()),
                 static_cast<std::uint64_t>(matrix.cols())},
                std::move(values));
}

Tensor to_tensor(const Eigen::VectorXd& vector) {
  return Tensor({static_cast<std::uint64_t>(vector.size())},
                std::vector<double>(vector.data(), vector.data() + vector.size()));
}

Eigen::MatrixXd to_matrix(const Tensor& tensor) {
  if (tensor.rank() != 2) throw Error("expected a rank-2 tensor");
  const auto rows = static_cast<Eigen::Index>(tensor.shape()[0]);
  const auto cols = static_cast<Eigen::Index>(tensor.shape()[1]);
  const auto values = tensor.to_f64();
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[k++];
  }
  return m;
}

Eigen::VectorXd to_vector(const Tensor& tensor) {
  if (tensor.rank() != 1) throw Error("expected a rank-1 tensor");
  const auto values = tensor.to_f64();
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  write_tensor(path, to_tensor(m));
}
void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v) {
  write_tensor(path, to_tensor(v));
}
Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  return to_matrix(read_tensor(path));
}
Eigen::VectorXd read_vector(const std::filesystem::path& path) {
  return to_vector(read_tensor(path));
}

}  // namespace ata
