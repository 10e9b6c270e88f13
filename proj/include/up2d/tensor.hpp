#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace up2d {

using Scalar = float;
using Shape = std::vector<std::size_t>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float tensor. Value type; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Scalar fill = 0.0f);
    Tensor(Shape shape, std::vector<Scalar> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
    static Tensor full(Shape shape, Scalar value) { return Tensor(std::move(shape), value); }
    static Tensor scalar(Scalar v) { return Tensor(Shape{}, std::vector<Scalar>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const noexcept { return data_.size(); }

    std::span<Scalar> data() noexcept { return data_; }
    std::span<const Scalar> data() const noexcept { return data_; }
    const std::vector<Scalar>& vec() const noexcept { return data_; }

    Scalar& operator[](std::size_t i) { return data_[i]; }
    Scalar operator[](std::size_t i) const { return data_[i]; }

    // 4-D accessors (N, C, H, W)
    Scalar& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    Scalar at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
    std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    Scalar item() const;
    Tensor reshaped(Shape shape) const;

    /// Throws NumericError naming `where` if any element is NaN or Inf.
    void check_finite(const std::string& where) const;
    bool all_finite() const noexcept;

    Scalar sum() const;
    Scalar mean() const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<Scalar> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

// UP2DT binary format: "UP2DT", version byte, rank (u8), dims (u64 LE), float32 LE data.
inline constexpr std::uint8_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

} // namespace up2d
