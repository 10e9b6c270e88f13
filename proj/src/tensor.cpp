#include "up2d/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace up2d {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match buffer of " +
                         std::to_string(data_.size()) + " elements");
    }
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) {
        throw ShapeError("dim " + std::to_string(i) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[i];
}

std::size_t Tensor::offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
}

Scalar& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
}

Scalar Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
}

Scalar Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    for (Scalar v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::check_finite(const std::string& where) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError(where + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

Scalar Tensor::sum() const {
    double acc = 0.0;
    for (Scalar v : data_) acc += v;
    return static_cast<Scalar>(acc);
}

Scalar Tensor::mean() const {
    if (data_.empty()) throw ShapeError("mean of empty tensor");
    return sum() / static_cast<Scalar>(data_.size());
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(what + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

namespace {

constexpr char kMagic[5] = {'U', 'P', '2', 'D', 'T'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated tensor header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
}

} // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 5);
    os.put(static_cast<char>(kTensorFormatVersion));
    os.put(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(os, d);
    for (Scalar v : t.data()) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!os) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& is) {
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) throw IoError("bad tensor magic");
    const int version = is.get();
    if (version != kTensorFormatVersion) throw IoError("unsupported tensor version " + std::to_string(version));
    const int rank = is.get();
    if (rank < 0) throw IoError("truncated tensor header");
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = get_u64(is);
    std::vector<Scalar> data(shape_numel(shape));
    for (auto& v : data) {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated tensor data");
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= std::uint32_t{b[i]} << (8 * i);
        v = std::bit_cast<Scalar>(bits);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_tensor(is);
}

} // namespace up2d
