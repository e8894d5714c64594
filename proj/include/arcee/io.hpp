#pragma once

// On-disk formats.
//
// Tensor dump: one text line `ARC1 <dtype> <ndims> <d0> <d1> ...\n` followed by
// the row-major values as little-endian f32 or f64.
//
// Checkpoint: `ARCCKPT 1 <count>\n`, then for every parameter a line holding
// its name and a tensor dump.
//
// Image grid: binary PGM (P5, maxval 255); values in [-1, 1] map linearly to
// [0, 255] with round-half-to-even.

#include "arcee/network.hpp"

#include <bit>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace arcee {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Real>
constexpr const char* dtype_name() {
    static_assert(std::is_same_v<Real, float> || std::is_same_v<Real, double>);
    return std::is_same_v<Real, float> ? "f32" : "f64";
}

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = std::bit_cast<U>(value);
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename T>
T read_le(std::istream& in) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("tensor dump: truncated payload");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= U(bytes[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

// A dump of arbitrary rank; `values` is row-major.
template <typename Real>
struct TensorDump {
    std::vector<std::int64_t> dims;
    std::vector<Real> values;
};

template <typename Real>
void write_tensor(std::ostream& out, const std::vector<std::int64_t>& dims, const Real* data) {
    std::int64_t count = 1;
    out << "ARC1 " << dtype_name<Real>() << ' ' << dims.size();
    for (auto d : dims) {
        out << ' ' << d;
        count *= d;
    }
    out << '\n';
    for (std::int64_t i = 0; i < count; ++i) detail::write_le<Real>(out, data[i]);
}

template <typename Real>
void write_tensor(std::ostream& out, const Mat<Real>& m) {
    write_tensor<Real>(out, {m.rows(), m.cols()}, m.data());
}

// Reads either dtype and converts to Real.
template <typename Real>
TensorDump<Real> read_tensor(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("tensor dump: missing header");
    std::istringstream hs(header);
    std::string magic, dtype;
    std::size_t ndims = 0;
    if (!(hs >> magic >> dtype >> ndims) || magic != "ARC1") throw FormatError("tensor dump: bad header '" + header + "'");
    if (dtype != "f32" && dtype != "f64") throw FormatError("tensor dump: unknown dtype '" + dtype + "'");
    TensorDump<Real> t;
    std::int64_t count = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        std::int64_t d = 0;
        if (!(hs >> d) || d < 0) throw FormatError("tensor dump: bad dimension");
        t.dims.push_back(d);
        count *= d;
    }
    t.values.resize(count);
    for (std::int64_t i = 0; i < count; ++i)
        t.values[i] = dtype == "f32" ? Real(detail::read_le<float>(in)) : Real(detail::read_le<double>(in));
    return t;
}

template <typename Real>
Mat<Real> read_matrix(std::istream& in) {
    auto t = read_tensor<Real>(in);
    if (t.dims.size() != 2) throw FormatError("tensor dump: expected a rank-2 tensor");
    Mat<Real> m(t.dims[0], t.dims[1]);
    std::copy(t.values.begin(), t.values.end(), m.data());
    return m;
}

template <typename Real>
void save_tensor(const std::string& path, const std::vector<std::int64_t>& dims, const Real* data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path + "'");
    write_tensor<Real>(out, dims, data);
}

template <typename Real>
TensorDump<Real> load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read '" + path + "'");
    return read_tensor<Real>(in);
}

template <typename Real>
void write_checkpoint(std::ostream& out, NetworkParams<Real>& params) {
    auto entries = params.entries();
    out << "ARCCKPT 1 " << entries.size() << '\n';
    for (auto& e : entries) {
        out << e.name << '\n';
        write_tensor(out, *e.tensor);
    }
}

// `params` must already have the target shapes (NetworkParams::zeros(cfg)).
template <typename Real>
void read_checkpoint(std::istream& in, NetworkParams<Real>& params) {
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    if (!(hs >> magic >> version >> count) || magic != "ARCCKPT" || version != 1)
        throw FormatError("checkpoint: bad header");
    auto entries = params.entries();
    if (count != entries.size()) throw FormatError("checkpoint: parameter count mismatch");
    for (auto& e : entries) {
        std::string name;
        std::getline(in, name);
        if (name != e.name) throw FormatError("checkpoint: expected '" + e.name + "', found '" + name + "'");
        Mat<Real> m = read_matrix<Real>(in);
        if (m.rows() != e.tensor->rows() || m.cols() != e.tensor->cols())
            throw FormatError("checkpoint: shape mismatch for '" + e.name + "'");
        *e.tensor = std::move(m);
    }
}

template <typename Real>
void save_checkpoint(const std::string& path, NetworkParams<Real>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path + "'");
    write_checkpoint(out, params);
}

template <typename Real>
void load_checkpoint(const std::string& path, NetworkParams<Real>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read '" + path + "'");
    read_checkpoint(in, params);
}

inline std::uint8_t to_gray(double v) {
    const double clamped = std::clamp(v, -1.0, 1.0);
    // nearbyint rounds half to even under the default FE_TONEAREST mode
    return static_cast<std::uint8_t>(std::nearbyint((clamped + 1.0) * 127.5));
}

struct GrayImage {
    Index width = 0;
    Index height = 0;
    std::vector<std::uint8_t> pixels;
};

// Tiles n samples (rows of `samples`, each height*width) into a ceil(sqrt(n))-wide
// grid without padding; unused tiles stay black.
template <typename Real>
GrayImage make_image_grid(const Mat<Real>& samples, Index height, Index width) {
    require_shape(samples.cols() == height * width, "make_image_grid: sample length must be height*width");
    const Index n = samples.rows();
    const Index cols = std::max<Index>(1, Index(std::ceil(std::sqrt(double(n)))));
    const Index rows = std::max<Index>(1, (n + cols - 1) / cols);
    GrayImage img{cols * width, rows * height, {}};
    img.pixels.assign(img.width * img.height, 0);
    for (Index s = 0; s < n; ++s) {
        const Index gr = s / cols, gc = s % cols;
        for (Index r = 0; r < height; ++r)
            for (Index c = 0; c < width; ++c)
                img.pixels[(gr * height + r) * img.width + gc * width + c] = to_gray(double(samples(s, r * width + c)));
    }
    return img;
}

inline void write_pgm(std::ostream& out, const GrayImage& img) {
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline GrayImage read_pgm(std::istream& in) {
    std::string magic;
    GrayImage img;
    int maxval = 0;
    if (!(in >> magic >> img.width >> img.height >> maxval) || magic != "P5" || maxval != 255)
        throw FormatError("pgm: unsupported header");
    in.get();
    img.pixels.resize(img.width * img.height);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
        throw FormatError("pgm: truncated");
    return img;
}

}  // namespace arcee
