#pragma once

// In-memory classification datasets: synthetic Gaussian blobs, an IDX
// (MNIST-style) reader/writer and CSV export.

#include <softcal/error.hpp>
#include <softcal/numerics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace softcal {

struct Dataset {
    std::size_t n = 0;
    std::size_t d_in = 0;
    std::size_t num_classes = 0;
    Vector features;                    // n x d_in, row-major
    std::vector<std::uint32_t> labels;  // n entries in [0, num_classes)
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::uint64_t hash = 0;

    std::span<const double> row(std::size_t i) const { return {features.data() + i * d_in, d_in}; }
};

namespace detail {

// FNV-1a, 64 bit.
class Fnv1a {
public:
    void bytes(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <typename T>
    void value(const T& v) {
        bytes(&v, sizeof(T));
    }
    std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t content_hash(const Dataset& ds) {
    Fnv1a h;
    h.value(static_cast<std::uint64_t>(ds.n));
    h.value(static_cast<std::uint64_t>(ds.d_in));
    h.value(static_cast<std::uint64_t>(ds.num_classes));
    h.bytes(ds.features.data(), ds.features.size() * sizeof(double));
    h.bytes(ds.labels.data(), ds.labels.size() * sizeof(std::uint32_t));
    return h.digest();
}

}  // namespace detail

/// Deterministic 80/20 train/test partition derived from (hash, seed) only.
inline void assign_split(Dataset& ds, std::uint64_t seed) {
    std::vector<std::size_t> idx(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) idx[i] = i;
    std::mt19937_64 rng(ds.hash ^ (seed * 0x9e3779b97f4a7c15ULL));
    for (std::size_t i = ds.n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    std::size_t n_train = (ds.n * 4 + 2) / 5;
    n_train = std::clamp<std::size_t>(n_train, std::min<std::size_t>(ds.n, 1), ds.n);
    ds.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.test.begin(), ds.test.end());
}

/// Validates raw arrays and builds a Dataset with hash and split.
inline Dataset make_dataset(Vector features, std::vector<std::uint32_t> labels, std::size_t d_in,
                            std::size_t num_classes, std::uint64_t split_seed = 0) {
    if (d_in == 0 || num_classes == 0) throw InputDomainError("dataset: d_in and num_classes must be positive");
    if (labels.empty()) throw InputDomainError("dataset: no examples");
    if (features.size() != labels.size() * d_in) throw InputDomainError("dataset: feature/label count mismatch");
    if (!all_finite(features)) throw InputDomainError("dataset: non-finite feature");
    for (std::uint32_t l : labels) {
        if (l >= num_classes) throw InputDomainError("dataset: label out of range");
    }
    Dataset ds;
    ds.n = labels.size();
    ds.d_in = d_in;
    ds.num_classes = num_classes;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.hash = detail::content_hash(ds);
    assign_split(ds, split_seed);
    return ds;
}

/// One Gaussian cluster per class. Adjacent centers sit 4*spread apart and
/// every offset is radially clamped to 1.5*spread, so the classes are
/// linearly separable with margin >= spread/2.
inline Dataset gen_blobs(std::size_t n, std::size_t d_in, std::size_t classes, double spread, std::uint64_t seed) {
    if (n == 0 || d_in == 0 || classes == 0) throw InputDomainError("gen_blobs: sizes must be positive");
    if (!(spread > 0.0) || !std::isfinite(spread)) throw InputDomainError("gen_blobs: spread must be positive");

    std::vector<Vector> centers(classes, Vector(d_in, 0.0));
    if (classes >= 2) {
        if (d_in == 1) {
            for (std::size_t c = 0; c < classes; ++c) centers[c][0] = 4.0 * spread * static_cast<double>(c);
        } else {
            const double k = static_cast<double>(classes);
            const double radius = 2.0 * spread / std::sin(std::numbers::pi / k);
            for (std::size_t c = 0; c < classes; ++c) {
                const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / k;
                centers[c][0] = radius * std::cos(a);
                centers[c][1] = radius * std::sin(a);
            }
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, spread);
    Vector features(n * d_in);
    std::vector<std::uint32_t> labels(n);
    Vector offset(d_in);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::uint32_t>(i % classes);
        labels[i] = c;
        for (double& o : offset) o = normal(rng);
        const double r = norm(offset);
        const double cap = 1.5 * spread;
        const double scale = r > cap ? cap / r : 1.0;
        for (std::size_t j = 0; j < d_in; ++j) features[i * d_in + j] = centers[c][j] + scale * offset[j];
    }
    return make_dataset(std::move(features), std::move(labels), d_in, classes, seed);
}

struct IdxOptions {
    /// Keep only the first k examples of every class.
    std::optional<std::size_t> per_class;
    std::uint64_t split_seed = 0;
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'", 0);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
    if (b.size() < off + 4) throw ParseError(what + ": truncated header", b.size());
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

inline void put_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image tensor file from memory. Returns (count, rows*cols, pixels/255).
struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vector pixels;
};

inline IdxImages parse_idx_images(const std::vector<unsigned char>& b) {
    const std::uint32_t magic = detail::read_be32(b, 0, "idx images");
    if (magic != kIdxImageMagic) throw ParseError("idx images: bad magic", 0);
    IdxImages img;
    img.count = detail::read_be32(b, 4, "idx images");
    img.rows = detail::read_be32(b, 8, "idx images");
    img.cols = detail::read_be32(b, 12, "idx images");
    const std::size_t payload = img.count * img.rows * img.cols;
    if (b.size() < 16 + payload) throw ParseError("idx images: truncated payload", b.size());
    img.pixels.resize(payload);
    for (std::size_t i = 0; i < payload; ++i) img.pixels[i] = static_cast<double>(b[16 + i]) / 255.0;
    return img;
}

inline std::vector<std::uint32_t> parse_idx_labels(const std::vector<unsigned char>& b) {
    const std::uint32_t magic = detail::read_be32(b, 0, "idx labels");
    if (magic != kIdxLabelMagic) throw ParseError("idx labels: bad magic", 0);
    const std::size_t count = detail::read_be32(b, 4, "idx labels");
    if (b.size() < 8 + count) throw ParseError("idx labels: truncated payload", b.size());
    return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

inline Dataset dataset_from_idx(const std::vector<unsigned char>& image_bytes,
                                const std::vector<unsigned char>& label_bytes, const IdxOptions& opts = {}) {
    IdxImages img = parse_idx_images(image_bytes);
    std::vector<std::uint32_t> labels = parse_idx_labels(label_bytes);
    if (labels.size() != img.count) {
        throw ParseError("idx: label count " + std::to_string(labels.size()) + " does not match image count " +
                             std::to_string(img.count),
                         4);
    }
    const std::size_t d_in = img.rows * img.cols;
    if (d_in == 0 || img.count == 0) throw ParseError("idx: empty tensor", 4);
    std::uint32_t max_label = 0;
    for (auto l : labels) max_label = std::max(max_label, l);

    Vector features;
    std::vector<std::uint32_t> kept;
    std::map<std::uint32_t, std::size_t> taken;
    for (std::size_t i = 0; i < img.count; ++i) {
        if (opts.per_class && taken[labels[i]] >= *opts.per_class) continue;
        ++taken[labels[i]];
        kept.push_back(labels[i]);
        features.insert(features.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(i * d_in),
                        img.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * d_in));
    }
    return make_dataset(std::move(features), std::move(kept), d_in, std::size_t{max_label} + 1, opts.split_seed);
}

inline Dataset read_idx(const std::string& images_path, const std::string& labels_path, const IdxOptions& opts = {}) {
    return dataset_from_idx(detail::read_file(images_path), detail::read_file(labels_path), opts);
}

/// Writes features (quantized to round(255*f), clamped to [0,255]) and
/// labels as IDX files. rows*cols must equal d_in; rows = 0 means 1 x d_in.
inline void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
                      std::size_t rows = 0, std::size_t cols = 0) {
    if (rows == 0) {
        rows = 1;
        cols = ds.d_in;
    }
    if (rows * cols != ds.d_in) throw InputDomainError("write_idx: rows*cols must equal d_in");
    if (ds.num_classes > 256) throw InputDomainError("write_idx: labels must fit in one byte");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw Error("write_idx: cannot open output files");
    detail::put_be32(img, kIdxImageMagic);
    detail::put_be32(img, static_cast<std::uint32_t>(ds.n));
    detail::put_be32(img, static_cast<std::uint32_t>(rows));
    detail::put_be32(img, static_cast<std::uint32_t>(cols));
    for (double f : ds.features) {
        const double q = std::clamp(std::round(f * 255.0), 0.0, 255.0);
        img.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
    detail::put_be32(lab, kIdxLabelMagic);
    detail::put_be32(lab, static_cast<std::uint32_t>(ds.n));
    for (auto l : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(l)));
}

/// CSV with header `label,f0,f1,...`; features printed with 17 significant digits.
inline std::string to_csv(const Dataset& ds) {
    std::string out = "label";
    for (std::size_t j = 0; j < ds.d_in; ++j) out += ",f" + std::to_string(j);
    out += '\n';
    char buf[32];
    for (std::size_t i = 0; i < ds.n; ++i) {
        out += std::to_string(ds.labels[i]);
        for (double f : ds.row(i)) {
            std::snprintf(buf, sizeof buf, ",%.17g", f);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace softcal
