#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qfl/errors.hpp"
#include "qfl/format.hpp"
#include "qfl/model.hpp"
#include "qfl/rng.hpp"

namespace qfl {

/// Byte-valued image as stored on disk.
struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> bytes; // row-major, channel-interleaved

    std::size_t expected_bytes() const {
        return static_cast<std::size_t>(width) * height * channels;
    }
};

/// Real-valued single-channel image with pixels in [0, 1].
struct RealImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;
};

/// Labeled feature vectors ready for amplitude encoding.
struct Dataset {
    std::vector<LabeledExample> examples;
    int num_classes = 0;
    int feature_dim = 0;
};

// ---------------------------------------------------------------------------
// IDX binary format (big-endian magic + dimension sizes, then raw bytes).

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803; // u8 tensor, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801; // u8 tensor, 1 dim

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TruncatedFileError("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                               const std::string& path) {
    if (offset + 4 > bytes.size())
        throw TruncatedFileError("'" + path + "' ends inside a header field");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
    const char buf[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(buf, 4);
}

} // namespace detail

/// Parse an images file + labels file pair. Counts must agree.
inline std::pair<std::vector<RawImage>, std::vector<int>> load_idx(
    const std::string& images_path, const std::string& labels_path) {
    const auto img_bytes = detail::read_file_bytes(images_path);
    if (detail::read_be32(img_bytes, 0, images_path) != kIdxImagesMagic)
        throw BadMagicError("'" + images_path + "' is not an IDX image file");
    const std::uint32_t count = detail::read_be32(img_bytes, 4, images_path);
    const std::uint32_t rows = detail::read_be32(img_bytes, 8, images_path);
    const std::uint32_t cols = detail::read_be32(img_bytes, 12, images_path);
    const std::size_t pixels = std::size_t{rows} * cols;
    if (16 + std::size_t{count} * pixels > img_bytes.size())
        throw TruncatedFileError("'" + images_path + "' is shorter than its header promises");

    const auto lbl_bytes = detail::read_file_bytes(labels_path);
    if (detail::read_be32(lbl_bytes, 0, labels_path) != kIdxLabelsMagic)
        throw BadMagicError("'" + labels_path + "' is not an IDX label file");
    const std::uint32_t lbl_count = detail::read_be32(lbl_bytes, 4, labels_path);
    if (lbl_count != count)
        throw CountMismatchError(std::to_string(count) + " images vs " +
                                 std::to_string(lbl_count) + " labels");
    if (8 + std::size_t{lbl_count} > lbl_bytes.size())
        throw TruncatedFileError("'" + labels_path + "' is shorter than its header promises");

    std::vector<RawImage> images(count);
    std::vector<int> labels(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        images[i].width = static_cast<int>(cols);
        images[i].height = static_cast<int>(rows);
        images[i].channels = 1;
        const auto begin = img_bytes.begin() + 16 + static_cast<std::ptrdiff_t>(i * pixels);
        images[i].bytes.assign(begin, begin + static_cast<std::ptrdiff_t>(pixels));
        labels[i] = lbl_bytes[8 + i];
    }
    return {std::move(images), std::move(labels)};
}

inline void write_idx_images(const std::string& path, const std::vector<RawImage>& images) {
    std::ofstream out(path, std::ios::binary);
    detail::write_be32(out, kIdxImagesMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(images.size()));
    const std::uint32_t rows = images.empty() ? 0 : static_cast<std::uint32_t>(images[0].height);
    const std::uint32_t cols = images.empty() ? 0 : static_cast<std::uint32_t>(images[0].width);
    detail::write_be32(out, rows);
    detail::write_be32(out, cols);
    for (const auto& img : images)
        out.write(reinterpret_cast<const char*>(img.bytes.data()),
                  static_cast<std::streamsize>(img.bytes.size()));
}

inline void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    detail::write_be32(out, kIdxLabelsMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) out.put(static_cast<char>(l));
}

// ---------------------------------------------------------------------------
// Image preprocessing.

/// Luma conversion 0.299 R + 0.587 G + 0.114 B, rescaled to [0, 1].
inline RealImage to_grayscale(const RawImage& raw) {
    RealImage out;
    out.width = raw.width;
    out.height = raw.height;
    out.pixels.resize(static_cast<std::size_t>(raw.width) * raw.height);
    if (raw.channels == 1) {
        for (std::size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] = raw.bytes[i] / 255.0;
        return out;
    }
    if (raw.channels != 3)
        throw MultiChannelUnsupportedError("expected 1 or 3 channels, got " +
                                           std::to_string(raw.channels));
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const double r = raw.bytes[3 * i + 0], g = raw.bytes[3 * i + 1],
                     b = raw.bytes[3 * i + 2];
        out.pixels[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
    }
    return out;
}

/// Bilinear resample with corner alignment (output corners equal input
/// corners exactly); values stay inside the input's range by convexity.
inline RealImage resize_bilinear(const RealImage& img, int out_width, int out_height) {
    RealImage out;
    out.width = out_width;
    out.height = out_height;
    out.pixels.resize(static_cast<std::size_t>(out_width) * out_height);
    const auto src = [&img](int x, int y) {
        return img.pixels[static_cast<std::size_t>(y) * img.width + x];
    };
    const double sx = out_width > 1 ? double(img.width - 1) / (out_width - 1) : 0.0;
    const double sy = out_height > 1 ? double(img.height - 1) / (out_height - 1) : 0.0;
    for (int oy = 0; oy < out_height; ++oy) {
        const double fy = oy * sy;
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_width; ++ox) {
            const double fx = ox * sx;
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double top = (1.0 - wx) * src(x0, y0) + wx * src(x1, y0);
            const double bot = (1.0 - wx) * src(x0, y1) + wx * src(x1, y1);
            out.pixels[static_cast<std::size_t>(oy) * out_width + ox] =
                (1.0 - wy) * top + wy * bot;
        }
    }
    return out;
}

/// Downscale a single-channel byte image to 16x16 reals in [0, 1].
inline RealImage resize_to_16(const RawImage& raw) {
    if (raw.channels != 1)
        throw MultiChannelUnsupportedError("resize_to_16 needs a single-channel image; "
                                           "convert with to_grayscale first");
    return resize_bilinear(to_grayscale(raw), 16, 16);
}

/// Images + labels -> flattened feature vectors. All-black images cannot
/// be amplitude encoded; they are dropped and counted via `dropped`.
inline Dataset dataset_from_images(const std::vector<RawImage>& images,
                                   const std::vector<int>& labels, int num_classes,
                                   std::size_t* dropped = nullptr) {
    if (images.size() != labels.size())
        throw CountMismatchError(std::to_string(images.size()) + " images vs " +
                                 std::to_string(labels.size()) + " labels");
    Dataset ds;
    ds.num_classes = num_classes;
    ds.feature_dim = 256;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const RealImage small = images[i].channels == 1
                                    ? resize_to_16(images[i])
                                    : resize_bilinear(to_grayscale(images[i]), 16, 16);
        double sq = 0.0;
        for (double v : small.pixels) sq += v * v;
        if (std::sqrt(sq) < 1e-12) {
            ++skipped;
            continue;
        }
        ds.examples.push_back({small.pixels, labels[i]});
    }
    if (dropped) *dropped = skipped;
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic corpus.

/// Gaussian blobs: class c is centered at separation * e_c (orthogonal
/// unit-vector means), spread 0.1 per coordinate, clamped to [0, 1].
/// Labels cycle round-robin; zero vectors are re-drawn so every example
/// survives amplitude encoding.
inline Dataset make_synthetic(int num_classes, int per_class, int feature_dim,
                              double separation, std::uint64_t seed) {
    if (feature_dim < num_classes)
        throw ConfigError("feature_dim must be >= num_classes for orthogonal blob means");
    constexpr double kSpread = 0.1;
    Dataset ds;
    ds.num_classes = num_classes;
    ds.feature_dim = feature_dim;
    Rng rng(seed);
    const int total = num_classes * per_class;
    ds.examples.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        const int label = i % num_classes;
        LabeledExample ex;
        ex.label = label;
        ex.features.resize(static_cast<std::size_t>(feature_dim));
        for (;;) {
            double sq = 0.0;
            for (int d = 0; d < feature_dim; ++d) {
                const double mean = d == label ? separation : 0.0;
                const double v = std::clamp(mean + kSpread * rng.normal(), 0.0, 1.0);
                ex.features[static_cast<std::size_t>(d)] = v;
                sq += v * v;
            }
            if (sq > 1e-24) break; // re-draw the (rare) all-zero clamp outcome
        }
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// CSV dataset format: header `label,f0,f1,...`, one example per row.

inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    out << "label";
    for (int d = 0; d < ds.feature_dim; ++d) out << ",f" << d;
    out << "\n";
    for (const auto& ex : ds.examples) {
        out << ex.label;
        for (double v : ex.features) out << ',' << format_exact(v);
        out << "\n";
    }
}

inline Dataset load_dataset_csv(const std::string& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw TruncatedFileError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("label", 0) != 0)
        throw BadMagicError("'" + path + "' does not start with a `label,f0,...` header");
    Dataset ds;
    ds.num_classes = num_classes;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        LabeledExample ex;
        if (!std::getline(row, cell, ',')) continue;
        ex.label = std::stoi(cell);
        while (std::getline(row, cell, ',')) ex.features.push_back(std::stod(cell));
        if (ds.feature_dim == 0) ds.feature_dim = static_cast<int>(ex.features.size());
        if (static_cast<int>(ex.features.size()) != ds.feature_dim)
            throw CountMismatchError("row with " + std::to_string(ex.features.size()) +
                                     " features, expected " + std::to_string(ds.feature_dim));
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

} // namespace qfl
