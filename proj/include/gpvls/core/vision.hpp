#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpvls/core/tensor.hpp"

namespace gpvls::core {

/// Image tensor [height x width x channels] with values in [0, 1].
struct ImageInput {
    std::string id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> pixels;  // row-major, channel-interleaved

    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    /// Throws ValidationError unless shape and values satisfy the invariants.
    void validate(std::size_t patch_size) const;
};

/// Z_v: one row per image patch.
struct VisualFeatures {
    Matrix features;  // [n_v x d_v]
    friend bool operator==(const VisualFeatures&, const VisualFeatures&) = default;
};

/// W: maps encoder features into the text embedding space.
struct ProjectionMatrix {
    Matrix weights;  // [d_t x d_v]
    friend bool operator==(const ProjectionMatrix&, const ProjectionMatrix&) = default;
};

/// H_v: projected visual tokens.
struct VisualTokens {
    Matrix tokens;  // [n_v x d_t]
    friend bool operator==(const VisualTokens&, const VisualTokens&) = default;
};

class VisualEncoder {
public:
    virtual ~VisualEncoder() = default;
    virtual VisualFeatures encode(const ImageInput& image) const = 0;
    virtual std::size_t feature_dim() const = 0;
};

/// Frozen linear patch embedder: flatten each patch and multiply by a fixed seeded matrix.
class PatchEmbedder final : public VisualEncoder {
public:
    PatchEmbedder(std::size_t patch_size, std::size_t channels, std::size_t d_v, std::uint64_t seed);

    VisualFeatures encode(const ImageInput& image) const override;
    std::size_t feature_dim() const override { return d_v_; }

    std::size_t patch_size() const noexcept { return patch_size_; }
    std::size_t channels() const noexcept { return channels_; }
    std::uint64_t seed() const noexcept { return seed_; }
    /// [patch_size * patch_size * channels x d_v]
    const Matrix& embedding() const noexcept { return embedding_; }

private:
    std::size_t patch_size_;
    std::size_t channels_;
    std::size_t d_v_;
    std::uint64_t seed_;
    Matrix embedding_;
};

inline constexpr std::uint64_t kDefaultEncoderSeed = 0x5eed'e1c0'de00'0001ULL;

VisualFeatures encode_image(const ImageInput& image, std::size_t patch_size, std::size_t d_v,
                            std::uint64_t seed = kDefaultEncoderSeed);

/// H_v[i] = W * Z_v[i] for every patch row.
VisualTokens project_visual(const ProjectionMatrix& w, const VisualFeatures& z);

/// Binary netpbm (P5 grey / P6 RGB) reader and writer.
ImageInput read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const ImageInput& image);

}  // namespace gpvls::core
