#include "gpvls/core/vision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/core.h>

#include "gpvls/errors.hpp"

namespace gpvls::core {

void ImageInput::validate(std::size_t patch_size) const {
    if (channels != 1 && channels != 3) {
        throw ValidationError(fmt::format("image '{}': channels must be 1 or 3, got {}", id, channels));
    }
    if (pixels.size() != height * width * channels) {
        throw ValidationError(fmt::format("image '{}': pixel buffer size mismatch", id));
    }
    if (patch_size == 0 || height < patch_size || width < patch_size) {
        throw DimensionError(fmt::format("image '{}': {}x{} smaller than patch size {}", id, height,
                                         width, patch_size));
    }
    if (height % patch_size != 0 || width % patch_size != 0) {
        throw DimensionError(fmt::format("image '{}': {}x{} not divisible by patch size {}", id,
                                         height, width, patch_size));
    }
    for (double v : pixels) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ValidationError(fmt::format("image '{}': pixel outside [0, 1]", id));
        }
    }
}

PatchEmbedder::PatchEmbedder(std::size_t patch_size, std::size_t channels, std::size_t d_v,
                             std::uint64_t seed)
    : patch_size_(patch_size), channels_(channels), d_v_(d_v), seed_(seed) {
    if (patch_size == 0 || d_v == 0 || (channels != 1 && channels != 3)) {
        throw ValidationError("patch embedder: invalid shape");
    }
    const std::size_t patch_dim = patch_size * patch_size * channels;
    std::mt19937_64 rng(seed);
    embedding_ = uniform_matrix(patch_dim, d_v, 1.0 / std::sqrt(static_cast<double>(patch_dim)), rng);
}

VisualFeatures PatchEmbedder::encode(const ImageInput& image) const {
    image.validate(patch_size_);
    if (image.channels != channels_) {
        throw DimensionError(fmt::format("image '{}': expected {} channels, got {}", image.id,
                                         channels_, image.channels));
    }
    const std::size_t grid_h = image.height / patch_size_;
    const std::size_t grid_w = image.width / patch_size_;
    Matrix out(grid_h * grid_w, d_v_);
    std::vector<double> flat(embedding_.rows());
    for (std::size_t py = 0; py < grid_h; ++py) {
        for (std::size_t px = 0; px < grid_w; ++px) {
            std::size_t k = 0;
            for (std::size_t y = 0; y < patch_size_; ++y) {
                for (std::size_t x = 0; x < patch_size_; ++x) {
                    for (std::size_t c = 0; c < channels_; ++c) {
                        flat[k++] = image.at(py * patch_size_ + y, px * patch_size_ + x, c);
                    }
                }
            }
            auto row = out.row(py * grid_w + px);
            for (std::size_t i = 0; i < flat.size(); ++i) {
                auto e = embedding_.row(i);
                for (std::size_t j = 0; j < d_v_; ++j) row[j] += flat[i] * e[j];
            }
        }
    }
    return {std::move(out)};
}

VisualFeatures encode_image(const ImageInput& image, std::size_t patch_size, std::size_t d_v,
                            std::uint64_t seed) {
    return PatchEmbedder(patch_size, image.channels, d_v, seed).encode(image);
}

VisualTokens project_visual(const ProjectionMatrix& w, const VisualFeatures& z) {
    if (w.weights.cols() != z.features.cols()) {
        throw DimensionError(fmt::format("project_visual: W is {}x{} but Z_v rows have dim {}",
                                         w.weights.rows(), w.weights.cols(), z.features.cols()));
    }
    return {matmul_bt(z.features, w.weights)};
}

namespace {

std::string next_token(std::istream& in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string discard;
            std::getline(in, discard);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

}  // namespace

ImageInput read_netpbm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open image {}", path.string()));
    const std::string magic = next_token(in);
    std::size_t channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw ValidationError(fmt::format("{}: unsupported image format '{}'", path.string(), magic));

    ImageInput img;
    img.id = path.filename().string();
    img.channels = channels;
    try {
        img.width = std::stoul(next_token(in));
        img.height = std::stoul(next_token(in));
        const unsigned long maxval = std::stoul(next_token(in));
        if (maxval == 0 || maxval > 65535) throw ValidationError("bad maxval");
        const std::size_t n = img.width * img.height * channels;
        const std::size_t bytes_per = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(n * bytes_per);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
            throw ValidationError("truncated pixel data");
        }
        img.pixels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
            img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
        }
    } catch (const std::invalid_argument&) {
        throw ValidationError(fmt::format("{}: malformed netpbm header", path.string()));
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return img;
}

void write_netpbm(const std::filesystem::path& path, const ImageInput& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ValidationError("write_netpbm: channels must be 1 or 3");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError(fmt::format("cannot write image {}", path.string()));
    out << (image.channels == 1 ? "P5" : "P6") << '\n'
        << image.width << ' ' << image.height << "\n255\n";
    for (double v : image.pixels) {
        const double c = std::clamp(v, 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
}

}  // namespace gpvls::core
