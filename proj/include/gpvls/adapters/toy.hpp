#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "gpvls/adapters/adapter.hpp"
#include "gpvls/core/model.hpp"
#include "gpvls/core/vision.hpp"

namespace gpvls::adapters {

/// Greedy decoding from a toy checkpoint. The checkpoint loads on first use, so a corrupt
/// file shows up as an unhealthy probe rather than a constructor exception.
class ToyAdapter final : public ModelAdapter {
public:
    ToyAdapter(std::string name, std::filesystem::path checkpoint, std::filesystem::path image_root);
    std::string name() const override { return name_; }
    bool accepts_images() const override { return true; }
    Reply query(const Query& q) override;
    Health probe() override;

private:
    const core::ModelParams& params();

    std::string name_;
    std::filesystem::path checkpoint_;
    std::filesystem::path image_root_;
    std::mutex load_mutex_;
    std::shared_ptr<const core::ModelParams> params_;
};

/// The layout used both for training and for inference: [question, visual] then the answer.
core::InstructionSequence toy_prompt(const std::string& question, std::size_t visual_count);

/// Z_v for an image file under the model's encoder settings.
core::VisualFeatures toy_features(const core::ModelConfig& config, const std::filesystem::path& image);

}  // namespace gpvls::adapters
