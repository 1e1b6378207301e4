#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpvls/adapters/adapter.hpp"
#include "gpvls/data/record.hpp"

namespace gpvls::adapters {

/// Answers every record with its own assistant turn: the upper bound of any scorer.
class OracleAdapter final : public ModelAdapter {
public:
    OracleAdapter(std::string name, const std::vector<data::VQARecord>& records);
    std::string name() const override { return name_; }
    bool accepts_images() const override { return true; }
    /// Unknown (prompt, image) pairs raise a BadResponse error.
    Reply query(const Query& q) override;
    Health probe() override { return {true, std::nullopt, "ok"}; }

private:
    std::string name_;
    std::map<std::pair<std::string, std::optional<std::string>>, std::string> answers_;
};

/// Returns the same text for every query.
class ConstantAdapter final : public ModelAdapter {
public:
    ConstantAdapter(std::string name, std::string text, bool accepts_images = true)
        : name_(std::move(name)), text_(std::move(text)), accepts_images_(accepts_images) {}
    std::string name() const override { return name_; }
    bool accepts_images() const override { return accepts_images_; }
    Reply query(const Query&) override { return {text_, 0, std::nullopt}; }

private:
    std::string name_;
    std::string text_;
    bool accepts_images_;
};

}  // namespace gpvls::adapters
