#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpvls/data/builders.hpp"
#include "gpvls/data/record.hpp"

namespace gpvls::data {

/// Video-level split lists, e.g. the CholecTriplet challenge split.
/// File format: {"train": ["VID01", ...], "test": ["VID92", ...]}; other keys are ignored
/// so a validation list can sit alongside without being used.
class SplitAssignment {
public:
    static SplitAssignment load(const std::filesystem::path& path);
    void assign(const std::string& video_id, Split split);
    std::optional<Split> lookup(const std::string& video_id) const;
    std::size_t size() const noexcept { return videos_.size(); }

private:
    std::map<std::string, Split> videos_;
};

enum class AnnotationKind { SarRarp50, CholecT50, SurgToolLoc };

struct AnnotationReadResult {
    std::vector<FrameAnnotation> annotations;
    std::vector<Rejection> rejections;
};

/// Reads a frame-level annotation CSV (see docs/sources.md for the columns of each kind).
/// Without a split assignment every row must carry a split column; a video that shows up in
/// both splits keeps its first split and the conflicting rows are rejected.
AnnotationReadResult read_annotations_csv(const std::filesystem::path& path, AnnotationKind kind,
                                          const SplitAssignment* splits = nullptr);

/// "needle driver;cadiere forceps" or the upstream "[needle driver, cadiere forceps, nan, nan]".
std::vector<std::string> parse_tool_field(const std::string& field);
/// "grasper:retract:gallbladder;hook:dissect:gallbladder". Throws ValidationError.
std::vector<TripletLabel> parse_triplet_field(const std::string& field);

}  // namespace gpvls::data
