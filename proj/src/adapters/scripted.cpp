#include "gpvls/adapters/scripted.hpp"

#include <fmt/core.h>

namespace gpvls::adapters {

OracleAdapter::OracleAdapter(std::string name, const std::vector<data::VQARecord>& records) : name_(std::move(name)) {
    for (const auto& r : records) answers_.emplace(std::pair{r.question(), r.image_ref}, r.answer());
}

Reply OracleAdapter::query(const Query& q) {
    auto it = answers_.find({q.prompt, q.image_ref});
    if (it == answers_.end()) throw AdapterError(FailureKind::BadResponse, "oracle has no answer for this query");
    return {it->second, 0, std::nullopt};
}

}  // namespace gpvls::adapters
