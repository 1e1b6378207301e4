#include "gpvls/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include "json.hpp"

#include "gpvls/errors.hpp"
#include "gpvls/util/hash.hpp"

namespace gpvls::core {

namespace {

using ordered_json = nlohmann::ordered_json;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    return v;
}

struct Entry {
    std::string name;
    const Matrix* tensor;
};

std::vector<Entry> payload_entries(const Checkpoint& c) {
    std::vector<Entry> out;
    for (const auto& [name, t] : named_tensors(c.params)) out.push_back({name, t});
    for (const auto& [name, t] : c.adam_m) out.push_back({"adam.m." + name, &t});
    for (const auto& [name, t] : c.adam_v) out.push_back({"adam.v." + name, &t});
    return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    validate_params(ckpt.params);
    std::string payload;
    ordered_json directory = ordered_json::array();
    for (const Entry& e : payload_entries(ckpt)) {
        directory.push_back({{"name", e.name}, {"rows", e.tensor->rows()}, {"cols", e.tensor->cols()}});
        for (double v : e.tensor->values()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
    }
    const ModelConfig& c = ckpt.params.config;
    ordered_json header = {
        {"format", kCheckpointFormat},
        {"hyperparameters",
         {{"patch_size", c.patch_size},
          {"channels", c.channels},
          {"d_v", c.d_v},
          {"d_t", c.d_t},
          {"vocab_size", c.vocab_size},
          {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},
          {"encoder_seed", c.encoder_seed}}},
        {"rng_seed", ckpt.params.rng_seed},
        {"step", ckpt.step},
        {"optimizer", ckpt.optimizer},
        {"tensors", directory},
        {"payload_sha256", util::sha256_hex(payload)},
    };
    const std::string header_text = header.dump();
    std::string out;
    out.append(kCheckpointFormat);
    out.push_back('\n');
    put_u64(out, header_text.size());
    out += header_text;
    out += payload;
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    const std::string tag = std::string(kCheckpointFormat) + "\n";
    if (bytes.substr(0, tag.size()) != tag) {
        throw CheckpointError(fmt::format("not a {} checkpoint", kCheckpointFormat));
    }
    std::size_t pos = tag.size();
    if (bytes.size() < pos + 8) throw CheckpointError("checkpoint truncated in header length");
    const std::uint64_t header_len = get_u64(bytes, pos);
    pos += 8;
    if (bytes.size() - pos < header_len) throw CheckpointError("checkpoint truncated in header");
    ordered_json header;
    try {
        header = ordered_json::parse(bytes.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(fmt::format("checkpoint header is not valid JSON: {}", e.what()));
    }
    pos += header_len;
    const std::string_view payload = bytes.substr(pos);

    Checkpoint ckpt;
    try {
        if (header.at("format").get<std::string>() != kCheckpointFormat) {
            throw CheckpointError("unsupported checkpoint format tag");
        }
        if (util::sha256_hex(payload) != header.at("payload_sha256").get<std::string>()) {
            throw CheckpointError("checkpoint payload checksum mismatch (truncated or corrupted)");
        }
        const auto& hp = header.at("hyperparameters");
        ModelConfig& c = ckpt.params.config;
        c.patch_size = hp.at("patch_size").get<std::size_t>();
        c.channels = hp.at("channels").get<std::size_t>();
        c.d_v = hp.at("d_v").get<std::size_t>();
        c.d_t = hp.at("d_t").get<std::size_t>();
        c.vocab_size = hp.at("vocab_size").get<std::size_t>();
        c.n_heads = hp.at("n_heads").get<std::size_t>();
        c.d_ff = hp.at("d_ff").get<std::size_t>();
        c.encoder_seed = hp.at("encoder_seed").get<std::uint64_t>();
        ckpt.params.rng_seed = header.at("rng_seed").get<std::uint64_t>();
        ckpt.step = header.at("step").get<std::uint64_t>();
        ckpt.optimizer = header.at("optimizer").get<std::string>();

        std::size_t off = 0;
        for (const auto& entry : header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            Matrix m(entry.at("rows").get<std::size_t>(), entry.at("cols").get<std::size_t>());
            if (payload.size() - off < m.size() * 8) throw CheckpointError("checkpoint payload truncated");
            for (double& v : m.values()) {
                v = std::bit_cast<double>(get_u64(payload, off));
                off += 8;
            }
            if (name == "token_embedding") {
                ckpt.params.token_embedding = std::move(m);
            } else if (name == "projection") {
                ckpt.params.projection.weights = std::move(m);
            } else if (name.starts_with("decoder.")) {
                ckpt.params.decoder[name.substr(8)] = std::move(m);
            } else if (name.starts_with("adam.m.")) {
                ckpt.adam_m[name.substr(7)] = std::move(m);
            } else if (name.starts_with("adam.v.")) {
                ckpt.adam_v[name.substr(7)] = std::move(m);
            } else {
                throw CheckpointError(fmt::format("unknown tensor '{}' in checkpoint", name));
            }
        }
        if (off != payload.size()) throw CheckpointError("checkpoint has trailing bytes");
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(fmt::format("checkpoint header incomplete: {}", e.what()));
    }
    try {
        validate_params(ckpt.params);
    } catch (const Error& e) {
        throw CheckpointError(fmt::format("checkpoint tensors invalid: {}", e.what()));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("cannot write checkpoint {}", path.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(fmt::format("cannot open checkpoint {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace gpvls::core
