#include <bit>
#include <cstring>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "unite/error.hpp"
#include "unite/hashing.hpp"
#include "unite/io.hpp"
#include "unite/model.hpp"

namespace unite {

namespace {

using nlohmann::ordered_json;

constexpr std::string_view kMagic = "UNITECKP";

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and assume little-endian");

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_le(std::string_view bytes, std::size_t pos, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    return v;
}

constexpr const char* kKinds[] = {"param", "adam_m", "adam_v"};

ordered_json config_to_json(const ModelConfig& c) {
    ordered_json j;
    j["dim"] = c.dim;
    j["buckets"] = c.buckets;
    j["head_dims"] = c.head_dims;
    j["lr_encoder"] = c.lr_encoder;
    j["lr_head"] = c.lr_head;
    j["seed"] = c.seed;
    j["encoder_kind"] = c.encoder_kind;
    return j;
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig c;
    c.dim = j.at("dim").get<std::size_t>();
    c.buckets = j.at("buckets").get<std::uint32_t>();
    c.head_dims = j.at("head_dims").get<std::vector<std::size_t>>();
    c.lr_encoder = j.at("lr_encoder").get<double>();
    c.lr_head = j.at("lr_head").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.encoder_kind = j.at("encoder_kind").get<std::string>();
    return c;
}

}  // namespace

std::string serialize_checkpoint(const ModelState& state) {
    const std::vector<double>* arrays[] = {&state.flat(), &state.adam_m(), &state.adam_v()};

    ordered_json header;
    header["config"] = config_to_json(state.config());
    ordered_json meta;
    meta["stage"] = state.metadata.stage;
    meta["data_hash"] = state.metadata.data_hash;
    meta["seed"] = state.metadata.seed;
    meta["extra"] = state.metadata.extra;
    header["metadata"] = meta;
    header["step"] = state.step();

    std::string payload;
    payload.reserve(3 * state.flat().size() * sizeof(double));
    ordered_json sections = ordered_json::array();
    for (int a = 0; a < 3; ++a) {
        for (const auto& s : state.sections()) {
            sections.push_back({{"name", s.name},
                                {"kind", kKinds[a]},
                                {"rows", s.rows},
                                {"cols", s.cols},
                                {"offset", payload.size()}});
            const double* data = arrays[a]->data() + s.offset;
            payload.append(reinterpret_cast<const char*>(data), s.count() * sizeof(double));
        }
    }
    header["sections"] = sections;
    header["payload"] = {{"bytes", payload.size()}, {"fnv1a", hex64(fnv1a(payload))}};

    const std::string header_text = header.dump(1);
    std::string out(kMagic);
    put_u32(out, kCheckpointVersion);
    put_u64(out, header_text.size());
    out += header_text;
    out += payload;
    return out;
}

ModelState deserialize_checkpoint(std::string_view bytes, const std::string& origin) {
    constexpr std::size_t fixed = 8 + 4 + 8;
    if (bytes.size() < fixed || bytes.substr(0, 8) != kMagic) {
        throw DataError(fmt::format("{}: not a checkpoint file", origin));
    }
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
    if (version != kCheckpointVersion) {
        throw DataError(fmt::format("{}: checkpoint version {} is not supported (this build reads version {})",
                                    origin, version, kCheckpointVersion));
    }
    const std::uint64_t header_len = get_le(bytes, 12, 8);
    if (header_len > bytes.size() - fixed) throw DataError(fmt::format("{}: truncated header", origin));

    ordered_json header;
    try {
        header = ordered_json::parse(bytes.substr(fixed, header_len));
    } catch (const ordered_json::exception& e) {
        throw DataError(fmt::format("{}: corrupt header: {}", origin, e.what()));
    }
    const std::string_view payload = bytes.substr(fixed + header_len);

    try {
        ModelState state = ModelState::zeros(config_from_json(header.at("config")));
        const auto& meta = header.at("metadata");
        state.metadata.stage = meta.at("stage").get<std::string>();
        state.metadata.data_hash = meta.at("data_hash").get<std::string>();
        state.metadata.seed = meta.at("seed").get<std::uint64_t>();
        state.metadata.extra = meta.at("extra").get<std::map<std::string, std::string>>();
        state.set_step(header.at("step").get<std::uint64_t>());

        const auto& pinfo = header.at("payload");
        if (pinfo.at("bytes").get<std::size_t>() != payload.size()) {
            throw DataError(fmt::format("{}: payload is {} bytes, header says {}", origin, payload.size(),
                                        pinfo.at("bytes").get<std::size_t>()));
        }
        if (pinfo.at("fnv1a").get<std::string>() != hex64(fnv1a(payload))) {
            throw DataError(fmt::format("{}: payload checksum mismatch", origin));
        }

        std::vector<double>* arrays[] = {&state.flat(), &state.adam_m(), &state.adam_v()};
        const auto& listed = header.at("sections");
        const auto& layout = state.sections();
        if (listed.size() != 3 * layout.size()) {
            throw DataError(fmt::format("{}: expected {} sections, found {}", origin, 3 * layout.size(),
                                        listed.size()));
        }
        std::size_t k = 0;
        for (int a = 0; a < 3; ++a) {
            for (const auto& s : layout) {
                const auto& entry = listed.at(k++);
                if (entry.at("name").get<std::string>() != s.name || entry.at("kind").get<std::string>() != kKinds[a] ||
                    entry.at("rows").get<std::size_t>() != s.rows || entry.at("cols").get<std::size_t>() != s.cols) {
                    throw DataError(fmt::format("{}: section {} does not match the model layout", origin, k - 1));
                }
                const auto offset = entry.at("offset").get<std::size_t>();
                const std::size_t len = s.count() * sizeof(double);
                if (offset > payload.size() || len > payload.size() - offset) {
                    throw DataError(fmt::format("{}: section '{}' lies outside the payload", origin, s.name));
                }
                std::memcpy(arrays[a]->data() + s.offset, payload.data() + offset, len);
            }
        }
        return state;
    } catch (const ordered_json::exception& e) {
        throw DataError(fmt::format("{}: corrupt header: {}", origin, e.what()));
    } catch (const UsageError& e) {
        throw DataError(fmt::format("{}: invalid model config: {}", origin, e.what()));
    }
}

void save_checkpoint(const ModelState& state, const std::string& path) {
    write_file(path, serialize_checkpoint(state));
}

ModelState load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path), path);
}

}  // namespace unite
