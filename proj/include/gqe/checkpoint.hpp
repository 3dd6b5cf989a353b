#pragma once

#include <bit>
#include <cstring>
#include <string>

#include "gqe/errors.hpp"
#include "gqe/io.hpp"
#include "gqe/model.hpp"

#include "json.hpp"

namespace gqe {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need byte swaps");

inline constexpr int kCheckpointVersion = 1;

// One JSON manifest line (shape, tables, tensor directory with byte offsets),
// then every tensor as raw 64-bit floats in directory order. `extra` lets
// callers persist run metadata (e.g. optimizer constants) next to the shape.
inline std::string checkpoint_bytes(const ModelParams& p,
                                    const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json m;
    m["version"] = kCheckpointVersion;
    m["variant"] = variant_name(p.variant);
    m["psi"] = psi_name(p.psi);
    m["d"] = p.d;
    m["exact"] = p.exact;
    m["types"] = p.type_names;
    m["relations"] = p.relation_names;
    m["tensors"] = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (const std::string& name : p.store.names()) {
        const Mat& t = p.store.get(name);
        m["tensors"].push_back({{"name", name},
                                {"rows", t.rows},
                                {"cols", t.cols},
                                {"offset", offset}});
        offset += t.a.size() * sizeof(double);
    }
    for (const auto& [k, v] : extra.items()) {
        if (m.contains(k)) throw ArgumentError("checkpoint extra field '" + k + "' collides");
        m[k] = v;
    }

    std::string out = m.dump();
    out.push_back('\n');
    const std::size_t head = out.size();
    out.resize(head + offset);
    std::size_t at = head;
    for (const std::string& name : p.store.names()) {
        const Mat& t = p.store.get(name);
        std::memcpy(out.data() + at, t.a.data(), t.a.size() * sizeof(double));
        at += t.a.size() * sizeof(double);
    }
    return out;
}

inline bool save_checkpoint(const ModelParams& p, const std::string& path,
                            const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
    return atomic_write_file(path, checkpoint_bytes(p, extra));
}

struct LoadedCheckpoint {
    ModelParams params;
    nlohmann::ordered_json extra;  // manifest fields beyond the fixed schema
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    const std::string bytes = read_text_file(path);
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos)
        throw DataError("checkpoint " + path + ": missing manifest line");

    nlohmann::ordered_json m;
    try {
        m = nlohmann::ordered_json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("checkpoint " + path + ": bad manifest: " + e.what());
    }
    static const char* kKnown[] = {"version", "variant", "psi",       "d",
                                   "exact",   "types",   "relations", "tensors"};
    for (const char* k : kKnown)
        if (!m.contains(k)) throw DataError("checkpoint " + path + ": manifest lacks '" + std::string(k) + "'");
    const int version = m["version"].get<int>();
    if (version != kCheckpointVersion)
        throw DataError("checkpoint " + path + ": version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kCheckpointVersion) +
                        "); refusing to load");

    LoadedCheckpoint out;
    ModelParams& p = out.params;
    try {
        p.variant = variant_from(m["variant"].get<std::string>());
        p.psi = psi_from(m["psi"].get<std::string>());
    } catch (const ArgumentError& e) {
        throw DataError("checkpoint " + path + ": " + e.what());
    }
    p.d = m["d"].get<int>();
    if (p.d < 1) throw DataError("checkpoint " + path + ": nonpositive dimension");
    p.exact = m["exact"].get<bool>();
    p.type_names = m["types"].get<std::vector<std::string>>();
    p.relation_names = m["relations"].get<std::vector<std::string>>();

    const std::size_t blob = nl + 1;
    std::size_t expect = 0;
    for (const auto& t : m["tensors"]) {
        const std::string name = t.at("name").get<std::string>();
        const int rows = t.at("rows").get<int>();
        const int cols = t.at("cols").get<int>();
        const std::size_t offset = t.at("offset").get<std::size_t>();
        if (rows < 1 || cols < 1)
            throw DataError("checkpoint " + path + ": tensor " + name + " has bad shape");
        if (offset != expect)
            throw DataError("checkpoint " + path + ": tensor " + name + " offset " +
                            std::to_string(offset) + " breaks the directory layout");
        Mat* slot;
        try {
            slot = &p.store.add(name, rows, cols);
        } catch (const ArgumentError& e) {
            throw DataError("checkpoint " + path + ": " + e.what());
        }
        const std::size_t sz = slot->a.size() * sizeof(double);
        if (blob + offset + sz > bytes.size())
            throw DataError("checkpoint " + path + ": blob truncated at tensor " + name);
        std::memcpy(slot->a.data(), bytes.data() + blob + offset, sz);
        expect += sz;
    }
    if (blob + expect != bytes.size())
        throw DataError("checkpoint " + path + ": blob has " +
                        std::to_string(bytes.size() - blob) + " bytes, directory expects " +
                        std::to_string(expect));

    for (const auto& [k, v] : m.items()) {
        bool known = false;
        for (const char* kk : kKnown) known = known || k == kk;
        if (!known) out.extra[k] = v;
    }
    if (out.extra.is_null()) out.extra = nlohmann::ordered_json::object();
    return out;
}

}  // namespace gqe
