#include "ecalab/train.hpp"

#include "ecalab/binary_io.hpp"
#include "ecalab/hash.hpp"

#include <fstream>
#include <sstream>

namespace ecalab::model {

namespace {

constexpr std::uint32_t eck_version = 1;

std::string_view as_bytes(std::span<const float> v) {
    return {reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float)};
}

std::string hash_backbone(const ParamLayout& layout, std::span<const float> values) {
    std::string buf;
    for (const auto& t : layout.tensors()) {
        if (!t.backbone) continue;
        buf += t.name;
        buf.push_back('\0');
        buf += as_bytes(values.subspan(t.offset, t.rows * t.cols));
    }
    return sha256_hex(std::string_view(buf));
}

}  // namespace

ModelCheckpoint ModelCheckpoint::from(const Transformer<float>& m, nlohmann::json provenance) {
    ModelCheckpoint c;
    c.config = m.config();
    c.values.assign(m.params().begin(), m.params().end());
    c.provenance = std::move(provenance);
    return c;
}

std::string backbone_hash(const ModelCheckpoint& ckpt) {
    return hash_backbone(ParamLayout(ckpt.config), ckpt.values);
}

std::string backbone_hash(const Transformer<float>& m) { return hash_backbone(m.layout(), m.params()); }

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
    const ParamLayout layout(ckpt.config);
    if (ckpt.values.size() != layout.size())
        throw Error(ErrorKind::contract_error, "checkpoint values do not match the layout");
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& t : layout.tensors())
        dir.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"offset", t.offset},
                       {"backbone", t.backbone}});
    const auto payload = as_bytes(ckpt.values);
    const nlohmann::json header = {{"config", to_json(ckpt.config)},
                                   {"provenance", ckpt.provenance},
                                   {"tensors", dir},
                                   {"payload_sha256", sha256_hex(payload)},
                                   {"backbone_sha256", backbone_hash(ckpt)}};
    const std::string text = header.dump();
    std::ostringstream out;
    out.write("ECK1", 4);
    io::write_le<std::uint32_t>(out, eck_version);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out << text;
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    return out.str();
}

ModelCheckpoint deserialize_checkpoint(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    io::expect_magic(in, "ECK1");
    const auto version = io::read_le<std::uint32_t>(in, "version");
    if (version != eck_version)
        throw Error(ErrorKind::format_error, "unsupported checkpoint version " + std::to_string(version));
    const auto header_len = io::read_le<std::uint32_t>(in, "header length");
    if (header_len > bytes.size()) throw Error(ErrorKind::format_error, "checkpoint header length out of range");
    std::string text(header_len, '\0');
    io::read_bytes(in, text.data(), header_len, "header");

    nlohmann::json header;
    ModelCheckpoint ckpt;
    try {
        header = nlohmann::json::parse(text);
        ckpt.config = model_config_from_json(header.at("config"));
        ckpt.provenance = header.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::format_error, std::string("bad checkpoint header: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorKind::format_error, std::string("bad checkpoint config: ") + e.what());
    }

    const ParamLayout layout(ckpt.config);
    const auto& dir = header.at("tensors");
    if (!dir.is_array() || dir.size() != layout.tensors().size())
        throw Error(ErrorKind::format_error, "tensor directory does not match the model layout");
    for (std::size_t i = 0; i < dir.size(); ++i) {
        const auto& t = layout.tensors()[i];
        if (dir[i].value("name", std::string()) != t.name || dir[i].value("rows", std::size_t{0}) != t.rows ||
            dir[i].value("cols", std::size_t{0}) != t.cols)
            throw Error(ErrorKind::format_error, "tensor directory entry " + std::to_string(i) + " mismatches " + t.name);
    }

    const std::size_t payload_size = layout.size() * sizeof(float);
    const std::size_t offset = 12 + header_len;
    if (bytes.size() != offset + payload_size)
        throw Error(ErrorKind::format_error, "checkpoint payload has " + std::to_string(bytes.size() - offset) +
                                                 " bytes, expected " + std::to_string(payload_size));
    const auto payload = bytes.substr(offset);
    if (sha256_hex(payload) != header.value("payload_sha256", std::string()))
        throw Error(ErrorKind::format_error, "checkpoint payload hash mismatch");
    ckpt.values.resize(layout.size());
    std::memcpy(ckpt.values.data(), payload.data(), payload_size);
    return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    io::atomic_write(path, serialize_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::missing_prerequisite, "cannot open checkpoint " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

}  // namespace ecalab::model
