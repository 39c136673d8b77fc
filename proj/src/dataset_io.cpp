#include "ecalab/datagen.hpp"

#include "ecalab/binary_io.hpp"
#include "ecalab/hash.hpp"

#include <fstream>
#include <sstream>

namespace ecalab::datagen {

namespace {

constexpr std::uint32_t format_version = 1;

using nlohmann::json;

class ByteWriter {
public:
    template <typename T>
    void le(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void bytes(const std::vector<std::uint8_t>& b) { buf_.append(reinterpret_cast<const char*>(b.data()), b.size()); }
    void bits(const std::vector<std::uint8_t>& b) { bytes(io::pack_msb(b.data(), b.size())); }
    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}
    template <typename T>
    T le() {
        T v{};
        need(sizeof(T));
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> out(reinterpret_cast<const std::uint8_t*>(data_.data() + pos_),
                                      reinterpret_cast<const std::uint8_t*>(data_.data() + pos_ + n));
        pos_ += n;
        return out;
    }
    std::vector<std::uint8_t> bits(std::size_t n) {
        const auto packed = bytes((n + 7) / 8);
        if (n % 8 != 0 && (packed.back() & (0xFFU >> (n % 8))) != 0)
            throw Error(ErrorKind::format_error, "nonzero padding bits in record");
        std::vector<std::uint8_t> out(n);
        io::unpack_msb(packed.data(), n, out.data());
        return out;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw Error(ErrorKind::format_error, "truncated dataset record");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::size_t packed(std::size_t n) { return (n + 7) / 8; }

// -------------------------------------------------------------- records

struct Encoded {
    json header;
    std::string records;
    std::size_t record_size = 0;
    std::size_t count = 0;
};

Encoded encode(const PretrainDataset& ds) {
    const auto& c = ds.config;
    Encoded e;
    e.count = ds.samples.size();
    e.record_size = 4 + 4 + 8 + packed(c.sim_width) + packed(c.t_len * c.x_len) + packed(ds.target_rows() * c.x_len);
    e.header = {{"kind", "pretrain"},
                {"rule", ds.rule.code()},
                {"horizon", ds.horizon},
                {"seed", ds.seed},
                {"config",
                 {{"sim_width", c.sim_width},
                  {"sim_steps", c.sim_steps},
                  {"t_len", c.t_len},
                  {"x_len", c.x_len},
                  {"density", c.density},
                  {"target_mode", c.target_mode == TargetMode::final_state ? "final_state" : "all_states"}}}};
    ByteWriter w;
    for (const auto& s : ds.samples) {
        if (s.window.rows != c.t_len || s.window.cols != c.x_len || s.anchor.width() != c.sim_width ||
            s.target.rows != ds.target_rows() || s.target.cols != c.x_len)
            throw Error(ErrorKind::invalid_input, "pretrain sample shape does not match its dataset");
        w.le<std::uint32_t>(static_cast<std::uint32_t>(s.t0));
        w.le<std::uint32_t>(static_cast<std::uint32_t>(s.x0));
        w.le<std::uint64_t>(s.sample_seed);
        w.bits(s.anchor.to_bits());
        w.bits(s.window.bits);
        w.bits(s.target.bits);
    }
    e.records = std::move(w.str());
    return e;
}

Encoded encode(const ReasoningDataset& ds) {
    Encoded e;
    e.count = ds.sequences.size();
    const std::size_t cells = ds.grid * ds.grid;
    e.record_size = ds.seq_len * cells + ds.seq_len * ds.n_shapes * 6;
    e.header = {{"kind", to_string(ds.kind)}, {"seq_len", ds.seq_len}, {"seed", ds.seed},
                {"grid", ds.grid},            {"n_colors", ds.n_colors}, {"n_shapes", ds.n_shapes},
                {"config", ds.config}};
    ByteWriter w;
    for (const auto& s : ds.sequences) {
        if (s.frames.size() != ds.seq_len) throw Error(ErrorKind::invalid_input, "sequence length mismatch");
        for (const auto& f : s.frames) {
            if (f.colors.size() != cells) throw Error(ErrorKind::invalid_input, "frame size mismatch");
            w.bytes(f.colors);
        }
        if (s.latent.size() != (ds.n_shapes ? ds.seq_len : 0))
            throw Error(ErrorKind::invalid_input, "latent state length mismatch");
        for (const auto& frame : s.latent) {
            if (frame.size() != ds.n_shapes) throw Error(ErrorKind::invalid_input, "latent shape count mismatch");
            for (const auto& sh : frame)
                w.bytes({sh.shape, sh.rotation, sh.y, sh.x, sh.color, static_cast<std::uint8_t>(sh.direction)});
        }
    }
    e.records = std::move(w.str());
    return e;
}

Encoded encode(const ChessDataset& ds) {
    Encoded e;
    e.count = ds.sequences.size();
    e.record_size = 8 + 4 + 4 * chess_context;
    e.header = {{"kind", "chess"}, {"split", ds.split}, {"context", chess_context}, {"vocab", ds.vocab.tokens()}};
    ByteWriter w;
    for (const auto& s : ds.sequences) {
        if (s.tokens.size() != chess_context) throw Error(ErrorKind::invalid_input, "chess sequence length mismatch");
        w.le<std::uint64_t>(s.game_id);
        w.le<std::uint32_t>(static_cast<std::uint32_t>(s.length));
        for (auto t : s.tokens) w.le<std::int32_t>(t);
    }
    e.records = std::move(w.str());
    return e;
}

Encoded encode_any(const Dataset& ds) {
    return std::visit([](const auto& d) { return encode(d); }, ds);
}

PretrainDataset decode_pretrain(const json& h, ByteReader& r, std::size_t count) {
    PretrainDataset ds;
    ds.rule = eca::RuleId::from_int(h.at("rule").get<long long>());
    ds.horizon = h.at("horizon").get<std::size_t>();
    ds.seed = h.at("seed").get<std::uint64_t>();
    const auto& c = h.at("config");
    ds.config.sim_width = c.at("sim_width").get<std::size_t>();
    ds.config.sim_steps = c.at("sim_steps").get<std::size_t>();
    ds.config.t_len = c.at("t_len").get<std::size_t>();
    ds.config.x_len = c.at("x_len").get<std::size_t>();
    ds.config.density = c.at("density").get<double>();
    ds.config.target_mode =
        c.at("target_mode").get<std::string>() == "final_state" ? TargetMode::final_state : TargetMode::all_states;
    const std::size_t rows = ds.target_rows();
    for (std::size_t i = 0; i < count; ++i) {
        PretrainSample s;
        s.t0 = r.le<std::uint32_t>();
        s.x0 = r.le<std::uint32_t>();
        s.sample_seed = r.le<std::uint64_t>();
        s.anchor = eca::State::from_bits(r.bits(ds.config.sim_width));
        s.window = eca::BitMatrix(ds.config.t_len, ds.config.x_len);
        s.window.bits = r.bits(ds.config.t_len * ds.config.x_len);
        s.target = eca::BitMatrix(rows, ds.config.x_len);
        s.target.bits = r.bits(rows * ds.config.x_len);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

ReasoningDataset decode_reasoning(const json& h, ByteReader& r, std::size_t count) {
    ReasoningDataset ds;
    ds.kind = parse_task_kind(h.at("kind").get<std::string>());
    ds.seq_len = h.at("seq_len").get<std::size_t>();
    ds.seed = h.at("seed").get<std::uint64_t>();
    ds.grid = h.at("grid").get<std::size_t>();
    ds.n_colors = h.at("n_colors").get<std::size_t>();
    ds.n_shapes = h.at("n_shapes").get<std::size_t>();
    ds.config = h.at("config");
    for (std::size_t i = 0; i < count; ++i) {
        ReasoningSample s;
        for (std::size_t t = 0; t < ds.seq_len; ++t) {
            Frame f{ds.grid, r.bytes(ds.grid * ds.grid)};
            for (auto c : f.colors)
                if (c > ds.n_colors) throw Error(ErrorKind::format_error, "colour outside palette");
            s.frames.push_back(std::move(f));
        }
        if (ds.n_shapes > 0) {
            for (std::size_t t = 0; t < ds.seq_len; ++t) {
                std::vector<ShapeState> frame;
                for (std::size_t k = 0; k < ds.n_shapes; ++k) {
                    const auto b = r.bytes(6);
                    if (b[0] >= base_shapes().size() || b[1] > 3 || b[5] > 3)
                        throw Error(ErrorKind::format_error, "invalid latent shape state");
                    frame.push_back({b[0], b[1], b[2], b[3], b[4], static_cast<Direction>(b[5])});
                }
                s.latent.push_back(std::move(frame));
            }
        }
        ds.sequences.push_back(std::move(s));
    }
    return ds;
}

ChessDataset decode_chess(const json& h, ByteReader& r, std::size_t count) {
    if (h.at("context").get<std::size_t>() != chess_context)
        throw Error(ErrorKind::format_error, "unsupported chess context length");
    ChessDataset ds;
    ds.split = h.at("split").get<std::string>();
    ds.vocab = Vocabulary::from_tokens(h.at("vocab").get<std::vector<std::string>>());
    const auto vsize = static_cast<std::int32_t>(ds.vocab.size());
    for (std::size_t i = 0; i < count; ++i) {
        ChessSequence s;
        s.game_id = r.le<std::uint64_t>();
        s.length = r.le<std::uint32_t>();
        if (s.length > chess_context) throw Error(ErrorKind::format_error, "chess sequence length out of range");
        for (std::size_t t = 0; t < chess_context; ++t) {
            const auto id = r.le<std::int32_t>();
            if (id < 0 || id >= vsize) throw Error(ErrorKind::format_error, "token id outside vocabulary");
            if ((t >= s.length) != (id == pad_id)) throw Error(ErrorKind::format_error, "padding not confined to the tail");
            s.tokens.push_back(id);
        }
        ds.sequences.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

TaskKind kind_of(const Dataset& ds) {
    if (std::holds_alternative<PretrainDataset>(ds)) return TaskKind::pretrain;
    if (const auto* r = std::get_if<ReasoningDataset>(&ds)) return r->kind;
    return TaskKind::chess;
}

std::size_t record_count(const Dataset& ds) {
    return std::visit(
        [](const auto& d) -> std::size_t {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PretrainDataset>) return d.samples.size();
            else return d.sequences.size();
        },
        ds);
}

std::string dataset_hash(const Dataset& ds) { return sha256_hex(encode_any(ds).records); }

std::string serialize_dataset(const Dataset& ds) {
    auto e = encode_any(ds);
    e.header["format_version"] = format_version;
    e.header["record_size"] = e.record_size;
    e.header["content_hash"] = sha256_hex(e.records);
    const std::string header = e.header.dump();

    ByteWriter w;
    w.str().append("EDS1");
    w.le<std::uint32_t>(format_version);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.count));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
    w.str().append(header);
    w.str().append(e.records);
    return std::move(w.str());
}

Dataset deserialize_dataset(std::string_view bytes) {
    ByteReader r(bytes);
    const auto magic = r.bytes(4);
    if (std::string(magic.begin(), magic.end()) != "EDS1") throw Error(ErrorKind::format_error, "bad magic, expected EDS1");
    const auto version = r.le<std::uint32_t>();
    if (version != format_version)
        throw Error(ErrorKind::format_error, "unsupported dataset version " + std::to_string(version));
    const auto count = r.le<std::uint32_t>();
    const auto header_len = r.le<std::uint32_t>();
    const auto header_bytes = r.bytes(header_len);
    json h;
    try {
        h = json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::format_error, std::string("bad dataset header: ") + ex.what());
    }
    try {
        const auto record_size = h.at("record_size").get<std::size_t>();
        if (r.remaining() != record_size * count)
            throw Error(ErrorKind::format_error, "record section has " + std::to_string(r.remaining()) +
                                                     " bytes, expected " + std::to_string(record_size * count));
        const std::string_view records = bytes.substr(bytes.size() - r.remaining());
        if (sha256_hex(records) != h.at("content_hash").get<std::string>())
            throw Error(ErrorKind::format_error, "dataset content hash mismatch");

        const auto kind = parse_task_kind(h.at("kind").get<std::string>());
        Dataset ds;
        if (kind == TaskKind::pretrain) ds = decode_pretrain(h, r, count);
        else if (kind == TaskKind::chess) ds = decode_chess(h, r, count);
        else ds = decode_reasoning(h, r, count);
        if (encode_any(ds).record_size != record_size)
            throw Error(ErrorKind::format_error, "record size disagrees with header layout");
        return ds;
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::format_error, std::string("bad dataset header: ") + ex.what());
    } catch (const Error& ex) {
        if (ex.kind() == ErrorKind::format_error) throw;
        throw Error(ErrorKind::format_error, ex.what());
    }
}

void save_dataset(const Dataset& ds, const std::string& path) { io::atomic_write(path, serialize_dataset(ds)); }

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::missing_prerequisite, "cannot open dataset " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_dataset(buf.str());
}

}  // namespace ecalab::datagen
