#include "ecalab/pipeline.hpp"

#include "ecalab/binary_io.hpp"
#include "ecalab/hash.hpp"

#include <spdlog/spdlog.h>
#include <tbb/parallel_for.h>

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

namespace ecalab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

json to_json(const complexity::ComplexityConfig& c) {
    return {{"width", c.width},
            {"steps", c.steps},
            {"density", c.density},
            {"seed", c.seed},
            {"lyapunov_width", c.lyapunov_width},
            {"lyapunov_trials", c.lyapunov_trials},
            {"lyapunov_steps", c.lyapunov_steps},
            {"krylov_width", c.krylov_width},
            {"krylov_horizon", c.krylov_horizon}};
}

complexity::ComplexityConfig complexity_from_json(const json& j) {
    complexity::ComplexityConfig c;
    c.width = j.value("width", c.width);
    c.steps = j.value("steps", c.steps);
    c.density = j.value("density", c.density);
    c.seed = j.value("seed", c.seed);
    c.lyapunov_width = j.value("lyapunov_width", c.lyapunov_width);
    c.lyapunov_trials = j.value("lyapunov_trials", c.lyapunov_trials);
    c.lyapunov_steps = j.value("lyapunov_steps", c.lyapunov_steps);
    c.krylov_width = j.value("krylov_width", c.krylov_width);
    c.krylov_horizon = j.value("krylov_horizon", c.krylov_horizon);
    return c;
}

json to_json(const datagen::PretrainConfig& c) {
    return {{"sim_width", c.sim_width},
            {"sim_steps", c.sim_steps},
            {"t_len", c.t_len},
            {"x_len", c.x_len},
            {"density", c.density},
            {"target_mode", c.target_mode == datagen::TargetMode::final_state ? "final" : "all"}};
}

datagen::PretrainConfig pretrain_from_json(const json& j) {
    datagen::PretrainConfig c;
    c.sim_width = j.value("sim_width", c.sim_width);
    c.sim_steps = j.value("sim_steps", c.sim_steps);
    c.t_len = j.value("t_len", c.t_len);
    c.x_len = j.value("x_len", c.x_len);
    c.density = j.value("density", c.density);
    const auto mode = j.value("target_mode", std::string("final"));
    if (mode != "final" && mode != "all") throw Error(ErrorKind::config_error, "target_mode must be final or all");
    c.target_mode = mode == "final" ? datagen::TargetMode::final_state : datagen::TargetMode::all_states;
    return c;
}

json to_json(const TaskSettings& t) {
    return {{"enabled", t.enabled},
            {"samples", t.samples},
            {"seq_len", t.seq_len},
            {"seed", t.seed},
            {"train", model::to_json(t.train)}};
}

TaskSettings task_from_json(const json& j, TaskSettings t) {
    t.enabled = j.value("enabled", t.enabled);
    t.samples = j.value("samples", t.samples);
    t.seq_len = j.value("seq_len", t.seq_len);
    t.seed = j.value("seed", t.seed);
    if (j.contains("train")) t.train = model::train_config_from_json(j.at("train"), t.train);
    return t;
}

}  // namespace

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.train.lr = 1e-3;
    c.train.max_epochs = 30;  // copy rules converge in under 10; keeps a 24-backbone sweep near 2 h per core
    c.train.stop_at_accuracy = 0.99;
    c.easy.train = model::finetune_preset(datagen::TaskKind::reasoning_easy);
    c.easy.train.max_epochs = 100;
    c.easy.train.lr = 1e-3;
    c.hard.train = model::finetune_preset(datagen::TaskKind::reasoning_hard);
    c.hard.train.max_epochs = 100;
    c.hard.train.lr = 1e-3;
    c.hard.seed = 11;
    c.chess.train = model::finetune_preset(datagen::TaskKind::chess);
    c.chess.train.max_epochs = 30;
    c.chess.train.lr = 1e-3;
    return c;
}

std::vector<eca::RuleId> ExperimentConfig::rule_ids() const {
    std::vector<eca::RuleId> out;
    if (rule_set == "all-256") {
        for (int r = 0; r < 256; ++r) out.push_back(eca::RuleId(static_cast<std::uint8_t>(r)));
    } else if (rule_set == "canonical-88") {
        for (const auto& c : eca::symmetry_classes()) out.push_back(c.canonical);
    } else {
        for (int r : rules) out.push_back(eca::RuleId::from_int(r));
    }
    return out;
}

std::string ExperimentConfig::hash() const {
    auto j = to_json(*this);
    j.erase("output_dir");
    return sha256_hex(std::string_view(j.dump()));
}

void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::config_error, what); };
    if (c.rule_set != "explicit" && c.rule_set != "all-256" && c.rule_set != "canonical-88")
        fail("rule_set must be explicit, all-256 or canonical-88");
    if (c.rule_set == "explicit" && c.rules.empty()) fail("rules must not be empty");
    for (int r : c.rules)
        if (r < 0 || r > 255) fail("rule " + std::to_string(r) + " out of range");
    if (c.horizons.empty()) fail("horizons must not be empty");
    for (auto h : c.horizons)
        if (h != 1 && h != 5) fail("horizons must be 1 or 5");
    if (c.seeds.empty()) fail("seeds must not be empty");
    if (c.pretrain_samples < 2 || c.probe_samples < 1) fail("sample counts too small");
    if (c.pretrain.t_len > c.model.context_len) fail("pretrain.t_len exceeds model.context_len");
    if (c.pretrain.t_len < c.attention_k + 1) fail("pretrain.t_len must exceed attention_k");
    if (c.pretrain.x_len > c.pretrain.sim_width) fail("pretrain.x_len exceeds sim_width");
    if (!(c.efficiency_threshold > 0 && c.efficiency_threshold <= 1)) fail("efficiency_threshold must lie in (0, 1]");
    for (const auto* t : {&c.easy, &c.hard}) {
        if (t->enabled && (t->seq_len < 2 || t->seq_len - 1 > c.model.context_len))
            fail("reasoning seq_len must lie in [2, context_len + 1]");
        if (t->enabled && t->samples < 2) fail("reasoning tasks need at least two samples");
        model::validate(t->train);
    }
    if (c.chess.enabled && c.chess.pgn.empty()) fail("chess.pgn must list at least one file");
    if (c.chess.enabled && c.model.context_len < datagen::chess_context)
        fail("chess needs model.context_len >= " + std::to_string(datagen::chess_context));
    model::validate(c.train);
    model::ModelConfig m = c.model;
    m.head = model::HeadKind::binary;
    m.input_width = c.pretrain.x_len;
    m.output_width = c.pretrain.x_len;
    model::validate(m);
}

json to_json(const ExperimentConfig& c) {
    return {{"version", config_version},
            {"rules", c.rules},
            {"rule_set", c.rule_set},
            {"horizons", c.horizons},
            {"seeds", c.seeds},
            {"output_dir", c.output_dir},
            {"complexity", to_json(c.complexity)},
            {"pretrain", to_json(c.pretrain)},
            {"pretrain_samples", c.pretrain_samples},
            {"probe_samples", c.probe_samples},
            {"probe_seed", c.probe_seed},
            {"model", model::to_json(c.model)},
            {"train", model::to_json(c.train)},
            {"easy", to_json(c.easy)},
            {"hard", to_json(c.hard)},
            {"chess",
             {{"enabled", c.chess.enabled},
              {"pgn", c.chess.pgn},
              {"min_rating", c.chess.min_rating},
              {"split_seed", c.chess.split_seed},
              {"train", model::to_json(c.chess.train)}}},
            {"efficiency_threshold", c.efficiency_threshold},
            {"cka_mode", analysis::to_string(c.cka_mode)},
            {"attention_k", c.attention_k}};
}

// Every key in `given` must exist in `reference`; nested objects are checked
// recursively.
void check_keys(const json& given, const json& reference, const std::string& where) {
    for (const auto& [k, v] : given.items()) {
        const std::string name = where.empty() ? k : where + "." + k;
        if (!reference.contains(k)) throw Error(ErrorKind::config_error, "unknown config key '" + name + "'");
        if (v.is_object() && reference.at(k).is_object()) check_keys(v, reference.at(k), name);
    }
}

ExperimentConfig config_from_json(const json& j) {
    try {
        if (!j.is_object()) throw Error(ErrorKind::config_error, "config must be a JSON object");
        if (j.value("version", config_version) != config_version)
            throw Error(ErrorKind::config_error, "unsupported config version");
        check_keys(j, to_json(default_config()), "");

        ExperimentConfig c = default_config();
        c.rule_set = j.value("rule_set", c.rule_set);
        if (j.contains("rules")) {
            if (j.at("rules").is_string()) {
                c.rule_set = j.at("rules").get<std::string>();
                c.rules.clear();
            } else {
                c.rules = j.at("rules").get<std::vector<int>>();
            }
        }
        c.horizons = j.value("horizons", c.horizons);
        c.seeds = j.value("seeds", c.seeds);
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("complexity")) c.complexity = complexity_from_json(j.at("complexity"));
        if (j.contains("pretrain")) c.pretrain = pretrain_from_json(j.at("pretrain"));
        c.pretrain_samples = j.value("pretrain_samples", c.pretrain_samples);
        c.probe_samples = j.value("probe_samples", c.probe_samples);
        c.probe_seed = j.value("probe_seed", c.probe_seed);
        if (j.contains("model")) {
            json m = model::to_json(c.model);
            m.update(j.at("model"));
            m["head"] = "binary";
            m["input_width"] = c.pretrain.x_len;
            m["output_width"] = c.pretrain.x_len;
            c.model = model::model_config_from_json(m);
        } else {
            c.model.input_width = c.model.output_width = c.pretrain.x_len;
        }
        if (j.contains("train")) c.train = model::train_config_from_json(j.at("train"), c.train);
        if (j.contains("easy")) c.easy = task_from_json(j.at("easy"), c.easy);
        if (j.contains("hard")) c.hard = task_from_json(j.at("hard"), c.hard);
        if (j.contains("chess")) {
            const auto& cj = j.at("chess");
            c.chess.enabled = cj.value("enabled", c.chess.enabled);
            c.chess.pgn = cj.value("pgn", c.chess.pgn);
            c.chess.min_rating = cj.value("min_rating", c.chess.min_rating);
            c.chess.split_seed = cj.value("split_seed", c.chess.split_seed);
            if (cj.contains("train")) c.chess.train = model::train_config_from_json(cj.at("train"), c.chess.train);
        }
        c.efficiency_threshold = j.value("efficiency_threshold", c.efficiency_threshold);
        c.cka_mode = analysis::parse_cka_mode(j.value("cka_mode", std::string("activation")));
        c.attention_k = j.value("attention_k", c.attention_k);
        validate(c);
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config_error, std::string("config: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config_error) throw;
        throw Error(ErrorKind::config_error, e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config_error, "cannot open config " + path);
    try {
        const json j = json::parse(in, nullptr, true, true);
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config_error, path + ": " + e.what());
    }
}

std::string config_template() {
    static const std::map<std::string, std::string> notes = {
        {"version", "config format version"},
        {"rules", "rule codes, or one of \"all-256\" / \"canonical-88\""},
        {"rule_set", "explicit | all-256 | canonical-88"},
        {"horizons", "prediction horizons to pretrain on (1 and/or 5)"},
        {"seeds", "replicate seeds; results are averaged per rule"},
        {"output_dir", "run directory; empty uses --out or $ECALAB_OUTPUT_ROOT"},
        {"complexity", "grid size and sampling for the five complexity measures"},
        {"pretrain", "simulation and window sizes; target_mode final | all"},
        {"pretrain_samples", "windows per pretraining dataset"},
        {"probe_samples", "held-out windows for attention and CKA"},
        {"probe_seed", "seed of the held-out probe windows"},
        {"model", "transformer backbone; head widths follow pretrain.x_len"},
        {"train", "pretraining optimizer and stopping rules"},
        {"easy", "easy reasoning task (colour cycling squares) and its finetuning"},
        {"hard", "hard reasoning task (moving, rotating shapes) and its finetuning"},
        {"chess", "PGN move prediction; disabled unless pgn files are listed"},
        {"efficiency_threshold", "validation accuracy defining epochs-to-threshold"},
        {"cka_mode", "activation | weight"},
        {"attention_k", "number of most recent states in the attention summary"},
    };
    const json j = to_json(default_config());
    std::ostringstream out;
    out << "// ecalab experiment configuration. Comments are allowed.\n{\n";
    std::size_t i = 0;
    for (const auto& [key, value] : j.items()) {
        if (auto it = notes.find(key); it != notes.end()) out << "  // " << it->second << "\n";
        std::string dumped = value.dump(2);
        std::string indented;
        for (char ch : dumped) {
            indented.push_back(ch);
            if (ch == '\n') indented += "  ";
        }
        out << "  \"" << key << "\": " << indented << (++i < j.size() ? "," : "") << "\n";
    }
    out << "}\n";
    return out.str();
}

// ---------------------------------------------------------------- manifest

json to_json(const RunManifest& m) {
    json stages = json::object();
    for (const auto& [key, s] : m.stages)
        stages[key] = {{"status", s.status},
                       {"inputs_hash", s.inputs_hash},
                       {"outputs", s.outputs},
                       {"wall_seconds", s.wall_seconds}};
    return {{"tool_version", m.tool_version}, {"config_hash", m.config_hash}, {"threads", m.threads}, {"stages", stages}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.tool_version = j.value("tool_version", m.tool_version);
    m.config_hash = j.value("config_hash", std::string());
    m.threads = j.value("threads", std::size_t{1});
    for (const auto& [key, s] : j.at("stages").items()) {
        StageRecord r;
        r.status = s.at("status").get<std::string>();
        r.inputs_hash = s.at("inputs_hash").get<std::string>();
        r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
        r.wall_seconds = s.value("wall_seconds", 0.0);
        m.stages[key] = std::move(r);
    }
    return m;
}

int exit_code(const Error& e) noexcept {
    switch (e.kind()) {
    case ErrorKind::config_error: return 2;
    case ErrorKind::missing_prerequisite:
    case ErrorKind::format_error: return 3;
    case ErrorKind::numeric_failure: return 4;
    default: return 1;
    }
}

// ---------------------------------------------------------------------- run

namespace {

std::string tag(int rule, std::size_t horizon, std::uint64_t seed) {
    return "r" + std::to_string(rule) + "_h" + std::to_string(horizon) + "_s" + std::to_string(seed);
}

std::string producer(const std::string& rel) {
    if (rel.rfind("complexity/", 0) == 0) return "complexity";
    if (rel.rfind("datasets/", 0) == 0) return "gen";
    if (rel.rfind("checkpoints/pretrain", 0) == 0 || rel.rfind("histories/train", 0) == 0) return "train";
    if (rel.rfind("checkpoints/", 0) == 0 || rel.rfind("histories/", 0) == 0) return "finetune";
    if (rel.rfind("analysis/", 0) == 0) return "analyze";
    return "report";
}

void write_text(const fs::path& p, const std::string& text) { io::atomic_write(p.string(), text); }

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::missing_prerequisite, "cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Job {
    int rule;
    std::size_t horizon;
    std::uint64_t seed;
};

template <typename Fn>
void for_each_job(const std::vector<Job>& jobs, Fn&& fn) {
    std::exception_ptr first;
    std::mutex mu;
    tbb::parallel_for(std::size_t{0}, jobs.size(), [&](std::size_t i) {
        try {
            fn(jobs[i]);
        } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
        }
    });
    if (first) std::rethrow_exception(first);
}

}  // namespace

Run::Run(ExperimentConfig config, fs::path dir, std::size_t threads) : config_(std::move(config)), dir_(std::move(dir)) {
    validate(config_);
    fs::create_directories(dir_);
    const auto mpath = dir_ / "manifest.json";
    if (fs::exists(mpath)) {
        try {
            manifest_ = manifest_from_json(json::parse(read_text(mpath)));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::format_error, "corrupt run manifest: " + std::string(e.what()));
        }
    }
    manifest_.tool_version = tool_version;
    manifest_.config_hash = config_.hash();
    manifest_.threads = threads;
    std::lock_guard lock(mu_);
    save_manifest();
}

RunManifest Run::manifest() const {
    std::lock_guard lock(mu_);
    return manifest_;
}

void Run::save_manifest() { write_text(dir_ / "manifest.json", to_json(manifest_).dump(2) + "\n"); }

std::string Run::recorded_hash(const std::string& rel) const {
    std::lock_guard lock(mu_);
    for (const auto& [key, s] : manifest_.stages)
        if (auto it = s.outputs.find(rel); it != s.outputs.end() && s.status == "done") return it->second;
    return {};
}

std::string Run::require(const std::string& rel) const {
    const auto p = path(rel);
    const std::string recorded = recorded_hash(rel);
    if (!fs::exists(p) || recorded.empty())
        throw Error(ErrorKind::missing_prerequisite,
                    rel + " is missing; run `ecalab " + producer(rel) + "` for this config first");
    const std::string actual = sha256_file(p.string());
    if (actual != recorded)
        throw Error(ErrorKind::format_error, rel + " does not match its recorded hash; rerun `ecalab " + producer(rel) +
                                                 "` to regenerate it");
    return actual;
}

template <typename Fn>
bool Run::stage(const std::string& key, const json& inputs, const std::vector<std::string>& outputs, Fn&& fn) {
    const std::string ih = sha256_hex(std::string_view(inputs.dump()));
    {
        std::unique_lock lock(mu_);
        auto it = manifest_.stages.find(key);
        if (it != manifest_.stages.end() && it->second.status == "done" && it->second.inputs_hash == ih &&
            it->second.outputs.size() == outputs.size()) {
            auto rec = it->second;
            lock.unlock();
            bool fresh = true;
            for (const auto& o : outputs) {
                auto h = rec.outputs.find(o);
                if (h == rec.outputs.end() || !fs::exists(path(o)) || sha256_file(path(o).string()) != h->second) {
                    fresh = false;
                    break;
                }
            }
            if (fresh) {
                spdlog::debug("{}: cached", key);
                return false;
            }
            lock.lock();
        }
        StageRecord rec;
        rec.status = "running";
        rec.inputs_hash = ih;
        for (const auto& o : outputs) rec.outputs[o] = "";
        manifest_.stages[key] = rec;
        save_manifest();
    }
    spdlog::info("{}: running", key);
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::map<std::string, std::string> hashes;
    for (const auto& o : outputs) {
        if (!fs::exists(path(o))) throw Error(ErrorKind::contract_error, key + " did not produce " + o);
        hashes[o] = sha256_file(path(o).string());
    }
    std::lock_guard lock(mu_);
    auto& rec = manifest_.stages[key];
    rec.status = "done";
    rec.outputs = std::move(hashes);
    rec.wall_seconds = secs;
    save_manifest();
    spdlog::info("{}: done in {:.1f}s", key, secs);
    return true;
}

std::string Run::pretrain_dataset(int rule, std::size_t horizon, std::uint64_t seed) {
    return "datasets/pretrain_" + tag(rule, horizon, seed) + ".eds";
}
std::string Run::probe_dataset(int rule, std::size_t horizon) {
    return "datasets/probe_r" + std::to_string(rule) + "_h" + std::to_string(horizon) + ".eds";
}
std::string Run::pretrain_checkpoint(int rule, std::size_t horizon, std::uint64_t seed) {
    return "checkpoints/pretrain_" + tag(rule, horizon, seed) + ".eck";
}
std::string Run::finetune_checkpoint(const std::string& task, int rule, std::size_t horizon, std::uint64_t seed) {
    return "checkpoints/" + task + "_" + tag(rule, horizon, seed) + ".eck";
}
std::string Run::history_file(const std::string& stage, int rule, std::size_t horizon, std::uint64_t seed) {
    return "histories/" + stage + "_" + tag(rule, horizon, seed) + ".json";
}

namespace {

std::vector<Job> jobs_of(const ExperimentConfig& c) {
    std::vector<Job> jobs;
    for (const auto& r : c.rule_ids())
        for (auto h : c.horizons)
            for (auto s : c.seeds) jobs.push_back({r.code(), h, s});
    return jobs;
}

std::vector<std::string> enabled_tasks(const ExperimentConfig& c) {
    std::vector<std::string> t;
    if (c.easy.enabled) t.push_back("easy");
    if (c.hard.enabled) t.push_back("hard");
    if (c.chess.enabled) t.push_back("chess");
    return t;
}

}  // namespace

StageStats Run::complexity() {
    StageStats st;
    const auto rules = config_.rule_ids();
    json inputs = {{"complexity", to_json(config_.complexity)}, {"rules", json::array()}};
    for (auto r : rules) inputs["rules"].push_back(r.code());
    const bool ran = stage("complexity", inputs, {"complexity/reports.json", "complexity/complexity.csv"}, [&] {
        const auto reports = complexity::sweep(rules, config_.complexity);
        json arr = json::array();
        std::string csv = "rule,wolfram_class,lempel_ziv,compression,lyapunov,krylov\n";
        for (const auto& r : reports) {
            arr.push_back({{"rule", r.rule.code()},
                           {"wolfram_class", complexity::to_string(r.wolfram_class)},
                           {"lempel_ziv", r.lempel_ziv},
                           {"compression", r.compression},
                           {"lyapunov", r.lyapunov},
                           {"krylov", r.krylov}});
            csv += std::to_string(r.rule.code()) + "," + complexity::to_string(r.wolfram_class) + "," +
                   std::to_string(r.lempel_ziv) + "," + std::to_string(r.compression) + "," +
                   std::to_string(r.lyapunov) + "," + std::to_string(r.krylov) + "\n";
        }
        write_text(path("complexity/reports.json"), arr.dump(2) + "\n");
        write_text(path("complexity/complexity.csv"), csv);
    });
    (ran ? st.executed : st.cached) += 1;
    return st;
}

StageStats Run::generate() {
    StageStats st;
    std::mutex smu;
    auto count = [&](bool ran) {
        std::lock_guard lock(smu);
        (ran ? st.executed : st.cached) += 1;
    };
    const json pcfg = to_json(config_.pretrain);
    for_each_job(jobs_of(config_), [&](const Job& j) {
        const auto out = pretrain_dataset(j.rule, j.horizon, j.seed);
        json in = {{"pretrain", pcfg}, {"samples", config_.pretrain_samples}, {"rule", j.rule},
                   {"horizon", j.horizon}, {"seed", j.seed}};
        count(stage("gen/" + out, in, {out}, [&] {
            datagen::save_dataset(datagen::gen_pretrain(eca::RuleId::from_int(j.rule), config_.pretrain_samples,
                                                        j.horizon, j.seed, config_.pretrain),
                                  path(out).string());
        }));
    });
    std::vector<Job> probes;
    for (const auto& r : config_.rule_ids())
        for (auto h : config_.horizons) probes.push_back({r.code(), h, config_.probe_seed});
    for_each_job(probes, [&](const Job& j) {
        const auto out = probe_dataset(j.rule, j.horizon);
        json in = {{"pretrain", pcfg}, {"samples", config_.probe_samples}, {"rule", j.rule},
                   {"horizon", j.horizon}, {"seed", j.seed}};
        count(stage("gen/" + out, in, {out}, [&] {
            datagen::save_dataset(datagen::gen_pretrain(eca::RuleId::from_int(j.rule), config_.probe_samples,
                                                        j.horizon, j.seed, config_.pretrain),
                                  path(out).string());
        }));
    });
    if (config_.easy.enabled) {
        const auto& t = config_.easy;
        count(stage("gen/easy", {{"samples", t.samples}, {"seq_len", t.seq_len}, {"seed", t.seed}},
                    {"datasets/easy.eds"}, [&] {
                        datagen::save_dataset(datagen::gen_reasoning_easy(t.samples, t.seq_len, t.seed),
                                              path("datasets/easy.eds").string());
                    }));
    }
    if (config_.hard.enabled) {
        const auto& t = config_.hard;
        count(stage("gen/hard", {{"samples", t.samples}, {"seq_len", t.seq_len}, {"seed", t.seed}},
                    {"datasets/hard.eds"}, [&] {
                        datagen::save_dataset(datagen::gen_reasoning_hard(t.samples, t.seq_len, t.seed),
                                              path("datasets/hard.eds").string());
                    }));
    }
    if (config_.chess.enabled) {
        json in = {{"min_rating", config_.chess.min_rating}, {"split_seed", config_.chess.split_seed},
                   {"pgn", json::array()}};
        for (const auto& p : config_.chess.pgn) {
            if (!fs::exists(p)) throw Error(ErrorKind::missing_prerequisite, "PGN file " + p + " not found");
            in["pgn"].push_back(sha256_file(p));
        }
        const std::vector<std::string> outs = {"datasets/chess_train.eds", "datasets/chess_val.eds",
                                               "datasets/chess_test.eds"};
        count(stage("gen/chess", in, outs, [&] {
            datagen::SplitSpec split;
            split.seed = config_.chess.split_seed;
            const auto corpus = datagen::ingest_chess(config_.chess.pgn, config_.chess.min_rating, split,
                                                      [](const std::string& w) { spdlog::warn("{}", w); });
            datagen::save_dataset(corpus.train, path(outs[0]).string());
            datagen::save_dataset(corpus.val, path(outs[1]).string());
            datagen::save_dataset(corpus.test, path(outs[2]).string());
        }));
    }
    return st;
}

StageStats Run::train() {
    StageStats st;
    std::mutex smu;
    for_each_job(jobs_of(config_), [&](const Job& j) {
        const auto data = pretrain_dataset(j.rule, j.horizon, j.seed);
        const auto ckpt = pretrain_checkpoint(j.rule, j.horizon, j.seed);
        const auto hist = history_file("train", j.rule, j.horizon, j.seed);
        const std::string data_hash = require(data);
        model::ModelConfig mc = config_.model;
        mc.output_width = config_.pretrain.x_len *
                          (config_.pretrain.target_mode == datagen::TargetMode::final_state ? 1 : j.horizon);
        mc.seed = config_.model.seed + j.seed;
        model::TrainConfig tc = config_.train;
        tc.seed = config_.train.seed + j.seed;
        json in = {{"dataset", data_hash}, {"model", model::to_json(mc)}, {"train", model::to_json(tc)}};
        const bool ran = stage("train/" + tag(j.rule, j.horizon, j.seed), in, {ckpt, hist}, [&] {
            const auto ds = std::get<datagen::PretrainDataset>(datagen::load_dataset(path(data).string()));
            auto result = model::train_pretrain(ds, mc, tc);
            result.checkpoint.provenance["dataset_sha256"] = data_hash;
            model::save_checkpoint(result.checkpoint, path(ckpt).string());
            write_text(path(hist), model::to_json(result.history).dump(2) + "\n");
        });
        std::lock_guard lock(smu);
        (ran ? st.executed : st.cached) += 1;
    });
    return st;
}

StageStats Run::finetune() {
    StageStats st;
    std::mutex smu;
    const auto tasks = enabled_tasks(config_);
    for (const auto& task : tasks) {
        std::vector<std::string> inputs_rel;
        const TaskSettings* rs = task == "easy" ? &config_.easy : task == "hard" ? &config_.hard : nullptr;
        model::TrainConfig base = rs ? rs->train : config_.chess.train;
        if (task == "chess") inputs_rel = {"datasets/chess_train.eds", "datasets/chess_val.eds"};
        else inputs_rel = {"datasets/" + task + ".eds"};
        json data_hashes = json::array();
        for (const auto& r : inputs_rel) data_hashes.push_back(require(r));

        model::TaskData train_data, val_data;
        if (task == "chess") {
            train_data = model::task_from_dataset(datagen::load_dataset(path(inputs_rel[0]).string()));
            val_data = model::task_from_dataset(datagen::load_dataset(path(inputs_rel[1]).string()));
        } else {
            std::tie(train_data, val_data) = model::split_validation(
                model::task_from_dataset(datagen::load_dataset(path(inputs_rel[0]).string())), base.val_fraction);
        }

        for_each_job(jobs_of(config_), [&](const Job& j) {
            const auto src = pretrain_checkpoint(j.rule, j.horizon, j.seed);
            const auto out = finetune_checkpoint(task, j.rule, j.horizon, j.seed);
            const auto hist = history_file(task, j.rule, j.horizon, j.seed);
            const std::string src_hash = require(src);
            model::TrainConfig tc = base;
            tc.seed = base.seed + j.seed;
            const auto head = model::head_for(train_data, 1 + j.seed);
            json in = {{"backbone", src_hash}, {"data", data_hashes}, {"train", model::to_json(tc)},
                       {"head_seed", head.seed}};
            const bool ran = stage("finetune/" + task + "/" + tag(j.rule, j.horizon, j.seed), in, {out, hist}, [&] {
                const auto ckpt = model::load_checkpoint(path(src).string());
                auto result = model::finetune_frozen(ckpt, train_data, val_data, head, tc);
                result.checkpoint.provenance["task"] = task;
                model::save_checkpoint(result.checkpoint, path(out).string());
                write_text(path(hist), model::to_json(result.history).dump(2) + "\n");
            });
            std::lock_guard lock(smu);
            (ran ? st.executed : st.cached) += 1;
        });
    }
    return st;
}

namespace {

model::TrainHistory history_from_json(const json& j) {
    model::TrainHistory h;
    h.stop_reason = j.value("stop_reason", std::string());
    h.best_epoch = j.value("best_epoch", std::size_t{0});
    for (const auto& e : j.at("epochs"))
        h.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                            e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>(),
                            e.at("lr").get<double>(), e.at("grad_norm").get<double>()});
    return h;
}

std::string markdown_value(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

}  // namespace

StageStats Run::analyze() {
    StageStats st;
    const auto jobs = jobs_of(config_);
    const auto tasks = enabled_tasks(config_);
    json in = {{"complexity", require("complexity/reports.json")},
               {"threshold", config_.efficiency_threshold},
               {"cka_mode", analysis::to_string(config_.cka_mode)},
               {"k", config_.attention_k},
               {"artifacts", json::object()}};
    std::vector<std::string> needed;
    for (const auto& j : jobs) {
        needed.push_back(pretrain_checkpoint(j.rule, j.horizon, j.seed));
        for (const auto& t : tasks) needed.push_back(history_file(t, j.rule, j.horizon, j.seed));
        if (config_.chess.enabled) needed.push_back(finetune_checkpoint("chess", j.rule, j.horizon, j.seed));
    }
    for (const auto& r : config_.rule_ids())
        for (auto h : config_.horizons) needed.push_back(probe_dataset(r.code(), h));
    if (config_.chess.enabled) needed.push_back("datasets/chess_test.eds");
    for (const auto& n : needed) in["artifacts"][n] = require(n);

    const bool both = std::count(config_.horizons.begin(), config_.horizons.end(), 1) &&
                      std::count(config_.horizons.begin(), config_.horizons.end(), 5);
    std::vector<std::string> outputs = {"analysis/results.csv", "analysis/results_by_seed.csv",
                                        "analysis/correlations.json", "analysis/attention.csv",
                                        "analysis/class_summary.csv", "analysis/cka.csv",
                                        "analysis/mds.csv"};
    if (both) outputs.push_back("analysis/horizons.csv");
    const std::string ih = sha256_hex(std::string_view(in.dump()));

    const bool ran = stage("analyze", in, outputs, [&] {
        std::map<int, complexity::ComplexityReport> reports;
        for (const auto& r : json::parse(read_text(path("complexity/reports.json")))) {
            complexity::ComplexityReport c;
            c.rule = eca::RuleId::from_int(r.at("rule").get<int>());
            c.wolfram_class = complexity::parse_wolfram_class(r.at("wolfram_class").get<std::string>());
            c.lempel_ziv = r.at("lempel_ziv");
            c.compression = r.at("compression");
            c.lyapunov = r.at("lyapunov");
            c.krylov = r.at("krylov");
            reports[c.rule.code()] = c;
        }
        std::optional<model::TaskData> chess_test;
        if (config_.chess.enabled)
            chess_test = model::task_from_dataset(datagen::load_dataset(path("datasets/chess_test.eds").string()));

        std::vector<analysis::ExperimentResult> per_seed(jobs.size());
        std::vector<analysis::AttentionSummary> attn(jobs.size());
        for_each_job(jobs, [&](const Job& j) {
            const auto idx = static_cast<std::size_t>(&j - jobs.data());
            auto it = reports.find(j.rule);
            if (it == reports.end())
                throw Error(ErrorKind::missing_prerequisite,
                            "no complexity report for rule " + std::to_string(j.rule) + "; run `ecalab complexity`");
            analysis::ExperimentResult r;
            r.rule = eca::RuleId::from_int(j.rule);
            r.horizon = j.horizon;
            r.complexity = it->second;
            for (const auto& t : tasks) {
                if (t == "chess") continue;
                const auto h = history_from_json(json::parse(read_text(path(history_file(t, j.rule, j.horizon, j.seed)))));
                const double e = model::efficiency(h, config_.efficiency_threshold);
                (t == "easy" ? r.efficiency_easy : r.efficiency_hard) = e;
            }
            if (chess_test) {
                const auto ck = model::load_checkpoint(path(finetune_checkpoint("chess", j.rule, j.horizon, j.seed)).string());
                r.chess_accuracy = model::evaluate(ck.model(), *chess_test).accuracy();
            }
            const auto ckpt = model::load_checkpoint(path(pretrain_checkpoint(j.rule, j.horizon, j.seed)).string());
            const auto probe = std::get<datagen::PretrainDataset>(
                datagen::load_dataset(path(probe_dataset(j.rule, j.horizon)).string()));
            attn[idx] = analysis::attention_last_k(ckpt.model(), analysis::probe_batch(probe), config_.attention_k);
            r.avg_attention_last10 = attn[idx].mean;
            analysis::validate(r);
            per_seed[idx] = r;
        });

        const auto averaged = analysis::average_seeds(per_seed);
        write_text(path("analysis/results_by_seed.csv"), analysis::results_csv(per_seed, ih));
        write_text(path("analysis/results.csv"), analysis::results_csv(averaged, ih));

        const std::size_t h0 = config_.horizons.front();
        std::vector<analysis::ExperimentResult> primary;
        for (const auto& r : averaged)
            if (r.horizon == h0) primary.push_back(r);
        json corr = {{"inputs_sha256", ih}, {"horizon", h0},
                     {"correlations", analysis::to_json(analysis::correlations(primary))}};
        write_text(path("analysis/correlations.json"), corr.dump(2) + "\n");
        write_text(path("analysis/class_summary.csv"),
                   analysis::class_summary_csv(analysis::class_summary(primary), ih));

        // Attention averaged over seeds, per rule and horizon.
        std::vector<std::pair<eca::RuleId, analysis::AttentionSummary>> attn_rows;
        std::map<std::pair<int, std::size_t>, std::pair<analysis::AttentionSummary, std::size_t>> acc;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            auto& [sum, n] = acc[{jobs[i].rule, jobs[i].horizon}];
            if (n == 0) sum = attn[i];
            else {
                for (std::size_t k = 0; k < sum.per_offset.size(); ++k) sum.per_offset[k] += attn[i].per_offset[k];
                sum.mean += attn[i].mean;
                sum.probes += attn[i].probes;
            }
            ++n;
        }
        for (auto& [key, v] : acc) {
            if (key.second != h0) continue;
            auto s = v.first;
            for (auto& x : s.per_offset) x /= static_cast<double>(v.second);
            s.mean /= static_cast<double>(v.second);
            attn_rows.emplace_back(eca::RuleId::from_int(key.first), s);
        }
        write_text(path("analysis/attention.csv"), analysis::attention_csv(attn_rows, ih));

        // CKA across the first-seed pretrained models of the first horizon.
        std::vector<model::ModelCheckpoint> ckpts;
        std::vector<std::string> labels;
        model::Batch<float> probe;
        std::vector<datagen::PretrainDataset> probes;
        for (const auto& r : config_.rule_ids()) {
            ckpts.push_back(model::load_checkpoint(
                path(pretrain_checkpoint(r.code(), h0, config_.seeds.front())).string()));
            labels.push_back("rule" + std::to_string(r.code()));
            probes.push_back(std::get<datagen::PretrainDataset>(
                datagen::load_dataset(path(probe_dataset(r.code(), h0)).string())));
        }
        // Shared probe: windows drawn round-robin from every rule's probe set.
        datagen::PretrainDataset mixed = probes.front();
        mixed.samples.clear();
        for (std::size_t i = 0; mixed.samples.size() < config_.probe_samples; ++i)
            mixed.samples.push_back(probes[i % probes.size()].samples[(i / probes.size()) % probes[i % probes.size()].samples.size()]);
        const auto matrix = analysis::cka_matrix(ckpts, labels, config_.cka_mode, analysis::probe_batch(mixed));
        write_text(path("analysis/cka.csv"), analysis::cka_csv(matrix, ih));
        write_text(path("analysis/mds.csv"), analysis::mds_csv(analysis::mds_embed(matrix.values), labels, ih));

        if (both) {
            std::vector<analysis::ExperimentResult> s1, s5;
            for (const auto& r : averaged) (r.horizon == 1 ? s1 : s5).push_back(r);
            const std::string metric = config_.easy.enabled ? "efficiency_easy"
                                       : config_.hard.enabled ? "efficiency_hard"
                                                              : "avg_attention_last10";
            write_text(path("analysis/horizons.csv"),
                       analysis::horizons_csv(analysis::compare_horizons(s1, s5, metric), ih));
        }
    });
    (ran ? st.executed : st.cached) += 1;
    return st;
}

StageStats Run::report() {
    StageStats st;
    json in = json::object();
    std::vector<std::string> sources = {"analysis/results.csv", "analysis/correlations.json",
                                        "analysis/class_summary.csv", "analysis/attention.csv"};
    for (const auto& s : sources) in[s] = require(s);
    const bool ran = stage("report", in, {"report/summary.md", "report/panels.csv"}, [&] {
        const auto results = analysis::parse_results_csv(read_text(path("analysis/results.csv")));
        const auto corr = json::parse(read_text(path("analysis/correlations.json")));
        const std::size_t h0 = config_.horizons.front();

        std::string panels = "rule,wolfram_class,representative,lempel_ziv,efficiency_easy,efficiency_hard,"
                             "chess_accuracy,avg_attention_last10\n";
        std::ostringstream md;
        md << "# Run summary\n\nConfig hash `" << config_.hash() << "`, horizon " << h0 << ".\n\n";
        md << "## Per-rule results\n\n| rule | class | LZ | compression | Lyapunov | Krylov | easy eff. | hard eff. "
              "| chess acc. | attention (last "
           << config_.attention_k << ") | seeds |\n|---|---|---|---|---|---|---|---|---|---|---|\n";
        for (const auto& r : results) {
            if (r.horizon != h0) continue;
            const auto& c = r.complexity;
            const bool rep = std::find(representative_rules.begin(), representative_rules.end(), r.rule.code()) !=
                             representative_rules.end();
            md << "| " << int(r.rule.code()) << " | " << complexity::to_string(c.wolfram_class) << " | "
               << markdown_value(c.lempel_ziv) << " | " << markdown_value(c.compression) << " | "
               << markdown_value(c.lyapunov) << " | " << markdown_value(c.krylov) << " | "
               << markdown_value(r.efficiency_easy) << " | " << markdown_value(r.efficiency_hard) << " | "
               << markdown_value(r.chess_accuracy) << " | " << markdown_value(r.avg_attention_last10) << " | "
               << r.seeds << " |\n";
            auto opt = [](const std::optional<double>& v) {
                char buf[40];
                if (!v) return std::string();
                std::snprintf(buf, sizeof buf, "%.17g", *v);
                return std::string(buf);
            };
            panels += std::to_string(r.rule.code()) + "," + complexity::to_string(c.wolfram_class) + "," +
                      (rep ? "1" : "0") + "," + opt(c.lempel_ziv) + "," + opt(r.efficiency_easy) + "," +
                      opt(r.efficiency_hard) + "," + opt(r.chess_accuracy) + "," + opt(r.avg_attention_last10) + "\n";
        }
        md << "\n## Correlation with complexity (Pearson r, * = p < 0.05)\n\n| metric | measure | r | p | n |\n"
              "|---|---|---|---|---|\n";
        for (const auto& e : corr.at("correlations")) {
            md << "| " << e.at("metric").get<std::string>() << " | " << e.at("measure").get<std::string>() << " | ";
            if (e.at("r").is_null()) md << "- | - | - |\n";
            else {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.3g", e.at("p").get<double>());
                md << e.at("label").get<std::string>() << " | " << buf << " | " << e.at("n").get<std::size_t>()
                   << " |\n";
            }
        }
        std::vector<analysis::ExperimentResult> primary;
        for (const auto& r : results)
            if (r.horizon == h0) primary.push_back(r);
        const auto summary = analysis::class_summary(primary);
        md << "\n## By Wolfram class (mean ± stderr)\n\n| class | metric | n | mean | stderr |\n|---|---|---|---|---|\n";
        for (const auto& s : summary.stats)
            md << "| " << complexity::to_string(s.cls) << " | " << s.metric << " | " << s.n << " | "
               << markdown_value(s.mean) << " | " << markdown_value(s.stderr_) << " |\n";
        for (const auto& n : summary.notes) md << "\n_" << n << "_\n";
        write_text(path("report/summary.md"), md.str());
        write_text(path("report/panels.csv"), panels);
    });
    (ran ? st.executed : st.cached) += 1;
    return st;
}

StageStats Run::all() {
    StageStats total;
    for (auto fn : {&Run::complexity, &Run::generate, &Run::train, &Run::finetune, &Run::analyze, &Run::report}) {
        const auto s = (this->*fn)();
        total.executed += s.executed;
        total.cached += s.cached;
    }
    return total;
}

VerifyReport Run::verify() const {
    VerifyReport rep;
    std::map<std::string, int> claims;
    const auto m = manifest();
    for (const auto& [key, s] : m.stages) {
        if (s.status != "done") rep.incomplete.push_back(key);
        for (const auto& [rel, hash] : s.outputs) {
            ++claims[rel];
            claims[rel + ".tmp"];  // a crashed atomic write belongs to its stage
            if (s.status != "done") continue;
            if (!fs::exists(path(rel))) rep.missing.push_back(rel);
            else if (sha256_file(path(rel).string()) != hash) rep.mismatched.push_back(rel);
        }
    }
    for (const auto& [rel, n] : claims)
        if (n > 1) rep.mismatched.push_back(rel + " (claimed by " + std::to_string(n) + " stages)");
    for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), dir_).generic_string();
        if (rel == "manifest.json" || rel == "manifest.json.tmp") continue;
        if (!claims.count(rel)) rep.orphans.push_back(rel);
    }
    std::sort(rep.orphans.begin(), rep.orphans.end());
    return rep;
}

}  // namespace ecalab::pipeline
