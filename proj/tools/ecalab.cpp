// ecalab command-line entry point.

#include "ecalab/binary_io.hpp"
#include "ecalab/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>
#include <tbb/global_control.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace ecalab;

namespace {

struct Globals {
    std::string config;
    std::string out;
    std::size_t threads = 0;
    std::string log_level = "info";
};

fs::path run_dir(const Globals& g, const pipeline::ExperimentConfig& c) {
    if (!g.out.empty()) return g.out;
    if (!c.output_dir.empty()) return c.output_dir;
    const std::string leaf = "run-" + c.hash().substr(0, 12);
    if (const char* root = std::getenv(pipeline::output_root_env); root && *root) return fs::path(root) / leaf;
    return fs::path("runs") / leaf;
}

pipeline::Run open_run(const Globals& g) {
    if (g.config.empty()) throw Error(ErrorKind::config_error, "this command needs --config");
    auto c = pipeline::load_config(g.config);
    const auto dir = run_dir(g, c);
    const std::size_t threads = g.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : g.threads;
    return pipeline::Run(std::move(c), dir, threads);
}

void print_stats(const char* what, const pipeline::StageStats& s) {
    std::cout << what << ": " << s.executed << " executed, " << s.cached << " cached\n";
}

void write_or_print(const std::string& out, const std::string& text) {
    if (out.empty()) std::cout << text;
    else io::atomic_write(out, text);
}

std::vector<int> parse_rules(const std::string& text) {
    std::vector<int> rules;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            rules.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw Error(ErrorKind::config_error, "bad rule '" + item + "'");
        }
    }
    return rules;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cellular automaton complexity lab"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "experiment config file (JSON, comments allowed)");
    app.add_option("--out", g.out, "output file or run directory");
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error")->capture_default_str();

    // config init
    auto* config_cmd = app.add_subcommand("config", "configuration helpers");
    config_cmd->add_subcommand("init", "write a commented template with every default");
    config_cmd->require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "evolve a rule and write an .ecg grid");
    int sim_rule = 30;
    std::size_t sim_width = 256, sim_steps = 1000;
    std::uint64_t sim_seed = 0;
    double sim_density = 0.5;
    bool sim_print = false;
    sim->add_option("--rule", sim_rule, "Wolfram code")->required();
    sim->add_option("--width", sim_width)->capture_default_str();
    sim->add_option("--steps", sim_steps)->capture_default_str();
    sim->add_option("--seed", sim_seed)->capture_default_str();
    sim->add_option("--density", sim_density)->capture_default_str();
    sim->add_flag("--print", sim_print, "print the grid as text");

    // complexity
    auto* cx = app.add_subcommand("complexity", "score rules with the five complexity measures");
    std::string cx_rules;
    cx->add_option("--rules", cx_rules, "comma-separated rules (without --config)");

    // gen
    auto* gen = app.add_subcommand("gen", "generate datasets");
    std::string gen_task = "pretrain", pgn_dir;
    int gen_rule = 30, min_rating = 2200;
    std::size_t gen_horizon = 1, gen_samples = 2048, seq_len = 6;
    std::uint64_t gen_seed = 0;
    gen->add_option("--task", gen_task, "pretrain|easy|hard|chess")->capture_default_str();
    gen->add_option("--rule", gen_rule)->capture_default_str();
    gen->add_option("--horizon", gen_horizon)->capture_default_str();
    gen->add_option("--samples", gen_samples)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--seq-len", seq_len, "frames per reasoning sequence")->capture_default_str();
    gen->add_option("--pgn-dir", pgn_dir, "directory of .pgn files");
    gen->add_option("--min-rating", min_rating)->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "pretrain on an ECA dataset");
    std::string tr_dataset;
    model::TrainConfig tr_cfg;
    tr_cfg.lr = 1e-3;
    tr_cfg.max_epochs = 30;
    model::ModelConfig tr_model;
    tr->add_option("--dataset", tr_dataset, ".eds pretraining dataset (without --config)");
    tr->add_option("--epochs", tr_cfg.max_epochs)->capture_default_str();
    tr->add_option("--lr", tr_cfg.lr)->capture_default_str();
    tr->add_option("--batch", tr_cfg.batch_size)->capture_default_str();
    tr->add_option("--seed", tr_cfg.seed)->capture_default_str();
    tr->add_option("--layers", tr_model.n_layers)->capture_default_str();
    tr->add_option("--heads", tr_model.n_heads)->capture_default_str();
    tr->add_option("--d-model", tr_model.d_model)->capture_default_str();
    tr->add_option("--d-ff", tr_model.d_ff)->capture_default_str();
    tr->add_option("--stop-at", tr_cfg.stop_at_accuracy, "stop at this validation accuracy")->capture_default_str();

    // finetune
    auto* ft = app.add_subcommand("finetune", "train a new head on a frozen backbone");
    std::string ft_ckpt, ft_dataset, ft_val, ft_task;
    ft->add_option("--ckpt", ft_ckpt, "pretrained .eck backbone");
    ft->add_option("--dataset", ft_dataset, "task dataset (.eds)");
    ft->add_option("--val", ft_val, "validation dataset (default: tail split)");
    ft->add_option("--task", ft_task, "easy|hard|chess preset");
    std::size_t ft_epochs = 0;
    double ft_lr = 0;
    ft->add_option("--epochs", ft_epochs, "override the preset epoch budget");
    ft->add_option("--lr", ft_lr, "override the preset learning rate");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_dataset;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--dataset", ev_dataset)->required();

    auto* an = app.add_subcommand("analyze", "correlations, attention, CKA and class summaries");
    auto* rep = app.add_subcommand("report", "assemble the summary tables");
    auto* all = app.add_subcommand("run", "run every stage in order");
    auto* ver = app.add_subcommand("verify", "check manifest hashes and look for orphaned files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    spdlog::set_level(spdlog::level::from_str(g.log_level));
    std::optional<tbb::global_control> limit;
    if (g.threads > 0) limit.emplace(tbb::global_control::max_allowed_parallelism, g.threads);

    try {
        if (config_cmd->parsed()) {
            write_or_print(g.out, pipeline::config_template());
        } else if (sim->parsed()) {
            const auto rule = eca::RuleId::from_int(sim_rule);
            const auto init = eca::random_state(sim_width, sim_density, sim_seed);
            const auto grid = eca::evolve(rule, init, sim_steps, sim_seed);
            if (!g.out.empty()) eca::save_grid(g.out, grid);
            if (sim_print || g.out.empty())
                for (const auto& row : grid.rows) std::cout << row.to_string() << "\n";
        } else if (cx->parsed()) {
            if (!g.config.empty()) {
                auto run = open_run(g);
                print_stats("complexity", run.complexity());
            } else {
                std::vector<eca::RuleId> rules;
                for (int r : parse_rules(cx_rules.empty() ? "0,4,30,54,110,150,168,179" : cx_rules))
                    rules.push_back(eca::RuleId::from_int(r));
                std::string csv = "rule,wolfram_class,lempel_ziv,compression,lyapunov,krylov\n";
                for (const auto& r : complexity::sweep(rules, {})) {
                    char buf[256];
                    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f\n", int(r.rule.code()),
                                  complexity::to_string(r.wolfram_class), r.lempel_ziv, r.compression, r.lyapunov,
                                  r.krylov);
                    csv += buf;
                }
                write_or_print(g.out, csv);
            }
        } else if (gen->parsed()) {
            if (!g.config.empty()) {
                auto run = open_run(g);
                print_stats("gen", run.generate());
            } else {
                if (g.out.empty()) throw Error(ErrorKind::config_error, "gen needs --out");
                const auto task = datagen::parse_task_kind(gen_task);
                if (task == datagen::TaskKind::pretrain) {
                    datagen::save_dataset(
                        datagen::gen_pretrain(eca::RuleId::from_int(gen_rule), gen_samples, gen_horizon, gen_seed),
                        g.out);
                } else if (task == datagen::TaskKind::reasoning_easy) {
                    datagen::save_dataset(datagen::gen_reasoning_easy(gen_samples, seq_len, gen_seed), g.out);
                } else if (task == datagen::TaskKind::reasoning_hard) {
                    datagen::save_dataset(datagen::gen_reasoning_hard(gen_samples, seq_len, gen_seed), g.out);
                } else {
                    if (pgn_dir.empty()) throw Error(ErrorKind::config_error, "chess needs --pgn-dir");
                    std::vector<std::string> files;
                    for (const auto& e : fs::directory_iterator(pgn_dir))
                        if (e.path().extension() == ".pgn") files.push_back(e.path().string());
                    std::sort(files.begin(), files.end());
                    datagen::SplitSpec split;
                    split.seed = gen_seed;
                    const auto corpus = datagen::ingest_chess(files, min_rating, split,
                                                              [](const std::string& w) { spdlog::warn("{}", w); });
                    fs::create_directories(g.out);
                    datagen::save_dataset(corpus.train, (fs::path(g.out) / "chess_train.eds").string());
                    datagen::save_dataset(corpus.val, (fs::path(g.out) / "chess_val.eds").string());
                    datagen::save_dataset(corpus.test, (fs::path(g.out) / "chess_test.eds").string());
                    std::cout << "games kept " << corpus.train_games.size() + corpus.val_games.size() +
                                                      corpus.test_games.size()
                              << ", below rating " << corpus.games_below_rating << ", malformed "
                              << corpus.games_malformed << ", vocabulary " << corpus.vocab.size() << "\n";
                }
            }
        } else if (tr->parsed()) {
            if (!g.config.empty()) {
                auto run = open_run(g);
                print_stats("train", run.train());
            } else {
                if (tr_dataset.empty() || g.out.empty())
                    throw Error(ErrorKind::config_error, "train needs --dataset and --out (or --config)");
                const auto ds = datagen::load_dataset(tr_dataset);
                const auto* pre = std::get_if<datagen::PretrainDataset>(&ds);
                if (!pre) throw Error(ErrorKind::config_error, "train expects a pretraining dataset");
                tr_model.input_width = pre->config.x_len;
                tr_model.output_width = pre->target_rows() * pre->config.x_len;
                tr_model.context_len = std::max(tr_model.context_len, pre->config.t_len);
                tr_model.seed = tr_cfg.seed;
                const auto result = model::train_pretrain(*pre, tr_model, tr_cfg, [](const model::EpochRecord& e) {
                    spdlog::info("epoch {} train {:.5f} val {:.5f} acc {:.4f}", e.epoch, e.train_loss, e.val_loss,
                                 e.val_accuracy);
                });
                model::save_checkpoint(result.checkpoint, g.out);
                std::cout << model::to_json(result.history).dump(2) << "\n";
            }
        } else if (ft->parsed()) {
            if (!g.config.empty()) {
                auto run = open_run(g);
                print_stats("finetune", run.finetune());
            } else {
                if (ft_ckpt.empty() || ft_dataset.empty() || g.out.empty())
                    throw Error(ErrorKind::config_error, "finetune needs --ckpt, --dataset and --out (or --config)");
                const auto ckpt = model::load_checkpoint(ft_ckpt);
                const auto ds = datagen::load_dataset(ft_dataset);
                const auto kind = ft_task.empty() ? datagen::kind_of(ds) : datagen::parse_task_kind(ft_task);
                auto cfg = model::finetune_preset(kind);
                if (ft_epochs) cfg.max_epochs = ft_epochs;
                if (ft_lr > 0) cfg.lr = ft_lr;
                model::TaskData train, val;
                if (!ft_val.empty()) {
                    train = model::task_from_dataset(ds);
                    val = model::task_from_dataset(datagen::load_dataset(ft_val));
                } else {
                    std::tie(train, val) = model::split_validation(model::task_from_dataset(ds), cfg.val_fraction);
                }
                const auto result = model::finetune_frozen(ckpt, train, val, model::head_for(train), cfg,
                                                           [](const model::EpochRecord& e) {
                                                               spdlog::info("epoch {} val {:.5f} acc {:.4f}", e.epoch,
                                                                            e.val_loss, e.val_accuracy);
                                                           });
                model::save_checkpoint(result.checkpoint, g.out);
                std::cout << model::to_json(result.history).dump(2) << "\n";
            }
        } else if (ev->parsed()) {
            const auto m = model::evaluate(model::load_checkpoint(ev_ckpt), datagen::load_dataset(ev_dataset));
            const nlohmann::json j = {{"loss", m.loss},
                                      {"bit_accuracy", m.bit_accuracy},
                                      {"cell_accuracy", m.cell_accuracy},
                                      {"exact_accuracy", m.exact_accuracy},
                                      {"positions", m.positions}};
            write_or_print(g.out, j.dump(2) + "\n");
        } else if (an->parsed()) {
            auto run = open_run(g);
            print_stats("analyze", run.analyze());
        } else if (rep->parsed()) {
            auto run = open_run(g);
            print_stats("report", run.report());
            std::cout << (run.dir() / "report/summary.md").string() << "\n";
        } else if (all->parsed()) {
            auto run = open_run(g);
            print_stats("run", run.all());
            std::cout << (run.dir() / "report/summary.md").string() << "\n";
        } else if (ver->parsed()) {
            auto run = open_run(g);
            const auto r = run.verify();
            for (const auto& o : r.orphans) std::cout << "orphan: " << o << "\n";
            for (const auto& o : r.mismatched) std::cout << "hash mismatch: " << o << "\n";
            for (const auto& o : r.missing) std::cout << "missing: " << o << "\n";
            for (const auto& o : r.incomplete) std::cout << "incomplete stage: " << o << "\n";
            std::cout << (r.ok() ? "ok" : "FAILED") << "\n";
            return r.ok() ? 0 : 3;
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return pipeline::exit_code(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
