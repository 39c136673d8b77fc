#pragma once

// Aggregation of per-rule results: correlations, per-class summaries,
// attention over recent states, CKA similarity and its MDS embedding.

#include "ecalab/complexity.hpp"
#include "ecalab/train.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace ecalab::analysis {

inline constexpr double significance_level = 0.05;

struct CorrelationResult {
    double r = 0;
    double p = 1;
    std::size_t n = 0;

    bool significant() const noexcept { return p < significance_level; }
    // "0.66*" style label, asterisk iff p < 0.05.
    std::string label(int digits = 2) const;
};

// Pearson r with a two-sided Student-t p-value on n - 2 degrees of freedom.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------- results

struct ExperimentResult {
    eca::RuleId rule;
    std::size_t horizon = 1;
    complexity::ComplexityReport complexity;
    std::optional<double> efficiency_easy;
    std::optional<double> efficiency_hard;
    std::optional<double> chess_accuracy;
    std::optional<double> avg_attention_last10;
    std::size_t seeds = 1;

    bool operator==(const ExperimentResult&) const = default;
};

void validate(const ExperimentResult& r);

inline const std::array<const char*, 4> metric_names = {"efficiency_easy", "efficiency_hard", "chess_accuracy",
                                                        "avg_attention_last10"};
inline const std::array<const char*, 4> measure_names = {"lempel_ziv", "compression", "lyapunov", "krylov"};

std::optional<double> metric(const ExperimentResult& r, std::string_view name);
double measure(const complexity::ComplexityReport& c, std::string_view name);

// Mean of each metric over seed replicates of the same rule and horizon.
std::vector<ExperimentResult> average_seeds(std::span<const ExperimentResult> replicates);

struct CorrelationEntry {
    std::string metric;
    std::string measure;
    std::optional<CorrelationResult> result;
    std::string note;  // why result is absent
};

// Every metric against every complexity measure, over results that carry it.
std::vector<CorrelationEntry> correlations(std::span<const ExperimentResult> results);
nlohmann::json to_json(const std::vector<CorrelationEntry>& entries);

struct ClassStat {
    complexity::WolframClass cls = complexity::WolframClass::I;
    std::string metric;
    std::size_t n = 0;
    double mean = 0;
    double stderr_ = 0;  // sample sd / sqrt(n); 0 when n == 1
};

struct ClassSummary {
    std::vector<ClassStat> stats;    // ordered by class, then metric
    std::vector<std::string> notes;  // classes or metrics left out
};

ClassSummary class_summary(std::span<const ExperimentResult> results);

// --------------------------------------------------------------- attention

struct AttentionSummary {
    std::vector<double> per_offset;  // offset 1..k before the final query
    double mean = 0;
    std::size_t probes = 0;
};

// Averages a final-query attention trace over layers, heads and sequences.
AttentionSummary summarize_attention(const model::AttentionTrace& trace, std::size_t k = 10);

AttentionSummary attention_last_k(const model::Transformer<float>& m, const model::Batch<float>& probe,
                                  std::size_t k = 10, std::size_t batch_size = 64);

// Held-out pretraining windows used as the probe set.
model::Batch<float> probe_batch(const datagen::PretrainDataset& ds);

// --------------------------------------------------------------------- CKA

enum class CkaMode { activation, weight };
const char* to_string(CkaMode mode) noexcept;
CkaMode parse_cka_mode(std::string_view text);

// Linear CKA on column-centred feature matrices with equal row counts.
double linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

Eigen::MatrixXd activation_features(const model::Transformer<float>& m, const model::Batch<float>& probe,
                                    std::size_t batch_size = 64);

double cka(const model::ModelCheckpoint& a, const model::ModelCheckpoint& b, CkaMode mode,
           const model::Batch<float>& probe);

struct CkaMatrix {
    CkaMode mode = CkaMode::activation;
    std::vector<std::string> labels;
    Eigen::MatrixXd values;
};

CkaMatrix cka_matrix(std::span<const model::ModelCheckpoint> models, std::vector<std::string> labels, CkaMode mode,
                     const model::Batch<float>& probe);

struct Embedding {
    std::vector<std::array<double, 2>> coords;
    std::size_t dims = 2;
    std::string note;
};

// Classical MDS of the distances 1 - CKA.
Embedding mds_embed(const Eigen::MatrixXd& similarity);

// ---------------------------------------------------------------- horizons

struct HorizonPoint {
    eca::RuleId rule;
    double lempel_ziv = 0;
    double one_step = 0;   // x axis
    double five_step = 0;  // y axis
    bool below_diagonal = false;  // short horizon performed better
};

struct HorizonComparison {
    std::string metric;
    std::vector<HorizonPoint> points;
};

HorizonComparison compare_horizons(std::span<const ExperimentResult> short_horizon,
                                   std::span<const ExperimentResult> long_horizon,
                                   std::string_view metric = "efficiency_easy");

// ----------------------------------------------------------------- exports

// CSV writers put `# inputs_sha256=<hash>` on the first line when a hash is
// given; readers skip comment lines.
std::string results_csv(std::span<const ExperimentResult> results, const std::string& inputs_hash = {});
std::vector<ExperimentResult> parse_results_csv(std::string_view text);
std::string attention_csv(const std::vector<std::pair<eca::RuleId, AttentionSummary>>& rows,
                          const std::string& inputs_hash = {});
std::string cka_csv(const CkaMatrix& m, const std::string& inputs_hash = {});
std::string mds_csv(const Embedding& e, const std::vector<std::string>& labels, const std::string& inputs_hash = {});
std::string horizons_csv(const HorizonComparison& h, const std::string& inputs_hash = {});
HorizonComparison parse_horizons_csv(std::string_view text);
std::string class_summary_csv(const ClassSummary& s, const std::string& inputs_hash = {});

}  // namespace ecalab::analysis
