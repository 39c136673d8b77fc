#pragma once

// Training, finetuning and evaluation on top of Transformer<float>.

#include "ecalab/datagen.hpp"
#include "ecalab/model.hpp"
#include "ecalab/optimizer.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ecalab::model {

// Supervised sequences in model-ready form.
//   binary: inputs are count*len rows of in_width bits, targets are count*len
//           rows of out_width bits, mask marks positions that carry loss;
//           group_size > 1 means each cell is a one-hot group (argmax decoded).
//   tokens: ids in, next-token ids out, -1 where no loss applies.
struct TaskData {
    HeadKind kind = HeadKind::binary;
    std::size_t count = 0;
    std::size_t len = 0;
    std::size_t in_width = 0;
    std::size_t out_width = 0;
    std::size_t group_size = 1;
    std::vector<std::uint8_t> inputs;
    std::vector<std::uint8_t> targets;
    std::vector<std::uint8_t> mask;
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> next;
    std::size_t vocab_size = 0;

    TaskData subset(std::span<const std::size_t> indices) const;
};

// Pretraining: the window rows are the sequence; loss at the last position.
TaskData task_from_pretrain(const datagen::PretrainDataset& ds);
// Reasoning: frames 0..L-2 in, frames 1..L-1 as targets at every position.
TaskData task_from_reasoning(const datagen::ReasoningDataset& ds);
// Chess: ids in, the following id as target, PAD targets excluded.
TaskData task_from_chess(const datagen::ChessDataset& ds);
TaskData task_from_dataset(const datagen::Dataset& ds);

// Deterministic tail split: the last ceil(frac * count) sequences validate.
std::pair<TaskData, TaskData> split_validation(const TaskData& data, double frac);

struct TrainConfig {
    double lr = 2e-6;
    double lr_min = 0.0;
    double weight_decay = 0.01;
    bool decoupled_weight_decay = true;  // AdamW-style; coupled L2 stalls copy rules
    double warmup_frac = 0.10;
    std::size_t batch_size = 64;
    std::size_t grad_accum_steps = 1;
    double clip_norm = 1.0;
    std::size_t max_epochs = 10000;
    std::size_t patience = 20;  // epochs without min_delta improvement in val loss
    double min_delta = 1e-4;
    double val_fraction = 0.1;
    // Stop as soon as validation accuracy reaches this value (0 disables).
    double stop_at_accuracy = 0.0;
    bool restore_best = true;
    std::uint64_t seed = 0;

    bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& c);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

// Finetuning schedules: easy = 1000 epochs at 1e-4, hard = 10000 epochs at
// 1e-5, chess = warm-up schedule with early stopping.
TrainConfig finetune_preset(datagen::TaskKind task);

struct Metrics {
    double loss = 0;
    double bit_accuracy = 0;    // binary: per-bit, logit > 0 predicts 1
    double cell_accuracy = 0;   // binary: per-cell (argmax per one-hot group); tokens: top-1
    double exact_accuracy = 0;  // binary: whole target rows correct
    std::size_t positions = 0;

    // Accuracy used for efficiency and early stopping.
    double accuracy() const noexcept { return cell_accuracy; }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double val_accuracy = 0;
    double lr = 0;          // learning rate of the last optimizer step
    double grad_norm = 0;   // pre-clip norm of the last optimizer step
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::string stop_reason;
    std::size_t best_epoch = 0;
    std::vector<double> lr_trace;  // per optimizer step

    bool operator==(const TrainHistory& o) const;
};

nlohmann::json to_json(const TrainHistory& h);

// 1 / (first epoch with val accuracy >= threshold), or 0 if never reached.
double efficiency(const TrainHistory& history, double threshold = 0.8);

struct ModelCheckpoint {
    ModelConfig config;
    std::vector<float> values;
    nlohmann::json provenance = nlohmann::json::object();

    Transformer<float> model() const { return Transformer<float>(config, values); }
    static ModelCheckpoint from(const Transformer<float>& m, nlohmann::json provenance = nlohmann::json::object());
};

// .eck container: "ECK1", u32 version, u32 header length, JSON header
// (config, provenance, tensor directory, payload sha256), then every tensor
// as little-endian float32 in directory order.
std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);
// SHA-256 of the backbone tensors (names and values).
std::string backbone_hash(const ModelCheckpoint& ckpt);
std::string backbone_hash(const Transformer<float>& m);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Core loop.  trainable marks parameters the optimizer may change.
TrainHistory fit(Transformer<float>& model, const TaskData& train, const TaskData& val, const TrainConfig& config,
                 std::span<const std::uint8_t> trainable, bool backbone_grads, const EpochCallback& on_epoch = {});

Metrics evaluate(const Transformer<float>& model, const TaskData& data, std::size_t batch_size = 64);
Metrics evaluate(const ModelCheckpoint& ckpt, const datagen::Dataset& ds);

struct TrainResult {
    ModelCheckpoint checkpoint;
    TrainHistory history;
};

TrainResult train_pretrain(const datagen::PretrainDataset& ds, const ModelConfig& model_config,
                           const TrainConfig& train_config, const EpochCallback& on_epoch = {});

struct HeadSpec {
    HeadKind kind = HeadKind::binary;
    std::size_t input_width = 0;
    std::size_t output_width = 0;
    std::size_t vocab_size = 0;
    std::uint64_t seed = 1;
};

HeadSpec head_for(const TaskData& data, std::uint64_t seed = 1);

// Replaces the input/output head, freezes every backbone tensor and trains
// only the head.  Throws contract-error if the backbone changed.
TrainResult finetune_frozen(const ModelCheckpoint& ckpt, const TaskData& train, const TaskData& val,
                            const HeadSpec& head, const TrainConfig& config, const EpochCallback& on_epoch = {});

// Loss and d(loss)/d(logits) over the positions that carry targets.
template <typename S>
double binary_loss(const RowMatrix<S>& logits, const RowMatrix<S>& targets, std::span<const std::uint8_t> mask,
                   RowMatrix<S>* dlogits);
template <typename S>
double token_loss(const RowMatrix<S>& logits, std::span<const std::int32_t> next, RowMatrix<S>* dlogits);

struct GradProbe {
    Batch<double> input;
    RowMatrix<double> targets;          // binary head: soft targets in [0, 1]
    std::vector<std::uint8_t> mask;     // binary head: positions with loss
    std::vector<std::int32_t> next;     // token head
};

GradProbe make_grad_probe(const ModelConfig& config, std::size_t batch, std::size_t len, std::uint64_t seed);

struct GradCheckResult {
    double max_rel_error = 0;
    double max_abs_grad = 0;
    std::string worst_param;
};

// Analytic gradients against central differences (step 1e-4) over every
// parameter of a double-precision model.
GradCheckResult grad_check(const ModelConfig& config, const GradProbe& probe, double step = 1e-4);

}  // namespace ecalab::model
