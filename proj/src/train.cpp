#include "ecalab/train.hpp"

#include "ecalab/rng.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>

namespace ecalab::model {

// ------------------------------------------------------------- task data

TaskData TaskData::subset(std::span<const std::size_t> indices) const {
    TaskData out = *this;
    out.count = indices.size();
    out.inputs.clear();
    out.targets.clear();
    out.mask.clear();
    out.tokens.clear();
    out.next.clear();
    for (const std::size_t i : indices) {
        if (i >= count) throw Error(ErrorKind::contract_error, "subset index out of range");
        if (kind == HeadKind::binary) {
            const auto in = static_cast<std::ptrdiff_t>(len * in_width);
            const auto tg = static_cast<std::ptrdiff_t>(len * out_width);
            const auto ln = static_cast<std::ptrdiff_t>(len);
            const auto ii = static_cast<std::ptrdiff_t>(i);
            out.inputs.insert(out.inputs.end(), inputs.begin() + ii * in, inputs.begin() + (ii + 1) * in);
            out.targets.insert(out.targets.end(), targets.begin() + ii * tg, targets.begin() + (ii + 1) * tg);
            out.mask.insert(out.mask.end(), mask.begin() + ii * ln, mask.begin() + (ii + 1) * ln);
        } else {
            const auto ln = static_cast<std::ptrdiff_t>(len);
            const auto ii = static_cast<std::ptrdiff_t>(i);
            out.tokens.insert(out.tokens.end(), tokens.begin() + ii * ln, tokens.begin() + (ii + 1) * ln);
            out.next.insert(out.next.end(), next.begin() + ii * ln, next.begin() + (ii + 1) * ln);
        }
    }
    return out;
}

TaskData task_from_pretrain(const datagen::PretrainDataset& ds) {
    TaskData d;
    d.kind = HeadKind::binary;
    d.count = ds.samples.size();
    d.len = ds.config.t_len;
    d.in_width = ds.config.x_len;
    d.out_width = ds.target_rows() * ds.config.x_len;
    d.inputs.reserve(d.count * d.len * d.in_width);
    d.targets.assign(d.count * d.len * d.out_width, 0);
    d.mask.assign(d.count * d.len, 0);
    for (std::size_t n = 0; n < d.count; ++n) {
        const auto& s = ds.samples[n];
        d.inputs.insert(d.inputs.end(), s.window.bits.begin(), s.window.bits.end());
        const std::size_t last = n * d.len + d.len - 1;
        std::copy(s.target.bits.begin(), s.target.bits.end(),
                  d.targets.begin() + static_cast<std::ptrdiff_t>(last * d.out_width));
        d.mask[last] = 1;
    }
    return d;
}

TaskData task_from_reasoning(const datagen::ReasoningDataset& ds) {
    if (ds.seq_len < 2) throw Error(ErrorKind::contract_error, "reasoning sequences need two frames");
    TaskData d;
    d.kind = HeadKind::binary;
    d.count = ds.sequences.size();
    d.len = ds.seq_len - 1;
    d.in_width = d.out_width = ds.frame_width();
    d.group_size = ds.n_colors + 1;
    d.mask.assign(d.count * d.len, 1);
    for (const auto& seq : ds.sequences) {
        for (std::size_t t = 0; t + 1 < ds.seq_len; ++t) {
            const auto a = datagen::encode_frame(seq.frames[t], ds.n_colors);
            const auto b = datagen::encode_frame(seq.frames[t + 1], ds.n_colors);
            d.inputs.insert(d.inputs.end(), a.begin(), a.end());
            d.targets.insert(d.targets.end(), b.begin(), b.end());
        }
    }
    return d;
}

TaskData task_from_chess(const datagen::ChessDataset& ds) {
    TaskData d;
    d.kind = HeadKind::tokens;
    d.count = ds.sequences.size();
    d.len = datagen::chess_context;
    d.vocab_size = ds.vocab.size();
    for (const auto& s : ds.sequences) {
        for (std::size_t t = 0; t < d.len; ++t) {
            d.tokens.push_back(s.tokens[t]);
            d.next.push_back(t + 1 < s.length ? s.tokens[t + 1] : -1);
        }
    }
    return d;
}

TaskData task_from_dataset(const datagen::Dataset& ds) {
    return std::visit(
        [](const auto& d) -> TaskData {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, datagen::PretrainDataset>) return task_from_pretrain(d);
            else if constexpr (std::is_same_v<T, datagen::ReasoningDataset>) return task_from_reasoning(d);
            else return task_from_chess(d);
        },
        ds);
}

std::pair<TaskData, TaskData> split_validation(const TaskData& data, double frac) {
    if (!(frac > 0 && frac < 1)) throw Error(ErrorKind::config_error, "val_fraction must lie in (0, 1)");
    auto n_val = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(data.count)));
    if (data.count < 2) throw Error(ErrorKind::contract_error, "need at least two sequences to split");
    n_val = std::clamp<std::size_t>(n_val, 1, data.count - 1);
    std::vector<std::size_t> tr(data.count - n_val), va(n_val);
    std::iota(tr.begin(), tr.end(), 0);
    std::iota(va.begin(), va.end(), data.count - n_val);
    return {data.subset(tr), data.subset(va)};
}

// ----------------------------------------------------------------- config

void validate(const TrainConfig& c) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::config_error, "train config: " + what); };
    if (!(c.lr > 0)) fail("lr must be positive");
    if (c.lr_min < 0 || c.lr_min > c.lr) fail("lr_min must lie in [0, lr]");
    if (c.weight_decay < 0) fail("weight_decay must be nonnegative");
    if (!(c.warmup_frac >= 0 && c.warmup_frac < 1)) fail("warmup_frac must lie in [0, 1)");
    if (c.batch_size < 1 || c.grad_accum_steps < 1) fail("batch_size and grad_accum_steps must be positive");
    if (!(c.clip_norm > 0)) fail("clip_norm must be positive");
    if (c.max_epochs < 1) fail("max_epochs must be positive");
    if (c.min_delta < 0) fail("min_delta must be nonnegative");
    if (!(c.val_fraction > 0 && c.val_fraction < 1)) fail("val_fraction must lie in (0, 1)");
    if (c.stop_at_accuracy < 0 || c.stop_at_accuracy > 1) fail("stop_at_accuracy must lie in [0, 1]");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"lr_min", c.lr_min},
            {"weight_decay", c.weight_decay},
            {"decoupled_weight_decay", c.decoupled_weight_decay},
            {"warmup_frac", c.warmup_frac},
            {"batch_size", c.batch_size},
            {"grad_accum_steps", c.grad_accum_steps},
            {"clip_norm", c.clip_norm},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"min_delta", c.min_delta},
            {"val_fraction", c.val_fraction},
            {"stop_at_accuracy", c.stop_at_accuracy},
            {"restore_best", c.restore_best},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.lr = j.value("lr", c.lr);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.decoupled_weight_decay = j.value("decoupled_weight_decay", c.decoupled_weight_decay);
    c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_accum_steps = j.value("grad_accum_steps", c.grad_accum_steps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.stop_at_accuracy = j.value("stop_at_accuracy", c.stop_at_accuracy);
    c.restore_best = j.value("restore_best", c.restore_best);
    c.seed = j.value("seed", c.seed);
    validate(c);
    return c;
}

TrainConfig finetune_preset(datagen::TaskKind task) {
    TrainConfig c;
    switch (task) {
    case datagen::TaskKind::reasoning_easy:
        c.lr = 1e-4;
        c.max_epochs = 1000;
        break;
    case datagen::TaskKind::reasoning_hard:
        c.lr = 1e-5;
        c.max_epochs = 10000;
        break;
    case datagen::TaskKind::chess:
        c.lr = 1e-4;
        c.max_epochs = 100;
        break;
    case datagen::TaskKind::pretrain:
        break;
    }
    return c;
}

bool TrainHistory::operator==(const TrainHistory& o) const {
    if (epochs.size() != o.epochs.size() || stop_reason != o.stop_reason || best_epoch != o.best_epoch ||
        lr_trace != o.lr_trace)
        return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = o.epochs[i];
        if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_loss != b.val_loss ||
            a.val_accuracy != b.val_accuracy || a.lr != b.lr || a.grad_norm != b.grad_norm)
            return false;
    }
    return true;
}

nlohmann::json to_json(const TrainHistory& h) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : h.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"val_accuracy", e.val_accuracy},
                          {"lr", e.lr},
                          {"grad_norm", e.grad_norm}});
    return {{"epochs", epochs}, {"stop_reason", h.stop_reason}, {"best_epoch", h.best_epoch}};
}

double efficiency(const TrainHistory& history, double threshold) {
    for (const auto& e : history.epochs)
        if (e.val_accuracy >= threshold) return 1.0 / static_cast<double>(e.epoch);
    return 0.0;
}

// ------------------------------------------------------------------ losses

template <typename S>
double binary_loss(const RowMatrix<S>& logits, const RowMatrix<S>& targets, std::span<const std::uint8_t> mask,
                   RowMatrix<S>* dlogits) {
    const auto rows = logits.rows(), cols = logits.cols();
    if (targets.rows() != rows || targets.cols() != cols || mask.size() != static_cast<std::size_t>(rows))
        throw Error(ErrorKind::contract_error, "loss shapes disagree");
    std::size_t active = 0;
    for (auto m : mask) active += m ? 1 : 0;
    if (dlogits) dlogits->setZero(rows, cols);
    if (active == 0) return 0.0;
    const double denom = static_cast<double>(active) * static_cast<double>(cols);
    double total = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double z = static_cast<double>(logits(r, j));
            const double y = static_cast<double>(targets(r, j));
            total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            if (dlogits) (*dlogits)(r, j) = static_cast<S>((1.0 / (1.0 + std::exp(-z)) - y) / denom);
        }
    }
    return total / denom;
}

template <typename S>
double token_loss(const RowMatrix<S>& logits, std::span<const std::int32_t> next, RowMatrix<S>* dlogits) {
    const auto rows = logits.rows(), cols = logits.cols();
    if (next.size() != static_cast<std::size_t>(rows)) throw Error(ErrorKind::contract_error, "loss shapes disagree");
    std::size_t active = 0;
    for (auto t : next) active += t >= 0 ? 1 : 0;
    if (dlogits) dlogits->setZero(rows, cols);
    if (active == 0) return 0.0;
    const double denom = static_cast<double>(active);
    double total = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto target = next[static_cast<std::size_t>(r)];
        if (target < 0) continue;
        const double m = static_cast<double>(logits.row(r).maxCoeff());
        double sum = 0;
        for (Eigen::Index j = 0; j < cols; ++j) sum += std::exp(static_cast<double>(logits(r, j)) - m);
        const double lse = m + std::log(sum);
        total += lse - static_cast<double>(logits(r, target));
        if (dlogits) {
            for (Eigen::Index j = 0; j < cols; ++j)
                (*dlogits)(r, j) = static_cast<S>(std::exp(static_cast<double>(logits(r, j)) - lse) / denom);
            (*dlogits)(r, target) -= static_cast<S>(1.0 / denom);
        }
    }
    return total / denom;
}

template double binary_loss<float>(const RowMatrix<float>&, const RowMatrix<float>&, std::span<const std::uint8_t>,
                                   RowMatrix<float>*);
template double binary_loss<double>(const RowMatrix<double>&, const RowMatrix<double>&,
                                    std::span<const std::uint8_t>, RowMatrix<double>*);
template double token_loss<float>(const RowMatrix<float>&, std::span<const std::int32_t>, RowMatrix<float>*);
template double token_loss<double>(const RowMatrix<double>&, std::span<const std::int32_t>, RowMatrix<double>*);

// ---------------------------------------------------------------- batches

namespace {

struct MiniBatch {
    Batch<float> input;
    RowMatrix<float> targets;
    std::vector<std::uint8_t> mask;
    std::vector<std::int32_t> next;
};

MiniBatch make_batch(const TaskData& d, std::span<const std::size_t> idx) {
    MiniBatch mb;
    mb.input.batch = idx.size();
    mb.input.len = d.len;
    const auto rows = static_cast<Eigen::Index>(idx.size() * d.len);
    if (d.kind == HeadKind::binary) {
        mb.input.binary.resize(rows, static_cast<Eigen::Index>(d.in_width));
        mb.targets.resize(rows, static_cast<Eigen::Index>(d.out_width));
        mb.mask.resize(static_cast<std::size_t>(rows));
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const std::size_t n = idx[b];
            const std::uint8_t* in = d.inputs.data() + n * d.len * d.in_width;
            const std::uint8_t* tg = d.targets.data() + n * d.len * d.out_width;
            float* pin = mb.input.binary.data() + b * d.len * d.in_width;
            float* ptg = mb.targets.data() + b * d.len * d.out_width;
            for (std::size_t i = 0; i < d.len * d.in_width; ++i) pin[i] = in[i];
            for (std::size_t i = 0; i < d.len * d.out_width; ++i) ptg[i] = tg[i];
            std::copy_n(d.mask.begin() + static_cast<std::ptrdiff_t>(n * d.len), d.len,
                        mb.mask.begin() + static_cast<std::ptrdiff_t>(b * d.len));
        }
    } else {
        for (const std::size_t n : idx) {
            const auto off = static_cast<std::ptrdiff_t>(n * d.len);
            mb.input.tokens.insert(mb.input.tokens.end(), d.tokens.begin() + off,
                                   d.tokens.begin() + off + static_cast<std::ptrdiff_t>(d.len));
            mb.next.insert(mb.next.end(), d.next.begin() + off, d.next.begin() + off + static_cast<std::ptrdiff_t>(d.len));
        }
    }
    return mb;
}

double batch_loss(const TaskData& d, const RowMatrix<float>& logits, const MiniBatch& mb, RowMatrix<float>* dlogits) {
    return d.kind == HeadKind::binary ? binary_loss<float>(logits, mb.targets, mb.mask, dlogits)
                                      : token_loss<float>(logits, mb.next, dlogits);
}

struct MetricSums {
    double loss_sum = 0, loss_weight = 0;
    double bits_ok = 0, bits = 0;
    double cells_ok = 0, cells = 0;
    double exact_ok = 0, positions = 0;
};

void accumulate_metrics(const TaskData& d, const RowMatrix<float>& logits, const MiniBatch& mb, MetricSums& m) {
    if (d.kind == HeadKind::binary) {
        std::size_t active = 0;
        for (auto v : mb.mask) active += v;
        const double loss = binary_loss<float>(logits, mb.targets, mb.mask, nullptr);
        m.loss_sum += loss * static_cast<double>(active);
        m.loss_weight += static_cast<double>(active);
        const std::size_t g = d.group_size;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            if (!mb.mask[static_cast<std::size_t>(r)]) continue;
            bool all = true;
            for (Eigen::Index j = 0; j < logits.cols(); ++j) {
                const bool pred = logits(r, j) > 0;
                const bool ok = pred == (mb.targets(r, j) > 0.5f);
                m.bits_ok += ok;
                m.bits += 1;
                if (g == 1) all = all && ok;
            }
            if (g > 1) {
                for (Eigen::Index c0 = 0; c0 + static_cast<Eigen::Index>(g) <= logits.cols();
                     c0 += static_cast<Eigen::Index>(g)) {
                    Eigen::Index best = 0, truth = 0;
                    logits.row(r).segment(c0, static_cast<Eigen::Index>(g)).maxCoeff(&best);
                    mb.targets.row(r).segment(c0, static_cast<Eigen::Index>(g)).maxCoeff(&truth);
                    const bool ok = best == truth;
                    m.cells_ok += ok;
                    m.cells += 1;
                    all = all && ok;
                }
            }
            m.exact_ok += all;
            m.positions += 1;
        }
        if (g == 1) {
            m.cells_ok = m.bits_ok;
            m.cells = m.bits;
        }
    } else {
        std::size_t active = 0;
        for (auto t : mb.next) active += t >= 0;
        const double loss = token_loss<float>(logits, mb.next, nullptr);
        m.loss_sum += loss * static_cast<double>(active);
        m.loss_weight += static_cast<double>(active);
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const auto t = mb.next[static_cast<std::size_t>(r)];
            if (t < 0) continue;
            Eigen::Index best = 0;
            logits.row(r).maxCoeff(&best);
            const bool ok = best == t;
            m.cells_ok += ok;
            m.cells += 1;
            m.exact_ok += ok;
            m.positions += 1;
        }
        m.bits_ok = m.cells_ok;
        m.bits = m.cells;
    }
}

std::vector<std::uint8_t> trainable_mask(const ParamLayout& layout, bool include_backbone) {
    std::vector<std::uint8_t> mask(layout.size(), 0);
    for (const auto& t : layout.tensors())
        if (include_backbone || !t.backbone)
            std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(t.offset), t.rows * t.cols, 1);
    return mask;
}

}  // namespace

Metrics evaluate(const Transformer<float>& model, const TaskData& data, std::size_t batch_size) {
    MetricSums sums;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.count; start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.count, start + batch_size); ++i) idx.push_back(i);
        const auto mb = make_batch(data, idx);
        const auto logits = model.forward(mb.input);
        accumulate_metrics(data, logits, mb, sums);
        if (data.kind == HeadKind::binary) {
            // per-cell metric for single-bit cells is accumulated per batch
        }
    }
    Metrics m;
    m.loss = sums.loss_weight > 0 ? sums.loss_sum / sums.loss_weight : 0.0;
    m.bit_accuracy = sums.bits > 0 ? sums.bits_ok / sums.bits : 0.0;
    m.cell_accuracy = sums.cells > 0 ? sums.cells_ok / sums.cells : 0.0;
    m.exact_accuracy = sums.positions > 0 ? sums.exact_ok / sums.positions : 0.0;
    m.positions = static_cast<std::size_t>(sums.positions);
    return m;
}

Metrics evaluate(const ModelCheckpoint& ckpt, const datagen::Dataset& ds) {
    const auto data = task_from_dataset(ds);
    const auto& c = ckpt.config;
    if ((data.kind == HeadKind::binary) != (c.head == HeadKind::binary))
        throw Error(ErrorKind::contract_error, "dataset kind does not match the checkpoint head");
    if (data.kind == HeadKind::binary && (data.in_width != c.input_width || data.out_width != c.output_width))
        throw Error(ErrorKind::contract_error, "dataset widths do not match the checkpoint head");
    if (data.kind == HeadKind::tokens && data.vocab_size != c.vocab_size)
        throw Error(ErrorKind::contract_error, "dataset vocabulary does not match the checkpoint head");
    return evaluate(ckpt.model(), data);
}

// ------------------------------------------------------------------- fit

TrainHistory fit(Transformer<float>& model, const TaskData& train, const TaskData& val, const TrainConfig& config,
                 std::span<const std::uint8_t> trainable, bool backbone_grads, const EpochCallback& on_epoch) {
    validate(config);
    if (train.count == 0 || val.count == 0) throw Error(ErrorKind::contract_error, "empty train or validation set");
    const std::size_t per_step = config.batch_size * config.grad_accum_steps;
    const std::size_t steps_per_epoch = (train.count + per_step - 1) / per_step;
    const LrSchedule schedule(config.lr, config.lr_min, config.warmup_frac, steps_per_epoch * config.max_epochs);
    Adam<float> adam(model.params().size(),
                     {0.9, 0.999, 1e-8, config.weight_decay, config.decoupled_weight_decay});

    ParamBuffer<float> grads(model.params().size(), 0.0f);
    std::vector<float> best(model.params().begin(), model.params().end());
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::size_t global_step = 0;

    TrainHistory history;
    std::vector<std::size_t> order(train.count);
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        CounterRng shuffle(CounterRng::derive(config.seed, {0x53485546ULL, epoch}));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.next_below(i)]);

        double loss_sum = 0, loss_weight = 0, last_norm = 0, last_lr = 0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t begin = s * per_step;
            const std::size_t end = std::min(train.count, begin + per_step);
            const std::size_t micro = (end - begin + config.batch_size - 1) / config.batch_size;
            std::fill(grads.begin(), grads.end(), 0.0f);
            for (std::size_t mbi = 0; mbi < micro; ++mbi) {
                const std::size_t b0 = begin + mbi * config.batch_size;
                const std::size_t b1 = std::min(end, b0 + config.batch_size);
                const auto mb = make_batch(train, std::span<const std::size_t>(order).subspan(b0, b1 - b0));
                ForwardCache<float> cache;
                const DropoutContext drop{CounterRng::derive(config.seed, {0x44524F50ULL, global_step, mbi})};
                const auto logits = model.forward(mb.input, &cache, nullptr, &drop);
                RowMatrix<float> dlogits;
                const double loss = batch_loss(train, logits, mb, &dlogits);
                if (!std::isfinite(loss))
                    throw Error(ErrorKind::numeric_failure, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                                ", step " + std::to_string(global_step) +
                                                                " (last grad norm " + std::to_string(last_norm) + ")");
                dlogits /= static_cast<float>(micro);
                model.backward(cache, dlogits, grads, backbone_grads);
                loss_sum += loss * static_cast<double>(b1 - b0);
                loss_weight += static_cast<double>(b1 - b0);
            }
            last_norm = clip_grad_norm<float>(grads, config.clip_norm);
            if (!std::isfinite(last_norm))
                throw Error(ErrorKind::numeric_failure, "non-finite gradient norm at step " + std::to_string(global_step));
            last_lr = schedule.at(global_step);
            history.lr_trace.push_back(last_lr);
            adam.step(model.params(), grads, last_lr, trainable);
            ++global_step;
        }

        const Metrics vm = evaluate(model, val, config.batch_size);
        if (!std::isfinite(vm.loss))
            throw Error(ErrorKind::numeric_failure, "non-finite validation loss at epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, loss_sum / loss_weight, vm.loss, vm.accuracy(), last_lr, last_norm};
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (vm.loss < best_loss - config.min_delta) {
            best_loss = vm.loss;
            history.best_epoch = epoch;
            std::copy(model.params().begin(), model.params().end(), best.begin());
            since_best = 0;
        } else {
            ++since_best;
        }
        if (config.stop_at_accuracy > 0 && vm.accuracy() >= config.stop_at_accuracy) {
            history.stop_reason = "target-accuracy";
            return history;
        }
        if (config.patience > 0 && since_best >= config.patience) {
            history.stop_reason = "early-stopping";
            break;
        }
    }
    if (history.stop_reason.empty()) history.stop_reason = "max-epochs";
    if (config.restore_best && history.best_epoch > 0) std::copy(best.begin(), best.end(), model.params().begin());
    return history;
}

TrainResult train_pretrain(const datagen::PretrainDataset& ds, const ModelConfig& model_config,
                           const TrainConfig& train_config, const EpochCallback& on_epoch) {
    if (model_config.head != HeadKind::binary) throw Error(ErrorKind::config_error, "pretraining needs a binary head");
    const auto data = task_from_pretrain(ds);
    if (data.in_width != model_config.input_width || data.out_width != model_config.output_width)
        throw Error(ErrorKind::config_error, "model widths do not match the dataset");
    auto [train, val] = split_validation(data, train_config.val_fraction);
    Transformer<float> model(model_config);
    const auto mask = trainable_mask(model.layout(), true);
    auto history = fit(model, train, val, train_config, mask, true, on_epoch);
    nlohmann::json prov = {{"stage", "pretrain"},
                           {"rule", ds.rule.code()},
                           {"horizon", ds.horizon},
                           {"dataset_seed", ds.seed},
                           {"epochs", history.epochs.size()},
                           {"stop_reason", history.stop_reason},
                           {"train_config", to_json(train_config)}};
    if (!history.epochs.empty()) {
        prov["final_train_loss"] = history.epochs.back().train_loss;
        prov["final_val_loss"] = history.epochs.back().val_loss;
        prov["final_val_accuracy"] = history.epochs.back().val_accuracy;
    }
    return {ModelCheckpoint::from(model, prov), std::move(history)};
}

HeadSpec head_for(const TaskData& data, std::uint64_t seed) {
    HeadSpec h;
    h.kind = data.kind;
    h.input_width = data.in_width;
    h.output_width = data.out_width;
    h.vocab_size = data.vocab_size;
    h.seed = seed;
    return h;
}

TrainResult finetune_frozen(const ModelCheckpoint& ckpt, const TaskData& train, const TaskData& val,
                            const HeadSpec& head, const TrainConfig& config, const EpochCallback& on_epoch) {
    if (train.kind != head.kind || val.kind != head.kind)
        throw Error(ErrorKind::contract_error, "task data does not match the head spec");
    if (train.len > ckpt.config.context_len)
        throw Error(ErrorKind::contract_error, "task sequences exceed the backbone context");

    ModelConfig cfg = ckpt.config;
    cfg.head = head.kind;
    cfg.input_width = head.input_width;
    cfg.output_width = head.output_width;
    cfg.vocab_size = head.vocab_size;
    cfg.seed = head.seed;
    Transformer<float> model(cfg);

    const auto source = ckpt.model();
    for (const auto& t : model.layout().tensors()) {
        if (!t.backbone) continue;
        model.tensor(t.name) = source.tensor(t.name);
    }
    const std::string before = backbone_hash(ckpt);
    if (backbone_hash(model) != before) throw Error(ErrorKind::contract_error, "backbone copy mismatch");

    const auto mask = trainable_mask(model.layout(), false);
    auto history = fit(model, train, val, config, mask, false, on_epoch);
    if (backbone_hash(model) != before)
        throw Error(ErrorKind::contract_error, "frozen-weight drift detected after finetuning");

    nlohmann::json prov = {{"stage", "finetune"},
                           {"backbone", ckpt.provenance},
                           {"backbone_hash", before},
                           {"epochs", history.epochs.size()},
                           {"stop_reason", history.stop_reason},
                           {"train_config", to_json(config)}};
    if (!history.epochs.empty()) prov["final_val_accuracy"] = history.epochs.back().val_accuracy;
    return {ModelCheckpoint::from(model, prov), std::move(history)};
}

// -------------------------------------------------------------- grad check

GradProbe make_grad_probe(const ModelConfig& config, std::size_t batch, std::size_t len, std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, {0x50524F42ULL}));
    GradProbe p;
    p.input.batch = batch;
    p.input.len = len;
    const auto rows = static_cast<Eigen::Index>(batch * len);
    if (config.head == HeadKind::binary) {
        p.input.binary.resize(rows, static_cast<Eigen::Index>(config.input_width));
        for (Eigen::Index i = 0; i < p.input.binary.size(); ++i) p.input.binary.data()[i] = rng.bernoulli(0.5);
        p.targets.resize(rows, static_cast<Eigen::Index>(config.output_width));
        for (Eigen::Index i = 0; i < p.targets.size(); ++i) p.targets.data()[i] = rng.next_double();
        p.mask.resize(static_cast<std::size_t>(rows));
        for (auto& m : p.mask) m = rng.bernoulli(0.7);
        p.mask.back() = 1;
    } else {
        for (Eigen::Index i = 0; i < rows; ++i) {
            p.input.tokens.push_back(static_cast<std::int32_t>(rng.next_below(config.vocab_size)));
            p.next.push_back(rng.bernoulli(0.8) ? static_cast<std::int32_t>(rng.next_below(config.vocab_size)) : -1);
        }
        p.next.back() = 0;
    }
    return p;
}

namespace {

double probe_loss(const Transformer<double>& m, const GradProbe& p, RowMatrix<double>* dlogits,
                  ForwardCache<double>* cache) {
    const auto logits = m.forward(p.input, cache);
    return m.config().head == HeadKind::binary ? binary_loss<double>(logits, p.targets, p.mask, dlogits)
                                               : token_loss<double>(logits, p.next, dlogits);
}

}  // namespace

GradCheckResult grad_check(const ModelConfig& config, const GradProbe& probe, double step) {
    Transformer<double> model(config);
    // Move off the symmetric initialization so every tensor has generic gradients.
    CounterRng jitter(CounterRng::derive(config.seed, {0x4A4954ULL}));
    for (auto& v : model.params()) v += 0.1 * jitter.next_normal();

    ForwardCache<double> cache;
    RowMatrix<double> dlogits;
    probe_loss(model, probe, &dlogits, &cache);
    ParamBuffer<double> analytic(model.params().size(), 0.0);
    model.backward(cache, dlogits, analytic, true);

    GradCheckResult res;
    auto params = model.params();
    for (const auto& t : model.layout().tensors()) {
        for (std::size_t k = 0; k < t.rows * t.cols; ++k) {
            const std::size_t i = t.offset + k;
            const double saved = params[i];
            params[i] = saved + step;
            const double up = probe_loss(model, probe, nullptr, nullptr);
            params[i] = saved - step;
            const double down = probe_loss(model, probe, nullptr, nullptr);
            params[i] = saved;
            const double numeric = (up - down) / (2 * step);
            const double a = analytic[i];
            const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
            res.max_abs_grad = std::max(res.max_abs_grad, std::abs(a));
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_param = t.name + "[" + std::to_string(k) + "]";
            }
        }
    }
    return res;
}

}  // namespace ecalab::model
