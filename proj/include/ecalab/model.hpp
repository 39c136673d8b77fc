#pragma once

// Decoder-only transformer (GPT-2 block layout: pre-LayerNorm, causal
// multi-head attention, tanh-GELU MLP, learned absolute positions) with two
// interchangeable heads:
//   binary - linear projection of 0/1 state vectors in, per-cell logits out;
//   tokens - embedding table in, vocabulary logits out.
// Forward and backward passes are written out by hand over Eigen matrices;
// the class is instantiated for float (training) and double (gradient checks).

#include "ecalab/error.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ecalab::model {

enum class HeadKind { binary, tokens };

struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    std::size_t context_len = 60;
    HeadKind head = HeadKind::binary;
    std::size_t input_width = 100;   // binary head
    std::size_t output_width = 100;  // binary head
    std::size_t vocab_size = 0;      // tokens head
    double dropout = 0.0;
    double init_std = 0.02;
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& c);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TensorInfo {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    bool backbone = false;  // shared by all heads; frozen during finetuning
};

// Named tensors packed into one flat buffer, in a fixed order.
class ParamLayout {
public:
    explicit ParamLayout(const ModelConfig& c);

    const std::vector<TensorInfo>& tensors() const noexcept { return tensors_; }
    std::size_t size() const noexcept { return total_; }
    const TensorInfo& at(const std::string& name) const;
    std::size_t index(const std::string& name) const;
    bool contains(const std::string& name) const;

private:
    std::size_t add(std::string name, std::size_t rows, std::size_t cols, bool backbone);
    std::vector<TensorInfo> tensors_;
    std::size_t total_ = 0;
};

// Attention of the final query position, per sequence, layer and head.
struct AttentionTrace {
    std::size_t batch = 0, layers = 0, heads = 0, keys = 0;
    std::vector<double> weights;  // [batch][layer][head][key]

    double at(std::size_t b, std::size_t l, std::size_t h, std::size_t k) const {
        return weights[((b * layers + l) * heads + h) * keys + k];
    }
};

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flat parameter and gradient storage.  Aligning the buffer to Eigen's packet
// size keeps vectorized reductions over tensor views independent of where the
// allocator places it, so training is bit-reproducible.
template <typename S>
using ParamBuffer = std::vector<S, Eigen::aligned_allocator<S>>;

// A batch of equal-length sequences.  Binary inputs are batch*len rows of
// input_width values; token inputs are batch*len ids.
template <typename S>
struct Batch {
    std::size_t batch = 0;
    std::size_t len = 0;
    RowMatrix<S> binary;
    std::vector<std::int32_t> tokens;
};

template <typename S>
struct ForwardCache;

struct DropoutContext {
    std::uint64_t key = 0;  // one key per optimizer micro-step
};

template <typename S>
class Transformer {
public:
    using Matrix = RowMatrix<S>;

    explicit Transformer(const ModelConfig& config);
    Transformer(const ModelConfig& config, std::span<const S> values);

    const ModelConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    std::span<S> params() noexcept { return values_; }
    std::span<const S> params() const noexcept { return values_; }

    Eigen::Map<Matrix> tensor(const std::string& name);
    Eigen::Map<const Matrix> tensor(const std::string& name) const;

    // Re-initializes the named tensors (GPT-2 scheme) from config().seed.
    void init_tensors(const std::vector<std::string>& names);

    // Returns batch*len rows of logits.  `cache` is filled when non-null and
    // is required by backward().  `dropout` enables training-mode dropout.
    Matrix forward(const Batch<S>& input, ForwardCache<S>* cache = nullptr, AttentionTrace* trace = nullptr,
                   const DropoutContext* dropout = nullptr) const;

    // Final hidden states after the last LayerNorm (batch*len x d_model).
    Matrix hidden_states(const Batch<S>& input) const;

    // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
    // With backbone_grads == false only head tensors receive gradients.
    void backward(const ForwardCache<S>& cache, const Matrix& dlogits, std::span<S> grads,
                  bool backbone_grads = true) const;

private:
    void check_input(const Batch<S>& input) const;

    ModelConfig config_;
    ParamLayout layout_;
    ParamBuffer<S> values_;
};

template <typename S>
struct LayerCache {
    RowMatrix<S> x_in, h1, qkv, attn_out, x_mid, h2, u, g;
    Eigen::Matrix<S, Eigen::Dynamic, 1> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
    std::vector<RowMatrix<S>> probs;  // per (sequence, head), len x len
    std::vector<std::uint8_t> drop_attn, drop_mlp;
};

template <typename S>
struct ForwardCache {
    std::size_t batch = 0, len = 0;
    RowMatrix<S> binary_in;
    std::vector<std::int32_t> tokens;
    std::vector<std::uint8_t> drop_embed;
    std::vector<LayerCache<S>> layers;
    RowMatrix<S> x_final, ln_out;
    Eigen::Matrix<S, Eigen::Dynamic, 1> lnf_mean, lnf_rstd;
    S dropout_scale = 1;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace ecalab::model
