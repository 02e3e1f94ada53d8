#pragma once

#include "planu/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace planu {

using Vector = std::vector<float>;

/// Text -> fixed-dimension vector. Deterministic for identical input within a run.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual Vector embed(std::string_view text) = 0;
};

/// Signed feature hashing of character trigrams, L2-normalized.
/// Offline stand-in for a sentence encoder.
class HashEmbedding final : public EmbeddingProvider {
public:
    explicit HashEmbedding(std::size_t dimension = 384);
    std::size_t dimension() const override { return dimension_; }
    Vector embed(std::string_view text) override;

private:
    std::size_t dimension_;
};

Vector hash_embed(std::string_view text, std::size_t dimension);

/// Fully connected ReLU network; the output layer is linear.
class Mlp {
public:
    using Matrix = Eigen::MatrixXf;
    using Column = Eigen::VectorXf;

    /// widths = {input, hidden..., output}. Weights are He-uniform, biases
    /// uniform in +-1/sqrt(fan_in), drawn from `seed`.
    Mlp(std::vector<std::size_t> widths, std::uint64_t seed);

    const std::vector<std::size_t>& widths() const noexcept { return widths_; }
    std::size_t input_dim() const noexcept { return widths_.front(); }
    std::size_t output_dim() const noexcept { return widths_.back(); }
    std::size_t parameter_count() const noexcept;

    /// Columns are samples.
    Matrix forward(const Matrix& inputs) const;

    /// Minimizes sum_b w_b * ||f(x_b) - y_b||^2 / total_weight by one SGD
    /// step. Returns the loss before the step.
    double sgd_step(const Matrix& inputs, const Matrix& targets, std::span<const float> weights,
                    double learning_rate);

    /// Flat copy of all parameters, layer by layer (W then b).
    std::vector<float> parameters() const;
    void copy_parameters_from(const Mlp& other);

    /// dLoss/dparams in parameters() order for the loss of sgd_step; test hook.
    std::vector<float> loss_gradient(const Matrix& inputs, const Matrix& targets,
                                     std::span<const float> weights, double* loss = nullptr) const;

private:
    struct Gradients {
        std::vector<Matrix> dw;
        std::vector<Column> db;
        double loss = 0.0;
    };
    Gradients gradients(const Matrix& inputs, const Matrix& targets, std::span<const float> weights) const;

    std::vector<std::size_t> widths_;
    std::vector<Matrix> weights_;
    std::vector<Column> biases_;
};

/// Per-dimension running mean/variance (Welford), with clamped output.
class RunningNormalizer {
public:
    explicit RunningNormalizer(std::size_t dimension, double clamp_min = -1.0, double clamp_max = 1.0,
                               double epsilon = 1e-6);

    void observe(std::span<const float> x);
    Vector normalize(std::span<const float> x) const;

    std::size_t dimension() const noexcept { return mean_.size(); }
    std::uint64_t count() const noexcept { return count_; }

private:
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::uint64_t count_ = 0;
    double clamp_min_, clamp_max_, epsilon_;
};

/// FIFO buffer of visited-state embeddings. Entries carry a state id so
/// duplicate draws can be folded into one weighted sample.
class StateBuffer {
public:
    struct Entry {
        std::uint64_t id;
        Vector embedding;
    };

    explicit StateBuffer(std::size_t capacity = 10000);

    void push(std::uint64_t id, Vector embedding);
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return entries_.empty(); }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }

private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
};

struct RndSettings {
    std::size_t embedding_dim = 384;
    std::vector<std::size_t> hidden_sizes = {64, 64, 128};
    double learning_rate = 1e-5;
    double intrinsic_weight = 0.01;
    double clamp_min = -1.0;
    double clamp_max = 1.0;
};

/// Random network distillation: frozen random target, trainable predictor.
class RndModel {
public:
    RndModel(const RndSettings& settings, std::uint64_t seed);

    std::size_t input_dim() const noexcept { return target_.input_dim(); }

    /// Feeds the running observation statistics.
    void observe(std::span<const float> embedding);
    Vector normalize_observation(std::span<const float> embedding) const;

    /// weight * ||predictor(norm(x)) - target(norm(x))||^2
    double novelty_reward(std::span<const float> embedding) const;

    /// `steps` SGD updates on uniformly sampled batches from `buffer`.
    /// Returns the loss (mean squared feature error) of each step.
    std::vector<double> train_predictor(const StateBuffer& buffer, std::size_t batch_size, std::size_t steps,
                                        Rng& rng);

    const Mlp& target() const noexcept { return target_; }
    const Mlp& predictor() const noexcept { return predictor_; }
    Mlp& predictor_mut() noexcept { return predictor_; }
    const RunningNormalizer& normalizer() const noexcept { return normalizer_; }
    const RndSettings& settings() const noexcept { return settings_; }

private:
    void check_dim(std::span<const float> embedding) const;

    RndSettings settings_;
    Mlp target_;
    Mlp predictor_;
    RunningNormalizer normalizer_;
};

}  // namespace planu
