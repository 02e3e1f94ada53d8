#include "planu/novelty.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace planu {

Vector hash_embed(std::string_view text, std::size_t dimension)
{
    if (dimension == 0)
        throw std::invalid_argument("embedding dimension must be positive");
    Vector out(dimension, 0.0f);
    if (text.empty())
        return out;

    std::string padded;
    padded.reserve(text.size() + 2);
    padded.push_back(' ');
    for (char c : text)
        padded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    padded.push_back(' ');

    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const std::uint64_t h = Rng::mix(fnv1a64(std::string_view(padded).substr(i, 3)));
        const float sign = (h >> 63) ? -1.0f : 1.0f;
        out[h % dimension] += sign;
    }

    double norm = 0.0;
    for (float v : out)
        norm += static_cast<double>(v) * v;
    if (norm > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm));
        for (float& v : out)
            v *= inv;
    }
    return out;
}

HashEmbedding::HashEmbedding(std::size_t dimension) : dimension_(dimension)
{
    if (dimension_ == 0)
        throw std::invalid_argument("embedding dimension must be positive");
}

Vector HashEmbedding::embed(std::string_view text)
{
    return hash_embed(text, dimension_);
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<std::size_t> widths, std::uint64_t seed) : widths_(std::move(widths))
{
    if (widths_.size() < 2)
        throw std::invalid_argument("an MLP needs at least input and output widths");
    for (std::size_t w : widths_)
        if (w == 0)
            throw std::invalid_argument("MLP layer widths must be positive");

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(widths_[l]);
        const auto fan_out = static_cast<Eigen::Index>(widths_[l + 1]);
        const double w_bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        const double b_bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matrix w(fan_out, fan_in);
        for (Eigen::Index c = 0; c < fan_in; ++c)
            for (Eigen::Index r = 0; r < fan_out; ++r)
                w(r, c) = static_cast<float>((2.0 * rng.uniform() - 1.0) * w_bound);
        Column b(fan_out);
        for (Eigen::Index r = 0; r < fan_out; ++r)
            b(r) = static_cast<float>((2.0 * rng.uniform() - 1.0) * b_bound);
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
    }
}

std::size_t Mlp::parameter_count() const noexcept
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
}

Mlp::Matrix Mlp::forward(const Matrix& inputs) const
{
    if (static_cast<std::size_t>(inputs.rows()) != input_dim())
        throw std::invalid_argument("MLP input dimension mismatch");
    Matrix h = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Matrix z = weights_[l] * h;
        z.colwise() += biases_[l];
        if (l + 1 < weights_.size())
            z = z.cwiseMax(0.0f);
        h = std::move(z);
    }
    return h;
}

Mlp::Gradients Mlp::gradients(const Matrix& inputs, const Matrix& targets, std::span<const float> weights) const
{
    const Eigen::Index batch = inputs.cols();
    if (static_cast<std::size_t>(inputs.rows()) != input_dim() ||
        static_cast<std::size_t>(targets.rows()) != output_dim() || targets.cols() != batch ||
        static_cast<Eigen::Index>(weights.size()) != batch || batch == 0)
        throw std::invalid_argument("MLP gradient: shape mismatch");

    double total_weight = 0.0;
    for (float w : weights)
        total_weight += w;
    if (!(total_weight > 0.0))
        throw std::invalid_argument("MLP gradient: sample weights must sum to a positive value");

    // activations[l] is the input to layer l
    std::vector<Matrix> activations;
    activations.reserve(weights_.size() + 1);
    activations.push_back(inputs);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Matrix z = weights_[l] * activations.back();
        z.colwise() += biases_[l];
        if (l + 1 < weights_.size())
            z = z.cwiseMax(0.0f);
        activations.push_back(std::move(z));
    }

    Eigen::Map<const Eigen::RowVectorXf> w(weights.data(), batch);
    const Matrix diff = activations.back() - targets;
    Gradients g;
    g.loss = (diff.colwise().squaredNorm().cast<double>().array() * w.cast<double>().array()).sum() / total_weight;

    Matrix delta = diff.array().rowwise() * (w.array() * static_cast<float>(2.0 / total_weight));
    g.dw.resize(weights_.size());
    g.db.resize(weights_.size());
    for (std::size_t l = weights_.size(); l-- > 0;) {
        g.dw[l] = delta * activations[l].transpose();
        g.db[l] = delta.rowwise().sum();
        if (l > 0) {
            Matrix back = weights_[l].transpose() * delta;
            delta = (activations[l].array() > 0.0f).select(back, 0.0f);
        }
    }
    return g;
}

double Mlp::sgd_step(const Matrix& inputs, const Matrix& targets, std::span<const float> weights,
                     double learning_rate)
{
    Gradients g = gradients(inputs, targets, weights);
    const auto lr = static_cast<float>(learning_rate);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] -= lr * g.dw[l];
        biases_[l] -= lr * g.db[l];
    }
    return g.loss;
}

std::vector<float> Mlp::loss_gradient(const Matrix& inputs, const Matrix& targets, std::span<const float> weights,
                                      double* loss) const
{
    Gradients g = gradients(inputs, targets, weights);
    if (loss)
        *loss = g.loss;
    std::vector<float> flat;
    flat.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        flat.insert(flat.end(), g.dw[l].data(), g.dw[l].data() + g.dw[l].size());
        flat.insert(flat.end(), g.db[l].data(), g.db[l].data() + g.db[l].size());
    }
    return flat;
}

std::vector<float> Mlp::parameters() const
{
    std::vector<float> flat;
    flat.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        flat.insert(flat.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
        flat.insert(flat.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return flat;
}

void Mlp::copy_parameters_from(const Mlp& other)
{
    if (other.widths_ != widths_)
        throw std::invalid_argument("cannot copy parameters between MLPs of different shape");
    weights_ = other.weights_;
    biases_ = other.biases_;
}

// ---------------------------------------------------------------------------

RunningNormalizer::RunningNormalizer(std::size_t dimension, double clamp_min, double clamp_max, double epsilon)
    : mean_(dimension, 0.0), m2_(dimension, 0.0), clamp_min_(clamp_min), clamp_max_(clamp_max), epsilon_(epsilon)
{
    if (!(clamp_min_ <= clamp_max_))
        throw std::invalid_argument("normalizer clamp_min must not exceed clamp_max");
}

void RunningNormalizer::observe(std::span<const float> x)
{
    if (x.size() != mean_.size())
        throw std::invalid_argument("normalizer: dimension mismatch");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double delta = x[i] - mean_[i];
        mean_[i] += delta / n;
        m2_[i] += delta * (x[i] - mean_[i]);
    }
}

Vector RunningNormalizer::normalize(std::span<const float> x) const
{
    if (x.size() != mean_.size())
        throw std::invalid_argument("normalizer: dimension mismatch");
    Vector out(x.size(), 0.0f);
    if (count_ == 0)
        return out;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double sd = std::max(std::sqrt(m2_[i] / n), epsilon_);
        out[i] = static_cast<float>(std::clamp((x[i] - mean_[i]) / sd, clamp_min_, clamp_max_));
    }
    return out;
}

// ---------------------------------------------------------------------------

StateBuffer::StateBuffer(std::size_t capacity) : capacity_(capacity)
{
    if (capacity_ == 0)
        throw std::invalid_argument("state buffer capacity must be positive");
}

void StateBuffer::push(std::uint64_t id, Vector embedding)
{
    if (entries_.size() == capacity_)
        entries_.pop_front();
    entries_.push_back(Entry{id, std::move(embedding)});
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> layer_widths(const RndSettings& s)
{
    if (s.hidden_sizes.empty())
        throw std::invalid_argument("RND needs at least one layer width");
    std::vector<std::size_t> widths{s.embedding_dim};
    widths.insert(widths.end(), s.hidden_sizes.begin(), s.hidden_sizes.end());
    return widths;
}

Mlp::Matrix as_column(std::span<const float> x)
{
    Mlp::Matrix m(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i)
        m(static_cast<Eigen::Index>(i), 0) = x[i];
    return m;
}

}  // namespace

RndModel::RndModel(const RndSettings& settings, std::uint64_t seed)
    : settings_(settings),
      target_(layer_widths(settings), Rng::mix(seed ^ 0x7461726765745f66ULL)),
      predictor_(layer_widths(settings), Rng::mix(seed ^ 0x707265645f66686eULL)),
      normalizer_(settings.embedding_dim, settings.clamp_min, settings.clamp_max)
{
    if (!(settings.learning_rate > 0.0))
        throw std::invalid_argument("RND learning rate must be positive");
    if (!(settings.intrinsic_weight >= 0.0))
        throw std::invalid_argument("intrinsic reward weight must be non-negative");
}

void RndModel::check_dim(std::span<const float> embedding) const
{
    if (embedding.size() != input_dim())
        throw std::invalid_argument("novelty: embedding has dimension " + std::to_string(embedding.size()) +
                                    ", model expects " + std::to_string(input_dim()));
}

void RndModel::observe(std::span<const float> embedding)
{
    check_dim(embedding);
    normalizer_.observe(embedding);
}

Vector RndModel::normalize_observation(std::span<const float> embedding) const
{
    check_dim(embedding);
    return normalizer_.normalize(embedding);
}

double RndModel::novelty_reward(std::span<const float> embedding) const
{
    const Mlp::Matrix x = as_column(normalize_observation(embedding));
    const Mlp::Matrix diff = predictor_.forward(x) - target_.forward(x);
    return settings_.intrinsic_weight * static_cast<double>(diff.squaredNorm());
}

std::vector<double> RndModel::train_predictor(const StateBuffer& buffer, std::size_t batch_size, std::size_t steps,
                                              Rng& rng)
{
    if (buffer.empty())
        throw std::invalid_argument("train_predictor: state buffer is empty");
    if (batch_size == 0)
        throw std::invalid_argument("train_predictor: batch size must be positive");

    std::vector<double> losses;
    losses.reserve(steps);
    const auto dim = static_cast<Eigen::Index>(input_dim());
    for (std::size_t step = 0; step < steps; ++step) {
        // Duplicate draws of one state fold into a single weighted column;
        // the weighted loss equals the plain batch mean.
        std::vector<std::size_t> unique;
        std::vector<float> counts;
        std::unordered_map<std::uint64_t, std::size_t> slot;
        for (std::size_t b = 0; b < batch_size; ++b) {
            const std::size_t pick = static_cast<std::size_t>(rng.below(buffer.size()));
            auto [it, fresh] = slot.try_emplace(buffer[pick].id, unique.size());
            if (fresh) {
                unique.push_back(pick);
                counts.push_back(0.0f);
            }
            counts[it->second] += 1.0f;
        }
        Mlp::Matrix x(dim, static_cast<Eigen::Index>(unique.size()));
        for (std::size_t c = 0; c < unique.size(); ++c) {
            const Vector& e = buffer[unique[c]].embedding;
            check_dim(e);
            const Vector n = normalizer_.normalize(e);
            for (Eigen::Index r = 0; r < dim; ++r)
                x(r, static_cast<Eigen::Index>(c)) = n[static_cast<std::size_t>(r)];
        }
        const Mlp::Matrix y = target_.forward(x);
        losses.push_back(predictor_.sgd_step(x, y, counts, settings_.learning_rate));
    }
    return losses;
}

}  // namespace planu
