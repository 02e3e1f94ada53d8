#include "planu/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace planu {

namespace {

void check_update_args(std::span<const double> targets, double kappa)
{
    if (targets.empty())
        throw std::invalid_argument("quantile update needs at least one target");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        throw std::invalid_argument("kappa must be a positive finite real");
    for (double y : targets)
        if (!std::isfinite(y))
            throw std::invalid_argument("quantile targets must be finite");
}

double huber(double u, double kappa)
{
    double a = std::abs(u);
    return a <= kappa ? 0.5 * u * u : kappa * (a - 0.5 * kappa);
}

double huber_derivative(double u, double kappa)
{
    if (u > kappa)
        return kappa;
    if (u < -kappa)
        return -kappa;
    return u;
}

}  // namespace

QuantileDistribution::QuantileDistribution(std::vector<double> values) : values_(std::move(values))
{
    if (values_.empty())
        throw std::invalid_argument("quantile distribution needs n_q >= 1");
    for (double v : values_)
        if (!std::isfinite(v))
            throw std::invalid_argument("quantile values must be finite");
}

QuantileDistribution QuantileDistribution::from_prior(double prior, std::size_t n_q)
{
    if (!(prior >= 0.0 && prior <= 1.0))
        throw std::invalid_argument("prior must lie in [0, 1], got " + std::to_string(prior));
    if (n_q < 1)
        throw std::invalid_argument("n_q must be at least 1");
    return QuantileDistribution(std::vector<double>(n_q, prior));
}

double QuantileDistribution::at_fraction(double tau) const
{
    // Midpoint of index k is (k + 0.5) / n, so the nearest index is
    // round(tau * n - 0.5) with halves rounded down.
    const double n = static_cast<double>(values_.size());
    const double position = tau * n - 0.5;
    double k = std::ceil(position - 0.5 - 1e-9);
    k = std::clamp(k, 0.0, n - 1.0);
    return values_[static_cast<std::size_t>(k)];
}

double QuantileDistribution::mean() const noexcept
{
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

PsiOperator parse_psi_operator(std::string_view name)
{
    if (name == "mean")
        return PsiOperator::mean;
    if (name == "mean_plus_spread")
        return PsiOperator::mean_plus_spread;
    if (name == "mean_plus_variance")
        return PsiOperator::mean_plus_variance;
    if (name == "median")
        return PsiOperator::median;
    throw std::invalid_argument("unknown psi operator '" + std::string(name) + "'");
}

std::string_view to_string(PsiOperator op)
{
    switch (op) {
    case PsiOperator::mean: return "mean";
    case PsiOperator::mean_plus_spread: return "mean_plus_spread";
    case PsiOperator::mean_plus_variance: return "mean_plus_variance";
    case PsiOperator::median: return "median";
    }
    throw std::invalid_argument("unknown psi operator tag");
}

double collapse(const QuantileDistribution& d, PsiOperator op)
{
    switch (op) {
    case PsiOperator::mean:
        return d.mean();
    case PsiOperator::mean_plus_spread:
        return d.mean() + d.at_fraction(0.9) - d.at_fraction(0.1);
    case PsiOperator::mean_plus_variance: {
        const double m = d.mean();
        if (d.size() < 2)
            return m;
        double ss = 0.0;
        for (double v : d.values())
            ss += (v - m) * (v - m);
        return m + ss / static_cast<double>(d.size() - 1);
    }
    case PsiOperator::median:
        return d.at_fraction(0.5);
    }
    throw std::invalid_argument("unknown psi operator tag");
}

double qr_loss(const QuantileDistribution& d, std::span<const double> targets, double kappa)
{
    check_update_args(targets, kappa);
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double tau = d.midpoint(i);
        for (double y : targets) {
            const double u = y - d[i];
            const double weight = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
            total += weight * huber(u, kappa) / kappa;
        }
    }
    return total / (static_cast<double>(d.size()) * static_cast<double>(targets.size()));
}

std::vector<double> qr_loss_gradient(const QuantileDistribution& d,
                                     std::span<const double> targets,
                                     double kappa)
{
    check_update_args(targets, kappa);
    const double scale = 1.0 / (static_cast<double>(d.size()) * static_cast<double>(targets.size()));
    std::vector<double> grad(d.size(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double tau = d.midpoint(i);
        double g = 0.0;
        for (double y : targets) {
            const double u = y - d[i];
            const double weight = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
            // du/dtheta = -1
            g -= weight * huber_derivative(u, kappa) / kappa;
        }
        grad[i] = g * scale;
    }
    return grad;
}

QuantileDistribution qr_update(const QuantileDistribution& d,
                               std::span<const double> targets,
                               double step,
                               double kappa)
{
    if (!(step > 0.0) || !std::isfinite(step))
        throw std::invalid_argument("qr step must be a positive finite real");
    const std::vector<double> grad = qr_loss_gradient(d, targets, kappa);
    std::vector<double> next(d.values().begin(), d.values().end());
    for (std::size_t i = 0; i < next.size(); ++i)
        next[i] -= step * grad[i];
    return QuantileDistribution(std::move(next));
}

}  // namespace planu
