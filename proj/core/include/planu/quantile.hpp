#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace planu {

/// Equal-weight quantile representation of a return distribution.
///
/// Holds n_q values theta_i at the fixed midpoints tau_i = (2i - 1) / (2 n_q).
/// Each value carries mass 1/n_q. Values may cross (no monotone ordering is
/// enforced) and are always finite.
class QuantileDistribution {
public:
    /// Throws std::invalid_argument on an empty or non-finite value list.
    explicit QuantileDistribution(std::vector<double> values);

    /// n_q copies of `prior`. prior must lie in [0, 1] and n_q >= 1.
    static QuantileDistribution from_prior(double prior, std::size_t n_q);

    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    /// Midpoint fraction tau_i for zero-based index i.
    double midpoint(std::size_t i) const noexcept
    {
        return (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(values_.size()));
    }

    /// Value whose midpoint is nearest to tau; ties go to the lower index.
    double at_fraction(double tau) const;

    double mean() const noexcept;

    friend bool operator==(const QuantileDistribution&, const QuantileDistribution&) = default;

private:
    std::vector<double> values_;
};

/// Rule collapsing a quantile set into a scalar score.
enum class PsiOperator { mean, mean_plus_spread, mean_plus_variance, median };

PsiOperator parse_psi_operator(std::string_view name);
std::string_view to_string(PsiOperator op);

double collapse(const QuantileDistribution& d, PsiOperator op);

/// Quantile-Huber loss
///   L = 1/(n_q |y|) sum_i sum_j |tau_i - 1{u_ij < 0}| * huber_kappa(u_ij) / kappa,
/// with u_ij = y_j - theta_i.
double qr_loss(const QuantileDistribution& d, std::span<const double> targets, double kappa);

/// dL/dtheta_i of qr_loss, analytic.
std::vector<double> qr_loss_gradient(const QuantileDistribution& d,
                                     std::span<const double> targets,
                                     double kappa);

/// One gradient-descent step of size `step` on qr_loss.
QuantileDistribution qr_update(const QuantileDistribution& d,
                               std::span<const double> targets,
                               double step,
                               double kappa);

}  // namespace planu
