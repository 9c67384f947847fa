#include "tfim/stats.hpp"

#include <cmath>
#include <limits>

#include "tfim/errors.hpp"

namespace tfim {

void BinAccumulator::add(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);

    bin_sum_ += x;
    if (++in_bin_ == samples_per_bin_) {
        bins_.push_back(bin_sum_ / static_cast<double>(samples_per_bin_));
        bin_sum_ = 0.0;
        in_bin_ = 0;
    }
}

double BinAccumulator::raw_variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
}

Estimate binned_estimate(std::span<const double> bin_means, double raw_variance, long samples_per_bin) {
    const auto n = static_cast<double>(bin_means.size());
    if (bin_means.size() < 2) throw InvalidArgument("binned estimate needs at least two bins");
    double mean = 0.0;
    for (double b : bin_means) mean += b;
    mean /= n;
    double var = 0.0;
    for (double b : bin_means) var += (b - mean) * (b - mean);
    var /= (n - 1.0);
    Estimate e;
    e.mean = mean;
    e.error = std::sqrt(var / n);
    e.n_bins = static_cast<int>(bin_means.size());
    e.tau_int = raw_variance > 0.0 ? 0.5 * static_cast<double>(samples_per_bin) * var / raw_variance
                                   : std::numeric_limits<double>::quiet_NaN();
    return e;
}

Estimate jackknife(const std::vector<std::span<const double>>& series,
                   const std::function<double(std::span<const double>)>& fn) {
    if (series.empty()) throw InvalidArgument("jackknife needs at least one series");
    const std::size_t n = series.front().size();
    if (n < 2) throw InvalidArgument("jackknife needs at least two bins");
    for (const auto& s : series)
        if (s.size() != n) throw InvalidArgument("jackknife series have different bin counts");

    const std::size_t k = series.size();
    std::vector<double> totals(k, 0.0);
    for (std::size_t j = 0; j < k; ++j)
        for (double b : series[j]) totals[j] += b;

    std::vector<double> args(k);
    for (std::size_t j = 0; j < k; ++j) args[j] = totals[j] / static_cast<double>(n);
    const double full = fn(args);

    std::vector<double> leave_one_out(n);
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) args[j] = (totals[j] - series[j][i]) / static_cast<double>(n - 1);
        leave_one_out[i] = fn(args);
        avg += leave_one_out[i];
    }
    avg /= static_cast<double>(n);
    double var = 0.0;
    for (double v : leave_one_out) var += (v - avg) * (v - avg);

    Estimate e;
    e.mean = full;
    e.error = std::sqrt(var * static_cast<double>(n - 1) / static_cast<double>(n));
    e.n_bins = static_cast<int>(n);
    e.tau_int = std::numeric_limits<double>::quiet_NaN();
    return e;
}

} // namespace tfim
