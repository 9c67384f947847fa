#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace tfim {

// Mean and error of a binned Monte Carlo series.
struct Estimate {
    double mean = 0.0;
    double error = 0.0;
    int n_bins = 0;
    // Integrated autocorrelation time in sweeps, from the ratio of the bin
    // variance to the raw per-sweep variance. NaN when not available.
    double tau_int = 0.0;
};

// Running per-sweep accumulator feeding fixed-size bins.
class BinAccumulator {
public:
    explicit BinAccumulator(long samples_per_bin) : samples_per_bin_(samples_per_bin) {}

    void add(double x);

    const std::vector<double>& bin_means() const noexcept { return bins_; }
    long samples_per_bin() const noexcept { return samples_per_bin_; }
    double raw_variance() const noexcept;

private:
    long samples_per_bin_;
    long in_bin_ = 0;
    double bin_sum_ = 0.0;
    std::vector<double> bins_;
    // Welford over individual samples
    long count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// stderr = sample stdev of bin means / sqrt(n_bins).
Estimate binned_estimate(std::span<const double> bin_means, double raw_variance, long samples_per_bin);

// Jackknife over bins for a function of several binned means. Returns the
// function of the full means with the jackknife error.
Estimate jackknife(const std::vector<std::span<const double>>& series,
                   const std::function<double(std::span<const double>)>& fn);

} // namespace tfim
