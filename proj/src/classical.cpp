#include <cmath>

#include "tfim/errors.hpp"
#include "tfim/qmc.hpp"

namespace tfim::qmc {

ClassicalIsing::ClassicalIsing(const LatticeSpec& lattice, double J, double beta, Rng& rng)
    : lattice_(&lattice), J_(J), beta_(beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("ClassicalIsing: beta must be positive and finite");
    if (J < 0.0) throw InvalidArgument("ClassicalIsing: J must be non-negative");
    add_probability_ = 1.0 - std::exp(-2.0 * beta * J);
    // index (s * local_field + 4) / 2; flip cost 2 J s * local_field
    for (int k = 0; k < 5; ++k) accept_[static_cast<std::size_t>(k)] = std::exp(-2.0 * beta * J * (2 * k - 4));
    spins_.resize(static_cast<std::size_t>(lattice.n_sites()));
    for (auto& s : spins_) s = coin(rng) ? 1 : -1;
}

void ClassicalIsing::metropolis_sweep(Rng& rng) {
    const int n = lattice_->n_sites();
    for (int i = 0; i < n; ++i) {
        int field = 0;
        for (int j : lattice_->neighbours(i)) field += spins_[static_cast<std::size_t>(j)];
        auto& s = spins_[static_cast<std::size_t>(i)];
        const auto k = static_cast<std::size_t>((s * field + 4) / 2);
        if (k <= 2 || uniform01(rng) < accept_[k]) s = static_cast<std::int8_t>(-s);
    }
}

int ClassicalIsing::wolff_update(Rng& rng) {
    const auto seed = uniform_index(rng, static_cast<std::uint32_t>(lattice_->n_sites()));
    const auto sign = spins_[seed];
    spins_[seed] = static_cast<std::int8_t>(-sign);
    stack_.assign(1, static_cast<std::int32_t>(seed));
    int size = 1;
    while (!stack_.empty()) {
        const int i = stack_.back();
        stack_.pop_back();
        for (int j : lattice_->neighbours(i)) {
            auto& s = spins_[static_cast<std::size_t>(j)];
            if (s == sign && uniform01(rng) < add_probability_) {
                s = static_cast<std::int8_t>(-sign);
                stack_.push_back(j);
                ++size;
            }
        }
    }
    return size;
}

long ClassicalIsing::sweep(Rng& rng) {
    if (J_ == 0.0) {
        // free spins: Metropolis would always flip, so draw them independently
        for (auto& s : spins_) s = coin(rng) ? 1 : -1;
        return 0;
    }
    metropolis_sweep(rng);
    long flipped = 0;
    for (int k = 0; k < clusters_per_sweep_; ++k) flipped += wolff_update(rng);
    return flipped;
}

Sample ClassicalIsing::measure() const {
    long zz = 0;
    for (const auto& b : lattice_->bonds())
        zz += spins_[static_cast<std::size_t>(b.a)] * spins_[static_cast<std::size_t>(b.b)];
    long mag = 0;
    for (auto s : spins_) mag += s;
    const double m = static_cast<double>(mag) / lattice_->n_sites();
    Sample out;
    out.zz_bond_sum = static_cast<double>(zz);
    out.total_energy = -J_ * static_cast<double>(zz);
    out.x_sum = 0.0;
    out.m2 = m * m;
    out.m4 = out.m2 * out.m2;
    return out;
}

} // namespace tfim::qmc
