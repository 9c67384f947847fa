#include <algorithm>
#include <cmath>
#include <string>

#include "tfim/errors.hpp"
#include "tfim/qmc.hpp"

namespace tfim::qmc {

namespace {

constexpr std::size_t kInitialCutoff = 16;

} // namespace

SseState::SseState(const LatticeSpec& lattice, const ModelParams& params, double beta, Rng& rng)
    : lattice_(&lattice), params_(params), beta_(beta), n_sites_(lattice.n_sites()) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("SseState: beta must be positive and finite");
    if (!(params.h > 0.0)) throw InvalidArgument("SseState: h must be positive (use ClassicalIsing at h = 0)");
    if (params.J < 0.0) throw InvalidArgument("SseState: J must be non-negative");
    spins_.resize(static_cast<std::size_t>(n_sites_));
    for (auto& s : spins_) s = coin(rng) ? 1 : -1;
    ops_.assign(kInitialCutoff, kIdentity);
    first_.assign(static_cast<std::size_t>(n_sites_), -1);
    last_.assign(static_cast<std::size_t>(n_sites_), -1);
}

double SseState::energy_shift() const noexcept {
    return params_.J * lattice_->n_bonds() + params_.h * n_sites_;
}

double SseState::total_weight() const noexcept {
    return params_.h * n_sites_ + 2.0 * params_.J * lattice_->n_bonds();
}

void SseState::grow_cutoff(std::size_t size) {
    if (size <= ops_.size()) return;
    // Appended identities are redistributed by later diagonal updates; only
    // called during thermalization.
    ops_.resize(size, kIdentity);
}

void SseState::set_configuration(std::vector<std::int8_t> spins, std::vector<std::int32_t> ops) {
    if (spins.size() != spins_.size()) throw InvalidArgument("set_configuration: spin count mismatch");
    spins_ = std::move(spins);
    ops_ = std::move(ops);
    n_ = static_cast<std::size_t>(std::count_if(ops_.begin(), ops_.end(), [](auto c) { return c != kIdentity; }));
}

std::string SseState::check_invariants() const {
    const auto n_codes = 2 * n_sites_ + lattice_->n_bonds();
    std::size_t count = 0;
    std::vector<std::int8_t> s(spins_);
    for (std::size_t p = 0; p < ops_.size(); ++p) {
        const auto op = ops_[p];
        if (op == kIdentity) continue;
        if (op < 0 || op >= n_codes) return "invalid operator code " + std::to_string(op) + " at " + std::to_string(p);
        ++count;
        if (is_bond_op(op)) {
            const auto& b = lattice_->bond(op - 2 * n_sites_);
            if (s[static_cast<std::size_t>(b.a)] != s[static_cast<std::size_t>(b.b)])
                return "bond operator on antiparallel spins at position " + std::to_string(p);
        } else if (op & 1) {
            s[static_cast<std::size_t>(op >> 1)] = static_cast<std::int8_t>(-s[static_cast<std::size_t>(op >> 1)]);
        }
    }
    if (count != n_) return "operator count " + std::to_string(n_) + " does not match string (" + std::to_string(count) + ")";
    if (n_ > ops_.size()) return "operator count exceeds cutoff";
    if (s != spins_) return "propagated state differs from initial state";
    for (auto v : spins_)
        if (v != 1 && v != -1) return "spin value outside {-1, +1}";
    return {};
}

void diagonal_update(SseState& st, Rng& rng) {
    const double h = st.params_.h;
    const double J = st.params_.J;
    const double weight = st.total_weight();
    const double site_weight = h * st.n_sites_;
    const double bw = st.beta_ * weight;
    const auto cutoff = static_cast<double>(st.ops_.size());
    const auto n_bonds = static_cast<std::uint32_t>(st.lattice_->n_bonds());
    const auto n_sites = static_cast<std::uint32_t>(st.n_sites_);
    const auto bond_base = 2 * st.n_sites_;
    auto& spins = st.spins_;

    for (auto& op : st.ops_) {
        if (op == SseState::kIdentity) {
            const double p = bw / (cutoff - static_cast<double>(st.n_));
            if (p < 1.0 && uniform01(rng) >= p) continue;
            if (J == 0.0 || uniform01(rng) * weight < site_weight) {
                op = static_cast<std::int32_t>(2 * uniform_index(rng, n_sites));
                ++st.n_;
            } else {
                const auto b = uniform_index(rng, n_bonds);
                const auto& bond = st.lattice_->bond(static_cast<int>(b));
                if (spins[static_cast<std::size_t>(bond.a)] == spins[static_cast<std::size_t>(bond.b)]) {
                    op = bond_base + static_cast<std::int32_t>(b);
                    ++st.n_;
                }
            }
        } else if (op < bond_base && (op & 1)) {
            auto& s = spins[static_cast<std::size_t>(op >> 1)];
            s = static_cast<std::int8_t>(-s);
        } else {
            const double p = (cutoff - static_cast<double>(st.n_) + 1.0) / bw;
            if (p >= 1.0 || uniform01(rng) < p) {
                op = SseState::kIdentity;
                --st.n_;
            }
        }
    }
}

// Vertex legs are numbered 4*k + l for the k-th non-identity operator; legs 0
// and 1 sit below the operator (sites a, b of a bond, or the site), legs 2 and
// 3 above. Site operators only use legs 0 and 2.
void cluster_update(SseState& st, Rng& rng) {
    const auto n_sites = st.n_sites_;
    const auto bond_base = 2 * n_sites;
    auto& pos = st.positions_;
    auto& link = st.links_;
    auto& flag = st.flags_;
    auto& first = st.first_;
    auto& last = st.last_;
    auto& stack = st.stack_;

    pos.clear();
    std::fill(first.begin(), first.end(), -1);
    std::fill(last.begin(), last.end(), -1);
    link.assign(4 * st.n_, -1);

    auto connect = [&](int site, std::int32_t lower, std::int32_t upper) {
        auto& l = last[static_cast<std::size_t>(site)];
        if (l >= 0) {
            link[static_cast<std::size_t>(lower)] = l;
            link[static_cast<std::size_t>(l)] = lower;
        } else {
            first[static_cast<std::size_t>(site)] = lower;
        }
        l = upper;
    };

    for (std::size_t p = 0; p < st.ops_.size(); ++p) {
        const auto op = st.ops_[p];
        if (op == SseState::kIdentity) continue;
        const auto v0 = static_cast<std::int32_t>(4 * pos.size());
        pos.push_back(static_cast<std::int32_t>(p));
        if (op >= bond_base) {
            const auto& b = st.lattice_->bond(op - bond_base);
            connect(b.a, v0, v0 + 2);
            connect(b.b, v0 + 1, v0 + 3);
        } else {
            connect(op >> 1, v0, v0 + 2);
        }
    }
    for (int s = 0; s < n_sites; ++s) {
        const auto f = first[static_cast<std::size_t>(s)];
        if (f < 0) continue;
        const auto l = last[static_cast<std::size_t>(s)];
        link[static_cast<std::size_t>(f)] = l;
        link[static_cast<std::size_t>(l)] = f;
    }

    // flag: -1 unvisited, 0 cluster kept, 1 cluster flipped
    flag.assign(link.size(), -1);
    for (std::size_t v0 = 0; v0 < link.size(); ++v0) {
        if (flag[v0] >= 0 || link[v0] < 0) continue;
        const std::int8_t f = coin(rng) ? 1 : 0;
        stack.clear();
        stack.push_back(static_cast<std::int32_t>(v0));
        while (!stack.empty()) {
            const auto v = static_cast<std::size_t>(stack.back());
            stack.pop_back();
            if (flag[v] >= 0) continue;
            const auto k = v / 4;
            if (st.ops_[static_cast<std::size_t>(pos[k])] >= bond_base) {
                for (std::size_t l = 0; l < 4; ++l) {
                    const auto w = 4 * k + l;
                    if (flag[w] >= 0) continue;
                    flag[w] = f;
                    stack.push_back(link[w]);
                }
            } else {
                flag[v] = f;
                stack.push_back(link[v]);
            }
        }
    }

    for (std::size_t k = 0; k < pos.size(); ++k) {
        auto& op = st.ops_[static_cast<std::size_t>(pos[k])];
        if (op < bond_base && flag[4 * k] != flag[4 * k + 2]) op ^= 1;
    }
    for (int s = 0; s < n_sites; ++s) {
        const auto f = first[static_cast<std::size_t>(s)];
        const bool flip = f >= 0 ? flag[static_cast<std::size_t>(f)] == 1 : coin(rng);
        if (flip) st.spins_[static_cast<std::size_t>(s)] = static_cast<std::int8_t>(-st.spins_[static_cast<std::size_t>(s)]);
    }
}

Sample measure(const SseState& st) {
    const auto& lat = st.lattice();
    const auto n_sites = lat.n_sites();
    const auto bond_base = 2 * n_sites;
    std::vector<std::int8_t> s(st.spins().begin(), st.spins().end());

    long zz = 0;
    for (const auto& b : lat.bonds()) zz += s[static_cast<std::size_t>(b.a)] * s[static_cast<std::size_t>(b.b)];
    long mag = 0;
    for (auto v : s) mag += v;

    const double inv_n = 1.0 / n_sites;
    double zz_acc = 0.0, m2_acc = 0.0, m4_acc = 0.0;
    long n_flip = 0;
    auto accumulate = [&] {
        const double m = static_cast<double>(mag) * inv_n;
        const double m2 = m * m;
        zz_acc += static_cast<double>(zz);
        m2_acc += m2;
        m4_acc += m2 * m2;
    };

    std::size_t slices = 0;
    for (const auto op : st.operators()) {
        if (op == SseState::kIdentity) continue;
        if (op < bond_base && (op & 1)) {
            const auto i = static_cast<std::size_t>(op >> 1);
            long field = 0;
            for (int j : lat.neighbours(static_cast<int>(i))) field += s[static_cast<std::size_t>(j)];
            zz -= 2 * s[i] * field;
            mag -= 2 * s[i];
            s[i] = static_cast<std::int8_t>(-s[i]);
            ++n_flip;
        }
        accumulate();
        ++slices;
    }
    if (slices == 0) {
        accumulate();
        slices = 1;
    }

    const auto& p = st.params();
    Sample out;
    out.zz_bond_sum = zz_acc / static_cast<double>(slices);
    out.m2 = m2_acc / static_cast<double>(slices);
    out.m4 = m4_acc / static_cast<double>(slices);
    out.total_energy = -static_cast<double>(st.n_operators()) / st.beta() + st.energy_shift();
    out.x_sum = static_cast<double>(n_flip) / (st.beta() * p.h);
    return out;
}

} // namespace tfim::qmc
