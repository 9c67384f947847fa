#include <gtest/gtest.h>

#include <cmath>
#include <iostream>
#include <vector>

#include "tfim/ed.hpp"
#include "tfim/errors.hpp"
#include "tfim/qmc.hpp"

using namespace tfim;
using namespace tfim::qmc;

namespace {

QmcConfig small_config(int L, double h, double T, long measure = 20'000, std::uint64_t seed = 7) {
    QmcConfig c;
    c.L = L;
    c.params = {1.0, h};
    c.T = T;
    c.n_thermalization = 2'000;
    c.n_measure = measure;
    c.n_bins = 32;
    c.rng_seed = seed;
    return c;
}

ed::Observable ed_observable(Estimator e) {
    switch (e) {
    case Estimator::total_energy: return ed::Observable::total_energy;
    case Estimator::zz_bond_sum: return ed::Observable::zz_bond_sum;
    case Estimator::x_sum: return ed::Observable::x_sum;
    case Estimator::M2: return ed::Observable::M2;
    case Estimator::M4: return ed::Observable::M4;
    case Estimator::C_nn: return ed::Observable::C_nn;
    case Estimator::binder_U: break;
    }
    return ed::Observable::identity;
}

double ed_value(const ed::Spectrum& s, double T, Estimator e) {
    return e == Estimator::binder_U ? ed::binder_cumulant(s, T) : ed::thermal_expectation(s, T, ed_observable(e));
}

double z_score(const EstimateSet& set, Estimator e, double exact) {
    const auto& x = set.at(e);
    return std::abs(x.mean - exact) / x.error;
}

} // namespace

TEST(QmcConfig, RejectsInvalidFields) {
    auto c = small_config(3, 1.0, 1.0);
    c.T = 0.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_config(3, 1.0, 1.0);
    c.n_bins = 8;
    c.n_measure = 800;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_config(3, 1.0, 1.0);
    c.n_measure = 1001;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_config(3, 1.0, 1.0);
    c.T = -1.0;
    EXPECT_THROW(run_qmc(c), InvalidArgument);
}

TEST(SseMeasure, PolarizedEmptyString) {
    const auto lat = build_lattice(4);
    Rng rng(1);
    SseState st(lat, {1.0, 1.0}, 1.0, rng);
    st.set_configuration(std::vector<std::int8_t>(16, 1), std::vector<std::int32_t>(20, SseState::kIdentity));
    const auto s = measure(st);
    EXPECT_DOUBLE_EQ(s.zz_bond_sum, 32.0);
    EXPECT_DOUBLE_EQ(s.m2, 1.0);
    EXPECT_DOUBLE_EQ(s.m4, 1.0);
    EXPECT_DOUBLE_EQ(s.x_sum, 0.0);
    EXPECT_DOUBLE_EQ(s.total_energy, st.energy_shift());
}

TEST(SseDiagonalUpdate, SiteInsertionsScaleWithField) {
    const auto lat = build_lattice(4);
    for (double h : {0.5, 1.0}) {
        Rng rng(3);
        SseState st(lat, {1.0, h}, 1.0, rng);
        st.set_configuration(std::vector<std::int8_t>(16, 1), std::vector<std::int32_t>(4000, SseState::kIdentity));
        long sites = 0, bonds = 0;
        for (int sweep = 0; sweep < 400; ++sweep) {
            diagonal_update(st, rng);
            ASSERT_EQ(st.check_invariants(), "");
            for (auto op : st.operators()) {
                if (op == SseState::kIdentity) continue;
                (st.is_site_op(op) ? sites : bonds) += 1;
            }
        }
        // all bonds parallel: ratio of weights n_sites*h / (n_bonds*2J) = h/4
        EXPECT_NEAR(static_cast<double>(sites) / static_cast<double>(bonds), h / 4.0, 0.05 * h / 4.0);
    }
    Rng rng(3);
    SseState st(lat, {1.0, 1e-12}, 1.0, rng);
    st.set_configuration(std::vector<std::int8_t>(16, 1), std::vector<std::int32_t>(400, SseState::kIdentity));
    for (int sweep = 0; sweep < 100; ++sweep) diagonal_update(st, rng);
    for (auto op : st.operators()) EXPECT_FALSE(st.is_site_op(op));
}

TEST(SseDiagonalUpdate, LeavesSpinsUnchanged) {
    const auto lat = build_lattice(3);
    Rng rng(11);
    SseState st(lat, {1.0, 2.0}, 1.0, rng);
    st.grow_cutoff(200);
    for (int i = 0; i < 50; ++i) {
        diagonal_update(st, rng);
        cluster_update(st, rng);
    }
    const std::vector<std::int8_t> before(st.spins().begin(), st.spins().end());
    diagonal_update(st, rng);
    EXPECT_EQ(std::vector<std::int8_t>(st.spins().begin(), st.spins().end()), before);
    EXPECT_EQ(st.check_invariants(), "");
}

TEST(SseInvariants, RandomUpdateFuzz) {
    const auto lat = build_lattice(3);
    Rng rng(2024);
    SseState st(lat, {1.0, 1.3}, 0.8, rng);
    for (int i = 0; i < 100'000; ++i) {
        if (coin(rng)) {
            diagonal_update(st, rng);
        } else {
            cluster_update(st, rng);
        }
        if (i % 97 == 0) st.grow_cutoff(static_cast<std::size_t>(std::ceil(1.3 * static_cast<double>(st.n_operators()))) + 1);
        const auto msg = st.check_invariants();
        ASSERT_EQ(msg, "") << "update " << i;
    }
}

TEST(SseInvariants, DetectsBrokenPeriodicity) {
    const auto lat = build_lattice(3);
    Rng rng(1);
    SseState st(lat, {1.0, 1.0}, 1.0, rng);
    std::vector<std::int32_t> ops(10, SseState::kIdentity);
    ops[3] = 2 * 4 + 1; // single flip on site 4
    st.set_configuration(std::vector<std::int8_t>(9, 1), ops);
    EXPECT_NE(st.check_invariants(), "");
    ops[3] = 2 * 9 + 0; // bond 0 on parallel spins is fine
    st.set_configuration(std::vector<std::int8_t>(9, 1), ops);
    EXPECT_EQ(st.check_invariants(), "");
    auto spins = std::vector<std::int8_t>(9, 1);
    spins[1] = -1; // bond 0 joins sites 0 and 1
    st.set_configuration(spins, ops);
    EXPECT_NE(st.check_invariants(), "");
}

TEST(RunQmc, MatchesExactDiagonalizationAtL3) {
    const auto lat = build_lattice(3);
    const auto spec = ed::diagonalize(lat, {1.0, 2.0}, true);
    const auto res = run_qmc(small_config(3, 2.0, 1.0, 40'000));
    for (auto e : kAllEstimators) EXPECT_LT(z_score(res, e, ed_value(spec, 1.0, e)), 3.0) << name(e);
    EXPECT_NEAR(res.at(Estimator::total_energy).mean, -22.542014198432916, 3.0 * res.at(Estimator::total_energy).error);
}

TEST(RunQmc, DecoupledSpinsGiveTanh) {
    auto c = small_config(4, 1.5, 1.0, 20'000);
    c.params.J = 0.0;
    const auto res = run_qmc(c);
    const double exact = 16.0 * std::tanh(1.5);
    EXPECT_LT(z_score(res, Estimator::x_sum, exact), 3.0);
    EXPECT_LT(z_score(res, Estimator::total_energy, -1.5 * exact), 3.0);
}

TEST(RunQmc, LargeFieldSingleSiteClusters) {
    auto c = small_config(3, 4.0, 0.7, 20'000);
    c.params.J = 1e-6;
    const auto res = run_qmc(c);
    EXPECT_LT(z_score(res, Estimator::x_sum, 9.0 * std::tanh(4.0 / 0.7)), 3.0);
}

// Every estimator over an (h, T) grid on L = 3 with two seeds per point;
// at most 1% of comparisons may exceed 3 sigma.
TEST(RunQmc, OracleGrid) {
    const auto lat = build_lattice(3);
    int total = 0, outside = 0;
    for (double h : {1.0, 2.0, 3.0}) {
        const auto spec = ed::diagonalize(lat, {1.0, h}, true);
        for (double T : {0.5, 1.0, 2.0}) {
            for (std::uint64_t seed : {101u, 202u}) {
                const auto res = run_qmc(small_config(3, h, T, 32'000, seed));
                for (auto e : kAllEstimators) {
                    const double z = z_score(res, e, ed_value(spec, T, e));
                    ++total;
                    if (!(z < 3.0)) {
                        ++outside;
                        std::cout << "outside 3 sigma: h=" << h << " T=" << T << " seed=" << seed << ' '
                                  << name(e) << " z=" << z << '\n';
                    }
                }
            }
        }
    }
    EXPECT_LE(outside, total / 100);
}

TEST(RunQmc, Deterministic) {
    const auto c = small_config(3, 1.5, 0.8, 3'200);
    const auto a = run_qmc(c);
    const auto b = run_qmc(c);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(bins_csv(a), bins_csv(b));
    auto other = c;
    other.rng_seed = 8;
    EXPECT_NE(to_json(run_qmc(other)).dump(), to_json(a).dump());
}

TEST(RunQmc, EnergyDecompositionConsistent) {
    const double h = 2.5;
    const auto res = run_qmc(small_config(4, h, 1.2, 20'000));
    const auto& zz = res.at(Estimator::zz_bond_sum);
    const auto& x = res.at(Estimator::x_sum);
    const auto& e = res.at(Estimator::total_energy);
    const double decomposed = -zz.mean - h * x.mean;
    const double sigma = std::sqrt(zz.error * zz.error + h * h * x.error * x.error + e.error * e.error);
    EXPECT_LT(std::abs(decomposed - e.mean), 3.0 * sigma);
}

TEST(RunQmc, StderrScaling) {
    const auto a = run_qmc(small_config(4, 2.0, 1.5, 8'000, 5));
    const auto b = run_qmc(small_config(4, 2.0, 1.5, 32'000, 5));
    for (auto e : {Estimator::total_energy, Estimator::zz_bond_sum, Estimator::x_sum}) {
        const double ratio = a.at(e).error / b.at(e).error;
        EXPECT_GT(ratio, 2.0 / 1.5) << name(e);
        EXPECT_LT(ratio, 2.0 * 1.5) << name(e);
    }
}

TEST(RunQmc, SamplesRespectMomentBounds) {
    const auto lat = build_lattice(3);
    Rng rng(9);
    SseState st(lat, {1.0, 1.0}, 2.0, rng);
    st.grow_cutoff(200);
    for (int i = 0; i < 2000; ++i) {
        diagonal_update(st, rng);
        cluster_update(st, rng);
        const auto s = measure(st);
        ASSERT_LE(s.m2, 1.0);
        ASSERT_LE(s.m4, s.m2 + 1e-15);
    }
}

TEST(RunQmc, CutoffSafetyBound) {
    auto c = small_config(4, 1.0, 0.2, 320);
    c.cutoff_floor = 10;
    c.cutoff_factor = 0.01;
    EXPECT_THROW(run_qmc(c), DiagnosticsError);
}

TEST(RunQmc, InvariantCheckingMode) {
    auto c = small_config(3, 1.0, 1.0, 1'600);
    c.n_thermalization = 200;
    c.check_invariants = true;
    EXPECT_NO_THROW(run_qmc(c));
}

TEST(BinderCumulant, LimitsAtL8) {
    const auto disordered = run_qmc(small_config(8, 5.0, 2.0, 8'000));
    EXPECT_LT(std::abs(disordered.at(Estimator::binder_U).mean), 0.1);
    const auto ordered = run_qmc(small_config(8, 1.0, 0.5, 8'000));
    EXPECT_NEAR(ordered.at(Estimator::binder_U).mean, 2.0 / 3.0, 0.02);
}

TEST(ClassicalPath, MatchesExactDiagonalizationAtZeroField) {
    const auto lat = build_lattice(3);
    const auto spec = ed::diagonalize(lat, {1.0, 0.0}, true);
    for (double T : {1.5, 3.0}) {
        const auto res = run_qmc(small_config(3, 0.0, T, 32'000));
        for (auto e : kAllEstimators) {
            if (e == Estimator::x_sum) continue;
            EXPECT_LT(z_score(res, e, ed_value(spec, T, e)), 3.0) << name(e) << " T=" << T;
        }
        EXPECT_EQ(res.at(Estimator::x_sum).mean, 0.0);
    }
}

TEST(ClassicalPath, BinderNearCriticalValue) {
    // Finite-size Binder cumulant of the square-lattice Ising model at the
    // exact critical temperature sits near 0.61 on the periodic square.
    const auto res = run_qmc(small_config(8, 0.0, 2.0 / std::log(1.0 + std::sqrt(2.0)), 64'000));
    EXPECT_NEAR(res.at(Estimator::binder_U).mean, 0.61, 0.03);
}

TEST(MergeChains, IdentityAndSelfMerge) {
    const auto a = run_qmc(small_config(3, 2.0, 1.0, 3'200));
    const std::vector<EstimateSet> one{a};
    EXPECT_EQ(to_json(merge_chains(one)).dump(), to_json(a).dump());

    const std::vector<EstimateSet> twice{a, a};
    const auto m = merge_chains(twice);
    for (auto e : kAllEstimators) {
        EXPECT_DOUBLE_EQ(m.at(e).mean, a.at(e).mean);
        EXPECT_NEAR(m.at(e).error * m.at(e).error, 0.5 * a.at(e).error * a.at(e).error, 1e-12);
    }
}

TEST(MergeChains, RejectsMismatchedConfigs) {
    const auto a = run_qmc(small_config(3, 2.0, 1.0, 3'200));
    const auto b = run_qmc(small_config(3, 2.0, 1.1, 3'200));
    const std::vector<EstimateSet> sets{a, b};
    EXPECT_THROW(merge_chains(sets), InvalidArgument);
    const auto c = run_qmc(small_config(3, 2.0, 1.0, 3'200, 99));
    const std::vector<EstimateSet> ok{a, c};
    EXPECT_NO_THROW(merge_chains(ok));
}

TEST(MergeChains, FourChainsMatchExact) {
    const auto lat = build_lattice(3);
    const auto spec = ed::diagonalize(lat, {1.0, 2.0}, true);
    auto c = small_config(3, 2.0, 1.0, 16'000);
    c.n_chains = 4;
    c.threads = 2;
    const auto res = run_qmc(c);
    EXPECT_EQ(res.config.n_chains, 4);
    for (auto e : kAllEstimators) EXPECT_LT(z_score(res, e, ed_value(spec, 1.0, e)), 3.0) << name(e);

    const auto single = run_qmc(small_config(3, 2.0, 1.0, 16'000));
    EXPECT_LT(res.at(Estimator::total_energy).error, single.at(Estimator::total_energy).error);
}

TEST(EstimateSetIo, JsonRoundTripAndBinsCsv) {
    const auto a = run_qmc(small_config(3, 2.0, 1.0, 1'600));
    const auto j = to_json(a);
    EXPECT_EQ(j.at("config").at("rng_seed").get<std::uint64_t>(), 7u);
    const auto b = estimate_set_from_json(nlohmann::json::parse(j.dump()));
    for (auto e : kAllEstimators) {
        EXPECT_EQ(a.at(e).mean, b.at(e).mean);
        EXPECT_EQ(a.at(e).error, b.at(e).error);
    }
    const auto csv = bins_csv(a);
    EXPECT_EQ(csv.rfind("bin_index,observable,value\n", 0), 0u);
    EXPECT_NE(csv.find("\n0,binder_U,"), std::string::npos);
    EXPECT_THROW(EstimateSet{}.at(Estimator::M2), InvalidArgument);
}
