#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tfim/csv.hpp"
#include "tfim/errors.hpp"
#include "tfim/phase.hpp"

using namespace tfim;
using namespace tfim::phase;

namespace {

// Binder cumulants of two sizes that cross exactly at Tc, with Gaussian noise.
BinderEvaluator synthetic_binder(double Tc, double sigma, std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    return [=](int L, double T) {
        std::normal_distribution<double> noise(0.0, sigma);
        const double U = (1.0 / 3.0) * (1.0 - std::tanh(0.5 * L * (T - Tc) / Tc));
        return Estimate{U + (sigma > 0 ? noise(*rng) : 0.0), sigma, 32, 1.0};
    };
}

double tc_guess(double h) {
    const double r = h / kQuantumCriticalField;
    return kClassicalTc * std::sqrt(1.0 - r * r);
}

quench::TfCurve synthetic_curve(const std::function<double(double)>& Tf, double band, double h0, double h1, int n) {
    quench::TfCurve c;
    c.L = 8;
    for (int k = 0; k < n; ++k) {
        const double h = h0 + (h1 - h0) * k / (n - 1);
        quench::TfResult r;
        r.T_f = Tf(h);
        r.T_lo = r.T_f - band;
        r.T_hi = r.T_f + band;
        c.points.push_back({h, r, "", false, false});
    }
    return c;
}

CriticalLine linear_line() { return CriticalLine({{0.0, 2.0, 0.0}, {kQuantumCriticalField, 0.0, 0.0}}); }

std::vector<FssPoint> fss_data(double a, double b, double c, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    std::vector<FssPoint> pts;
    for (int L : {4, 6, 8, 12, 16, 24})
        pts.push_back({L, a * std::pow(L, -b) + c + (sigma > 0 ? noise(rng) : 0.0), sigma > 0 ? sigma : 1.0});
    return pts;
}

} // namespace

TEST(MonotoneCubic, InterpolatesAndPreservesMonotonicity) {
    const std::vector<double> x{0, 1, 2, 3, 4}, y{5, 4, 1, 0.9, 0};
    MonotoneCubic f(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(f(x[i]), y[i], 1e-12);
    double prev = f(0.0);
    for (int k = 1; k <= 400; ++k) {
        const double v = f(4.0 * k / 400);
        EXPECT_LE(v, prev + 1e-12);
        prev = v;
    }
    EXPECT_DOUBLE_EQ(f(-1.0), 5.0);
    EXPECT_DOUBLE_EQ(f(9.0), 0.0);

    MonotoneCubic g({0, 2}, {1, 3});
    EXPECT_DOUBLE_EQ(g(0.5), 1.5);
    EXPECT_THROW(MonotoneCubic({0, 0, 1}, {1, 2, 3}), InvalidArgument);
}

TEST(BinderCrossing, RecoversKnownTemperature) {
    const double Tc = 1.7;
    const auto r = binder_crossing_Tc(1.0, 8, 12, 1.0, 2.6, synthetic_binder(Tc, 0.002, 7));
    ASSERT_TRUE(r.found) << r.diagnostics;
    EXPECT_GT(r.dT_c, 0.0);
    EXPECT_LT(r.dT_c, 0.05);
    EXPECT_NEAR(r.T_c, Tc, 3 * r.dT_c);
    EXPECT_GE(r.scan.size(), 6u);
}

TEST(BinderCrossing, ExactDataConvergesToTolerance) {
    const auto r = binder_crossing_Tc(0.0, 4, 8, 1.0, 3.0, synthetic_binder(2.0, 0.0, 1));
    ASSERT_TRUE(r.found);
    EXPECT_NEAR(r.T_c, 2.0, 2e-3 * 2.0);
}

TEST(BinderCrossing, ShiftsWindowTowardTheCrossing) {
    const auto up = binder_crossing_Tc(0.5, 8, 12, 0.5, 1.0, synthetic_binder(1.8, 0.001, 3));
    ASSERT_TRUE(up.found) << up.diagnostics;
    EXPECT_NEAR(up.T_c, 1.8, 3 * up.dT_c + 1e-3);
    const auto down = binder_crossing_Tc(0.5, 8, 12, 2.5, 3.0, synthetic_binder(1.8, 0.001, 3));
    ASSERT_TRUE(down.found) << down.diagnostics;
    EXPECT_NEAR(down.T_c, 1.8, 3 * down.dT_c + 1e-3);
}

TEST(BinderCrossing, NoCrossingInParamagnet) {
    // Deep in the paramagnet both cumulants vanish within noise.
    BinderEvaluator flat = [](int, double) { return Estimate{0.0, 0.01, 32, 1.0}; };
    const auto r = binder_crossing_Tc(5.0, 8, 12, 0.1, 1.0, flat);
    EXPECT_FALSE(r.found);
    EXPECT_FALSE(r.diagnostics.empty());
    EXPECT_EQ(r.scan.size(), 6u);
    EXPECT_THROW(binder_crossing_Tc(1.0, 12, 8, 1.0, 2.0, flat), InvalidArgument);
}

TEST(CriticalLine, AnchorsAndMonotonicity) {
    const std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    auto factory = [](double h) { return synthetic_binder(tc_guess(h), 0.001, 11 + static_cast<int>(10 * h)); };
    const auto line = build_critical_line(grid, 8, 12, factory);
    const auto& pts = line.points();
    EXPECT_DOUBLE_EQ(pts.front().h, 0.0);
    EXPECT_DOUBLE_EQ(pts.front().T_c, kClassicalTc);
    EXPECT_DOUBLE_EQ(pts.back().h, kQuantumCriticalField);
    EXPECT_DOUBLE_EQ(pts.back().T_c, 0.0);
    EXPECT_EQ(line.crossings.size(), grid.size());
    for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LT(pts[i].T_c, pts[i - 1].T_c);
    double prev = line.T_c(0.0);
    for (int k = 1; k <= 300; ++k) {
        const double v = line.T_c(3.044 * k / 300);
        EXPECT_LE(v, prev + 1e-12);
        prev = v;
    }
    EXPECT_NEAR(line.T_c(1.5), tc_guess(1.5), 0.02);
    EXPECT_EQ(line.T_c(4.0), 0.0);

    const auto back = critical_line_from_json(critical_line_json(line));
    EXPECT_EQ(back.points().size(), pts.size());
    const auto csv = parse_csv(critical_line_csv(line));
    EXPECT_EQ(csv.rows.size(), pts.size());
    EXPECT_EQ(csv.rows.front()[csv.column("kind")], "anchor");
}

TEST(CriticalLine, PoolsViolationsWithinUncertainty) {
    const auto pooled = enforce_decreasing({{0.0, 2.2, 0.0}, {1.0, 2.0, 0.1}, {1.5, 2.05, 0.1}, {2.0, 1.0, 0.1}});
    ASSERT_EQ(pooled.size(), 3u);
    EXPECT_NEAR(pooled[1].h, 1.25, 1e-12);
    EXPECT_NEAR(pooled[1].T_c, 2.025, 1e-12);
    EXPECT_NEAR(pooled[1].dT_c, 0.1 / std::sqrt(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(pooled[0].T_c, 2.2);

    // A small rise within joint errors is pooled by build_critical_line.
    auto bumpy = [](double h) {
        const double Tc = h == 1.5 ? tc_guess(1.0) + 0.005 : tc_guess(h);
        return BinderEvaluator([Tc](int L, double T) {
            return Estimate{(1.0 / 3.0) * (1.0 - std::tanh(0.5 * L * (T - Tc) / Tc)), 0.01, 32, 1.0};
        });
    };
    const std::vector<double> grid{1.0, 1.5, 2.0};
    EXPECT_NO_THROW(build_critical_line(grid, 8, 12, bumpy));
}

TEST(CriticalLine, RejectsRiseBeyondUncertainty) {
    auto bad = [](double h) {
        const double Tc = h == 2.0 ? 2.2 : tc_guess(h);
        return BinderEvaluator([Tc](int L, double T) {
            return Estimate{(1.0 / 3.0) * (1.0 - std::tanh(0.5 * L * (T - Tc) / Tc)), 1e-4, 32, 1.0};
        });
    };
    const std::vector<double> grid{1.0, 2.0};
    EXPECT_THROW(build_critical_line(grid, 8, 12, bad), DataQualityError);
    EXPECT_THROW(CriticalLine({{0.0, 1.0, 0.0}, {1.0, 1.0, 0.0}}), DataQualityError);
}

TEST(Classify, Regions) {
    const CriticalLine line({{0.0, 2.0, 0.0}, {1.0, 1.5, 0.1}, {kQuantumCriticalField, 0.0, 0.0}});
    EXPECT_EQ(classify({1.0, 1.0}, line), Phase::FM);
    EXPECT_EQ(classify({1.0, 2.0}, line), Phase::PM);
    EXPECT_EQ(classify({1.0, 1.55}, line), Phase::boundary);
    EXPECT_EQ(classify({4.0, 0.5}, line), Phase::PM);
    EXPECT_EQ(classify({0.0, 2.0}, line), Phase::boundary);
    EXPECT_EQ(name(Phase::FM), "FM");
}

TEST(DynamicalCriticalPoints, SingleCrossingAtKnownField) {
    const auto line = linear_line();
    const double s = 2.0 / kQuantumCriticalField;
    const auto curve = synthetic_curve([](double h) { return 0.5 + 0.5 * h; }, 0.1, 0.0, 3.0, 13);
    const auto cps = dynamical_critical_points(curve, line);
    ASSERT_EQ(cps.size(), 1u);
    EXPECT_NEAR(cps[0].h_c, 1.5 / (0.5 + s), 1e-3);
    EXPECT_TRUE(cps[0].fm_to_pm);
    EXPECT_EQ(cps[0].branch, 1);
    EXPECT_NEAR(cps[0].h_lo, 1.4 / (0.5 + s), 1e-3);
    EXPECT_NEAR(cps[0].h_hi, 1.6 / (0.5 + s), 1e-3);
}

TEST(DynamicalCriticalPoints, ZeroAndTwoCrossings) {
    const auto line = linear_line();
    EXPECT_TRUE(dynamical_critical_points(synthetic_curve([](double) { return 5.0; }, 0.1, 0.0, 3.0, 13), line).empty());

    // Re-entrant curve: FM -> PM -> FM.
    const auto cps = dynamical_critical_points(
        synthetic_curve([](double h) { return 2.0 - 2.0 * h / kQuantumCriticalField + 0.5 - std::pow(h - 1.5, 2); }, 0.05,
                        0.0, 3.0, 31),
        line);
    ASSERT_EQ(cps.size(), 2u);
    EXPECT_NEAR(cps[0].h_c, 1.5 - std::sqrt(0.5), 1e-3);
    EXPECT_NEAR(cps[1].h_c, 1.5 + std::sqrt(0.5), 1e-3);
    EXPECT_TRUE(cps[0].fm_to_pm);
    EXPECT_FALSE(cps[1].fm_to_pm);
    EXPECT_EQ(cps[1].branch, 2);
    for (const auto& c : cps) {
        EXPECT_LE(c.h_lo, c.h_c);
        EXPECT_GE(c.h_hi, c.h_c);
    }
}

TEST(PhaseDiagram, ExactSmallSystem) {
    const int L = 3;
    const auto line = linear_line();
    auto spec = [](double h) {
        return std::make_shared<const ed::Spectrum>(ed::diagonalize(build_lattice(L), {1.0, h}, true));
    };
    const auto initial_spec = spec(1.0);
    InitialFactory initial = [&](double T_i) { return quench::exact_estimates(*initial_spec, T_i); };
    quench::EvaluatorFactory evaluators = [&](double h_f) { return quench::ed_evaluator(spec(h_f)); };
    const std::vector<double> T_i{0.5, 1.0}, h_f{0.5, 1.0, 2.0, 3.0};
    const auto d = phase_diagram(L, 1.0, 1.0, T_i, h_f, line, initial, evaluators);
    ASSERT_EQ(d.cells.size(), T_i.size() * h_f.size());
    for (const auto& c : d.cells) {
        ASSERT_TRUE(c.phase.has_value()) << c.error;
        EXPECT_EQ(*c.phase, c.T_f < line.T_c(c.h_f) ? Phase::FM : Phase::PM);
    }
    // h_f = h_i is the identity quench
    EXPECT_NEAR(d.cells[1].T_f, 0.5, 1e-6);

    const auto csv = parse_csv(phase_diagram_csv(d));
    EXPECT_EQ(csv.rows.size(), d.cells.size());
    EXPECT_EQ(parse_csv(phase_boundary_csv(d)).columns.front(), "schema_version");
    EXPECT_EQ(phase_diagram_json(d).at("cells").size(), d.cells.size());

    const std::vector<double> too_cold{0.2};
    EXPECT_THROW(phase_diagram(L, 1.0, 1.0, too_cold, h_f, line, initial, evaluators), InvalidArgument);
}

TEST(FssFit, RecoversSyntheticParameters) {
    const double sigma = 0.01;
    const auto pts = fss_data(2.0, 1.5, 1.0, sigma, 12345);
    const auto fit = fss_fit(pts);
    EXPECT_TRUE(fit.accepted);
    EXPECT_NEAR(fit.a, 2.0, 3 * fit.sigma_a());
    EXPECT_NEAR(fit.b, 1.5, 3 * fit.sigma_b());
    EXPECT_NEAR(fit.c, 1.0, 3 * fit.sigma_c());
    EXPECT_LT(fit.rmse, 2 * sigma);
    EXPECT_GT(fit.rmse, 0.0);
}

TEST(FssFit, ExactDataAndOptimality) {
    const auto pts = fss_data(-0.8, 1.0, 1.4, 0.0, 1);
    const auto fit = fss_fit(pts);
    EXPECT_NEAR(fit.a, -0.8, 1e-8);
    EXPECT_NEAR(fit.b, 1.0, 1e-8);
    EXPECT_NEAR(fit.c, 1.4, 1e-8);

    // Weighted chi^2 gradient vanishes at a noisy optimum.
    const auto noisy = fss_data(2.0, 1.5, 1.0, 0.01, 99);
    const auto f = fss_fit(noisy);
    double g[3] = {0, 0, 0};
    for (const auto& p : noisy) {
        const double Lb = std::pow(p.L, -f.b);
        const double r = (f.a * Lb + f.c - p.T_f) / p.sigma;
        g[0] += 2 * r * Lb / p.sigma;
        g[1] += 2 * r * (-f.a * Lb * std::log(p.L)) / p.sigma;
        g[2] += 2 * r / p.sigma;
    }
    for (double gi : g) EXPECT_LT(std::abs(gi), 1e-6);
}

TEST(FssFit, ConstantDataFlagsExponent) {
    std::vector<FssPoint> pts;
    for (int L : {4, 6, 8, 12}) pts.push_back({L, 1.25, 0.01});
    const auto fit = fss_fit(pts);
    EXPECT_FALSE(fit.b_identifiable);
    EXPECT_FALSE(fit.accepted);
    EXPECT_NEAR(fit.c + fit.a * std::pow(8, -fit.b), 1.25, 1e-8);
    EXPECT_TRUE(std::isinf(fit.sigma_b()));
    EXPECT_TRUE(std::isfinite(fit.sigma_c()));
    EXPECT_EQ(fss_json(fit).at("sigma_b"), "inf");
}

TEST(FssFit, NeedsFourSizes) {
    std::vector<FssPoint> pts{{4, 1.0, 0.1}, {6, 1.1, 0.1}, {8, 1.2, 0.1}, {8, 1.21, 0.1}};
    EXPECT_THROW(fss_fit(pts), InvalidArgument);
    pts.push_back({12, 1.3, 0.1});
    const auto fit = fss_fit(pts);
    EXPECT_EQ(parse_csv(fss_csv(fit, pts)).rows.size(), pts.size());
}
