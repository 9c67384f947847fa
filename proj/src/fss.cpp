#include <Eigen/Dense>
#include <limits>
#include <set>
#include <sstream>
#include <unsupported/Eigen/NonLinearOptimization>

#include "tfim/csv.hpp"
#include "tfim/errors.hpp"
#include "tfim/phase.hpp"

namespace tfim::phase {

namespace {

// Weighted residuals (a L^-b + c - T_f) / sigma.
struct Residuals {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    std::span<const FssPoint> pts;

    int inputs() const { return 3; }
    int values() const { return static_cast<int>(pts.size()); }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& p = pts[i];
            f[static_cast<Eigen::Index>(i)] = (x[0] * std::pow(p.L, -x[1]) + x[2] - p.T_f) / p.sigma;
        }
        return 0;
    }

    int df(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& p = pts[i];
            const auto r = static_cast<Eigen::Index>(i);
            const double Lb = std::pow(p.L, -x[1]);
            J(r, 0) = Lb / p.sigma;
            J(r, 1) = -x[0] * Lb * std::log(p.L) / p.sigma;
            J(r, 2) = 1.0 / p.sigma;
        }
        return 0;
    }
};

// a and c by weighted linear least squares at fixed b.
Eigen::VectorXd linear_start(std::span<const FssPoint> pts, double b) {
    Eigen::MatrixXd A(pts.size(), 2);
    Eigen::VectorXd y(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        A(r, 0) = std::pow(pts[i].L, -b) / pts[i].sigma;
        A(r, 1) = 1.0 / pts[i].sigma;
        y[r] = pts[i].T_f / pts[i].sigma;
    }
    const Eigen::Vector2d ac = A.colPivHouseholderQr().solve(y);
    Eigen::VectorXd x(3);
    x << ac[0], b, ac[1];
    return x;
}

bool converged(int status) {
    using namespace Eigen::LevenbergMarquardtSpace;
    switch (status) {
    case RelativeReductionTooSmall:
    case RelativeErrorTooSmall:
    case RelativeErrorAndReductionTooSmall:
    case CosinusTooSmall:
    case FtolTooSmall:
    case XtolTooSmall:
    case GtolTooSmall: return true;
    default: return false;
    }
}

} // namespace

FssFit fss_fit(std::span<const FssPoint> points) {
    std::set<int> sizes;
    for (const auto& p : points) {
        if (p.L <= 0 || !(p.sigma > 0.0) || !std::isfinite(p.T_f))
            throw InvalidArgument("fss points need L > 0, sigma > 0 and finite T_f");
        sizes.insert(p.L);
    }
    if (sizes.size() < 4) throw InvalidArgument("fss fit needs at least 4 distinct system sizes");

    const Residuals fn{points};
    std::ostringstream trace;
    std::optional<FssFit> best;
    Eigen::VectorXd best_x;
    for (double b0 : {0.5, 1.0, 2.0}) {
        Eigen::VectorXd x = linear_start(points, b0);
        Residuals functor = fn;
        Eigen::LevenbergMarquardt<Residuals> lm(functor);
        lm.parameters.ftol = 1e-14;
        lm.parameters.xtol = 1e-14;
        lm.parameters.maxfev = 2000;
        int status = lm.minimizeInit(x);
        int iterations = 0;
        if (status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters) {
            do {
                status = lm.minimizeOneStep(x);
                ++iterations;
            } while (status == Eigen::LevenbergMarquardtSpace::Running && iterations < 200);
        }
        Eigen::VectorXd f(points.size());
        fn(x, f);
        const double chi2 = f.squaredNorm();
        trace << "start b=" << b0 << ": status " << status << " after " << iterations << " iterations, a=" << x[0]
              << " b=" << x[1] << " c=" << x[2] << " chi2=" << chi2 << '\n';
        if (!converged(status) || !x.allFinite() || !std::isfinite(chi2)) continue;
        if (!best || chi2 < best->chi2) {
            best = FssFit{};
            best->a = x[0];
            best->b = x[1];
            best->c = x[2];
            best->chi2 = chi2;
            best->iterations = iterations;
            best_x = x;
        }
    }
    if (!best) throw FitFailure("no start of the finite-size fit converged", trace.str());

    FssFit& fit = *best;
    Eigen::MatrixXd J(points.size(), 3);
    fn.df(best_x, J);
    const Eigen::Matrix3d JtJ = J.transpose() * J;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(JtJ);
    const auto s = svd.singularValues();
    const double inf = std::numeric_limits<double>::infinity();
    fit.b_identifiable = s[2] > 1e-10 * s[0];
    if (fit.b_identifiable) {
        const Eigen::Matrix3d cov = JtJ.inverse();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) fit.covariance[i][j] = cov(i, j);
    } else {
        // a ~ 0 leaves b undetermined; (a, c) are still constrained at fixed b.
        Eigen::Matrix2d sub;
        sub << JtJ(0, 0), JtJ(0, 2), JtJ(2, 0), JtJ(2, 2);
        const Eigen::Matrix2d cov = sub.inverse();
        fit.covariance = {};
        fit.covariance[0][0] = cov(0, 0);
        fit.covariance[0][2] = fit.covariance[2][0] = cov(0, 1);
        fit.covariance[2][2] = cov(1, 1);
        fit.covariance[1][1] = inf;
    }
    double sq = 0.0;
    for (const auto& p : points) {
        const double r = fit.a * std::pow(p.L, -fit.b) + fit.c - p.T_f;
        sq += r * r;
    }
    fit.rmse = std::sqrt(sq / static_cast<double>(points.size()));
    fit.accepted = fit.b_identifiable && fit.b > 0.0;
    return fit;
}

std::string fss_csv(const FssFit& fit, std::span<const FssPoint> points) {
    CsvTable t({"schema_version", "L", "T_f", "sigma", "T_f_fit", "residual"});
    for (const auto& p : points) {
        const double model = fit.a * std::pow(p.L, -fit.b) + fit.c;
        t.row({std::to_string(kCsvSchemaVersion), std::to_string(p.L), format_number(p.T_f), format_number(p.sigma),
               format_number(model), format_number(p.T_f - model)});
    }
    return t.str();
}

nlohmann::json fss_json(const FssFit& fit) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_number(v)); };
    nlohmann::json cov = nlohmann::json::array();
    for (const auto& row : fit.covariance) {
        nlohmann::json r = nlohmann::json::array();
        for (double v : row) r.push_back(num(v));
        cov.push_back(std::move(r));
    }
    return {{"model", "T_f(L) = a L^-b + c"},
            {"a", fit.a},
            {"b", fit.b},
            {"c", fit.c},
            {"sigma_a", num(fit.sigma_a())},
            {"sigma_b", num(fit.sigma_b())},
            {"sigma_c", num(fit.sigma_c())},
            {"covariance", std::move(cov)},
            {"rmse", fit.rmse},
            {"chi2", fit.chi2},
            {"iterations", fit.iterations},
            {"b_identifiable", fit.b_identifiable},
            {"accepted", fit.accepted}};
}

} // namespace tfim::phase
