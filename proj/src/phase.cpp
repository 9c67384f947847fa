#include "tfim/phase.hpp"

#include <algorithm>
#include <math.h> // pchip calls isnan unqualified
#include <boost/math/interpolators/pchip.hpp>
#include <limits>

#include "tfim/csv.hpp"
#include "tfim/errors.hpp"
#include "tfim/parallel.hpp"

namespace tfim::phase {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double lerp_at(const std::vector<double>& x, const std::vector<double>& y, double at) {
    if (at <= x.front()) return y.front();
    if (at >= x.back()) return y.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), at) - x.begin());
    const double t = (at - x[k - 1]) / (x[k] - x[k - 1]);
    return y[k - 1] + t * (y[k] - y[k - 1]);
}

// All roots of f on [lo, hi] located on an n-point grid and refined by bisection.
std::vector<double> roots_of(const std::function<double(double)>& f, double lo, double hi, int n = 2001) {
    std::vector<double> roots;
    double x0 = lo, f0 = f(lo);
    if (f0 == 0.0) roots.push_back(lo);
    for (int k = 1; k < n; ++k) {
        const double x1 = lo + (hi - lo) * k / (n - 1);
        const double f1 = f(x1);
        if (f1 == 0.0) {
            roots.push_back(x1);
        } else if (f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
            double a = x0, b = x1, fa = f0;
            for (int it = 0; it < 80 && b - a > 1e-14 * std::max(1.0, std::abs(a)); ++it) {
                const double m = 0.5 * (a + b);
                const double fm = f(m);
                if ((fm < 0.0) == (fa < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    return roots;
}

} // namespace

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.size() != y_.size() || x_.size() < 2) throw InvalidArgument("interpolation needs at least two points");
    for (std::size_t i = 1; i < x_.size(); ++i)
        if (!(x_[i] > x_[i - 1])) throw InvalidArgument("interpolation abscissae must be strictly increasing");
    if (x_.size() >= 4) {
        auto xs = x_;
        auto ys = y_;
        boost::math::interpolators::pchip<std::vector<double>> p(std::move(xs), std::move(ys));
        impl_ = [p, lo = x_.front(), hi = x_.back()](double at) { return p(std::clamp(at, lo, hi)); };
    } else {
        impl_ = [x = x_, y = y_](double at) { return lerp_at(x, y, at); };
    }
}

double MonotoneCubic::operator()(double x) const { return impl_(x); }

// ---- Binder crossings -------------------------------------------------------

BinderEvaluator qmc_binder_evaluator(double h, const quench::QmcSettings& settings, quench::EvaluationCache& cache) {
    return [h, settings, &cache](int L, double T) {
        return cache.run(settings.config(L, h, T, quench::Precision::full)).at(qmc::Estimator::binder_U);
    };
}

CrossingResult binder_crossing_Tc(double h, int L_small, int L_large, double T_lo, double T_hi,
                                  const BinderEvaluator& evaluator, const CrossingOptions& options) {
    if (!(L_small < L_large)) throw InvalidArgument("binder crossing needs L_small < L_large");
    if (!(0.0 < T_lo && T_lo < T_hi)) throw InvalidArgument("binder crossing needs 0 < T_lo < T_hi");
    if (options.n_scan < 2) throw InvalidArgument("binder crossing needs at least two scan points");

    CrossingResult res;
    res.h = h;
    auto eval = [&](double T) {
        const auto us = evaluator(L_small, T);
        const auto ul = evaluator(L_large, T);
        CrossingScanPoint p{T, us.mean, ul.mean, ul.mean - us.mean, std::hypot(us.error, ul.error)};
        res.scan.push_back(p);
        return p;
    };
    auto sign = [&](const CrossingScanPoint& p) {
        if (p.D > options.significance * p.dD) return 1;
        if (p.D < -options.significance * p.dD) return -1;
        return 0;
    };

    std::optional<CrossingScanPoint> a, b;
    for (int shift = 0; shift <= options.max_range_shifts && !b; ++shift) {
        std::vector<CrossingScanPoint> pts;
        for (int k = 0; k < options.n_scan; ++k) pts.push_back(eval(T_lo + (T_hi - T_lo) * k / (options.n_scan - 1)));
        int first_neg = -1;
        for (int k = 0; k < options.n_scan && first_neg < 0; ++k)
            if (sign(pts[static_cast<std::size_t>(k)]) < 0) first_neg = k;
        int last_pos = -1;
        for (int k = 0; k < (first_neg < 0 ? options.n_scan : first_neg); ++k)
            if (sign(pts[static_cast<std::size_t>(k)]) > 0) last_pos = k;
        const bool any_pos = std::any_of(pts.begin(), pts.end(), [&](auto& p) { return sign(p) > 0; });
        if (first_neg >= 0 && last_pos >= 0) {
            a = pts[static_cast<std::size_t>(last_pos)];
            b = pts[static_cast<std::size_t>(first_neg)];
        } else if (first_neg < 0 && any_pos) {
            const double w = T_hi - T_lo; // still ordered: move up
            T_lo = T_hi;
            T_hi += w;
        } else if (first_neg >= 0 && !any_pos) {
            const double w = T_hi - T_lo; // already disordered: move down
            T_hi = T_lo;
            T_lo = std::max(T_lo - w, 0.5 * T_lo);
        } else {
            break;
        }
    }
    if (!b) {
        res.diagnostics = "no significant sign change of U(L=" + std::to_string(L_large) + ") - U(L=" +
                          std::to_string(L_small) + ") at h=" + format_number(h) + " over " +
                          std::to_string(res.scan.size()) + " scan points";
        return res;
    }

    CrossingScanPoint lo = *a, hi = *b, mid = lo;
    bool consistent = false;
    for (int step = 0; step < options.max_steps; ++step) {
        mid = eval(0.5 * (lo.T + hi.T));
        if (std::abs(mid.D) <= mid.dD) {
            consistent = true;
            break;
        }
        (mid.D > 0.0 ? lo : hi) = mid;
        if (hi.T - lo.T < options.relative_tolerance * mid.T) break;
    }
    const double slope = (hi.D - lo.D) / (hi.T - lo.T);
    const double statistical = slope != 0.0 ? mid.dD / std::abs(slope) : 0.0;
    res.found = true;
    res.T_c = mid.T;
    // a midpoint consistent with D = 0 pins T_c to the statistical width;
    // otherwise the final interval adds to it
    res.dT_c = consistent ? statistical : std::hypot(statistical, 0.5 * (hi.T - lo.T));
    return res;
}

// ---- Critical line ---------------------------------------------------------

CriticalLine::CriticalLine(std::vector<LinePoint> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw InvalidArgument("critical line needs at least two points");
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (!(points_[i].h > points_[i - 1].h)) throw InvalidArgument("critical line fields must be strictly increasing");
        if (!(points_[i].T_c < points_[i - 1].T_c))
            throw DataQualityError("critical line is not strictly decreasing between h=" + format_number(points_[i - 1].h) +
                                   " and h=" + format_number(points_[i].h));
    }
    std::vector<double> h, T;
    for (const auto& p : points_) {
        h.push_back(p.h);
        T.push_back(p.T_c);
    }
    curve_ = std::make_shared<MonotoneCubic>(std::move(h), std::move(T));
}

double CriticalLine::T_c(double h) const {
    if (h >= points_.back().h) return points_.back().T_c;
    return (*curve_)(std::max(h, points_.front().h));
}

double CriticalLine::uncertainty(double h) const {
    std::vector<double> x, s;
    for (const auto& p : points_) {
        x.push_back(p.h);
        s.push_back(p.dT_c);
    }
    return lerp_at(x, s, h);
}

std::vector<LinePoint> enforce_decreasing(std::vector<LinePoint> points) {
    // Points with zero uncertainty (the anchors) dominate any block they join.
    struct Block {
        bool exact;
        double w, wh, wT;
        double h() const { return wh / w; }
        double T() const { return wT / w; }
    };
    auto make = [](const LinePoint& p) {
        const bool exact = p.dT_c == 0.0;
        const double w = exact ? 1.0 : 1.0 / (p.dT_c * p.dT_c);
        return Block{exact, w, w * p.h, w * p.T_c};
    };
    std::vector<Block> blocks;
    for (const auto& p : points) {
        blocks.push_back(make(p));
        while (blocks.size() > 1 && blocks.back().T() >= blocks[blocks.size() - 2].T()) {
            const Block last = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            if (last.exact && !prev.exact) {
                prev = last;
            } else if (last.exact == prev.exact) {
                prev = {prev.exact, prev.w + last.w, prev.wh + last.wh, prev.wT + last.wT};
            }
        }
    }
    std::vector<LinePoint> out;
    for (const auto& b : blocks) out.push_back({b.h(), b.T(), b.exact ? 0.0 : 1.0 / std::sqrt(b.w)});
    return out;
}

std::pair<double, double> crossing_window(double h) {
    const double r = std::clamp(h / kQuantumCriticalField, 0.0, 0.99);
    const double guess = kClassicalTc * std::sqrt(1.0 - r * r);
    return {std::max(0.6 * guess, 0.05), 1.4 * guess};
}

CriticalLine build_critical_line(std::span<const double> h_grid, int L_small, int L_large,
                                 const std::function<BinderEvaluator(double h)>& factory, const LineOptions& options) {
    for (double h : h_grid)
        if (!(h >= 0.0 && h <= 3.0)) throw InvalidArgument("critical line fields must lie in [0, 3]");
    std::vector<CrossingResult> crossings(h_grid.size());
    parallel_for(h_grid.size(), options.threads, [&](std::size_t i) {
        const auto [lo, hi] = crossing_window(h_grid[i]);
        crossings[i] = binder_crossing_Tc(h_grid[i], L_small, L_large, lo, hi, factory(h_grid[i]), options.crossing);
    });

    std::vector<LinePoint> pts{{0.0, kClassicalTc, 0.0}};
    std::vector<const CrossingResult*> used;
    for (const auto& c : crossings)
        if (c.found && c.h > 0.0 && c.h < kQuantumCriticalField) used.push_back(&c);
    std::sort(used.begin(), used.end(), [](auto* x, auto* y) { return x->h < y->h; });
    for (auto* c : used) pts.push_back({c->h, c->T_c, c->dT_c});
    pts.push_back({kQuantumCriticalField, 0.0, 0.0});

    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double rise = pts[i].T_c - pts[i - 1].T_c;
        if (rise >= 0.0 && rise > pts[i].dT_c + pts[i - 1].dT_c)
            throw DataQualityError("critical temperature rises from " + format_number(pts[i - 1].T_c) + " at h=" +
                                   format_number(pts[i - 1].h) + " to " + format_number(pts[i].T_c) + " at h=" +
                                   format_number(pts[i].h) + " beyond the joint uncertainty");
    }
    CriticalLine line(enforce_decreasing(std::move(pts)));
    line.crossings = std::move(crossings);
    return line;
}

std::string critical_line_csv(const CriticalLine& line) {
    CsvTable t({"schema_version", "h", "T_c", "dT_c", "kind"});
    for (const auto& p : line.points()) {
        const bool anchor = p.dT_c == 0.0 && (p.h == 0.0 || p.h == kQuantumCriticalField);
        t.row({std::to_string(kCsvSchemaVersion), format_number(p.h), format_number(p.T_c), format_number(p.dT_c),
               anchor ? "anchor" : "crossing"});
    }
    return t.str();
}

nlohmann::json critical_line_json(const CriticalLine& line) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : line.points()) pts.push_back({{"h", p.h}, {"T_c", p.T_c}, {"dT_c", p.dT_c}});
    nlohmann::json cr = nlohmann::json::array();
    for (const auto& c : line.crossings) {
        nlohmann::json scan = nlohmann::json::array();
        for (const auto& s : c.scan)
            scan.push_back({{"T", s.T}, {"U_small", s.U_small}, {"U_large", s.U_large}, {"D", s.D}, {"dD", s.dD}});
        cr.push_back({{"h", c.h}, {"found", c.found}, {"T_c", c.T_c}, {"dT_c", c.dT_c}, {"diagnostics", c.diagnostics},
                      {"scan", std::move(scan)}});
    }
    return {{"interpolation", "pchip"}, {"points", std::move(pts)}, {"crossings", std::move(cr)}};
}

CriticalLine critical_line_from_json(const nlohmann::json& j) {
    std::vector<LinePoint> pts;
    for (const auto& p : j.at("points")) pts.push_back({p.at("h"), p.at("T_c"), p.at("dT_c")});
    return CriticalLine(std::move(pts));
}

std::string_view name(Phase p) {
    switch (p) {
    case Phase::FM: return "FM";
    case Phase::PM: return "PM";
    case Phase::boundary: return "boundary";
    }
    return "?";
}

Phase classify(const ThermalPoint& point, const CriticalLine& line) {
    if (point.h >= line.points().back().h) return point.T > line.uncertainty(point.h) ? Phase::PM : Phase::boundary;
    const double Tc = line.T_c(point.h);
    const double band = line.uncertainty(point.h);
    if (point.T < Tc - band) return Phase::FM;
    if (point.T > Tc + band) return Phase::PM;
    return Phase::boundary;
}

// ---- Dynamical critical points --------------------------------------------

std::vector<DynamicalCriticalPoint> dynamical_critical_points(const quench::TfCurve& curve, const CriticalLine& line) {
    std::vector<double> h, tf, lo, hi;
    for (const auto& p : curve.points) {
        if (!p.result) continue;
        h.push_back(p.h_f);
        tf.push_back(p.result->T_f);
        lo.push_back(p.result->T_lo);
        hi.push_back(p.result->T_hi);
    }
    std::vector<DynamicalCriticalPoint> out;
    if (h.size() < 2) return out;
    const MonotoneCubic f_mid(h, tf), f_lo(h, lo), f_hi(h, hi);
    auto D = [&](const MonotoneCubic& f) { return [&](double x) { return f(x) - line.T_c(x); }; };
    const double a = h.front(), b = h.back();
    const auto centre = roots_of(D(f_mid), a, b);
    const auto lo_roots = roots_of(D(f_lo), a, b);
    const auto hi_roots = roots_of(D(f_hi), a, b);
    const double step = (b - a) * 1e-6;
    int branch = 0;
    for (double r : centre) {
        DynamicalCriticalPoint p;
        p.h_c = r;
        p.branch = ++branch;
        const double before = D(f_mid)(std::max(a, r - step)), after = D(f_mid)(std::min(b, r + step));
        p.fm_to_pm = before < after;
        // the lower T_f bound crosses on the PM side, the upper on the FM side
        const auto& left = p.fm_to_pm ? hi_roots : lo_roots;
        const auto& right = p.fm_to_pm ? lo_roots : hi_roots;
        p.h_lo = a;
        for (double x : left)
            if (x <= r) p.h_lo = x;
        p.h_hi = b;
        for (auto it = right.rbegin(); it != right.rend(); ++it)
            if (*it >= r) p.h_hi = *it;
        out.push_back(p);
    }
    return out;
}

// ---- Phase diagram ---------------------------------------------------------

DynamicalPhaseDiagram phase_diagram(int L, double J, double h_i, std::span<const double> T_i_grid,
                                    std::span<const double> h_f_grid, const CriticalLine& line,
                                    const InitialFactory& initial, const quench::EvaluatorFactory& evaluators,
                                    const DiagramOptions& options) {
    for (double T : T_i_grid)
        if (T < 1.0 / L - 1e-12) throw InvalidArgument("phase diagram T_i " + format_number(T) + " is below 1/L");
    DynamicalPhaseDiagram d;
    d.L = L;
    d.h_i = h_i;
    d.T_i_grid.assign(T_i_grid.begin(), T_i_grid.end());
    d.h_f_grid.assign(h_f_grid.begin(), h_f_grid.end());
    for (double T_i : T_i_grid) {
        quench::TfCurve curve;
        try {
            curve = quench::tf_curve(L, J, h_i, T_i, initial(T_i), h_f_grid, evaluators, options.curve);
        } catch (const std::exception& e) {
            curve.L = L;
            curve.h_i = h_i;
            curve.T_i = T_i;
            for (double h_f : h_f_grid) curve.points.push_back({h_f, std::nullopt, e.what(), false, false});
        }
        for (const auto& p : curve.points) {
            PhaseCell cell{T_i, p.h_f, std::nullopt, kNaN, p.error};
            if (p.result) {
                cell.T_f = p.result->T_f;
                cell.phase = classify({p.h_f, p.result->T_f}, line);
            }
            d.cells.push_back(cell);
        }
        d.critical_points.push_back(dynamical_critical_points(curve, line));
        d.curves.push_back(std::move(curve));
    }
    return d;
}

std::string phase_diagram_csv(const DynamicalPhaseDiagram& d) {
    CsvTable t({"schema_version", "T_i", "h_f", "T_f", "T_lo", "T_hi", "cooling_flag", "phase", "status"});
    std::size_t k = 0;
    for (const auto& curve : d.curves) {
        for (const auto& p : curve.points) {
            const auto& cell = d.cells[k++];
            const auto* r = p.result ? &*p.result : nullptr;
            t.row({std::to_string(kCsvSchemaVersion), format_number(curve.T_i), format_number(p.h_f),
                   format_number(r ? r->T_f : kNaN), format_number(r ? r->T_lo : kNaN),
                   format_number(r ? r->T_hi : kNaN), p.cooling ? "1" : "0",
                   cell.phase ? std::string(name(*cell.phase)) : "", r ? "ok" : "error: " + p.error});
        }
    }
    return t.str();
}

std::string phase_boundary_csv(const DynamicalPhaseDiagram& d) {
    CsvTable t({"schema_version", "T_i", "branch", "h_c", "h_lo", "h_hi", "direction"});
    for (std::size_t i = 0; i < d.critical_points.size(); ++i)
        for (const auto& c : d.critical_points[i])
            t.row({std::to_string(kCsvSchemaVersion), format_number(d.T_i_grid[i]), std::to_string(c.branch),
                   format_number(c.h_c), format_number(c.h_lo), format_number(c.h_hi),
                   c.fm_to_pm ? "FM_to_PM" : "PM_to_FM"});
    return t.str();
}

nlohmann::json phase_diagram_json(const DynamicalPhaseDiagram& d) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : d.cells) {
        nlohmann::json j{{"T_i", c.T_i}, {"h_f", c.h_f}};
        if (c.phase) {
            j["phase"] = name(*c.phase);
            j["T_f"] = c.T_f;
        } else {
            j["error"] = c.error;
        }
        cells.push_back(std::move(j));
    }
    nlohmann::json boundary = nlohmann::json::array();
    for (std::size_t i = 0; i < d.critical_points.size(); ++i)
        for (const auto& c : d.critical_points[i])
            boundary.push_back({{"T_i", d.T_i_grid[i]}, {"branch", c.branch}, {"h_c", c.h_c}, {"h_lo", c.h_lo},
                                {"h_hi", c.h_hi}, {"fm_to_pm", c.fm_to_pm}});
    return {{"L", d.L}, {"h_i", d.h_i}, {"T_i_grid", d.T_i_grid}, {"h_f_grid", d.h_f_grid},
            {"cells", std::move(cells)}, {"boundary", std::move(boundary)}};
}

} // namespace tfim::phase
