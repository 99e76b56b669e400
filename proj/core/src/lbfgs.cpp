#include "appp/latent_fit.hpp"

#include "appp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace appp {

void LbfgsConfig::validate() const {
    if (memory < 1) throw ConfigError("L-BFGS memory must be at least 1");
    if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) throw ConfigError("L-BFGS needs 0 < c1 < c2 < 1");
    if (max_line_search < 1) throw ConfigError("L-BFGS needs at least one line-search step");
}

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

void axpy(double a, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

enum class Mode { free, box, sphere };

struct Pair {
    Vec s, y;
};

struct Point {
    Vec x, g;
    double f = 0.0;
};

class Minimizer {
public:
    Minimizer(const ScalarFunction& f, const LbfgsConfig& c, const LatentSpace* space)
        : f_(f), c_(c), space_(space) {
        if (space != nullptr && space->kind == LatentKind::uniform) mode_ = Mode::box;
        if (space != nullptr && space->kind == LatentKind::spherical) mode_ = Mode::sphere;
    }

    LbfgsResult run(std::span<const double> x0) {
        LbfgsResult res;
        Point cur;
        cur.x.assign(x0.begin(), x0.end());
        if (mode_ != Mode::free && !LatentVector{cur.x, *space_}.satisfies_invariant()) {
            cur.x = project(*space_, cur.x).values;
        }
        evaluate(cur);
        if (!std::isfinite(cur.f)) {
            res.x = cur.x;
            res.loss = cur.f;
            res.stop_reason = "objective is not finite at the starting point";
            return res;
        }
        Vec pg = constrained_gradient(cur);
        res.trace.push_back({0, cur.f, norm(pg), 0.0, false});

        std::size_t it = 0;
        bool fallback_used = false;
        for (; it < c_.max_iterations; ++it) {
            if (norm(pg) < c_.gradient_tolerance) {
                res.converged = true;
                res.stop_reason = "gradient norm below tolerance";
                break;
            }
            if (mode_ == Mode::sphere) transport(cur.x);
            Vec d = direction(pg, cur);
            double slope = dot(pg, d);
            if (!(slope < 0.0)) {
                history_.clear();
                d = negated(pg);
                slope = -dot(pg, pg);
            }
            const double a0 = history_.empty() ? std::min(1.0, 1.0 / norm(pg)) : 1.0;
            Point next;
            double step = 0.0;
            bool projected = false;
            bool ok = search(cur, d, slope, a0, next, step, projected);
            if (!ok) {
                if (fallback_used) {
                    res.stop_reason = "line search failed after a steepest-descent retry";
                    break;
                }
                // One steepest-descent retry with fresh history.
                fallback_used = true;
                history_.clear();
                d = negated(pg);
                slope = -dot(pg, pg);
                ok = search(cur, d, slope, std::min(1.0, 1.0 / norm(pg)), next, step, projected);
                if (!ok) {
                    res.stop_reason = "line search failed after a steepest-descent retry";
                    break;
                }
            } else {
                fallback_used = false;
            }

            const Vec next_pg = constrained_gradient(next);
            update_history(cur, pg, next, next_pg, projected);
            const double prev_f = cur.f;
            cur = std::move(next);
            pg = next_pg;
            res.trace.push_back({it + 1, cur.f, norm(pg), step, projected});
            if (prev_f - cur.f <= function_tolerance * std::max(1.0, std::abs(prev_f))) {
                ++it;
                res.converged = true;
                res.stop_reason = "objective change below tolerance";
                break;
            }
        }
        if (res.stop_reason.empty()) {
            if (norm(pg) < c_.gradient_tolerance) {
                res.converged = true;
                res.stop_reason = "gradient norm below tolerance";
            } else {
                res.stop_reason = "iteration limit reached";
            }
        }
        res.x = cur.x;
        res.loss = cur.f;
        res.grad_norm = norm(pg);
        res.iterations = it;
        return res;
    }

private:
    static constexpr double function_tolerance = 1e-15;

    const ScalarFunction& f_;
    LbfgsConfig c_;
    const LatentSpace* space_;
    Mode mode_ = Mode::free;
    std::deque<Pair> history_;

    static Vec negated(const Vec& v) {
        Vec out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = -v[i];
        return out;
    }

    void evaluate(Point& p) const {
        p.g.assign(p.x.size(), 0.0);
        p.f = f_(p.x, p.g);
        if (!std::isfinite(p.f)) std::fill(p.g.begin(), p.g.end(), 0.0);
    }

    bool active(const Point& p, std::size_t i) const {
        return (p.x[i] >= 1.0 && p.g[i] < 0.0) || (p.x[i] <= -1.0 && p.g[i] > 0.0);
    }

    // Gradient restricted to the feasible directions: free components on the box, the tangent
    // component on the sphere.
    Vec constrained_gradient(const Point& p) const {
        Vec g = p.g;
        if (mode_ == Mode::box) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (active(p, i)) g[i] = 0.0;
            }
        } else if (mode_ == Mode::sphere) {
            axpy(-dot(g, p.x), p.x, g);
        }
        return g;
    }

    static void to_tangent(const Vec& x, Vec& v) { axpy(-dot(v, x), x, v); }

    // Vector transport by projection onto the tangent space at x; pairs that lose positive
    // curvature are dropped.
    void transport(const Vec& x) {
        std::deque<Pair> kept;
        for (auto& p : history_) {
            to_tangent(x, p.s);
            to_tangent(x, p.y);
            if (dot(p.s, p.y) > 1e-12 * norm(p.s) * norm(p.y)) kept.push_back(std::move(p));
        }
        history_ = std::move(kept);
    }

    Vec direction(const Vec& pg, const Point& cur) const {
        Vec q = pg;
        std::vector<double> alpha(history_.size());
        for (std::size_t i = history_.size(); i-- > 0;) {
            const auto& p = history_[i];
            alpha[i] = dot(p.s, q) / dot(p.s, p.y);
            axpy(-alpha[i], p.y, q);
        }
        if (!history_.empty()) {
            const auto& last = history_.back();
            const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
            for (double& v : q) v *= gamma;
        }
        for (std::size_t i = 0; i < history_.size(); ++i) {
            const auto& p = history_[i];
            const double beta = dot(p.y, q) / dot(p.s, p.y);
            axpy(alpha[i] - beta, p.s, q);
        }
        Vec d = negated(q);
        if (mode_ == Mode::box) {
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (active(cur, i)) d[i] = 0.0;
            }
        } else if (mode_ == Mode::sphere) {
            to_tangent(cur.x, d);
        }
        return d;
    }

    void update_history(const Point& cur, const Vec& pg, const Point& next, const Vec& next_pg, bool projected) {
        if (mode_ == Mode::box && projected) {
            history_.clear();
            return;
        }
        Pair p;
        p.s.resize(cur.x.size());
        for (std::size_t i = 0; i < p.s.size(); ++i) p.s[i] = next.x[i] - cur.x[i];
        if (mode_ == Mode::sphere) {
            to_tangent(next.x, p.s);
            Vec old_g = pg;
            to_tangent(next.x, old_g);
            p.y = next_pg;
            axpy(-1.0, old_g, p.y);
        } else {
            p.y = next.g;
            axpy(-1.0, cur.g, p.y);
        }
        const double sy = dot(p.s, p.y);
        if (!(sy > 1e-12 * norm(p.s) * norm(p.y))) return;
        history_.push_back(std::move(p));
        if (history_.size() > c_.memory) history_.pop_front();
    }

    // ---- line searches ------------------------------------------------------

    Point trial(const Point& cur, const Vec& d, double a, bool& projected) const {
        Point t;
        t.x = cur.x;
        axpy(a, d, t.x);
        projected = false;
        if (mode_ != Mode::free) {
            Vec raw = t.x;
            t.x = project(*space_, raw).values;
            double moved = 0.0;
            for (std::size_t i = 0; i < raw.size(); ++i) moved = std::max(moved, std::abs(raw[i] - t.x[i]));
            projected = moved > 1e-9;
        }
        evaluate(t);
        return t;
    }

    bool search(const Point& cur, const Vec& d, double slope, double a0, Point& out, double& step,
                bool& projected) const {
        if (mode_ == Mode::free) return wolfe(cur, d, slope, a0, out, step, projected);
        return armijo(cur, d, slope, a0, out, step, projected);
    }

    // Backtracking on the projected / retracted path with the sufficient-decrease test measured on
    // the actual displacement.
    bool armijo(const Point& cur, const Vec& d, double slope, double a0, Point& out, double& step,
                bool& projected) const {
        double a = a0;
        if (mode_ == Mode::sphere) {
            // The retraction cannot turn by more than a right angle; keep steps well inside it.
            const double dn = norm(d);
            if (a * dn > 1.0) a = 1.0 / dn;
        }
        for (std::size_t k = 0; k < c_.max_line_search; ++k) {
            bool proj = false;
            Point t = trial(cur, d, a, proj);
            double predicted = c_.c1 * a * slope;
            if (mode_ == Mode::box) {
                double gs = 0.0;
                for (std::size_t i = 0; i < t.x.size(); ++i) gs += cur.g[i] * (t.x[i] - cur.x[i]);
                predicted = c_.c1 * gs;
            }
            if (std::isfinite(t.f) && predicted < 0.0 && t.f <= cur.f + predicted) {
                out = std::move(t);
                step = a;
                projected = proj;
                return true;
            }
            a *= 0.5;
        }
        return false;
    }

    static double cubic_min(double a_lo, double f_lo, double d_lo, double a_hi, double f_hi, double d_hi) {
        const double d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi);
        const double disc = d1 * d1 - d_lo * d_hi;
        if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double d2 = std::copysign(std::sqrt(disc), a_hi - a_lo);
        return a_hi - (a_hi - a_lo) * (d_hi + d2 - d1) / (d_hi - d_lo + 2.0 * d2);
    }

    struct Sample {
        double a, f, slope;
        Point p;
    };

    Sample sample_at(const Point& cur, const Vec& d, double a) const {
        bool proj = false;
        Sample s{a, 0.0, 0.0, trial(cur, d, a, proj)};
        s.f = s.p.f;
        s.slope = dot(s.p.g, d);
        return s;
    }

    // Strong-Wolfe bracketing and zoom, then one secant refinement of the step along d. The secant
    // step is the exact minimizer on a quadratic, which gives finite termination there.
    bool wolfe(const Point& cur, const Vec& d, double slope, double a0, Point& out, double& step,
               bool& projected) const {
        projected = false;
        const double f0 = cur.f;
        auto armijo_ok = [&](const Sample& s) { return std::isfinite(s.f) && s.f <= f0 + c_.c1 * s.a * slope; };
        auto curvature_ok = [&](const Sample& s) { return std::abs(s.slope) <= -c_.c2 * slope; };

        Sample prev{0.0, f0, slope, cur};
        Sample accepted{};
        bool found = false;
        double a = a0;
        std::size_t evals = 0;
        auto zoom = [&](Sample lo, Sample hi) {
            while (evals < c_.max_line_search) {
                double aj = std::numeric_limits<double>::quiet_NaN();
                if (std::isfinite(hi.f)) aj = cubic_min(lo.a, lo.f, lo.slope, hi.a, hi.f, hi.slope);
                const double left = std::min(lo.a, hi.a);
                const double width = std::abs(hi.a - lo.a);
                if (!std::isfinite(aj) || aj < left + 0.1 * width || aj > left + 0.9 * width) {
                    aj = 0.5 * (lo.a + hi.a);
                }
                if (width <= 1e-16 * std::max(1.0, left)) break;
                Sample s = sample_at(cur, d, aj);
                ++evals;
                if (!armijo_ok(s) || s.f >= lo.f) {
                    hi = std::move(s);
                } else {
                    if (curvature_ok(s)) {
                        accepted = std::move(s);
                        found = true;
                        return;
                    }
                    if (s.slope * (hi.a - lo.a) >= 0.0) hi = lo;
                    lo = std::move(s);
                }
            }
            // Out of budget: settle for the best sufficient-decrease point seen.
            if (lo.a > 0.0) {
                accepted = std::move(lo);
                found = true;
            }
        };

        while (evals < c_.max_line_search) {
            Sample s = sample_at(cur, d, a);
            ++evals;
            if (!armijo_ok(s) || (prev.a > 0.0 && s.f >= prev.f)) {
                zoom(prev, s);
                break;
            }
            if (curvature_ok(s)) {
                accepted = std::move(s);
                found = true;
                break;
            }
            if (s.slope >= 0.0) {
                zoom(s, prev);
                break;
            }
            prev = std::move(s);
            a *= 2.0;
        }
        if (!found) return false;

        if (accepted.slope != slope && std::abs(accepted.slope) > 1e-12 * std::abs(slope)) {
            const double as = accepted.a * slope / (slope - accepted.slope);
            if (std::isfinite(as) && as > 0.0 && std::abs(as - accepted.a) > 1e-12 * accepted.a) {
                Sample s = sample_at(cur, d, as);
                if (armijo_ok(s) && s.f <= accepted.f) accepted = std::move(s);
            }
        }
        out = std::move(accepted.p);
        step = accepted.a;
        return true;
    }
};

} // namespace

LbfgsResult lbfgs_minimize(const ScalarFunction& f, std::span<const double> x0, const LbfgsConfig& config,
                           const LatentSpace* space) {
    config.validate();
    if (x0.empty()) throw ShapeError("lbfgs_minimize: empty starting point");
    if (space != nullptr && space->dim != x0.size()) throw ShapeError("lbfgs_minimize: x0 does not match the space");
    return Minimizer(f, config, space).run(x0);
}

std::string lbfgs_trace_csv(const std::vector<LbfgsIterate>& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,loss,grad_norm,step_len,projected\n";
    for (const auto& t : trace) {
        out << t.iter << "," << t.loss << "," << t.grad_norm << "," << t.step_len << "," << (t.projected ? 1 : 0)
            << "\n";
    }
    return out.str();
}

} // namespace appp
