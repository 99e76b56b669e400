#include "appp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace appp {

namespace {

std::string num(double v, int digits = 17) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

} // namespace

std::string coverage_csv_header() { return "metric,split,prior,mean,std,median,n\n"; }

std::string coverage_csv_row(const CoverageReport& r) {
    return to_string(r.direction) + "," + to_string(r.split) + "," + r.prior + "," + num(r.stats.mean) + "," +
           num(r.stats.std) + "," + num(r.stats.median) + "," + std::to_string(r.stats.n) + "\n";
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "epsilon,probability\n";
    for (const auto& p : curve) out += num(p.epsilon) + "," + num(p.probability) + "\n";
    return out;
}

std::string coverage_table_cell(const CoverageReport& r) {
    return fixed(r.stats.mean, 1) + "±" + fixed(r.stats.std, 1) + " (median " + fixed(r.stats.median, 1) + ")";
}

std::string interpolation_csv(const std::vector<InterpolationRecord>& records) {
    std::string out = "pair_id,steps,ratio,mean_delta\n";
    for (const auto& r : records) {
        double mean = 0.0;
        for (double d : r.delta) mean += d / static_cast<double>(r.delta.size());
        out += std::to_string(r.pair_id) + "," + std::to_string(r.steps) + "," + num(r.ratio) + "," + num(mean) + "\n";
    }
    return out;
}

std::string smoothness_csv(const SmoothnessReport& r) {
    std::string out = "metric,prior,mean,std,median,n\n";
    out += "ratio," + r.prior + "," + num(r.ratio_stats.mean) + "," + num(r.ratio_stats.std) + "," +
           num(r.ratio_stats.median) + "," + std::to_string(r.ratio_stats.n) + "\n";
    return out;
}

std::string normalized_curve_csv(const std::vector<double>& curve) {
    std::string out = "step,mean_normalized\n";
    for (std::size_t i = 0; i < curve.size(); ++i) out += std::to_string(i) + "," + num(curve[i]) + "\n";
    return out;
}

std::string svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series, bool scatter) {
    constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool any = false;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!any) {
                x0 = x1 = s.x[i];
                y0 = y1 = s.y[i];
                any = true;
            }
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<!-- data\n";
    for (const auto& s : series) {
        o << "series " << s.name << "\n";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) o << num(s.x[i]) << "," << num(s.y[i]) << "\n";
    }
    o << "-->\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    o << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << H / 2
      << ")\">" << y_label << "</text>\n";
    o << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"10\">" << num(x0, 4) << "</text>\n";
    o << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" font-size=\"10\" text-anchor=\"end\">" << num(x1, 4) << "</text>\n";
    o << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" font-size=\"10\" text-anchor=\"end\">" << num(y0, 4) << "</text>\n";
    o << "<text x=\"" << L - 4 << "\" y=\"" << T + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << num(y1, 4) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % 6];
        if (scatter) {
            for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                o << "<circle cx=\"" << num(px(s.x[i]), 6) << "\" cy=\"" << num(py(s.y[i]), 6) << "\" r=\"1.5\" fill=\"" << color
                  << "\" fill-opacity=\"0.5\"/>\n";
            }
        } else {
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                o << num(px(s.x[i]), 6) << "," << num(py(s.y[i]), 6) << " ";
            }
            o << "\"/>\n";
        }
        o << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" font-size=\"11\" text-anchor=\"end\" fill=\""
          << color << "\">" << s.name << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

} // namespace appp
