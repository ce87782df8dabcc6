#pragma once

// Minimal self-contained SVG line plots: enough for diagnostic figures
// (several named series, linear or log axes, legend) with no drawing
// dependency.  Output is deterministic for identical input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdrisk::svg {

namespace detail {

inline std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// Tick positions with a step snapped to 1/2/2.5/5 times a power of ten.
inline std::vector<double> linear_ticks(double lo, double hi, int target = 5) {
    std::vector<double> out;
    double span = hi - lo;
    if (!(span > 0.0)) return {lo};
    double raw = span / std::max(1, target - 1);
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = 10.0 * mag;
    for (double m : {1.0, 2.0, 2.5, 5.0})
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    double first = std::ceil(lo / step - 1e-9) * step;
    for (double v = first; v <= hi + 1e-9 * span; v += step) out.push_back(v);
    return out;
}

} // namespace detail

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string color;
};

class LinePlot {
public:
    LinePlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void log_x(bool on) { log_x_ = on; }
    void log_y(bool on) { log_y_ = on; }

    void add_series(std::string name, std::vector<double> x, std::vector<double> y,
                    std::string color = "") {
        if (x.size() != y.size())
            throw std::invalid_argument("LinePlot: x/y length mismatch for " + name);
        static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                        "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
        if (color.empty()) color = palette[series_.size() % 8];
        series_.push_back({std::move(name), std::move(x), std::move(y), std::move(color)});
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("LinePlot: cannot open " + path);
        out << render();
    }

    std::string render() const {
        const double W = 720, H = 480, ml = 72, mr = 24, mt = 40, mb = 56;
        // Transformed data ranges; log axes silently drop non-positive points.
        double xmin = inf(), xmax = -inf(), ymin = inf(), ymax = -inf();
        for (const auto& s : series_)
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                double xv = tx(s.x[k]), yv = ty(s.y[k]);
                if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
                xmin = std::min(xmin, xv), xmax = std::max(xmax, xv);
                ymin = std::min(ymin, yv), ymax = std::max(ymax, yv);
            }
        if (!(xmin <= xmax)) xmin = 0, xmax = 1, ymin = 0, ymax = 1; // nothing drawable
        pad(xmin, xmax);
        pad(ymin, ymax);
        auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
        auto sy = [&](double v) { return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb); };

        std::string b;
        b += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
             "viewBox=\"0 0 720 480\">\n";
        b += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
        b += "<g font-family=\"sans-serif\" font-size=\"12\">\n";

        for (double v : detail::linear_ticks(xmin, xmax)) {
            double px = sx(v);
            line(b, px, mt, px, H - mb, "#dddddd", 1);
            text(b, px, H - mb + 16, tick_label(v, log_x_), "middle");
        }
        for (double v : detail::linear_ticks(ymin, ymax)) {
            double py = sy(v);
            line(b, ml, py, W - mr, py, "#dddddd", 1);
            text(b, ml - 6, py + 4, tick_label(v, log_y_), "end");
        }
        line(b, ml, H - mb, W - mr, H - mb, "#333333", 1.5);
        line(b, ml, mt, ml, H - mb, "#333333", 1.5);

        for (const auto& s : series_) {
            std::string pts;
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                double xv = tx(s.x[k]), yv = ty(s.y[k]);
                if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
                pts += detail::fmt3(sx(xv)) + "," + detail::fmt3(sy(yv)) + " ";
            }
            if (pts.empty()) continue;
            b += "<polyline fill=\"none\" stroke=\"" + s.color +
                 "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                double xv = tx(s.x[k]), yv = ty(s.y[k]);
                if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
                b += "<circle cx=\"" + detail::fmt3(sx(xv)) + "\" cy=\"" +
                     detail::fmt3(sy(yv)) + "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
            }
        }

        double ly = mt + 14;
        for (const auto& s : series_) {
            double lx = W - mr - 170;
            line(b, lx, ly - 4, lx + 22, ly - 4, s.color, 2.5);
            text(b, lx + 28, ly, s.name, "start");
            ly += 17;
        }

        text(b, (ml + W - mr) / 2, 22, title_, "middle", 15);
        text(b, (ml + W - mr) / 2, H - 14, xlabel_, "middle");
        b += "<text x=\"18\" y=\"" + detail::fmt3((mt + H - mb) / 2) +
             "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
             detail::fmt3((mt + H - mb) / 2) + ")\">" + escape(ylabel_) + "</text>\n";
        b += "</g>\n</svg>\n";
        return b;
    }

private:
    static double inf() { return std::numeric_limits<double>::infinity(); }
    double tx(double v) const { return log_x_ ? std::log10(v) : v; }
    double ty(double v) const { return log_y_ ? std::log10(v) : v; }

    static void pad(double& lo, double& hi) {
        if (hi > lo) {
            double m = 0.04 * (hi - lo);
            lo -= m, hi += m;
        } else {
            double m = std::max(0.5, std::abs(lo) * 0.05);
            lo -= m, hi += m;
        }
    }

    std::string tick_label(double v, bool log_axis) const {
        return detail::fmt3(log_axis ? std::pow(10.0, v) : v);
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '&') out += "&amp;";
            else if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else out += c;
        }
        return out;
    }

    static void line(std::string& b, double x1, double y1, double x2, double y2,
                     const std::string& color, double width) {
        b += "<line x1=\"" + detail::fmt3(x1) + "\" y1=\"" + detail::fmt3(y1) + "\" x2=\"" +
             detail::fmt3(x2) + "\" y2=\"" + detail::fmt3(y2) + "\" stroke=\"" + color +
             "\" stroke-width=\"" + detail::fmt3(width) + "\"/>\n";
    }

    static void text(std::string& b, double x, double y, const std::string& s,
                     const std::string& anchor, int size = 12) {
        b += "<text x=\"" + detail::fmt3(x) + "\" y=\"" + detail::fmt3(y) +
             "\" text-anchor=\"" + anchor + "\"";
        if (size != 12) b += " font-size=\"" + std::to_string(size) + "\"";
        b += ">" + escape(s) + "</text>\n";
    }

    std::string title_, xlabel_, ylabel_;
    bool log_x_ = false, log_y_ = false;
    std::vector<Series> series_;
};

} // namespace hdrisk::svg
