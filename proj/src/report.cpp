#include "tentacle/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace tentacle
{
    namespace
    {
        constexpr double kWidth = 640.0;
        constexpr double kHeight = 420.0;
        constexpr double kLeft = 70.0;
        constexpr double kRight = 150.0;
        constexpr double kTop = 40.0;
        constexpr double kBottom = 55.0;
        const char *const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

        std::string num (double v)
        {
            char buf[32];
            std::snprintf (buf, sizeof buf, "%.2f", std::abs (v) < 0.005 ? 0.0 : v);
            return buf;
        }

        std::string tick_label (double v, double step)
        {
            const int digits = std::clamp (static_cast<int> (std::ceil (-std::log10 (step))), 0, 6);
            char buf[32];
            std::snprintf (buf, sizeof buf, "%.*f", digits, std::abs (v) < step * 1e-9 ? 0.0 : v);
            return buf;
        }

        double nice_step (double span)
        {
            if (!(span > 0.0))
                return 1.0;
            const double raw = span / 5.0;
            const double mag = std::pow (10.0, std::floor (std::log10 (raw)));
            const double f = raw / mag;
            return (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0) * mag;
        }

        struct Frame
        {
            double x0, x1, y0, y1;

            [[nodiscard]] double px (double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
            [[nodiscard]] double py (double y) const
            {
                return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
            }
        };

        void pad_range (double &lo, double &hi)
        {
            if (!(hi > lo))
            {
                lo -= 0.5;
                hi += 0.5;
            }
            const double m = 0.04 * (hi - lo);
            lo -= m;
            hi += m;
        }

        void open_svg (std::ostringstream &os, const std::string &title, const std::string &stamp)
        {
            os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num (kWidth) << "\" height=\"" << num (kHeight)
               << "\" viewBox=\"0 0 " << num (kWidth) << ' ' << num (kHeight) << "\" font-family=\"sans-serif\">\n";
            os << "<title>" << xml_escape (title) << "</title>\n";
            if (!stamp.empty ())
                os << "<desc>" << xml_escape (stamp) << "</desc>\n";
            os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
            os << "<text x=\"" << num (kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
               << xml_escape (title) << "</text>\n";
        }

        void axes (std::ostringstream &os, const Frame &f, const std::string &xlabel, const std::string &ylabel)
        {
            const double xl = kLeft, xr = kWidth - kRight, yt = kTop, yb = kHeight - kBottom;
            os << "<rect x=\"" << num (xl) << "\" y=\"" << num (yt) << "\" width=\"" << num (xr - xl) << "\" height=\""
               << num (yb - yt) << "\" fill=\"none\" stroke=\"#444\"/>\n";
            const double sx = nice_step (f.x1 - f.x0);
            for (double v = std::ceil (f.x0 / sx) * sx; v <= f.x1 + 1e-12; v += sx)
            {
                const double p = f.px (v);
                os << "<line x1=\"" << num (p) << "\" y1=\"" << num (yb) << "\" x2=\"" << num (p) << "\" y2=\""
                   << num (yb + 5) << "\" stroke=\"#444\"/>\n";
                os << "<text x=\"" << num (p) << "\" y=\"" << num (yb + 18) << "\" text-anchor=\"middle\" font-size=\"11\">"
                   << tick_label (v, sx) << "</text>\n";
            }
            const double sy = nice_step (f.y1 - f.y0);
            for (double v = std::ceil (f.y0 / sy) * sy; v <= f.y1 + 1e-12; v += sy)
            {
                const double p = f.py (v);
                os << "<line x1=\"" << num (xl - 5) << "\" y1=\"" << num (p) << "\" x2=\"" << num (xl) << "\" y2=\""
                   << num (p) << "\" stroke=\"#444\"/>\n";
                os << "<text x=\"" << num (xl - 8) << "\" y=\"" << num (p + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
                   << tick_label (v, sy) << "</text>\n";
            }
            os << "<text x=\"" << num ((xl + xr) / 2) << "\" y=\"" << num (kHeight - 12)
               << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape (xlabel) << "</text>\n";
            os << "<text transform=\"translate(16," << num ((yt + yb) / 2)
               << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape (ylabel) << "</text>\n";
        }

        void legend (std::ostringstream &os, std::span<const std::string> labels, std::span<const std::string> dashes)
        {
            for (std::size_t i = 0; i < labels.size (); ++i)
            {
                const double y = kTop + 12 + 18.0 * static_cast<double> (i);
                const double x = kWidth - kRight + 12;
                os << "<line x1=\"" << num (x) << "\" y1=\"" << num (y) << "\" x2=\"" << num (x + 22) << "\" y2=\""
                   << num (y) << "\" stroke=\"" << kPalette[i % 7] << "\" stroke-width=\"2\"" << dashes[i] << "/>\n";
                os << "<text x=\"" << num (x + 28) << "\" y=\"" << num (y + 4) << "\" font-size=\"11\">"
                   << xml_escape (labels[i]) << "</text>\n";
            }
        }

        void polyline (std::ostringstream &os, const Frame &f, std::span<const double> x, std::span<const double> y,
                       const char *color, const std::string &extra)
        {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"" << extra << " points=\"";
            for (std::size_t i = 0; i < x.size (); ++i)
                os << (i ? " " : "") << num (f.px (x[i])) << ',' << num (f.py (y[i]));
            os << "\"/>\n";
        }
    } // namespace

    std::string xml_escape (const std::string &s)
    {
        std::string out;
        for (char c : s)
            switch (c)
            {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
            }
        return out;
    }

    std::string svg_line_plot (const std::string &title, const std::string &xlabel, const std::string &ylabel,
                               std::span<const Series> series, const std::string &stamp)
    {
        double x0 = std::numeric_limits<double>::infinity (), x1 = -x0, y0 = x0, y1 = -x0;
        for (const auto &s : series)
            for (std::size_t i = 0; i < std::min (s.x.size (), s.y.size ()); ++i)
                if (std::isfinite (s.x[i]) && std::isfinite (s.y[i]))
                {
                    x0 = std::min (x0, s.x[i]);
                    x1 = std::max (x1, s.x[i]);
                    y0 = std::min (y0, s.y[i]);
                    y1 = std::max (y1, s.y[i]);
                }
        if (!std::isfinite (x0))
            x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
        pad_range (y0, y1);
        if (!(x1 > x0))
            pad_range (x0, x1);
        const Frame f{x0, x1, y0, y1};

        std::ostringstream os;
        open_svg (os, title, stamp);
        axes (os, f, xlabel, ylabel);
        std::vector<std::string> labels, dashes;
        for (std::size_t k = 0; k < series.size (); ++k)
        {
            const auto n = std::min (series[k].x.size (), series[k].y.size ());
            polyline (os, f, std::span (series[k].x).first (n), std::span (series[k].y).first (n), kPalette[k % 7], "");
            for (std::size_t i = 0; i < n; ++i)
                os << "<circle cx=\"" << num (f.px (series[k].x[i])) << "\" cy=\"" << num (f.py (series[k].y[i]))
                   << "\" r=\"2.5\" fill=\"" << kPalette[k % 7] << "\"/>\n";
            labels.push_back (series[k].label);
            dashes.emplace_back ();
        }
        legend (os, labels, dashes);
        os << "</svg>\n";
        return os.str ();
    }

    std::string svg_overlay (const std::string &title, std::span<const Polyline> truth,
                             std::span<const Polyline> predicted, const std::string &stamp)
    {
        double x0 = std::numeric_limits<double>::infinity (), x1 = -x0, y0 = x0, y1 = -x0;
        for (auto set : {truth, predicted})
            for (const auto &pl : set)
                for (const auto &p : pl)
                {
                    x0 = std::min (x0, p.x);
                    x1 = std::max (x1, p.x);
                    y0 = std::min (y0, -p.y);
                    y1 = std::max (y1, -p.y);
                }
        if (!std::isfinite (x0))
            x0 = -1.0, x1 = 1.0, y0 = -1.0, y1 = 1.0;
        pad_range (x0, x1);
        pad_range (y0, y1);
        // Equal scale: widen the shorter axis.
        const double w = kWidth - kLeft - kRight, h = kHeight - kTop - kBottom;
        const double scale = std::max ((x1 - x0) / w, (y1 - y0) / h);
        const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
        const Frame f{cx - 0.5 * scale * w, cx + 0.5 * scale * w, cy - 0.5 * scale * h, cy + 0.5 * scale * h};

        std::ostringstream os;
        open_svg (os, title, stamp);
        axes (os, f, "x (mm)", "-y (mm, downwards from the root)");
        for (std::size_t k = 0; k < std::max (truth.size (), predicted.size ()); ++k)
        {
            const char *color = kPalette[k % 7];
            for (int which = 0; which < 2; ++which)
            {
                const auto &set = which == 0 ? truth : predicted;
                if (k >= set.size ())
                    continue;
                std::vector<double> xs, ys;
                for (const auto &p : set[k])
                {
                    xs.push_back (p.x);
                    ys.push_back (-p.y);
                }
                polyline (os, f, xs, ys, color, which == 0 ? "" : " stroke-dasharray=\"6,4\"");
            }
        }
        const std::string labels[] = {"true", "reconstructed"};
        const std::string dashes[] = {"", " stroke-dasharray=\"6,4\""};
        legend (os, labels, dashes);
        os << "</svg>\n";
        return os.str ();
    }

    std::string svg_mode_snapshots (const std::string &title, std::span<const double> stations,
                                    const Eigen::VectorXcd &mode, int snapshots, const std::string &stamp)
    {
        std::vector<Series> series;
        for (int k = 0; k < snapshots; ++k)
        {
            const double phi = 2.0 * std::numbers::pi * k / snapshots;
            const std::complex<double> rot (std::cos (phi), std::sin (phi));
            Series s;
            s.label = "phase " + std::to_string (k * 360 / snapshots) + " deg";
            for (Eigen::Index i = 0; i < mode.size () && static_cast<std::size_t> (i) < stations.size (); ++i)
            {
                s.x.push_back (stations[static_cast<std::size_t> (i)]);
                s.y.push_back ((mode (i) * rot).real ());
            }
            series.push_back (std::move (s));
        }
        return svg_line_plot (title, "s (normalized arc length)", "Re(w exp(i phase))", series, stamp);
    }

    std::string html_report (const std::string &title, std::span<const ReportSection> sections,
                             const std::string &stamp)
    {
        std::ostringstream os;
        os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << xml_escape (title)
           << "</title>\n<style>body{font-family:sans-serif;max-width:1400px;margin:auto}"
              "figure{display:inline-block;margin:8px}table{border-collapse:collapse}"
              "td,th{border:1px solid #bbb;padding:3px 8px;text-align:right}</style></head><body>\n";
        os << "<h1>" << xml_escape (title) << "</h1>\n";
        if (!stamp.empty ())
            os << "<p><code>" << xml_escape (stamp) << "</code></p>\n";
        for (const auto &s : sections)
            os << "<h2>" << xml_escape (s.heading) << "</h2>\n" << s.body << '\n';
        os << "</body></html>\n";
        return os.str ();
    }

} // namespace tentacle
