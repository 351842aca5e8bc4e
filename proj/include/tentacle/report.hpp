#pragma once
/**
 * @file   report.hpp
 * @brief  Self-contained SVG plots and the HTML run summary.
 */

#include "tentacle/kinematics.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace tentacle
{
    struct Series
    {
        std::string label;
        std::vector<double> x;
        std::vector<double> y;
    };

    /// Line chart with axes, ticks and a legend. `stamp` goes into a <desc> element.
    [[nodiscard]] std::string svg_line_plot (const std::string &title, const std::string &xlabel,
                                             const std::string &ylabel, std::span<const Series> series,
                                             const std::string &stamp = {});

    /// Reconstructed (dashed) against true (solid) centerlines, equal axis scale.
    [[nodiscard]] std::string svg_overlay (const std::string &title, std::span<const Polyline> truth,
                                           std::span<const Polyline> predicted, const std::string &stamp = {});

    /// Snapshots Re(w exp(i phi)) of a complex mode over one period.
    [[nodiscard]] std::string svg_mode_snapshots (const std::string &title, std::span<const double> stations,
                                                  const Eigen::VectorXcd &mode, int snapshots = 8,
                                                  const std::string &stamp = {});

    struct ReportSection
    {
        std::string heading;
        std::string body; ///< raw HTML or inline SVG
    };

    [[nodiscard]] std::string html_report (const std::string &title, std::span<const ReportSection> sections,
                                           const std::string &stamp = {});

    /// Escapes &, <, > and quotes.
    [[nodiscard]] std::string xml_escape (const std::string &s);

} // namespace tentacle
