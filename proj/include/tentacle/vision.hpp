#pragma once
/**
 * @file   vision.hpp
 * @brief  Synthetic silhouettes of the tentacle and midline extraction.
 *
 * Image coordinates: column c grows to the right, row r grows downwards.
 * A pixel center (c, r) maps to ((c - origin_x) scale, (r - origin_y) scale)
 * in millimetres, so the straight tentacle hangs down the image rows.
 */

#include "tentacle/shape_fit.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace tentacle
{
    struct ImageSpec
    {
        int width = 801;
        int height = 701;
        double scale_mm_per_px = 0.5;
        double origin_x = 400.0; ///< root column
        double origin_y = 200.0; ///< root row

        void validate () const;
    };

    struct GrayImage
    {
        ImageSpec spec;
        std::vector<std::uint8_t> pixels; ///< row-major

        [[nodiscard]] std::uint8_t at (int c, int r) const { return pixels[static_cast<std::size_t> (r) * spec.width + c]; }
        void validate () const;
    };

    struct BinaryMask
    {
        ImageSpec spec;
        std::vector<std::uint8_t> data; ///< 1 = foreground

        [[nodiscard]] bool at (int c, int r) const
        {
            return c >= 0 && r >= 0 && c < spec.width && r < spec.height &&
                   data[static_cast<std::size_t> (r) * spec.width + c] != 0;
        }
        [[nodiscard]] std::size_t area () const;
    };

    /// Dark band (root diameter tapering linearly to 25% at the tip, butt
    /// ends) on a light background with a one-pixel anti-aliasing ramp.
    /// Throws DomainError naming the first sample that leaves the frame.
    [[nodiscard]] GrayImage render_silhouette (CurvatureState q, const TentacleGeometry &geom, const ImageSpec &spec);

    /// Between-class-variance threshold; foreground is `value < threshold`.
    /// Throws DomainError for a single-intensity image.
    [[nodiscard]] int otsu_threshold (const GrayImage &img);

    /// threshold in [1, 255], or automatic when empty. Throws DomainError on an
    /// empty foreground.
    [[nodiscard]] BinaryMask binarize (const GrayImage &img, std::optional<int> threshold = std::nullopt);

    /**
     * Midline as the mean of the two band boundaries.
     *
     * Scan lines start along the image rows at the root and are kept
     * perpendicular to the tracked axis, so the band may bend away from the
     * row direction. Gaps of up to two scan steps are bridged. Throws
     * DomainError for several components, a band gap above two rows, or a
     * mask that does not reach the root row.
     */
    [[nodiscard]] Centerline extract_midline (const BinaryMask &mask, int n_samples);

    /// Linear interpolation at n uniform arc-length stations.
    [[nodiscard]] Polyline resample_uniform (const Polyline &pts, int n);

    /// Binary P5 with the scale and origin in a header comment.
    void write_pgm (std::ostream &os, const GrayImage &img);
    /// Reads P5 or P2. Scale and origin come from the header comment when present.
    [[nodiscard]] GrayImage read_pgm (std::istream &is, const ImageSpec &fallback = {});

    /// CSV `s,x_mm,y_mm`.
    void write_midline_csv (std::ostream &os, const Centerline &cl);

} // namespace tentacle
