#include "tentacle/vision.hpp"

#include "tentacle/csv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace tentacle
{
    namespace
    {
        constexpr double kBackground = 230.0;
        constexpr double kForeground = 30.0;
        constexpr double kTipWidthRatio = 0.25;
        constexpr int kMaxGap = 2;
        constexpr double kSubStep = 0.25;
        constexpr int kSmoothHalf = 4;
        constexpr int kDecimate = 3;
        constexpr double kTipCut = 0.8;

        struct Vec
        {
            double x = 0.0, y = 0.0;
        };

        Vec operator+ (Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
        Vec operator- (Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
        Vec operator* (double k, Vec a) { return {k * a.x, k * a.y}; }
        double dot (Vec a, Vec b) { return a.x * b.x + a.y * b.y; }
        double cross (Vec a, Vec b) { return a.x * b.y - a.y * b.x; }
        double norm (Vec a) { return std::hypot (a.x, a.y); }

        bool sample (const BinaryMask &m, Vec p)
        {
            return m.at (static_cast<int> (std::lround (p.x)), static_cast<int> (std::lround (p.y)));
        }

        // Distance walked from p along dir while staying inside, up to limit.
        double extent (const BinaryMask &m, Vec p, Vec dir, double limit)
        {
            double k = 0.0;
            while (k + kSubStep <= limit && sample (m, p + (k + kSubStep) * dir))
                k += kSubStep;
            return k + 0.5 * kSubStep;
        }

        // 4-connectivity plus vertical bridges over gaps of up to kMaxGap rows.
        std::vector<int> label_components (const BinaryMask &m, int &count)
        {
            const int W = m.spec.width, H = m.spec.height;
            std::vector<int> label (m.data.size (), -1);
            count = 0;
            std::deque<std::pair<int, int>> queue;
            std::vector<std::pair<int, int>> steps{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
            for (int g = 2; g <= kMaxGap + 1; ++g)
            {
                steps.emplace_back (0, g);
                steps.emplace_back (0, -g);
            }
            for (int r = 0; r < H; ++r)
                for (int c = 0; c < W; ++c)
                {
                    const auto idx = static_cast<std::size_t> (r) * W + c;
                    if (!m.data[idx] || label[idx] >= 0)
                        continue;
                    label[idx] = count;
                    queue.emplace_back (c, r);
                    while (!queue.empty ())
                    {
                        const auto [cc, rr] = queue.front ();
                        queue.pop_front ();
                        for (const auto &[dc, dr] : steps)
                        {
                            const int nc = cc + dc, nr = rr + dr;
                            if (!m.at (nc, nr))
                                continue;
                            const auto j = static_cast<std::size_t> (nr) * W + nc;
                            if (label[j] < 0)
                            {
                                label[j] = count;
                                queue.emplace_back (nc, nr);
                            }
                        }
                    }
                    ++count;
                }
            return label;
        }

        void check_single_component (const BinaryMask &m)
        {
            int count = 0;
            const auto label = label_components (m, count);
            if (count <= 1)
                return;
            const int W = m.spec.width;
            std::vector<int> cmin (count, std::numeric_limits<int>::max ()), cmax (count, -1);
            for (std::size_t i = 0; i < label.size (); ++i)
                if (label[i] >= 0)
                {
                    const int c = static_cast<int> (i % W);
                    cmin[label[i]] = std::min (cmin[label[i]], c);
                    cmax[label[i]] = std::max (cmax[label[i]], c);
                }
            for (int a = 0; a < count; ++a)
                for (int b = a + 1; b < count; ++b)
                    if (cmin[a] <= cmax[b] && cmin[b] <= cmax[a])
                        throw DomainError ("band is discontinuous: a gap of more than 2 rows separates its parts");
            throw DomainError ("mask has " + std::to_string (count) + " separate foreground components");
        }
    } // namespace

    void ImageSpec::validate () const
    {
        if (width < 16 || height < 16)
            throw DomainError ("image must be at least 16 x 16 pixels");
        if (!(scale_mm_per_px > 0.0) || !std::isfinite (scale_mm_per_px))
            throw DomainError ("image scale must be positive");
        if (!(origin_x >= 0.0 && origin_x <= width - 1 && origin_y >= 0.0 && origin_y <= height - 1))
            throw DomainError ("root origin must lie inside the image");
    }

    void GrayImage::validate () const
    {
        spec.validate ();
        if (pixels.size () != static_cast<std::size_t> (spec.width) * spec.height)
            throw DomainError ("pixel buffer size does not match the image dimensions");
    }

    std::size_t BinaryMask::area () const { return static_cast<std::size_t> (std::count (data.begin (), data.end (), 1)); }

    GrayImage render_silhouette (CurvatureState q, const TentacleGeometry &geom, const ImageSpec &spec)
    {
        geom.validate ();
        spec.validate ();
        const double sc = spec.scale_mm_per_px;
        const int n = std::max (geom.n_samples, static_cast<int> (std::ceil (geom.length_mm / sc)) + 1);
        TentacleGeometry dense = geom;
        dense.n_samples = n;
        const auto mm = sample_centerline (q, dense);

        std::vector<Vec> p (n);
        std::vector<double> hw (n);
        for (int i = 0; i < n; ++i)
        {
            const double s = static_cast<double> (i) / (n - 1);
            p[i] = {spec.origin_x + mm[i].x / sc, spec.origin_y + mm[i].y / sc};
            hw[i] = 0.5 * geom.root_diameter_mm * (1.0 - (1.0 - kTipWidthRatio) * s) / sc;
            if (p[i].x - hw[i] < 0.0 || p[i].x + hw[i] > spec.width - 1 || p[i].y - hw[i] < 0.0 ||
                p[i].y + hw[i] > spec.height - 1)
            {
                std::ostringstream msg;
                msg << "configuration leaves the frame at sample " << i << " (s=" << s << ", x=" << mm[i].x
                    << " mm, y=" << mm[i].y << " mm)";
                throw DomainError (msg.str ());
            }
        }

        // Signed outside distance in pixels, minimum over all segments.
        std::vector<double> e (static_cast<std::size_t> (spec.width) * spec.height,
                               std::numeric_limits<double>::infinity ());
        const Vec t_root = (1.0 / norm (p[1] - p[0])) * (p[1] - p[0]);
        const Vec t_tip = (1.0 / norm (p[n - 1] - p[n - 2])) * (p[n - 1] - p[n - 2]);
        const double step_px = geom.length_mm / sc / (n - 1);
        for (int j = 0; j + 1 < n; ++j)
        {
            const Vec a = p[j], b = p[j + 1];
            const bool near_root = j * step_px < hw[0] + 2.0;
            const bool near_tip = (n - 2 - j) * step_px < hw[n - 1] + 2.0;
            const double len = norm (b - a);
            const Vec t = (1.0 / len) * (b - a);
            const double pad = std::max (hw[j], hw[j + 1]) + 2.0;
            const int c0 = std::max (0, static_cast<int> (std::floor (std::min (a.x, b.x) - pad)));
            const int c1 = std::min (spec.width - 1, static_cast<int> (std::ceil (std::max (a.x, b.x) + pad)));
            const int r0 = std::max (0, static_cast<int> (std::floor (std::min (a.y, b.y) - pad)));
            const int r1 = std::min (spec.height - 1, static_cast<int> (std::ceil (std::max (a.y, b.y) + pad)));
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c)
                {
                    const Vec d = Vec{static_cast<double> (c), static_cast<double> (r)} - a;
                    const double u = dot (d, t);
                    double ej;
                    if (j == 0 && u < 0.0)
                        ej = std::max (std::abs (cross (t, d)) - hw[0], -u);
                    else if (j + 2 == n && u > len)
                        ej = std::max (std::abs (cross (t, d)) - hw[n - 1], u - len);
                    else
                    {
                        const double uc = std::clamp (u, 0.0, len);
                        const double w = hw[j] + (hw[j + 1] - hw[j]) * uc / len;
                        ej = norm (d - uc * t) - w;
                    }
                    // Joints near the ends would round off the butt caps.
                    if (near_root)
                        ej = std::max (ej, -dot (Vec{static_cast<double> (c), static_cast<double> (r)} - p[0], t_root));
                    if (near_tip)
                        ej = std::max (ej, dot (Vec{static_cast<double> (c), static_cast<double> (r)} - p[n - 1], t_tip));
                    auto &slot = e[static_cast<std::size_t> (r) * spec.width + c];
                    slot = std::min (slot, ej);
                }
        }

        GrayImage img;
        img.spec = spec;
        img.pixels.resize (e.size ());
        for (std::size_t i = 0; i < e.size (); ++i)
        {
            const double cover = std::clamp (0.5 - e[i], 0.0, 1.0);
            img.pixels[i] = static_cast<std::uint8_t> (std::lround (kBackground - cover * (kBackground - kForeground)));
        }
        return img;
    }

    int otsu_threshold (const GrayImage &img)
    {
        img.validate ();
        std::array<double, 256> hist{};
        for (auto v : img.pixels)
            hist[v] += 1.0;
        const double total = static_cast<double> (img.pixels.size ());
        double sum_all = 0.0;
        for (int v = 0; v < 256; ++v)
            sum_all += v * hist[v];
        double w0 = 0.0, sum0 = 0.0, best = -1.0;
        int best_t = -1;
        for (int t = 0; t < 255; ++t)
        {
            w0 += hist[t];
            sum0 += t * hist[t];
            const double w1 = total - w0;
            if (w0 == 0.0 || w1 == 0.0)
                continue;
            const double m0 = sum0 / w0;
            const double m1 = (sum_all - sum0) / w1;
            const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
            if (between > best)
            {
                best = between;
                best_t = t;
            }
        }
        if (best_t < 0)
            throw DomainError ("image has a single intensity; no foreground can be separated");
        return best_t + 1;
    }

    BinaryMask binarize (const GrayImage &img, std::optional<int> threshold)
    {
        img.validate ();
        int t = 0;
        if (threshold)
        {
            if (*threshold < 1 || *threshold > 255)
                throw DomainError ("threshold must lie in [1, 255]");
            t = *threshold;
        }
        else
            t = otsu_threshold (img);
        BinaryMask m;
        m.spec = img.spec;
        m.data.resize (img.pixels.size ());
        for (std::size_t i = 0; i < img.pixels.size (); ++i)
            m.data[i] = img.pixels[i] < t ? 1 : 0;
        if (m.area () == 0)
            throw DomainError ("binarized image has no foreground");
        return m;
    }

    Polyline resample_uniform (const Polyline &pts, int n)
    {
        if (pts.size () < 2 || n < 2)
            throw DomainError ("resampling needs at least 2 input and 2 output points");
        std::vector<double> cum (pts.size (), 0.0);
        for (std::size_t i = 1; i < pts.size (); ++i)
            cum[i] = cum[i - 1] + std::hypot (pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
        const double total = cum.back ();
        if (!(total > 0.0))
            throw DomainError ("cannot resample a polyline of zero length");
        Polyline out (n);
        std::size_t j = 0;
        for (int k = 0; k < n; ++k)
        {
            const double target = total * k / (n - 1);
            while (j + 2 < pts.size () && cum[j + 1] < target)
                ++j;
            const double seg = cum[j + 1] - cum[j];
            const double w = seg > 0.0 ? std::clamp ((target - cum[j]) / seg, 0.0, 1.0) : 0.0;
            out[k] = {pts[j].x + w * (pts[j + 1].x - pts[j].x), pts[j].y + w * (pts[j + 1].y - pts[j].y)};
        }
        out.front () = pts.front ();
        out.back () = pts.back ();
        return out;
    }

    Centerline extract_midline (const BinaryMask &mask, int n_samples)
    {
        mask.spec.validate ();
        if (mask.data.size () != static_cast<std::size_t> (mask.spec.width) * mask.spec.height)
            throw DomainError ("mask size does not match the image dimensions");
        if (n_samples < 4)
            throw DomainError ("midline needs at least 4 samples");
        if (mask.area () == 0)
            throw DomainError ("mask is empty");
        check_single_component (mask);

        const Vec root{mask.spec.origin_x, mask.spec.origin_y};
        if (!sample (mask, root) && !sample (mask, root + Vec{0, 1}) && !sample (mask, root - Vec{0, 1}))
            throw DomainError ("foreground does not reach the root row");

        std::vector<Vec> mid{root};
        std::vector<double> widths{std::numeric_limits<double>::infinity ()};
        Vec m = root;
        Vec dir{0.0, 1.0};
        double limit = 0.5 * std::max (mask.spec.width, mask.spec.height);
        int gap = 0;
        const int max_steps = 4 * (mask.spec.width + mask.spec.height);
        for (int step = 0; step < max_steps; ++step)
        {
            const Vec p = m + dir;
            const Vec nrm{-dir.y, dir.x};
            std::optional<Vec> seed;
            for (double k = 0.0; k <= limit && !seed; k += 0.5)
            {
                if (sample (mask, p + k * nrm))
                    seed = p + k * nrm;
                else if (k > 0.0 && sample (mask, p - k * nrm))
                    seed = p - k * nrm;
            }
            if (!seed)
            {
                if (++gap > kMaxGap)
                    break;
                m = p;
                continue;
            }
            gap = 0;
            const double plus = extent (mask, *seed, nrm, 2.0 * limit);
            const double minus = extent (mask, *seed, -1.0 * nrm, 2.0 * limit);
            const Vec c = *seed + (0.5 * (plus - minus)) * nrm;
            const double width = plus + minus;
            limit = 0.65 * width + 2.0;
            mid.push_back (c);
            widths.push_back (width);
            m = c;
            const Vec back = mid[mid.size () > 5 ? mid.size () - 5 : 0];
            const Vec d = c - back;
            if (norm (d) > 0.0)
                dir = (1.0 / norm (d)) * d;
            if (c.x < 0.0 || c.y < 0.0 || c.x > mask.spec.width - 1 || c.y > mask.spec.height - 1)
                break;
        }
        if (mid.size () < 4)
            throw DomainError ("midline tracking found fewer than 4 scan lines");
        // Oblique scans across the butt tip only clip a corner of the band.
        while (mid.size () > 8 && widths.back () < kTipCut * widths[widths.size () - 5])
        {
            mid.pop_back ();
            widths.pop_back ();
        }
        {
            const Vec last = mid.back ();
            const Vec d = last - mid[mid.size () - 5];
            const Vec t = (1.0 / norm (d)) * d;
            mid.push_back (last + extent (mask, last, t, 2.0 * limit) * t);
        }

        // Scan-line centers jitter by up to a pixel; a centered moving
        // average (shrinking at the ends) keeps that out of the arc length.
        std::vector<Vec> smooth (mid.size ());
        const int count = static_cast<int> (mid.size ());
        for (int i = 0; i < count; ++i)
        {
            const int h = std::min ({kSmoothHalf, i, count - 1 - i});
            Vec acc;
            for (int k = i - h; k <= i + h; ++k)
                acc = acc + mid[k];
            smooth[i] = (1.0 / (2 * h + 1)) * acc;
        }
        std::vector<Vec> kept;
        for (int i = 0; i < count; i += kDecimate)
            kept.push_back (smooth[i]);
        if ((count - 1) % kDecimate != 0)
            kept.push_back (smooth.back ());

        const double sc = mask.spec.scale_mm_per_px;
        Polyline pts;
        pts.reserve (kept.size ());
        for (const auto &v : kept)
        {
            const Point2 q{(v.x - root.x) * sc, (v.y - root.y) * sc};
            if (pts.empty () || q.x != pts.back ().x || q.y != pts.back ().y)
                pts.push_back (q);
        }
        return Centerline (resample_uniform (pts, n_samples));
    }

    void write_pgm (std::ostream &os, const GrayImage &img)
    {
        img.validate ();
        os << "P5\n# scale_mm_per_px=" << csv::format (img.spec.scale_mm_per_px)
           << " origin_x=" << csv::format (img.spec.origin_x) << " origin_y=" << csv::format (img.spec.origin_y)
           << "\n"
           << img.spec.width << ' ' << img.spec.height << "\n255\n";
        os.write (reinterpret_cast<const char *> (img.pixels.data ()), static_cast<std::streamsize> (img.pixels.size ()));
    }

    GrayImage read_pgm (std::istream &is, const ImageSpec &fallback)
    {
        GrayImage img;
        img.spec = fallback;
        std::string magic;
        is >> magic;
        if (magic != "P5" && magic != "P2")
            throw DomainError ("not a PGM image (expected P5 or P2)");
        auto next_token = [&] () {
            std::string tok;
            while (is >> std::ws && is.peek () == '#')
            {
                std::string line;
                std::getline (is, line);
                std::istringstream kv (line.substr (1));
                std::string item;
                while (kv >> item)
                {
                    const auto eq = item.find ('=');
                    if (eq == std::string::npos)
                        continue;
                    const auto key = item.substr (0, eq);
                    const double v = std::stod (item.substr (eq + 1));
                    if (key == "scale_mm_per_px")
                        img.spec.scale_mm_per_px = v;
                    else if (key == "origin_x")
                        img.spec.origin_x = v;
                    else if (key == "origin_y")
                        img.spec.origin_y = v;
                }
            }
            if (!(is >> tok))
                throw DomainError ("truncated PGM header");
            return tok;
        };
        try
        {
            img.spec.width = std::stoi (next_token ());
            img.spec.height = std::stoi (next_token ());
            const int maxval = std::stoi (next_token ());
            if (maxval != 255)
                throw DomainError ("only 8-bit PGM images are supported");
        }
        catch (const std::invalid_argument &)
        {
            throw DomainError ("malformed PGM header");
        }
        const auto count = static_cast<std::size_t> (img.spec.width) * img.spec.height;
        img.pixels.resize (count);
        if (magic == "P5")
        {
            is.get ();
            is.read (reinterpret_cast<char *> (img.pixels.data ()), static_cast<std::streamsize> (count));
            if (static_cast<std::size_t> (is.gcount ()) != count)
                throw DomainError ("truncated PGM pixel data");
        }
        else
            for (auto &px : img.pixels)
            {
                int v = 0;
                if (!(is >> v) || v < 0 || v > 255)
                    throw DomainError ("malformed P2 pixel data");
                px = static_cast<std::uint8_t> (v);
            }
        img.validate ();
        return img;
    }

    void write_midline_csv (std::ostream &os, const Centerline &cl)
    {
        csv::Writer w (os, {"s", "x_mm", "y_mm"});
        for (std::size_t i = 0; i < cl.size (); ++i)
        {
            w << cl.arc_param (i) << cl.points ()[i].x << cl.points ()[i].y;
            w.end_row ();
        }
    }

} // namespace tentacle
