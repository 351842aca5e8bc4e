#include <doctest.h>

#include "tentacle/vision.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

using namespace tentacle;

namespace
{
    GrayImage blank (int w, int h, std::uint8_t v)
    {
        GrayImage img;
        img.spec.width = w;
        img.spec.height = h;
        img.spec.origin_x = (w - 1) / 2.0;
        img.spec.origin_y = 2.0;
        img.spec.scale_mm_per_px = 1.0;
        img.pixels.assign (static_cast<std::size_t> (w) * h, v);
        return img;
    }

    void fill (GrayImage &img, int c0, int c1, int r0, int r1, std::uint8_t v)
    {
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                img.pixels[static_cast<std::size_t> (r) * img.spec.width + c] = v;
    }

    double rms_to_truth (const Centerline &cl, CurvatureState q, const TentacleGeometry &g)
    {
        const auto &pts = cl.points ();
        std::vector<double> s;
        for (std::size_t i = 0; i < pts.size (); ++i)
            s.push_back (static_cast<double> (i) / static_cast<double> (pts.size () - 1));
        const auto truth = centerline_at (q, s, g.length_mm);
        double acc = 0.0;
        for (std::size_t i = 0; i < pts.size (); ++i)
            acc += std::pow (pts[i].x - truth[i].x, 2) + std::pow (pts[i].y - truth[i].y, 2);
        return std::sqrt (acc / static_cast<double> (pts.size ()));
    }
} // namespace

TEST_CASE ("straight silhouette is symmetric about the root column")
{
    const ImageSpec sp;
    const auto img = render_silhouette ({0.0, 0.0}, {}, sp);
    const int c0 = static_cast<int> (sp.origin_x);
    int worst = 0;
    for (int r = 0; r < sp.height; ++r)
        for (int d = 1; d <= c0; ++d)
            worst = std::max (worst, std::abs (img.at (c0 - d, r) - img.at (c0 + d, r)));
    CHECK (worst <= 1);
}

TEST_CASE ("opposite curvature gives mirror images")
{
    const ImageSpec sp;
    const auto a = render_silhouette ({1.0, 0.0}, {}, sp);
    const auto b = render_silhouette ({-1.0, 0.0}, {}, sp);
    const int c0 = static_cast<int> (sp.origin_x);
    int worst = 0;
    for (int r = 0; r < sp.height; ++r)
        for (int d = -c0; d <= c0; ++d)
            worst = std::max (worst, std::abs (a.at (c0 + d, r) - b.at (c0 - d, r)));
    CHECK (worst <= 1);

    double mass = 0.0, mx = 0.0;
    for (int r = 0; r < sp.height; ++r)
        for (int c = 0; c < sp.width; ++c)
        {
            const double m = 255.0 - a.at (c, r);
            mass += m;
            mx += m * (c - sp.origin_x);
        }
    CHECK (mx / mass < -5.0);
}

TEST_CASE ("out of frame configuration is rejected")
{
    ImageSpec sp;
    sp.width = 101;
    sp.origin_x = 50.0;
    CHECK_THROWS_AS ((void)render_silhouette ({2.5, 0.0}, {}, sp), DomainError);
}

TEST_CASE ("binarize")
{
    CHECK_THROWS_AS ((void)binarize (blank (32, 32, 255)), DomainError);
    CHECK_THROWS_AS ((void)binarize (blank (32, 32, 255), 100), DomainError);

    auto img = blank (40, 30, 200);
    fill (img, 5, 14, 3, 20, 50);
    fill (img, 30, 33, 10, 12, 50);
    const auto m = binarize (img);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 40; ++c)
            CHECK (m.at (c, r) == (img.at (c, r) == 50));
}

TEST_CASE ("silhouette area matches the tapered band")
{
    const TentacleGeometry g;
    const ImageSpec sp;
    const double band_px = g.root_diameter_mm * g.length_mm * (1.0 - 0.75 / 2.0) / (sp.scale_mm_per_px * sp.scale_mm_per_px);
    for (CurvatureState q : {CurvatureState{0.0, 0.0}, CurvatureState{0.8, -0.4}, CurvatureState{-1.5, 1.0}})
    {
        const auto m = binarize (render_silhouette (q, g, sp));
        CHECK (static_cast<double> (m.area ()) == doctest::Approx (band_px).epsilon (0.05));
    }
}

TEST_CASE ("vertical rectangle gives a straight midline")
{
    auto img = blank (61, 120, 230);
    fill (img, 25, 35, 2, 101, 20);
    const auto cl = extract_midline (binarize (img), 50);
    REQUIRE (cl.size () == 50);
    for (const auto &p : cl.points ())
        CHECK (std::abs (p.x) < 0.25);
    CHECK (std::abs (cl.points ().front ().y) < 1e-9);
    CHECK (std::abs (cl.points ().back ().y - 99.0) < 1.0);
}

TEST_CASE ("two blobs are rejected")
{
    auto img = blank (61, 120, 230);
    fill (img, 25, 35, 2, 60, 20);
    fill (img, 5, 10, 80, 100, 20);
    CHECK_THROWS_AS ((void)extract_midline (binarize (img), 50), DomainError);
}

TEST_CASE ("render and extract roundtrip")
{
    const TentacleGeometry g;
    const ImageSpec sp;
    const CurvatureState q{0.8, -0.4};
    const auto cl = extract_midline (binarize (render_silhouette (q, g, sp)), 200);
    CHECK (rms_to_truth (cl, q, g) < 2.0 * sp.scale_mm_per_px);
    const auto fit = fit_affine (cl, g.length_mm);
    CHECK (std::abs (fit.state.q1 - q.q1) < 0.08);
    CHECK (std::abs (fit.state.q2 - q.q2) < 0.08);
}

TEST_CASE ("brightness shift keeps the midline")
{
    const TentacleGeometry g;
    const ImageSpec sp;
    auto img = render_silhouette ({-0.6, 0.9}, g, sp);
    const auto base = extract_midline (binarize (img), 100);
    for (auto &p : img.pixels)
        p = static_cast<std::uint8_t> (std::max (0, p - 20));
    const auto shifted = extract_midline (binarize (img), 100);
    for (std::size_t i = 0; i < base.size (); ++i)
    {
        CHECK (shifted.points ()[i].x == doctest::Approx (base.points ()[i].x));
        CHECK (shifted.points ()[i].y == doctest::Approx (base.points ()[i].y));
    }
}

TEST_CASE ("pgm roundtrip")
{
    const ImageSpec sp;
    const auto img = render_silhouette ({0.3, 0.2}, {}, sp);
    std::stringstream ss;
    write_pgm (ss, img);
    const auto back = read_pgm (ss);
    CHECK (back.pixels == img.pixels);
    CHECK (back.spec.scale_mm_per_px == sp.scale_mm_per_px);
    CHECK (back.spec.origin_x == sp.origin_x);

    std::ostringstream p2;
    p2 << "P2\n# plain\n16 16\n255\n";
    for (int i = 0; i < 256; ++i)
        p2 << i << (i % 16 == 15 ? "\n" : " ");
    std::istringstream ascii (p2.str ());
    const auto a = read_pgm (ascii, ImageSpec{16, 16, 1.0, 0.0, 0.0});
    CHECK (a.spec.width == 16);
    CHECK (a.at (2, 1) == 18);

    std::istringstream junk ("P7\n1 1\n255\n");
    CHECK_THROWS ((void)read_pgm (junk));
}

TEST_CASE ("uniform resampling")
{
    const Polyline l{{0.0, 0.0}, {0.0, 1.0}, {0.0, 3.0}};
    const auto r = resample_uniform (l, 4);
    REQUIRE (r.size () == 4);
    CHECK (r[1].y == doctest::Approx (1.0));
    CHECK (r[2].y == doctest::Approx (2.0));
    CHECK (r[3].y == doctest::Approx (3.0));
}
