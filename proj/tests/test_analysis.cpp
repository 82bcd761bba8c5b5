#include "mpoxrf/analysis.h"
#include "mpoxrf/error.h"
#include "oracles.h"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <tuple>
#include <vector>

using namespace mpoxrf;

namespace {

Image2D gaussian_image(std::uint32_t n, double pitch_um, double sigma_mm, double cx, double cy, double amp = 1.0) {
    Image2D img(n, n, pitch_um);
    const double p = pitch_um / 1000.0;
    for (std::uint32_t y = 0; y < n; ++y)
        for (std::uint32_t x = 0; x < n; ++x) {
            const double dx = (x - cx) * p, dy = (y - cy) * p;
            img.at(x, y) = amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_mm * sigma_mm));
        }
    return img;
}

Image2D random_image(std::uint32_t nx, std::uint32_t ny, std::uint64_t seed) {
    Image2D img(nx, ny, 55.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (auto &v : img.values) v = u(rng);
    return img;
}

PsfProfile profile_of(std::vector<double> x, std::vector<double> v) {
    PsfProfile p;
    p.positions_mm = std::move(x);
    p.intensities = std::move(v);
    return p;
}

AnalysisError::Kind analysis_kind(auto &&fn) {
    try {
        fn();
    } catch (const AnalysisError &e) {
        return e.kind();
    }
    FAIL("no AnalysisError");
    return AnalysisError::Kind::NoPeak;
}

SpectralImage random_cube(std::uint64_t seed) {
    DetectorSpec d;
    d.n_x = 6;
    d.n_y = 5;
    d.n_bins = 40;
    SpectralImage c = SpectralImage::empty_like(d);
    std::mt19937_64 rng(seed);
    for (auto &v : c.counts) v = rng() % 50;
    return c;
}

} // namespace

TEST_SUITE("analysis") {

TEST_CASE("flat-field correction") {
    const Image2D img = random_image(8, 6, 1);
    // Self-division leaves the flat's mean, which is 1 for a unit-mean flat.
    auto out = flat_field_correct(img, img);
    const double mean = img.sum() / static_cast<double>(img.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out.valid(i));
        CHECK(out.values[i] == doctest::Approx(mean));
    }
    Image2D unit = img;
    for (auto &v : unit.values) v /= mean;
    out = flat_field_correct(unit, unit);
    for (double v : out.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    const Image2D flat(8, 6, 55.0, 3.7);
    out = flat_field_correct(img, flat);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.values[i] == doctest::Approx(img.values[i]));

    Image2D holed = flat;
    holed.at(2, 3) = 0.0;
    out = flat_field_correct(img, holed);
    CHECK(!out.valid(3 * 8 + 2));
    CHECK(out.at(2, 3) == 0.0);
    CHECK(std::isfinite(out.sum()));

    CHECK(analysis_kind([&] { flat_field_correct(img, Image2D(6, 8, 55.0, 1.0)); }) ==
          AnalysisError::Kind::DimensionMismatch);
}

TEST_CASE("energy windows") {
    const SpectralImage c = random_cube(2);
    const auto full = energy_window(c, -100.0, 100.0).image;
    const auto total = full_window(c);
    CHECK(full.values == total.values);
    CHECK(full.pitch_um == c.pixel_pitch_um);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> e(-1.0, 11.0);
    for (int k = 0; k < 200; ++k) {
        double a = e(rng), b = e(rng), cc = e(rng);
        if (a > b) std::swap(a, b);
        if (b > cc) std::swap(b, cc);
        if (a > b) std::swap(a, b);
        if (!(a < b && b < cc)) continue;
        const auto ab = energy_window(c, a, b).image, bc = energy_window(c, b, cc).image;
        const auto ac = energy_window(c, a, cc).image;
        for (std::size_t i = 0; i < ac.size(); ++i) CHECK(ab.values[i] + bc.values[i] == ac.values[i]);
    }
    const auto out = energy_window(c, 50.0, 60.0);
    CHECK(out.outside_range);
    CHECK(out.image.sum() == 0.0);
    CHECK_THROWS_AS(energy_window(c, 5.0, 5.0), std::invalid_argument);
}

TEST_CASE("PSF centre") {
    Image2D img(256, 256, 55.0);
    img.at(100, 120) = 7.0;
    auto c = find_psf_center(img);
    CHECK(c.x == 100.0);
    CHECK(c.y == 120.0);

    img = gaussian_image(256, 55.0, 0.1, 128.5, 128.5);
    for (std::uint32_t i = 0; i < 256; ++i) {
        img.at(i, 128) += 0.3;
        img.at(i, 129) += 0.3;
        img.at(128, i) += 0.3;
        img.at(129, i) += 0.3;
    }
    c = find_psf_center(img);
    CHECK(std::abs(c.x - 128.5) <= 0.5);
    CHECK(std::abs(c.y - 128.5) <= 0.5);

    img = Image2D(64, 64, 55.0);
    img.at(40, 10) = 5.0;
    img.at(20, 30) = 5.0;
    img.at(10, 30) = 5.0;
    c = find_psf_center(img);
    CHECK(c.x == 40.0);
    CHECK(c.y == 10.0);

    CHECK(analysis_kind([] { find_psf_center(Image2D(16, 16, 55.0)); }) == AnalysisError::Kind::NoPeak);
}

TEST_CASE("arm profiles") {
    const Image2D flat(64, 48, 55.0, 2.5);
    auto [h, v] = extract_arm_profiles(flat, {30.0, 20.0});
    CHECK(h.intensities.size() == 64);
    CHECK(v.intensities.size() == 48);
    for (double x : h.intensities) CHECK(x == 2.5);
    CHECK(h.rows_averaged == 3);
    CHECK(h.positions_mm.back() - h.positions_mm.front() == doctest::Approx(63 * 0.055));
    for (std::size_t i = 1; i < h.positions_mm.size(); ++i) CHECK(h.positions_mm[i] > h.positions_mm[i - 1]);

    Image2D cross(64, 64, 55.0);
    for (std::uint32_t i = 0; i < 64; ++i) {
        cross.at(i, 32) = 3.0;
        cross.at(32, i) = 3.0;
    }
    std::tie(h, v) = extract_arm_profiles(cross, {32.0, 32.0});
    for (std::uint32_t i = 0; i < 64; ++i) {
        if (i == 32) {
            CHECK(h.intensities[i] == 3.0);
            continue;
        }
        CHECK(h.intensities[i] == 1.0);
        CHECK(v.intensities[i] == 1.0);
    }
    CHECK(analysis_kind([&] { extract_arm_profiles(cross, {0.2, 32.0}); }) == AnalysisError::Kind::EdgeTooClose);
    CHECK(analysis_kind([&] { extract_arm_profiles(cross, {32.0, 63.0}); }) == AnalysisError::Kind::EdgeTooClose);
}

TEST_CASE("FWHM of simple profiles") {
    std::vector<double> x, tri, gauss, flat;
    for (int i = -300; i <= 300; ++i) {
        const double xm = i * 0.01;
        x.push_back(xm);
        tri.push_back(std::max(0.0, 1.0 - std::abs(xm)));
        gauss.push_back(std::exp(-xm * xm / (2 * 0.2 * 0.2)));
        flat.push_back(1.0);
    }
    CHECK(fwhm(profile_of(x, tri)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(fwhm(profile_of(x, gauss)) - 0.471) <= 0.005);
    CHECK(analysis_kind([&] { fwhm(profile_of(x, flat)); }) == AnalysisError::Kind::NoPeak);

    std::vector<double> edge(x.size(), 0.0);
    for (std::size_t i = 0; i < 40; ++i) edge[i] = 1.0;
    CHECK(analysis_kind([&] { fwhm(profile_of(x, edge)); }) == AnalysisError::Kind::OneSided);
}

TEST_CASE("FWHM of sampled Gaussians") {
    for (double sigma_px : {2.0, 2.7, 3.5, 5.0, 8.0, 12.0}) {
        for (double offset : {0.0, 0.25, 0.3, 0.5, 0.8}) {
            const double sigma = sigma_px * 0.055;
            const Image2D img = gaussian_image(256, 55.0, sigma, 128.0 + offset, 128.0 + offset);
            const auto [h, v] = extract_arm_profiles(img, {128.0 + offset, 128.0 + offset});
            CAPTURE(sigma_px);
            CAPTURE(offset);
            CHECK(fwhm(h) == doctest::Approx(2.3548 * sigma).epsilon(0.01));
            CHECK(fwhm(v) == doctest::Approx(2.3548 * sigma).epsilon(0.01));
        }
    }
}

TEST_CASE("arm extent of a synthetic cross") {
    // Tent arms of half-length 0.8 mm on a flat floor.
    std::vector<double> x, v;
    for (int i = -200; i <= 200; ++i) {
        const double xm = i * 0.01;
        x.push_back(xm);
        v.push_back(0.5 + std::max(0.0, 1.0 - std::abs(xm) / 0.8) + (i == 0 ? 20.0 : 0.0));
    }
    // The arm peak is the tent value at the exclusion edge, 1 - 0.05/0.8.
    auto reach = [](double f) { return 0.8 * (1.0 - f * (1.0 - 0.05 / 0.8)); };
    CHECK(arm_extent(profile_of(x, v), 0.05, 0.1) == doctest::Approx(reach(0.1)).epsilon(1e-6));
    CHECK(arm_extent(profile_of(x, v), 0.05, 0.5) == doctest::Approx(reach(0.5)).epsilon(1e-6));
    std::vector<double> none(x.size(), 0.5);
    none[200] = 10.0;
    CHECK(analysis_kind([&] { arm_extent(profile_of(x, none), 0.05); }) == AnalysisError::Kind::NoPeak);
}

TEST_CASE("model extents") {
    const Material ir = Material::iridium();
    CHECK(expected_arm_half_length(8.0, ir, 25, 25) == doctest::Approx(0.54).epsilon(0.01));
    CHECK(expected_arm_half_length(4.5, ir, 25, 25) == doctest::Approx(0.96).epsilon(0.01));
    CHECK(expected_arm_half_length(4.5, ir, 25, 25) / expected_arm_half_length(8.0, ir, 25, 25) ==
          doctest::Approx(8.0 / 4.5).epsilon(1e-3));
    MpoGeometry g;
    CHECK(expected_direct_half_width(g, 25, 25) == doctest::Approx(0.8333).epsilon(1e-3));
    g.thickness_mm = 1e15;
    CHECK(expected_direct_half_width(g, 25, 25) < 1e-12);
}

TEST_CASE("Gaussian window") {
    const Image2D img(101, 101, 50.0, 2.0);
    const auto w = gaussian_window(img, 1.0, {50.0, 50.0});
    CHECK(w.at(50, 50) == 2.0);
    CHECK(w.at(70, 50) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-12));
    CHECK(w.at(50, 30) == doctest::Approx(2.0 * 0.6065).epsilon(1e-4));
    const auto wide = gaussian_window(img, 1e6, {50.0, 50.0});
    for (double v : wide.values) CHECK(v == doctest::Approx(2.0).epsilon(1e-6));
    CHECK_THROWS_AS(gaussian_window(img, 0.0, {0, 0}), std::invalid_argument);
}

TEST_CASE("ATF matches the direct DFT sum") {
    for (auto [nx, ny] : {std::pair{8u, 6u}, {7u, 5u}, {16u, 9u}}) {
        const Image2D img = random_image(nx, ny, nx * 31 + ny);
        const Atf a = atf(img);
        const auto ref = oracle::naive_dft_amplitude(img);
        REQUIRE(a.amplitude.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(a.amplitude[i] == doctest::Approx(ref[i]).epsilon(1e-10));
        CHECK(a.dc() == doctest::Approx(img.sum()).epsilon(1e-12));
    }
}

TEST_CASE("ATF Fourier pairs") {
    Image2D delta(32, 24, 55.0);
    delta.at(5, 17) = 3.0;
    for (double v : atf(delta).amplitude) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));

    const Image2D flat(32, 24, 55.0, 2.0);
    const Atf a = atf(flat);
    CHECK(a.dc() == doctest::Approx(2.0 * 32 * 24));
    for (std::size_t i = 1; i < a.amplitude.size(); ++i) CHECK(std::abs(a.amplitude[i]) < 1e-9);

    CHECK(a.freq_x(1) == doctest::Approx(1.0 / (32 * 0.055)));
    CHECK(a.freq_x(31) == doctest::Approx(-1.0 / (32 * 0.055)));
    CHECK(a.freq_y(12) == doctest::Approx(-12.0 / (24 * 0.055)));
}

TEST_CASE("ATF is invariant under periodic shifts") {
    const Image2D img = random_image(40, 30, 9);
    for (auto [sx, sy] : {std::pair{1u, 0u}, {7u, 3u}, {39u, 29u}, {20u, 15u}}) {
        Image2D moved(40, 30, 55.0);
        for (std::uint32_t y = 0; y < 30; ++y)
            for (std::uint32_t x = 0; x < 40; ++x) moved.at((x + sx) % 40, (y + sy) % 30) = img.at(x, y);
        const Atf a = atf(img), b = atf(moved);
        for (std::size_t i = 0; i < a.amplitude.size(); ++i)
            CHECK(std::abs(a.amplitude[i] - b.amplitude[i]) <= 1e-10 * std::max(1.0, a.amplitude[i]));
    }
}

TEST_CASE("ATF averaging") {
    const Atf a = atf(random_image(16, 16, 1));
    const Atf same = average_atf(std::vector<Atf>{a, a, a});
    CHECK(same.source_count == 3);
    for (std::size_t i = 0; i < a.amplitude.size(); ++i) CHECK(same.amplitude[i] == doctest::Approx(a.amplitude[i]));

    std::vector<Atf> deltas;
    for (int k = 0; k < 4; ++k) {
        Image2D d(16, 16, 55.0);
        d.at(k, 3 * k) = 2.0;
        deltas.push_back(atf(d));
    }
    for (double v : average_atf(deltas).amplitude) CHECK(v == doctest::Approx(2.0));

    const std::vector<Atf> mixed = {a, atf(random_image(16, 8, 2))};
    CHECK(analysis_kind([&] { average_atf(mixed); }) == AnalysisError::Kind::DimensionMismatch);
}

TEST_CASE("zero-phase inverse") {
    // Constant spectrum -> delta at the image midpoint.
    Atf flat;
    flat.n_x = 16;
    flat.n_y = 12;
    flat.amplitude.assign(16 * 12, 1.0);
    auto ip = idealized_psf(flat);
    CHECK(ip.image.at(8, 6) == doctest::Approx(1.0));
    CHECK(ip.image.sum() == doctest::Approx(1.0));

    // A centred symmetric PSF comes back unchanged up to scale.
    const Image2D g = gaussian_image(64, 55.0, 0.15, 32.0, 32.0);
    ip = idealized_psf(atf(g));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(ip.image.values[i] == doctest::Approx(g.values[i]).epsilon(1e-9).scale(1.0));

    // Against the direct inverse sum.
    const Image2D img = random_image(9, 8, 5);
    const Atf a = atf(img);
    ip = idealized_psf(a);
    const auto ref = oracle::naive_inverse_dft_real(a.amplitude, 9, 8);
    for (std::uint32_t y = 0; y < 8; ++y)
        for (std::uint32_t x = 0; x < 9; ++x)
            CHECK(ip.image.at((x + 4) % 9, (y + 4) % 8) * ip.peak == doctest::Approx(ref[y * 9 + x]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("Parseval: inverse image carries the spectrum energy") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Atf a = atf(random_image(24, 18, seed));
        const auto ip = idealized_psf(a);
        double img_e = 0.0, spec_e = 0.0;
        for (double v : ip.image.values) img_e += (v * ip.peak) * (v * ip.peak);
        for (double v : a.amplitude) spec_e += v * v;
        CHECK(img_e == doctest::Approx(spec_e / a.amplitude.size()).epsilon(1e-9));
    }
}

TEST_CASE("resolution from the radial ATF") {
    Image2D delta(128, 128, 55.0);
    delta.at(3, 3) = 1.0;
    CHECK(!resolution_lp_per_mm(atf(delta)).lp_per_mm);

    // |F| of a Gaussian of sigma s is exp(-2 pi^2 s^2 f^2); it reaches 0.1 at
    // f = sqrt(ln 10 / 2) / (pi s).
    const double s = 0.5;
    const double expect = std::sqrt(std::log(10.0) / 2.0) / (std::numbers::pi * s);
    CHECK(expect == doctest::Approx(0.683).epsilon(1e-3));
    const Image2D g = gaussian_image(256, 55.0, s, 128.0, 128.0);
    const auto r = resolution_lp_per_mm(atf(g), 0.1);
    REQUIRE(r.lp_per_mm);
    CHECK(std::abs(*r.lp_per_mm - expect) < 0.03);
    CHECK(r.threshold == 0.1);
    CHECK_THROWS_AS(resolution_lp_per_mm(atf(g), 1.5), std::invalid_argument);

    double df = 0.0;
    const auto prof = radial_profile(atf(g), &df);
    CHECK(df == doctest::Approx(1.0 / (256 * 0.055)));
    CHECK(prof[0] == doctest::Approx(atf(g).dc()));
}

TEST_CASE("background level") {
    const Image2D c(64, 64, 55.0, 4.0);
    CHECK(background_level(c, 0.5, {32, 32}) == doctest::Approx(4.0));
    Image2D cross(64, 64, 55.0);
    for (std::uint32_t i = 0; i < 64; ++i) {
        cross.at(i, 32) = 3.0;
        cross.at(32, i) = 3.0;
    }
    CHECK(background_level(cross, 0.2, {32, 32}, 0.06) == 0.0);
    CHECK(background_level(cross, 0.2, {32, 32}) > 0.0);
    CHECK(analysis_kind([&] { background_level(c, 2.0, {32, 32}); }) == AnalysisError::Kind::EmptyRegion);
    CHECK(analysis_kind([&] { background_level(c, 0.1, {32, 32}, 5.0); }) == AnalysisError::Kind::EmptyRegion);
}

TEST_CASE("averaging simulated PSF spectra reduces their scatter") {
    Scene s;
    s.sources.push_back(Source::point("Cu", 0, 0, {{8.0, 1.0}}));
    std::vector<Atf> single;
    for (std::uint64_t seed : {101u, 102u, 103u}) {
        SimOptions o;
        o.n_photons = 2000000;
        o.seed = seed;
        const auto r = simulate(s, MpoGeometry{}, DetectorSpec{}, o);
        const Image2D img = full_window(r.cube);
        single.push_back(atf(gaussian_window(img, 1.5, find_psf_center(img))));
    }
    const Atf avg = average_atf(single);
    // Pixel-to-pixel scatter of the amplitude above half Nyquist, where photon
    // noise dominates.
    auto scatter = [](const Atf &a) {
        const double half_nyquist = 0.25 / (a.pitch_um / 1000.0);
        double sum = 0.0;
        int n = 0;
        for (std::uint32_t ky = 0; ky < a.n_y; ++ky)
            for (std::uint32_t kx = 0; kx + 1 < a.n_x; ++kx) {
                if (std::hypot(a.freq_x(kx), a.freq_y(ky)) < half_nyquist) continue;
                sum += std::pow((a.at(kx + 1, ky) - a.at(kx, ky)) / a.dc(), 2);
                ++n;
            }
        return sum / n;
    };
    for (const auto &a : single) CHECK(scatter(avg) < scatter(a));
}

} // TEST_SUITE
