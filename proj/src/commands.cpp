#include "mpoxrf/commands.h"

#include "mpoxrf/error.h"
#include "mpoxrf/image_io.h"
#include "mpoxrf/sic.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace mpoxrf {

namespace {

bool ends_with(const std::string &s, const std::string &suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::ofstream open_out(const std::string &path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    return f;
}

void write_image_files(const std::string &prefix, const Image2D &img) {
    {
        auto f = open_out(prefix + ".csv");
        write_image_csv(f, img);
    }
    auto f = open_out(prefix + ".pgm");
    write_pgm(f, img);
}

RunConfig config_or_default(const std::string &path) { return path.empty() ? RunConfig{} : load_config(path); }

void print_opt(std::ostream &out, const char *key, const std::optional<double> &v) {
    out << std::left << std::setw(30) << key;
    if (v)
        out << *v << '\n';
    else
        out << "n/a\n";
}

} // namespace

int exit_code_for(const std::exception &e) {
    if (dynamic_cast<const UsageError *>(&e)) return kExitUsage;
    if (dynamic_cast<const IoError *>(&e)) return kExitIo;
    if (dynamic_cast<const ConfigError *>(&e)) return kExitConfig;
    if (dynamic_cast<const AnalysisError *>(&e)) return kExitAnalysis;
    if (dynamic_cast<const std::invalid_argument *>(&e) || dynamic_cast<const std::domain_error *>(&e))
        return kExitConfig;
    return kExitInternal;
}

std::pair<double, double> parse_window(const std::string &text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw UsageError("energy window must be 'lo:hi' in keV, got '" + text + "'");
    try {
        std::size_t a = 0, b = 0;
        const std::string lo_s = text.substr(0, colon), hi_s = text.substr(colon + 1);
        const double lo = std::stod(lo_s, &a);
        const double hi = std::stod(hi_s, &b);
        if (a != lo_s.size() || b != hi_s.size()) throw std::invalid_argument("trailing text");
        if (!(lo < hi)) throw UsageError("energy window '" + text + "': lo must be below hi");
        return {lo, hi};
    } catch (const UsageError &) {
        throw;
    } catch (const std::exception &) {
        throw UsageError("energy window must be 'lo:hi' in keV, got '" + text + "'");
    }
}

LineSet parse_line_set(const std::string &text) {
    if (text.empty()) return LineSet::standard();
    LineSet set;
    std::istringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        const auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0)
            throw UsageError("line set entries must be 'Element:keV', got '" + item + "'");
        try {
            set.lines.push_back({item.substr(0, colon), std::stod(item.substr(colon + 1))});
        } catch (const std::exception &) {
            throw UsageError("bad line energy in '" + item + "'");
        }
    }
    set.validate();
    return set;
}

Image2D load_image(const std::string &path, std::optional<std::pair<double, double>> window,
                   double csv_pitch_um) {
    if (ends_with(path, ".sic")) {
        const SpectralImage cube = read_sic(path);
        if (window) return energy_window(cube, window->first, window->second).image;
        return full_window(cube);
    }
    if (window) throw UsageError("an energy window needs a .sic cube, not " + path);
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    return read_image_csv(f, csv_pitch_um);
}

PsfReport characterize_psf(const Image2D &image, const AnalysisSettings &settings) {
    PsfReport r;
    r.center = find_psf_center(image);
    std::tie(r.horizontal, r.vertical) = extract_arm_profiles(image, r.center);
    auto attempt = [](auto &&fn) -> std::optional<double> {
        try {
            return fn();
        } catch (const AnalysisError &) {
            return std::nullopt;
        }
    };
    r.fwhm_h_mm = attempt([&] { return fwhm(r.horizontal); });
    r.fwhm_v_mm = attempt([&] { return fwhm(r.vertical); });
    r.arm_extent_h_mm = attempt(
        [&] { return arm_extent(r.horizontal, settings.central_exclusion_mm, settings.arm_fraction); });
    r.arm_extent_v_mm = attempt(
        [&] { return arm_extent(r.vertical, settings.central_exclusion_mm, settings.arm_fraction); });
    return r;
}

CleanReport clean_psfs(const std::vector<Image2D> &images, const AnalysisSettings &settings) {
    if (images.empty()) throw UsageError("clean needs at least one PSF image");
    std::vector<Atf> atfs;
    double raw_bg = 0.0;
    for (const auto &img : images) {
        const PixelPoint c = find_psf_center(img);
        Image2D unit = img;
        const double peak = unit.max();
        for (auto &v : unit.values) v /= peak;
        raw_bg += background_level(unit, settings.background_exclusion_mm, c, settings.arm_band_half_width_mm);
        atfs.push_back(atf(gaussian_window(img, settings.window_sigma_mm, c)));
    }
    CleanReport r;
    r.averaged = average_atf(atfs);
    r.idealized = idealized_psf(r.averaged);
    r.resolution = resolution_lp_per_mm(r.averaged, settings.resolution_threshold);
    r.raw_background = raw_bg / static_cast<double>(images.size());
    const PixelPoint mid{static_cast<double>(r.idealized.image.n_x / 2),
                         static_cast<double>(r.idealized.image.n_y / 2)};
    r.ideal_background = background_level(r.idealized.image, settings.background_exclusion_mm, mid,
                                          settings.arm_band_half_width_mm);
    return r;
}

PixelResponse random_pixel_response(std::uint32_t n_x, std::uint32_t n_y, double gain_lo,
                                    double gain_hi, double offset_lo, double offset_hi,
                                    std::uint64_t seed) {
    if (!(gain_lo > 0.0 && gain_hi >= gain_lo)) throw ConfigError("gain range must satisfy 0 < lo <= hi");
    if (!(offset_hi >= offset_lo)) throw ConfigError("offset range must satisfy lo <= hi");
    PixelResponse r;
    r.n_x = n_x;
    r.n_y = n_y;
    const std::size_t n = static_cast<std::size_t>(n_x) * n_y;
    r.gain.resize(n);
    r.offset.resize(n);
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        r.gain[i] = gain_lo + (gain_hi - gain_lo) * unit(rng);
        r.offset[i] = offset_lo + (offset_hi - offset_lo) * unit(rng);
    }
    return r;
}

void cmd_simulate(const SimulateArgs &args, std::ostream &out) {
    RunConfig cfg = load_config(args.config);
    if (args.photons) cfg.sim.photons = *args.photons;
    if (args.seed) cfg.sim.seed = *args.seed;
    if (args.jobs) {
        if (*args.jobs == 0) throw UsageError("--jobs must be >= 1");
        cfg.sim.workers = *args.jobs;
    }
    if (args.out.empty()) throw UsageError("simulate needs --out");
    open_out(args.out); // fail before a long run if the path is unwritable

    SimOptions opt;
    opt.n_photons = cfg.sim.photons;
    opt.seed = cfg.sim.seed;
    opt.n_workers = cfg.sim.workers;
    opt.class_images = !args.class_prefix.empty();
    const SimResult res = simulate(cfg.scene, cfg.mpo, cfg.detector, opt);
    write_sic(args.out, res.cube);

    const SimTallies &t = res.tallies;
    auto row = [&](const char *k, auto v) { out << std::left << std::setw(22) << k << v << '\n'; };
    row("photons", t.emitted);
    row("seed", cfg.sim.seed);
    row("workers", cfg.sim.workers);
    {
        std::ostringstream d;
        d << "0x" << std::hex << std::setw(16) << std::setfill('0') << res.cube.scene_digest;
        row("scene_digest", d.str());
    }
    row("missed_plate", t.missed_plate);
    row("web_absorbed", t.web_absorbed);
    row("wall_absorbed", t.wall_absorbed);
    row("outside_detector", t.outside_detector);
    row("below_threshold", t.below_threshold);
    row("outside_energy_range", t.outside_energy_range);
    row("detected", t.detected);
    for (int c = 0; c < kPathClassCount; ++c)
        row((std::string("class ") + to_string(static_cast<PathClass>(c))).c_str(), t.per_class[c]);
    row("mean_weight", t.mean_weight());
    row("output", args.out);

    if (opt.class_images) {
        for (int c = 0; c < kPathClassCount; ++c) {
            Image2D img(res.cube.n_x, res.cube.n_y, res.cube.pixel_pitch_um);
            for (std::size_t i = 0; i < img.size(); ++i)
                img.values[i] = static_cast<double>(res.class_images[c][i]);
            auto f = open_out(args.class_prefix + "_" + to_string(static_cast<PathClass>(c)) + ".csv");
            write_image_csv(f, img);
        }
    }
}

void cmd_flatfield(const FlatfieldArgs &args, std::ostream &out) {
    const Image2D img = load_image(args.image, args.window);
    const Image2D flat = load_image(args.flat, args.window);
    const Image2D corrected = flat_field_correct(img, flat);
    write_image_files(args.out_prefix, corrected);
    std::size_t masked = 0;
    for (std::size_t i = 0; i < corrected.size(); ++i) masked += corrected.valid(i) ? 0 : 1;
    out << "masked_pixels " << masked << '\n'
        << "output " << args.out_prefix << ".csv " << args.out_prefix << ".pgm\n";
}

void cmd_window(const WindowArgs &args, std::ostream &out) {
    if (args.windows.empty()) throw UsageError("window needs at least one --range lo:hi");
    const SpectralImage cube = read_sic(args.cube);
    for (const auto &[lo, hi] : args.windows) {
        const WindowImage w = energy_window(cube, lo, hi);
        const std::string prefix = args.out_prefix + "_" + num(lo) + "-" + num(hi) + "keV";
        if (w.outside_range)
            out << "warning: window " << num(lo) << "-" << num(hi) << " keV contains no energy bin\n";
        write_image_files(prefix, w.image);
        out << "window " << num(lo) << "-" << num(hi) << " keV counts " << std::setprecision(17)
            << w.image.sum() << " -> " << prefix << ".pgm\n";
    }
}

void cmd_psf(const PsfArgs &args, std::ostream &out) {
    const RunConfig cfg = config_or_default(args.config);
    const Image2D img = load_image(args.image, args.window, cfg.detector.pitch_um);
    const PsfReport r = characterize_psf(img, cfg.analysis);
    if (!args.out_prefix.empty()) {
        auto h = open_out(args.out_prefix + "_horizontal.csv");
        write_profile_csv(h, r.horizontal);
        auto v = open_out(args.out_prefix + "_vertical.csv");
        write_profile_csv(v, r.vertical);
    }
    out << std::setprecision(6);
    out << std::left << std::setw(30) << "center_px" << r.center.x << ' ' << r.center.y << '\n';
    print_opt(out, "fwhm_horizontal_mm", r.fwhm_h_mm);
    print_opt(out, "fwhm_vertical_mm", r.fwhm_v_mm);
    print_opt(out, "arm_extent_horizontal_mm", r.arm_extent_h_mm);
    print_opt(out, "arm_extent_vertical_mm", r.arm_extent_v_mm);
    std::optional<double> arm_model;
    if (args.energy_kev)
        arm_model = expected_arm_half_length(*args.energy_kev, cfg.mpo.coating, cfg.scene.ls_mm, cfg.scene.li_mm);
    print_opt(out, "expected_arm_half_length_mm", arm_model);
    print_opt(out, "expected_direct_half_width_mm",
              expected_direct_half_width(cfg.mpo, cfg.scene.ls_mm, cfg.scene.li_mm));
}

void cmd_atf(const AtfArgs &args, std::ostream &out) {
    const RunConfig cfg = config_or_default(args.config);
    const Image2D img = load_image(args.image, args.window, cfg.detector.pitch_um);
    const PixelPoint c = find_psf_center(img);
    const Atf a = atf(gaussian_window(img, cfg.analysis.window_sigma_mm, c));
    if (!args.out.empty()) {
        auto f = open_out(args.out);
        write_atf_csv(f, a);
    }
    const Resolution res = resolution_lp_per_mm(a, cfg.analysis.resolution_threshold);
    out << "dc " << std::setprecision(17) << a.dc() << '\n' << std::setprecision(6);
    if (res.lp_per_mm)
        out << "resolution_lp_per_mm " << *res.lp_per_mm << " (threshold " << res.threshold << ")\n";
    else
        out << "resolution_lp_per_mm beyond-nyquist (threshold " << res.threshold << ")\n";
}

void cmd_clean(const CleanArgs &args, std::ostream &out) {
    const RunConfig cfg = config_or_default(args.config);
    std::vector<Image2D> images;
    for (const auto &p : args.images) images.push_back(load_image(p, args.window, cfg.detector.pitch_um));
    for (std::size_t i = 1; i < images.size(); ++i)
        if (images[i].n_x != images[0].n_x || images[i].n_y != images[0].n_y)
            throw AnalysisError(AnalysisError::Kind::DimensionMismatch,
                                "clean: " + args.images[i] + " differs in size from " + args.images[0]);
    const CleanReport r = clean_psfs(images, cfg.analysis);
    if (!args.out_prefix.empty()) {
        write_image_files(args.out_prefix + "_idealized", r.idealized.image);
        auto f = open_out(args.out_prefix + "_atf.csv");
        write_atf_csv(f, r.averaged);
    }
    out << std::setprecision(6);
    out << "sources_averaged " << r.averaged.source_count << '\n';
    out << "background_raw " << r.raw_background << '\n';
    out << "background_idealized " << r.ideal_background << '\n';
    out << "background_ratio "
        << (r.raw_background != 0.0 ? r.ideal_background / r.raw_background : std::nan("")) << '\n';
    if (r.resolution.lp_per_mm)
        out << "resolution_lp_per_mm " << *r.resolution.lp_per_mm;
    else
        out << "resolution_lp_per_mm beyond-nyquist";
    out << " (threshold " << r.resolution.threshold << ")\n";
}

void cmd_calibrate(const CalibrateArgs &args, std::ostream &out) {
    const LineSet lines = parse_line_set(args.lines);
    std::map<std::string, std::string> files;
    for (const auto &[el, path] : args.events)
        if (!files.emplace(el, path).second) throw UsageError("events for " + el + " given twice");
    std::string missing;
    for (const auto &l : lines.lines)
        if (!files.count(l.element)) missing += (missing.empty() ? "" : ", ") + l.element;
    if (!missing.empty()) throw UsageError("no events file for line(s): " + missing);
    for (const auto &[el, path] : files) {
        bool known = false;
        for (const auto &l : lines.lines) known |= l.element == el;
        if (!known) throw UsageError("events given for " + el + ", which is not in the line set");
    }

    std::vector<std::vector<std::optional<double>>> peaks;
    std::uint32_t n_x = 0, n_y = 0;
    for (const auto &l : lines.lines) {
        const EventStream s = read_events(files.at(l.element));
        if (peaks.empty()) {
            n_x = s.n_x;
            n_y = s.n_y;
        } else if (s.n_x != n_x || s.n_y != n_y) {
            throw ConfigError(l.element + " events are " + std::to_string(s.n_x) + "x" +
                              std::to_string(s.n_y) + ", expected " + std::to_string(n_x) + "x" +
                              std::to_string(n_y));
        }
        peaks.push_back(pixel_peaks(s));
        std::size_t found = 0;
        for (const auto &p : peaks.back()) found += p ? 1 : 0;
        out << "line " << l.element << ' ' << l.energy_kev << " keV: peaks in " << found << " pixels\n";
    }
    const CalibrationMap map = fit_calibration(lines, peaks, n_x, n_y);
    {
        auto f = open_out(args.out);
        write_calibration_csv(f, map);
    }
    double res = 0.0;
    std::size_t live = 0;
    for (const auto &p : map.pixels)
        if (!p.dead) {
            res += p.residual;
            ++live;
        }
    out << "pixels " << map.pixels.size() << " dead " << map.dead_count() << '\n';
    out << "mean_residual_kev " << (live ? res / static_cast<double>(live) : 0.0) << '\n';
    out << "output " << args.out << '\n';
}

void cmd_apply_cal(const ApplyCalArgs &args, std::ostream &out) {
    const RunConfig cfg = config_or_default(args.config);
    const EventStream s = read_events(args.events);
    std::ifstream f(args.cal);
    if (!f) throw IoError("cannot open " + args.cal);
    const CalibrationMap map = read_calibration_csv(f);
    const SpectralImage cube = apply_calibration(s, map, cfg.detector);
    write_sic(args.out, cube);
    out << "events " << s.events.size() << '\n'
        << "binned " << cube.total() << '\n'
        << "dead_pixel_events " << cube.dropped << '\n'
        << "outside_energy_range " << cube.out_of_range << '\n'
        << "output " << args.out << '\n';
}

void cmd_synth_events(const SynthEventsArgs &args, std::ostream &out) {
    if (args.n_x == 0 || args.n_y == 0 || args.n_x > 65536 || args.n_y > 65536)
        throw ConfigError("pixel matrix must be between 1 and 65536 per side");
    if (!(args.energy_kev > 0.0)) throw ConfigError("line energy must be > 0");
    if (!(args.fwhm_kev >= 0.0)) throw ConfigError("FWHM must be >= 0");
    const PixelResponse truth = random_pixel_response(args.n_x, args.n_y, args.gain_lo, args.gain_hi,
                                                      args.offset_lo, args.offset_hi, args.truth_seed);
    Rng rng(args.seed);
    EventStream s;
    s.n_x = args.n_x;
    s.n_y = args.n_y;
    s.events = synthesize_line_events(args.energy_kev, truth, args.per_pixel, args.fwhm_kev, rng);
    write_events(args.out, s);
    if (!args.truth_out.empty()) {
        auto f = open_out(args.truth_out);
        f << "x,y,gain,offset\n" << std::setprecision(17);
        for (std::uint32_t y = 0; y < truth.n_y; ++y)
            for (std::uint32_t x = 0; x < truth.n_x; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * truth.n_x + x;
                f << x << ',' << y << ',' << truth.gain[i] << ',' << truth.offset[i] << '\n';
            }
    }
    out << "events " << s.events.size() << "\noutput " << args.out << '\n';
}

} // namespace mpoxrf
