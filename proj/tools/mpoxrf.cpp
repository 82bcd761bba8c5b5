// mpoxrf: micro pore optic XRF simulation and analysis tool.

#include "mpoxrf/commands.h"

#include <CLI11.hpp>

#include <iostream>

using namespace mpoxrf;

namespace {

std::optional<std::pair<double, double>> window_opt(const std::string &s) {
    if (s.empty()) return std::nullopt;
    return parse_window(s);
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Micro pore optic X-ray fluorescence imaging: simulation and analysis"};
    app.require_subcommand(1);

    SimulateArgs sim;
    std::uint64_t photons = 0, seed = 0;
    unsigned jobs = 0;
    auto *c_sim = app.add_subcommand("simulate", "Monte Carlo run of a config, writes a SIC cube");
    c_sim->add_option("-c,--config", sim.config, "Run configuration")->required();
    auto *o_photons = c_sim->add_option("-n,--photons", photons, "Photons to emit (overrides [sim])");
    auto *o_seed = c_sim->add_option("-s,--seed", seed, "RNG seed (overrides [sim])");
    auto *o_jobs = c_sim->add_option("-j,--jobs", jobs, "Worker threads (overrides [sim])");
    c_sim->add_option("-o,--out", sim.out, "Output .sic file")->required();
    c_sim->add_option("--class-images", sim.class_prefix, "Write per-path-class hit maps <prefix>_<class>.csv");

    FlatfieldArgs ff;
    std::string ff_window;
    auto *c_ff = app.add_subcommand("flatfield", "Divide an image by a normalised flat");
    c_ff->add_option("-i,--image", ff.image, "Image (.sic or .csv)")->required();
    c_ff->add_option("-f,--flat", ff.flat, "Flat image (.sic or .csv)")->required();
    c_ff->add_option("-w,--window", ff_window, "Energy window lo:hi keV for .sic inputs");
    c_ff->add_option("-o,--out", ff.out_prefix, "Output prefix")->required();

    WindowArgs win;
    std::vector<std::string> win_ranges;
    auto *c_win = app.add_subcommand("window", "Energy-windowed images from a cube");
    c_win->add_option("-i,--cube", win.cube, "Input .sic")->required();
    c_win->add_option("-r,--range", win_ranges, "Window lo:hi keV (repeatable)")->required();
    c_win->add_option("-o,--out", win.out_prefix, "Output prefix")->required();

    PsfArgs psf;
    std::string psf_window;
    double psf_energy = 0.0;
    auto *c_psf = app.add_subcommand("psf", "PSF centre, arm profiles, FWHM and model extents");
    c_psf->add_option("-i,--image", psf.image, "Image (.sic or .csv)")->required();
    c_psf->add_option("-w,--window", psf_window, "Energy window lo:hi keV");
    c_psf->add_option("-c,--config", psf.config, "Config for geometry and distances");
    auto *o_energy = c_psf->add_option("-e,--energy", psf_energy, "Line energy (keV) for the arm model");
    c_psf->add_option("-o,--out", psf.out_prefix, "Profile CSV prefix");

    AtfArgs at;
    std::string at_window;
    auto *c_atf = app.add_subcommand("atf", "Amplitude transfer function of a windowed PSF");
    c_atf->add_option("-i,--image", at.image, "Image (.sic or .csv)")->required();
    c_atf->add_option("-w,--window", at_window, "Energy window lo:hi keV");
    c_atf->add_option("-c,--config", at.config, "Config ([analysis] settings, detector pitch)");
    c_atf->add_option("-o,--out", at.out, "ATF CSV");

    CleanArgs cl;
    std::string cl_window;
    auto *c_clean = app.add_subcommand("clean", "Average PSF ATFs and invert with zero phase");
    c_clean->add_option("-i,--image", cl.images, "PSF images (repeatable)")->required();
    c_clean->add_option("-w,--window", cl_window, "Energy window lo:hi keV");
    c_clean->add_option("-c,--config", cl.config, "Config ([analysis] settings, detector pitch)");
    c_clean->add_option("-o,--out", cl.out_prefix, "Output prefix");

    CalibrateArgs cal;
    std::vector<std::string> cal_events;
    auto *c_cal = app.add_subcommand("calibrate", "Per-pixel ToT to energy calibration");
    c_cal->add_option("-e,--events", cal_events, "Element=file.tpxe (one per line)")->required();
    c_cal->add_option("-l,--lines", cal.lines, "Element:keV,... (default Ti,Fe,Cu,Zr,Ag)");
    c_cal->add_option("-o,--out", cal.out, "Calibration CSV")->required();

    ApplyCalArgs ap;
    auto *c_ap = app.add_subcommand("apply-cal", "Histogram events into a SIC cube");
    c_ap->add_option("-e,--events", ap.events, "Input .tpxe")->required();
    c_ap->add_option("--cal", ap.cal, "Calibration CSV")->required();
    c_ap->add_option("-c,--config", ap.config, "Config for [detector] energy binning");
    c_ap->add_option("-o,--out", ap.out, "Output .sic")->required();

    SynthEventsArgs syn;
    auto *c_syn = app.add_subcommand("synth-events", "Synthetic single-line calibration events");
    c_syn->add_option("--energy", syn.energy_kev, "Line energy (keV)")->required();
    c_syn->add_option("--n-x", syn.n_x, "Pixels along x");
    c_syn->add_option("--n-y", syn.n_y, "Pixels along y");
    c_syn->add_option("--per-pixel", syn.per_pixel, "Events per pixel");
    c_syn->add_option("--gain-lo", syn.gain_lo, "Lowest true gain (keV/ToT)");
    c_syn->add_option("--gain-hi", syn.gain_hi, "Highest true gain (keV/ToT)");
    c_syn->add_option("--offset-lo", syn.offset_lo, "Lowest true offset (keV)");
    c_syn->add_option("--offset-hi", syn.offset_hi, "Highest true offset (keV)");
    c_syn->add_option("--fwhm", syn.fwhm_kev, "Energy resolution FWHM (keV)");
    c_syn->add_option("--truth-seed", syn.truth_seed, "Seed of the true gain map");
    c_syn->add_option("--seed", syn.seed, "Seed of the event noise");
    c_syn->add_option("--truth", syn.truth_out, "Write the true gains as CSV");
    c_syn->add_option("-o,--out", syn.out, "Output .tpxe")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*c_sim) {
            if (*o_photons) sim.photons = photons;
            if (*o_seed) sim.seed = seed;
            if (*o_jobs) sim.jobs = jobs;
            cmd_simulate(sim, std::cout);
        } else if (*c_ff) {
            ff.window = window_opt(ff_window);
            cmd_flatfield(ff, std::cout);
        } else if (*c_win) {
            for (const auto &r : win_ranges) win.windows.push_back(parse_window(r));
            cmd_window(win, std::cout);
        } else if (*c_psf) {
            psf.window = window_opt(psf_window);
            if (*o_energy) psf.energy_kev = psf_energy;
            cmd_psf(psf, std::cout);
        } else if (*c_atf) {
            at.window = window_opt(at_window);
            cmd_atf(at, std::cout);
        } else if (*c_clean) {
            cl.window = window_opt(cl_window);
            cmd_clean(cl, std::cout);
        } else if (*c_cal) {
            for (const auto &e : cal_events) {
                const auto eq = e.find('=');
                if (eq == std::string::npos || eq == 0)
                    throw UsageError("--events expects Element=file, got '" + e + "'");
                cal.events.emplace_back(e.substr(0, eq), e.substr(eq + 1));
            }
            cmd_calibrate(cal, std::cout);
        } else if (*c_ap) {
            cmd_apply_cal(ap, std::cout);
        } else if (*c_syn) {
            cmd_synth_events(syn, std::cout);
        }
    } catch (const std::exception &e) {
        std::cerr << "mpoxrf: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kExitOk;
}
