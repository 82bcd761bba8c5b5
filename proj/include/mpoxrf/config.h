#pragma once

#include "mpoxrf/optics.h"
#include "mpoxrf/sim.h"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace mpoxrf {

struct SimSettings {
    std::uint64_t photons = 1000000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

struct AnalysisSettings {
    double window_sigma_mm = 1.5;
    double resolution_threshold = 0.1;
    double background_exclusion_mm = 1.0;
    double arm_band_half_width_mm = 0.0;
    double central_exclusion_mm = 0.2; // ignored around the centre when locating arm peaks
    double arm_fraction = 0.1;
};

struct RunConfig {
    MpoGeometry mpo;
    DetectorSpec detector;
    Scene scene;
    SimSettings sim;
    AnalysisSettings analysis;

    // Runs every domain validate(); throws ConfigError.
    void validate() const;
};

/*
 * INI-style text, one `key = value` per line, '#' starts a comment.
 *
 *   [mpo]       plate_side_mm thickness_mm pore_width_um pitch_um
 *               coating = <name> <Z> <A g/mol> <rho g/cm3>
 *               reflectivity = binary | constant <r>
 *   [detector]  n_x n_y pitch_um energy_fwhm_kev threshold_kev
 *               e_min_kev e_bin_width_kev n_bins
 *   [scene]     ls_mm li_mm
 *               source = <label> point <x_mm> <z_mm> <lines>
 *               source = <label> rect <cx_mm> <cz_mm> <width_mm> <height_mm> <lines>
 *               lines: <keV>[:<weight>][,<keV>[:<weight>]...]
 *   [sim]       photons seed workers
 *   [analysis]  window_sigma_mm resolution_threshold background_exclusion_mm
 *               arm_band_half_width_mm central_exclusion_mm arm_fraction
 *
 * Unknown sections or keys and repeated keys (other than source) throw
 * ConfigError carrying the line number.
 */
RunConfig parse_config(std::istream &in);
RunConfig load_config(const std::string &path);

} // namespace mpoxrf
