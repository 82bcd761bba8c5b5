#include "mpoxrf/config.h"

#include "mpoxrf/error.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace mpoxrf {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string &s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

double to_double(const std::string &s, int line) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ConfigError("expected a number, got '" + s + "'", line);
    return v;
}

std::uint64_t to_u64(const std::string &s, int line) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ConfigError("expected a non-negative integer, got '" + s + "'", line);
    return v;
}

std::uint32_t to_u32(const std::string &s, int line) {
    const auto v = to_u64(s, line);
    if (v > UINT32_MAX) throw ConfigError("value out of range: " + s, line);
    return static_cast<std::uint32_t>(v);
}

std::vector<EmissionLine> parse_lines(const std::string &s, int line) {
    std::vector<EmissionLine> out;
    std::istringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        item = trim(item);
        EmissionLine l;
        const auto colon = item.find(':');
        l.energy_kev = to_double(item.substr(0, colon), line);
        if (colon != std::string::npos) l.relative_intensity = to_double(item.substr(colon + 1), line);
        out.push_back(l);
    }
    if (out.empty()) throw ConfigError("source needs at least one emission line", line);
    return out;
}

Source parse_source(const std::string &value, int line) {
    const auto tok = split_ws(value);
    if (tok.size() < 2) throw ConfigError("source: expected '<label> point|rect ...'", line);
    Source src;
    if (tok[1] == "point") {
        if (tok.size() != 5) throw ConfigError("source point: expected <label> point <x> <z> <lines>", line);
        src = Source::point(tok[0], to_double(tok[2], line), to_double(tok[3], line),
                            parse_lines(tok[4], line));
    } else if (tok[1] == "rect") {
        if (tok.size() != 7)
            throw ConfigError("source rect: expected <label> rect <cx> <cz> <w> <h> <lines>", line);
        src = Source::rect(tok[0], to_double(tok[2], line), to_double(tok[3], line),
                           to_double(tok[4], line), to_double(tok[5], line), parse_lines(tok[6], line));
    } else {
        throw ConfigError("source: unknown shape '" + tok[1] + "'", line);
    }
    try {
        src.validate();
    } catch (const ConfigError &e) {
        throw ConfigError(e.what(), line);
    }
    return src;
}

using Setter = std::function<void(RunConfig &, const std::string &, int)>;

const std::map<std::string, std::map<std::string, Setter>> &setters() {
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"mpo",
         {
             {"plate_side_mm", [](RunConfig &c, const std::string &v, int l) { c.mpo.plate_side_mm = to_double(v, l); }},
             {"thickness_mm", [](RunConfig &c, const std::string &v, int l) { c.mpo.thickness_mm = to_double(v, l); }},
             {"pore_width_um", [](RunConfig &c, const std::string &v, int l) { c.mpo.pore_width_um = to_double(v, l); }},
             {"pitch_um", [](RunConfig &c, const std::string &v, int l) { c.mpo.pitch_um = to_double(v, l); }},
             {"coating",
              [](RunConfig &c, const std::string &v, int l) {
                  const auto t = split_ws(v);
                  if (t.size() != 4) throw ConfigError("coating: expected <name> <Z> <A> <rho>", l);
                  c.mpo.coating = {t[0], to_double(t[1], l), to_double(t[2], l), to_double(t[3], l)};
              }},
             {"reflectivity",
              [](RunConfig &c, const std::string &v, int l) {
                  const auto t = split_ws(v);
                  if (t.size() == 1 && t[0] == "binary")
                      c.mpo.reflectivity = Reflectivity::binary();
                  else if (t.size() == 2 && t[0] == "constant")
                      c.mpo.reflectivity = Reflectivity::constant(to_double(t[1], l));
                  else
                      throw ConfigError("reflectivity: expected 'binary' or 'constant <r>'", l);
              }},
         }},
        {"detector",
         {
             {"n_x", [](RunConfig &c, const std::string &v, int l) { c.detector.n_x = to_u32(v, l); }},
             {"n_y", [](RunConfig &c, const std::string &v, int l) { c.detector.n_y = to_u32(v, l); }},
             {"pitch_um", [](RunConfig &c, const std::string &v, int l) { c.detector.pitch_um = to_double(v, l); }},
             {"energy_fwhm_kev", [](RunConfig &c, const std::string &v, int l) { c.detector.energy_fwhm_kev = to_double(v, l); }},
             {"threshold_kev", [](RunConfig &c, const std::string &v, int l) { c.detector.threshold_kev = to_double(v, l); }},
             {"e_min_kev", [](RunConfig &c, const std::string &v, int l) { c.detector.e_min_kev = to_double(v, l); }},
             {"e_bin_width_kev", [](RunConfig &c, const std::string &v, int l) { c.detector.e_bin_width_kev = to_double(v, l); }},
             {"n_bins", [](RunConfig &c, const std::string &v, int l) { c.detector.n_bins = to_u32(v, l); }},
         }},
        {"scene",
         {
             {"ls_mm", [](RunConfig &c, const std::string &v, int l) { c.scene.ls_mm = to_double(v, l); }},
             {"li_mm", [](RunConfig &c, const std::string &v, int l) { c.scene.li_mm = to_double(v, l); }},
             {"source", [](RunConfig &c, const std::string &v, int l) { c.scene.sources.push_back(parse_source(v, l)); }},
         }},
        {"sim",
         {
             {"photons", [](RunConfig &c, const std::string &v, int l) { c.sim.photons = to_u64(v, l); }},
             {"seed", [](RunConfig &c, const std::string &v, int l) { c.sim.seed = to_u64(v, l); }},
             {"workers",
              [](RunConfig &c, const std::string &v, int l) {
                  c.sim.workers = to_u32(v, l);
                  if (c.sim.workers == 0) throw ConfigError("workers must be >= 1", l);
              }},
         }},
        {"analysis",
         {
             {"window_sigma_mm", [](RunConfig &c, const std::string &v, int l) { c.analysis.window_sigma_mm = to_double(v, l); }},
             {"resolution_threshold", [](RunConfig &c, const std::string &v, int l) { c.analysis.resolution_threshold = to_double(v, l); }},
             {"background_exclusion_mm", [](RunConfig &c, const std::string &v, int l) { c.analysis.background_exclusion_mm = to_double(v, l); }},
             {"arm_band_half_width_mm", [](RunConfig &c, const std::string &v, int l) { c.analysis.arm_band_half_width_mm = to_double(v, l); }},
             {"central_exclusion_mm", [](RunConfig &c, const std::string &v, int l) { c.analysis.central_exclusion_mm = to_double(v, l); }},
             {"arm_fraction", [](RunConfig &c, const std::string &v, int l) { c.analysis.arm_fraction = to_double(v, l); }},
         }},
    };
    return table;
}

} // namespace

void RunConfig::validate() const {
    mpo.validate();
    detector.validate();
    scene.validate();
    if (sim.workers == 0) throw ConfigError("sim.workers must be >= 1");
    if (!(analysis.window_sigma_mm > 0.0)) throw ConfigError("analysis.window_sigma_mm must be > 0");
    if (!(analysis.resolution_threshold > 0.0 && analysis.resolution_threshold < 1.0))
        throw ConfigError("analysis.resolution_threshold must be in (0, 1)");
    if (!(analysis.background_exclusion_mm >= 0.0))
        throw ConfigError("analysis.background_exclusion_mm must be >= 0");
    if (!(analysis.arm_band_half_width_mm >= 0.0))
        throw ConfigError("analysis.arm_band_half_width_mm must be >= 0");
    if (!(analysis.central_exclusion_mm >= 0.0))
        throw ConfigError("analysis.central_exclusion_mm must be >= 0");
    if (!(analysis.arm_fraction > 0.0 && analysis.arm_fraction < 1.0))
        throw ConfigError("analysis.arm_fraction must be in (0, 1)");
}

RunConfig parse_config(std::istream &in) {
    RunConfig cfg;
    const auto &table = setters();
    const std::map<std::string, Setter> *section = nullptr;
    std::string section_name;
    std::set<std::string> seen;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ConfigError("malformed section header", line);
            section_name = trim(text.substr(1, text.size() - 2));
            const auto it = table.find(section_name);
            if (it == table.end()) throw ConfigError("unknown section [" + section_name + "]", line);
            section = &it->second;
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (!section) throw ConfigError("key '" + key + "' outside any section", line);
        const auto it = section->find(key);
        if (it == section->end())
            throw ConfigError("unknown key '" + key + "' in [" + section_name + "]", line);
        if (key != "source" && !seen.insert(section_name + "." + key).second)
            throw ConfigError("duplicate key '" + key + "' in [" + section_name + "]", line);
        if (value.empty()) throw ConfigError("missing value for '" + key + "'", line);
        it->second(cfg, value, line);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    return parse_config(f);
}

} // namespace mpoxrf
