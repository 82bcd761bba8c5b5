#include "mpoxrf/commands.h"
#include "mpoxrf/config.h"
#include "mpoxrf/error.h"
#include "mpoxrf/image_io.h"
#include "mpoxrf/sic.h"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace mpoxrf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mpoxrf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string &name) const { return (path / name).string(); }
    static int &counter() {
        static int c = 0;
        return c;
    }
};

int config_error_line(const std::string &text) {
    std::istringstream in(text);
    try {
        parse_config(in);
    } catch (const ConfigError &e) {
        return e.line();
    }
    return -1;
}

std::string slurp(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string &args) {
    const std::string cmd = std::string(MPOXRF_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kMinimal = "[scene]\nsource = Cu point 0 0 8.0\n";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("reference configuration") {
    const RunConfig c = load_config(std::string(MPOXRF_CONFIG_DIR) + "/reference.cfg");
    CHECK(c.mpo.plate_side_mm == 20.0);
    CHECK(c.mpo.thickness_mm == 1.2);
    CHECK(c.mpo.pore_width_um == 20.0);
    CHECK(c.mpo.pitch_um == 25.0);
    CHECK(c.mpo.coating.Z == 77.0);
    CHECK(c.mpo.coating.rho == 22.56);
    CHECK(c.detector.n_x == 256);
    CHECK(c.detector.pitch_um == 55.0);
    CHECK(c.detector.energy_fwhm_kev == 1.12);
    CHECK(c.scene.ls_mm == 25.0);
    CHECK(c.scene.li_mm == 25.0);
    REQUIRE(c.scene.sources.size() == 1);
    CHECK(c.scene.sources[0].lines[0].energy_kev == 8.0);
    CHECK(c.analysis.window_sigma_mm == 1.5);
    for (const char *name : {"symmetric_35mm.cfg", "symmetric_45mm.cfg", "asymmetric_50_20mm.cfg", "ti_cu_mapping.cfg"})
        CHECK_NOTHROW(load_config(std::string(MPOXRF_CONFIG_DIR) + "/" + name));
}

TEST_CASE("config parsing") {
    std::istringstream in("# comment\n[mpo]\nreflectivity = constant 0.9  # lossy\n"
                          "coating = Au 79 196.97 19.3\n[scene]\nls_mm = 50\nli_mm=20\n"
                          "source = Ti rect -1 2 3 4 4.51:1,4.93:0.15\nsource = Cu point 1.5 0 8.05\n"
                          "[sim]\nphotons = 12345\nseed = 9\nworkers = 3\n");
    const RunConfig c = parse_config(in);
    CHECK(c.mpo.reflectivity.kind == Reflectivity::Kind::ConstantPerBounce);
    CHECK(c.mpo.reflectivity.r == 0.9);
    CHECK(c.mpo.coating.name == "Au");
    CHECK(c.scene.ls_mm == 50.0);
    CHECK(c.scene.li_mm == 20.0);
    REQUIRE(c.scene.sources.size() == 2);
    const auto &rect = std::get<RectShape>(c.scene.sources[0].shape);
    CHECK(rect.center_x_mm == -1.0);
    CHECK(rect.height_mm == 4.0);
    CHECK(c.scene.sources[0].lines.size() == 2);
    CHECK(c.scene.sources[0].lines[1].relative_intensity == 0.15);
    CHECK(std::get<PointShape>(c.scene.sources[1].shape).x_mm == 1.5);
    CHECK(c.sim.photons == 12345);
    CHECK(c.sim.workers == 3);
}

TEST_CASE("config errors carry line numbers") {
    CHECK(config_error_line("[mpo]\nthickness_mm = 1\npore_widht_um = 20\n") == 3);
    CHECK(config_error_line("[mpo]\n\n[bogus]\n") == 3);
    CHECK(config_error_line("thickness_mm = 1\n") == 1);
    CHECK(config_error_line("[mpo]\nthickness_mm = 1\nthickness_mm = 2\n") == 3);
    CHECK(config_error_line("[mpo]\nthickness_mm = 1.2mm\n") == 2);
    CHECK(config_error_line("[mpo]\nreflectivity = fresnel\n") == 2);
    CHECK(config_error_line("[scene]\nsource = Cu circle 0 0 8\n") == 2);
    CHECK(config_error_line("[scene]\nls_mm = 25\nsource = Cu point 0 0 -8\n") == 3);
    CHECK(config_error_line("[detector]\nn_x = -3\n") == 2);
    CHECK(config_error_line("[sim]\nworkers = 0\n") == 2);
    CHECK(config_error_line("[mpo]\nthickness_mm\n") == 2);
    // Cross-field checks run after parsing and carry no line.
    CHECK(config_error_line("[mpo]\npore_width_um = 30\n") == 0);
    CHECK_THROWS_AS(load_config("/no/such/file.cfg"), IoError);
}

TEST_CASE("SIC round trip") {
    DetectorSpec d;
    d.n_x = 5;
    d.n_y = 3;
    d.n_bins = 7;
    SpectralImage c = SpectralImage::empty_like(d);
    c.seed = 0xdeadbeefcafef00dull;
    c.photons = 123456789;
    std::mt19937_64 rng(1);
    for (auto &v : c.counts) v = rng();
    const auto bytes = encode_sic(c);
    CHECK(bytes.size() == kSicHeaderSize + 8 * 5 * 3 * 7);
    CHECK(std::to_integer<char>(bytes[0]) == 'S');
    CHECK(std::to_integer<int>(bytes[4]) == 5);
    const SpectralImage back = decode_sic(bytes);
    CHECK(back.counts == c.counts);
    CHECK(back.n_x == 5);
    CHECK(back.n_bins == 7);
    CHECK(back.e_bin_width_kev == c.e_bin_width_kev);
    CHECK(back.pixel_pitch_um == c.pixel_pitch_um);
    CHECK(back.seed == c.seed);
    CHECK(back.photons == c.photons);
    CHECK(encode_sic(back) == bytes);

    auto bad = bytes;
    bad[1] = std::byte{'X'};
    CHECK_THROWS_AS(decode_sic(bad), ParseError);
    bad.assign(bytes.begin(), bytes.end() - 3);
    try {
        decode_sic(bad);
        FAIL("truncated cube accepted");
    } catch (const ParseError &e) {
        CHECK(e.kind() == ParseError::Kind::Truncated);
    }
    bad = bytes;
    bad.push_back(std::byte{1});
    CHECK_THROWS_AS(decode_sic(bad), ParseError);
    bad.assign(bytes.begin(), bytes.begin() + 30);
    CHECK_THROWS_AS(decode_sic(bad), ParseError);

    TempDir dir;
    write_sic(dir / "c.sic", c);
    CHECK(read_sic(dir / "c.sic").counts == c.counts);
    CHECK(fs::file_size(dir / "c.sic") == bytes.size());
}

TEST_CASE("image and profile text formats") {
    Image2D img(3, 2, 55.0);
    img.values = {1.5, 0.0, 1e-17, 7, 8, 1.0 / 3.0};
    img.mask = {1, 1, 1, 1, 0, 1};
    std::stringstream ss;
    write_image_csv(ss, img);
    CHECK(ss.str().find("nan") != std::string::npos);
    const Image2D back = read_image_csv(ss, 55.0);
    CHECK(back.n_x == 3);
    CHECK(back.n_y == 2);
    CHECK(back.at(2, 1) == img.at(2, 1));
    CHECK(back.at(2, 0) == img.at(2, 0));
    CHECK(!back.valid(4));
    std::istringstream ragged("1,2\n3\n");
    CHECK_THROWS_AS(read_image_csv(ragged, 55.0), IoError);

    std::ostringstream pgm;
    Image2D ramp(10, 10, 55.0);
    for (std::size_t i = 0; i < 100; ++i) ramp.values[i] = static_cast<double>(i);
    write_pgm(pgm, ramp);
    std::istringstream pin(pgm.str());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    pin >> magic >> w >> h >> maxval;
    CHECK(magic == "P2");
    CHECK(w == 10);
    CHECK(h == 10);
    CHECK(maxval == 65535);
    int first = -1, last = -1, v = 0;
    for (int i = 0; i < 100 && pin >> v; ++i) {
        if (i == 0) first = v;
        last = v;
    }
    CHECK(first == 0);
    CHECK(last == 65535);

    PsfProfile p;
    p.positions_mm = {-0.1, 0.0, 0.1};
    p.intensities = {1, 5, 2};
    std::ostringstream pc;
    write_profile_csv(pc, p);
    CHECK(pc.str() == "position_mm,intensity\n-0.10000000000000001,1\n0,5\n0.10000000000000001,2\n");

    Image2D d(4, 4, 250.0);
    d.at(0, 0) = 1.0;
    std::ostringstream ac;
    write_atf_csv(ac, atf(d));
    std::istringstream ain(ac.str());
    std::string header;
    std::getline(ain, header);
    CHECK(header == "fy\\fx,-2,-1,0,1");
}

TEST_CASE("argument helpers") {
    CHECK(parse_window("2.5:5.5") == std::pair{2.5, 5.5});
    CHECK_THROWS_AS(parse_window("6-9"), UsageError);
    CHECK_THROWS_AS(parse_window("9:6"), UsageError);
    CHECK_THROWS_AS(parse_window("a:6"), UsageError);
    CHECK(parse_line_set("").lines.size() == 5);
    const LineSet two = parse_line_set("Ti:4.5,Cu:8.0");
    REQUIRE(two.lines.size() == 2);
    CHECK(two.lines[1].element == "Cu");
    CHECK_THROWS_AS(parse_line_set("Ti4.5,Cu:8"), UsageError);
    CHECK_THROWS_AS(parse_line_set("Cu:8,Ti:4.5"), ConfigError);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(UsageError("x")) == kExitUsage);
    CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
    CHECK(exit_code_for(IoError("x")) == kExitIo);
    CHECK(exit_code_for(ParseError(ParseError::Kind::Truncated, 3, "x")) == kExitIo);
    CHECK(exit_code_for(AnalysisError(AnalysisError::Kind::NoPeak, "x")) == kExitAnalysis);
    CHECK(exit_code_for(std::runtime_error("x")) == kExitInternal);
}

TEST_CASE("simulate writes reproducible cubes") {
    TempDir dir;
    save_text(dir / "run.cfg", kMinimal);
    std::ostringstream log;
    SimulateArgs a;
    a.config = dir / "run.cfg";
    a.photons = 0;
    a.out = dir / "empty.sic";
    cmd_simulate(a, log);
    const SpectralImage empty = read_sic(a.out);
    CHECK(empty.total() == 0);
    CHECK(empty.n_x == 256);
    CHECK(fs::file_size(a.out) == kSicHeaderSize + 8ull * 256 * 256 * 100);

    a.photons = 300000;
    a.seed = 5;
    a.out = dir / "a.sic";
    a.class_prefix = dir / "cls";
    cmd_simulate(a, log);
    a.out = dir / "b.sic";
    a.jobs = 2;
    a.class_prefix.clear();
    cmd_simulate(a, log);
    CHECK(slurp(dir / "a.sic") == slurp(dir / "b.sic"));
    CHECK(fs::exists(dir / "cls_central_focus.csv"));
    CHECK(log.str().find("class central_focus") != std::string::npos);
    CHECK(log.str().find("web_absorbed") != std::string::npos);

    a.out = "/nonexistent/dir/x.sic";
    CHECK_THROWS_AS(cmd_simulate(a, log), IoError);
}

TEST_CASE("command pipeline on a simulated scene") {
    TempDir dir;
    const std::string cfg = std::string(MPOXRF_CONFIG_DIR) + "/ti_cu_mapping.cfg";
    std::ostringstream log;
    SimulateArgs s;
    s.config = cfg;
    s.photons = 2000000;
    s.out = dir / "tc.sic";
    cmd_simulate(s, log);

    WindowArgs w;
    w.cube = s.out;
    w.windows = {{2.5, 5.5}, {6.0, 9.0}};
    w.out_prefix = dir / "win";
    cmd_window(w, log);
    CHECK(fs::exists(dir / "win_2.5-5.5keV.pgm"));
    CHECK(fs::exists(dir / "win_6-9keV.csv"));

    PsfArgs p;
    p.image = s.out;
    p.window = std::pair{6.0, 9.0};
    p.energy_kev = 8.0;
    p.config = cfg;
    p.out_prefix = dir / "cu";
    std::ostringstream psf_log;
    cmd_psf(p, psf_log);
    CHECK(psf_log.str().find("expected_arm_half_length_mm") != std::string::npos);
    CHECK(psf_log.str().find("fwhm_horizontal_mm") != std::string::npos);
    CHECK(slurp(dir / "cu_horizontal.csv").rfind("position_mm,intensity\n", 0) == 0);

    FlatfieldArgs f;
    f.image = s.out;
    f.flat = s.out;
    f.out_prefix = dir / "ff";
    cmd_flatfield(f, log);
    CHECK(fs::exists(dir / "ff.pgm"));

    AtfArgs at;
    at.image = dir / "win_6-9keV.csv";
    at.out = dir / "atf.csv";
    std::ostringstream atf_log;
    cmd_atf(at, atf_log);
    CHECK(atf_log.str().find("resolution_lp_per_mm") != std::string::npos);

    CleanArgs cl;
    cl.images = {dir / "win_6-9keV.csv", dir / "win_6-9keV.csv"};
    cl.out_prefix = dir / "clean";
    std::ostringstream clean_log;
    cmd_clean(cl, clean_log);
    CHECK(clean_log.str().find("background_ratio") != std::string::npos);
    CHECK(fs::exists(dir / "clean_idealized.pgm"));
}

TEST_CASE("calibration commands") {
    TempDir dir;
    std::ostringstream log;
    const LineSet lines = LineSet::standard();
    CalibrateArgs c;
    for (std::size_t i = 0; i < lines.lines.size(); ++i) {
        SynthEventsArgs s;
        s.energy_kev = lines.lines[i].energy_kev;
        s.n_x = 6;
        s.n_y = 5;
        s.per_pixel = 3000;
        s.seed = 100 + i;
        s.out = dir / (lines.lines[i].element + ".tpxe");
        s.truth_out = dir / "truth.csv";
        cmd_synth_events(s, log);
        c.events.emplace_back(lines.lines[i].element, s.out);
    }
    c.out = dir / "cal.csv";
    cmd_calibrate(c, log);
    std::ifstream cf(c.out);
    const CalibrationMap map = read_calibration_csv(cf);
    const PixelResponse truth = random_pixel_response(6, 5, 0.04, 0.06, 0.0, 0.0, 7);
    CHECK(map.dead_count() == 0);
    for (std::size_t p = 0; p < map.pixels.size(); ++p)
        CHECK(map.pixels[p].gain == doctest::Approx(truth.gain[p]).epsilon(0.02));

    ApplyCalArgs ap;
    ap.events = dir / "Cu.tpxe";
    ap.cal = c.out;
    ap.out = dir / "cu.sic";
    cmd_apply_cal(ap, log);
    CHECK(read_sic(ap.out).total() > 0);

    CalibrateArgs missing = c;
    missing.events.erase(missing.events.begin() + 1);
    try {
        cmd_calibrate(missing, log);
        FAIL("missing line accepted");
    } catch (const UsageError &e) {
        CHECK(std::string(e.what()).find("Fe") != std::string::npos);
    }
}

TEST_CASE("command-line exit status") {
    TempDir dir;
    save_text(dir / "ok.cfg", kMinimal);
    save_text(dir / "bad.cfg", "[mpo]\nthicknes_mm = 1\n");
    save_text(dir / "zero.csv", "0,0,0,0\n0,0,0,0\n0,0,0,0\n0,0,0,0\n");
    CHECK(run_cli("simulate -c " + (dir / "ok.cfg") + " -n 1000 -o " + (dir / "x.sic")) == kExitOk);
    CHECK(run_cli("simulate -c " + (dir / "bad.cfg") + " -n 10 -o " + (dir / "y.sic")) == kExitConfig);
    CHECK(run_cli("simulate -c " + (dir / "missing.cfg") + " -n 10 -o " + (dir / "y.sic")) == kExitIo);
    CHECK(run_cli("psf -i " + (dir / "zero.csv")) == kExitAnalysis);
    CHECK(run_cli("simulate --no-such-flag") == kExitUsage);
    CHECK(run_cli("") == kExitUsage);
    CHECK(run_cli("window -i " + (dir / "x.sic") + " -r 6-9 -o " + (dir / "w")) == kExitUsage);
    save_text(dir / "junk.sic", "SIC1 not really");
    CHECK(run_cli("window -i " + (dir / "junk.sic") + " -r 6:9 -o " + (dir / "w")) == kExitIo);
    CHECK(run_cli("--help") == kExitOk);
}

} // TEST_SUITE
