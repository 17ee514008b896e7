#include <catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sphcam/sphcam.hpp"

using namespace sphcam;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("sphcam_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Result {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Result cli(const std::string& args) {
  const auto out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = std::string(SPHCAM_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string out_dir(const std::string& name) { return (workdir() / name).string(); }

/// key=value lines of a report, up to the first blank line.
std::map<std::string, std::string> report(const fs::path& p) {
  std::ifstream is(p);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line) && !line.empty()) {
    if (line[0] == '#') line.erase(0, 2);
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> data_rows(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  return rows;
}

}  // namespace

TEST_CASE("design") {
  const auto d = out_dir("design");
  auto r = cli("design --set L=8 --set n_bits=1 --set half_aperture_deg=20 -o " + d + " --set name=one");
  REQUIRE(r.code == 0);
  CHECK(report(d + "/one_report.txt").at("mask") == "1");

  r = cli("design --set L=36 --set n_bits=10 --set half_aperture_deg=10 -o " + d + " --set name=golden");
  REQUIRE(r.code == 0);
  const auto rep = report(d + "/golden_report.txt");
  CHECK(rep.at("mask") == "1111100000");
  CHECK(rep.count("config_hash"));
  CHECK(rep.count("throughput_pct_open"));
  CHECK(load_mask(d + "/golden.mask").to_string() == "1111100000");
  CHECK(slurp(d + "/golden_report.txt").find("\n35,") != std::string::npos);

  r = cli("design --set L=16 --set n_bits=2 --set half_aperture_deg=30 --set mode=stochastic -o " + d +
             " --set name=sto");
  REQUIRE(r.code == 0);
  r = cli("design --set L=16 --set n_bits=2 --set half_aperture_deg=30 -o " + d + " --set name=exh");
  REQUIRE(r.code == 0);
  CHECK(report(d + "/sto_report.txt").at("mask") == report(d + "/exh_report.txt").at("mask"));
}

TEST_CASE("simulate") {
  const auto d = out_dir("simulate");
  const std::string base = "simulate --set L=10 --set scene=synthetic:3 --set response=aperture:20 -o " + d;
  REQUIRE(cli(base + " --seed 5 --set name=a").code == 0);
  REQUIRE(cli(base + " --seed 5 --set name=b").code == 0);
  REQUIRE(cli(base + " --seed 6 --set name=c").code == 0);
  REQUIRE(cli(base + "/again --seed 5 --set name=a").code == 0);
  CHECK(slurp(d + "/a.csv") == slurp(d + "/again/a.csv"));
  CHECK(data_rows(d + "/a.csv") == data_rows(d + "/b.csv"));
  CHECK(data_rows(d + "/a.csv") != data_rows(d + "/c.csv"));
  REQUIRE(cli(base + " --seed 5 --set subsample=1.0 --set name=full").code == 0);
  CHECK(data_rows(d + "/a.csv") == data_rows(d + "/full.csv"));
  CHECK(report(d + "/a.csv").count("config_hash"));

  // constant scene, noiseless: every reading is brightness * throughput ratio
  SceneRaster flat(19, 10);
  for (auto& v : flat.data) v = 0.6;
  save_pnm(d + "/flat.pgm", flat);
  REQUIRE(cli(base + " --set scene=" + d + "/flat.pgm --set noiseless=1 --set brightness=0.5 --set name=flat").code == 0);
  std::ifstream is(d + "/flat.csv");
  const auto m = read_measurements(is);
  const double expect =
      0.5 * light_throughput(open_aperture(20.0, 10)) / light_throughput(open_aperture(kReferenceApertureDeg, 10));
  for (double v : m.values) CHECK_THAT(v, Catch::Matchers::WithinRel(expect, 1e-9));
}

TEST_CASE("reconstruct") {
  const auto d = out_dir("reconstruct");
  REQUIRE(cli("simulate --set L=8 --set scene=synthetic:2 --set response=optimal:10:45 --set noiseless=1 -o " + d)
              .code == 0);
  const std::string base = "reconstruct --set measurements=" + d + "/measurements.csv -o " + d;
  REQUIRE(cli(base + " --set method=direct --set name=direct").code == 0);
  REQUIRE(cli(base + " --set lambda_tv=0 --set max_iters=20000 --set tol=1e-15 --set truth=synthetic:2 --set name=mf")
              .code == 0);
  const auto grid = make_grid(8);
  const auto a = sht_inverse_real(load_coeffs(d + "/direct_coeffs.txt"), grid);
  const auto b = sht_inverse_real(load_coeffs(d + "/mf_coeffs.txt"), grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= 1e-4);

  const auto rep = report(d + "/mf_report.txt");
  CHECK(rep.count("snr_i_db"));
  CHECK(rep.count("config_hash"));
  CHECK_FALSE(report(d + "/direct_report.txt").count("snr_i_db"));
  std::ifstream is(d + "/mf_report.txt");
  std::string line;
  while (std::getline(is, line) && line != "iteration,objective") {
  }
  std::vector<double> obj;
  while (std::getline(is, line)) obj.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(obj.size() > 2);
  for (std::size_t k = 1; k < obj.size(); ++k) CHECK(obj[k] <= obj[k - 1]);
  CHECK(load_pnm(d + "/mf.pgm").width == grid.cols());
}

TEST_CASE("sweep") {
  const auto d = out_dir("sweep");
  REQUIRE(cli("simulate --set L=12 --set scene=synthetic:4 --set response=aperture:30 --seed 9 -o " + d).code == 0);
  REQUIRE(cli("reconstruct --set measurements=" + d + "/measurements.csv --set truth=synthetic:4 -o " + d).code == 0);
  REQUIRE(cli("sweep --set L=12 --set scene=synthetic:4 --set sweep=brightness --set values=0.4 "
                 "--set responses=aperture:30 --set seeds=1 --seed 9 -o " + d + " --set name=one")
              .code == 0);
  const auto rows = data_rows(d + "/one.csv");
  REQUIRE(rows.size() == 2u);
  const auto snr = report(d + "/recon_report.txt").at("snr_i_db");
  CHECK(rows[1] == "brightness,0.4,aperture:30," + snr + ",0,1");

  REQUIRE(cli("sweep --set L=8 --set sweep=subsample --set responses=aperture:30,aperture:10 --set seeds=2 "
                 "--set max_iters=50 -o " + d + " --set name=grid")
              .code == 0);
  CHECK(data_rows(d + "/grid.csv").size() == 1u + 4 * 2);
  CHECK(data_rows(d + "/grid_runs.csv").size() == 1u + 4 * 2 * 2);
  CHECK(report(d + "/grid.csv").count("config_hash"));
}

TEST_CASE("optimized mask beats the pinhole in a sweep at L=36") {
  const auto d = out_dir("order");
  REQUIRE(cli("sweep --set L=36 --set sweep=brightness --set values=0.4 --set seeds=1 -o " + d).code == 0);
  const auto rows = data_rows(d + "/sweep.csv");
  REQUIRE(rows.size() == 3u);
  auto snr_of = [](const std::string& row) {
    std::stringstream ss(row);
    std::string f;
    for (int k = 0; k < 4; ++k) std::getline(ss, f, ',');
    return std::stod(f);
  };
  CHECK(rows[1].find("optimal:10:10") != std::string::npos);
  CHECK(snr_of(rows[1]) > snr_of(rows[2]));
}

TEST_CASE("eval") {
  const auto d = out_dir("eval");
  REQUIRE(cli("eval --set L=16 --set response=optimal:10:10 -o " + d).code == 0);
  CHECK(report(d + "/eval.txt").count("robustness"));
  const auto grid = make_grid(8);
  save_pnm(d + "/truth.pgm", grid_to_raster(synthetic_scene(grid, 1), grid.cols(), grid.rows()));
  const auto r = cli("eval --set L=8 --set estimate=" + d + "/truth.pgm --set truth=synthetic:1 -o " + d);
  REQUIRE(r.code == 0);
  // 16-bit quantization only
  CHECK(std::stod(report(d + "/eval.txt").at("snr_i_db")) > 80.0);
}

TEST_CASE("errors carry a category and exit code") {
  auto r = cli("design --set bogus=1 -o " + out_dir("err"));
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[config]:", 0) == 0);
  r = cli("reconstruct --set measurements=/nonexistent/m.csv -o " + out_dir("err"));
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error[io]:", 0) == 0);
  r = cli("simulate --set L=8 --set scene=synthetic --set response=aperture:-5 -o " + out_dir("err"));
  CHECK(r.code == 4);
  r = cli("design --set n_bits=30 -o " + out_dir("err"));
  CHECK(r.code != 0);
  r = cli("nosuchcommand");
  CHECK(r.code == 2);
  CHECK(cli("design --help").code == 0);
}
