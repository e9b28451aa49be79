#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <unistd.h>

#include "doctest.h"
#include "pdmp/cli.hpp"
#include "pdmp/diagnostics.hpp"
#include "pdmp/io.hpp"

using namespace pdmp;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
  static inline int counter = 0;
  fs::path root;
  Sandbox() {
    root = fs::temp_directory_path() / fmt::format("pdmp_cli_test_{}_{}", ::getpid(), counter++);
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Sandbox() { fs::remove_all(root); }

  std::string config(const std::string& name, const std::string& text) const {
    const auto path = root / name;
    write_text(path, text);
    return path.string();
  }
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::string& sub, const RunOptions& opts) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(sub, opts, out, err);
  return {code, out.str(), err.str()};
}

Json manifest(const fs::path& dir) { return Json::parse(slurp(dir / "manifest.json")); }

const char* kDirac =
    "seed = 42\n"
    "[model]\n"
    "name = \"dirac-trap\"\n"
    "lambda = 1.0\n"
    "[simulation]\n"
    "n_traj = 50\n"
    "n_steps = 10\n"
    "burn_in = 200\n"
    "n_keep = 20\n"
    "[rate]\n"
    "n_max = 6\n"
    "n_rep = 500\n"
    "n_boot = 2\n";

const char* kLines =
    "seed = 5\n"
    "[model]\n"
    "name = \"contracting-lines\"\n"
    "[diagnose]\n"
    "y_hat = [1.5]\n"
    "mode = 1\n"
    "path_modes = [1]\n"
    "path_times = [0.1]\n"
    "path_thetas = [1]\n"
    "n_mc = 2000\n"
    "n_pairs = 2000\n"
    "attempts = 20\n";

}  // namespace

TEST_CASE("simulate writes trajectories and a manifest") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .out_dir = (box.root / "sim").string()};
  const auto r = invoke("simulate", opts);
  CHECK(r.code == kExitOk);
  const auto csv = slurp(box.root / "sim" / "trajectories.csv");
  CHECK(csv.rfind("traj_id,n,tau,y_1,mode,theta\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 50 * 11);
  const auto m = manifest(box.root / "sim");
  CHECK(m["status"] == "ok");
  CHECK(m["seed"] == 42);
  CHECK(m["outputs"] == Json::array({"trajectories.csv"}));
  CHECK(m["config"].get<std::string>().find("name = \"dirac-trap\"") != std::string::npos);
  CHECK(m["build"].contains("eigen"));
}

TEST_CASE("json format") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .out_dir = (box.root / "o").string(),
                  .format = "json"};
  REQUIRE(invoke("simulate", opts).code == kExitOk);
  const auto j = Json::parse(slurp(box.root / "o" / "trajectories.json"));
  CHECK(j.size() == 50);
  CHECK(j[0]["tau"].size() == 11);
}

TEST_CASE("invariant on the dirac trap is atomic-singular") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .out_dir = (box.root / "inv").string()};
  const auto r = invoke("invariant", opts);
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("atomic-singular") != std::string::npos);
  const auto report = Json::parse(slurp(box.root / "inv" / "continuity.json"));
  CHECK(report["verdict"] == "atomic-singular");
  CHECK(report["n_atoms"] == 50 * 20);
  CHECK(fs::exists(box.root / "inv" / "measure.csv"));
  CHECK(fs::exists(box.root / "inv" / "histogram.csv"));
}

TEST_CASE("fm-distance between two measure files") {
  Sandbox box;
  write_text(box.root / "a.csv", "y_1,mode,weight\n0,1,1\n");
  write_text(box.root / "b.csv", "y_1,mode,weight\n0.25,1,1\n");
  RunOptions opts{.out_dir = (box.root / "fm").string(),
                  .inputs = {(box.root / "a.csv").string(), (box.root / "b.csv").string()}};
  const auto r = invoke("fm-distance", opts);
  CHECK(r.code == kExitOk);
  CHECK(r.out == "0.25\n");
  CHECK(Json::parse(slurp(box.root / "fm" / "fm_distance.json"))["d_fm"] == 0.25);

  opts.inputs.pop_back();
  CHECK(invoke("fm-distance", opts).code == kExitUsage);
}

TEST_CASE("rate writes the table and the fit") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .out_dir = (box.root / "rate").string()};
  const auto r = invoke("rate", opts);
  CHECK(r.code == kExitOk);
  const auto fit = Json::parse(slurp(box.root / "rate" / "rate_fit.json"));
  CHECK(fit["beta"].get<double>() > 0.0);
  CHECK(fit["beta"].get<double>() < 1.0);
  CHECK(slurp(box.root / "rate" / "rate.csv").rfind("n,d_n,noise_floor,used\n", 0) == 0);
}

TEST_CASE("diagnose rank on the contracting lines passes with rank 1") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("lines.toml", kLines), .out_dir = (box.root / "diag").string(),
                  .check = "rank"};
  const auto r = invoke("diagnose", opts);
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("rank: pass, rank 1") != std::string::npos);
  const auto report = Json::parse(slurp(box.root / "diag" / "diagnostics.json"));
  CHECK(report["overall"] == "pass");
  REQUIRE(report["checks"].size() == 1);
  CHECK(report["checks"][0]["name"] == "rank");
}

TEST_CASE("full diagnose on the contracting lines") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("lines.toml", kLines), .out_dir = (box.root / "diag").string()};
  const auto r = invoke("diagnose", opts);
  CHECK(r.code == kExitOk);
  const auto report = Json::parse(slurp(box.root / "diag" / "diagnostics.json"));
  CHECK(report["overall"] == "pass");
  CHECK(report["checks"].size() == 6 + 6);
}

TEST_CASE("diagnose on the dirac trap fails the rank check") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .out_dir = (box.root / "d").string(),
                  .check = "rank"};
  const auto r = invoke("diagnose", opts);
  CHECK(r.code == kExitCheckFailed);
  CHECK(manifest(box.root / "d")["status"] == "check-failed");
  CHECK(fs::exists(box.root / "d" / "diagnostics.json"));
}

TEST_CASE("correspond on the dirac trap") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .out_dir = (box.root / "c").string()};
  const auto r = invoke("correspond", opts);
  CHECK(r.code == kExitOk);
  const auto j = Json::parse(slurp(box.root / "c" / "correspondence.json"));
  CHECK(j["d_WG"].get<double>() < 1e-12);
  CHECK(j["pass"] == true);
}

TEST_CASE("usage errors exit 2 and still write a manifest") {
  Sandbox box;
  const auto out = (box.root / "bad").string();

  auto r = invoke("simulate", RunOptions{.config_path = box.config("neg.toml", "seed = 1\n[model]\nname = \"dirac-trap\"\nlambda = -1\n"),
                                         .out_dir = out});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("line 4: lambda must be > 0") != std::string::npos);
  auto m = manifest(out);
  CHECK(m["status"] == "usage-error");
  CHECK(m["exit_code"] == 2);
  CHECK(m["seed"].is_null());

  CHECK(invoke("simulate", RunOptions{.out_dir = out}).code == kExitUsage);
  CHECK(invoke("frobnicate", RunOptions{.config_path = box.config("d.toml", kDirac), .out_dir = out}).code == kExitUsage);
  CHECK(manifest(out)["subcommand"] == "frobnicate");
  CHECK(invoke("simulate", RunOptions{.config_path = (box.root / "missing.toml").string(), .out_dir = out}).code ==
        kExitUsage);
  CHECK(invoke("simulate", RunOptions{.config_path = box.config("d.toml", kDirac), .out_dir = out, .format = "xml"})
            .code == kExitUsage);
  CHECK(invoke("simulate", RunOptions{.config_path = box.config("d.toml", kDirac), .out_dir = out, .workers = 0})
            .code == kExitUsage);
  CHECK(invoke("diagnose", RunOptions{.config_path = box.config("d.toml", kDirac), .out_dir = out, .check = "vibes"})
            .code == kExitUsage);
}

TEST_CASE("flag overrides reach the manifest") {
  Sandbox box;
  RunOptions opts{.config_path = box.config("dirac.toml", kDirac), .seed = 99, .out_dir = (box.root / "s").string(),
                  .workers = 3};
  REQUIRE(invoke("simulate", opts).code == kExitOk);
  const auto m = manifest(box.root / "s");
  CHECK(m["seed"] == 99);
  CHECK(m["workers"] == 3);
  CHECK(m["config"].get<std::string>().find("seed = 99") != std::string::npos);
}

TEST_CASE("outputs are byte-identical across runs and worker counts") {
  Sandbox box;
  const auto config = box.config("dirac.toml", kDirac);
  const std::vector<std::pair<std::string, std::vector<std::string>>> pipelines{
      {"simulate", {"trajectories.csv"}},
      {"invariant", {"measure.csv", "histogram.csv", "continuity.json"}},
      {"rate", {"rate.csv", "rate_fit.json"}},
      {"correspond", {"correspondence.json"}}};
  for (const auto& [sub, files] : pipelines) {
    std::vector<std::string> first;
    for (int workers : {1, 8, 1}) {
      const auto dir = box.root / fmt::format("{}_{}", sub, workers);
      fs::remove_all(dir);
      RunOptions opts{.config_path = config, .out_dir = dir.string(), .workers = workers};
      REQUIRE(invoke(sub, opts).code == kExitOk);
      std::vector<std::string> contents;
      for (const auto& f : files) contents.push_back(slurp(dir / f));
      if (first.empty()) {
        first = contents;
      } else {
        for (std::size_t k = 0; k < files.size(); ++k) {
          INFO(sub, " ", files[k], " workers=", workers);
          CHECK(contents[k] == first[k]);
        }
      }
    }
  }
}
