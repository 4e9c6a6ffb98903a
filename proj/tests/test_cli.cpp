#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "json.hpp"
#include "tuckervar/estimator.hpp"
#include "tuckervar/process.hpp"
#include "tuckervar/rng.hpp"
#include "tuckervar/simulation.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace tuckervar;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kCli = TUCKERVAR_CLI_PATH;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

fs::path scratch() {
  fs::path dir = "cli_scratch";
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const std::string& args) {
  fs::path dir = scratch();
  std::string out_path = (dir / "stdout.txt").string();
  std::string err_path = (dir / "stderr.txt").string();
  std::string cmd =
      std::string(kCli) + " " + args + " > " + out_path + " 2> " + err_path;
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WEXITSTATUS(status);
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

double run_cli_ms(const std::string& args, RunResult& result) {
  auto start = std::chrono::steady_clock::now();
  result = run_cli(args);
  auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

std::string seasonal_panel_csv(int n, int t_len, std::uint64_t seed,
                               const std::string& name) {
  GlpModel model = make_dgp({DgpKind::seasonal_var_411, n, 2, seed});
  PanelData panel = simulate(model, t_len, 300, seed + 1);
  std::string path = (scratch() / name).string();
  write_csv(panel, path);
  return path;
}

std::string noise_panel_csv(int n, int t_len, std::uint64_t seed,
                            const std::string& name) {
  Rng rng(seed);
  PanelData panel;
  panel.n = n;
  panel.t_len = t_len;
  panel.values = rng.normal_matrix(n, t_len);
  panel.means = Eigen::VectorXd::Zero(n);
  panel.scales = Eigen::VectorXd::Ones(n);
  std::string path = (scratch() / name).string();
  write_csv(panel, path);
  return path;
}

}  // namespace

TEST_CASE("help exits 0 and documents the interface") {
  RunResult top = run_cli("--help");
  CHECK(top.code == 0);
  CHECK(top.out.find("Exit codes: 0 success, 2 usage or IO error") !=
        std::string::npos);
  for (const char* name : {"fit", "select", "simulate", "forecast", "convert"})
    CHECK(top.out.find(name) != std::string::npos);

  RunResult fit = run_cli("fit --help");
  CHECK(fit.code == 0);
  CHECK(fit.out.find("--warm-start-iters") != std::string::npos);
  CHECK(fit.out.find("--threshold") != std::string::npos);

  CHECK(run_cli("").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
}

TEST_CASE("fit reports a missing panel by path with exit 2") {
  RunResult r = run_cli("fit definitely_absent.csv --t0 2");
  CHECK(r.code == 2);
  CHECK(r.err.find("definitely_absent.csv") != std::string::npos);
}

TEST_CASE("fit writes the result JSON and a readable summary") {
  std::string csv = seasonal_panel_csv(4, 200, 31, "fit_panel.csv");
  std::string out = (scratch() / "fit.json").string();
  RunResult r = run_cli("fit " + csv +
                        " --t0 5 --r1 2 --r2 2 --s 3 --step 0.1"
                        " --max-iter 80 --tol 1e-4 --out " +
                        out);
  CHECK(r.code == 0);
  CHECK(r.out.find("selected lags:") != std::string::npos);
  CHECK(r.out.find("response factor loadings (u1):") != std::string::npos);
  CHECK(r.out.find("predictor factor loadings (u2):") != std::string::npos);

  FitResult fit = fit_result_from_json(slurp(out));
  CHECK(fit.factors.u1.rows() == 4);
  CHECK(fit.factors.u1.cols() == 2);
  CHECK(fit.support.lags.size() == 3);
}

TEST_CASE("fit --select picks from a grid file and writes the AIC table") {
  std::string csv = seasonal_panel_csv(4, 220, 37, "sel_panel.csv");
  std::string grid = (scratch() / "grid.txt").string();
  spill(grid, "2 2 2\n2,2,3\n# comment line\n1 1 2\n");
  std::string out = (scratch() / "sel_fit.json").string();
  std::string table = (scratch() / "sel_fit.aic.csv").string();
  RunResult r = run_cli("fit " + csv +
                        " --t0 5 --step 0.1 --max-iter 60 --tol 1e-4"
                        " --select " +
                        grid + " --aic-table " + table + " --out " + out);
  CHECK(r.code == 0);
  CHECK(r.out.find("aic selected r1=") != std::string::npos);
  CHECK(fs::exists(out));

  std::string body = slurp(table);
  CHECK(body.rfind("r1,r2,s,aic,loss,diverged\n", 0) == 0);
  CHECK(std::count(body.begin(), body.end(), '\n') == 4);

  RunResult sel = run_cli("select " + csv +
                          " --t0 5 --step 0.1 --max-iter 60 --tol 1e-4"
                          " --grid " +
                          grid + " --out " + (scratch() / "aic2.csv").string());
  CHECK(sel.code == 0);
  CHECK(sel.out.find("best r1=") != std::string::npos);
  CHECK(fs::exists(scratch() / "aic2.csv"));

  RunResult bad = run_cli("select " + csv + " --t0 5 --grid " + grid +
                          "_nope --out x.csv");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("grid") != std::string::npos);
}

TEST_CASE("config files merge under flags and reject unknown keys") {
  std::string csv = seasonal_panel_csv(3, 120, 41, "cfg_panel.csv");
  std::string cfg = (scratch() / "run.cfg").string();
  spill(cfg, "# fit knobs\nmax_iter = 7\nstep = 0.05\ntol = 1e-15\n");
  std::string out1 = (scratch() / "cfg1.json").string();
  std::string out2 = (scratch() / "cfg2.json").string();

  RunResult file_only = run_cli("fit " + csv +
                                " --t0 3 --r1 1 --r2 1 --s 1 --config " + cfg +
                                " --out " + out1);
  CHECK(file_only.code == 0);
  CHECK(fit_result_from_json(slurp(out1)).iterations_used == 7);

  RunResult flag_wins = run_cli("fit " + csv +
                                " --t0 3 --r1 1 --r2 1 --s 1 --config " + cfg +
                                " --max-iter 9 --out " + out2);
  CHECK(flag_wins.code == 0);
  CHECK(fit_result_from_json(slurp(out2)).iterations_used == 9);

  std::string bad_key = (scratch() / "bad_key.cfg").string();
  spill(bad_key, "bogus_knob=1\n");
  RunResult unknown =
      run_cli("fit " + csv + " --t0 3 --config " + bad_key + " --out x.json");
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("bogus_knob") != std::string::npos);

  std::string bad_line = (scratch() / "bad_line.cfg").string();
  spill(bad_line, "just a line without equals\n");
  RunResult malformed =
      run_cli("fit " + csv + " --t0 3 --config " + bad_line + " --out x.json");
  CHECK(malformed.code == 2);
  CHECK(malformed.err.find("key=value") != std::string::npos);
}

TEST_CASE("fit divergence exits 3 with a message") {
  std::string csv = seasonal_panel_csv(3, 100, 43, "div_panel.csv");
  RunResult r = run_cli("fit " + csv +
                        " --t0 3 --r1 1 --r2 1 --s 1 --step 1e9"
                        " --backtrack false --out " +
                        (scratch() / "div.json").string());
  CHECK(r.code == 3);
  CHECK(r.err.find("numerical failure") != std::string::npos);
}

TEST_CASE("simulate rejects unknown experiments by listing the valid ones") {
  RunResult r = run_cli("simulate --experiment nope --out .");
  CHECK(r.code == 2);
  CHECK(r.err.find("error_vs_sparsity") != std::string::npos);
  CHECK(r.err.find("rate_scaling") != std::string::npos);
  CHECK(r.err.find("ht_vs_st") != std::string::npos);
}

TEST_CASE("simulate smoke run finishes quickly and is reproducible") {
  fs::path a = scratch() / "sim_a";
  fs::path b = scratch() / "sim_b";
  fs::create_directories(a);
  fs::create_directories(b);
  std::string common =
      "simulate --experiment error_vs_sparsity --reps 1 --seed 4 --out ";

  RunResult first;
  double ms = run_cli_ms(common + a.string(), first);
  CHECK(first.code == 0);
  CHECK(ms < 60000.0);  // the documented budget for a minimal N=10 run

  RunResult second = run_cli(common + b.string());
  CHECK(second.code == 0);
  for (const char* name : {"error_vs_sparsity.csv", "error_vs_sparsity_agg.csv",
                           "error_vs_sparsity.json"}) {
    std::string left = slurp((a / name).string());
    CHECK(!left.empty());
    CHECK(left == slurp((b / name).string()));
  }
  std::string tidy = slurp((a / "error_vs_sparsity.csv").string());
  CHECK(tidy.rfind("s,rep,diverged,estimation,approximation,truncation,"
                   "parameter\n",
                   0) == 0);
}

TEST_CASE("simulate covers the rate and stability studies") {
  fs::path dir = scratch() / "sim_misc";
  fs::create_directories(dir);

  RunResult rate = run_cli(
      "simulate --experiment rate_scaling --n 6 --r 2 --t-grid 80,120"
      " --s 2 --reps 2 --seed 9 --max-iter 120 --warm-start-iters 20 --out " +
      dir.string());
  CHECK(rate.code == 0);
  std::string agg = slurp((dir / "rate_scaling_agg.csv").string());
  CHECK(std::count(agg.begin(), agg.end(), '\n') == 3);
  CHECK(slurp((dir / "rate_scaling.json").string()).find("rate_scaling") !=
        std::string::npos);

  RunResult stab = run_cli(
      "simulate --experiment ht_vs_st --n 6 --r 2 --t-grid 200 --t0-grid 8"
      " --s-grid 3,5 --lambda-grid 0.1,0.2 --reps 2 --seed 9 --max-iter 120"
      " --warm-start-iters 20 --out " +
      dir.string());
  CHECK(stab.code == 0);
  std::string stab_agg = slurp((dir / "ht_vs_st_agg.csv").string());
  CHECK(std::count(stab_agg.begin(), stab_agg.end(), '\n') == 2);
  CHECK(slurp((dir / "ht_vs_st.json").string()).find("ht_vs_st") !=
        std::string::npos);

  RunResult bad_rule = run_cli(
      "simulate --experiment rate_scaling --t0-rule sometimes --out " +
      dir.string());
  CHECK(bad_rule.code == 2);
  CHECK(bad_rule.err.find("sometimes") != std::string::npos);
}

TEST_CASE("forecast writes metrics and validates its plan") {
  std::string csv = noise_panel_csv(3, 120, 47, "noise_panel.csv");
  std::string out = (scratch() / "metrics.json").string();
  std::string csv_out = (scratch() / "metrics.csv").string();
  RunResult r = run_cli("forecast " + csv +
                        " --t0 2 --r1 1 --r2 1 --s 1 --step 0.1"
                        " --max-iter 40 --tol 1e-4 --first 60 --last 119"
                        " --refit-every 0 --out " +
                        out + " --csv-out " + csv_out);
  CHECK(r.code == 0);
  CHECK(r.out.find("msfe:") != std::string::npos);

  json doc = json::parse(slurp(out));
  CHECK(doc["origins"].size() == 60);
  CHECK(doc["msfe"].is_number());
  CHECK(doc.contains("per_origin_squared"));
  CHECK(slurp(csv_out).rfind("origins,skipped,msfe,mafe\n", 0) == 0);

  RunResult bad = run_cli("forecast " + csv +
                          " --t0 4 --first 4 --last 100 --out x.json");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("first_origin") != std::string::npos);
}

TEST_CASE("forecast refits once when asked, which is visibly cheaper") {
  std::string csv = seasonal_panel_csv(4, 160, 53, "speed_panel.csv");
  std::string flags = " --t0 4 --r1 2 --r2 2 --s 3 --step 0.1 --max-iter 150"
                      " --tol 1e-6 --first 80 --last 159 --out ";

  RunResult once, always;
  double once_ms = run_cli_ms("forecast " + csv + flags +
                                  (scratch() / "m0.json").string() +
                                  " --refit-every 0",
                              once);
  double always_ms = run_cli_ms("forecast " + csv + flags +
                                    (scratch() / "m1.json").string() +
                                    " --refit-every 1",
                                always);
  CHECK(once.code == 0);
  CHECK(always.code == 0);
  CHECK(2.0 * once_ms < always_ms);
}

TEST_CASE("convert maps MA to AR and back through the coeffs schema") {
  Rng rng(59);
  Eigen::MatrixXd psi = 0.4 * rng.normal_matrix(3, 3);
  json doc;
  doc["schema"] = "tuckervar-coeffs-v1";
  doc["kind"] = "ma";
  doc["n"] = 3;
  doc["matrices"] = json::array();
  json rows = json::array();
  for (int i = 0; i < 3; ++i) {
    json row = json::array();
    for (int j = 0; j < 3; ++j) row.push_back(psi(i, j));
    rows.push_back(row);
  }
  doc["matrices"].push_back(rows);
  std::string in = (scratch() / "ma.json").string();
  spill(in, doc.dump(2));

  std::string ar_path = (scratch() / "ar.json").string();
  RunResult r = run_cli("convert " + in + " --to ar --horizon 6 --out " +
                        ar_path);
  CHECK(r.code == 0);

  json ar_doc = json::parse(slurp(ar_path));
  CHECK(ar_doc["schema"] == "tuckervar-coeffs-v1");
  CHECK(ar_doc["kind"] == "ar");
  CHECK(ar_doc["matrices"].size() == 6);
  std::vector<Eigen::MatrixXd> want = ma_to_ar({psi}, 6);
  for (int k = 0; k < 6; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(ar_doc["matrices"][k][i][j].get<double>() ==
              doctest::Approx(want[k](i, j)).epsilon(1e-12));

  std::string ma_back = (scratch() / "ma_back.json").string();
  RunResult back = run_cli("convert " + ar_path + " --to ma --horizon 1"
                           " --out " +
                           ma_back);
  CHECK(back.code == 0);
  json round = json::parse(slurp(ma_back));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(round["matrices"][0][i][j].get<double>() ==
            doctest::Approx(psi(i, j)).epsilon(1e-12));

  CHECK(run_cli("convert " + in + " --to ma --out x.json").code == 2);
  CHECK(run_cli("convert " + in + " --to sideways --out x.json").code == 2);
  std::string junk = (scratch() / "junk.json").string();
  spill(junk, "{\"schema\":\"other\"}");
  RunResult bad = run_cli("convert " + junk + " --to ar --out x.json");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("tuckervar-coeffs-v1") != std::string::npos);
}
