#include <sys/wait.h>

#include <cmath>
#include <cstdlib>

#include "doctest.h"

#include "agetrait/trajectory_io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

Result run(const std::string& args, const std::string& env = "") {
  const auto dir = fs::temp_directory_path() / "agetrait-test-cli-io";
  fs::create_directories(dir);
  const std::string cmd = env + " " + AGETRAIT_CLI + " " + args + " >" + (dir / "out").string() + " 2>" +
                          (dir / "err").string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = testing::slurp(dir / "err");
  return r;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

// Header must match and every field of every row must be a number or empty where allowed.
void check_schema(const fs::path& path, const std::vector<std::string>& header, bool allow_empty = false,
                  bool first_is_label = false) {
  const auto rows = testing::read_csv(path);
  REQUIRE(!rows.empty());
  CHECK(rows[0] == header);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == header.size());
    for (std::size_t j = first_is_label ? 1 : 0; j < header.size(); ++j) {
      if (allow_empty && rows[i][j].empty()) continue;
      REQUIRE(is_number(rows[i][j]));
    }
  }
}

}  // namespace

TEST_CASE("simulate is deterministic and reproducible from meta.json") {
  const auto dir = testing::scratch_dir("cli-sim");
  const std::string common = "simulate --model example1 --seed 7 --horizon 0.3 --n 200 --initial-count 200 ";
  REQUIRE(run(common + "--out " + (dir / "a").string()).code == 0);
  REQUIRE(run(common + "--out " + (dir / "b").string()).code == 0);
  CHECK(testing::slurp(dir / "a" / "mass.csv") == testing::slurp(dir / "b" / "mass.csv"));
  REQUIRE(run("simulate --config " + (dir / "a" / "meta.json").string() + " --out " + (dir / "c").string()).code == 0);
  CHECK(testing::slurp(dir / "a" / "mass.csv") == testing::slurp(dir / "c" / "mass.csv"));
  CHECK(testing::slurp(dir / "a" / "snapshots" / "t_50.csv") == testing::slurp(dir / "c" / "snapshots" / "t_50.csv"));

  const auto meta = json::parse(testing::slurp(dir / "a" / "meta.json"));
  CHECK(meta.at("config").at("model").at("family") == "example1");
  CHECK(meta.at("config").at("seed") == 7);
  CHECK(meta.at("config").at("scheme") == "exact");

  check_schema(dir / "a" / "mass.csv", {"t", "mass"});
  check_schema(dir / "a" / "snapshots" / "t_0.csv", {"t", "trait_1", "age", "weight"});
  const auto traj = agetrait::read_trajectory(dir / "a");
  CHECK(traj.snapshots.size() == 101);
}

TEST_CASE("replicate output does not depend on threads") {
  const auto dir = testing::scratch_dir("cli-threads");
  const std::string common = "simulate --model critical --n 100 --initial-count 100 --replicates 4 --horizon 0.5 ";
  REQUIRE(run(common + "--threads 1 --out " + (dir / "a").string()).code == 0);
  REQUIRE(run(common + "--threads 3 --out " + (dir / "b").string()).code == 0);
  for (int k = 0; k < 4; ++k) {
    const std::string rep = "replicate_" + std::to_string(k);
    CHECK(testing::slurp(dir / "a" / rep / "mass.csv") == testing::slurp(dir / "b" / rep / "mass.csv"));
  }
  CHECK(testing::slurp(dir / "a" / "meta.json") == testing::slurp(dir / "b" / "meta.json"));
}

TEST_CASE("equilibrium for example 1 is exp(-a)") {
  const auto dir = testing::scratch_dir("cli-eq");
  REQUIRE(run("equilibrium --model example1 --points 5 --out " + dir.string()).code == 0);
  check_schema(dir / "equilibrium.csv",
               {"kind", "x", "a", "m_hat", "Z", "A_tail", "b_hat", "d_hat", "r_hat", "pr_hat", "U_hat"}, true, true);
  std::size_t densities = 0;
  for (const auto& row : testing::read_csv(dir / "equilibrium.csv")) {
    if (row[0] != "density") continue;
    ++densities;
    CHECK(std::abs(std::stod(row[3]) - std::exp(-std::stod(row[2]))) < 1e-8);
  }
  CHECK(densities > 5 * 100);
  REQUIRE(run("equilibrium --config " + (dir / "meta.json").string() + " --out " + (dir / "again").string()).code == 0);
  CHECK(testing::slurp(dir / "equilibrium.csv") == testing::slurp(dir / "again" / "equilibrium.csv"));
}

TEST_CASE("figure 1c data") {
  const auto dir = testing::scratch_dir("cli-fig");
  REQUIRE(run("reproduce-figure --id 1c --out " + dir.string()).code == 0);
  check_schema(dir / "snapshot.csv", {"t", "trait_1", "age", "weight"});
  const auto rows = testing::read_csv(dir / "snapshot.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][0]) == 0.5);
    CHECK(std::stod(rows[i][3]) == doctest::Approx(1e-3));
  }
  const auto meta = json::parse(testing::slurp(dir / "meta.json"));
  CHECK(meta.at("n") == 1000);
  CHECK(meta.at("initial_count") == 1000);
  CHECK(meta.at("config").at("initial_trait") == 1.5);
  CHECK(meta.at("model").at("family") == "example1");
  CHECK(fs::exists(dir / "equilibrium.csv"));
  REQUIRE(run("reproduce-figure --config " + (dir / "meta.json").string() + " --out " + (dir / "again").string()).code == 0);
  CHECK(testing::slurp(dir / "snapshot.csv") == testing::slurp(dir / "again" / "snapshot.csv"));
}

TEST_CASE("diagnose, cumulant and extinction artifacts") {
  const auto dir = testing::scratch_dir("cli-diag");
  REQUIRE(run("simulate --model critical --n 100 --initial-count 100 --replicates 5 --horizon 1 --snapshot-cadence 0.1 --out " +
              (dir / "sims").string())
              .code == 0);
  REQUIRE(run("cumulant --model critical --points 11 --lambda 2 --input " + (dir / "sims").string() + " --out " +
              (dir / "cum").string())
              .code == 0);
  check_schema(dir / "cum" / "cumulant.csv", {"t", "x", "u"});
  const auto lap = json::parse(testing::slurp(dir / "cum" / "laplace.json"));
  CHECK(lap.at("comparison").at("replicates") == 5);
  CHECK(lap.at("comparison").at("prediction").get<double>() == doctest::Approx(std::exp(-2.0 / 3.0)).epsilon(0.05));

  REQUIRE(run("diagnose --model critical --n 100 --initial-count 100 --replicates 3 --points 11 --out " +
              (dir / "diag").string())
              .code == 0);
  const auto diag = json::parse(testing::slurp(dir / "diag" / "diagnostics.json"));
  CHECK(diag.at("averaging").at("replicates") == 3);
  CHECK(diag.at("martingale").at("times").size() == 2);

  REQUIRE(run("extinction --model example1 --n 100 --initial-count 100 --replicates 3 --horizon 1 "
              "--domination-replicates 20 --lambda-draws 1000 --out " +
              (dir / "ext").string())
              .code == 0);
  check_schema(dir / "ext" / "extinction.csv", {"example_id", "seed", "extinction_time", "censored"});
  const auto dom = json::parse(testing::slurp(dir / "ext" / "domination.json"));
  CHECK(dom.at("m0").get<double>() == doctest::Approx(187.0588).epsilon(1e-5));
  CHECK(dom.at("hitting").contains("ci_upper"));
  CHECK(dom.at("lambda_check").at("violations") == 0);
}

TEST_CASE("output root from the environment") {
  const auto dir = testing::scratch_dir("cli-env");
  REQUIRE(run("equilibrium --points 3", "AGETRAIT_OUTPUT_ROOT=" + dir.string()).code == 0);
  CHECK(fs::exists(dir / "equilibrium" / "equilibrium.csv"));
}

TEST_CASE("errors have distinct exit codes and JSON messages") {
  const auto dir = testing::scratch_dir("cli-err");
  const Result bad_flag = run("simulate --no-such-flag");
  const Result bad_value = run("simulate --n x --out " + dir.string());
  const Result unknown = run("simulate --model nosuchmodel --out " + dir.string());
  const Result unwritable = run("equilibrium --points 3 --out /dev/null/sub");
  const Result combination = run("extinction --model critical --out " + dir.string());
  const Result scheme = run("simulate --model example2 --scheme exact --out " + dir.string());
  CHECK(bad_flag.code == 2);
  CHECK(bad_value.code == 2);
  CHECK(unknown.code == 3);
  CHECK(unwritable.code == 4);
  CHECK(combination.code == 5);
  CHECK(scheme.code == 5);
  for (const auto* r : {&bad_flag, &unknown, &unwritable, &combination}) {
    const auto j = json::parse(r->err);
    CHECK(j.at("exit_code") == r->code);
    CHECK(j.contains("message"));
  }
  CHECK(run("simulate").code == 0);  // defaults only; writes under ./agetrait-out
  fs::remove_all("agetrait-out");
}
