#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cpfs/cli.hpp"

using namespace cpfs;

namespace {

int run_cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv{"cpfs"};
  argv.insert(argv.end(), args.begin(), args.end());
  return cli::dispatch(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/cpfs_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("gen-tree writes a parseable 15-vertex file") {
  TempFile out("tree.txt");
  int rc = run_cli({"gen-tree", "--offspring", "det:2", "--fitness", "const:1",
                    "--max-gen", "3", "--seed", "7", "--out", out.path.c_str()});
  REQUIRE(rc == 0);
  WeightedTree t = parse_tree(slurp(out.path));
  REQUIRE(t.size() == 15);
}

TEST_CASE("verify exits 0 and emits the check CSV") {
  TempFile out("verify.csv");
  int rc = run_cli({"verify", "--suite", "exact", "--instances", "10", "--seed", "1",
                    "--out", out.path.c_str()});
  REQUIRE(rc == 0);
  std::string body = slurp(out.path);
  REQUIRE(body.find("check_name,instance_id,deviation,tolerance,pass") !=
          std::string::npos);
  REQUIRE(body.find("pi0_identity") != std::string::npos);
}

TEST_CASE("config file fills unset flags; flags win") {
  TempFile cfg("cfg.txt");
  {
    std::ofstream f(cfg.path);
    f << "# comment line\n";
    f << "trials = 500\n";
    f << "seed=99\n";
  }
  RunConfig parsed = load_config(cfg.path);
  REQUIRE(parsed.get("trials") == "500");
  REQUIRE(parsed.get("seed") == "99");

  TempFile out_a("cfg_a.csv"), out_b("cfg_b.csv");
  // trials from file, seed overridden by the flag
  int rc = run_cli({"ychain", "--lambda", "1", "--f", "1", "--k", "3", "--config",
                    cfg.path.c_str(), "--seed", "5", "--trials", "200", "--out",
                    out_a.path.c_str()});
  REQUIRE(rc == 0);
  std::string body = slurp(out_a.path);
  REQUIRE(body.find("# seed: 5") != std::string::npos);

  int rc2 = run_cli({"ychain", "--lambda", "1", "--f", "1", "--k", "3", "--config",
                     cfg.path.c_str(), "--trials", "200", "--out",
                     out_b.path.c_str()});
  REQUIRE(rc2 == 0);
  REQUIRE(slurp(out_b.path).find("# seed: 99") != std::string::npos);
}

TEST_CASE("config file errors") {
  TempFile cfg("bad_cfg.txt");
  {
    std::ofstream f(cfg.path);
    f << "trials=5\nnot a key value line\n";
  }
  try {
    load_config(cfg.path);
    FAIL("expected malformed-line error");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
  }
  TempFile cfg2("bad_key.txt");
  {
    std::ofstream f(cfg2.path);
    f << "no_such_key=5\n";
  }
  try {
    load_config(cfg2.path);
    FAIL("expected unknown-key error");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("valid keys") != std::string::npos);
  }
}

TEST_CASE("identical runs are byte identical at any job count") {
  TempFile a("det_a.csv"), b("det_b.csv");
  auto args = [&](const std::string& out, const char* jobs) {
    return std::vector<const char*>{
        "sweep",  "--offspring", "det:2",   "--fitness", "const:1",
        "--lambda", "0.2:0.2:0.6", "--horizon", "5",     "--trials",
        "300",    "--max-vertices", "500",  "--seed",    "11",
        "--jobs", jobs,          "--out",   out.c_str()};
  };
  {
    auto v = args(a.path, "1");
    std::vector<const char*> argv{"cpfs"};
    argv.insert(argv.end(), v.begin(), v.end());
    REQUIRE(cli::dispatch(static_cast<int>(argv.size()), argv.data()) == 0);
  }
  {
    auto v = args(b.path, "8");
    std::vector<const char*> argv{"cpfs"};
    argv.insert(argv.end(), v.begin(), v.end());
    REQUIRE(cli::dispatch(static_cast<int>(argv.size()), argv.data()) == 0);
  }
  REQUIRE(slurp(a.path) == slurp(b.path));
}

TEST_CASE("unknown flags and missing subcommands exit 1") {
  REQUIRE(run_cli({"no-such-command"}) == 1);
  REQUIRE(run_cli({"gen-tree", "--bogus-flag", "1"}) == 1);
}

TEST_CASE("CPFS_SEED provides the fallback seed") {
  TempFile with_env("env_a.txt"), with_flag("env_b.txt");
  setenv("CPFS_SEED", "1234", 1);
  REQUIRE(run_cli({"gen-tree", "--offspring", "pois:1.5", "--fitness", "unif:1,2",
                   "--max-gen", "3", "--out", with_env.path.c_str()}) == 0);
  unsetenv("CPFS_SEED");
  REQUIRE(run_cli({"gen-tree", "--offspring", "pois:1.5", "--fitness", "unif:1,2",
                   "--max-gen", "3", "--seed", "1234", "--out",
                   with_flag.path.c_str()}) == 0);
  REQUIRE(slurp(with_env.path) == slurp(with_flag.path));
}

TEST_CASE("simulate on a tree file reports the mean extinction time") {
  TempFile tree("sim_tree.txt"), out("sim_out.csv"), traj("sim_traj.csv");
  REQUIRE(run_cli({"gen-tree", "--offspring", "det:1", "--fitness", "const:1",
                   "--max-gen", "1", "--seed", "3", "--out", tree.path.c_str()}) == 0);
  int rc = run_cli({"simulate", "--tree", tree.path.c_str(), "--lambda", "1",
                    "--trials", "20000", "--seed", "21", "--out", out.path.c_str(),
                    "--traj", traj.path.c_str()});
  REQUIRE(rc == 0);
  std::string body = slurp(out.path);
  REQUIRE(body.find("simulate_mean_extinction") != std::string::npos);
  // G_1 at lambda 1: mean extinction 1.5; the CSV carries the point estimate
  size_t pos = body.find("simulate_mean_extinction");
  size_t comma = body.find("}\",", pos);
  double est = std::stod(body.substr(comma + 3));
  REQUIRE(est == Catch::Approx(1.5).margin(0.05));
  std::string tr = slurp(traj.path);
  REQUIRE(tr.find("time,event_type,vertex,infected_count,depth") != std::string::npos);
  REQUIRE(tr.find("recover") != std::string::npos);
}

TEST_CASE("sweep output is monotone in lambda") {
  TempFile out("sweep.csv");
  REQUIRE(run_cli({"sweep", "--offspring", "det:2", "--fitness", "const:1",
                   "--lambda", "0.2:0.4:1.8", "--horizon", "10", "--trials", "400",
                   "--max-vertices", "800", "--seed", "13", "--jobs", "4", "--out",
                   out.path.c_str()}) == 0);
  std::string body = slurp(out.path);
  std::istringstream in(body);
  std::string line;
  std::vector<double> estimates;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.substr(0, 6) == "lambda") continue;
    size_t c1 = line.find(',');
    size_t c2 = line.find(',', c1 + 1);
    estimates.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(estimates.size() == 5);
  for (size_t i = 1; i < estimates.size(); ++i)
    REQUIRE(estimates[i] >= estimates[i - 1]);  // exactly monotone, coupled
}
