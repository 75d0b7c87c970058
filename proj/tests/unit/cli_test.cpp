#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "fuslab/config.hpp"

using namespace fuslab;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + FUSLAB_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fuslab_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

AttackConfig tiny_config() {
  AttackConfig c = reference_blobs_config();
  std::get<BlobsSource>(c.dataset).blobs.n_per_class = 25;
  c.r = 0.05;
  c.search_train.model.hidden_widths = {4};
  c.search_train.train.epochs = 2;
  c.test_train = c.search_train;
  return c;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("cli: run, report and gen-data succeed") {
  const auto dir = scratch_dir("ok");
  write_json(dir / "config.json", to_json(tiny_config()));
  CHECK(cli("run --config " + (dir / "config.json").string() + " --seed 5 --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "report.json"));
  CHECK(fs::exists(dir / "run" / "pool_seed5.csv"));
  CHECK(fs::exists(dir / "run" / "trace_seed5.csv"));
  CHECK(fs::exists(dir / "run" / "gamma_seed5.csv"));
  CHECK(cli("report " + (dir / "run").string() + " --out " + (dir / "agg").string()) == 0);
  CHECK(first_line(dir / "agg" / "summary.csv") == "strategy,r,seed,asr,clean_metric");
  CHECK(cli("gen-data --config " + (dir / "config.json").string() + " --out " + (dir / "data").string()) == 0);
  CHECK(first_line(dir / "data" / "train.csv").rfind("label,f0,f1", 0) == 0);
  CHECK(fs::exists(dir / "data" / "pattern.csv"));
}

TEST_CASE("cli: removal and sweep") {
  const auto dir = scratch_dir("studies");
  write_json(dir / "config.json", to_json(tiny_config()));
  CHECK(cli("removal --config " + (dir / "config.json").string() + " --fractions 0,0.5 --out " + dir.string()) == 0);
  CHECK(first_line(dir / "removal.csv").rfind("rule,fraction", 0) == 0);
  nlohmann::json grid{{"base", to_json(tiny_config())},
                      {"ratios", {0.05, 0.1}},
                      {"strategies", {{{"kind", "rss"}}, {{"kind", "greedy"}}}},
                      {"seeds", {0, 1}}};
  write_json(dir / "grid.json", grid);
  CHECK(cli("sweep --config " + (dir / "grid.json").string() + " --threads 1 --out " + (dir / "sweep").string()) == 0);
  CHECK(first_line(dir / "sweep" / "summary.csv").rfind("r,strategy_index,strategy,mean_asr", 0) == 0);
}

TEST_CASE("cli: configuration errors exit with 2") {
  const auto dir = scratch_dir("bad");
  CHECK(cli("run --config " + (dir / "missing.json").string()) == 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(cli("run --config " + (dir / "broken.json").string()) == 2);
  std::ofstream(dir / "badkind.json") << R"({"strategy": {"kind": "nope"}})";
  CHECK(cli("run --config " + (dir / "badkind.json").string()) == 2);
  CHECK(cli("sweep") == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("removal --fractions 2 --config " + (dir / "missing.json").string()) == 2);
  std::ofstream(dir / "noversion.json") << R"({"config": {}})";
  CHECK(cli("report " + (dir / "noversion.json").string() + " --out " + dir.string()) == 2);
}

TEST_CASE("cli: numeric errors exit with 3") {
  const auto dir = scratch_dir("numeric");
  auto c = tiny_config();
  c.search_train.train.optimizer = Sgd{1e300};
  c.test_train = c.search_train;
  write_json(dir / "config.json", to_json(c));
  CHECK(cli("run --config " + (dir / "config.json").string() + " --out " + dir.string()) == 3);
}
