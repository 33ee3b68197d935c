#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "basis/cli.hpp"
#include "basis/config.hpp"
#include "basis/errors.hpp"

using namespace basis;
namespace fs = std::filesystem;

namespace {

const std::string kSource = BASIS_SOURCE_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("basis_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("basis_cli_test_" + name + ".cfg");
  std::ofstream(p) << text;
  return p;
}

std::string tiny_config() {
  return "data.corpus = " + kSource + "/data/corpus.txt\n"
         "model.d_model = 16\nmodel.n_layers = 1\nmodel.seq_len = 16\n"
         "train.steps = 20\ntrain.eval_interval = 10\ntrain.val_batches = 2\n"
         "basis.mode = basis\nbasis.rank = 4\n";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing") {
  const auto c = parse_config("# comment\nmodel.d_model = 32  # trailing\n\nrank=5\nlayer.lm_head = exact\n", "/base");
  CHECK(c.train.d_model == 32);
  CHECK(c.train.rank == 5);
  CHECK(c.train.layer_modes.at("lm_head") == DenseMode::exact);
  CHECK(parse_config("data.corpus = x.txt\n", "/base").corpus == fs::path("/base/x.txt"));
  CHECK_THROWS_WITH_AS(parse_config("model.colour = red\n", "."), doctest::Contains("model.colour"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("train.lr = fast\n", "."), doctest::Contains("train.lr"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("seed = 3\n", "."), doctest::Contains("ambiguous"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n", "."), ConfigError);
  CHECK_THROWS_AS(parse_config("basis.mode = fuzzy\n", "."), ConfigError);
  CHECK(std::find(config_keys().begin(), config_keys().end(), "basis.lambda") != config_keys().end());
}

TEST_CASE("rank list parsing") {
  CHECK(parse_rank_list("1,8, 16") == std::vector<std::size_t>{1, 8, 16});
  CHECK_THROWS_AS(parse_rank_list(""), ConfigError);
  CHECK_THROWS_AS(parse_rank_list("1,,2"), ConfigError);
  CHECK_THROWS_AS(parse_rank_list("0"), ConfigError);
  CHECK_THROWS_AS(parse_rank_list("-3"), ConfigError);
}

TEST_CASE("train without a corpus path names the key") {
  const auto cfg = write_config("nocorpus", "train.steps = 1\n");
  const auto r = cli({"train", "--config", cfg.string(), "--out", scratch("nocorpus").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("data.corpus") != std::string::npos);
  const auto missing = cli({"train", "--config", cfg.string(), "--override", "data.corpus=/no/such/file"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("data.corpus") != std::string::npos);
}

TEST_CASE("train writes its three outputs") {
  const auto cfg = write_config("tiny", tiny_config());
  const auto out = scratch("train");
  const auto r = cli({"train", "--quiet", "--config", cfg.string(), "--out", out.string(), "--override", "rank=8"});
  REQUIRE(r.code == 0);
  for (const char* f : {"run.csv", "report.txt", "loss.svg"}) CHECK(fs::exists(out / f));
  const std::string csv = slurp(out / "run.csv");
  CHECK(csv.rfind("step,train_loss,val_loss,rank,mode\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(slurp(out / "report.txt").find("basis.rank = 8\n") != std::string::npos);
  const std::string svg = slurp(out / "loss.svg");
  CHECK(svg.find("version=\"1.1\"") != std::string::npos);
  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++polylines;
  CHECK(polylines == 2);
}

TEST_CASE("usage and numeric errors map to exit codes") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"fly"}).code == 1);
  const auto cfg = write_config("tiny2", tiny_config());
  CHECK(cli({"train", "--config", cfg.string(), "--override", "nonsense"}).code == 1);
  CHECK(cli({"train", "--config", cfg.string(), "--override", "basis.colour=2"}).code == 1);
  const auto diverge = cli({"train", "--quiet", "--config", cfg.string(), "--out", scratch("diverge").string(),
                            "--override", "train.lr=1e12"});
  CHECK(diverge.code == 2);
  CHECK(diverge.err.find("numeric") != std::string::npos);
}

TEST_CASE("sweep outputs and determinism") {
  const auto cfg = write_config("sweep", tiny_config());
  const auto out = scratch("sweep");
  const auto r = cli({"sweep", "--config", cfg.string(), "--out", out.string(), "--ranks", "1,8,16,32,64", "--jobs", "2"});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(out / "sweep.csv");
  std::set<std::string> runs;
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) runs.insert(line.substr(line.find(',', line.find(',', line.find(',') + 1) + 1) + 1));
  CHECK(runs.size() == 6);
  const std::string table = slurp(out / "table.txt");
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);

  const auto again = cli({"sweep", "--config", cfg.string(), "--out", out.string(), "--ranks", "1,8,16,32,64"});
  REQUIRE(again.code == 0);
  CHECK(slurp(out / "sweep.csv") == csv);

  CHECK(cli({"sweep", "--config", cfg.string(), "--out", out.string(), "--ranks", ""}).code == 1);
}

TEST_CASE("diagnose") {
  const auto out = scratch("diagnose");
  const auto r = cli({"diagnose", "--config", kSource + "/configs/diagnose.cfg", "--out", out.string()});
  CHECK(r.code == 0);
  const std::string text = slurp(out / "diagnostics.txt");
  CHECK(text.find("[FAIL]") == std::string::npos);
  CHECK(text.find("0 failed") != std::string::npos);

  const auto u = cli({"diagnose", "--config", kSource + "/configs/diagnose_uniform.cfg", "--out", out.string()});
  CHECK(u.code == 0);
  CHECK(slurp(out / "diagnostics.txt").find("[CONTROL] collision variance under uniform hashing") != std::string::npos);

  CliConfig square;
  square.diagnose.variance_rank = square.diagnose.variance_batch;
  square.diagnose.variance_trials = 200;
  square.diagnose.sts_trials = 200;
  square.diagnose.norm_matrices = 5;
  square.train.vocab_size = 32;
  const auto checks = run_diagnostics(square);
  const auto it = std::find_if(checks.begin(), checks.end(),
                               [](const auto& c) { return c.claim.rfind("R = B", 0) == 0; });
  REQUIRE(it != checks.end());
  CHECK(it->measured == "max per-entry variance = 0");
  CHECK(it->status == CheckStatus::pass);
}

TEST_CASE("audit of the reference architecture") {
  const auto out = scratch("audit");
  const std::string cfg = kSource + "/configs/audit.cfg";
  auto total = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"audit", "--config", cfg, "--out", out.string()};
    for (auto& e : extra) args.insert(args.end(), {"--override", e});
    const auto r = cli(args);
    REQUIRE(r.code == 0);
    const std::string key = "total activation floats: ";
    const auto pos = r.out.find(key);
    REQUIRE(pos != std::string::npos);
    return std::stoul(r.out.substr(pos + key.size()));
  };
  // Per block: q, k, v, out and fc1 read 64 features, fc2 reads 256; the head reads 64.
  const std::size_t n_sum = 2 * (5 * 64 + 256) + 64;
  CHECK(total({}) == 64 * n_sum);
  CHECK(total({"basis.mode=basis", "rank=32"}) * 2 == total({"basis.mode=basis", "rank=64"}));
  CHECK(total({"basis.mode=basis", "rank=8", "train.batch_size=1"}) ==
        total({"basis.mode=basis", "rank=8", "train.batch_size=4"}));
  CHECK(fs::exists(out / "memory.txt"));
}

}
