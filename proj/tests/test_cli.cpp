#include <doctest.h>

#include <fstream>
#include <sstream>

#include "stepattn/checkpoint.hpp"
#include "stepattn/commands.hpp"
#include "stepattn/data.hpp"
#include "stepattn/eval.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/rng.hpp"
#include "test_util.hpp"

using namespace stepattn;
using testutil::TempDir;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

Checkpoint tiny_checkpoint(bool attention, std::uint64_t seed) {
  Checkpoint ck;
  ck.model.hidden_size = 3;
  ck.model.num_layers = 2;
  ck.model.use_attention = attention;
  ck.params = init_params(ck.model, seed);
  Rng rng(seed);
  for (Matrix* m : ck.params.tensors())
    for (double& v : m->values()) v += rng.uniform(-0.1, 0.1);
  ck.train.epochs = 7;
  ck.train.seed = seed;
  ck.seed = seed;
  ck.epoch = 7;
  return ck;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  for (bool attention : {true, false}) {
    const Checkpoint ck = tiny_checkpoint(attention, 5);
    save_checkpoint(dir / "m.ckpt", ck);
    const Checkpoint back = load_checkpoint(dir / "m.ckpt");
    CHECK(back.model == ck.model);
    CHECK(back.params == ck.params);
    CHECK(back.train == ck.train);
    CHECK(back.seed == ck.seed);
    CHECK(back.epoch == ck.epoch);
    const auto samples = synthesize_dataset(SynthFamily{}, 10, 3);
    for (const auto& s : samples) {
      const Matrix x = build_input(s, ck.input).channels;
      CHECK(predict(ck.params, ck.model, x).value == predict(back.params, back.model, x).value);
    }
  }
}

TEST_CASE("checkpoint corruption is detected") {
  TempDir dir("ckpt_bad");
  const Checkpoint ck = tiny_checkpoint(true, 2);
  save_checkpoint(dir / "m.ckpt", ck);
  const std::string bytes = slurp(dir / "m.ckpt");
  CHECK(bytes.rfind("STEPATTN-CHECKPOINT 1\n", 0) == 0);

  auto write = [&](const std::string& b) { std::ofstream(dir / "x.ckpt", std::ios::binary) << b; };
  write(bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), CheckpointError);
  write(bytes + "z");
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), CheckpointError);
  write("NOT-A-CHECKPOINT 1\n{}\n");
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), CheckpointError);
  std::string v2 = bytes;
  v2.replace(v2.find(" 1\n"), 3, " 2\n");
  write(v2);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), CheckpointError);
  std::string reshaped = bytes;
  reshaped.replace(reshaped.find("\"hidden_size\":3"), 15, "\"hidden_size\":4");
  write(reshaped);
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("usage errors exit with 2, help with 0") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  const Run r = cli({"crossval", "--dataset", "x.jsonl", "--scheme", "holdout", "--out", "o"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("scheme") != std::string::npos);
  CHECK(cli({"train", "--dataset", "x.jsonl", "--out", "m", "--input", "abc"}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "3"}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "3", "--out", "o", "--clean", "--noisy"}).code == kExitUsage);
  CHECK(cli({"stats"}).code == kExitUsage);
}

TEST_CASE("runtime errors exit with 1") {
  TempDir dir("cli_err");
  const Run r = cli({"stats", (dir / "missing.jsonl").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("missing.jsonl") != std::string::npos);
  CHECK(cli({"convert", "--name", "wdsc", "--source", dir.path().string(), "--out",
             (dir / "o").string()})
            .code == kExitRuntime);
}

TEST_CASE("synth is byte-identical for a fixed seed") {
  TempDir a("synth_a"), b("synth_b");
  REQUIRE(cli({"synth", "--n", "20", "--seed", "1", "--out", a.path().string()}).code == 0);
  REQUIRE(cli({"synth", "--n", "20", "--seed", "1", "--out", b.path().string()}).code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a.path());
    CHECK(slurp(e.path()) == slurp(b.path() / rel));
    ++files;
  }
  CHECK(files == 21);
}

TEST_CASE("stats prints the label statistics") {
  TempDir dir("stats");
  REQUIRE(cli({"synth", "--n", "12", "--seed", "3", "--out", dir.path().string()}).code == 0);
  const Run r = cli({"stats", (dir / "manifest.jsonl").string()});
  REQUIRE(r.code == 0);
  const Dataset d = load_dataset(dir / "manifest.jsonl");
  const LabelStats s = label_stats(d.samples);
  for (const char* key : {"n ", "min ", "max ", "mean ", "std ", "skew "})
    CHECK(r.out.find(key) != std::string::npos);
  CHECK(r.out.find("n 12\n") != std::string::npos);
  std::ostringstream mx;
  mx << "max " << s.max << '\n';
  CHECK(r.out.find(mx.str()) != std::string::npos);
}

TEST_CASE("baseline on clean synthetic data counts every label") {
  TempDir dir("base");
  REQUIRE(cli({"synth", "--n", "15", "--seed", "9", "--clean", "--out", dir.path().string()}).code == 0);
  const Run r = cli({"baseline", "--dataset", (dir / "manifest.jsonl").string(), "--method",
                     "autocorr", "--out", (dir / "b").string()});
  REQUIRE(r.code == 0);
  const auto rows = read_csv(dir / "b/counts.csv");
  REQUIRE(rows.size() == 16);
  CHECK(rows[0][1] == "true");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][1] == rows[i][2]);
  CHECK(r.out.find("MAE 0.00") != std::string::npos);
}

TEST_CASE("train, eval and export-attention") {
  TempDir dir("pipeline");
  const std::string data = (dir / "data").string();
  REQUIRE(cli({"synth", "--n", "8", "--seed", "2", "--out", data}).code == 0);
  const std::string manifest = data + "/manifest.jsonl";
  const std::string ckpt = (dir / "m.ckpt").string();
  const Run t = cli({"train", "--dataset", manifest, "--hidden", "4", "--layers", "1", "--epochs",
                     "2", "--seed", "5", "--out", ckpt});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(fs::exists(ckpt));

  const Run e = cli({"eval", "--checkpoint", ckpt, "--dataset", manifest, "--out",
                     (dir / "eval").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  CHECK(e.out.find("n_samples 8") != std::string::npos);
  const auto preds = read_csv(dir / "eval/predictions.csv");
  CHECK(preds.size() == 9);
  CHECK(fs::exists(dir / "eval/report.txt"));
  CHECK(fs::exists(dir / "eval/table.csv"));

  const Dataset d = load_dataset(manifest);
  const std::string csv = (dir / "attn.csv").string();
  const Run x = cli({"export-attention", "--checkpoint", ckpt, "--dataset", manifest, "--sample",
                     d.samples[3].id, "--out", csv});
  REQUIRE_MESSAGE(x.code == 0, x.err);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == d.samples[3].length() + 1);
  CHECK(rows[0] == std::vector<std::string>{"t", "l2", "score", "weight"});
  double sum = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) sum += std::stod(rows[i][3]);
  CHECK(std::abs(sum - 1.0) < 1e-9);
  // The weight column matches a direct forward pass.
  const Checkpoint ck = load_checkpoint(ckpt);
  const Prediction p =
      predict(ck.params, ck.model, build_input(d.samples[3], ck.input).channels, true);
  CHECK(std::stod(rows[5][3]) == p.attention->weights[4]);

  CHECK(cli({"export-attention", "--checkpoint", ckpt, "--dataset", manifest, "--sample", "nope",
             "--out", (dir / "n.csv").string()})
            .code == kExitRuntime);
  CHECK_FALSE(fs::exists(dir / "n.csv"));
}

TEST_CASE("crossval smoke profile writes every output") {
  TempDir dir("cv");
  const std::string data = (dir / "data").string();
  REQUIRE(cli({"synth", "--n", "10", "--seed", "4", "--subjects", "4", "--out", data}).code == 0);
  const std::string manifest = data + "/manifest.jsonl";
  for (const char* scheme : {"kfold5", "loso", "l2so"}) {
    const std::string out = (dir / scheme).string();
    const Run r = cli({"crossval", "--dataset", manifest, "--scheme", scheme, "--hidden", "3",
                       "--layers", "1", "--epochs", "3", "--no-attention", "--input", "xyz",
                       "--jobs", "2", "--out", out});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(read_csv(out + "/predictions.csv").size() == 11);
    const std::string report = slurp(out + "/report.txt");
    CHECK(report.find("scheme ") != std::string::npos);
    CHECK(report.find("model LSTM-1x3-xyz\n") != std::string::npos);
    CHECK(read_csv(out + "/table.csv").size() == 2);
  }
}

TEST_CASE("failed crossval leaves no partial outputs") {
  TempDir dir("cv_fail");
  const std::string data = (dir / "data").string();
  REQUIRE(cli({"synth", "--n", "6", "--seed", "4", "--subjects", "1", "--out", data}).code == 0);
  const std::string out = (dir / "out").string();
  const Run r = cli({"crossval", "--dataset", data + "/manifest.jsonl", "--scheme", "loso",
                     "--epochs", "1", "--hidden", "2", "--out", out});
  CHECK(r.code == kExitRuntime);
  CHECK_FALSE(fs::exists(out + "/report.txt"));
  CHECK_FALSE(fs::exists(out + "/predictions.csv"));
}

TEST_CASE("metadata filters") {
  TempDir dir("filters");
  auto samples = synthesize_dataset(SynthFamily{}, 6, 1);
  samples[0].meta.population = Population::kCane;
  samples[4].meta.population = Population::kCane;
  const fs::path manifest = save_dataset(dir.path(), "toy", samples);
  const Run r = cli({"stats", "--dataset", manifest.string(), "--population", "cane"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("n 2\n") != std::string::npos);
  CHECK(cli({"stats", "--dataset", manifest.string(), "--population", "dog"}).code == kExitRuntime);
}
