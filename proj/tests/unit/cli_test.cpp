#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "graphrefine/graph_io.hpp"
#include "graphrefine/serialization.hpp"

using namespace graphrefine;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Fresh directory with a three-graph toy dataset in data/.
struct Workspace {
  fs::path root;

  explicit Workspace(const std::string& name)
      : root(fs::temp_directory_path() / ("graphrefine_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
    const Run r = invoke({"generate", "--n", "3", "--generations", "3", "--seed", "7", "--out", dir("data")});
    REQUIRE(r.code == 0);
  }
  ~Workspace() { fs::remove_all(root); }

  std::string dir(const std::string& sub) const { return (root / sub).string(); }
  std::string manifest() const { return dir("data/manifest.json"); }
};

std::string slurp(const fs::path& p) { return read_text_file(p); }

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("generate") {
  Workspace w("generate");
  const auto manifest = parse_manifest(slurp(w.manifest()));
  REQUIRE(manifest.size() == 3);
  for (const auto& e : manifest) CHECK(fs::is_regular_file(w.root / "data" / e.path));

  CHECK(invoke({"generate", "--n", "3", "--generations", "3", "--seed", "7", "--out", w.dir("again")}).code == 0);
  for (const auto& e : manifest) {
    CHECK(slurp(w.root / "data" / e.path) == slurp(w.root / "again" / e.path));
  }
  CHECK(slurp(w.manifest()) == slurp(w.root / "again" / "manifest.json"));

  CHECK(invoke({"generate", "--n", "0", "--out", w.dir("none")}).code == 2);
  CHECK(invoke({"generate", "--n", "2", "--generations", "0", "--out", w.dir("none")}).code == 2);
  CHECK(invoke({"generate", "--n", "2"}).code == 2);
  CHECK(invoke({"generate", "--n", "1", "--out", "/proc/graphrefine-cannot-write"}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
}

TEST_CASE("train writes a checkpoint and a loss curve") {
  Workspace w("train");
  const Run r = invoke({"train", "--data", w.manifest(), "--model", "mfn", "--epochs", "50", "--out", w.dir("mfn")});
  REQUIRE(r.code == 0);
  CHECK(fs::is_regular_file(w.root / "mfn" / "model.mfn"));
  const std::string curve = slurp(w.root / "mfn" / "loss.csv");
  CHECK(curve.rfind("epoch,mean_loss,best_loss\n", 0) == 0);
  CHECK(line_count(curve) == 51);

  CHECK(invoke({"train", "--data", w.manifest(), "--model", "crf", "--out", w.dir("x")}).code == 2);
  CHECK(invoke({"train", "--data", w.dir("missing.json"), "--model", "mfn", "--out", w.dir("x")}).code == 2);
  CHECK(invoke({"train", "--data", w.manifest(), "--model", "mfn", "--epochs", "0", "--out", w.dir("x")}).code == 2);
}

TEST_CASE("train rejects graphs without references") {
  Workspace w("noref");
  const auto manifest = parse_manifest(slurp(w.manifest()));
  const fs::path file = w.root / "data" / manifest[1].path;
  GraphInstance g = read_graph(file);
  g.adjacency_ref.reset();
  write_graph(file, g);
  const Run r = invoke({"train", "--data", w.manifest(), "--model", "mfn", "--epochs", "2", "--out", w.dir("m")});
  CHECK(r.code == 2);
  CHECK(r.err.find("no reference") != std::string::npos);
}

TEST_CASE("cross-validated training") {
  Workspace w("folds");
  const Run r = invoke({"train", "--data", w.manifest(), "--model", "gnn", "--epochs", "3", "--folds", "3",
                     "--out", w.dir("cv")});
  REQUIRE(r.code == 0);
  for (int f = 0; f < 3; ++f) {
    const fs::path fold = w.root / "cv" / ("fold_" + std::to_string(f));
    CHECK(fs::is_regular_file(fold / "model.gnn.json"));
    CHECK(line_count(slurp(fold / "test_ids.txt")) == 1);
  }
  CHECK(line_count(slurp(w.root / "cv" / "crossval_metrics.csv")) == 1 + 3 + 2);
}

TEST_CASE("infer with zero MFN parameters") {
  Workspace w("infer");
  const fs::path ckpt = w.root / "zero.mfn";
  write_text_file_atomic(ckpt, mfn_params_to_text(MfnParams::zeros(kNodeFeatureDim)));
  REQUIRE(invoke({"infer", "--data", w.manifest(), "--checkpoint", ckpt.string(), "--out", w.dir("pred")}).code == 0);

  for (const auto& e : parse_manifest(slurp(w.manifest()))) {
    const GraphInstance g = read_graph(w.root / "data" / e.path);
    const auto alpha = nlohmann::json::parse(slurp(w.root / "pred" / (e.id + ".alpha.json")));
    CHECK(alpha["alpha"].size() == 2 * g.adjacency_in.edge_count());
    for (const auto& entry : alpha["alpha"]) {
      CHECK(entry[2].get<double>() == 0.5);
      CHECK(g.adjacency_in.has_edge(entry[0].get<int>(), entry[1].get<int>()));
    }
    const Adjacency refined = parse_adjacency(slurp(w.root / "pred" / (e.id + ".refined.json")));
    CHECK(refined.edge_count() == 0);
    CHECK(refined.node_count() == g.node_count());
  }
}

TEST_CASE("infer rejects unusable checkpoints") {
  Workspace w("badckpt");
  const fs::path junk = w.root / "junk.txt";
  write_text_file_atomic(junk, "not a model\n");
  CHECK(invoke({"infer", "--data", w.manifest(), "--checkpoint", junk.string(), "--out", w.dir("p")}).code == 2);

  const fs::path small = w.root / "small.mfn";
  write_text_file_atomic(small, mfn_params_to_text(MfnParams::zeros(3)));
  CHECK(invoke({"infer", "--data", w.manifest(), "--checkpoint", small.string(), "--out", w.dir("p")}).code == 2);

  const fs::path gnn = w.root / "model.gnn.json";
  write_text_file_atomic(gnn, gnn_params_to_json(init_gnn(kNodeFeatureDim, 8, 1)));
  CHECK(invoke({"elbo-trace", "--data", w.manifest(), "--checkpoint", gnn.string(), "--out", w.dir("t")}).code == 2);
  CHECK(invoke({"infer", "--data", w.manifest(), "--checkpoint", gnn.string(), "--out", w.dir("g")}).code == 0);
}

TEST_CASE("eval") {
  Workspace w("eval");
  const auto manifest = parse_manifest(slurp(w.manifest()));
  const fs::path pred = w.root / "pred";
  fs::create_directories(pred);
  for (const auto& e : manifest) {
    const GraphInstance g = read_graph(w.root / "data" / e.path);
    write_text_file_atomic(pred / (e.id + ".refined.json"), adjacency_to_json(e.id, *g.adjacency_ref));
  }
  REQUIRE(invoke({"eval", "--data", w.manifest(), "--pred", pred.string(), "--out", w.dir("m")}).code == 0);
  std::istringstream csv(slurp(w.root / "m" / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "id,dice,d_fp,d_fn,d_err,tl,fpr,n_components");
  for (const auto& e : manifest) {
    std::getline(csv, line);
    CHECK(line.rfind(e.id + ",100.000000,0.000000,0.000000,0.000000,100.000000,0.000000,1", 0) == 0);
  }
  std::getline(csv, line);
  CHECK(line == "mean,100.000000,0.000000,0.000000,0.000000,100.000000,0.000000,1.000000");

  fs::remove(pred / (manifest[2].id + ".refined.json"));
  CHECK(invoke({"eval", "--data", w.manifest(), "--pred", pred.string(), "--out", w.dir("m")}).code == 2);

  const GraphInstance g0 = read_graph(w.root / "data" / manifest[0].path);
  write_text_file_atomic(pred / (manifest[2].id + ".refined.json"), adjacency_to_json("other", *g0.adjacency_ref));
  CHECK(invoke({"eval", "--data", w.manifest(), "--pred", pred.string(), "--out", w.dir("m")}).code == 2);
}

TEST_CASE("elbo trace") {
  Workspace w("trace");
  const fs::path ckpt = w.root / "zero.mfn";
  write_text_file_atomic(ckpt, mfn_params_to_text(MfnParams::zeros(kNodeFeatureDim)));
  REQUIRE(invoke({"elbo-trace", "--data", w.manifest(), "--checkpoint", ckpt.string(), "--layers", "4",
               "--out", w.dir("t")}).code == 0);
  const std::string csv = slurp(w.root / "t" / "elbo_trace.csv");
  CHECK(csv.rfind("graph_id,layer,elbo\n", 0) == 0);
  CHECK(line_count(csv) == 1 + 3 * 5);
  CHECK(invoke({"elbo-trace", "--data", w.manifest(), "--checkpoint", ckpt.string(), "--schedule", "random",
             "--out", w.dir("t")}).code == 2);
}

TEST_CASE("selfcheck") {
  const Run ok = invoke({"selfcheck"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  const Run broken = invoke({"selfcheck", "--corrupt-gamma-sign"});
  CHECK(broken.code == 1);
  CHECK(broken.out.find("FAIL") != std::string::npos);
}

TEST_CASE("config files") {
  Workspace w("config");
  const fs::path cfg = w.root / "train.toml";
  {
    std::ofstream f(cfg);
    f << "data = \"" << w.manifest() << "\"\nmodel = \"mfn\"\nepochs = 4\nseed = 3\n";
  }
  REQUIRE(invoke({"train", "--config", cfg.string(), "--out", w.dir("a")}).code == 0);
  CHECK(line_count(slurp(w.root / "a" / "loss.csv")) == 5);
  REQUIRE(invoke({"train", "--config", cfg.string(), "--epochs", "2", "--out", w.dir("b")}).code == 0);
  CHECK(line_count(slurp(w.root / "b" / "loss.csv")) == 3);

  {
    std::ofstream f(cfg, std::ios::app);
    f << "learning_rate_typo = 0.1\n";
  }
  CHECK(invoke({"train", "--config", cfg.string(), "--out", w.dir("c")}).code == 2);
}

TEST_CASE("reruns are byte-identical") {
  Workspace w("rerun");
  for (const char* sub : {"r1", "r2"}) {
    REQUIRE(invoke({"train", "--data", w.manifest(), "--model", "gnn", "--epochs", "3", "--seed", "5",
                 "--out", w.dir(std::string(sub) + "/train")}).code == 0);
    REQUIRE(invoke({"infer", "--data", w.manifest(), "--checkpoint", w.dir(std::string(sub) + "/train/model.gnn.json"),
                 "--out", w.dir(std::string(sub) + "/pred")}).code == 0);
  }
  for (const auto& entry : fs::recursive_directory_iterator(w.root / "r1")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), w.root / "r1");
    CHECK(slurp(entry.path()) == slurp(w.root / "r2" / rel));
  }
}

}  // TEST_SUITE
