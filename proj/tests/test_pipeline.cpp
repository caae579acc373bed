#include <cstdlib>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "vidsal/checkpoint.hpp"
#include "vidsal/dataset_io.hpp"
#include "vidsal/pipeline.hpp"

using namespace vidsal;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vidsal_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cli {
  int status = 0;
  std::string err;
};

Cli run_cli(const std::string& args, const fs::path& cwd, const std::string& env = "") {
  const fs::path err = cwd / "stderr.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + " '" + VIDSAL_CLI + "' " + args + " 2> '" +
                          err.string() + "' > /dev/null";
  const int raw = std::system(cmd.c_str());
  Cli r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.err = read_text(err);
  fs::remove(err);
  return r;
}

bool has_partial(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().find(".partial") != std::string::npos) return true;
  return false;
}

const char* kTinyConfig = R"([data]
classes = move_left, move_right, collide
clips_per_class = 4
train_fraction = 0.5

[train]
epochs = 2

[mask]
iterations = 5

[metrics]
drop_eps = 1e-9

[explain]
count = 0
)";

// generate, train both models, explain both, compare; returns the root
void full_run(const fs::path& root, const std::string& jobs = "1") {
  write_text(root / "tiny.ini", kTinyConfig);
  const std::string cfg = " --config tiny.ini --quiet";
  REQUIRE(run_cli("generate --seed 7 --out data" + cfg, root).status == 0);
  REQUIRE(run_cli("train --model conv3d --data data --out ck3d" + cfg, root).status == 0);
  REQUIRE(run_cli("train --model convlstm --data data --out cklstm" + cfg, root).status == 0);
  REQUIRE(run_cli("explain --checkpoint ck3d --data data --out ex3d --jobs " + jobs + cfg, root).status == 0);
  REQUIRE(run_cli("explain --checkpoint cklstm --data data --out exlstm --jobs " + jobs + cfg, root).status == 0);
  REQUIRE(run_cli("compare ex3d exlstm --out cmp" + cfg, root).status == 0);
}

}  // namespace

TEST_CASE("load_config: sections, defaults, strictness") {
  const auto dir = temp_dir("config");
  const auto defaults = pipeline::RunConfig{};
  CHECK(defaults.mask.lambda1 == 0.01);
  CHECK(defaults.mask.lambda2 == 0.02);
  CHECK(defaults.mask.beta == 3);
  CHECK(defaults.mask.learning_rate == 0.001);
  CHECK(defaults.mask.iterations == 300);
  CHECK(defaults.metrics.blobs.threshold == 0.4);
  CHECK(defaults.metrics.blobs.min_area == 4);

  write_text(dir / "ok.ini",
             "[data]\nclasses = move_right, move_left\nclips_per_class = 9\nseed = 11\n"
             "[train]\noptimizer = sgd\nlearning_rate = 0.5\nepochs = 3\n"
             "[mask]\nlambda1 = 0.1\niterations = 7\n[metrics]\nbins = 4\ndrop_eps = 1e-9\n"
             "[explain]\ntarget = true\nclips = a, b\nimages = false\n");
  const auto c = pipeline::load_config(dir / "ok.ini");
  CHECK(c.data.classes == std::vector<data::MotionClass>{data::MotionClass::MoveRight, data::MotionClass::MoveLeft});
  CHECK(c.data.clips_per_class == 9);
  CHECK(c.data.seed == 11);
  CHECK(c.mask.lambda1 == 0.1);
  CHECK(c.mask.lambda2 == 0.02);
  CHECK(c.mask.iterations == 7);
  CHECK(c.metrics.bins == 4);
  CHECK(c.metrics.drop_eps == 1e-9);
  CHECK(c.explain.target_true_class);
  CHECK(c.explain.clips == std::vector<std::string>{"a", "b"});
  CHECK(!c.explain.images);
  const auto t = pipeline::train_config(models::ModelKind::Conv3D, c);
  CHECK(t.optimizer == train::OptimizerKind::Sgd);
  CHECK(t.learning_rate == 0.5);
  CHECK(t.epochs == 3);
  CHECK(t.label_smoothing == 0.2);
  CHECK(pipeline::train_config(models::ModelKind::ConvLstm, pipeline::RunConfig{}).optimizer ==
        train::OptimizerKind::Sgd);

  for (const char* bad : {"[mask]\nlamda1 = 1\n", "[masks]\nlambda1 = 1\n", "[mask]\nlambda1 = x\n",
                          "[mask]\niterations = 0\n", "[mask]\niterations = -3\n", "[train]\nepochs = 1.5\n",
                          "[train]\noptimizer = rmsprop\n", "[data]\nclasses = move_sideways\n",
                          "[explain]\ntarget = guess\n", "[metrics]\nblob_threshold = 1.5\n", "[mask\n"}) {
    write_text(dir / "bad.ini", bad);
    CHECK_THROWS_AS(pipeline::load_config(dir / "bad.ini"), ValueError);
  }
  CHECK_THROWS_AS(pipeline::load_config(dir / "missing.ini"), IoError);
}

TEST_CASE("Stage: uncommitted output vanishes, commits replace only toolkit outputs") {
  const auto dir = temp_dir("stage");
  {
    pipeline::Stage s(dir / "out");
    write_text(s.dir() / "a.txt", "a");
  }
  CHECK(!fs::exists(dir / "out"));
  CHECK(!has_partial(dir));

  {
    pipeline::Stage s(dir / "out");
    write_text(s.dir() / "a.txt", "a");
    fs::create_directories(s.dir() / "sub");
    write_text(s.dir() / "sub" / "b.txt", "b");
    s.commit(pipeline::run_block({"test", {}, {{"x", 3}}, {{"input", dir / "in"}}}, s.dir(), dir / "out"));
  }
  const auto m = io::read_json(dir / "out" / "manifest.json");
  CHECK(m["run"]["files"] == nlohmann::json::array({"a.txt", "sub/b.txt"}));
  CHECK(m["run"]["inputs"]["input"] == "../in");
  CHECK(m["run"]["seeds"]["x"] == 3);

  {
    pipeline::Stage s(dir / "out");
    write_text(s.dir() / "c.txt", "c");
    s.commit({});
  }
  CHECK(fs::exists(dir / "out" / "c.txt"));
  CHECK(!fs::exists(dir / "out" / "a.txt"));

  fs::create_directories(dir / "foreign");
  write_text(dir / "foreign" / "keep.txt", "mine");
  {
    pipeline::Stage s(dir / "foreign");
    CHECK_THROWS_AS(s.commit({}), IoError);
  }
  CHECK(read_text(dir / "foreign" / "keep.txt") == "mine");
  CHECK(!has_partial(dir));
}

TEST_CASE("dataset files round trip") {
  const auto dir = temp_dir("dataset");
  data::DatasetOptions o;
  o.classes = {data::MotionClass::Collide, data::MotionClass::MoveUp};
  o.clips_per_class = 3;
  o.train_fraction = 0.5;
  const auto split = data::make_dataset(o);
  io::save_dataset(dir / "ds", o, split);
  const auto back = io::load_dataset(dir / "ds");
  CHECK(io::to_json(back.options) == io::to_json(o));
  REQUIRE(back.split.train.size() == split.train.size());
  REQUIRE(back.split.val.size() == split.val.size());
  for (std::size_t i = 0; i < split.val.size(); ++i) {
    CHECK(back.split.val[i].id == split.val[i].id);
    CHECK(back.split.val[i].frames == split.val[i].frames);
    CHECK(back.split.val[i].event == split.val[i].event);
    CHECK(back.split.val[i].label_index == split.val[i].label_index);
  }
  fs::remove(dir / "ds" / "clips" / (split.val[0].id + ".vten"));
  CHECK_THROWS_AS(io::load_dataset(dir / "ds"), IoError);
  CHECK_THROWS_AS(io::load_dataset(dir / "nothing"), IoError);
}

TEST_CASE("select_clips: explicit ids, round robin over classes") {
  data::DatasetOptions o;
  o.classes = {data::MotionClass::MoveLeft, data::MotionClass::MoveRight, data::MotionClass::Collide};
  o.clips_per_class = 10;
  const auto split = data::make_dataset(o);
  pipeline::ExplainOptions e;
  e.count = 5;
  const auto picked = pipeline::select_clips(split, e, 3);
  REQUIRE(picked.size() == 5);
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1};
  for (std::size_t i = 0; i < 5; ++i) CHECK(picked[i]->label_index == labels[i]);
  e.count = 0;
  CHECK(pipeline::select_clips(split, e, 3).size() == split.val.size());
  e.count = 1000;
  CHECK(pipeline::select_clips(split, e, 3).size() == split.val.size());
  e.clips = {split.train[2].id, split.val[0].id};
  const auto named = pipeline::select_clips(split, e, 3);
  REQUIRE(named.size() == 2);
  CHECK(named[0]->id == split.train[2].id);
  e.clips = {"no_such_clip"};
  CHECK_THROWS_AS(pipeline::select_clips(split, e, 3), ValueError);
}

TEST_CASE("cli: full run, manifests cover every file, identical comparison") {
  const auto root = temp_dir("cli_full");
  full_run(root, "2");

  for (const char* d : {"data", "ck3d", "cklstm", "ex3d", "exlstm", "cmp"}) {
    const auto m = io::read_json(root / d / "manifest.json");
    std::set<std::string> listed;
    for (const auto& f : m["run"]["files"]) listed.insert(f.get<std::string>());
    std::set<std::string> present;
    for (const auto& e : fs::recursive_directory_iterator(root / d))
      if (e.is_regular_file()) present.insert(e.path().lexically_relative(root / d).generic_string());
    present.erase("manifest.json");
    CHECK(listed == present);
    CHECK(listed.count("run.log") == 1);
    CHECK(m["run"]["tool"] == "vidsal");
  }
  CHECK(io::read_json(root / "ck3d" / "manifest.json")["run"]["inputs"]["dataset"] == "../data");

  // a full explanation record
  const auto rec = io::read_json(root / "ex3d" / "records" / "collide_000.json");
  for (const char* key : {"clip_id", "model", "true_class", "predicted_class", "target_class", "scores", "os", "fs",
                          "rs", "mask", "loss_trace", "final_loss", "blobs", "event", "images", "mask_length"}) {
    CHECK_MESSAGE(rec.contains(key), key);
  }
  CHECK(rec["loss_trace"].size() == 5);
  CHECK(rec["mask"]["activation"].size() == 16);
  CHECK(rec["mask"]["active"].size() == 16);
  CHECK(!rec["event"].is_null());
  CHECK(rec["images"].size() == 32);
  CHECK(fs::exists(root / "ex3d" / "saliency" / "collide_000" / "overlay_t07.png"));

  const auto header = read_text(root / "cmp" / "sequences.csv").substr(0, 40);
  CHECK(header.rfind("clip_id,model,true_class", 0) == 0);

  // scores moved so that no drop is excluded and every metric has values
  fs::copy(root / "ex3d", root / "shifted", fs::copy_options::recursive);
  std::size_t k = 0;
  for (const auto& e : fs::directory_iterator(root / "shifted" / "records")) {
    auto r = io::read_json(e.path());
    const double os = r["os"];
    r["fs"] = os - 0.1 - 0.01 * double(k);
    r["rs"] = os - 0.2 - 0.03 * double(k++);
    io::write_json(e.path(), r);
  }
  REQUIRE(run_cli("compare shifted shifted --out same --config tiny.ini --quiet", root).status == 0);
  const auto same = io::read_json(root / "same" / "summary.json");
  REQUIRE(same["ttests"].size() == 6);
  for (const auto& t : same["ttests"]) {
    CHECK_MESSAGE(t["t"] == 0.0, t["metric"]);
    CHECK_MESSAGE(t["p"] == 1.0, t["metric"]);
  }
  CHECK(!has_partial(root));
}

TEST_CASE("cli: the same seeded run twice gives identical files, thread count included") {
  const auto a = temp_dir("cli_det_a"), b = temp_dir("cli_det_b");
  full_run(a, "1");
  full_run(b, "3");
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto r = e.path().lexically_relative(a);
    const auto ext = r.extension().string();
    if (r.filename() == "run.log" || r.filename() == "stderr.txt") continue;
    if (ext != ".csv" && ext != ".json" && ext != ".vten" && ext != ".png" && ext != ".pgm") continue;
    REQUIRE_MESSAGE(fs::exists(b / r), r.string());
    CHECK_MESSAGE(read_text(e.path()) == read_text(b / r), r.string());
    ++compared;
  }
  CHECK(compared > 100);
}

TEST_CASE("cli: errors are one line, nonzero, and leave nothing behind") {
  const auto root = temp_dir("cli_errors");
  auto r = run_cli("train --model conv3d --data missing --out ck", root);
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error: io: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  write_text(root / "bad.ini", "[mask]\nlamda1 = 1\n");
  r = run_cli("generate --config bad.ini --out data", root);
  CHECK(r.status == 1);
  CHECK(r.err == "error: value: config: unknown key mask.lamda1\n");

  r = run_cli("explain --checkpoint nowhere --out ex", root);
  CHECK(r.status == 2);
  CHECK(r.err.rfind("error: usage: ", 0) == 0);

  r = run_cli("train --model resnet --data d --out x", root);
  CHECK(r.status == 2);

  write_text(root / "tiny.ini", kTinyConfig);
  REQUIRE(run_cli("generate --config tiny.ini --out data --quiet", root).status == 0);
  // a valid dataset but a checkpoint that is not one
  fs::create_directories(root / "fake");
  write_text(root / "fake" / "manifest.json", "{\"format\": \"other\"}");
  r = run_cli("explain --checkpoint fake --data data --out ex", root);
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error: value: ", 0) == 0);
  CHECK(!fs::exists(root / "ex"));
  CHECK(!has_partial(root));
}

TEST_CASE("cli: relative outputs land under the output root variable") {
  const auto root = temp_dir("cli_env");
  fs::create_directories(root / "elsewhere");
  write_text(root / "tiny.ini", kTinyConfig);
  REQUIRE(run_cli("generate --config tiny.ini --out data --quiet", root,
                  "VIDSAL_OUTPUT_ROOT='" + (root / "elsewhere").string() + "'")
              .status == 0);
  CHECK(fs::exists(root / "elsewhere" / "data" / "manifest.json"));
  CHECK(!fs::exists(root / "data"));
}
