#include "vidsal/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "vidsal/checkpoint.hpp"
#include "vidsal/dataset_io.hpp"
#include "vidsal/gradcam.hpp"

namespace vidsal::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::set<std::string>> kConfigKeys{
    {"data", {"classes", "clips_per_class", "train_fraction", "seed", "frame_size", "target_length", "noise"}},
    {"train",
     {"optimizer", "learning_rate", "momentum", "weight_decay", "label_smoothing", "epochs", "batch_size", "seed"}},
    {"mask",
     {"lambda1", "lambda2", "beta", "learning_rate", "iterations", "threshold", "init_active", "init_inactive",
      "adam_beta1", "adam_beta2", "adam_eps"}},
    {"metrics", {"blob_threshold", "blob_min_area", "drop_eps", "bins"}},
    {"explain", {"target", "count", "split", "clips", "images"}},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(',', pos);
    const auto item = trim(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (!item.empty()) out.push_back(item);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValueError("config: " + key + " = '" + value + "' is not a number");
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] != '-') {
      const auto v = std::stoull(value, &used);
      if (used == value.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw ValueError("config: " + key + " = '" + value + "' is not a non-negative integer");
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValueError("config: " + key + " = '" + value + "' is not a boolean");
}

std::string rel(const fs::path& p, const fs::path& base) {
  return fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(base).lexically_normal()).generic_string();
}

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return double(ts.tv_sec) + 1e-9 * double(ts.tv_nsec);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::size_t argmax(const std::vector<double>& v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

RunConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValueError("config: " + std::string(e.what()));
  }
  RunConfig c;
  for (const auto& [section, keys] : tree) {
    const auto known = kConfigKeys.find(section);
    if (known == kConfigKeys.end()) throw ValueError("config: unknown section [" + section + "]");
    if (!keys.data().empty()) throw ValueError("config: value outside a section: " + section);
    for (const auto& [key, node] : keys) {
      const std::string name = section + "." + key;
      if (!known->second.count(key)) throw ValueError("config: unknown key " + name);
      const std::string v = trim(node.data());
      if (section == "data") {
        auto& d = c.data;
        if (key == "classes") {
          d.classes.clear();
          for (const auto& cls : split_list(v)) d.classes.push_back(data::parse_class(cls));
        } else if (key == "clips_per_class") {
          d.clips_per_class = to_uint(name, v);
        } else if (key == "train_fraction") {
          d.train_fraction = to_double(name, v);
        } else if (key == "seed") {
          d.seed = to_uint(name, v);
        } else if (key == "frame_size") {
          d.frame_size = to_uint(name, v);
        } else if (key == "target_length") {
          d.target_length = to_uint(name, v);
        } else {
          d.noise = to_double(name, v);
        }
      } else if (section == "train") {
        c.train[key] = v;
      } else if (section == "mask") {
        auto& m = c.mask;
        if (key == "iterations") {
          m.iterations = to_uint(name, v);
        } else {
          const double x = to_double(name, v);
          if (key == "lambda1") m.lambda1 = x;
          if (key == "lambda2") m.lambda2 = x;
          if (key == "beta") m.beta = x;
          if (key == "learning_rate") m.learning_rate = x;
          if (key == "threshold") m.threshold = x;
          if (key == "init_active") m.init_active = x;
          if (key == "init_inactive") m.init_inactive = x;
          if (key == "adam_beta1") m.adam_beta1 = x;
          if (key == "adam_beta2") m.adam_beta2 = x;
          if (key == "adam_eps") m.adam_eps = x;
        }
      } else if (section == "metrics") {
        auto& s = c.metrics;
        if (key == "blob_threshold") s.blobs.threshold = to_double(name, v);
        if (key == "blob_min_area") s.blobs.min_area = to_uint(name, v);
        if (key == "drop_eps") s.drop_eps = to_double(name, v);
        if (key == "bins") s.bins = to_uint(name, v);
      } else {
        auto& e = c.explain;
        if (key == "target") {
          if (v != "predicted" && v != "true") throw ValueError("config: explain.target must be predicted or true");
          e.target_true_class = v == "true";
        } else if (key == "count") {
          e.count = to_uint(name, v);
        } else if (key == "split") {
          e.split = v;
        } else if (key == "clips") {
          e.clips = split_list(v);
        } else {
          e.images = to_bool(name, v);
        }
      }
    }
  }
  c.mask.validate();
  c.metrics.mask_threshold = c.mask.threshold;
  if (!(c.metrics.blobs.threshold > 0 && c.metrics.blobs.threshold < 1)) {
    throw ValueError("config: metrics.blob_threshold must be in (0, 1)");
  }
  if (c.metrics.bins == 0) throw ValueError("config: metrics.bins must be at least 1");
  if (!(c.metrics.drop_eps >= 0)) throw ValueError("config: metrics.drop_eps must be >= 0");
  if (c.explain.split != "val" && c.explain.split != "train") throw ValueError("config: explain.split must be val or train");
  // train keys are checked against a real model kind when applied
  for (auto kind : {models::ModelKind::Conv3D, models::ModelKind::ConvLstm}) train_config(kind, c);
  return c;
}

json to_json(const RunConfig& c) {
  json train = json::object();
  for (const auto& [k, v] : c.train) train[k] = v;
  const auto& m = c.mask;
  return {{"data", io::to_json(c.data)},
          {"train", train},
          {"mask",
           {{"lambda1", m.lambda1},
            {"lambda2", m.lambda2},
            {"beta", m.beta},
            {"learning_rate", m.learning_rate},
            {"iterations", m.iterations},
            {"threshold", m.threshold},
            {"init_active", m.init_active},
            {"init_inactive", m.init_inactive},
            {"adam_beta1", m.adam_beta1},
            {"adam_beta2", m.adam_beta2},
            {"adam_eps", m.adam_eps}}},
          {"metrics",
           {{"blob_threshold", c.metrics.blobs.threshold},
            {"blob_min_area", c.metrics.blobs.min_area},
            {"drop_eps", c.metrics.drop_eps},
            {"bins", c.metrics.bins}}},
          {"explain",
           {{"target", c.explain.target_true_class ? "true" : "predicted"},
            {"count", c.explain.count},
            {"split", c.explain.split},
            {"clips", c.explain.clips},
            {"images", c.explain.images}}}};
}

train::TrainConfig train_config(models::ModelKind kind, const RunConfig& config) {
  auto t = train::TrainConfig::defaults_for(kind);
  for (const auto& [key, v] : config.train) {
    const std::string name = "train." + key;
    if (key == "optimizer") {
      t.optimizer = train::parse_optimizer(v);
    } else if (key == "learning_rate") {
      t.learning_rate = to_double(name, v);
    } else if (key == "momentum") {
      t.momentum = to_double(name, v);
    } else if (key == "weight_decay") {
      t.weight_decay = to_double(name, v);
    } else if (key == "label_smoothing") {
      t.label_smoothing = to_double(name, v);
    } else if (key == "epochs") {
      t.epochs = to_uint(name, v);
    } else if (key == "batch_size") {
      t.batch_size = to_uint(name, v);
    } else if (key == "seed") {
      t.seed = to_uint(name, v);
    } else {
      throw ValueError("config: unknown key " + name);
    }
  }
  t.validate();
  return t;
}

Stage::Stage(fs::path target) : target_(fs::absolute(std::move(target)).lexically_normal()) {
  if (!target_.has_filename()) target_ = target_.parent_path();
  if (target_.filename().empty() || target_ == target_.root_path()) throw IoError("invalid output directory");
  dir_ = target_.parent_path() / ("." + target_.filename().string() + ".partial");
  fs::create_directories(target_.parent_path());
  fs::remove_all(dir_);
  fs::create_directories(dir_);
}

Stage::~Stage() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
}

void Stage::log(const std::string& line) {
  std::ofstream out(dir_ / "run.log", std::ios::app);
  out << line << '\n';
}

void Stage::commit(json run) {
  const fs::path manifest_path = dir_ / "manifest.json";
  json manifest = fs::exists(manifest_path) ? io::read_json(manifest_path) : json::object();
  manifest["run"] = std::move(run);
  io::write_json(manifest_path, manifest);
  if (fs::exists(target_)) {
    if (!fs::exists(target_ / "manifest.json")) {
      throw IoError("refusing to replace " + target_.string() + ": it is not a toolkit output");
    }
    fs::remove_all(target_);
  }
  fs::rename(dir_, target_);
  committed_ = true;
}

json run_block(const RunInfo& info, const fs::path& dir, const fs::path& target) {
  json inputs = json::object();
  for (const auto& [name, p] : info.inputs) inputs[name] = rel(p, target);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto r = e.path().lexically_relative(dir).generic_string();
    if (r != "manifest.json") files.push_back(r);
  }
  std::sort(files.begin(), files.end());
  json seeds = json::object();
  for (const auto& [name, s] : info.seeds) seeds[name] = s;
  return {{"tool", kToolName}, {"version", kToolVersion}, {"command", info.command}, {"config", info.config},
          {"seeds", seeds},    {"inputs", inputs},        {"files", files},         {"log", "run.log"}};
}

void generate(const RunConfig& config, const fs::path& out, const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto split = data::make_dataset(config.data);
  Stage stage(out);
  io::save_dataset(stage.dir(), config.data, split);
  const std::string msg = "generated " + std::to_string(split.train.size()) + " train / " +
                          std::to_string(split.val.size()) + " val clips in " + fixed(seconds_since(t0)) + " s";
  stage.log(msg);
  if (progress) progress(msg);
  stage.commit(run_block(RunInfo{"generate", io::to_json(config.data), {{"data", config.data.seed}}, {}}, stage.dir(), out));
}

TrainSummary reversal_check(const models::VideoModel<float>& model, const std::vector<data::ClipRecord>& val,
                            const std::vector<data::MotionClass>& classes) {
  TrainSummary s;
  std::size_t same = 0, mirrored = 0;
  for (const auto& clip : val) {
    if (!data::is_direction_paired(clip.label)) continue;
    const auto scores = model.predict(data::reverse_frames(clip.frames));
    const auto pred = std::size_t(std::max_element(scores.begin(), scores.end()) - scores.begin());
    ++s.reversed_clips;
    same += pred == clip.label_index;
    const auto m = data::mirror_class(clip.label);
    const auto it = std::find(classes.begin(), classes.end(), *m);
    if (it != classes.end()) mirrored += pred == std::size_t(it - classes.begin());
  }
  if (s.reversed_clips > 0) {
    s.reversed_accuracy = double(same) / double(s.reversed_clips);
    s.reversed_mirror_rate = double(mirrored) / double(s.reversed_clips);
  }
  return s;
}

TrainSummary train(models::ModelKind kind, const fs::path& dataset, const RunConfig& config, const fs::path& out,
                   const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = io::load_dataset(dataset);
  models::ModelConfig mc;
  mc.kind = kind;
  mc.frames = ds.options.target_length;
  mc.height = mc.width = ds.options.frame_size;
  mc.num_classes = ds.options.classes.size();
  const auto tc = train_config(kind, config);

  Stage stage(out);
  auto log = [&](const std::string& line) {
    stage.log(line);
    if (progress) progress(line);
  };
  auto result = train::train_model(mc, ds.split, tc, [&](const train::EpochStats& e) {
    log("epoch " + std::to_string(e.epoch) + " loss " + fixed(e.train_loss, 4) + " train " +
        fixed(e.train_accuracy) + " val " + fixed(e.val_accuracy) + " at " + fixed(seconds_since(t0), 1) + " s");
  });
  auto summary = reversal_check(*result.model, ds.split.val, ds.options.classes);
  summary.val_accuracy = result.val_accuracy;

  io::Checkpoint ck{mc, result.model->params(), result.model->buffers(), {}};
  ck.meta.train = tc;
  ck.meta.history = result.history;
  ck.meta.val_accuracy = result.val_accuracy;
  for (auto c : ds.options.classes) ck.meta.class_names.emplace_back(data::class_name(c));
  ck.meta.dataset = rel(dataset, out);
  io::save_checkpoint(stage.dir(), ck);
  log("reversed direction-paired val clips: " + std::to_string(summary.reversed_clips) + ", accuracy " +
      fixed(summary.reversed_accuracy) + ", mirror rate " + fixed(summary.reversed_mirror_rate));
  log("trained " + std::string(models::kind_name(kind)) + " in " + fixed(seconds_since(t0), 1) + " s");

  RunInfo info{"train", io::to_json(tc), {{"train", tc.seed}}, {{"dataset", dataset}}};
  info.config["model"] = models::kind_name(kind);
  auto run = run_block(info, stage.dir(), out);
  run["results"] = {{"val_accuracy", summary.val_accuracy},
                    {"reversed_clips", summary.reversed_clips},
                    {"reversed_accuracy", summary.reversed_accuracy},
                    {"reversed_mirror_rate", summary.reversed_mirror_rate}};
  stage.commit(run);
  return summary;
}

std::vector<const data::ClipRecord*> select_clips(const data::DatasetSplit& split, const ExplainOptions& options,
                                                  std::size_t num_classes) {
  std::vector<const data::ClipRecord*> out;
  if (!options.clips.empty()) {
    for (const auto& id : options.clips) {
      const data::ClipRecord* found = nullptr;
      for (const auto* part : {&split.val, &split.train})
        for (const auto& c : *part)
          if (c.id == id) found = &c;
      if (!found) throw ValueError("explain: unknown clip id '" + id + "'");
      out.push_back(found);
    }
    return out;
  }
  const auto& pool = options.split == "train" ? split.train : split.val;
  std::vector<std::vector<const data::ClipRecord*>> by_class(num_classes);
  for (const auto& c : pool) {
    if (c.label_index >= num_classes) throw ValueError("explain: clip " + c.id + " has an unknown label");
    by_class[c.label_index].push_back(&c);
  }
  const std::size_t want = options.count == 0 ? pool.size() : std::min(options.count, pool.size());
  for (std::size_t round = 0; out.size() < want; ++round)
    for (const auto& cls : by_class)
      if (round < cls.size() && out.size() < want) out.push_back(cls[round]);
  return out;
}

Explanation explain_clip(const models::VideoModel<float>& model, const data::ClipRecord& clip,
                         const RunConfig& config) {
  Explanation e;
  e.clip_id = clip.id;
  e.true_class = clip.label_index;
  e.event = clip.event;
  for (float s : model.predict(clip.frames)) e.scores.push_back(double(s));
  e.predicted_class = argmax(e.scores);
  const std::size_t target = config.explain.target_true_class ? e.true_class : e.predicted_class;
  e.mask = mask::optimize_mask(model, clip.frames, target, config.mask);
  e.saliency = gradcam::saliency_frames(model, clip.frames, target);
  e.blobs = metrics::volume_blobs(e.saliency, config.metrics.blobs);
  return e;
}

json to_json(const Explanation& e, const std::string& model, const std::vector<std::string>& class_names) {
  auto name = [&](std::size_t i) { return i < class_names.size() ? class_names[i] : std::to_string(i); };
  const auto& m = e.mask;
  json active = json::array();
  for (bool a : m.active) active.push_back(a ? 1 : 0);
  json j{{"clip_id", e.clip_id},
         {"model", model},
         {"true_class", e.true_class},
         {"true_label", name(e.true_class)},
         {"predicted_class", e.predicted_class},
         {"predicted_label", name(e.predicted_class)},
         {"target_class", m.target_class},
         {"scores", e.scores},
         {"os", m.original_score},
         {"fs", m.freeze_score},
         {"rs", m.reverse_score},
         {"mask", {{"pre_sigmoid", m.pre_sigmoid}, {"activation", m.activation}, {"active", active}}},
         {"mask_length", std::count(m.active.begin(), m.active.end(), true)},
         {"loss_trace", m.loss_trace},
         {"final_loss", m.final_loss},
         {"blobs", {{"counts", e.blobs.counts}, {"sizes", e.blobs.sizes}, {"distances", e.blobs.distances}}}};
  j["event"] = e.event ? json::array({e.event->start, e.event->end}) : json(nullptr);
  return j;
}

void explain(const fs::path& checkpoint, const fs::path& dataset, const RunConfig& config, const fs::path& out,
             std::size_t jobs, const Progress& progress, const ClipHook& on_clip) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ck = io::load_checkpoint(checkpoint);
  const auto model = io::model_from_checkpoint(ck);
  const auto ds = io::load_dataset(dataset);
  std::vector<std::string> names;
  for (auto c : ds.options.classes) names.emplace_back(data::class_name(c));
  if (names != ck.meta.class_names) throw ValueError("explain: the checkpoint was trained on different classes");
  if (ck.config.input_shape() != Shape{ds.options.target_length, ds.options.frame_size, ds.options.frame_size, 1}) {
    throw ShapeError("explain: checkpoint input " + shape_string(ck.config.input_shape()) +
                     " does not match the dataset clips");
  }
  const auto clips = select_clips(ds.split, config.explain, names.size());
  const std::string model_name(models::kind_name(ck.config.kind));

  Stage stage(out);
  fs::create_directories(stage.dir() / "records");
  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    std::lock_guard lock(log_mutex);
    stage.log(line);
    if (progress) progress(line);
  };

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(clips.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < clips.size(); i = next++) {
      try {
        const auto& clip = *clips[i];
        const auto c0 = std::chrono::steady_clock::now();
        const double cpu0 = thread_cpu_seconds();
        const auto e = explain_clip(*model, clip, config);
        const double cpu = thread_cpu_seconds() - cpu0;
        json record = to_json(e, model_name, names);
        if (config.explain.images) {
          const fs::path img = stage.dir() / "saliency" / clip.id;
          record["images"] = gradcam::write_images(img, clip.frames, e.saliency);
          TensorF vol = e.saliency.cast<float>();
          save_vten(img / "saliency.vten", vol);
          record["saliency"] = "saliency/" + clip.id + "/saliency.vten";
        }
        write_atomic(stage.dir() / "records" / (clip.id + ".json"), record.dump(2) + "\n");
        log(clip.id + ": OS " + fixed(e.mask.original_score, 4) + " FS " + fixed(e.mask.freeze_score, 4) + " RS " +
            fixed(e.mask.reverse_score, 4) + " mask length " +
            std::to_string(std::count(e.mask.active.begin(), e.mask.active.end(), true)) + " in " +
            fixed(seconds_since(c0), 2) + " s");
        if (on_clip) {
          std::lock_guard lock(log_mutex);
          on_clip(e, cpu);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(clips.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json ids = json::array();
  for (const auto* c : clips) ids.push_back(c->id);
  io::write_json(stage.dir() / "manifest.json", {{"format", "vidsal-explanations"},
                                                 {"version", 1},
                                                 {"model", model_name},
                                                 {"class_names", names},
                                                 {"clips", ids}});
  log("explained " + std::to_string(clips.size()) + " clips in " + fixed(seconds_since(t0), 1) + " s");
  auto cfg = to_json(config);
  RunInfo info{"explain", json{{"mask", cfg["mask"]}, {"metrics", cfg["metrics"]}, {"explain", cfg["explain"]}},
               {},
               {{"checkpoint", checkpoint}, {"dataset", dataset}}};
  stage.commit(run_block(info, stage.dir(), out));
}

std::vector<metrics::SequenceMetrics> load_sequences(const fs::path& dir, const metrics::SummaryConfig& config) {
  if (!fs::is_directory(dir)) throw IoError("explanation directory not found: " + dir.string());
  const auto manifest = io::read_json(dir / "manifest.json");
  std::vector<metrics::SequenceMetrics> out;
  try {
    if (manifest.at("format") != "vidsal-explanations") throw ValueError("not an explanation directory: " + dir.string());
    const auto model = manifest.at("model").get<std::string>();
    for (const auto& id : manifest.at("clips")) {
      const auto r = io::read_json(dir / "records" / (id.get<std::string>() + ".json"));
      metrics::SequenceMetrics s;
      s.clip_id = r.at("clip_id").get<std::string>();
      s.model = model;
      s.true_class = r.at("true_class").get<std::size_t>();
      s.predicted_class = r.at("predicted_class").get<std::size_t>();
      s.drop = metrics::drop(r.at("os").get<double>(), r.at("fs").get<double>(), r.at("rs").get<double>(),
                             config.drop_eps);
      s.mask_length =
          metrics::mask_length(r.at("mask").at("activation").get<std::vector<double>>(), config.mask_threshold);
      const auto& b = r.at("blobs");
      s.blobs.counts = b.at("counts").get<std::vector<std::size_t>>();
      s.blobs.sizes = b.at("sizes").get<std::vector<double>>();
      s.blobs.distances = b.at("distances").get<std::vector<double>>();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ValueError("explanation records in " + dir.string() + ": " + e.what());
  }
  return out;
}

metrics::MetricsSummary compare(const fs::path& a, const fs::path& b, const RunConfig& config, const fs::path& out,
                                const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  auto summary_config = config.metrics;
  summary_config.mask_threshold = config.mask.threshold;
  // blob settings were applied at explain time; both sides must agree
  json blobs;
  for (const auto& dir : {a, b}) {
    if (!fs::is_directory(dir)) throw IoError("explanation directory not found: " + dir.string());
    const auto m = io::read_json(dir / "manifest.json");
    json s;
    try {
      const auto& mc = m.at("run").at("config").at("metrics");
      s = {{"blob_threshold", mc.at("blob_threshold")}, {"blob_min_area", mc.at("blob_min_area")}};
    } catch (const json::exception& e) {
      throw ValueError("compare: " + dir.string() + " is not an explanation directory (" + e.what() + ")");
    }
    if (blobs.is_null()) {
      blobs = s;
    } else if (blobs != s) {
      throw ValueError("compare: the two directories used different blob settings");
    }
  }
  summary_config.blobs.threshold = blobs.at("blob_threshold").get<double>();
  summary_config.blobs.min_area = blobs.at("blob_min_area").get<std::size_t>();

  const auto sa = load_sequences(a, summary_config), sb = load_sequences(b, summary_config);
  const auto summary = metrics::summarize(sa, sb, summary_config);
  Stage stage(out);
  metrics::write_sequences_csv(stage.dir() / "sequences.csv", sa, sb);
  metrics::write_histograms_csv(stage.dir() / "histograms.csv", summary);
  metrics::write_ttests_csv(stage.dir() / "ttests.csv", summary);
  metrics::write_summary_json(stage.dir() / "summary.json", summary);
  io::write_json(stage.dir() / "manifest.json",
                 {{"format", "vidsal-comparison"}, {"version", 1}, {"models", {summary.a.model, summary.b.model}}});
  const std::string msg = "compared " + std::to_string(sa.size()) + " and " + std::to_string(sb.size()) +
                          " sequences in " + fixed(seconds_since(t0), 2) + " s";
  stage.log(msg);
  if (progress) progress(msg);
  auto cfg = to_json(config);
  cfg["metrics"]["blob_threshold"] = summary_config.blobs.threshold;
  cfg["metrics"]["blob_min_area"] = summary_config.blobs.min_area;
  cfg["metrics"]["mask_threshold"] = summary_config.mask_threshold;
  stage.commit(run_block(RunInfo{"compare", cfg["metrics"], {}, {{"a", a}, {"b", b}}}, stage.dir(), out));
  return summary;
}

}  // namespace vidsal::pipeline
