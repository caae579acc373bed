#include "vidsal/checkpoint.hpp"

#include <fstream>

namespace vidsal::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "vidsal-checkpoint";
constexpr int kVersion = 1;

json int3(const ad::Int3& v) { return json::array({v[0], v[1], v[2]}); }

ad::Int3 int3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValueError("config: expected a 3-element array, got " + j.dump());
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

void write_params(const fs::path& dir, const std::string& sub, const models::ParamMap<float>& params, json& index) {
  fs::create_directories(dir / sub);
  index = json::object();
  for (const auto& [name, t] : params) {
    const std::string rel = sub + "/" + name + ".vten";
    save_vten(dir / rel, t);
    index[name] = json{{"file", rel}, {"shape", t.shape()}};
  }
}

models::ParamMap<float> read_params(const fs::path& dir, const json& index) {
  models::ParamMap<float> out;
  for (const auto& [name, entry] : index.items()) {
    TensorF t = load_vten(dir / entry.at("file").get<std::string>());
    if (t.shape() != entry.at("shape").get<Shape>()) {
      throw ValueError("checkpoint: " + name + " has shape " + shape_string(t.shape()) + " but the manifest says " +
                       entry.at("shape").dump());
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace

json to_json(const models::ModelConfig& c) {
  json j{{"kind", models::kind_name(c.kind)},
         {"frames", c.frames},
         {"height", c.height},
         {"width", c.width},
         {"channels", c.channels},
         {"num_classes", c.num_classes}};
  if (c.kind == models::ModelKind::Conv3D) {
    json layers = json::array();
    for (const auto& l : c.conv_layers) {
      layers.push_back(
          {{"kernel", int3(l.kernel)}, {"stride", int3(l.stride)}, {"padding", int3(l.padding)}, {"channels", l.channels}});
    }
    j["conv_layers"] = layers;
  } else {
    j["lstm_layers"] = c.lstm_layers;
    j["lstm_filters"] = c.lstm_filters;
    j["lstm_kernel"] = c.lstm_kernel;
    j["lstm_stride"] = c.lstm_stride;
    j["lstm_pool"] = c.lstm_pool;
    j["forget_bias"] = c.forget_bias;
    j["bn_momentum"] = c.bn_momentum;
    j["bn_eps"] = c.bn_eps;
  }
  return j;
}

models::ModelConfig model_config_from_json(const json& j) {
  try {
    models::ModelConfig c;
    c.kind = models::parse_kind(j.at("kind").get<std::string>());
    c.frames = j.at("frames").get<std::size_t>();
    c.height = j.at("height").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    if (c.kind == models::ModelKind::Conv3D) {
      c.conv_layers.clear();
      for (const auto& l : j.at("conv_layers")) {
        c.conv_layers.push_back({int3_from(l.at("kernel")), int3_from(l.at("stride")), int3_from(l.at("padding")),
                                 l.at("channels").get<std::size_t>()});
      }
    } else {
      c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
      c.lstm_filters = j.at("lstm_filters").get<std::size_t>();
      c.lstm_kernel = j.at("lstm_kernel").get<std::size_t>();
      c.lstm_stride = j.at("lstm_stride").get<std::size_t>();
      c.lstm_pool = j.at("lstm_pool").get<std::size_t>();
      c.forget_bias = j.at("forget_bias").get<double>();
      c.bn_momentum = j.at("bn_momentum").get<double>();
      c.bn_eps = j.at("bn_eps").get<double>();
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValueError(std::string("model config: ") + e.what());
  }
}

json to_json(const train::TrainConfig& c) {
  return {{"optimizer", train::optimizer_name(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"label_smoothing", c.label_smoothing},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

train::TrainConfig train_config_from_json(const json& j) {
  try {
    train::TrainConfig c;
    c.optimizer = train::parse_optimizer(j.at("optimizer").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.label_smoothing = j.value("label_smoothing", 0.0);
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValueError(std::string("train config: ") + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  fs::create_directories(dir);
  json manifest{{"format", kFormat}, {"version", kVersion}, {"architecture", models::kind_name(ck.config.kind)}};
  manifest["config"] = to_json(ck.config);
  json history = json::array();
  for (const auto& e : ck.meta.history) {
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"val_accuracy", e.val_accuracy}});
  }
  manifest["training"] = {{"config", to_json(ck.meta.train)},
                          {"history", history},
                          {"val_accuracy", ck.meta.val_accuracy},
                          {"class_names", ck.meta.class_names},
                          {"dataset", ck.meta.dataset}};
  write_params(dir, "params", ck.params, manifest["params"]);
  write_params(dir, "buffers", ck.buffers, manifest["buffers"]);
  write_json(dir / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  const json manifest = read_json(dir / "manifest.json");
  try {
    if (manifest.at("format") != kFormat) throw ValueError("not a checkpoint: " + dir.string());
    if (manifest.at("version") != kVersion) {
      throw ValueError("unsupported checkpoint version " + manifest.at("version").dump());
    }
    Checkpoint ck;
    ck.config = model_config_from_json(manifest.at("config"));
    const auto& t = manifest.at("training");
    ck.meta.train = train_config_from_json(t.at("config"));
    for (const auto& e : t.at("history")) {
      ck.meta.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                                 e.at("train_accuracy").get<double>(), e.at("val_accuracy").get<double>()});
    }
    ck.meta.val_accuracy = t.at("val_accuracy").get<double>();
    ck.meta.class_names = t.at("class_names").get<std::vector<std::string>>();
    ck.meta.dataset = t.at("dataset").get<std::string>();
    ck.params = read_params(dir, manifest.at("params"));
    ck.buffers = read_params(dir, manifest.at("buffers"));
    return ck;
  } catch (const json::exception& e) {
    throw ValueError("checkpoint manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
}

std::unique_ptr<models::VideoModel<float>> model_from_checkpoint(const Checkpoint& ck) {
  return models::make_model<float>(ck.config, ck.params, ck.buffers);
}

}  // namespace vidsal::io
