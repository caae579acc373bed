#include "vidsal/dataset_io.hpp"

#include "vidsal/checkpoint.hpp"

namespace vidsal::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "vidsal-dataset";
constexpr int kVersion = 1;

json clip_entry(const data::ClipRecord& c, const char* split) {
  json e{{"id", c.id},
         {"split", split},
         {"class", data::class_name(c.label)},
         {"label_index", c.label_index},
         {"seed", c.seed},
         {"raw_length", c.raw_length},
         {"file", "clips/" + c.id + ".vten"}};
  e["event"] = c.event ? json::array({c.event->start, c.event->end}) : json(nullptr);
  return e;
}

}  // namespace

json to_json(const data::DatasetOptions& o) {
  json classes = json::array();
  for (auto c : o.classes) classes.push_back(data::class_name(c));
  return {{"classes", classes},
          {"clips_per_class", o.clips_per_class},
          {"train_fraction", o.train_fraction},
          {"seed", o.seed},
          {"frame_size", o.frame_size},
          {"target_length", o.target_length},
          {"noise", o.noise}};
}

data::DatasetOptions dataset_options_from_json(const json& j) {
  data::DatasetOptions o;
  o.classes.clear();
  for (const auto& c : j.at("classes")) o.classes.push_back(data::parse_class(c.get<std::string>()));
  o.clips_per_class = j.at("clips_per_class").get<std::size_t>();
  o.train_fraction = j.at("train_fraction").get<double>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.frame_size = j.at("frame_size").get<std::size_t>();
  o.target_length = j.at("target_length").get<std::size_t>();
  o.noise = j.at("noise").get<double>();
  return o;
}

void save_dataset(const fs::path& dir, const data::DatasetOptions& options, const data::DatasetSplit& split) {
  fs::create_directories(dir / "clips");
  json clips = json::array();
  for (const auto* part : {&split.train, &split.val})
    for (const auto& c : *part) {
      clips.push_back(clip_entry(c, part == &split.train ? "train" : "val"));
      save_vten(dir / "clips" / (c.id + ".vten"), c.frames);
    }
  write_json(dir / "manifest.json",
             {{"format", kFormat}, {"version", kVersion}, {"options", to_json(options)}, {"clips", clips}});
}

StoredDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  const json manifest = read_json(dir / "manifest.json");
  try {
    if (manifest.at("format") != kFormat) throw ValueError("not a dataset: " + dir.string());
    if (manifest.at("version") != kVersion) throw ValueError("unsupported dataset version " + manifest.at("version").dump());
    StoredDataset ds;
    ds.options = dataset_options_from_json(manifest.at("options"));
    const std::size_t T = ds.options.target_length, S = ds.options.frame_size;
    for (const auto& e : manifest.at("clips")) {
      data::ClipRecord c;
      c.id = e.at("id").get<std::string>();
      c.label = data::parse_class(e.at("class").get<std::string>());
      c.label_index = e.at("label_index").get<std::size_t>();
      if (c.label_index >= ds.options.classes.size() || ds.options.classes[c.label_index] != c.label) {
        throw ValueError("dataset: clip " + c.id + " has an inconsistent label index");
      }
      c.seed = e.at("seed").get<std::uint64_t>();
      c.raw_length = e.at("raw_length").get<std::size_t>();
      if (!e.at("event").is_null()) {
        c.event = data::EventWindow{e.at("event").at(0).get<std::size_t>(), e.at("event").at(1).get<std::size_t>()};
      }
      c.frames = load_vten(dir / e.at("file").get<std::string>());
      if (c.frames.shape() != Shape{T, S, S, 1}) {
        throw ValueError("dataset: clip " + c.id + " has shape " + shape_string(c.frames.shape()));
      }
      const auto split = e.at("split").get<std::string>();
      if (split == "train") {
        ds.split.train.push_back(std::move(c));
      } else if (split == "val") {
        ds.split.val.push_back(std::move(c));
      } else {
        throw ValueError("dataset: unknown split '" + split + "'");
      }
    }
    return ds;
  } catch (const json::exception& e) {
    throw ValueError("dataset manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace vidsal::io
