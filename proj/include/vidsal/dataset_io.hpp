#pragma once

// Datasets on disk: manifest.json (options, class list, one entry per clip)
// plus clips/<id>.vten holding the subsampled frames.

#include <filesystem>

#include "json.hpp"
#include "vidsal/synthetic.hpp"

namespace vidsal::io {

struct StoredDataset {
  data::DatasetOptions options;
  data::DatasetSplit split;
};

nlohmann::json to_json(const data::DatasetOptions& options);
data::DatasetOptions dataset_options_from_json(const nlohmann::json& j);

void save_dataset(const std::filesystem::path& dir, const data::DatasetOptions& options,
                  const data::DatasetSplit& split);
// Throws IoError for missing files, ValueError for an inconsistent manifest.
StoredDataset load_dataset(const std::filesystem::path& dir);

}  // namespace vidsal::io
