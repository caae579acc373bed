// vidsal: generate / train / explain / compare.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vidsal/error.hpp"
#include "vidsal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vidsal;

namespace {

constexpr const char* kOutputRootEnv = "VIDSAL_OUTPUT_ROOT";

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int fail(const std::string& code, const std::string& message) {
  std::cerr << "error: " << code << ": " << one_line(message) << std::endl;
  return code == "usage" ? 2 : 1;
}

fs::path output_path(const std::string& out) {
  fs::path p(out);
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  return p;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed, bool with_jobs) {
  cmd->add_option("--config", c.config, "INI file with [data] [train] [mask] [metrics] [explain] sections")
      ->check(CLI::ExistingFile);
  if (with_seed) cmd->add_option("--seed", c.seed, "seed for this command");
  if (with_jobs) cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, std::string("output directory (relative paths resolve under $") + kOutputRootEnv +
                                      " when set)")
      ->required();
  cmd->add_flag("--quiet", c.quiet, "no progress on stderr");
}

pipeline::RunConfig load(const Common& c) { return c.config.empty() ? pipeline::RunConfig{} : pipeline::load_config(c.config); }

pipeline::Progress progress(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& line) { std::cerr << line << std::endl; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal masks and Grad-CAM for video classifiers on synthetic motion clips"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pipeline::kToolVersion));

  Common gen_c, train_c, explain_c, compare_c;
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  add_common(gen, gen_c, true, false);

  auto* tr = app.add_subcommand("train", "train a model on a generated dataset");
  std::string kind, train_data;
  std::optional<std::size_t> epochs;
  tr->add_option("--model", kind, "conv3d or convlstm")->required()->check(CLI::IsMember({"conv3d", "convlstm"}));
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--epochs", epochs, "overrides [train] epochs");
  add_common(tr, train_c, true, false);

  auto* ex = app.add_subcommand("explain", "learn temporal masks and Grad-CAM maps for clips");
  std::string checkpoint, explain_data, clips;
  std::optional<std::size_t> count, iterations;
  ex->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  ex->add_option("--data", explain_data, "dataset directory")->required();
  ex->add_option("--clips", clips, "comma-separated clip ids");
  ex->add_option("--count", count, "clips to take round-robin over classes (0 = all)");
  ex->add_option("--iterations", iterations, "mask optimisation steps");
  add_common(ex, explain_c, false, true);

  auto* cmp = app.add_subcommand("compare", "statistics and t-tests for two explanation directories");
  std::string dir_a, dir_b;
  cmp->add_option("a", dir_a, "first explanation directory")->required();
  cmp->add_option("b", dir_b, "second explanation directory")->required();
  add_common(cmp, compare_c, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (gen->parsed()) {
      auto cfg = load(gen_c);
      if (gen_c.seed) cfg.data.seed = *gen_c.seed;
      pipeline::generate(cfg, output_path(gen_c.out), progress(gen_c));
    } else if (tr->parsed()) {
      auto cfg = load(train_c);
      if (train_c.seed) cfg.train["seed"] = std::to_string(*train_c.seed);
      if (epochs) cfg.train["epochs"] = std::to_string(*epochs);
      pipeline::train(models::parse_kind(kind), train_data, cfg, output_path(train_c.out), progress(train_c));
    } else if (ex->parsed()) {
      auto cfg = load(explain_c);
      if (!clips.empty()) {
        cfg.explain.clips.clear();
        std::stringstream ss(clips);
        for (std::string id; std::getline(ss, id, ',');)
          if (!id.empty()) cfg.explain.clips.push_back(id);
      }
      if (count) cfg.explain.count = *count;
      if (iterations) {
        cfg.mask.iterations = *iterations;
        cfg.mask.validate();
      }
      pipeline::explain(checkpoint, explain_data, cfg, output_path(explain_c.out), explain_c.jobs, progress(explain_c));
    } else if (cmp->parsed()) {
      const auto cfg = load(compare_c);
      const auto s = pipeline::compare(dir_a, dir_b, cfg, output_path(compare_c.out), progress(compare_c));
      if (!compare_c.quiet) {
        for (const auto& c : s.comparisons) {
          std::cerr << c.metric << ": " << s.a.model << " " << (c.a.mean ? std::to_string(*c.a.mean) : "-") << " vs "
                    << s.b.model << " " << (c.b.mean ? std::to_string(*c.b.mean) : "-") << ", p "
                    << (c.ttest ? std::to_string(c.ttest->p) : "-") << std::endl;
        }
      }
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
