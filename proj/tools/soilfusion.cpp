// soilfusion: extract, calibrate, run, holdout, synth and pca subcommands.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "soilfusion/config.hpp"
#include "soilfusion/csv.hpp"
#include "soilfusion/error.hpp"
#include "soilfusion/fusion.hpp"
#include "soilfusion/pipeline.hpp"
#include "soilfusion/synth.hpp"

namespace fs = std::filesystem;
using namespace soilfusion;

namespace {

int cmd_extract(const std::string& images, const std::string& out, bool strict) {
  const auto result = extract_directory(images);
  for (const auto& f : result.failures) std::cerr << "warning: " << f.file << ": " << f.message << '\n';
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_features(out, result.vectors);
  std::cerr << result.vectors.size() << " samples from " << result.images_used << " images";
  if (!result.failures.empty()) std::cerr << ", " << result.failures.size() << " failed";
  std::cerr << '\n';
  return strict && !result.failures.empty() ? 2 : 0;
}

int cmd_calibrate(const std::string& crm, const std::string& pxrf, const std::string& out_dir) {
  std::optional<fs::path> crm_path;
  if (!crm.empty()) crm_path = crm;
  const auto result = calibrate_files(pxrf, crm_path, out_dir);
  std::cerr << "corrected " << result.corrected.size() << " records using "
            << (result.from_crm ? "CRM-derived" : "default") << " factors\n";
  return 0;
}

/// Loads the config file and applies flag overrides. Path-valued flags are
/// resolved against the working directory, file values against the file.
PipelineConfig load_pipeline(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  KeyValueConfig kv = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::read_file(config_path);
  const fs::path base = config_path.empty() ? fs::path() : fs::absolute(config_path).parent_path();
  for (const auto& [key, value] : overrides) {
    const bool is_path = key == "images" || key == "features" || key == "samples" || key == "pxrf" ||
                         key == "crm" || key == "out_dir";
    kv.set(key, is_path && !value.empty() ? fs::absolute(value).string() : value);
  }
  return parse_pipeline_config(kv, base);
}

int cmd_run(const PipelineConfig& cfg, bool holdout_only) {
  try {
    const auto r = run_pipeline(cfg, holdout_only);
    for (const auto& d : r.diagnostics) std::cerr << "warning: " << d << '\n';
    std::cerr << "wrote " << (cfg.out_dir / (holdout_only ? "zone_holdout.json" : "report.json")).string() << '\n';
    return 0;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.stage());
  }
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  KeyValueConfig kv = spec_path.empty() ? KeyValueConfig{} : KeyValueConfig::read_file(spec_path);
  if (seed) kv.set("seed", std::to_string(*seed));
  const auto spec = synth::parse_spec(kv);
  const auto summary = synth::generate_corpus(spec, out_dir);
  std::cerr << "generated " << summary.samples.size() << " samples, " << summary.image_count << " images in "
            << out_dir << '\n';
  return 0;
}

int cmd_pca(const std::string& input, bool scale, const std::string& prefix, const std::vector<std::string>& columns,
            const std::vector<std::string>& categorical) {
  std::vector<CategoricalSpec> cats;
  for (const auto& c : categorical) {
    const auto colon = c.find(':');
    CategoricalSpec spec{c.substr(0, colon), metrics::DummyMode::DropFirst};
    if (colon != std::string::npos) {
      const auto mode = c.substr(colon + 1);
      if (mode == "full") {
        spec.mode = metrics::DummyMode::Full;
      } else if (mode != "drop") {
        throw Error(ErrorKind::ConfigError, "categorical mode must be 'drop' or 'full', got '" + mode + "'");
      }
    }
    cats.push_back(spec);
  }
  const auto table = csv::read_file(input);
  const auto in = pca_input(table, columns, cats);
  if (const auto parent = fs::path(prefix).parent_path(); !parent.empty()) fs::create_directories(parent);
  const auto result = run_pca(in, scale, prefix);
  for (std::size_t i = 0; i < result.variance_explained.size() && i < 3; ++i) {
    std::fprintf(stderr, "PC%zu: %.2f%%\n", i + 1, result.variance_explained[i]);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soil fertility prediction from smartphone images, auxiliary variables and PXRF"};
  app.require_subcommand(1);

  auto* extract = app.add_subcommand("extract", "Extract the 231 image features per sample");
  std::string images, features_out;
  bool strict = false;
  extract->add_option("--images", images, "Directory of <sampleId>_<k> images")->required();
  extract->add_option("--out", features_out, "Output features CSV")->required();
  extract->add_flag("--strict", strict, "Exit 2 if any image fails to decode");

  auto* calibrate = app.add_subcommand("calibrate", "Apply PXRF correction factors");
  std::string crm, pxrf, cal_out;
  calibrate->add_option("--crm", crm, "CRM scans CSV (default factors when omitted)");
  calibrate->add_option("--pxrf", pxrf, "Raw PXRF CSV")->required();
  calibrate->add_option("--out-dir", cal_out, "Output directory")->required();

  std::string run_config;
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::string> raw_flags;
  bool zone_holdout = false;
  auto add_pipeline_options = [&](CLI::App* sub) {
    sub->add_option("--config", run_config, "Pipeline config file (key = value)");
    for (const auto& k : kPipelineKeys) {
      std::string flag = k.key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (flag == "zone-holdout") continue;
      sub->add_option("--" + flag, raw_flags[k.key], k.help);
    }
  };
  auto* run = app.add_subcommand("run", "Run the full pipeline and write report.json");
  add_pipeline_options(run);
  run->add_flag("--zone-holdout", zone_holdout, "Also run the zone-wise holdout");
  auto* holdout = app.add_subcommand("holdout", "Run only the zone-wise holdout");
  add_pipeline_options(holdout);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string spec_path, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth_cmd->add_option("--spec", spec_path, "Corpus spec file (key = value); defaults when omitted");
  synth_cmd->add_option("--out-dir", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "Override the spec seed");

  auto* pca_cmd = app.add_subcommand("pca", "Principal component analysis of a CSV table");
  std::string pca_in, pca_prefix;
  bool pca_scale = false;
  std::vector<std::string> pca_columns, pca_categorical;
  pca_cmd->add_option("--input", pca_in, "Input CSV")->required();
  pca_cmd->add_flag("--scale", pca_scale, "Scale columns to unit variance");
  pca_cmd->add_option("--out-prefix", pca_prefix, "Output file prefix")->required();
  pca_cmd->add_option("--columns", pca_columns, "Numeric columns (default: all but sample_id)")->delimiter(',');
  pca_cmd->add_option("--categorical", pca_categorical, "Categorical column[:drop|full], dummy coded")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed()) return cmd_extract(images, features_out, strict);
    if (calibrate->parsed()) return cmd_calibrate(crm, pxrf, cal_out);
    if (run->parsed() || holdout->parsed()) {
      auto* sub = run->parsed() ? run : holdout;
      for (const auto& k : kPipelineKeys) {
        std::string flag = k.key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (flag != "zone-holdout" && sub->count("--" + flag) > 0) overrides[k.key] = raw_flags[k.key];
      }
      if (zone_holdout) overrides["zone_holdout"] = "true";
      PipelineConfig cfg;
      try {
        cfg = load_pipeline(run_config, overrides);
      } catch (const Error& e) {
        std::cerr << "error: config stage failed: " << e.what() << '\n';
        return exit_code(Stage::Config);
      }
      return cmd_run(cfg, holdout->parsed());
    }
    if (synth_cmd->parsed()) return cmd_synth(spec_path, synth_out, synth_seed);
    if (pca_cmd->parsed()) return cmd_pca(pca_in, pca_scale, pca_prefix, pca_columns, pca_categorical);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
