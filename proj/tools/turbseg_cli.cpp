#include "turbseg/error.hpp"
#include "turbseg/eval.hpp"
#include "turbseg/pipeline.hpp"
#include "turbseg/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace {

using turbseg::PipelineConfig;

struct PipelineArgs {
  std::string input;
  std::string output;
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

// Every config field becomes --<key>; flags override the config file.
void add_pipeline_options(CLI::App &cmd, PipelineArgs &args) {
  cmd.add_option("input", args.input, "input directory (frames, or frames/ and flows/)")->required();
  cmd.add_option("-o,--output", args.output, "output directory")->required();
  cmd.add_option("-c,--config", args.config_file, "key = value configuration file");
  for (const auto &[key, value] : PipelineConfig().fields()) {
    cmd.add_option_function<std::string>(
           "--" + key, [&args, key = key](const std::string &v) { args.overrides[key] = v; },
           "default: " + (value.empty() ? std::string("(none)") : value))
        ->type_name("VALUE");
  }
}

PipelineConfig resolve(const PipelineArgs &args) {
  PipelineConfig cfg;
  if (!args.config_file.empty()) turbseg::apply_config_file(cfg, args.config_file);
  for (const auto &[k, v] : args.overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Motion segmentation for turbulence-degraded video"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(turbseg::kVersion));

  PipelineArgs segment_args;
  auto *segment = app.add_subcommand("segment", "run the full segmentation pipeline");
  add_pipeline_options(*segment, segment_args);

  PipelineArgs inspect_args;
  auto *inspect = app.add_subcommand("inspect", "write per-stage diagnostic images");
  add_pipeline_options(*inspect, inspect_args);

  std::string pred_dir, gt_dir, csv_path;
  bool by_id = false;
  bool keep_empty = false;
  auto *eval = app.add_subcommand("eval", "score predicted masks against ground truth");
  eval->add_option("pred", pred_dir, "predicted masks directory (objNN/frame_TTTT.png)")->required();
  eval->add_option("gt", gt_dir, "ground-truth masks directory")->required();
  eval->add_option("--csv", csv_path, "write per-frame scores as CSV");
  eval->add_flag("--by-id", by_id, "match objects by id instead of best overlap");
  eval->add_flag("--keep-empty", keep_empty, "count frames where both masks are empty");

  std::string spec_path, synth_out;
  auto *synth = app.add_subcommand("synth", "generate a synthetic turbulent sequence");
  synth->add_option("spec", spec_path, "scene description (key = value)")->required();
  synth->add_option("-o,--output", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*segment) return turbseg::run_pipeline(segment_args.input, resolve(segment_args), segment_args.output, std::cerr);
    if (*inspect) return turbseg::run_inspect(inspect_args.input, resolve(inspect_args), inspect_args.output, std::cerr);
    if (*eval) {
      const auto pred = turbseg::load_mask_stack(pred_dir);
      const auto gt = turbseg::load_mask_stack(gt_dir);
      turbseg::EvalOptions opts;
      opts.matching = by_id ? turbseg::Matching::kById : turbseg::Matching::kBestOverlap;
      opts.skip_empty_frames = !keep_empty;
      const auto report = turbseg::evaluate_sequence(pred, gt, opts);
      turbseg::print_report_summary(report, std::cout);
      if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw turbseg::Error(turbseg::ErrorKind::kIo, "cannot write " + csv_path);
        turbseg::write_report_csv(report, out);
      }
      return 0;
    }
    if (*synth) {
      const auto spec = turbseg::load_scene_spec(spec_path);
      turbseg::write_synthetic(turbseg::generate_sequence(spec), synth_out);
      return 0;
    }
  } catch (const turbseg::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return turbseg::exit_code(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 4;
}
