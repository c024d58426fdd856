// Command-line front end: synthesize perspective textures, emit scale
// maps, and run the efficiency benchmark over the search/scheduling
// modes.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "persyn/image_io.hpp"
#include "persyn/pipeline.hpp"

namespace {

struct SizeArg {
  int width = 0;
  int height = 0;
};

SizeArg parse_size(const std::string& text) {
  SizeArg s;
  char sep = 0;
  std::istringstream in(text);
  if (!(in >> s.width >> sep >> s.height) || (sep != 'x' && sep != 'X') ||
      s.width < 1 || s.height < 1 || !in.eof()) {
    throw CLI::ValidationError("size", "expected WIDTHxHEIGHT, got '" + text + "'");
  }
  return s;
}

persyn::QueryBudget parse_budget(const std::string& text) {
  if (text == "greedy") return persyn::QueryBudget::greedy();
  if (text == "exact") return persyn::QueryBudget::exact();
  if (text.rfind("backtrack", 0) == 0) {
    int leaves = 4;
    const auto colon = text.find(':');
    if (colon != std::string::npos) leaves = std::stoi(text.substr(colon + 1));
    return persyn::QueryBudget::backtrack(leaves);
  }
  throw CLI::ValidationError("budget",
                             "expected greedy|exact|backtrack[:N], got '" + text + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw persyn::IoError("cannot open " + path + " for writing");
  out << text;
  if (!out.good()) throw persyn::IoError("write failure on " + path);
}

struct SynthArgs {
  std::string input;
  std::string output;
  std::string report_path;
  std::string trace_path;
  std::string scalemap_prefix;
  double sigma = 0.0;
  double tau = 0.0;
  std::string out_size = "128x128";
  std::uint64_t seed = 0;
  int levels = 2;
  int nbhd_width = 8;
  int spacing = 2;
  int patch_width = 2;
  double robust_exponent = 0.8;
  double epsilon = 1e-4;
  int max_iterations = 20;
  int min_iterations = 1;
  double convergence = 0.01;
  int bins = 16;
  bool no_hist = false;
  bool hist_include_scale = false;
  std::string mode = "patch-tree";
  std::string budget = "backtrack:4";
  double variance = 0.95;
  int branching = 4;
};

persyn::SynthesisRequest build_request(const SynthArgs& args) {
  persyn::SynthesisRequest req;
  req.exemplar = persyn::load_image(args.input);
  req.view = {args.sigma, args.tau};
  const SizeArg size = parse_size(args.out_size);
  req.out_width = size.width;
  req.out_height = size.height;
  req.levels = args.levels;
  req.seed = args.seed;
  req.pca_variance = args.variance;
  req.tree_branching = args.branching;

  req.cfg.robust_exponent = args.robust_exponent;
  req.cfg.distance_epsilon = args.epsilon;
  req.cfg.max_iterations = args.max_iterations;
  req.cfg.min_iterations = args.min_iterations;
  req.cfg.convergence_fraction = args.convergence;
  req.cfg.histogram_bins = args.bins;
  req.cfg.histogram_matching = !args.no_hist;
  req.cfg.histogram_include_scale = args.hist_include_scale;
  req.cfg.grid.nbhd_width = args.nbhd_width;
  req.cfg.grid.spacing = args.spacing;
  req.cfg.patch.patch_width = args.patch_width;
  req.cfg.budget = parse_budget(args.budget);
  req.cfg.seed = args.seed;

  if (args.mode == "patch-tree") {
    req.index_kind = persyn::IndexKind::kPcaTree;
  } else if (args.mode == "pixel-tree") {
    req.index_kind = persyn::IndexKind::kPcaTree;
    req.cfg.patch.patch_width = 1;
  } else if (args.mode == "pixel-brute") {
    req.index_kind = persyn::IndexKind::kBruteForce;
    req.cfg.patch.patch_width = 1;
  } else {
    throw CLI::ValidationError(
        "mode", "expected patch-tree|pixel-tree|pixel-brute, got '" + args.mode + "'");
  }
  return req;
}

int run_synth(const SynthArgs& args) {
  const persyn::SynthesisRequest req = build_request(args);
  const persyn::SynthesisResult result = persyn::synthesize(req);
  persyn::save_image(result.image, args.output);
  if (!args.report_path.empty()) {
    write_text(args.report_path, result.report.to_json() + "\n");
  }
  if (!args.trace_path.empty()) {
    write_text(args.trace_path, result.report.traces_jsonl());
  }
  if (!args.scalemap_prefix.empty()) {
    const persyn::ScaleMap in_map = persyn::compute_scale_map(
        req.exemplar.width(), req.exemplar.height(), req.view);
    const persyn::ScaleMap out_map =
        persyn::compute_scale_map(req.out_width, req.out_height, req.view);
    persyn::save_scale_map(in_map, args.scalemap_prefix + "_input.psm");
    persyn::save_scale_map(out_map, args.scalemap_prefix + "_output.psm");
  }
  return 0;
}

struct ScalemapArgs {
  std::string size = "105x105";
  double sigma = 0.0;
  double tau = 0.0;
  std::string output;
  std::string preview;
};

int run_scalemap(const ScalemapArgs& args) {
  const SizeArg size = parse_size(args.size);
  const persyn::ScaleMap map =
      persyn::compute_scale_map(size.width, size.height, {args.sigma, args.tau});
  persyn::save_scale_map(map, args.output);
  if (!args.preview.empty()) {
    const persyn::ScaleBounds& b = map.bounds();
    std::vector<float> plane(map.values().size());
    if (b.s_max > b.s_min) {
      const double inv = 1.0 / (b.s_max - b.s_min);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        plane[i] = static_cast<float>((map.values()[i] - b.s_min) * inv);
      }
    } else {
      std::fill(plane.begin(), plane.end(), 0.5f);
    }
    persyn::save_gray_png(plane, map.width(), map.height(), args.preview);
  }
  return 0;
}

struct BenchArgs {
  std::string input;
  std::string sizes = "128x128";
  int reps = 3;
  std::uint64_t seed = 0;
  double sigma = 30.0;
  double tau = 18.0;
  int levels = 2;
  int iterations = 2;
  std::string out_json;
  std::string out_csv;
};

struct BenchCell {
  std::string size;
  std::string mode;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double mean_nn_calls = 0.0;
};

int run_bench(const BenchArgs& args) {
  if (args.reps < 1) throw persyn::DomainError("bench needs at least 1 repetition");

  std::vector<SizeArg> sizes;
  std::stringstream list(args.sizes);
  std::string token;
  while (std::getline(list, token, ',')) sizes.push_back(parse_size(token));
  if (sizes.empty()) throw persyn::DomainError("no benchmark sizes given");

  const std::vector<persyn::ModeSpec> modes = {
      {"pixel-brute", 1, persyn::IndexKind::kBruteForce,
       persyn::QueryBudget::exact()},
      {"pixel-tree", 1, persyn::IndexKind::kPcaTree,
       persyn::QueryBudget::backtrack(4)},
      {"patch-tree", 2, persyn::IndexKind::kPcaTree,
       persyn::QueryBudget::backtrack(4)},
  };

  persyn::SynthesisRequest base;
  base.exemplar = persyn::load_image(args.input);
  base.view = {args.sigma, args.tau};
  base.levels = args.levels;
  base.cfg.max_iterations = args.iterations;
  base.cfg.convergence_fraction = 1e-6;

  std::vector<BenchCell> cells;
  for (const SizeArg& size : sizes) {
    const std::string size_name =
        std::to_string(size.width) + "x" + std::to_string(size.height);
    for (const persyn::ModeSpec& mode : modes) {
      std::vector<double> part2;
      std::vector<double> calls;
      for (int rep = 0; rep < args.reps; ++rep) {
        persyn::SynthesisRequest req = base;
        req.out_width = size.width;
        req.out_height = size.height;
        req.seed = args.seed + static_cast<std::uint64_t>(rep);
        req.cfg.seed = req.seed;
        const auto runs = persyn::compare_modes(req, {mode});
        part2.push_back(runs[0].part2_millis);
        calls.push_back(static_cast<double>(runs[0].nn_calls));
        std::cerr << "bench " << size_name << " " << mode.name << " rep " << rep
                  << ": " << runs[0].part2_millis << " ms, " << runs[0].nn_calls
                  << " nn calls\n";
      }
      double mean = 0.0;
      for (double v : part2) mean += v;
      mean /= part2.size();
      double var = 0.0;
      for (double v : part2) var += (v - mean) * (v - mean);
      const double stddev =
          part2.size() > 1 ? std::sqrt(var / (part2.size() - 1)) : 0.0;
      double mean_calls = 0.0;
      for (double v : calls) mean_calls += v;
      mean_calls /= calls.size();
      cells.push_back({size_name, mode.name, mean, stddev, mean_calls});
    }
  }

  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  std::string csv = "size,mode,reps,mean_ms,stddev_ms,mean_nn_calls\n";
  for (const BenchCell& c : cells) {
    j.push_back({{"size", c.size},
                 {"mode", c.mode},
                 {"reps", args.reps},
                 {"mean_ms", c.mean_ms},
                 {"stddev_ms", c.stddev_ms},
                 {"mean_nn_calls", c.mean_nn_calls}});
    csv += c.size + "," + c.mode + "," + std::to_string(args.reps) + "," +
           std::to_string(c.mean_ms) + "," + std::to_string(c.stddev_ms) + "," +
           std::to_string(c.mean_nn_calls) + "\n";
  }
  if (!args.out_json.empty()) write_text(args.out_json, j.dump(2) + "\n");
  if (!args.out_csv.empty()) write_text(args.out_csv, csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"persyn - perspective texture synthesis"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Synthesize a perspective texture");
  synth_cmd->add_option("--in", synth.input, "Exemplar image (PNG or PPM)")
      ->required();
  synth_cmd->add_option("--out", synth.output, "Output image path")->required();
  synth_cmd->add_option("--sigma", synth.sigma, "Slant angle, degrees [0,90)")
      ->required();
  synth_cmd->add_option("--tau", synth.tau, "Tilt angle, degrees [0,360)")
      ->required();
  synth_cmd->add_option("--out-size", synth.out_size, "Output size WxH");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");
  synth_cmd->add_option("--levels", synth.levels, "Synthesis levels");
  synth_cmd->add_option("--w", synth.nbhd_width, "Neighborhood width");
  synth_cmd->add_option("--spacing", synth.spacing, "Grid spacing");
  synth_cmd->add_option("--patch-width", synth.patch_width, "Patch width");
  synth_cmd->add_option("--r", synth.robust_exponent, "Robust exponent");
  synth_cmd->add_option("--epsilon", synth.epsilon, "IRLS weight regularizer");
  synth_cmd->add_option("--iters", synth.max_iterations, "Max iterations per level");
  synth_cmd->add_option("--min-iters", synth.min_iterations, "Min iterations per level");
  synth_cmd->add_option("--conv", synth.convergence, "Convergence fraction");
  synth_cmd->add_option("--bins", synth.bins, "Histogram bins per channel");
  synth_cmd->add_flag("--no-hist", synth.no_hist, "Disable histogram reweighting");
  synth_cmd->add_flag("--hist-include-scale", synth.hist_include_scale,
                      "Include the S channel in histogram matching");
  synth_cmd->add_option("--mode", synth.mode,
                        "patch-tree | pixel-tree | pixel-brute");
  synth_cmd->add_option("--budget", synth.budget,
                        "Tree search budget: greedy|exact|backtrack[:N]");
  synth_cmd->add_option("--variance", synth.variance, "PCA variance target");
  synth_cmd->add_option("--branching", synth.branching, "Tree branching factor");
  synth_cmd->add_option("--report", synth.report_path, "Write a JSON report");
  synth_cmd->add_option("--trace", synth.trace_path, "Write the energy trace (JSONL)");
  synth_cmd->add_option("--emit-scalemaps", synth.scalemap_prefix,
                        "Write input/output scale maps with this prefix");

  ScalemapArgs scalemap;
  CLI::App* scalemap_cmd =
      app.add_subcommand("scalemap", "Compute and save a scale map");
  scalemap_cmd->add_option("--size", scalemap.size, "Map size WxH")->required();
  scalemap_cmd->add_option("--sigma", scalemap.sigma, "Slant angle, degrees")
      ->required();
  scalemap_cmd->add_option("--tau", scalemap.tau, "Tilt angle, degrees")
      ->required();
  scalemap_cmd->add_option("--out", scalemap.output, "PSM1 output path")
      ->required();
  scalemap_cmd->add_option("--preview", scalemap.preview,
                           "Grayscale PNG preview path");

  BenchArgs bench;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "Efficiency comparison across modes");
  bench_cmd->add_option("--in", bench.input, "Exemplar image")->required();
  bench_cmd->add_option("--sizes", bench.sizes, "Comma-separated list of WxH");
  bench_cmd->add_option("--reps", bench.reps, "Repetitions per cell");
  bench_cmd->add_option("--seed", bench.seed, "Base RNG seed");
  bench_cmd->add_option("--sigma", bench.sigma, "Slant angle, degrees");
  bench_cmd->add_option("--tau", bench.tau, "Tilt angle, degrees");
  bench_cmd->add_option("--levels", bench.levels, "Synthesis levels");
  bench_cmd->add_option("--iters", bench.iterations, "Max iterations per level");
  bench_cmd->add_option("--out-json", bench.out_json, "JSON output path");
  bench_cmd->add_option("--out-csv", bench.out_csv, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help goes to stdout, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (scalemap_cmd->parsed()) return run_scalemap(scalemap);
    if (bench_cmd->parsed()) return run_bench(bench);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
