#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "persyn/image.hpp"
#include "persyn/optimizer.hpp"
#include "persyn/scale_map.hpp"

namespace persyn {

enum class IndexKind { kBruteForce, kPcaTree };

std::string to_string(IndexKind kind);

struct SynthesisRequest {
  RasterImage exemplar;
  ViewAngles view;
  int out_width = 0;
  int out_height = 0;
  int levels = 2;  // coarse-to-fine, x2 upsampling between levels
  OptimizerConfig cfg;
  IndexKind index_kind = IndexKind::kPcaTree;
  double pca_variance = 0.95;
  int tree_branching = 4;
  std::uint64_t seed = 0;
};

struct LevelReport {
  int width = 0;
  int height = 0;
  std::string index;
  EnergyTrace trace;
};

struct SynthesisReport {
  std::vector<LevelReport> levels;
  double part1_millis = 0.0;  // scale maps + initialization
  double part2_millis = 0.0;  // energy optimization
  std::int64_t total_nn_calls = 0;
  std::string config_echo;  // JSON object with the effective settings

  double final_energy() const;
  std::string to_json() const;
  // Concatenated per-level iteration lines.
  std::string traces_jsonl() const;
};

struct SynthesisResult {
  RasterImage image;
  SynthesisReport report;
};

// Seeds the output by copying, per output pixel, the RGB of an exemplar
// pixel whose (unnormalized) scale matches the target scale within
// 1e-3, chosen uniformly; falls back to the nearest-scale pixel (ties
// to the lowest row-major index). The S channel comes from the target
// map, normalized against its bounds.
RgbsImage initialize_output(const RgbsImage& exemplar_rgbs,
                            const ScaleMap& out_map, std::mt19937_64& rng);

// The four-step procedure: exemplar scale map, analytic output maps per
// level, scale-matched initialization at the coarsest level, then one
// optimization pass per level with x2 bilinear upsampling in between.
// The returned image is RGB only; the report carries the part-1/part-2
// timing split and the per-level traces.
SynthesisResult synthesize(const SynthesisRequest& req);

struct ModeSpec {
  std::string name;
  int patch_width = 2;
  IndexKind index = IndexKind::kPcaTree;
  QueryBudget budget = QueryBudget::backtrack(4);
};

struct ModeRun {
  std::string name;
  double wall_millis = 0.0;
  double part2_millis = 0.0;
  std::int64_t nn_calls = 0;
  double final_energy = 0.0;
};

// Runs the same request under each mode with identical seeds.
std::vector<ModeRun> compare_modes(const SynthesisRequest& req,
                                   const std::vector<ModeSpec>& modes);

std::string modes_to_json(const std::vector<ModeRun>& runs);
std::string modes_to_csv(const std::vector<ModeRun>& runs);

}  // namespace persyn
