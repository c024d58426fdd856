#include "persyn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "json.hpp"

namespace persyn {

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Normalized S plane for an analytic scale map, the same mapping
// attach_scale_channel uses.
std::vector<double> normalized_plane(const ScaleMap& map) {
  const ScaleBounds& b = map.bounds();
  std::vector<double> s(map.values().size());
  if (b.s_max > b.s_min) {
    const double inv = 1.0 / (b.s_max - b.s_min);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::clamp((map.values()[i] - b.s_min) * inv, 0.0, 1.0);
    }
  } else {
    std::fill(s.begin(), s.end(), 0.5);
  }
  return s;
}

// Crop or edge-replicate to the exact target size; the x2 upsampling
// between levels can land one pixel short of an odd target dimension.
RasterImage fit_to(const RasterImage& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  RasterImage out(width, height);
  for (int c = 0; c < RasterImage::kChannels; ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = std::min(y, img.height() - 1);
      for (int x = 0; x < width; ++x) {
        const int sx = std::min(x, img.width() - 1);
        out.at(c, x, y) = img.at(c, sx, sy);
      }
    }
  }
  return out;
}

std::uint64_t level_seed(std::uint64_t seed, int level) {
  return seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(level + 1));
}

nlohmann::ordered_json config_json(const SynthesisRequest& req) {
  nlohmann::ordered_json j;
  j["sigma"] = req.view.slant_deg;
  j["tau"] = req.view.tilt_deg;
  j["out_width"] = req.out_width;
  j["out_height"] = req.out_height;
  j["levels"] = req.levels;
  j["nbhd_width"] = req.cfg.grid.nbhd_width;
  j["spacing"] = req.cfg.grid.spacing;
  j["patch_width"] = req.cfg.patch.patch_width;
  j["robust_exponent"] = req.cfg.robust_exponent;
  j["epsilon"] = req.cfg.distance_epsilon;
  j["max_iterations"] = req.cfg.max_iterations;
  j["min_iterations"] = req.cfg.min_iterations;
  j["convergence_fraction"] = req.cfg.convergence_fraction;
  j["histogram_matching"] = req.cfg.histogram_matching;
  j["histogram_bins"] = req.cfg.histogram_bins;
  j["histogram_include_scale"] = req.cfg.histogram_include_scale;
  j["index"] = to_string(req.index_kind);
  j["pca_variance"] = req.pca_variance;
  j["tree_branching"] = req.tree_branching;
  switch (req.cfg.budget.mode) {
    case QueryBudget::Mode::kGreedy: j["budget"] = "greedy"; break;
    case QueryBudget::Mode::kExact: j["budget"] = "exact"; break;
    case QueryBudget::Mode::kBacktrack:
      j["budget"] = "backtrack:" + std::to_string(req.cfg.budget.max_leaves);
      break;
  }
  j["seed"] = req.seed;
  return j;
}

}  // namespace

std::string to_string(IndexKind kind) {
  return kind == IndexKind::kBruteForce ? "brute-force" : "pca-tree";
}

RgbsImage initialize_output(const RgbsImage& exemplar_rgbs,
                            const ScaleMap& out_map, std::mt19937_64& rng) {
  const ScaleBounds& b = out_map.bounds();
  const int ew = exemplar_rgbs.width();
  const int eh = exemplar_rgbs.height();

  // Recover unnormalized exemplar scales from the attached S channel.
  const std::size_t ecount = static_cast<std::size_t>(ew) * eh;
  std::vector<std::pair<double, std::int32_t>> by_scale(ecount);
  for (std::size_t i = 0; i < ecount; ++i) {
    const double raw =
        b.s_max > b.s_min
            ? b.s_min + exemplar_rgbs.scale_plane()[i] * (b.s_max - b.s_min)
            : b.s_min;
    by_scale[i] = {raw, static_cast<std::int32_t>(i)};
  }
  std::sort(by_scale.begin(), by_scale.end());

  constexpr double kTolerance = 1e-3;
  const int ow = out_map.width();
  const int oh = out_map.height();
  RasterImage base(ow, oh);
  std::vector<float> s_plane = normalized_plane(out_map);

  auto first_index_of_value = [&](std::size_t pos) {
    // Entries are sorted by (scale, index); the run of an equal scale
    // starts at its lowest row-major index.
    const double v = by_scale[pos].first;
    auto it = std::lower_bound(
        by_scale.begin(), by_scale.end(), std::pair{v, std::int32_t{-1}});
    return it->second;
  };

  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double target = out_map.at(x, y);
      const auto lo = std::lower_bound(
          by_scale.begin(), by_scale.end(),
          std::pair{target - kTolerance, std::int32_t{-1}});
      const auto hi = std::upper_bound(
          lo, by_scale.end(),
          std::pair{target + kTolerance,
                    std::numeric_limits<std::int32_t>::max()});

      std::int32_t src;
      if (lo != hi) {
        const std::size_t n = static_cast<std::size_t>(hi - lo);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        src = (lo + pick(rng))->second;
      } else {
        // Nearest scale; on an exact distance tie take the candidate
        // run holding the lowest row-major index.
        const std::size_t right = static_cast<std::size_t>(lo - by_scale.begin());
        if (right == 0) {
          src = first_index_of_value(0);
        } else if (right == by_scale.size()) {
          src = first_index_of_value(by_scale.size() - 1);
        } else {
          const double dl = std::abs(by_scale[right - 1].first - target);
          const double dr = std::abs(by_scale[right].first - target);
          if (dl < dr) {
            src = first_index_of_value(right - 1);
          } else if (dr < dl) {
            src = first_index_of_value(right);
          } else {
            src = std::min(first_index_of_value(right - 1),
                           first_index_of_value(right));
          }
        }
      }

      const int sx = src % ew;
      const int sy = src / ew;
      base.at(0, x, y) = exemplar_rgbs.base().at(0, sx, sy);
      base.at(1, x, y) = exemplar_rgbs.base().at(1, sx, sy);
      base.at(2, x, y) = exemplar_rgbs.base().at(2, sx, sy);
    }
  }
  return RgbsImage(std::move(base), std::move(s_plane));
}

double SynthesisReport::final_energy() const {
  if (levels.empty() || levels.back().trace.iterations.empty()) return 0.0;
  return levels.back().trace.iterations.back().energy;
}

std::string SynthesisReport::to_json() const {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(config_echo);
  j["part1_millis"] = part1_millis;
  j["part2_millis"] = part2_millis;
  j["total_nn_calls"] = total_nn_calls;
  j["final_energy"] = final_energy();
  j["levels"] = nlohmann::ordered_json::array();
  for (const auto& level : levels) {
    nlohmann::ordered_json lj;
    lj["width"] = level.width;
    lj["height"] = level.height;
    lj["index"] = level.index;
    lj["iterations"] = nlohmann::ordered_json::array();
    for (const auto& it : level.trace.iterations) {
      nlohmann::ordered_json ij;
      ij["iter"] = it.iteration;
      ij["energy"] = it.energy;
      ij["changed"] = it.changed;
      ij["nn_calls"] = it.nn_calls;
      ij["millis"] = it.millis;
      lj["iterations"].push_back(std::move(ij));
    }
    j["levels"].push_back(std::move(lj));
  }
  return j.dump(2);
}

std::string SynthesisReport::traces_jsonl() const {
  std::string out;
  for (const auto& level : levels) out += level.trace.to_jsonl();
  return out;
}

SynthesisResult synthesize(const SynthesisRequest& req) {
  req.view.validate();
  if (req.levels < 1) throw DomainError("levels must be >= 1");
  if (req.out_width < 1 || req.out_height < 1) {
    throw DomainError("empty output size");
  }
  if (!(req.pca_variance > 0.0 && req.pca_variance <= 1.0)) {
    throw DomainError("pca variance target must be in (0, 1]");
  }
  const int w = req.cfg.grid.nbhd_width;

  // Reject degenerate geometry before any heavy work.
  struct LevelDims {
    int out_w, out_h, factor;
  };
  std::vector<LevelDims> dims(req.levels);
  for (int l = 0; l < req.levels; ++l) {
    const int shift = req.levels - 1 - l;
    dims[l] = {req.out_width >> shift, req.out_height >> shift, 1 << shift};
    if (dims[l].out_w < w || dims[l].out_h < w) {
      throw DomainError("output level " + std::to_string(l) +
                        " smaller than the neighborhood window");
    }
    if (req.exemplar.width() / dims[l].factor < w ||
        req.exemplar.height() / dims[l].factor < w) {
      throw DomainError("exemplar level " + std::to_string(l) +
                        " smaller than the neighborhood window");
    }
  }

  SynthesisResult result;
  result.report.config_echo = config_json(req).dump();

  const auto t0 = Clock::now();

  std::vector<RgbsImage> exemplar_levels;
  std::vector<ScaleMap> out_maps;
  exemplar_levels.reserve(req.levels);
  out_maps.reserve(req.levels);
  for (int l = 0; l < req.levels; ++l) {
    const RasterImage ex = dims[l].factor == 1
                               ? req.exemplar
                               : downsample(req.exemplar, dims[l].factor);
    const ScaleMap ex_map = compute_scale_map(ex.width(), ex.height(), req.view);
    exemplar_levels.push_back(attach_scale_channel(ex, ex_map));
    out_maps.push_back(compute_scale_map(dims[l].out_w, dims[l].out_h, req.view));
  }

  std::mt19937_64 rng(req.seed);
  RgbsImage x = initialize_output(exemplar_levels[0], out_maps[0], rng);
  result.report.part1_millis = millis_since(t0);

  const auto t1 = Clock::now();
  for (int l = 0; l < req.levels; ++l) {
    if (l > 0) {
      RasterImage rgb = upsample_bilinear(x.base(), 2);
      rgb = fit_to(rgb, dims[l].out_w, dims[l].out_h);
      x = RgbsImage(std::move(rgb), normalized_plane(out_maps[l]));
    }

    GridSpec dense{w, 1, exemplar_levels[l].width(), exemplar_levels[l].height()};
    NeighborhoodMatrix candidates = extract_all(exemplar_levels[l], dense);
    std::unique_ptr<SearchIndex> index;
    if (req.index_kind == IndexKind::kBruteForce) {
      index = make_brute_force_index(std::move(candidates));
    } else {
      index = make_pca_tree_index(std::move(candidates), req.pca_variance,
                                  req.tree_branching, level_seed(req.seed, l));
    }

    HistogramSet exemplar_hist;
    const bool hist_on = req.cfg.histogram_matching;
    if (hist_on) {
      exemplar_hist =
          build_histograms(exemplar_levels[l], req.cfg.histogram_bins,
                           req.cfg.histogram_include_scale);
    }

    OptimizerConfig cfg = req.cfg;
    cfg.grid.image_width = dims[l].out_w;
    cfg.grid.image_height = dims[l].out_h;
    cfg.seed = req.seed;

    LevelResult level =
        optimize_level(x, *index, cfg, hist_on ? &exemplar_hist : nullptr);
    x = std::move(level.image);

    LevelReport report;
    report.width = dims[l].out_w;
    report.height = dims[l].out_h;
    report.index = index->describe();
    report.trace = std::move(level.trace);
    result.report.total_nn_calls += report.trace.total_nn_calls();
    result.report.levels.push_back(std::move(report));
  }
  result.report.part2_millis = millis_since(t1);

  result.image = x.base();
  return result;
}

std::vector<ModeRun> compare_modes(const SynthesisRequest& req,
                                   const std::vector<ModeSpec>& modes) {
  if (modes.empty()) throw DomainError("no modes to compare");
  std::vector<ModeRun> runs;
  runs.reserve(modes.size());
  for (const ModeSpec& mode : modes) {
    SynthesisRequest r = req;
    r.cfg.patch.patch_width = mode.patch_width;
    r.index_kind = mode.index;
    r.cfg.budget = mode.budget;
    const SynthesisResult result = synthesize(r);
    runs.push_back({mode.name,
                    result.report.part1_millis + result.report.part2_millis,
                    result.report.part2_millis, result.report.total_nn_calls,
                    result.report.final_energy()});
  }
  return runs;
}

std::string modes_to_json(const std::vector<ModeRun>& runs) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& run : runs) {
    j.push_back({{"mode", run.name},
                 {"wall_millis", run.wall_millis},
                 {"part2_millis", run.part2_millis},
                 {"nn_calls", run.nn_calls},
                 {"final_energy", run.final_energy}});
  }
  return j.dump(2);
}

std::string modes_to_csv(const std::vector<ModeRun>& runs) {
  std::string out = "mode,wall_millis,part2_millis,nn_calls,final_energy\n";
  for (const auto& run : runs) {
    out += run.name + "," + std::to_string(run.wall_millis) + "," +
           std::to_string(run.part2_millis) + "," +
           std::to_string(run.nn_calls) + "," +
           std::to_string(run.final_energy) + "\n";
  }
  return out;
}

}  // namespace persyn
