#include "persyn/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "json.hpp"

namespace persyn {

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(robust_exponent > 0.0 && robust_exponent < 2.0)) {
    throw DomainError("robust exponent must be in (0, 2)");
  }
  if (!(distance_epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (max_iterations < 1) throw DomainError("max iterations must be >= 1");
  if (min_iterations < 1 || min_iterations > max_iterations) {
    throw DomainError("min iterations must be in [1, max_iterations]");
  }
  if (!(convergence_fraction > 0.0 && convergence_fraction < 1.0)) {
    throw DomainError("convergence fraction must be in (0, 1)");
  }
  if (histogram_bins < 2) throw DomainError("histogram bins must be >= 2");
  grid.validate();
  if (patch.patch_width < 1) throw DomainError("patch width must be >= 1");
  if (patch.patch_width > grid.spacing) {
    throw DomainError("patch width must not exceed the grid spacing");
  }
}

// ---- histograms -------------------------------------------------------

HistogramSet::HistogramSet(int bins, std::vector<int> channel_ids,
                           std::vector<std::vector<double>> mass)
    : bins_(bins), channel_ids_(std::move(channel_ids)), mass_(std::move(mass)) {
  if (bins_ < 2) throw DomainError("histogram bins must be >= 2");
  if (mass_.size() != channel_ids_.size()) {
    throw ShapeError("one histogram required per channel");
  }
  for (const auto& h : mass_) {
    if (h.size() != static_cast<std::size_t>(bins_)) {
      throw ShapeError("histogram size does not match the bin count");
    }
  }
}

int HistogramSet::bin_of(float value) const {
  const int b = static_cast<int>(std::floor(value * bins_));
  return std::clamp(b, 0, bins_ - 1);
}

bool HistogramSet::compatible(const HistogramSet& other) const {
  return bins_ == other.bins_ && channel_ids_ == other.channel_ids_;
}

HistogramSet build_histograms(const RgbsImage& img, int bins, bool include_scale) {
  if (bins < 2) throw DomainError("histogram bins must be >= 2");
  std::vector<int> channels{0, 1, 2};
  if (include_scale) channels.push_back(3);

  std::vector<std::vector<double>> mass(channels.size(),
                                        std::vector<double>(bins, 0.0));
  const double inv = 1.0 / static_cast<double>(img.base().pixel_count());
  for (std::size_t s = 0; s < channels.size(); ++s) {
    const int c = channels[s];
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const int b = std::clamp(
            static_cast<int>(std::floor(img.value(c, x, y) * bins)), 0, bins - 1);
        mass[s][b] += inv;
      }
    }
  }
  return HistogramSet(bins, std::move(channels), std::move(mass));
}

double histogram_penalty(std::span<const float> neighborhood,
                         const HistogramSet& output_hist,
                         const HistogramSet& exemplar_hist) {
  if (!output_hist.compatible(exemplar_hist)) {
    throw ShapeError("output/exemplar histograms disagree on bins or channels");
  }
  const std::size_t pixels = neighborhood.size() / RgbsImage::kChannels;
  if (pixels == 0) return 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t s = 0; s < output_hist.channel_ids().size(); ++s) {
      const int c = output_hist.channel_ids()[s];
      const float v = neighborhood[p * RgbsImage::kChannels + c];
      const int b = output_hist.bin_of(v);
      total += std::max(0.0, output_hist.mass(s, b) - exemplar_hist.mass(s, b));
    }
  }
  return total / static_cast<double>(pixels);
}

// ---- energies ----------------------------------------------------------

double irls_weight(double distance, double robust_exponent, double epsilon) {
  if (distance < 0.0) throw DomainError("distance must be non-negative");
  return std::pow(distance * distance + epsilon, (robust_exponent - 2.0) / 2.0);
}

double full_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

double energy_from_distances(std::span<const double> distances,
                             double robust_exponent) {
  double acc = 0.0;
  for (double d : distances) acc += std::pow(d, robust_exponent);
  return acc;
}

double texture_energy(const NeighborhoodMatrix& output_vecs,
                      const NeighborhoodMatrix& input_vecs,
                      std::span<const std::int32_t> assignment,
                      double robust_exponent) {
  if (assignment.size() != output_vecs.count()) {
    throw ShapeError("assignment does not cover all output anchors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const double d = full_distance(output_vecs.vec(static_cast<std::int32_t>(i)),
                                   input_vecs.vec(assignment[i]));
    acc += std::pow(d, robust_exponent);
  }
  return acc;
}

std::vector<double> assignment_distances(const RgbsImage& img,
                                         const SparseGrid& grid,
                                         const NeighborhoodMatrix& input_vecs,
                                         std::span<const std::int32_t> assignment) {
  const int w = grid.spec.nbhd_width;
  const std::size_t dim = static_cast<std::size_t>(w) * w * RgbsImage::kChannels;
  std::vector<float> scratch(dim);
  std::vector<double> out(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    extract_window(img, grid.anchor(static_cast<std::int32_t>(i)), w, scratch);
    out[i] = full_distance(scratch, input_vecs.vec(assignment[i]));
  }
  return out;
}

// ---- search indexes ----------------------------------------------------

namespace {

class BruteForceIndex final : public SearchIndex {
 public:
  explicit BruteForceIndex(NeighborhoodMatrix candidates)
      : candidates_(std::move(candidates)) {
    if (candidates_.count() == 0) throw DomainError("empty candidate set");
  }

  QueryResult nearest(std::span<const float> query,
                      const QueryBudget&) const override {
    if (query.size() != candidates_.dim) {
      throw ShapeError("query dim does not match the candidates");
    }
    QueryResult r;
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = candidates_.count();
    for (std::size_t i = 0; i < n; ++i) {
      const float* z = candidates_.data.data() + i * candidates_.dim;
      double acc = 0.0;
      std::size_t j = 0;
      // Early abandoning in blocks; strict comparisons keep the
      // lowest-index tie rule intact.
      for (; j < candidates_.dim; ) {
        const std::size_t stop = std::min(candidates_.dim, j + 32);
        for (; j < stop; ++j) {
          const double d = static_cast<double>(query[j]) - static_cast<double>(z[j]);
          acc += d * d;
        }
        if (acc >= best) break;
      }
      ++r.stats.points_scanned;
      if (acc < best && j == candidates_.dim) {
        best = acc;
        r.index = static_cast<std::int32_t>(i);
      }
    }
    r.distance = std::sqrt(best);
    return r;
  }

  const NeighborhoodMatrix& candidates() const override { return candidates_; }
  std::string describe() const override { return "brute-force"; }

 private:
  NeighborhoodMatrix candidates_;
};

class PcaTreeIndex final : public SearchIndex {
 public:
  PcaTreeIndex(NeighborhoodMatrix candidates, double variance_target,
               int branching, std::uint64_t seed)
      : candidates_(std::move(candidates)),
        pca_(fit_pca(candidates_, variance_target)) {
    ProjectedMatrix projected = project_all(pca_, candidates_);
    tree_ = std::make_unique<KmTree>(
        KmTree::build(std::move(projected.data), projected.dim, projected.count,
                      branching, static_cast<std::size_t>(branching), seed));
  }

  QueryResult nearest(std::span<const float> query,
                      const QueryBudget& budget) const override {
    thread_local std::vector<double> proj;
    proj.resize(pca_.retained_dim());
    pca_.project(query, proj);
    QueryResult r = tree_->query(proj, budget);
    // The tree ranks in PCA space; the energy bookkeeping wants the
    // true full-dimension distance of the chosen candidate.
    r.distance = full_distance(query, candidates_.vec(r.index));
    return r;
  }

  const NeighborhoodMatrix& candidates() const override { return candidates_; }
  const PcaModel* pca_model() const override { return &pca_; }
  std::string describe() const override {
    return "pca+km-tree(d=" + std::to_string(pca_.retained_dim()) + ")";
  }

 private:
  NeighborhoodMatrix candidates_;
  PcaModel pca_;
  std::unique_ptr<KmTree> tree_;
};

}  // namespace

std::unique_ptr<SearchIndex> make_brute_force_index(NeighborhoodMatrix candidates) {
  return std::make_unique<BruteForceIndex>(std::move(candidates));
}

std::unique_ptr<SearchIndex> make_pca_tree_index(NeighborhoodMatrix candidates,
                                                 double variance_target,
                                                 int branching,
                                                 std::uint64_t seed) {
  return std::make_unique<PcaTreeIndex>(std::move(candidates), variance_target,
                                        branching, seed);
}

// ---- search / update ----------------------------------------------------

int worker_count() {
  if (const char* env = std::getenv("PERSYN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(n, 256);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

SearchOutcome search_step(const RgbsImage& out, const SearchIndex& index,
                          const SparseGrid& grid, const PatchSpec& patch,
                          const QueryBudget& budget, int workers) {
  if (grid.spec.image_width != out.width() ||
      grid.spec.image_height != out.height()) {
    throw ShapeError("grid does not match the output image");
  }
  const int w = grid.spec.nbhd_width;
  const std::size_t dim = static_cast<std::size_t>(w) * w * RgbsImage::kChannels;
  if (dim != index.candidates().dim) {
    throw ShapeError("candidate dim does not match the grid window");
  }

  // Every tile queries each anchor whose window fully contains it; the
  // flattened plan *is* the per-iteration call count.
  const auto tiles = patch_tiles(out.width(), out.height(), patch);
  std::vector<std::int32_t> plan;
  plan.reserve(tiles.size() * 16);
  for (const PixelCoord& tile : tiles) {
    const auto ids = containing_anchors(grid, tile, patch.patch_width);
    plan.insert(plan.end(), ids.begin(), ids.end());
  }

  struct Slot {
    std::int32_t input = -1;
    double distance = 0.0;
    std::int64_t scanned = 0;
  };
  std::vector<Slot> slots(plan.size());

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    std::vector<float> scratch(dim);
    for (std::size_t i = lo; i < hi; ++i) {
      extract_window(out, grid.anchor(plan[i]), w, scratch);
      const QueryResult r = index.nearest(scratch, budget);
      slots[i] = {r.index, r.distance, r.stats.points_scanned};
    }
  };

  int n_workers = workers > 0 ? workers : worker_count();
  n_workers = static_cast<int>(
      std::min<std::size_t>(n_workers, std::max<std::size_t>(plan.size(), 1)));
  if (n_workers <= 1 || plan.size() < 128) {
    run_range(0, plan.size());
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    const std::size_t chunk = (plan.size() + n_workers - 1) / n_workers;
    for (int t = 0; t < n_workers; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(plan.size(), lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  SearchOutcome outcome;
  outcome.nn_calls = static_cast<std::int64_t>(plan.size());
  const std::size_t anchors = static_cast<std::size_t>(grid.count());
  outcome.assignments.input_index.assign(anchors, -1);
  outcome.assignments.distance.assign(anchors, 0.0);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    outcome.assignments.input_index[plan[i]] = slots[i].input;
    outcome.assignments.distance[plan[i]] = slots[i].distance;
    outcome.points_scanned += slots[i].scanned;
  }
  for (std::int32_t idx : outcome.assignments.input_index) {
    if (idx < 0) {
      throw std::logic_error("anchor not covered by any patch tile");
    }
  }
  return outcome;
}

RgbsImage update_step(const AssignmentMap& assignments, const WeightMap& weights,
                      const SparseGrid& grid, const NeighborhoodMatrix& input_vecs,
                      const RgbsImage& out) {
  const std::size_t anchors = static_cast<std::size_t>(grid.count());
  if (assignments.size() != anchors || weights.size() != anchors) {
    throw ShapeError("assignments/weights do not cover the grid");
  }
  const int w = grid.spec.nbhd_width;
  const int width = out.width();
  const int height = out.height();
  const std::size_t pixels = static_cast<std::size_t>(width) * height;

  std::vector<double> acc(pixels * RgbsImage::kChannels, 0.0);
  std::vector<double> wsum(pixels, 0.0);

  for (std::size_t a = 0; a < anchors; ++a) {
    const double we = weights.effective(a);
    if (!(we > 0.0) || !std::isfinite(we)) {
      throw DomainError("non-positive or non-finite update weight");
    }
    const PixelCoord anchor = grid.anchor(static_cast<std::int32_t>(a));
    const float* z = input_vecs.vec(assignments.input_index[a]).data();
    for (int dy = 0; dy < w; ++dy) {
      std::size_t pix = static_cast<std::size_t>(anchor.y + dy) * width + anchor.x;
      const float* zrow = z + static_cast<std::size_t>(dy) * w * RgbsImage::kChannels;
      for (int dx = 0; dx < w; ++dx, ++pix) {
        double* a4 = acc.data() + pix * RgbsImage::kChannels;
        const float* z4 = zrow + static_cast<std::size_t>(dx) * RgbsImage::kChannels;
        a4[0] += we * z4[0];
        a4[1] += we * z4[1];
        a4[2] += we * z4[2];
        a4[3] += we * z4[3];
        wsum[pix] += we;
      }
    }
  }

  RasterImage base(width, height);
  std::vector<double> scale(pixels);
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    if (wsum[pix] <= 0.0) {
      throw std::logic_error("output pixel not covered by any window");
    }
    const double inv = 1.0 / wsum[pix];
    const double* a4 = acc.data() + pix * RgbsImage::kChannels;
    base.plane(0)[pix] = std::clamp(a4[0] * inv, 0.0, 1.0);
    base.plane(1)[pix] = std::clamp(a4[1] * inv, 0.0, 1.0);
    base.plane(2)[pix] = std::clamp(a4[2] * inv, 0.0, 1.0);
    scale[pix] = std::clamp(a4[3] * inv, 0.0, 1.0);
  }
  return RgbsImage(std::move(base), std::move(scale));
}

// ---- iteration loop ------------------------------------------------------

std::int64_t EnergyTrace::total_nn_calls() const {
  std::int64_t total = 0;
  for (const auto& it : iterations) total += it.nn_calls;
  return total;
}

std::string EnergyTrace::to_jsonl() const {
  std::string out;
  for (const auto& it : iterations) {
    nlohmann::ordered_json j;
    j["iter"] = it.iteration;
    j["energy"] = it.energy;
    j["changed"] = it.changed;
    j["nn_calls"] = it.nn_calls;
    j["millis"] = it.millis;
    out += j.dump();
    out += '\n';
  }
  return out;
}

LevelResult optimize_level(const RgbsImage& init, const SearchIndex& index,
                           const OptimizerConfig& cfg,
                           const HistogramSet* exemplar_hist) {
  cfg.validate();
  if (cfg.grid.image_width != init.width() ||
      cfg.grid.image_height != init.height()) {
    throw ShapeError("optimizer grid does not match the initial image");
  }
  const SparseGrid grid = make_sparse_grid(cfg.grid);
  const std::int64_t anchors = grid.count();
  const NeighborhoodMatrix& input_vecs = index.candidates();
  const bool hist_on = cfg.histogram_matching && exemplar_hist != nullptr;

  LevelResult result{init, {}};
  RgbsImage& x = result.image;

  // Priming pass so "changed" is meaningful from the first iteration; a
  // fixed-point init reports 0 changed and returns immediately.
  auto t0 = Clock::now();
  SearchOutcome current = search_step(x, index, grid, cfg.patch, cfg.budget);
  std::int64_t pending_calls = current.nn_calls;
  std::int64_t pending_scanned = current.points_scanned;
  double pending_millis = millis_since(t0);

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    const auto t_iter = Clock::now();

    WeightMap weights;
    weights.irls.resize(anchors);
    weights.hist_penalty.assign(anchors, 0.0);
    for (std::int64_t i = 0; i < anchors; ++i) {
      weights.irls[i] = irls_weight(current.assignments.distance[i],
                                    cfg.robust_exponent, cfg.distance_epsilon);
    }
    if (hist_on) {
      const HistogramSet out_hist =
          build_histograms(x, cfg.histogram_bins, cfg.histogram_include_scale);
      for (std::int64_t i = 0; i < anchors; ++i) {
        weights.hist_penalty[i] = histogram_penalty(
            input_vecs.vec(current.assignments.input_index[i]), out_hist,
            *exemplar_hist);
      }
    }

    double lsq_before = 0.0;
    for (std::int64_t i = 0; i < anchors; ++i) {
      const double d = current.assignments.distance[i];
      lsq_before += weights.effective(i) * d * d;
    }

    x = update_step(current.assignments, weights, grid, input_vecs, x);

    const std::vector<double> after = assignment_distances(
        x, grid, input_vecs, current.assignments.input_index);
    double lsq_after = 0.0;
    for (std::int64_t i = 0; i < anchors; ++i) {
      lsq_after += weights.effective(i) * after[i] * after[i];
    }

    SearchOutcome next = search_step(x, index, grid, cfg.patch, cfg.budget);
    std::int64_t changed = 0;
    for (std::int64_t i = 0; i < anchors; ++i) {
      if (next.assignments.input_index[i] != current.assignments.input_index[i]) {
        ++changed;
      }
    }

    IterationStats stats;
    stats.iteration = iter;
    stats.energy =
        energy_from_distances(next.assignments.distance, cfg.robust_exponent);
    stats.changed = changed;
    stats.nn_calls = next.nn_calls + pending_calls;
    stats.millis = millis_since(t_iter) + pending_millis;
    stats.lsq_energy_before = lsq_before;
    stats.lsq_energy_after = lsq_after;
    stats.points_scanned = next.points_scanned + pending_scanned;
    result.trace.iterations.push_back(stats);
    pending_calls = 0;
    pending_scanned = 0;
    pending_millis = 0.0;

    current = std::move(next);
    if (iter >= cfg.min_iterations &&
        static_cast<double>(changed) <
            cfg.convergence_fraction * static_cast<double>(anchors)) {
      break;
    }
  }
  return result;
}

}  // namespace persyn
