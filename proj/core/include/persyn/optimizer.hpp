#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "persyn/image.hpp"
#include "persyn/km_tree.hpp"
#include "persyn/neighborhood.hpp"
#include "persyn/pca.hpp"

namespace persyn {

// One assigned input neighborhood per output anchor plus its
// full-dimension distance to the anchor's current content.
struct AssignmentMap {
  std::vector<std::int32_t> input_index;
  std::vector<double> distance;

  std::size_t size() const { return input_index.size(); }
};

// Per-anchor robust weight and histogram penalty. The update step uses
// effective(i) = irls / (1 + penalty).
struct WeightMap {
  std::vector<double> irls;
  std::vector<double> hist_penalty;

  std::size_t size() const { return irls.size(); }
  double effective(std::size_t i) const {
    return irls[i] / (1.0 + hist_penalty[i]);
  }
};

struct OptimizerConfig {
  double robust_exponent = 0.8;    // in (0, 2)
  double distance_epsilon = 1e-4;  // regularizes the weight at distance 0
  int max_iterations = 20;
  int min_iterations = 1;
  double convergence_fraction = 0.01;
  int histogram_bins = 16;
  bool histogram_matching = true;
  bool histogram_include_scale = false;
  GridSpec grid;
  PatchSpec patch;
  QueryBudget budget = QueryBudget::backtrack(4);
  std::uint64_t seed = 0;

  void validate() const;
};

// Normalized per-channel color histograms over [0,1].
class HistogramSet {
 public:
  HistogramSet() = default;
  HistogramSet(int bins, std::vector<int> channel_ids,
               std::vector<std::vector<double>> mass);

  int bins() const { return bins_; }
  const std::vector<int>& channel_ids() const { return channel_ids_; }
  double mass(std::size_t slot, int bin) const { return mass_[slot][bin]; }

  int bin_of(float value) const;
  bool compatible(const HistogramSet& other) const;

 private:
  int bins_ = 0;
  std::vector<int> channel_ids_;           // indices into the RGBS layout
  std::vector<std::vector<double>> mass_;  // one histogram per channel
};

HistogramSet build_histograms(const RgbsImage& img, int bins,
                              bool include_scale = false);

// Mean over the neighborhood's pixels of the summed per-channel
// over-representation of the output histogram relative to the exemplar:
// sum_j max(0, H_out[b] - H_ex[b]). Non-negative; zero when the output
// matches or under-represents every color the neighborhood uses.
double histogram_penalty(std::span<const float> neighborhood,
                         const HistogramSet& output_hist,
                         const HistogramSet& exemplar_hist);

// (distance^2 + epsilon)^((r-2)/2): the regularized robust weight.
double irls_weight(double distance, double robust_exponent, double epsilon);

// Full-dimension Euclidean distance between two neighborhood vectors.
double full_distance(std::span<const float> a, std::span<const float> b);

// Robust texture energy sum d_p^r from precomputed distances.
double energy_from_distances(std::span<const double> distances,
                             double robust_exponent);

// Same, recomputing distances between the output vectors and their
// assigned input vectors.
double texture_energy(const NeighborhoodMatrix& output_vecs,
                      const NeighborhoodMatrix& input_vecs,
                      std::span<const std::int32_t> assignment,
                      double robust_exponent);

// Full-dim distances of a fixed assignment evaluated on an image.
std::vector<double> assignment_distances(const RgbsImage& img,
                                         const SparseGrid& grid,
                                         const NeighborhoodMatrix& input_vecs,
                                         std::span<const std::int32_t> assignment);

// Nearest-input search backend. Queries take the full-dimension vector;
// the reported distance is always recomputed in full dimension, however
// the search itself ran.
class SearchIndex {
 public:
  virtual ~SearchIndex() = default;
  virtual QueryResult nearest(std::span<const float> query,
                              const QueryBudget& budget) const = 0;
  virtual const NeighborhoodMatrix& candidates() const = 0;
  virtual const PcaModel* pca_model() const { return nullptr; }
  virtual std::string describe() const = 0;
};

// Exhaustive full-dimension scan with early abandoning.
std::unique_ptr<SearchIndex> make_brute_force_index(NeighborhoodMatrix candidates);

// PCA reduction to the variance target plus a k-means tree over the
// projected points.
std::unique_ptr<SearchIndex> make_pca_tree_index(NeighborhoodMatrix candidates,
                                                 double variance_target = 0.95,
                                                 int branching = 4,
                                                 std::uint64_t seed = 0);

struct SearchOutcome {
  AssignmentMap assignments;
  std::int64_t nn_calls = 0;
  std::int64_t points_scanned = 0;
};

// One search pass over the output: every patch tile queries each anchor
// whose window fully contains it, so per-iteration call counts shrink
// as the patch grows. Queries fan out over worker threads; results are
// identical for any worker count. workers <= 0 picks the default.
SearchOutcome search_step(const RgbsImage& out, const SearchIndex& index,
                          const SparseGrid& grid, const PatchSpec& patch,
                          const QueryBudget& budget, int workers = 0);

// Exact minimizer of the weighted least-squares energy for fixed
// assignments: every pixel becomes the effective-weight average of the
// assigned input samples from all windows covering it. Accumulation
// runs in ascending anchor order for bit determinism.
RgbsImage update_step(const AssignmentMap& assignments, const WeightMap& weights,
                      const SparseGrid& grid, const NeighborhoodMatrix& input_vecs,
                      const RgbsImage& out);

struct IterationStats {
  int iteration = 0;
  double energy = 0.0;  // robust texture energy after the update
  std::int64_t changed = 0;
  std::int64_t nn_calls = 0;
  double millis = 0.0;
  // diagnostics, not serialized
  double lsq_energy_before = 0.0;  // weighted LS energy around the update
  double lsq_energy_after = 0.0;
  std::int64_t points_scanned = 0;
};

struct EnergyTrace {
  std::vector<IterationStats> iterations;

  std::int64_t total_nn_calls() const;
  // One {"iter","energy","changed","nn_calls","millis"} object per line.
  std::string to_jsonl() const;
};

struct LevelResult {
  RgbsImage image;
  EnergyTrace trace;
};

// Alternates search and update with IRLS reweighting in between
// (histogram reweighting too when an exemplar histogram is supplied and
// enabled) until assignments settle or the iteration cap is hit.
LevelResult optimize_level(const RgbsImage& init, const SearchIndex& index,
                           const OptimizerConfig& cfg,
                           const HistogramSet* exemplar_hist = nullptr);

// Worker count for search fan-out: PERSYN_THREADS when set, else the
// hardware concurrency.
int worker_count();

}  // namespace persyn
