#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nebula/dagfeat.hpp"
#include "nebula/graph.hpp"
#include "nebula/rng.hpp"

namespace nebula {

inline constexpr std::size_t kLayers = 3;

// A dense row-major parameter block.
struct Param {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  friend bool operator==(const Param&, const Param&) = default;
};

// Parameter groups in file order.
namespace pg {
enum : std::size_t {
  node_emb = 0,
  edge_emb,
  self0, nbr0, bias0,
  self1, nbr1, bias1,
  self2, nbr2, bias2,
  head_w1, head_b1, head_w2, head_b2,
  count,
};
inline constexpr std::size_t self(std::size_t layer) { return self0 + 3 * layer; }
inline constexpr std::size_t nbr(std::size_t layer) { return nbr0 + 3 * layer; }
inline constexpr std::size_t bias(std::size_t layer) { return bias0 + 3 * layer; }
}  // namespace pg

std::string_view param_group_name(std::size_t group);

struct ModelWeights {
  std::uint32_t d = 32;
  std::uint32_t h = 64;
  std::uint32_t f = kFeatureDim;  // feature-row width appended to the head input (0 disables)
  std::array<Param, pg::count> p;

  std::size_t head_input() const noexcept { return 3 * static_cast<std::size_t>(d) + f; }

  // Every matrix uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero.
  static ModelWeights init(std::uint32_t d, std::uint32_t h, std::uint64_t seed, std::uint32_t f = kFeatureDim);
  static ModelWeights zeros_like(const ModelWeights& w);

  // Throws ShapeMismatch when any block disagrees with (d, h, f).
  void check_shapes() const;
  bool all_finite() const;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

// Edge scores in (0,1) for the requested edges. `features` is either empty
// (only valid when w.f == 0) or one row per scored edge. Throws ShapeMismatch.
std::vector<double> forward(const WindowGraph& g, const ModelWeights& w, std::span<const std::size_t> scored_edges,
                            std::span<const FeatureRow> features = {});

struct GradOptions {
  bool zero_neighbor_grad = false;  // mutation hook for the gradient checker
};

struct LossGrad {
  double loss_sum = 0.0;  // summed logistic loss (no regularizer)
  std::size_t count = 0;
  ModelWeights grad;      // gradient of loss_sum
};

// Summed logistic loss over the labeled edges of one window and its gradient.
LossGrad loss_and_grad(const WindowGraph& g, const ModelWeights& w, std::span<const std::size_t> edges,
                       std::span<const FeatureRow> features, std::span<const double> labels,
                       const GradOptions& opt = {});

struct TrainSample {
  const WindowGraph* graph = nullptr;
  std::vector<std::size_t> edges;
  std::vector<FeatureRow> features;
  std::vector<double> labels;  // 0 or 1, one per edge
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::int64_t epochs = 20;
  std::int64_t batch = 8;
  double l2 = 1e-4;
  std::uint64_t seed = 7;
  std::uint32_t workers = 1;  // results do not depend on this

  void validate() const;  // InvalidArgument
};

// mean logistic loss + (l2 / 2) * ||w||^2 over all samples.
double objective(std::span<const TrainSample> samples, const ModelWeights& w, double l2);

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
};

// Mini-batch SGD over windows from `init`. Throws DegenerateLabels and
// NonFiniteLoss.
ModelWeights train_head(std::span<const TrainSample> samples, const ModelWeights& init, const TrainConfig& cfg,
                        TrainReport* report = nullptr);

// Max over parameter groups of ||analytic - numeric|| / (||analytic|| + ||numeric||),
// numeric by central differences with step 1e-5. Zero when no edge is labeled.
double grad_check(const ModelWeights& w, const WindowGraph& g, std::span<const std::size_t> edges,
                  std::span<const FeatureRow> features, std::span<const double> labels,
                  const GradOptions& opt = {});

void save_weights(const ModelWeights& w, const std::filesystem::path& path);
// Throws CorruptContainer, VersionMismatch, and ShapeMismatch when
// expected_d is given and differs from the file.
ModelWeights load_weights(const std::filesystem::path& path, std::optional<std::uint32_t> expected_d = std::nullopt);

// Lite profile scorer: logistic regression over the feature row.
struct LiteModel {
  std::array<double, kFeatureDim> w{};
  double b = 0.0;

  double score(const FeatureRow& x) const;
  friend bool operator==(const LiteModel&, const LiteModel&) = default;
};

LiteModel train_lite(std::span<const TrainSample> samples, const TrainConfig& cfg);
void save_lite(const LiteModel& m, const std::filesystem::path& path);
LiteModel load_lite(const std::filesystem::path& path);

}  // namespace nebula
