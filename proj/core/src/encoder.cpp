#include "nebula/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "nebula/binio.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

constexpr std::uint32_t kWeightsVersion = 1;
constexpr std::uint32_t kLiteVersion = 1;

constexpr std::array<std::string_view, pg::count> kGroupNames = {
    "node_type_embedding", "edge_type_embedding", "layer0_self", "layer0_neighbor", "layer0_bias",
    "layer1_self",         "layer1_neighbor",     "layer1_bias", "layer2_self",     "layer2_neighbor",
    "layer2_bias",         "head_w1",             "head_b1",     "head_w2",         "head_b2"};

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// -log p(y | z) for a logistic output, stable for large |z|.
double logistic_loss(double z, double y) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - y * z;
}

Param make_param(std::size_t rows, std::size_t cols) { return Param{rows, cols, std::vector<double>(rows * cols, 0.0)}; }

// out[r] += M[r, :] . x
void gemv_add(const Param& m, const double* x, double* out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.v.data() + r * m.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

// out[c] += sum_r M[r, c] * y[r]
void gemv_t_add(const Param& m, const double* y, double* out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.v.data() + r * m.cols;
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * yr;
  }
}

// G[r, c] += y[r] * x[c]
void outer_add(Param& g, const double* y, const double* x) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* row = g.v.data() + r * g.cols;
    for (std::size_t c = 0; c < g.cols; ++c) row[c] += yr * x[c];
  }
}

struct Activations {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<std::size_t> type;        // node type per local node
  std::vector<std::size_t> adj_start;   // CSR over undirected neighbor multiset
  std::vector<std::size_t> adj;
  std::array<std::vector<double>, kLayers + 1> h;
  std::array<std::vector<double>, kLayers> agg;
  std::array<std::vector<double>, kLayers> z;
  std::vector<std::size_t> src_local;  // per graph edge
  std::vector<std::size_t> dst_local;
};

std::size_t local_of(const WindowGraph& g, std::uint64_t id) {
  auto it = std::lower_bound(g.node_ids.begin(), g.node_ids.end(), id);
  if (it == g.node_ids.end() || *it != id) throw Error(Errc::shape_mismatch, "edge_index", "unknown node id");
  return static_cast<std::size_t>(it - g.node_ids.begin());
}

Activations propagate(const WindowGraph& g, const ModelWeights& w) {
  Activations a;
  a.n = g.num_nodes();
  a.d = w.d;
  const std::size_t n = a.n;
  const std::size_t d = a.d;
  a.type.resize(n);
  for (std::size_t v = 0; v < n; ++v) a.type[v] = static_cast<std::size_t>(g.node_types[v]);

  const std::size_t e = g.num_edges();
  a.src_local.resize(e);
  a.dst_local.resize(e);
  std::vector<std::size_t> deg(n, 0);
  for (std::size_t i = 0; i < e; ++i) {
    a.src_local[i] = local_of(g, g.edge_src[i]);
    a.dst_local[i] = local_of(g, g.edge_dst[i]);
    ++deg[a.src_local[i]];
    ++deg[a.dst_local[i]];
  }
  a.adj_start.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) a.adj_start[v + 1] = a.adj_start[v] + deg[v];
  a.adj.resize(a.adj_start[n]);
  std::vector<std::size_t> fill(a.adj_start.begin(), a.adj_start.end() - 1);
  for (std::size_t i = 0; i < e; ++i) {
    a.adj[fill[a.src_local[i]]++] = a.dst_local[i];
    a.adj[fill[a.dst_local[i]]++] = a.src_local[i];
  }

  a.h[0].resize(n * d);
  const Param& emb = w.p[pg::node_emb];
  for (std::size_t v = 0; v < n; ++v) {
    std::copy_n(emb.v.data() + a.type[v] * d, d, a.h[0].data() + v * d);
  }

  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto& hin = a.h[l];
    auto& agg = a.agg[l];
    auto& z = a.z[l];
    auto& hout = a.h[l + 1];
    agg.assign(n * d, 0.0);
    z.assign(n * d, 0.0);
    hout.assign(n * d, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t b = a.adj_start[v];
      const std::size_t k = a.adj_start[v + 1] - b;
      double* av = agg.data() + v * d;
      if (k > 0) {
        for (std::size_t j = b; j < b + k; ++j) {
          const double* hu = hin.data() + a.adj[j] * d;
          for (std::size_t c = 0; c < d; ++c) av[c] += hu[c];
        }
        const double inv = 1.0 / static_cast<double>(k);
        for (std::size_t c = 0; c < d; ++c) av[c] *= inv;
      }
      double* zv = z.data() + v * d;
      std::copy_n(w.p[pg::bias(l)].v.data(), d, zv);
      gemv_add(w.p[pg::self(l)], hin.data() + v * d, zv);
      gemv_add(w.p[pg::nbr(l)], av, zv);
      double* ho = hout.data() + v * d;
      for (std::size_t c = 0; c < d; ++c) ho[c] = zv[c] > 0.0 ? zv[c] : 0.0;
    }
  }
  return a;
}

void check_inputs(const WindowGraph& g, const ModelWeights& w, std::span<const std::size_t> edges,
                  std::span<const FeatureRow> features) {
  w.check_shapes();
  if (w.f != 0 && features.size() != edges.size()) {
    throw Error(Errc::shape_mismatch, "features", "one feature row per scored edge required");
  }
  for (auto i : edges) {
    if (i >= g.num_edges()) throw Error(Errc::shape_mismatch, "scored_edges", "edge index out of range");
  }
}

// Builds the head input for edge i into x.
void head_input(const Activations& a, const WindowGraph& g, const ModelWeights& w, std::size_t i,
                const FeatureRow* feature, double* x) {
  const std::size_t d = w.d;
  const auto& top = a.h[kLayers];
  std::copy_n(top.data() + a.src_local[i] * d, d, x);
  std::copy_n(top.data() + a.dst_local[i] * d, d, x + d);
  std::copy_n(w.p[pg::edge_emb].v.data() + static_cast<std::size_t>(g.edge_types[i]) * d, d, x + 2 * d);
  if (w.f > 0) std::copy_n(feature->data(), w.f, x + 3 * d);
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void add_scaled(ModelWeights& into, const ModelWeights& from, double scale) {
  for (std::size_t k = 0; k < pg::count; ++k) {
    auto& a = into.p[k].v;
    const auto& b = from.p[k].v;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  }
}

double l2_norm_sq(const ModelWeights& w) {
  double s = 0.0;
  for (const auto& p : w.p) {
    for (double x : p.v) s += x * x;
  }
  return s;
}

}  // namespace

std::string_view param_group_name(std::size_t group) { return kGroupNames.at(group); }

ModelWeights ModelWeights::init(std::uint32_t d, std::uint32_t h, std::uint64_t seed, std::uint32_t f) {
  if (d == 0 || h == 0) throw Error(Errc::invalid_argument, "dims", "d and h must be >= 1");
  if (f != 0 && f != kFeatureDim) throw Error(Errc::invalid_argument, "f", "feature width must be 0 or the row width");
  ModelWeights w;
  w.d = d;
  w.h = h;
  w.f = f;
  w.p[pg::node_emb] = make_param(kNodeTypeCount, d);
  w.p[pg::edge_emb] = make_param(kEdgeTypeCount, d);
  for (std::size_t l = 0; l < kLayers; ++l) {
    w.p[pg::self(l)] = make_param(d, d);
    w.p[pg::nbr(l)] = make_param(d, d);
    w.p[pg::bias(l)] = make_param(1, d);
  }
  w.p[pg::head_w1] = make_param(h, w.head_input());
  w.p[pg::head_b1] = make_param(1, h);
  w.p[pg::head_w2] = make_param(1, h);
  w.p[pg::head_b2] = make_param(1, 1);

  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t k = 0; k < pg::count; ++k) {
    const bool is_bias = k == pg::bias(0) || k == pg::bias(1) || k == pg::bias(2) || k == pg::head_b1 ||
                         k == pg::head_b2;
    if (is_bias) continue;
    for (auto& x : w.p[k].v) x = rng.uniform(-bound, bound);
  }
  return w;
}

ModelWeights ModelWeights::zeros_like(const ModelWeights& w) {
  ModelWeights z = w;
  for (auto& p : z.p) std::fill(p.v.begin(), p.v.end(), 0.0);
  return z;
}

void ModelWeights::check_shapes() const {
  auto expect = [&](std::size_t k, std::size_t rows, std::size_t cols) {
    const auto& q = p[k];
    if (q.rows != rows || q.cols != cols || q.v.size() != rows * cols) {
      throw Error(Errc::shape_mismatch, std::string(kGroupNames[k]),
                  "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                      std::to_string(q.rows) + "x" + std::to_string(q.cols));
    }
  };
  if (f != 0 && f != kFeatureDim) throw Error(Errc::shape_mismatch, "f", "unsupported feature width");
  expect(pg::node_emb, kNodeTypeCount, d);
  expect(pg::edge_emb, kEdgeTypeCount, d);
  for (std::size_t l = 0; l < kLayers; ++l) {
    expect(pg::self(l), d, d);
    expect(pg::nbr(l), d, d);
    expect(pg::bias(l), 1, d);
  }
  expect(pg::head_w1, h, head_input());
  expect(pg::head_b1, 1, h);
  expect(pg::head_w2, 1, h);
  expect(pg::head_b2, 1, 1);
}

bool ModelWeights::all_finite() const {
  for (const auto& q : p) {
    for (double x : q.v) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::vector<double> forward(const WindowGraph& g, const ModelWeights& w, std::span<const std::size_t> scored_edges,
                            std::span<const FeatureRow> features) {
  check_inputs(g, w, scored_edges, features);
  std::vector<double> out;
  if (scored_edges.empty()) return out;
  out.reserve(scored_edges.size());

  const Activations a = propagate(g, w);
  std::vector<double> x(w.head_input());
  std::vector<double> z1(w.h);
  for (std::size_t k = 0; k < scored_edges.size(); ++k) {
    head_input(a, g, w, scored_edges[k], w.f ? &features[k] : nullptr, x.data());
    std::copy(w.p[pg::head_b1].v.begin(), w.p[pg::head_b1].v.end(), z1.begin());
    gemv_add(w.p[pg::head_w1], x.data(), z1.data());
    double z2 = w.p[pg::head_b2].v[0];
    for (std::size_t j = 0; j < w.h; ++j) z2 += w.p[pg::head_w2].v[j] * (z1[j] > 0.0 ? z1[j] : 0.0);
    out.push_back(sigmoid(z2));
  }
  return out;
}

LossGrad loss_and_grad(const WindowGraph& g, const ModelWeights& w, std::span<const std::size_t> edges,
                       std::span<const FeatureRow> features, std::span<const double> labels, const GradOptions& opt) {
  check_inputs(g, w, edges, features);
  if (labels.size() != edges.size()) throw Error(Errc::shape_mismatch, "labels", "one label per edge required");

  LossGrad out;
  out.grad = ModelWeights::zeros_like(w);
  if (edges.empty()) return out;
  const Activations a = propagate(g, w);
  const std::size_t d = w.d;
  const std::size_t n = a.n;
  ModelWeights& gw = out.grad;

  std::vector<double> dh(n * d, 0.0);  // gradient w.r.t. the top-layer node states
  std::vector<double> x(w.head_input());
  std::vector<double> z1(w.h);
  std::vector<double> a1(w.h);
  std::vector<double> dz1(w.h);
  std::vector<double> dx(w.head_input());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const std::size_t i = edges[k];
    head_input(a, g, w, i, w.f ? &features[k] : nullptr, x.data());
    std::copy(w.p[pg::head_b1].v.begin(), w.p[pg::head_b1].v.end(), z1.begin());
    gemv_add(w.p[pg::head_w1], x.data(), z1.data());
    double z2 = w.p[pg::head_b2].v[0];
    for (std::size_t j = 0; j < w.h; ++j) {
      a1[j] = z1[j] > 0.0 ? z1[j] : 0.0;
      z2 += w.p[pg::head_w2].v[j] * a1[j];
    }
    out.loss_sum += logistic_loss(z2, labels[k]);
    ++out.count;

    const double dz2 = sigmoid(z2) - labels[k];
    gw.p[pg::head_b2].v[0] += dz2;
    for (std::size_t j = 0; j < w.h; ++j) {
      gw.p[pg::head_w2].v[j] += dz2 * a1[j];
      dz1[j] = z1[j] > 0.0 ? dz2 * w.p[pg::head_w2].v[j] : 0.0;
      gw.p[pg::head_b1].v[j] += dz1[j];
    }
    outer_add(gw.p[pg::head_w1], dz1.data(), x.data());
    std::fill(dx.begin(), dx.end(), 0.0);
    gemv_t_add(w.p[pg::head_w1], dz1.data(), dx.data());
    double* ds = dh.data() + a.src_local[i] * d;
    double* dd = dh.data() + a.dst_local[i] * d;
    double* de = gw.p[pg::edge_emb].v.data() + static_cast<std::size_t>(g.edge_types[i]) * d;
    for (std::size_t c = 0; c < d; ++c) {
      ds[c] += dx[c];
      dd[c] += dx[d + c];
      de[c] += dx[2 * d + c];
    }
  }

  std::vector<double> dz(d);
  std::vector<double> dagg(d);
  for (std::size_t l = kLayers; l-- > 0;) {
    std::vector<double> dh_in(n * d, 0.0);
    const auto& hin = a.h[l];
    const auto& z = a.z[l];
    const auto& agg = a.agg[l];
    for (std::size_t v = 0; v < n; ++v) {
      bool any = false;
      for (std::size_t c = 0; c < d; ++c) {
        dz[c] = z[v * d + c] > 0.0 ? dh[v * d + c] : 0.0;
        any = any || dz[c] != 0.0;
      }
      if (!any) continue;
      double* db = gw.p[pg::bias(l)].v.data();
      for (std::size_t c = 0; c < d; ++c) db[c] += dz[c];
      outer_add(gw.p[pg::self(l)], dz.data(), hin.data() + v * d);
      gemv_t_add(w.p[pg::self(l)], dz.data(), dh_in.data() + v * d);
      if (opt.zero_neighbor_grad) continue;
      outer_add(gw.p[pg::nbr(l)], dz.data(), agg.data() + v * d);
      const std::size_t b = a.adj_start[v];
      const std::size_t kdeg = a.adj_start[v + 1] - b;
      if (kdeg == 0) continue;
      std::fill(dagg.begin(), dagg.end(), 0.0);
      gemv_t_add(w.p[pg::nbr(l)], dz.data(), dagg.data());
      const double inv = 1.0 / static_cast<double>(kdeg);
      for (std::size_t j = b; j < b + kdeg; ++j) {
        double* du = dh_in.data() + a.adj[j] * d;
        for (std::size_t c = 0; c < d; ++c) du[c] += dagg[c] * inv;
      }
    }
    dh = std::move(dh_in);
  }

  double* demb = gw.p[pg::node_emb].v.data();
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < d; ++c) demb[a.type[v] * d + c] += dh[v * d + c];
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(Errc::invalid_argument, "learning_rate", "must be > 0");
  if (epochs < 1) throw Error(Errc::invalid_argument, "epochs", "must be >= 1");
  if (batch < 1) throw Error(Errc::invalid_argument, "batch", "must be >= 1");
  if (l2 < 0.0) throw Error(Errc::invalid_argument, "l2", "must be >= 0");
  if (workers < 1) throw Error(Errc::invalid_argument, "workers", "must be >= 1");
}

double objective(std::span<const TrainSample> samples, const ModelWeights& w, double l2) {
  double loss = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    if (s.edges.empty()) continue;
    const auto scores = forward(*s.graph, w, s.edges, s.features);
    for (std::size_t k = 0; k < scores.size(); ++k) {
      const double p = std::clamp(scores[k], 1e-300, 1.0 - 1e-16);
      loss += s.labels[k] > 0.5 ? -std::log(p) : -std::log1p(-p);
      ++count;
    }
  }
  const double mean = count ? loss / static_cast<double>(count) : 0.0;
  return mean + 0.5 * l2 * l2_norm_sq(w);
}

namespace {

void check_labels(std::span<const TrainSample> samples) {
  bool pos = false;
  bool neg = false;
  for (const auto& s : samples) {
    if (s.labels.size() != s.edges.size()) throw Error(Errc::shape_mismatch, "labels", "one label per edge required");
    for (double y : s.labels) {
      if (y != 0.0 && y != 1.0) throw Error(Errc::invalid_argument, "labels", "labels must be 0 or 1");
      (y > 0.5 ? pos : neg) = true;
    }
  }
  if (!pos || !neg) throw Error(Errc::degenerate_labels, "labels", "training set needs both classes");
}

// Per-sample gradients computed on `workers` threads, then summed in sample
// order so the result is independent of the thread count.
ModelWeights batch_gradient(std::span<const TrainSample> samples, std::span<const std::size_t> batch,
                            const ModelWeights& w, std::uint32_t workers, double& loss_sum, std::size_t& count) {
  std::vector<LossGrad> parts(batch.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t k = begin; k < batch.size(); k += step) {
      const auto& s = samples[batch[k]];
      parts[k] = loss_and_grad(*s.graph, w, s.edges, s.features, s.labels);
    }
  };
  if (workers <= 1 || batch.size() <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> threads;
    const std::size_t t = std::min<std::size_t>(workers, batch.size());
    for (std::size_t k = 0; k < t; ++k) threads.emplace_back(work, k, t);
    for (auto& th : threads) th.join();
  }
  ModelWeights total = ModelWeights::zeros_like(w);
  loss_sum = 0.0;
  count = 0;
  for (const auto& part : parts) {
    add_scaled(total, part.grad, 1.0);
    loss_sum += part.loss_sum;
    count += part.count;
  }
  return total;
}

}  // namespace

ModelWeights train_head(std::span<const TrainSample> samples, const ModelWeights& init, const TrainConfig& cfg,
                        TrainReport* report) {
  cfg.validate();
  check_labels(samples);
  init.check_shapes();

  ModelWeights w = init;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (!samples[k].edges.empty()) order.push_back(k);
  }

  TrainReport rep;
  rep.initial_loss = objective(samples, w, cfg.l2);
  if (!std::isfinite(rep.initial_loss)) throw Error(Errc::non_finite_loss, "train", "initial loss is not finite");

  const auto batch = static_cast<std::size_t>(cfg.batch);
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      double loss_sum = 0.0;
      std::size_t count = 0;
      ModelWeights grad = batch_gradient(samples, std::span(order).subspan(start, end - start), w, cfg.workers,
                                         loss_sum, count);
      if (count == 0) continue;
      if (!std::isfinite(loss_sum)) throw Error(Errc::non_finite_loss, "train", "epoch " + std::to_string(epoch));
      epoch_loss += loss_sum;
      epoch_count += count;
      const double scale = 1.0 / static_cast<double>(count);
      for (std::size_t k = 0; k < pg::count; ++k) {
        auto& param = w.p[k].v;
        const auto& g = grad.p[k].v;
        for (std::size_t i = 0; i < param.size(); ++i) {
          param[i] -= cfg.learning_rate * (g[i] * scale + cfg.l2 * param[i]);
        }
      }
    }
    rep.epoch_loss.push_back(epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0);
    if (!w.all_finite()) throw Error(Errc::non_finite_loss, "train", "weights diverged in epoch " + std::to_string(epoch));
  }
  rep.final_loss = objective(samples, w, cfg.l2);
  if (!std::isfinite(rep.final_loss)) throw Error(Errc::non_finite_loss, "train", "final loss is not finite");
  if (report) *report = std::move(rep);
  return w;
}

double grad_check(const ModelWeights& w, const WindowGraph& g, std::span<const std::size_t> edges,
                  std::span<const FeatureRow> features, std::span<const double> labels, const GradOptions& opt) {
  if (edges.empty()) return 0.0;
  const LossGrad analytic = loss_and_grad(g, w, edges, features, labels, opt);
  constexpr double step = 1e-5;
  double worst = 0.0;
  ModelWeights probe = w;
  for (std::size_t k = 0; k < pg::count; ++k) {
    std::vector<double> numeric(w.p[k].v.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double orig = probe.p[k].v[i];
      probe.p[k].v[i] = orig + step;
      const double up = loss_and_grad(g, probe, edges, features, labels).loss_sum;
      probe.p[k].v[i] = orig - step;
      const double down = loss_and_grad(g, probe, edges, features, labels).loss_sum;
      probe.p[k].v[i] = orig;
      numeric[i] = (up - down) / (2.0 * step);
    }
    std::vector<double> diff(numeric.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic.grad.p[k].v[i] - numeric[i];
    const double denom = norm(analytic.grad.p[k].v) + norm(numeric);
    if (denom < 1e-12) continue;
    worst = std::max(worst, norm(diff) / denom);
  }
  return worst;
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  w.check_shapes();
  ByteWriter out;
  out.magic("NEBM");
  out.u32(kWeightsVersion);
  out.u32(w.d);
  out.u32(w.h);
  out.u32(w.f);
  for (const auto& p : w.p) {
    out.u32(static_cast<std::uint32_t>(p.rows));
    out.u32(static_cast<std::uint32_t>(p.cols));
    for (double x : p.v) out.f64(x);
  }
  write_file_bytes(path, out.finish());
}

ModelWeights load_weights(const std::filesystem::path& path, std::optional<std::uint32_t> expected_d) {
  const std::string source = path.string();
  ByteReader r(read_file_bytes(path), source);
  r.expect_magic("NEBM");
  if (auto v = r.u32(); v != kWeightsVersion) {
    throw Error(Errc::version_mismatch, source, "weights version " + std::to_string(v));
  }
  ModelWeights w;
  w.d = r.u32();
  w.h = r.u32();
  w.f = r.u32();
  if (expected_d && *expected_d != w.d) {
    throw Error(Errc::shape_mismatch, source,
                "file has d=" + std::to_string(w.d) + ", configured d=" + std::to_string(*expected_d));
  }
  for (auto& p : w.p) {
    p.rows = r.u32();
    p.cols = r.u32();
    if (p.rows * p.cols > (std::size_t{1} << 26)) throw Error(Errc::corrupt_container, source, "implausible block size");
    p.v.resize(p.rows * p.cols);
    for (auto& x : p.v) x = r.f64();
  }
  r.expect_end();
  w.check_shapes();
  return w;
}

double LiteModel::score(const FeatureRow& x) const {
  double z = b;
  for (std::size_t i = 0; i < kFeatureDim; ++i) z += w[i] * x[i];
  return sigmoid(z);
}

LiteModel train_lite(std::span<const TrainSample> samples, const TrainConfig& cfg) {
  cfg.validate();
  check_labels(samples);
  struct Row {
    const FeatureRow* x;
    double y;
  };
  std::vector<Row> rows;
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < s.edges.size(); ++k) rows.push_back({&s.features.at(k), s.labels[k]});
  }
  LiteModel m;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Batches of edges rather than windows: the model has no graph context.
  const std::size_t batch = static_cast<std::size_t>(cfg.batch) * 16;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::array<double, kFeatureDim> gw{};
      double gb = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Row& row = rows[order[k]];
        const double err = m.score(*row.x) - row.y;
        for (std::size_t i = 0; i < kFeatureDim; ++i) gw[i] += err * (*row.x)[i];
        gb += err;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < kFeatureDim; ++i) m.w[i] -= cfg.learning_rate * (gw[i] * scale + cfg.l2 * m.w[i]);
      m.b -= cfg.learning_rate * gb * scale;
    }
    for (double x : m.w) {
      if (!std::isfinite(x)) throw Error(Errc::non_finite_loss, "train_lite", "weights diverged");
    }
  }
  return m;
}

void save_lite(const LiteModel& m, const std::filesystem::path& path) {
  ByteWriter out;
  out.magic("NEBL");
  out.u32(kLiteVersion);
  out.u32(static_cast<std::uint32_t>(kFeatureDim));
  for (double x : m.w) out.f64(x);
  out.f64(m.b);
  write_file_bytes(path, out.finish());
}

LiteModel load_lite(const std::filesystem::path& path) {
  const std::string source = path.string();
  ByteReader r(read_file_bytes(path), source);
  r.expect_magic("NEBL");
  if (auto v = r.u32(); v != kLiteVersion) throw Error(Errc::version_mismatch, source, "lite version " + std::to_string(v));
  if (r.u32() != kFeatureDim) throw Error(Errc::shape_mismatch, source, "feature width differs");
  LiteModel m;
  for (auto& x : m.w) x = r.f64();
  m.b = r.f64();
  r.expect_end();
  return m;
}

}  // namespace nebula
