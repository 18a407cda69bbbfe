#include "scenesynth/ar_model.h"

#include <cmath>
#include <limits>

#include "scenesynth/binary_io.h"
#include "scenesynth/parallel.h"
#include "scenesynth/rng.h"

namespace scenesynth::ar {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ordering::GenerationOrder;
using ordering::LocalMaskSet;
using ordering::Stencils;
using vq::TokenGrid;

void ArConfig::validate() const {
  SS_CHECK(num_tokens >= 1, "ArConfig: num_tokens must be >= 1");
  SS_CHECK(embed_dim >= 1 && channels >= 1, "ArConfig: widths must be >= 1");
  SS_CHECK(layers >= 1, "ArConfig: layers must be >= 1");
  SS_CHECK(kernel >= 1 && kernel % 2 == 1, "ArConfig: kernel must be odd");
}

ArParameters ArParameters::zeros(const ArConfig& config) {
  config.validate();
  ArParameters p;
  p.embed = MatrixXd::Zero(config.embed_dim, config.num_tokens);
  for (int l = 0; l < config.layers; ++l) {
    const int in = l == 0 ? config.embed_dim : config.channels;
    p.weights.emplace_back(config.taps(), MatrixXd::Zero(config.channels, in));
    p.biases.push_back(VectorXd::Zero(config.channels));
  }
  p.head_weight = MatrixXd::Zero(config.num_tokens, config.channels);
  p.head_bias = VectorXd::Zero(config.num_tokens);
  return p;
}

void ArParameters::forEachBlock(const std::function<void(double*, size_t)>& fn) {
  fn(embed.data(), embed.size());
  for (size_t l = 0; l < weights.size(); ++l) {
    for (auto& w : weights[l]) fn(w.data(), w.size());
    fn(biases[l].data(), biases[l].size());
  }
  fn(head_weight.data(), head_weight.size());
  fn(head_bias.data(), head_bias.size());
}

void ArParameters::forEachBlock(const std::function<void(const double*, size_t)>& fn) const {
  const_cast<ArParameters*>(this)->forEachBlock(
      [&](double* data, size_t n) { fn(data, n); });
}

size_t ArParameters::count() const {
  size_t n = 0;
  forEachBlock([&](const double*, size_t size) { n += size; });
  return n;
}

double& ArParameters::at(size_t index) {
  double* found = nullptr;
  size_t offset = 0;
  forEachBlock([&](double* data, size_t n) {
    if (!found && index < offset + n) found = data + (index - offset);
    offset += n;
  });
  SS_CHECK(found != nullptr, "ArParameters::at: index out of range");
  return *found;
}

ArModel::ArModel(const ArConfig& config, uint64_t seed)
    : config_(config), params_(ArParameters::zeros(config)) {
  Rng rng(seed);
  auto fill = [&](MatrixXd& m, double fan_in) {
    const double a = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniformRange(rng, -a, a);
  };
  fill(params_.embed, 1.0);
  for (int l = 0; l < config.layers; ++l) {
    const double fan_in = static_cast<double>(config.taps()) * params_.weights[l][0].cols();
    for (auto& w : params_.weights[l]) fill(w, fan_in);
  }
  fill(params_.head_weight, config.channels);
}

ArModel ArModel::zeros(const ArConfig& config) {
  ArModel m;
  m.config_ = config;
  m.params_ = ArParameters::zeros(config);
  return m;
}

namespace {

struct Geometry {
  int height, width, kernel, half;
  int positions() const { return height * width; }
  // Input position read by `tap` of the output at `position`, or -1 outside.
  int source(int position, int tap) const {
    const int r = position / width + tap / kernel - half;
    const int c = position % width + tap % kernel - half;
    if (r < 0 || c < 0 || r >= height || c >= width) return -1;
    return r * width + c;
  }
};

void checkInputs(const ArModel& model, const TokenGrid& tokens, const LocalMaskSet& masks) {
  const ArConfig& cfg = model.config();
  SS_CHECK(tokens.tokens.sameShape(tokens.known), "forward: token grid shape mismatch");
  SS_CHECK(masks.height == tokens.height() && masks.width == tokens.width(),
           "forward: order shape does not match token grid");
  SS_CHECK(masks.kernel == cfg.kernel && masks.layers == cfg.layers,
           "forward: masks do not match model hyperparameters");
  for (int t : tokens.tokens.values())
    SS_CHECK(t >= 0 && t < cfg.num_tokens, "forward: token outside [0, K)");
}

// Columns of `x` read through one tap; rejected or out-of-frame reads are zero.
MatrixXd gather(const MatrixXd& x, const Stencils& s, const Geometry& g, int tap) {
  MatrixXd out = MatrixXd::Zero(x.rows(), x.cols());
  for (int p = 0; p < g.positions(); ++p) {
    if (!s.at(p, tap)) continue;
    out.col(p) = x.col(g.source(p, tap));
  }
  return out;
}

bool tapUsed(const Stencils& s, const Geometry& g, int tap) {
  for (int p = 0; p < g.positions(); ++p)
    if (s.at(p, tap)) return true;
  return false;
}

struct Activations {
  std::vector<MatrixXd> x;  // x[0] embeddings, x[l+1] = relu(z[l])
  std::vector<MatrixXd> z;
  MatrixXd logits;
};

Activations run(const ArModel& model, const TokenGrid& tokens, const LocalMaskSet& masks) {
  checkInputs(model, tokens, masks);
  const ArConfig& cfg = model.config();
  const ArParameters& p = model.params();
  const Geometry g{tokens.height(), tokens.width(), cfg.kernel, cfg.kernel / 2};
  const int n = g.positions();

  Activations a;
  a.x.emplace_back(cfg.embed_dim, n);
  for (int i = 0; i < n; ++i) a.x[0].col(i) = p.embed.col(tokens.tokens[i]);
  for (int l = 0; l < cfg.layers; ++l) {
    const Stencils& s = masks.layer(l);
    MatrixXd z = p.biases[l].replicate(1, n);
    for (int t = 0; t < cfg.taps(); ++t) {
      if (!tapUsed(s, g, t)) continue;
      z.noalias() += p.weights[l][t] * gather(a.x[l], s, g, t);
    }
    a.x.push_back(z.cwiseMax(0.0));
    a.z.push_back(std::move(z));
  }
  a.logits = p.head_weight * a.x.back();
  a.logits.colwise() += p.head_bias;
  return a;
}

double logSumExp(const Eigen::Ref<const VectorXd>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

Eigen::MatrixXd forward(const ArModel& model, const TokenGrid& tokens, const LocalMaskSet& masks) {
  return run(model, tokens, masks).logits;
}

Eigen::MatrixXd forward(const ArModel& model, const TokenGrid& tokens, const GenerationOrder& order) {
  return forward(model, tokens,
                 ordering::buildLocalMasks(order, model.config().kernel, model.config().layers));
}

double crossEntropy(const ArModel& model, const TrainExample& example, ArParameters* grad,
                    double scale, int* positions) {
  const ArConfig& cfg = model.config();
  const LocalMaskSet masks = ordering::buildLocalMasks(example.order, cfg.kernel, cfg.layers);
  const Activations a = run(model, example.grid, masks);
  const Geometry g{example.grid.height(), example.grid.width(), cfg.kernel, cfg.kernel / 2};
  const int n = g.positions();

  double total = 0;
  int count = 0;
  MatrixXd dlogits = MatrixXd::Zero(cfg.num_tokens, n);
  for (int i = 0; i < n; ++i) {
    if (example.order.rank[i] < 0) continue;
    const int target = example.grid.tokens[i];
    const double lse = logSumExp(a.logits.col(i));
    total += lse - a.logits(target, i);
    ++count;
    if (grad) {
      dlogits.col(i) = (a.logits.col(i).array() - lse).exp().matrix();
      dlogits(target, i) -= 1.0;
    }
  }
  if (positions) *positions = count;
  if (!grad || count == 0) return total;
  dlogits *= scale;

  const ArParameters& p = model.params();
  grad->head_weight.noalias() += dlogits * a.x.back().transpose();
  grad->head_bias += dlogits.rowwise().sum();
  MatrixXd dx = p.head_weight.transpose() * dlogits;
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const Stencils& s = masks.layer(l);
    const MatrixXd dz = (a.z[l].array() > 0.0).select(dx, 0.0);
    grad->biases[l] += dz.rowwise().sum();
    MatrixXd dinput = MatrixXd::Zero(a.x[l].rows(), n);
    for (int t = 0; t < cfg.taps(); ++t) {
      if (!tapUsed(s, g, t)) continue;
      grad->weights[l][t].noalias() += dz * gather(a.x[l], s, g, t).transpose();
      const MatrixXd dtap = p.weights[l][t].transpose() * dz;
      for (int i = 0; i < n; ++i) {
        if (s.at(i, t)) dinput.col(g.source(i, t)) += dtap.col(i);
      }
    }
    dx = std::move(dinput);
  }
  for (int i = 0; i < n; ++i) grad->embed.col(example.grid.tokens[i]) += dx.col(i);
  return total;
}

double nll(const ArModel& model, const TokenGrid& grid, const GenerationOrder& order) {
  SS_CHECK(grid.fullyKnown(), "nll: grid has unknown tokens");
  int count = 0;
  const double total = crossEntropy(model, {grid, order}, nullptr, 1.0, &count);
  return count == 0 ? 0.0 : total / count;
}

double lossAndGradient(const ArModel& model, const TrainBatch& batch, ArParameters& grad) {
  SS_CHECK(!batch.empty(), "trainStep: empty batch");
  int total_positions = 0;
  for (const auto& ex : batch) {
    SS_CHECK(ex.grid.fullyKnown(), "trainStep: training grids must be fully known");
    total_positions += ex.order.backgroundCount();
  }
  grad = ArParameters::zeros(model.config());
  if (total_positions == 0) return 0.0;
  const double scale = 1.0 / total_positions;

  // Fixed-size chunks reduced in order keep the result independent of the
  // worker count.
  constexpr int kChunk = 4;
  const int chunks = (static_cast<int>(batch.size()) + kChunk - 1) / kChunk;
  std::vector<ArParameters> partial(chunks);
  std::vector<double> loss(chunks, 0.0);
  parallelFor(0, chunks, [&](int c) {
    partial[c] = ArParameters::zeros(model.config());
    for (int i = c * kChunk; i < std::min<int>((c + 1) * kChunk, batch.size()); ++i)
      loss[c] += crossEntropy(model, batch[i], &partial[c], scale);
  });
  double total = 0;
  for (int c = 0; c < chunks; ++c) {
    total += loss[c];
    std::vector<double*> dst;
    grad.forEachBlock([&](double* d, size_t) { dst.push_back(d); });
    size_t b = 0;
    partial[c].forEachBlock([&](const double* src, size_t n) {
      for (size_t i = 0; i < n; ++i) dst[b][i] += src[i];
      ++b;
    });
  }
  return total * scale;
}

double trainStep(ArModel& model, const TrainBatch& batch, double lr) {
  SS_CHECK(lr >= 0, "trainStep: lr must be >= 0");
  ArParameters grad;
  const double loss = lossAndGradient(model, batch, grad);
  if (lr == 0) return loss;
  std::vector<const double*> src;
  grad.forEachBlock([&](const double* g, size_t) { src.push_back(g); });
  size_t b = 0;
  model.params().forEachBlock([&](double* w, size_t n) {
    for (size_t i = 0; i < n; ++i) w[i] -= lr * src[b][i];
    ++b;
  });
  return loss;
}

Eigen::VectorXd temperatureSoftmax(const Eigen::VectorXd& logits, double temperature) {
  SS_CHECK(temperature >= 0, "temperature must be >= 0");
  VectorXd probs = VectorXd::Zero(logits.size());
  if (temperature == 0) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);  // first maximum
    probs[best] = 1.0;
    return probs;
  }
  const VectorXd scaled = logits / temperature;
  probs = (scaled.array() - scaled.maxCoeff()).exp().matrix();
  return probs / probs.sum();
}

double entropy(const Eigen::VectorXd& probs) {
  double h = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (probs[i] > 0) h -= probs[i] * std::log(probs[i]);
  return h;
}

namespace {

int drawCategorical(const VectorXd& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0;
  int last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    acc += probs[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

// Evaluates the network one position at a time. A background position depends
// only on strictly earlier ranks and visible positions, so its activations are
// final once computed, and each position is evaluated exactly once.
class IncrementalEvaluator {
 public:
  IncrementalEvaluator(const ArModel& model, const TokenGrid& grid, const LocalMaskSet& masks)
      : model_(model), masks_(masks),
        g_{grid.height(), grid.width(), model.config().kernel, model.config().kernel / 2} {
    const ArConfig& cfg = model.config();
    const int n = g_.positions();
    x_.emplace_back(cfg.embed_dim, n);
    for (int i = 0; i < n; ++i) x_[0].col(i) = model.params().embed.col(grid.tokens[i]);
    for (int l = 0; l < cfg.layers; ++l) x_.push_back(MatrixXd::Zero(cfg.channels, n));
  }

  void setToken(int position, int token) { x_[0].col(position) = model_.params().embed.col(token); }

  void computeLayer(int l, int position) {
    const ArParameters& p = model_.params();
    const Stencils& s = masks_.layer(l);
    VectorXd z = p.biases[l];
    for (int t = 0; t < model_.config().taps(); ++t) {
      if (s.at(position, t)) z.noalias() += p.weights[l][t] * x_[l].col(g_.source(position, t));
    }
    x_[l + 1].col(position) = z.cwiseMax(0.0);
  }

  VectorXd logitsAt(int position) {
    for (int l = 0; l < model_.config().layers; ++l) computeLayer(l, position);
    return model_.params().head_weight * x_.back().col(position) + model_.params().head_bias;
  }

  std::vector<MatrixXd>& activations() { return x_; }

 private:
  const ArModel& model_;
  const LocalMaskSet& masks_;
  Geometry g_;
  std::vector<MatrixXd> x_;
};

}  // namespace

TokenGrid sample(const ArModel& model, const TokenGrid& partial, const GenerationOrder& order,
                 double temperature, uint64_t seed, SampleMode mode) {
  SS_CHECK(temperature >= 0, "sample: temperature must be >= 0");
  SS_CHECK(partial.tokens.sameShape(order.rank), "sample: order shape does not match grid");
  for (size_t i = 0; i < order.rank.size(); ++i) {
    SS_CHECK(static_cast<bool>(partial.known[i]) == (order.rank[i] < 0),
             "sample: known mask does not match the order's visible set");
  }
  const ArConfig& cfg = model.config();
  TokenGrid grid = partial;
  for (size_t i = 0; i < grid.tokens.size(); ++i)
    if (!grid.known[i]) grid.tokens[i] = 0;  // placeholder, hidden by the masks
  const std::vector<int> positions = order.positionsByRank();
  if (positions.empty()) return grid;

  const LocalMaskSet masks = ordering::buildLocalMasks(order, cfg.kernel, cfg.layers);
  checkInputs(model, grid, masks);
  Rng rng(seed);

  if (mode == SampleMode::kNaive) {
    for (int pos : positions) {
      const VectorXd logits = forward(model, grid, masks).col(pos);
      const int token = drawCategorical(temperatureSoftmax(logits, temperature), rng);
      grid.tokens[pos] = token;
      grid.known[pos] = 1;
    }
    return grid;
  }

  IncrementalEvaluator eval(model, grid, masks);
  // Visible positions read only visible inputs; evaluate them layer by layer.
  for (int l = 0; l < cfg.layers; ++l) {
    for (int i = 0; i < static_cast<int>(order.rank.size()); ++i) {
      if (order.rank[i] < 0) eval.computeLayer(l, i);
    }
  }
  for (int pos : positions) {
    const VectorXd logits = eval.logitsAt(pos);
    const int token = drawCategorical(temperatureSoftmax(logits, temperature), rng);
    grid.tokens[pos] = token;
    grid.known[pos] = 1;
    eval.setToken(pos, token);
  }
  return grid;
}

void saveModel(const std::string& path, const ArModel& model) {
  const ArConfig& cfg = model.config();
  BinaryWriter w(path);
  w.magic("PSAR");
  w.put<uint32_t>(1);
  for (int v : {cfg.num_tokens, cfg.embed_dim, cfg.layers, cfg.kernel, cfg.channels})
    w.put<uint32_t>(static_cast<uint32_t>(v));
  model.params().forEachBlock([&](const double* data, size_t n) {
    for (size_t i = 0; i < n; ++i) w.put<float>(static_cast<float>(data[i]));
  });
  w.finish();
}

ArModel loadModel(const std::string& path) {
  BinaryReader r(path);
  r.expectMagic("PSAR");
  SS_CHECK(r.get<uint32_t>() == 1, path + ": unsupported model version");
  ArConfig cfg;
  for (int* field : {&cfg.num_tokens, &cfg.embed_dim, &cfg.layers, &cfg.kernel, &cfg.channels}) {
    const uint32_t v = r.get<uint32_t>();
    SS_CHECK(v >= 1 && v < 65536, path + ": bad model hyperparameter");
    *field = static_cast<int>(v);
  }
  cfg.validate();
  ArModel model = ArModel::zeros(cfg);
  model.params().forEachBlock([&](double* data, size_t n) {
    for (size_t i = 0; i < n; ++i) data[i] = r.get<float>();
  });
  r.expectEnd();
  return model;
}

}  // namespace scenesynth::ar
