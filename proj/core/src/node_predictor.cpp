#include "grader/node_predictor.hpp"

#include <cmath>
#include <numbers>

#include "grader/error.hpp"
#include "grader/rng.hpp"

namespace grader {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

}  // namespace

struct NodePredictor::Activations {
  std::vector<Eigen::MatrixXd> inputs;   // gated encoded parent values
  std::vector<Eigen::MatrixXd> encoded;  // tanh(A x + b), h x B
  std::vector<Eigen::MatrixXd> h;        // h[0] initial, h[t+1] after step t
  std::vector<Eigen::MatrixXd> z, r, n, cn;
  Eigen::MatrixXd out;
};

NodePredictor::NodePredictor(const MdpSpaces& spaces, int target, int hidden_size, std::vector<int> parents,
                             std::uint64_t seed)
    : target_(target), hidden_(hidden_size), parents_(std::move(parents)) {
  if (target < 0 || target >= spaces.num_state_factors()) throw RangeError("NodePredictor: bad target index");
  if (hidden_size < 1) throw ConfigError("NodePredictor: hidden_size must be positive");
  const FactorSpace& ts = spaces.state[target];
  continuous_ = !ts.is_discrete();
  target_length_ = ts.width();
  target_cardinality_ = ts.is_discrete() ? ts.cardinality : 0;
  out_dim_ = continuous_ ? target_length_ : target_length_ * target_cardinality_;

  for (std::size_t p = 0; p < parents_.size(); ++p) {
    const int src = parents_[p];
    if (src < 0 || src >= spaces.num_sources()) throw RangeError("NodePredictor: bad parent index");
    if (p > 0 && src == target) throw ConfigError("NodePredictor: own parent must come first");
    const int d = spaces.source(src).encoded_dim();
    encoder_block_.push_back(static_cast<int>(blocks_.size()));
    add_block("enc" + std::to_string(src) + ".A", hidden_, d, d);
    add_block("enc" + std::to_string(src) + ".b", hidden_, 1, d);
  }
  init_block_ = static_cast<int>(blocks_.size());
  add_block("h_init", hidden_, 1, hidden_);
  w_block_ = static_cast<int>(blocks_.size());
  add_block("gru.W", 3 * hidden_, hidden_, hidden_);
  add_block("gru.bW", 3 * hidden_, 1, hidden_);
  u_block_ = static_cast<int>(blocks_.size());
  add_block("gru.U", 3 * hidden_, hidden_, hidden_);
  add_block("gru.bU", 3 * hidden_, 1, hidden_);
  dec_block_ = static_cast<int>(blocks_.size());
  add_block("dec.W", out_dim_, hidden_, hidden_);
  add_block("dec.b", out_dim_, 1, hidden_);
  params_.assign(blocks_.back().offset + static_cast<std::size_t>(out_dim_), 0.0);
  reinitialize(seed);
}

void NodePredictor::add_block(const std::string& name, int rows, int cols, int fan_in) {
  const std::size_t offset =
      blocks_.empty() ? 0 : blocks_.back().offset + static_cast<std::size_t>(blocks_.back().rows) * blocks_.back().cols;
  blocks_.push_back(Block{name, offset, rows, cols, fan_in});
}

void NodePredictor::reinitialize(std::uint64_t seed) {
  Rng rng(seed);
  for (const Block& blk : blocks_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(blk.fan_in, 1)));
    for (int k = 0; k < blk.rows * blk.cols; ++k) params_[blk.offset + k] = uniform_real(rng, -bound, bound);
  }
  opt_m_.clear();
  opt_v_.clear();
  opt_steps_ = 0;
}

std::string NodePredictor::param_name(std::size_t k) const {
  for (const Block& blk : blocks_) {
    const std::size_t size = static_cast<std::size_t>(blk.rows) * blk.cols;
    if (k >= blk.offset && k < blk.offset + size) {
      const std::size_t local = k - blk.offset;
      return blk.name + "[" + std::to_string(local % blk.rows) + "," + std::to_string(local / blk.rows) + "]";
    }
  }
  throw RangeError("NodePredictor::param_name: index out of range");
}

Eigen::Map<const Eigen::MatrixXd> NodePredictor::mat(const ParamVector& p, int block) const {
  const Block& blk = blocks_[block];
  return {p.data() + blk.offset, blk.rows, blk.cols};
}

Eigen::Map<Eigen::MatrixXd> NodePredictor::mat(std::span<double> p, int block) const {
  const Block& blk = blocks_[block];
  return {p.data() + blk.offset, blk.rows, blk.cols};
}

void NodePredictor::forward(const EncodedBatch& batch, std::span<const double> gates, Activations& act) const {
  const int B = batch.size;
  const int h = hidden_;
  const int P = static_cast<int>(parents_.size());
  act.inputs.resize(P);
  act.encoded.resize(P);
  for (int p = 0; p < P; ++p) {
    const Eigen::MatrixXd& x = batch.sources[parents_[p]];
    if (x.cols() != B) throw ModelInputError("NodePredictor: batch column count mismatch");
    act.inputs[p] = gates.empty() ? x : Eigen::MatrixXd(x * gates[p]);
    const auto A = mat(params_, encoder_block_[p]);
    const auto b = mat(params_, encoder_block_[p] + 1);
    act.encoded[p] = ((A * act.inputs[p]).colwise() + b.col(0)).array().tanh().matrix();
  }

  const bool own = has_own_parent();
  const int first_seq = own ? 1 : 0;
  const int T = P - first_seq;
  act.h.resize(T + 1);
  act.z.resize(T);
  act.r.resize(T);
  act.n.resize(T);
  act.cn.resize(T);
  act.h[0] = own ? act.encoded[0] : Eigen::MatrixXd(mat(params_, init_block_).col(0).replicate(1, B));

  const auto W = mat(params_, w_block_);
  const auto bW = mat(params_, w_block_ + 1);
  const auto U = mat(params_, u_block_);
  const auto bU = mat(params_, u_block_ + 1);
  for (int t = 0; t < T; ++t) {
    const Eigen::MatrixXd& x = act.encoded[first_seq + t];
    const Eigen::MatrixXd& hp = act.h[t];
    Eigen::MatrixXd a = (W * x).colwise() + bW.col(0);
    Eigen::MatrixXd c = (U * hp).colwise() + bU.col(0);
    act.z[t] = sigmoid(a.topRows(h) + c.topRows(h));
    act.r[t] = sigmoid(a.middleRows(h, h) + c.middleRows(h, h));
    act.cn[t] = c.bottomRows(h);
    act.n[t] = (a.bottomRows(h).array() + act.r[t].array() * act.cn[t].array()).tanh().matrix();
    act.h[t + 1] = ((1.0 - act.z[t].array()) * act.n[t].array() + act.z[t].array() * hp.array()).matrix();
  }

  const auto D = mat(params_, dec_block_);
  const auto Db = mat(params_, dec_block_ + 1);
  act.out = (D * act.h[T]).colwise() + Db.col(0);
  if (continuous_ && own) act.out += act.inputs[0];
}

void NodePredictor::nll_and_dout(const EncodedBatch& batch, const Eigen::MatrixXd& out, Eigen::RowVectorXd* nll,
                                 Eigen::MatrixXd* dout) const {
  const int B = batch.size;
  const Eigen::MatrixXd& y = batch.targets[target_];
  if (nll) nll->setZero(B);
  if (dout) dout->resize(out.rows(), B);
  if (continuous_) {
    const double s2 = sigma_ * sigma_;
    const double c = std::log(sigma_) + 0.5 * std::log(2.0 * std::numbers::pi);
    const Eigen::MatrixXd diff = out - y;
    if (nll) *nll = (diff.array().square() / (2.0 * s2)).colwise().sum().matrix() + Eigen::RowVectorXd::Constant(B, c * target_length_);
    if (dout) *dout = diff / (s2 * B);
    return;
  }
  const int C = target_cardinality_;
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < target_length_; ++l) {
      const auto logits = out.col(b).segment(l * C, C);
      const double mx = logits.maxCoeff();
      const Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
      const double sum = e.sum();
      const int yk = static_cast<int>(y(l, b));
      if (nll) (*nll)(b) += std::log(sum) + mx - logits(yk);
      if (dout) {
        auto g = dout->col(b).segment(l * C, C);
        g = e / (sum * B);
        g(yk) -= 1.0 / B;
      }
    }
  }
}

double NodePredictor::loss(const EncodedBatch& batch, std::span<double> grad, std::span<const double> gates,
                           std::span<double> gate_grad) const {
  if (batch.size < 1) throw ModelInputError("NodePredictor::loss: empty batch");
  if (!gates.empty() && gates.size() != parents_.size()) throw DimensionError("NodePredictor::loss: gate count");
  Activations act;
  forward(batch, gates, act);
  Eigen::RowVectorXd nll;
  const bool want_grad = !grad.empty() || !gate_grad.empty();
  Eigen::MatrixXd dout;
  nll_and_dout(batch, act.out, &nll, want_grad ? &dout : nullptr);
  const double value = nll.mean();
  if (!want_grad) return value;

  ParamVector scratch;
  if (grad.empty()) {
    scratch.assign(params_.size(), 0.0);
    grad = scratch;
  }
  if (grad.size() != params_.size()) throw DimensionError("NodePredictor::loss: gradient size");
  std::fill(grad.begin(), grad.end(), 0.0);

  const int h = hidden_;
  const int P = static_cast<int>(parents_.size());
  const bool own = has_own_parent();
  const int first_seq = own ? 1 : 0;
  const int T = P - first_seq;

  const auto D = mat(params_, dec_block_);
  mat(grad, dec_block_) = dout * act.h[T].transpose();
  mat(grad, dec_block_ + 1) = dout.rowwise().sum();
  Eigen::MatrixXd dh = D.transpose() * dout;

  std::vector<Eigen::MatrixXd> d_encoded(P);
  const auto W = mat(params_, w_block_);
  const auto U = mat(params_, u_block_);
  auto gW = mat(grad, w_block_);
  auto gbW = mat(grad, w_block_ + 1);
  auto gU = mat(grad, u_block_);
  auto gbU = mat(grad, u_block_ + 1);
  Eigen::MatrixXd da(3 * h, batch.size);
  Eigen::MatrixXd dc(3 * h, batch.size);
  for (int t = T - 1; t >= 0; --t) {
    const auto& z = act.z[t].array();
    const auto& r = act.r[t].array();
    const auto& n = act.n[t].array();
    const auto& hp = act.h[t].array();
    const Eigen::ArrayXXd dn = dh.array() * (1.0 - z);
    const Eigen::ArrayXXd dz = dh.array() * (hp - n);
    const Eigen::ArrayXXd dan = dn * (1.0 - n.square());
    const Eigen::ArrayXXd dr = dan * act.cn[t].array();
    da.topRows(h) = (dz * z * (1.0 - z)).matrix();
    da.middleRows(h, h) = (dr * r * (1.0 - r)).matrix();
    da.bottomRows(h) = dan.matrix();
    dc.topRows(2 * h) = da.topRows(2 * h);
    dc.bottomRows(h) = (dan * r).matrix();
    const Eigen::MatrixXd& x = act.encoded[first_seq + t];
    gW += da * x.transpose();
    gbW += da.rowwise().sum();
    gU += dc * act.h[t].transpose();
    gbU += dc.rowwise().sum();
    d_encoded[first_seq + t] = W.transpose() * da;
    dh = (dh.array() * z).matrix() + U.transpose() * dc;
  }
  if (own) {
    d_encoded[0] = dh;
  } else {
    mat(grad, init_block_) = dh.rowwise().sum();
  }

  if (!gate_grad.empty()) {
    if (gate_grad.size() != parents_.size()) throw DimensionError("NodePredictor::loss: gate gradient size");
    std::fill(gate_grad.begin(), gate_grad.end(), 0.0);
  }
  for (int p = 0; p < P; ++p) {
    const Eigen::MatrixXd dpre = (d_encoded[p].array() * (1.0 - act.encoded[p].array().square())).matrix();
    mat(grad, encoder_block_[p]) = dpre * act.inputs[p].transpose();
    mat(grad, encoder_block_[p] + 1) = dpre.rowwise().sum();
    if (!gate_grad.empty()) {
      Eigen::MatrixXd dx = mat(params_, encoder_block_[p]).transpose() * dpre;
      if (p == 0 && own && continuous_) dx += dout;
      gate_grad[p] = (dx.array() * batch.sources[parents_[p]].array()).sum();
    }
  }
  return value;
}

Eigen::RowVectorXd NodePredictor::sample_nll(const EncodedBatch& batch) const {
  Activations act;
  forward(batch, {}, act);
  Eigen::RowVectorXd nll;
  nll_and_dout(batch, act.out, &nll, nullptr);
  return nll;
}

Eigen::MatrixXd NodePredictor::output(const EncodedBatch& batch) const {
  Activations act;
  forward(batch, {}, act);
  return std::move(act.out);
}

void NodePredictor::apply_gradient(std::span<const double> grad, double learning_rate, const OptimizerConfig& opt) {
  if (grad.size() != params_.size()) throw DimensionError("NodePredictor::apply_gradient: size");
  double scale = 1.0;
  if (opt.clip_norm > 0.0) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
  }
  const std::size_t n = params_.size();
  if (opt.kind == OptimizerConfig::Kind::sgd) {
    if (opt.momentum > 0.0) {
      if (opt_m_.size() != n) opt_m_.assign(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        opt_m_[k] = opt.momentum * opt_m_[k] + scale * grad[k];
        params_[k] -= learning_rate * opt_m_[k];
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) params_[k] -= learning_rate * scale * grad[k];
    }
    return;
  }
  if (opt_m_.size() != n) opt_m_.assign(n, 0.0);
  if (opt_v_.size() != n) opt_v_.assign(n, 0.0);
  ++opt_steps_;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt_steps_));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt_steps_));
  for (std::size_t k = 0; k < n; ++k) {
    const double g = scale * grad[k];
    opt_m_[k] = opt.beta1 * opt_m_[k] + (1.0 - opt.beta1) * g;
    opt_v_[k] = opt.beta2 * opt_v_[k] + (1.0 - opt.beta2) * g * g;
    params_[k] -= learning_rate * (opt_m_[k] / c1) / (std::sqrt(opt_v_[k] / c2) + opt.epsilon);
  }
}

}  // namespace grader
