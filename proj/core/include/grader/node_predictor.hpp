#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

#include "grader/mdp.hpp"

namespace grader {

// Parameter and gradient storage. Eigen's vectorized reductions depend on
// the alignment of the data they read, so aligned storage keeps results
// bitwise identical across instances.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Column-batched model inputs. sources[i] is the encoded value of source
// factor i (encoded_dim x B); targets[j] holds next-step values of state
// factor j: category indices (length x B) for discrete factors, normalized
// values (dim x B) for continuous ones.
struct EncodedBatch {
  std::vector<Eigen::MatrixXd> sources;
  std::vector<Eigen::MatrixXd> targets;
  int size = 0;
};

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip per predictor; <= 0 disables.
  double clip_norm = 0.0;
};

// Gated recurrent predictor for one target state factor:
//   h0 = E_own(own previous value) if the own factor is a parent, else a
//        learned initial vector;
//   h_k = GRU(h_{k-1}, E_p(value of parent p)) for the remaining parents;
//   output = D(h_last): categorical logits per component (discrete target)
//            or the mean in normalized units (continuous target, added to the
//            own previous value when that is a parent).
//
// All parameters sit in one flat vector so that optimizers, checkpoints and
// finite-difference checks address them uniformly.
class NodePredictor {
 public:
  NodePredictor(const MdpSpaces& spaces, int target, int hidden_size, std::vector<int> parents,
                std::uint64_t seed);

  int target() const { return target_; }
  int hidden_size() const { return hidden_; }
  const std::vector<int>& parents() const { return parents_; }
  bool has_own_parent() const { return !parents_.empty() && parents_.front() == target_; }
  bool continuous() const { return continuous_; }
  int output_dim() const { return out_dim_; }

  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }
  // Human-readable name of parameter k, e.g. "gru.W[3,1]".
  std::string param_name(std::size_t k) const;

  // Mean negative log-likelihood over the batch. When `grad` is nonempty it
  // receives d(mean NLL)/d(params). `gates`, when nonempty, scales each
  // parent's encoded input (aligned with parents()); its gradient is written
  // to `gate_grad` when that is nonempty.
  double loss(const EncodedBatch& batch, std::span<double> grad, std::span<const double> gates = {},
              std::span<double> gate_grad = {}) const;

  // Per-sample negative log-likelihood (1 x B), no gradients.
  Eigen::RowVectorXd sample_nll(const EncodedBatch& batch) const;

  // Decoder output (logits or mean, normalized units), output_dim x B.
  Eigen::MatrixXd output(const EncodedBatch& batch) const;

  void reinitialize(std::uint64_t seed);

  // Optimizer state lives with the parameters it updates.
  void apply_gradient(std::span<const double> grad, double learning_rate, const OptimizerConfig& opt);

 private:
  struct Block {
    std::string name;
    std::size_t offset;
    int rows;
    int cols;
    int fan_in;
  };
  struct Activations;

  void add_block(const std::string& name, int rows, int cols, int fan_in);
  Eigen::Map<const Eigen::MatrixXd> mat(const ParamVector& p, int block) const;
  Eigen::Map<Eigen::MatrixXd> mat(std::span<double> p, int block) const;
  void forward(const EncodedBatch& batch, std::span<const double> gates, Activations& act) const;
  void nll_and_dout(const EncodedBatch& batch, const Eigen::MatrixXd& out, Eigen::RowVectorXd* nll,
                    Eigen::MatrixXd* dout) const;

  int target_;
  int hidden_;
  std::vector<int> parents_;
  bool continuous_;
  int out_dim_;
  int target_length_;
  int target_cardinality_;
  double sigma_ = 0.1;

  std::vector<Block> blocks_;
  std::vector<int> encoder_block_;  // per parent: weight block; bias block follows
  int init_block_ = -1;
  int w_block_ = -1;   // 3h x h input weights; bias block follows
  int u_block_ = -1;   // 3h x h recurrent weights; bias block follows
  int dec_block_ = -1; // out x h; bias block follows
  ParamVector params_;

  ParamVector opt_m_;
  ParamVector opt_v_;
  long opt_steps_ = 0;

  friend class FactoredDynamicsModel;
};

}  // namespace grader
