#ifndef KFCPO_NN_HPP_
#define KFCPO_NN_HPP_

#include <Eigen/Dense>

#include <span>
#include <variant>
#include <vector>

#include "kfcpo/random.hpp"

namespace kfcpo {

enum class Activation { kRelu, kIdentity };

struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::kRelu;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Throws ConfigError unless dims are positive, consecutive layers chain and
// only the last layer is an identity layer.
void validate_specs(std::span<const LayerSpec> specs);

// ReLU hidden layers followed by an identity output layer.
std::vector<LayerSpec> make_mlp_specs(int in_dim, std::span<const int> hidden,
                                      int out_dim);

struct LayerParams {
  Eigen::MatrixXd weight;  // out_dim x in_dim
  Eigen::VectorXd bias;    // out_dim

  // [weight | bias], the homogeneous-coordinate form K-FAC works on.
  Eigen::MatrixXd augmented() const;
  void set_augmented(const Eigen::MatrixXd& wb);

  friend bool operator==(const LayerParams& a, const LayerParams& b) {
    return a.weight == b.weight && a.bias == b.bias;
  }
};

// Parameters of one network. The same shape doubles as the container for
// gradients, natural gradients and momentum buffers.
struct ParamSet {
  std::vector<LayerParams> layers;
  Eigen::VectorXd log_std;  // empty for value networks

  static ParamSet zeros(std::span<const LayerSpec> specs, int log_std_dim = 0);

  Eigen::Index size() const;
  // Layer by layer: weight (column-major), then bias; log_std last.
  Eigen::VectorXd flatten() const;
  // Inverse of flatten; throws ConfigError when the length differs.
  void assign(const Eigen::VectorXd& flat);
  ParamSet zeros_like() const;
  bool all_finite() const;
  bool same_shape(const ParamSet& other) const;

  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator-=(const ParamSet& other);
  ParamSet& operator*=(double s);

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.layers == b.layers && a.log_std == b.log_std;
  }
};

ParamSet operator+(ParamSet a, const ParamSet& b);
ParamSet operator-(ParamSet a, const ParamSet& b);
ParamSet operator*(double s, ParamSet a);

// Flat inner product over every entry, log_std included.
double dot(const ParamSet& a, const ParamSet& b);
double squared_norm(const ParamSet& a);
// y += alpha * x
void axpy(double alpha, const ParamSet& x, ParamSet& y);

struct InitOptions {
  double hidden_gain = 1.4142135623730951;  // sqrt(2) for ReLU
  double output_gain = 1.0;
  double log_std_init = -0.5;
  int log_std_dim = 0;
};

// Orthogonal weights scaled by gain, zero biases.
ParamSet init_params(std::span<const LayerSpec> specs, const InitOptions& opts,
                     Rng& rng);

// Activations for a batch stored column-wise (one column per sample).
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;           // (in_dim + 1) x n, last row 1
  std::vector<Eigen::MatrixXd> pre_activations;  // out_dim x n
  Eigen::MatrixXd output;                        // out_dim x n
};

// Per-layer quantities K-FAC needs: bias-augmented inputs a and gradients of
// the per-sample objective with respect to the pre-activations, column-wise.
struct LayerStats {
  Eigen::MatrixXd activations;  // (in_dim + 1) x n
  Eigen::MatrixXd deltas;       // out_dim x n
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<LayerSpec> specs);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  int input_dim() const { return specs_.front().in_dim; }
  int output_dim() const { return specs_.back().out_dim; }

  ForwardCache forward(const ParamSet& params, const Eigen::MatrixXd& obs) const;
  Eigen::VectorXd forward(const ParamSet& params, const Eigen::VectorXd& obs,
                          ForwardCache* cache) const;

  // Pre-activation gradients for every layer given d(objective)/d(output).
  std::vector<Eigen::MatrixXd> backward(const ParamSet& params,
                                        const ForwardCache& cache,
                                        const Eigen::MatrixXd& output_grad) const;

  // Sum over samples of weight_i * delta_i * a_i^T per layer. log_std of the
  // result is left empty.
  ParamSet weight_gradients(const ForwardCache& cache,
                            const std::vector<Eigen::MatrixXd>& deltas,
                            const Eigen::VectorXd& sample_weights) const;

 private:
  void check_params(const ParamSet& params) const;

  std::vector<LayerSpec> specs_;
};

struct GaussianDist {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
};

struct CategoricalDist {
  Eigen::VectorXd logits;
};

using Distribution = std::variant<GaussianDist, CategoricalDist>;

// Categorical actions are a length-1 vector holding the index.
double log_prob(const Distribution& dist, const Eigen::VectorXd& action);
// Closed-form KL(old || next); throws UsageError on mismatched families.
double kl(const Distribution& old_dist, const Distribution& new_dist);
Eigen::VectorXd sample(const Distribution& dist, Rng& rng);
// Mean for Gaussians, argmax for categoricals.
Eigen::VectorXd mode(const Distribution& dist);

enum class DistKind { kGaussian, kCategorical };
enum class KlDirection { kOldNew, kNewOld };

struct ScoreGradient {
  ParamSet grads;
  std::vector<LayerStats> stats;
};

// Scores of a minibatch: log-probabilities and everything needed to form
// weighted gradients of sum_i w_i log pi(a_i | s_i).
struct ScoreBatch {
  ForwardCache cache;
  Eigen::VectorXd log_probs;
  std::vector<Eigen::MatrixXd> deltas;
  Eigen::MatrixXd log_std_scores;  // action_dim x n; empty for categorical

  std::vector<LayerStats> layer_stats() const;
};

// Policy network with a state-independent log-std for Gaussian heads.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(std::vector<LayerSpec> specs, DistKind kind);

  const Mlp& net() const { return net_; }
  DistKind kind() const { return kind_; }
  int obs_dim() const { return net_.input_dim(); }
  // Continuous action dimension, or number of discrete actions.
  int action_size() const { return net_.output_dim(); }
  int log_std_dim() const { return kind_ == DistKind::kGaussian ? action_size() : 0; }
  // Stored action width: action_size for Gaussian, 1 for categorical.
  int action_width() const { return kind_ == DistKind::kGaussian ? action_size() : 1; }

  ParamSet init(Rng& rng, double output_gain = 0.01, double log_std_init = -0.5) const;

  Distribution distribution(const ParamSet& params, const Eigen::VectorXd& obs) const;
  Distribution distribution_from_output(const ParamSet& params,
                                        const Eigen::VectorXd& output) const;

  // Gradient of log pi(action | obs) for a single sample, using a cache
  // produced by net().forward on the same params and obs.
  ScoreGradient backward_log_prob(const ParamSet& params, const ForwardCache& cache,
                                  const Distribution& dist,
                                  const Eigen::VectorXd& action) const;

  // obs: obs_dim x n, actions: action_width x n.
  ScoreBatch score(const ParamSet& params, const Eigen::MatrixXd& obs,
                   const Eigen::MatrixXd& actions) const;
  // Sum over samples of weight_i * grad log pi(a_i | s_i).
  ParamSet weighted_gradient(const ScoreBatch& batch,
                             const Eigen::VectorXd& weights) const;

  Eigen::VectorXd log_probs(const ParamSet& params, const Eigen::MatrixXd& obs,
                            const Eigen::MatrixXd& actions) const;

  // Sample mean over obs columns of KL between the two parameterizations.
  double mean_kl(const ParamSet& old_params, const ParamSet& new_params,
                 const Eigen::MatrixXd& obs,
                 KlDirection direction = KlDirection::kOldNew) const;

 private:
  Mlp net_;
  DistKind kind_ = DistKind::kGaussian;
};

}  // namespace kfcpo

#endif  // KFCPO_NN_HPP_
