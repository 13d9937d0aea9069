#pragma once

#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spot/common.hpp"
#include "spot/trial_store.hpp"

namespace spot {

// Layout convention: per-item embeddings are stored as columns, so a
// timestep with M trials is a p x M matrix and the attention stack
// [h_t, H_t] is p x (M+1) with the temporal state in column 0.

/// A learnable tensor with its gradient accumulator.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string name, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(name)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

enum class YearMode { Centered, Raw };
enum class HeadInput { Concat, AdjustedOnly };

struct ModelConfig {
  int p = 16;
  int heads = 2;
  int reference_year = 2000;
  YearMode year_mode = YearMode::Centered;
  HeadInput head_input = HeadInput::Concat;
  // Replace the temporal state with zeros (sequence ablation).
  bool zero_history = false;
  double gate_bias_init = -1.0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Static trial embedding parameters, shared by every task.
struct Theta1 {
  ParamTensor gate_w, gate_b;            // carry gate T(x) = sigmoid(W x + b)
  ParamTensor transform_w, transform_b;  // N(x) = tanh(W x + b)
  ParamTensor year_scale;                // h_ts
  ParamTensor flag_proj;                 // p x 3 missingness projection

  static Theta1 init(const ModelConfig& config, std::uint64_t seed);
  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
};

/// Sequential model parameters, copied per task for adaptation.
struct Theta2 {
  // Gated recurrent cell over step means.
  ParamTensor w_z, u_z, b_z;
  ParamTensor w_r, u_r, b_r;
  ParamTensor w_n, u_n, b_n;
  ParamTensor h0;
  // Multi-head interaction attention.
  ParamTensor w_q, w_k, w_v, w_o;
  // Prediction head over [adjusted ; static] (or adjusted only).
  ParamTensor head_w, head_b;

  static Theta2 init(const ModelConfig& config, std::uint64_t seed);
  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
};

template <typename Theta>
void zero_grads(Theta& theta) {
  for (auto* t : theta.params()) t->zero_grad();
}

/// Max absolute elementwise difference between two parameter sets.
template <typename Theta>
double max_abs_diff(const Theta& a, const Theta& b) {
  auto pa = a.params();
  auto pb = b.params();
  double m = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    m = std::max(m, (pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff());
  }
  return m;
}

template <typename Theta>
bool bit_equal(const Theta& a, const Theta& b) {
  auto pa = a.params();
  auto pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value.size() != pb[i]->value.size()) return false;
    if (std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                    sizeof(double) * pa[i]->value.size()) != 0) {
      return false;
    }
  }
  return true;
}

/// value -= lr * grad for every tensor.
template <typename Theta>
void sgd_step(Theta& theta, double lr) {
  for (auto* t : theta.params()) t->value -= lr * t->grad;
}

// ---------------------------------------------------------------------------
// Building blocks

inline constexpr double kBceEpsilon = 1e-7;

double sigmoid(double x);

/// (year - reference_year) * h_ts.
Vector year_embed(int year, int reference_year, const Vector& h_ts);

/// Mean of the shared highway applied to the rows [h_d, h_t, h_c, h_y] where
/// h_y = year_vec + flag_proj * present.
Vector highway_fuse(const TrialFeatures& features, const Vector& year_vec,
                    const Theta1& theta1);

/// Hidden state after each step mean, starting from the learned h0.
std::vector<Vector> rnn_propagate(const std::vector<Vector>& step_means,
                                  const Theta2& theta2);

struct AttentionOutput {
  Vector h_tilde;
  Matrix H_tilde;  // p x M
};

/// Multi-head self-attention over [h_t, H_t] with a residual connection.
AttentionOutput interaction_attend(const Vector& h_t, const Matrix& H_t,
                                   const Theta2& theta2, int heads);

/// sigmoid(w . [H_tilde_i ; H_i] + b) per column.
Vector predict_head(const Matrix& H_tilde, const Matrix& H,
                    const Theta2& theta2, HeadInput input = HeadInput::Concat);

/// Mean binary cross entropy with predictions clamped to [eps, 1 - eps].
double bce_loss(std::span<const double> predictions, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Whole-sequence forward / backward

struct StepView {
  int year = 0;
  std::vector<std::string> ids;
  std::vector<const TrialFeatures*> features;  // not owned
  std::vector<std::optional<int>> labels;      // nullopt: no loss term

  std::size_t size() const { return features.size(); }
};

struct SequenceView {
  int topic = 0;
  std::vector<StepView> steps;

  std::size_t labeled_count() const;
  SequenceView prefix(std::size_t t) const;
};

/// Per-step activations kept for backprop.
struct StepActivations {
  // Highway inputs and gates for the 4 rows of every trial, trial-major:
  // column 4*i + r is row r of trial i.
  Matrix rows, gate, transform;
  Vector year_offset;       // per trial: year - reference (or raw year)
  Matrix flags;             // 3 x M
  Matrix H;                 // p x M static embeddings
  Vector step_mean;
  Vector h_prev, z, r, n;   // recurrent cell
  Vector h;                 // temporal state h^(t)
  Matrix X;                 // p x (M+1) attention input
  Matrix Q, K, V, O;
  std::vector<Matrix> attn;  // per head, (M+1) x (M+1), row i attends over j
  Vector h_tilde;
  Matrix H_tilde;           // p x M
  Vector logits;
  Vector y_hat;             // predictions in (0, 1)
  std::vector<std::optional<int>> labels;
};

struct ForwardPass {
  std::vector<StepActivations> steps;
  bool complete = false;

  double loss() const;  // mean BCE over labeled trials; 0 if none
  std::size_t labeled_count() const;
  std::vector<double> predictions() const;  // step-major flattening
};

ForwardPass forward_sequence(const SequenceView& view, const Theta1& theta1,
                             const Theta2& theta2, const ModelConfig& config);

/// Accumulates d(mean BCE)/d(params) into the grad fields. Pass
/// `theta1 = nullptr` to treat the static embedding as frozen. The thetas
/// must be the ones used for the forward pass.
void backward(const ForwardPass& pass, const ModelConfig& config,
              Theta2& theta2, Theta1* theta1);

// ---------------------------------------------------------------------------
// Tensor persistence: `tensor <name> <rows> <cols>` followed by rows of
// shortest round-trip decimals.

void write_tensors(const std::vector<const ParamTensor*>& tensors,
                   std::ostream& out);
/// Reads tensors into `targets` by name and shape; throws DataError on
/// mismatch.
void read_tensors(std::istream& in, const std::vector<ParamTensor*>& targets);

}  // namespace spot
