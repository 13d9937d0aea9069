#include "spot/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace spot {

namespace {

class UniformInit {
 public:
  explicit UniformInit(std::uint64_t seed) : rng_(seed) {}

  void fill(ParamTensor& t, double bound) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      t.value.data()[i] = (2.0 * u - 1.0) * bound;
    }
  }

 private:
  std::mt19937_64 rng_;
};

Matrix sigmoid_m(const Matrix& a) {
  return a.unaryExpr([](double x) { return sigmoid(x); });
}

Matrix tanh_m(const Matrix& a) {
  return a.unaryExpr([](double x) { return std::tanh(x); });
}

double year_offset(int year, const ModelConfig& config) {
  return config.year_mode == YearMode::Centered
             ? static_cast<double>(year - config.reference_year)
             : static_cast<double>(year);
}

struct AttentionCache {
  Matrix Q, K, V, O;
  std::vector<Matrix> attn;
};

// Y = X + Wo * concat_h(V_h softmax(Q_h^T K_h / sqrt(d))^T)
Matrix attend(const Matrix& X, const Theta2& th, int heads, AttentionCache& c) {
  const Eigen::Index p = X.rows();
  const Eigen::Index n = X.cols();
  const Eigen::Index d = p / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  c.Q = th.w_q.value * X;
  c.K = th.w_k.value * X;
  c.V = th.w_v.value * X;
  c.O.resize(p, n);
  c.attn.assign(heads, Matrix());
  for (int h = 0; h < heads; ++h) {
    const auto Qh = c.Q.middleRows(h * d, d);
    const auto Kh = c.K.middleRows(h * d, d);
    const auto Vh = c.V.middleRows(h * d, d);
    Matrix S = (Qh.transpose() * Kh) * scale;  // n x n
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = S.row(i).maxCoeff();
      S.row(i) = (S.row(i).array() - mx).exp().matrix();
      S.row(i) /= S.row(i).sum();
    }
    c.O.middleRows(h * d, d) = Vh * S.transpose();
    c.attn[h] = std::move(S);
  }
  return X + th.w_o.value * c.O;
}

// Returns dX; accumulates attention parameter grads.
Matrix attend_backward(const Matrix& X, const Matrix& dY, const AttentionCache& c,
                       Theta2& th, int heads) {
  const Eigen::Index p = X.rows();
  const Eigen::Index n = X.cols();
  const Eigen::Index d = p / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix dX = dY;
  th.w_o.grad.noalias() += dY * c.O.transpose();
  const Matrix dO = th.w_o.value.transpose() * dY;
  Matrix dQ(p, n), dK(p, n), dV(p, n);
  for (int h = 0; h < heads; ++h) {
    const Matrix& A = c.attn[h];
    const auto Qh = c.Q.middleRows(h * d, d);
    const auto Kh = c.K.middleRows(h * d, d);
    const auto Vh = c.V.middleRows(h * d, d);
    const auto dOh = dO.middleRows(h * d, d);
    dV.middleRows(h * d, d) = dOh * A;
    const Matrix dA = dOh.transpose() * Vh;  // n x n
    Matrix dS(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dot = dA.row(i).dot(A.row(i));
      dS.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
    }
    dS *= scale;
    dQ.middleRows(h * d, d) = Kh * dS.transpose();
    dK.middleRows(h * d, d) = Qh * dS;
  }
  th.w_q.grad.noalias() += dQ * X.transpose();
  th.w_k.grad.noalias() += dK * X.transpose();
  th.w_v.grad.noalias() += dV * X.transpose();
  dX.noalias() += th.w_q.value.transpose() * dQ;
  dX.noalias() += th.w_k.value.transpose() * dK;
  dX.noalias() += th.w_v.value.transpose() * dV;
  return dX;
}

struct CellCache {
  Vector z, r, n, h;
};

CellCache cell_forward(const Vector& x, const Vector& h_prev, const Theta2& th) {
  CellCache c;
  c.z = sigmoid_m(th.w_z.value * x + th.u_z.value * h_prev + th.b_z.value);
  c.r = sigmoid_m(th.w_r.value * x + th.u_r.value * h_prev + th.b_r.value);
  c.n = tanh_m(th.w_n.value * x + th.u_n.value * c.r.cwiseProduct(h_prev) +
               th.b_n.value);
  c.h = (Vector::Ones(c.z.size()) - c.z).cwiseProduct(c.n) + c.z.cwiseProduct(h_prev);
  return c;
}

// Returns (dx, dh_prev); accumulates cell grads.
std::pair<Vector, Vector> cell_backward(const Vector& x, const Vector& h_prev,
                                        const Vector& z, const Vector& r,
                                        const Vector& n, const Vector& dh,
                                        Theta2& th) {
  const Vector ones = Vector::Ones(z.size());
  Vector dh_prev = dh.cwiseProduct(z);
  const Vector dz = dh.cwiseProduct(h_prev - n);
  const Vector dn = dh.cwiseProduct(ones - z);
  const Vector dan = dn.cwiseProduct(ones - n.cwiseProduct(n));
  const Vector rh = r.cwiseProduct(h_prev);
  th.w_n.grad.noalias() += dan * x.transpose();
  th.u_n.grad.noalias() += dan * rh.transpose();
  th.b_n.grad += dan;
  const Vector drh = th.u_n.value.transpose() * dan;
  const Vector dr = drh.cwiseProduct(h_prev);
  dh_prev += drh.cwiseProduct(r);
  const Vector daz = dz.cwiseProduct(z.cwiseProduct(ones - z));
  th.w_z.grad.noalias() += daz * x.transpose();
  th.u_z.grad.noalias() += daz * h_prev.transpose();
  th.b_z.grad += daz;
  const Vector dar = dr.cwiseProduct(r.cwiseProduct(ones - r));
  th.w_r.grad.noalias() += dar * x.transpose();
  th.u_r.grad.noalias() += dar * h_prev.transpose();
  th.b_r.grad += dar;
  dh_prev.noalias() += th.u_z.value.transpose() * daz;
  dh_prev.noalias() += th.u_r.value.transpose() * dar;
  Vector dx = th.w_z.value.transpose() * daz;
  dx.noalias() += th.w_r.value.transpose() * dar;
  dx.noalias() += th.w_n.value.transpose() * dan;
  return {std::move(dx), std::move(dh_prev)};
}

Vector head_logits(const Matrix& H_tilde, const Matrix& H, const Theta2& th,
                   HeadInput input) {
  const Eigen::Index p = H.rows();
  const double b = th.head_b.value(0, 0);
  Vector logits = (th.head_w.value.leftCols(p) * H_tilde).transpose();
  if (input == HeadInput::Concat) {
    logits.noalias() += (th.head_w.value.rightCols(p) * H).transpose();
  }
  return logits.array() + b;
}

// Highway rows for each trial: columns 4i..4i+3 = h_d, h_t, h_c, h_y.
void build_rows(const StepView& step, const Theta1& th1,
                const ModelConfig& config, StepActivations& s) {
  const Eigen::Index p = config.p;
  const Eigen::Index M = static_cast<Eigen::Index>(step.size());
  s.rows.resize(p, 4 * M);
  s.flags.resize(3, M);
  s.year_offset.resize(M);
  const double off = year_offset(step.year, config);
  const Vector year_vec = off * th1.year_scale.value.col(0);
  for (Eigen::Index i = 0; i < M; ++i) {
    const TrialFeatures& f = *step.features[i];
    if (f.h_d.size() != p || f.h_t.size() != p || f.h_c.size() != p) {
      throw DataError("trial features have dimension " +
                      std::to_string(f.h_d.size()) + ", model expects " +
                      std::to_string(p));
    }
    for (int c = 0; c < 3; ++c) s.flags(c, i) = f.present[c] ? 1.0 : 0.0;
    s.year_offset[i] = off;
    s.rows.col(4 * i + 0) = f.h_d;
    s.rows.col(4 * i + 1) = f.h_t;
    s.rows.col(4 * i + 2) = f.h_c;
    s.rows.col(4 * i + 3) = year_vec + th1.flag_proj.value * s.flags.col(i);
  }
}

void highway_forward(const Theta1& th1, StepActivations& s) {
  const Eigen::Index M = s.rows.cols() / 4;
  s.gate = sigmoid_m((th1.gate_w.value * s.rows).colwise() + th1.gate_b.value.col(0));
  s.transform = tanh_m((th1.transform_w.value * s.rows).colwise() +
                       th1.transform_b.value.col(0));
  const Matrix out = s.gate.cwiseProduct(s.transform) +
                     (Matrix::Ones(s.gate.rows(), s.gate.cols()) - s.gate)
                         .cwiseProduct(s.rows);
  s.H.resize(s.rows.rows(), M);
  for (Eigen::Index i = 0; i < M; ++i) {
    s.H.col(i) = 0.25 * (out.col(4 * i) + out.col(4 * i + 1) +
                         out.col(4 * i + 2) + out.col(4 * i + 3));
  }
}

void highway_backward(const StepActivations& s, const Matrix& dH, Theta1& th1) {
  const Eigen::Index M = dH.cols();
  Matrix dout(s.rows.rows(), 4 * M);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (int r = 0; r < 4; ++r) dout.col(4 * i + r) = 0.25 * dH.col(i);
  }
  const Matrix ones = Matrix::Ones(s.gate.rows(), s.gate.cols());
  const Matrix dgate_a = dout.cwiseProduct(s.transform - s.rows)
                             .cwiseProduct(s.gate.cwiseProduct(ones - s.gate));
  const Matrix dtrans_a = dout.cwiseProduct(s.gate).cwiseProduct(
      ones - s.transform.cwiseProduct(s.transform));
  th1.gate_w.grad.noalias() += dgate_a * s.rows.transpose();
  th1.gate_b.grad += dgate_a.rowwise().sum();
  th1.transform_w.grad.noalias() += dtrans_a * s.rows.transpose();
  th1.transform_b.grad += dtrans_a.rowwise().sum();
  // Only the year/flag row depends on parameters upstream.
  for (Eigen::Index i = 0; i < M; ++i) {
    const Eigen::Index c = 4 * i + 3;
    Vector drow = dout.col(c).cwiseProduct(ones.col(c) - s.gate.col(c));
    drow.noalias() += th1.gate_w.value.transpose() * dgate_a.col(c);
    drow.noalias() += th1.transform_w.value.transpose() * dtrans_a.col(c);
    th1.year_scale.grad.col(0) += s.year_offset[i] * drow;
    th1.flag_proj.grad.noalias() += drow * s.flags.col(i).transpose();
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (p <= 0) throw ConfigError("model dimension p must be positive");
  if (heads <= 0 || p % heads != 0) {
    throw ConfigError("p=" + std::to_string(p) + " is not divisible by heads=" +
                      std::to_string(heads));
  }
}

Theta1 Theta1::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const int p = config.p;
  Theta1 t;
  t.gate_w = ParamTensor("theta1.highway.gate_w", p, p);
  t.gate_b = ParamTensor("theta1.highway.gate_b", p, 1);
  t.transform_w = ParamTensor("theta1.highway.transform_w", p, p);
  t.transform_b = ParamTensor("theta1.highway.transform_b", p, 1);
  t.year_scale = ParamTensor("theta1.year.scale", p, 1);
  t.flag_proj = ParamTensor("theta1.flags.proj", p, 3);
  UniformInit init(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(p));
  init.fill(t.gate_w, bound);
  init.fill(t.transform_w, bound);
  init.fill(t.year_scale, 0.1 * bound);
  init.fill(t.flag_proj, 1.0 / std::sqrt(3.0));
  t.gate_b.value.setConstant(config.gate_bias_init);
  return t;
}

std::vector<ParamTensor*> Theta1::params() {
  return {&gate_w, &gate_b, &transform_w, &transform_b, &year_scale, &flag_proj};
}

std::vector<const ParamTensor*> Theta1::params() const {
  return {&gate_w, &gate_b, &transform_w, &transform_b, &year_scale, &flag_proj};
}

Theta2 Theta2::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const int p = config.p;
  Theta2 t;
  t.w_z = ParamTensor("theta2.cell.w_z", p, p);
  t.u_z = ParamTensor("theta2.cell.u_z", p, p);
  t.b_z = ParamTensor("theta2.cell.b_z", p, 1);
  t.w_r = ParamTensor("theta2.cell.w_r", p, p);
  t.u_r = ParamTensor("theta2.cell.u_r", p, p);
  t.b_r = ParamTensor("theta2.cell.b_r", p, 1);
  t.w_n = ParamTensor("theta2.cell.w_n", p, p);
  t.u_n = ParamTensor("theta2.cell.u_n", p, p);
  t.b_n = ParamTensor("theta2.cell.b_n", p, 1);
  t.h0 = ParamTensor("theta2.cell.h0", p, 1);
  t.w_q = ParamTensor("theta2.attn.w_q", p, p);
  t.w_k = ParamTensor("theta2.attn.w_k", p, p);
  t.w_v = ParamTensor("theta2.attn.w_v", p, p);
  t.w_o = ParamTensor("theta2.attn.w_o", p, p);
  const int head_in = config.head_input == HeadInput::Concat ? 2 * p : p;
  t.head_w = ParamTensor("theta2.head.w", 1, head_in);
  t.head_b = ParamTensor("theta2.head.b", 1, 1);
  UniformInit init(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(p));
  for (ParamTensor* m : {&t.w_z, &t.u_z, &t.w_r, &t.u_r, &t.w_n, &t.u_n, &t.w_q,
                         &t.w_k, &t.w_v, &t.w_o}) {
    init.fill(*m, bound);
  }
  init.fill(t.head_w, 1.0 / std::sqrt(static_cast<double>(head_in)));
  return t;
}

std::vector<ParamTensor*> Theta2::params() {
  return {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_n, &u_n, &b_n,
          &h0,  &w_q, &w_k, &w_v, &w_o, &head_w, &head_b};
}

std::vector<const ParamTensor*> Theta2::params() const {
  return {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_n, &u_n, &b_n,
          &h0,  &w_q, &w_k, &w_v, &w_o, &head_w, &head_b};
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector year_embed(int year, int reference_year, const Vector& h_ts) {
  return static_cast<double>(year - reference_year) * h_ts;
}

Vector highway_fuse(const TrialFeatures& features, const Vector& year_vec,
                    const Theta1& theta1) {
  const Eigen::Index p = theta1.gate_w.value.rows();
  if (year_vec.size() != p || features.h_d.size() != p ||
      features.h_t.size() != p || features.h_c.size() != p) {
    throw DataError("highway_fuse: dimension mismatch");
  }
  StepActivations s;
  s.rows.resize(p, 4);
  Vector flags(3);
  for (int c = 0; c < 3; ++c) flags[c] = features.present[c] ? 1.0 : 0.0;
  s.rows.col(0) = features.h_d;
  s.rows.col(1) = features.h_t;
  s.rows.col(2) = features.h_c;
  s.rows.col(3) = year_vec + theta1.flag_proj.value * flags;
  highway_forward(theta1, s);
  return s.H.col(0);
}

std::vector<Vector> rnn_propagate(const std::vector<Vector>& step_means,
                                  const Theta2& theta2) {
  std::vector<Vector> states;
  Vector h = theta2.h0.value.col(0);
  for (const auto& m : step_means) {
    h = cell_forward(m, h, theta2).h;
    states.push_back(h);
  }
  return states;
}

AttentionOutput interaction_attend(const Vector& h_t, const Matrix& H_t,
                                   const Theta2& theta2, int heads) {
  const Eigen::Index p = h_t.size();
  if (heads <= 0 || p % heads != 0) {
    throw ConfigError("interaction_attend: p=" + std::to_string(p) +
                      " is not divisible by heads=" + std::to_string(heads));
  }
  if (H_t.rows() != p || H_t.cols() < 1) {
    throw DataError("interaction_attend: H_t must be p x M with M >= 1");
  }
  Matrix X(p, H_t.cols() + 1);
  X.col(0) = h_t;
  X.rightCols(H_t.cols()) = H_t;
  AttentionCache cache;
  Matrix Y = attend(X, theta2, heads, cache);
  return {Y.col(0), Y.rightCols(H_t.cols())};
}

Vector predict_head(const Matrix& H_tilde, const Matrix& H, const Theta2& theta2,
                    HeadInput input) {
  if (H_tilde.rows() != H.rows() || H_tilde.cols() != H.cols()) {
    throw DataError("predict_head: shape mismatch");
  }
  return head_logits(H_tilde, H, theta2, input).unaryExpr([](double x) {
    return sigmoid(x);
  });
}

double bce_loss(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw DataError("bce_loss: empty input");
  if (predictions.size() != labels.size()) {
    throw DataError("bce_loss: predictions and labels differ in length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double y = std::clamp(predictions[i], kBceEpsilon, 1.0 - kBceEpsilon);
    sum -= labels[i] ? std::log(y) : std::log(1.0 - y);
  }
  return sum / static_cast<double>(predictions.size());
}

std::size_t SequenceView::labeled_count() const {
  std::size_t n = 0;
  for (const auto& s : steps) {
    for (const auto& l : s.labels) n += l.has_value();
  }
  return n;
}

SequenceView SequenceView::prefix(std::size_t t) const {
  if (t < 1 || t > steps.size()) throw std::out_of_range("SequenceView::prefix");
  SequenceView v;
  v.topic = topic;
  v.steps.assign(steps.begin(), steps.begin() + static_cast<long>(t));
  return v;
}

std::size_t ForwardPass::labeled_count() const {
  std::size_t n = 0;
  for (const auto& s : steps) {
    for (const auto& l : s.labels) n += l.has_value();
  }
  return n;
}

double ForwardPass::loss() const {
  std::vector<double> preds;
  std::vector<int> labels;
  for (const auto& s : steps) {
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (!s.labels[i]) continue;
      preds.push_back(s.y_hat[static_cast<Eigen::Index>(i)]);
      labels.push_back(*s.labels[i]);
    }
  }
  if (preds.empty()) return 0.0;
  return bce_loss(preds, labels);
}

std::vector<double> ForwardPass::predictions() const {
  std::vector<double> out;
  for (const auto& s : steps) {
    for (Eigen::Index i = 0; i < s.y_hat.size(); ++i) out.push_back(s.y_hat[i]);
  }
  return out;
}

ForwardPass forward_sequence(const SequenceView& view, const Theta1& theta1,
                             const Theta2& theta2, const ModelConfig& config) {
  config.validate();
  const Eigen::Index p = config.p;
  ForwardPass pass;
  pass.steps.reserve(view.steps.size());
  Vector h = theta2.h0.value.col(0);
  for (const auto& step : view.steps) {
    if (step.size() == 0) throw DataError("forward_sequence: empty time step");
    if (step.labels.size() != step.size()) {
      throw DataError("forward_sequence: labels and features differ in length");
    }
    StepActivations s;
    s.labels = step.labels;
    build_rows(step, theta1, config, s);
    highway_forward(theta1, s);
    const Eigen::Index M = s.H.cols();
    s.step_mean = s.H.rowwise().mean();
    if (config.zero_history) {
      s.h = Vector::Zero(p);
    } else {
      s.h_prev = h;
      auto cell = cell_forward(s.step_mean, h, theta2);
      s.z = std::move(cell.z);
      s.r = std::move(cell.r);
      s.n = std::move(cell.n);
      s.h = cell.h;
      h = std::move(cell.h);
    }
    s.X.resize(p, M + 1);
    s.X.col(0) = s.h;
    s.X.rightCols(M) = s.H;
    AttentionCache cache;
    const Matrix Y = attend(s.X, theta2, config.heads, cache);
    s.Q = std::move(cache.Q);
    s.K = std::move(cache.K);
    s.V = std::move(cache.V);
    s.O = std::move(cache.O);
    s.attn = std::move(cache.attn);
    s.h_tilde = Y.col(0);
    s.H_tilde = Y.rightCols(M);
    s.logits = head_logits(s.H_tilde, s.H, theta2, config.head_input);
    s.y_hat = s.logits.unaryExpr([](double x) { return sigmoid(x); });
    pass.steps.push_back(std::move(s));
  }
  pass.complete = true;
  return pass;
}

void backward(const ForwardPass& pass, const ModelConfig& config, Theta2& theta2,
              Theta1* theta1) {
  if (!pass.complete) throw std::logic_error("backward called before forward");
  const std::size_t n_labeled = pass.labeled_count();
  if (n_labeled == 0) return;
  const double inv_n = 1.0 / static_cast<double>(n_labeled);
  const Eigen::Index p = config.p;
  Vector dh_carry = Vector::Zero(p);
  for (std::size_t t = pass.steps.size(); t-- > 0;) {
    const StepActivations& s = pass.steps[t];
    const Eigen::Index M = s.H.cols();
    // d loss / d logit, zero where the clamp is active.
    Vector dlogit = Vector::Zero(M);
    for (Eigen::Index i = 0; i < M; ++i) {
      const auto& label = s.labels[static_cast<std::size_t>(i)];
      if (!label) continue;
      const double y = s.y_hat[i];
      if (y < kBceEpsilon || y > 1.0 - kBceEpsilon) continue;
      dlogit[i] = (y - static_cast<double>(*label)) * inv_n;
    }
    theta2.head_b.grad(0, 0) += dlogit.sum();
    theta2.head_w.grad.leftCols(p).noalias() += dlogit.transpose() * s.H_tilde.transpose();
    Matrix dY(p, M + 1);
    dY.col(0).setZero();
    dY.rightCols(M).noalias() = theta2.head_w.value.leftCols(p).transpose() * dlogit.transpose();
    Matrix dH = Matrix::Zero(p, M);
    if (config.head_input == HeadInput::Concat) {
      theta2.head_w.grad.rightCols(p).noalias() += dlogit.transpose() * s.H.transpose();
      dH.noalias() += theta2.head_w.value.rightCols(p).transpose() * dlogit.transpose();
    }
    AttentionCache cache{s.Q, s.K, s.V, s.O, s.attn};
    const Matrix dX = attend_backward(s.X, dY, cache, theta2, config.heads);
    dH += dX.rightCols(M);
    if (!config.zero_history) {
      const Vector dh = dX.col(0) + dh_carry;
      auto [dmean, dh_prev] =
          cell_backward(s.step_mean, s.h_prev, s.z, s.r, s.n, dh, theta2);
      dH.colwise() += dmean / static_cast<double>(M);
      dh_carry = std::move(dh_prev);
    }
    if (theta1) highway_backward(s, dH, *theta1);
  }
  if (!config.zero_history) theta2.h0.grad.col(0) += dh_carry;
}

void write_tensors(const std::vector<const ParamTensor*>& tensors,
                   std::ostream& out) {
  for (const ParamTensor* t : tensors) {
    out << "tensor " << t->name << ' ' << t->value.rows() << ' '
        << t->value.cols() << '\n';
    for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t->value.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(t->value(r, c));
      }
      out << '\n';
    }
  }
}

void read_tensors(std::istream& in, const std::vector<ParamTensor*>& targets) {
  for (ParamTensor* t : targets) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint truncated before " + t->name);
    std::istringstream header(line);
    std::string tag, name;
    long long rows = 0, cols = 0;
    if (!(header >> tag >> name >> rows >> cols) || tag != "tensor") {
      throw DataError("expected tensor header for " + t->name + ", got '" + line + "'");
    }
    if (name != t->name || rows != t->value.rows() || cols != t->value.cols()) {
      throw DataError("checkpoint tensor " + name + " (" + std::to_string(rows) +
                      "x" + std::to_string(cols) + ") does not match " + t->name);
    }
    for (long long r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw DataError("checkpoint truncated in " + name);
      std::istringstream row(line);
      for (long long c = 0; c < cols; ++c) {
        std::string tok;
        if (!(row >> tok)) throw DataError("short tensor row in " + name);
        t->value(r, c) = parse_double(tok);
      }
    }
    t->zero_grad();
  }
}

}  // namespace spot
