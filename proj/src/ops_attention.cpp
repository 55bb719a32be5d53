#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "ldct/error.hpp"
#include "ldct/ops.hpp"

namespace ldct::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void softmax_rows(RowMat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double peak = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - peak).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// Rows divided by max(|row|, floor); the norms are kept for the backward pass.
RowMat normalized_rows(const ConstMatMap& m, Eigen::VectorXd& norms) {
  norms = m.rowwise().norm().cwiseMax(kQkNormFloor);
  return norms.cwiseInverse().asDiagonal() * m;
}

// Gradient through y = x / max(|x|, floor) given dy, row by row.
RowMat normalized_rows_backward(const RowMat& y, const Eigen::VectorXd& norms, const RowMat& dy) {
  RowMat dx = dy;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    if (norms[r] > kQkNormFloor) dx.row(r) -= y.row(r) * y.row(r).dot(dy.row(r));
    dx.row(r) /= norms[r];
  }
  return dx;
}

}  // namespace

std::size_t AttentionTrace::total_map_elements() const {
  std::size_t total = 0;
  for (const auto& m : maps) total += m.rows * m.cols;
  return total;
}

Var channel_attention_core(const Var& qkv, const Var& alpha, std::size_t heads, AttentionTrace* trace,
                           bool normalize_qk) {
  const auto& s = qkv.shape();
  require(s.size() == 4 && s[1] % 3 == 0, ErrorKind::kShape, "attention core expects (N, 3C, H, W)");
  const std::size_t batch = s[0], channels = s[1] / 3, pixels = s[2] * s[3];
  require(heads >= 1 && channels % heads == 0, ErrorKind::kShape,
          "head count " + std::to_string(heads) + " does not divide " + std::to_string(channels) + " channels");
  require(alpha.shape() == Shape{heads}, ErrorKind::kShape, "alpha must hold one value per head");
  const std::size_t c = channels / heads;
  const auto ci = static_cast<Eigen::Index>(c), pi = static_cast<Eigen::Index>(pixels);

  auto maps = std::make_shared<std::vector<RowMat>>(batch * heads);
  Array out(Shape{batch, channels, s[2], s[3]});
  const double* base = qkv.value().data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t h = 0; h < heads; ++h) {
      const double a = alpha.value()[h];
      require(std::isfinite(a) && a != 0.0, ErrorKind::kNumerical, "attention temperature must be finite and nonzero");
      ConstMatMap q(base + (n * 3 * channels + h * c) * pixels, ci, pi);
      ConstMatMap k(base + (n * 3 * channels + channels + h * c) * pixels, ci, pi);
      ConstMatMap v(base + (n * 3 * channels + 2 * channels + h * c) * pixels, ci, pi);
      RowMat& attn = (*maps)[n * heads + h];
      if (normalize_qk) {
        Eigen::VectorXd qn, kn;
        attn.noalias() = normalized_rows(k, kn) * normalized_rows(q, qn).transpose();
      } else {
        attn.noalias() = k * q.transpose();
      }
      attn /= a;
      softmax_rows(attn);
      MatMap o(out.data() + (n * channels + h * c) * pixels, ci, pi);
      o.noalias() = attn.transpose() * v;
      if (trace) {
        double worst = 0.0;
        for (Eigen::Index r = 0; r < attn.rows(); ++r) worst = std::max(worst, std::abs(attn.row(r).sum() - 1.0));
        trace->maps.push_back({static_cast<std::size_t>(attn.rows()), static_cast<std::size_t>(attn.cols()), worst});
      }
    }

  return make_op(std::move(out), {qkv, alpha}, [=](Node& self) {
    const double* xv = self.inputs[0]->value.data();
    const bool want_x = self.wants_grad(0), want_a = self.wants_grad(1);
    double* dx = want_x ? self.inputs[0]->grad_buffer().data() : nullptr;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t h = 0; h < heads; ++h) {
        const double a = self.inputs[1]->value[h];
        const RowMat& attn = (*maps)[n * heads + h];
        ConstMatMap q(xv + (n * 3 * channels + h * c) * pixels, ci, pi);
        ConstMatMap k(xv + (n * 3 * channels + channels + h * c) * pixels, ci, pi);
        ConstMatMap v(xv + (n * 3 * channels + 2 * channels + h * c) * pixels, ci, pi);
        ConstMatMap dout(self.grad.data() + (n * channels + h * c) * pixels, ci, pi);

        const RowMat d_attn = v * dout.transpose();
        RowMat d_scores = attn.cwiseProduct(d_attn);
        const Eigen::VectorXd row_dot = d_scores.rowwise().sum();
        d_scores = attn.cwiseProduct(d_attn.colwise() - row_dot);  // softmax Jacobian, row-wise

        Eigen::VectorXd qn, kn;
        const RowMat qh = normalize_qk ? normalized_rows(q, qn) : RowMat(q);
        const RowMat kh = normalize_qk ? normalized_rows(k, kn) : RowMat(k);
        if (want_a) {
          // scores = K Qᵀ / a  ⇒  ∂scores/∂a = −scores / a
          const RowMat scores = (kh * qh.transpose()) / a;
          self.inputs[1]->grad_buffer()[h] -= (d_scores.cwiseProduct(scores)).sum() / a;
        }
        if (want_x) {
          MatMap dq(dx + (n * 3 * channels + h * c) * pixels, ci, pi);
          MatMap dk(dx + (n * 3 * channels + channels + h * c) * pixels, ci, pi);
          MatMap dv(dx + (n * 3 * channels + 2 * channels + h * c) * pixels, ci, pi);
          dv.noalias() += attn * dout;
          RowMat dkh = (d_scores / a) * qh, dqh = (d_scores / a).transpose() * kh;
          if (normalize_qk) {
            dkh = normalized_rows_backward(kh, kn, dkh);
            dqh = normalized_rows_backward(qh, qn, dqh);
          }
          dk += dkh;
          dq += dqh;
        }
      }
  });
}

}  // namespace ldct::ad
