#include <Eigen/Core>
#include <cmath>

#include "ldct/error.hpp"
#include "ldct/ops.hpp"

namespace ldct::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_rows(const Var& v, const char* what) {
  require(v.shape().size() == 2, ErrorKind::kShape,
          std::string(what) + " must be a (rows, features) matrix, got " + shape_string(v.shape()));
}

double row_norm(const double* row, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += row[i] * row[i];
  return std::sqrt(s);
}

}  // namespace

Var gather_mean(const Var& x, const std::vector<std::vector<PixelRef>>& groups) {
  const auto& s = x.shape();
  require(s.size() == 4, ErrorKind::kShape, "gather_mean expects NCHW");
  const std::size_t channels = s[1], plane = s[2] * s[3];
  for (const auto& group : groups) {
    require(!group.empty(), ErrorKind::kInvalidArgument, "gather_mean: empty group");
    for (const auto& p : group)
      require(p.n < s[0] && p.y < s[2] && p.x < s[3], ErrorKind::kInvalidArgument, "gather_mean: pixel out of bounds");
  }
  Array out(Shape{groups.size(), channels});
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double w = 1.0 / static_cast<double>(groups[g].size());
    for (const auto& p : groups[g]) {
      const double* src = x.value().data() + p.n * channels * plane + p.y * s[3] + p.x;
      for (std::size_t c = 0; c < channels; ++c) out[g * channels + c] += w * src[c * plane];
    }
  }
  return make_op(std::move(out), {x}, [groups, channels, plane, width = s[3]](Node& self) {
    auto& gx = self.inputs[0]->grad_buffer();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double w = 1.0 / static_cast<double>(groups[g].size());
      for (const auto& p : groups[g]) {
        double* dst = gx.data() + p.n * channels * plane + p.y * width + p.x;
        for (std::size_t c = 0; c < channels; ++c) dst[c * plane] += w * self.grad[g * channels + c];
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rows(x, "linear input");
  require_rows(w, "linear weight");
  const std::size_t rows = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  require(w.shape()[1] == in, ErrorKind::kShape,
          "linear: weight expects " + std::to_string(w.shape()[1]) + " features, got " + std::to_string(in));
  require(b.shape() == Shape{out_dim}, ErrorKind::kShape, "linear: bias must have shape (O)");
  const auto ri = static_cast<Eigen::Index>(rows), ii = static_cast<Eigen::Index>(in),
             oi = static_cast<Eigen::Index>(out_dim);
  Array out(Shape{rows, out_dim});
  MatMap y(out.data(), ri, oi);
  y.noalias() = ConstMatMap(x.value().data(), ri, ii) * ConstMatMap(w.value().data(), oi, ii).transpose();
  for (Eigen::Index r = 0; r < ri; ++r)
    y.row(r) += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), oi);
  return make_op(std::move(out), {x, w, b}, [ri, ii, oi](Node& self) {
    ConstMatMap dy(self.grad.data(), ri, oi);
    if (self.wants_grad(0)) {
      MatMap dx(self.inputs[0]->grad_buffer().data(), ri, ii);
      dx.noalias() += dy * ConstMatMap(self.inputs[1]->value.data(), oi, ii);
    }
    if (self.wants_grad(1)) {
      MatMap dw(self.inputs[1]->grad_buffer().data(), oi, ii);
      dw.noalias() += dy.transpose() * ConstMatMap(self.inputs[0]->value.data(), ri, ii);
    }
    if (self.wants_grad(2)) {
      Eigen::Map<Eigen::RowVectorXd> db(self.inputs[2]->grad_buffer().data(), oi);
      db += dy.colwise().sum();
    }
  });
}

Var l2_normalize_rows(const Var& x) {
  require_rows(x, "l2_normalize_rows input");
  const std::size_t rows = x.shape()[0], k = x.shape()[1];
  Array out = x.value();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    norms[r] = row_norm(out.data() + r * k, k);
    require(norms[r] > 0.0, ErrorKind::kNumerical, "l2_normalize_rows: zero-norm row " + std::to_string(r));
    for (std::size_t i = 0; i < k; ++i) out[r * k + i] /= norms[r];
  }
  return make_op(std::move(out), {x}, [norms, rows, k](Node& self) {
    // y = x/|x|  ⇒  dx = (dy − y (y·dy)) / |x|
    auto& gx = self.inputs[0]->grad_buffer();
    const auto& xv = self.inputs[0]->value;
    for (std::size_t r = 0; r < rows; ++r) {
      const double inv = 1.0 / norms[r];
      double dot = 0.0;
      for (std::size_t i = 0; i < k; ++i) dot += xv[r * k + i] * inv * self.grad[r * k + i];
      for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += (self.grad[r * k + i] - xv[r * k + i] * inv * dot) * inv;
    }
  });
}

Var cosine_alignment_loss(const Var& pred, const Var& target) {
  require_rows(pred, "prediction");
  require(pred.value().same_shape(target.value()), ErrorKind::kShape, "cosine_alignment_loss: shape mismatch");
  const std::size_t rows = pred.shape()[0], k = pred.shape()[1];
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = pred.value().data() + r * k;
    const double* t = target.value().data() + r * k;
    const double np = row_norm(p, k), nt = row_norm(t, k);
    require(np > 0.0 && nt > 0.0, ErrorKind::kNumerical, "cosine_alignment_loss: zero-norm projection at query " +
                                                            std::to_string(r));
    double dot = 0.0;
    for (std::size_t i = 0; i < k; ++i) dot += p[i] * t[i];
    total += 2.0 - 2.0 * dot / (np * nt);
  }
  return make_op(Array(Shape{}, total), {pred, target}, [rows, k](Node& self) {
    const double g = self.grad[0];
    for (std::size_t side = 0; side < 2; ++side) {
      if (!self.wants_grad(side)) continue;
      const auto& self_v = self.inputs[side]->value;
      const auto& other_v = self.inputs[1 - side]->value;
      auto& dst = self.inputs[side]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* a = self_v.data() + r * k;
        const double* b = other_v.data() + r * k;
        const double na = row_norm(a, k), nb = row_norm(b, k);
        double dot = 0.0;
        for (std::size_t i = 0; i < k; ++i) dot += a[i] * b[i];
        const double cos = dot / (na * nb);
        // ∂cos/∂a = b/(|a||b|) − cos·a/|a|²
        for (std::size_t i = 0; i < k; ++i) dst[r * k + i] += -2.0 * g * (b[i] / (na * nb) - cos * a[i] / (na * na));
      }
    }
  });
}

Var info_nce(const Var& queries, const Var& positives, const Var& negatives, const std::vector<std::size_t>& offsets,
             double tau) {
  require(tau > 0.0, ErrorKind::kInvalidArgument, "info_nce: temperature must be positive");
  require_rows(queries, "queries");
  require(queries.value().same_shape(positives.value()), ErrorKind::kShape, "info_nce: query/positive mismatch");
  const std::size_t rows = queries.shape()[0], k = queries.shape()[1];
  require(offsets.size() == rows + 1 && offsets.front() == 0, ErrorKind::kInvalidArgument,
          "info_nce: offsets must have rows+1 entries starting at 0");
  const std::size_t neg_rows = offsets.back();
  if (neg_rows > 0) {
    require_rows(negatives, "negatives");
    require(negatives.shape()[0] == neg_rows && negatives.shape()[1] == k, ErrorKind::kShape,
            "info_nce: negatives shape does not match offsets");
  }
  auto dot = [k](const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += a[i] * b[i];
    return s;
  };

  // Softmax weights per query over [positive, negatives...], kept for backward.
  std::vector<double> probs(rows + neg_rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* q = queries.value().data() + r * k;
    const std::size_t count = offsets[r + 1] - offsets[r];
    std::vector<double> logits(count + 1);
    logits[0] = dot(q, positives.value().data() + r * k) / tau;
    for (std::size_t j = 0; j < count; ++j) logits[j + 1] = dot(q, negatives.value().data() + (offsets[r] + j) * k) / tau;
    double peak = logits[0];
    for (double l : logits) peak = std::max(peak, l);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - peak);
    total += peak + std::log(z) - logits[0];
    probs[r + offsets[r]] = std::exp(logits[0] - peak) / z;
    for (std::size_t j = 0; j < count; ++j) probs[r + offsets[r] + j + 1] = std::exp(logits[j + 1] - peak) / z;
  }

  std::vector<Var> inputs{queries, positives};
  if (neg_rows > 0) inputs.push_back(negatives);
  return make_op(Array(Shape{}, total), inputs, [=](Node& self) {
    const double g = self.grad[0];
    const auto& qv = self.inputs[0]->value;
    const auto& pv = self.inputs[1]->value;
    const bool has_neg = self.inputs.size() == 3;
    double* dq = self.wants_grad(0) ? self.inputs[0]->grad_buffer().data() : nullptr;
    double* dp = self.wants_grad(1) ? self.inputs[1]->grad_buffer().data() : nullptr;
    double* dn = has_neg && self.wants_grad(2) ? self.inputs[2]->grad_buffer().data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* q = qv.data() + r * k;
      const std::size_t count = offsets[r + 1] - offsets[r];
      const double* pr = probs.data() + r + offsets[r];
      // ∂loss/∂logit_0 = p_0 − 1, ∂loss/∂logit_j = p_j
      const double w0 = g * (pr[0] - 1.0) / tau;
      for (std::size_t i = 0; i < k; ++i) {
        if (dq) dq[r * k + i] += w0 * pv[r * k + i];
        if (dp) dp[r * k + i] += w0 * q[i];
      }
      for (std::size_t j = 0; j < count; ++j) {
        const double wj = g * pr[j + 1] / tau;
        const double* nrow = self.inputs[2]->value.data() + (offsets[r] + j) * k;
        for (std::size_t i = 0; i < k; ++i) {
          if (dq) dq[r * k + i] += wj * nrow[i];
          if (dn) dn[(offsets[r] + j) * k + i] += wj * q[i];
        }
      }
    }
  });
}

}  // namespace ldct::ad
