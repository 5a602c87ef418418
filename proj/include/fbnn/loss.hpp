#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fbnn/core.hpp"
#include "fbnn/qat.hpp"
#include "fbnn/tensor.hpp"

namespace fbnn {

constexpr double kProbClamp = 1e-12;

// w_i = C * (1/f_i) / sum_j (1/f_j) with f_i = n_i / N; sums to C exactly and
// is invariant to rescaling all counts.
inline std::vector<double> class_weights(const std::vector<int64_t>& counts) {
  const size_t c = counts.size();
  check_cfg(c >= 1, "class_weights: need at least one class");
  double invSum = 0.0;
  for (int64_t n : counts) {
    check_cfg(n >= 1, "class_weights: every present class needs a positive count");
    invSum += 1.0 / static_cast<double>(n);
  }
  std::vector<double> w(c);
  for (size_t i = 0; i < c; ++i)
    w[i] = static_cast<double>(c) * (1.0 / static_cast<double>(counts[i])) / invSum;
  return w;
}

// Row-wise softmax with max-shift; logits {B, C}.
inline Tensor softmax_rows(const Tensor& logits) {
  check_dim(logits.shape.size() == 2, "softmax_rows: expected {B, C}");
  const int64_t b = logits.shape[0], c = logits.shape[1];
  Tensor p(logits.shape);
  for (int64_t i = 0; i < b; ++i) {
    double mx = logits[i * c];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      p[i * c + j] = std::exp(logits[i * c + j] - mx);
      sum += p[i * c + j];
    }
    for (int64_t j = 0; j < c; ++j) p[i * c + j] /= sum;
  }
  return p;
}

struct LossGrad {
  double loss = 0.0;
  Tensor grad;  // d loss / d input (logits or embeddings)
};

// Class-weighted categorical cross-entropy on logits:
//   -(1/B) sum_i w_{y_i} log p_{i,y_i}
inline LossGrad weighted_cce(const Tensor& logits, const std::vector<int>& labels,
                             const std::vector<double>& w) {
  const int64_t b = logits.shape[0], c = logits.shape[1];
  check_dim(static_cast<int64_t>(labels.size()) == b, "weighted_cce: label count != batch");
  const Tensor p = softmax_rows(logits);
  LossGrad out;
  out.grad = Tensor(logits.shape);
  for (int64_t i = 0; i < b; ++i) {
    const int y = labels[i];
    check_dim(y >= 0 && y < c, "weighted_cce: label out of range");
    const double wi = w[y];
    out.loss -= wi * std::log(std::max(p[i * c + y], kProbClamp));
    for (int64_t j = 0; j < c; ++j)
      out.grad[i * c + j] = wi / b * (p[i * c + j] - (j == y ? 1.0 : 0.0));
  }
  out.loss /= static_cast<double>(b);
  return out;
}

// Focal variant: the per-sample term gains a (1 - p_true)^nu factor; nu = 0
// recovers weighted_cce exactly.
inline LossGrad focal_cce(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<double>& w, double nu = 2.0) {
  const int64_t b = logits.shape[0], c = logits.shape[1];
  check_dim(static_cast<int64_t>(labels.size()) == b, "focal_cce: label count != batch");
  const Tensor p = softmax_rows(logits);
  LossGrad out;
  out.grad = Tensor(logits.shape);
  for (int64_t i = 0; i < b; ++i) {
    const int y = labels[i];
    check_dim(y >= 0 && y < c, "focal_cce: label out of range");
    const double wi = w[y];
    const double pt = std::max(p[i * c + y], kProbClamp);
    const double focal = nu == 0.0 ? 1.0 : std::pow(1.0 - pt, nu);
    out.loss += wi * focal * (-std::log(pt));
    // dL_i/dp_t, then chain through softmax: dp_t/dz_j = p_t([j==y] - p_j)
    const double dfocal = nu == 0.0 ? 0.0 : -nu * std::pow(1.0 - pt, nu - 1.0);
    const double dLdpt = wi * (dfocal * (-std::log(pt)) - focal / pt);
    for (int64_t j = 0; j < c; ++j)
      out.grad[i * c + j] = dLdpt / b * pt * ((j == y ? 1.0 : 0.0) - p[i * c + j]);
  }
  out.loss /= static_cast<double>(b);
  return out;
}

// One-vs-all squared hinge on logits with per-output-class weights:
//   (1/B) sum_i sum_c w_c max(0, 1 - z_{i,c} y_{i,c})^2,  y in {-1,+1}.
inline LossGrad squared_hinge(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& w) {
  const int64_t b = logits.shape[0], c = logits.shape[1];
  check_dim(static_cast<int64_t>(labels.size()) == b, "squared_hinge: label count != batch");
  LossGrad out;
  out.grad = Tensor(logits.shape);
  for (int64_t i = 0; i < b; ++i) {
    const int label = labels[i];
    check_dim(label >= 0 && label < c, "squared_hinge: label out of range");
    for (int64_t j = 0; j < c; ++j) {
      const double y = (j == label) ? 1.0 : -1.0;
      const double margin = std::max(0.0, 1.0 - logits[i * c + j] * y);
      out.loss += w[j] * margin * margin;
      out.grad[i * c + j] = -2.0 * w[j] * y * margin / b;
    }
  }
  out.loss /= static_cast<double>(b);
  return out;
}

// Per-dimension batch standardization of a {B, D} tensor, with the context
// needed to backpropagate through mean and variance.
struct StandardizeCtx {
  Tensor u;                  // standardized output
  std::vector<double> s;     // per-dim std (clamped)
  std::vector<bool> varOk;   // false where variance hit the clamp
};

inline void standardize_forward(const Tensor& x, StandardizeCtx& ctx, double eps = 1e-12) {
  const int64_t b = x.shape[0], d = x.shape[1];
  check_dim(b >= 2, "standardize_forward: need batch >= 2");
  ctx.u = Tensor(x.shape);
  ctx.s.assign(d, 1.0);
  ctx.varOk.assign(d, true);
  for (int64_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (int64_t i = 0; i < b; ++i) mu += x[i * d + j];
    mu /= static_cast<double>(b);
    double var = 0.0;
    for (int64_t i = 0; i < b; ++i) {
      const double dv = x[i * d + j] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(b);
    ctx.varOk[j] = var > eps;
    ctx.s[j] = std::sqrt(std::max(var, eps));
    for (int64_t i = 0; i < b; ++i) ctx.u[i * d + j] = (x[i * d + j] - mu) / ctx.s[j];
  }
}

inline Tensor standardize_backward(const Tensor& g, const StandardizeCtx& ctx) {
  const int64_t b = g.shape[0], d = g.shape[1];
  Tensor dx(g.shape);
  for (int64_t j = 0; j < d; ++j) {
    double gMean = 0.0, guMean = 0.0;
    for (int64_t i = 0; i < b; ++i) {
      gMean += g[i * d + j];
      guMean += g[i * d + j] * ctx.u[i * d + j];
    }
    gMean /= static_cast<double>(b);
    guMean /= static_cast<double>(b);
    for (int64_t i = 0; i < b; ++i) {
      // variance path drops out where the clamp froze s
      const double center = ctx.varOk[j] ? ctx.u[i * d + j] * guMean : 0.0;
      dx[i * d + j] = (g[i * d + j] - gMean - center) / ctx.s[j];
    }
  }
  return dx;
}

struct BarlowGrad {
  double loss = 0.0;
  Tensor g1, g2;  // d loss / d z1, z2 (through the standardization)
};

// Barlow-Twins redundancy reduction on two projector output batches {B, D}:
// standardize per dimension, C = (1/B) u1^T u2, then
//   loss = sum_d (1 - C_dd)^2 + lambda * sum_{i != j} C_ij^2.
inline BarlowGrad barlow_twins(const Tensor& z1, const Tensor& z2, double lambda = 1e-5) {
  check_dim(z1.shape == z2.shape && z1.shape.size() == 2, "barlow_twins: need matching {B, D}");
  const int64_t b = z1.shape[0], d = z1.shape[1];
  StandardizeCtx c1, c2;
  standardize_forward(z1, c1);
  standardize_forward(z2, c2);

  Tensor cm(Shape{d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < b; ++k) acc += c1.u[k * d + i] * c2.u[k * d + j];
      cm[i * d + j] = acc / static_cast<double>(b);
    }

  BarlowGrad out;
  Tensor dC(Shape{d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      if (i == j) {
        const double diff = 1.0 - cm[i * d + j];
        out.loss += diff * diff;
        dC[i * d + j] = -2.0 * diff;
      } else {
        out.loss += lambda * cm[i * d + j] * cm[i * d + j];
        dC[i * d + j] = 2.0 * lambda * cm[i * d + j];
      }
    }

  Tensor gu1(z1.shape), gu2(z2.shape);
  for (int64_t k = 0; k < b; ++k)
    for (int64_t i = 0; i < d; ++i) {
      double a1 = 0.0, a2 = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        a1 += dC[i * d + j] * c2.u[k * d + j];  // dL/du1[k,i]
        a2 += dC[j * d + i] * c1.u[k * d + j];  // dL/du2[k,i]
      }
      gu1[k * d + i] = a1 / static_cast<double>(b);
      gu2[k * d + i] = a2 / static_cast<double>(b);
    }
  out.g1 = standardize_backward(gu1, c1);
  out.g2 = standardize_backward(gu2, c2);
  return out;
}

// Feature regularizer on a latent batch {B, D}. Default: mean magnitude of the
// per-dimension batch sum, (1/(D*B)) sum_d |sum_b z_{b,d}|; the signed variant
// drops the absolute value (kept behind a switch for comparison).
inline LossGrad feature_reg(const Tensor& z, bool signedVariant = false) {
  check_dim(z.shape.size() == 2, "feature_reg: expected {B, D}");
  const int64_t b = z.shape[0], d = z.shape[1];
  LossGrad out;
  out.grad = Tensor(z.shape);
  const double norm = 1.0 / (static_cast<double>(d) * b);
  for (int64_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (int64_t i = 0; i < b; ++i) sum += z[i * d + j];
    const double g = signedVariant ? 1.0 : (sum > 0.0 ? 1.0 : (sum < 0.0 ? -1.0 : 0.0));
    out.loss += norm * (signedVariant ? sum : std::abs(sum));
    for (int64_t i = 0; i < b; ++i) out.grad[i * d + j] = norm * g;
  }
  return out;
}

// Pre-training objective: alpha * supervised + beta * redundancy + gamma *
// feature regularizer (component losses/grads combine linearly).
inline double combine_losses(double alpha, double cce, double beta, double ssl, double gamma,
                             double freg) {
  return alpha * cce + beta * ssl + gamma * freg;
}

// Real-valued projector head used only during pre-training: two dense layers,
// each followed by batch standardization and a rectifier. Never binarized.
struct Projector {
  int inDim = 1024;
  int hidden = 2048;
  RealParam w1, w2;  // {hidden, inDim}, {hidden, hidden}

  struct Ctx {
    Tensor x, h1, a1, h2;
    StandardizeCtx s1, s2;
    Tensor out;
  };

  void init(int in, int hid, Rng& rng) {
    inDim = in;
    hidden = hid;
    w1 = RealParam(Shape{hidden, inDim});
    w2 = RealParam(Shape{hidden, hidden});
    std::normal_distribution<double> g1(0.0, std::sqrt(2.0 / (inDim + hidden)));
    std::normal_distribution<double> g2(0.0, std::sqrt(2.0 / (hidden + hidden)));
    for (auto& w : w1.w) w = g1(rng);
    for (auto& w : w2.w) w = g2(rng);
  }

  static Tensor dense(const Tensor& x, const RealParam& w) {
    const int64_t b = x.shape[0], in = x.shape[1], out = w.shape[0];
    check_dim(w.shape[1] == in, "Projector::dense: fan-in mismatch");
    Tensor y(Shape{b, out});
    for (int64_t i = 0; i < b; ++i)
      for (int64_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (int64_t k = 0; k < in; ++k) acc += w.w[o * in + k] * x[i * in + k];
        y[i * out + o] = acc;
      }
    return y;
  }

  // accumulate dL/dW and return dL/dx for y = x W^T
  static Tensor dense_backward(const Tensor& gy, const Tensor& x, RealParam& w) {
    const int64_t b = x.shape[0], in = x.shape[1], out = w.shape[0];
    for (int64_t o = 0; o < out; ++o)
      for (int64_t k = 0; k < in; ++k) {
        double acc = 0.0;
        for (int64_t i = 0; i < b; ++i) acc += gy[i * out + o] * x[i * in + k];
        w.grad[o * in + k] += acc;
      }
    Tensor gx(x.shape);
    for (int64_t i = 0; i < b; ++i)
      for (int64_t k = 0; k < in; ++k) {
        double acc = 0.0;
        for (int64_t o = 0; o < out; ++o) acc += gy[i * out + o] * w.w[o * in + k];
        gx[i * in + k] = acc;
      }
    return gx;
  }

  Tensor forward(const Tensor& x, Ctx& ctx) {
    ctx.x = x;
    ctx.h1 = dense(x, w1);
    standardize_forward(ctx.h1, ctx.s1);
    ctx.a1 = ctx.s1.u;
    for (auto& v : ctx.a1.v) v = std::max(0.0, v);
    ctx.h2 = dense(ctx.a1, w2);
    standardize_forward(ctx.h2, ctx.s2);
    ctx.out = ctx.s2.u;
    for (auto& v : ctx.out.v) v = std::max(0.0, v);
    return ctx.out;
  }

  Tensor backward(const Tensor& gOut, Ctx& ctx) {
    Tensor g2r = gOut;
    for (int64_t i = 0; i < g2r.size(); ++i)
      if (ctx.s2.u[i] <= 0.0) g2r[i] = 0.0;
    const Tensor gh2 = standardize_backward(g2r, ctx.s2);
    Tensor ga1 = dense_backward(gh2, ctx.a1, w2);
    for (int64_t i = 0; i < ga1.size(); ++i)
      if (ctx.s1.u[i] <= 0.0) ga1[i] = 0.0;
    const Tensor gh1 = standardize_backward(ga1, ctx.s1);
    return dense_backward(gh1, ctx.x, w1);
  }
};

}  // namespace fbnn
