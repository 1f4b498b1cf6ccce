#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lima/common.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// Distillation and contrastive objectives
// ---------------------------------------------------------------------------
//
// Teacher rows are constants; every loss returns the exact gradient with
// respect to the student rows only.

struct LossOutput {
  double value = 0.0;
  FeatureMatrix grad_student;
};

namespace loss_detail {

inline void check_pair(const FeatureMatrix& teacher,
                       const FeatureMatrix& student) {
  if (!teacher.same_shape(student))
    throw InvalidInputError("loss: teacher/student shape mismatch");
  if (teacher.rows() == 0)
    throw InvalidInputError("loss: empty feature sets");
}

// Row-wise L2 normalization; zero-norm rows map to zero and report norm 0.
inline FeatureMatrix normalize_rows(const FeatureMatrix& m,
                                    std::vector<double>& norms) {
  FeatureMatrix out(m.rows(), m.cols());
  norms.assign(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    double n2 = 0.0;
    for (double v : in) n2 += v * v;
    const double n = std::sqrt(n2);
    norms[i] = n;
    if (n == 0.0) continue;
    auto o = out.row(i);
    for (std::size_t d = 0; d < m.cols(); ++d) o[d] = in[d] / n;
  }
  return out;
}

// Pulls a gradient on a normalized row back to the raw row:
// d(x/|x|)^T g = (g - x_hat (x_hat . g)) / |x|.
inline void denormalize_grad(std::span<const double> x_hat, double norm,
                             std::span<const double> g,
                             std::span<double> out) {
  if (norm == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  double dot = 0.0;
  for (std::size_t d = 0; d < g.size(); ++d) dot += x_hat[d] * g[d];
  for (std::size_t d = 0; d < g.size(); ++d)
    out[d] = (g[d] - x_hat[d] * dot) / norm;
}

// Shared InfoNCE core over explicit row index sets: student row j is scored
// against all teacher rows k with logits <t_k, s_j> / tau; the positive is
// k == j. Gradients flow to the student side only. Inputs are normalized
// internally.
inline LossOutput infonce_core(const FeatureMatrix& teacher,
                               const FeatureMatrix& student, double tau,
                               std::span<const std::uint32_t> rows) {
  const std::size_t m = rows.size();
  const std::size_t cols = teacher.cols();
  std::vector<double> tnorm, snorm;
  const FeatureMatrix t_hat = normalize_rows(teacher, tnorm);
  const FeatureMatrix s_hat = normalize_rows(student, snorm);

  LossOutput out;
  out.grad_student = FeatureMatrix(student.rows(), cols);
  std::vector<double> logits(m);
  std::vector<double> grad_hat(cols);

  for (std::size_t jj = 0; jj < m; ++jj) {
    const std::uint32_t j = rows[jj];
    const auto sj = s_hat.row(j);
    double max_logit = -1e300;
    for (std::size_t kk = 0; kk < m; ++kk) {
      const auto tk = t_hat.row(rows[kk]);
      double dot = 0.0;
      for (std::size_t d = 0; d < cols; ++d) dot += tk[d] * sj[d];
      logits[kk] = dot / tau;
      max_logit = std::max(max_logit, logits[kk]);
    }
    double sum_exp = 0.0;
    for (double& l : logits) {
      l = std::exp(l - max_logit);
      sum_exp += l;
    }
    // -log softmax at the positive (kk == jj)
    out.value += std::log(sum_exp) - std::log(logits[jj]);

    std::fill(grad_hat.begin(), grad_hat.end(), 0.0);
    for (std::size_t kk = 0; kk < m; ++kk) {
      const double p = logits[kk] / sum_exp;
      const double coeff = (p - (kk == jj ? 1.0 : 0.0)) / (tau * double(m));
      const auto tk = t_hat.row(rows[kk]);
      for (std::size_t d = 0; d < cols; ++d) grad_hat[d] += coeff * tk[d];
    }
    denormalize_grad(sj, snorm[j], grad_hat, out.grad_student.row(j));
  }
  out.value /= double(m);
  return out;
}

}  // namespace loss_detail

/// Mean Euclidean distance between paired rows (unsquared norm). The
/// zero-distance gradient is defined as zero.
inline LossOutput l2_distill(const FeatureMatrix& teacher,
                             const FeatureMatrix& student) {
  loss_detail::check_pair(teacher, student);
  const std::size_t m = teacher.rows(), cols = teacher.cols();
  LossOutput out;
  out.grad_student = FeatureMatrix(m, cols);
  for (std::size_t j = 0; j < m; ++j) {
    const auto t = teacher.row(j);
    const auto s = student.row(j);
    double n2 = 0.0;
    for (std::size_t d = 0; d < cols; ++d) {
      const double diff = s[d] - t[d];
      n2 += diff * diff;
    }
    const double n = std::sqrt(n2);
    out.value += n;
    if (n > 0.0) {
      auto g = out.grad_student.row(j);
      for (std::size_t d = 0; d < cols; ++d)
        g[d] = (s[d] - t[d]) / (n * double(m));
    }
  }
  out.value /= double(m);
  return out;
}

/// InfoNCE over all paired rows (standard negative log-softmax; rows are
/// normalized internally and scored by dot product at temperature tau).
inline LossOutput infonce(const FeatureMatrix& teacher,
                          const FeatureMatrix& student, double tau) {
  loss_detail::check_pair(teacher, student);
  if (tau <= 0.0) throw InvalidInputError("infonce: tau must be positive");
  std::vector<std::uint32_t> rows(teacher.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return loss_detail::infonce_core(teacher, student, tau, rows);
}

/// InfoNCE restricted to `num_pairs` rows sampled without replacement
/// (all rows when the set is smaller). Deterministic given the rng state.
inline LossOutput infonce_sampled(const FeatureMatrix& teacher,
                                  const FeatureMatrix& student, double tau,
                                  std::size_t num_pairs, Rng& rng) {
  loss_detail::check_pair(teacher, student);
  if (tau <= 0.0) throw InvalidInputError("infonce_sampled: tau must be positive");
  if (num_pairs < 1)
    throw InvalidInputError("infonce_sampled: num_pairs must be >= 1");
  const std::size_t n = teacher.rows();
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (num_pairs < n) {
    // partial Fisher-Yates
    for (std::size_t i = 0; i < num_pairs; ++i) {
      const std::size_t j = i + std::size_t(rng.below(n - i));
      std::swap(rows[i], rows[j]);
    }
    rows.resize(num_pairs);
  }
  return loss_detail::infonce_core(teacher, student, tau, rows);
}

/// Object-level temporal InfoNCE across two timestamps. Both sides are
/// student features, so gradients are returned for both.
struct TemporalLossOutput {
  double value = 0.0;
  FeatureMatrix grad_objects_t;
  FeatureMatrix grad_objects_t1;
};

inline TemporalLossOutput temporal_contrastive(const FeatureMatrix& objects_t,
                                               const FeatureMatrix& objects_t1,
                                               double tau) {
  if (objects_t.rows() == 0 || objects_t1.rows() == 0)
    throw EmptyInputError("temporal_contrastive: no objects");
  if (!objects_t.same_shape(objects_t1))
    throw InvalidInputError("temporal_contrastive: object set shape mismatch");
  if (tau <= 0.0)
    throw InvalidInputError("temporal_contrastive: tau must be positive");

  const std::size_t s = objects_t.rows(), cols = objects_t.cols();
  std::vector<double> norm_t, norm_t1;
  const FeatureMatrix a_hat = loss_detail::normalize_rows(objects_t, norm_t);
  const FeatureMatrix b_hat = loss_detail::normalize_rows(objects_t1, norm_t1);

  TemporalLossOutput out;
  out.grad_objects_t = FeatureMatrix(s, cols);
  out.grad_objects_t1 = FeatureMatrix(s, cols);
  FeatureMatrix grad_a_hat(s, cols);
  FeatureMatrix grad_b_hat(s, cols);

  std::vector<double> logits(s);
  for (std::size_t j = 0; j < s; ++j) {
    const auto bj = b_hat.row(j);
    double max_logit = -1e300;
    for (std::size_t k = 0; k < s; ++k) {
      const auto ak = a_hat.row(k);
      double dot = 0.0;
      for (std::size_t d = 0; d < cols; ++d) dot += ak[d] * bj[d];
      logits[k] = dot / tau;
      max_logit = std::max(max_logit, logits[k]);
    }
    double sum_exp = 0.0;
    for (double& l : logits) {
      l = std::exp(l - max_logit);
      sum_exp += l;
    }
    out.value += std::log(sum_exp) - std::log(logits[j]);
    for (std::size_t k = 0; k < s; ++k) {
      const double p = logits[k] / sum_exp;
      const double coeff = (p - (k == j ? 1.0 : 0.0)) / (tau * double(s));
      const auto ak = a_hat.row(k);
      auto ga = grad_a_hat.row(k);
      auto gb = grad_b_hat.row(j);
      for (std::size_t d = 0; d < cols; ++d) {
        gb[d] += coeff * ak[d];
        ga[d] += coeff * bj[d];
      }
    }
  }
  out.value /= double(s);
  for (std::size_t i = 0; i < s; ++i) {
    loss_detail::denormalize_grad(a_hat.row(i), norm_t[i], grad_a_hat.row(i),
                                  out.grad_objects_t.row(i));
    loss_detail::denormalize_grad(b_hat.row(i), norm_t1[i], grad_b_hat.row(i),
                                  out.grad_objects_t1.row(i));
  }
  return out;
}

/// Mean angular mismatch 1 - <t_hat, s_hat>; pairs with a zero-norm side are
/// excluded from the average.
inline LossOutput cosine_distill(const FeatureMatrix& teacher,
                                 const FeatureMatrix& student) {
  loss_detail::check_pair(teacher, student);
  const std::size_t n = teacher.rows(), cols = teacher.cols();
  std::vector<double> tnorm, snorm;
  const FeatureMatrix t_hat = loss_detail::normalize_rows(teacher, tnorm);
  const FeatureMatrix s_hat = loss_detail::normalize_rows(student, snorm);

  std::size_t valid = 0;
  for (std::size_t j = 0; j < n; ++j)
    if (tnorm[j] > 0.0 && snorm[j] > 0.0) ++valid;
  if (valid == 0)
    throw DegenerateInputError("cosine_distill: all rows have zero norm");

  LossOutput out;
  out.grad_student = FeatureMatrix(n, cols);
  std::vector<double> grad_hat(cols);
  for (std::size_t j = 0; j < n; ++j) {
    if (tnorm[j] == 0.0 || snorm[j] == 0.0) continue;
    const auto t = t_hat.row(j);
    const auto s = s_hat.row(j);
    double dot = 0.0;
    for (std::size_t d = 0; d < cols; ++d) dot += t[d] * s[d];
    out.value += 1.0 - dot;
    for (std::size_t d = 0; d < cols; ++d)
      grad_hat[d] = -t[d] / double(valid);
    loss_detail::denormalize_grad(s, snorm[j], grad_hat,
                                  out.grad_student.row(j));
  }
  out.value /= double(valid);
  return out;
}

/// Mean KL divergence between rows converted to distributions by a
/// temperature softmax over the channels: KL(p_teacher || p_student).
inline LossOutput kl_distill(const FeatureMatrix& teacher,
                             const FeatureMatrix& student, double tau) {
  loss_detail::check_pair(teacher, student);
  if (tau <= 0.0) throw InvalidInputError("kl_distill: tau must be positive");
  const std::size_t m = teacher.rows(), cols = teacher.cols();

  auto softmax_row = [&](std::span<const double> in, std::vector<double>& p) {
    double mx = -1e300;
    for (double v : in) mx = std::max(mx, v / tau);
    double sum = 0.0;
    for (std::size_t d = 0; d < cols; ++d) {
      p[d] = std::exp(in[d] / tau - mx);
      sum += p[d];
    }
    for (double& v : p) v /= sum;
  };

  LossOutput out;
  out.grad_student = FeatureMatrix(m, cols);
  std::vector<double> pt(cols), ps(cols);
  for (std::size_t j = 0; j < m; ++j) {
    softmax_row(teacher.row(j), pt);
    softmax_row(student.row(j), ps);
    double kl = 0.0;
    for (std::size_t d = 0; d < cols; ++d)
      if (pt[d] > 0.0) kl += pt[d] * (std::log(pt[d]) - std::log(ps[d]));
    out.value += kl;
    auto g = out.grad_student.row(j);
    for (std::size_t d = 0; d < cols; ++d)
      g[d] = -(pt[d] - ps[d]) / (tau * double(m));
  }
  out.value /= double(m);
  return out;
}

}  // namespace lima
