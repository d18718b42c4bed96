#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "igmn/autodiff.hpp"
#include "igmn/geometry.hpp"
#include "igmn/records.hpp"

namespace igmn {

constexpr double kPredClampLo = 1e-7;
constexpr double kPredClampHi = 1.0 - 1e-7;

// The five training objectives plus their weighted sum. total always equals
// total_of(...) applied to the components.
struct LossReport {
  double cls_sem = 0.0;
  double cls_idt = 0.0;
  double prior_sem = 0.0;
  double prior_idt = 0.0;
  double cls_fuse = 0.0;
  double total = 0.0;
  double lambda_aux = 0.5;

  static double total_of(double fuse, double sem, double idt, double p_sem, double p_idt,
                         double lambda) {
    return fuse + lambda * (((sem + idt) + p_sem) + p_idt);
  }

  bool identity_holds() const {
    return total == total_of(cls_fuse, cls_sem, cls_idt, prior_sem, prior_idt, lambda_aux);
  }
};

// Per-class relaxation E_c = max_j IOU(b_i, b_j) * y_jc; the max runs over
// every actor including the target itself, so E_c >= y_ic.
inline std::vector<double> relaxation(const std::vector<ActionLabelVector>& labels,
                                      const std::vector<BoundingBox>& boxes, std::size_t i) {
  if (labels.size() != boxes.size()) throw std::invalid_argument("relaxation: list size mismatch");
  if (i >= labels.size()) throw std::invalid_argument("relaxation: target index out of range");
  const int c_cls = labels[i].num_classes();
  std::vector<double> e(c_cls, 0.0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double overlap = iou(boxes[i], boxes[j]);
    if (overlap == 0.0) continue;
    for (int c = 0; c < c_cls; ++c)
      if (labels[j].values[c]) e[c] = std::max(e[c], overlap);
  }
  return e;
}

namespace lossdetail {

// class_mask rows out classes excluded from the sum (the pose subset in the
// auxiliary losses). Matrices are num_actors x c_cls.
inline ad::Var bce_core(ad::Tape& t, ad::Var preds, const Matrix& labels, const Matrix& neg_weight,
                        const Matrix& class_mask) {
  const Matrix& p = t.val(preds);
  if (p.rows != labels.rows || p.cols != labels.cols)
    throw std::invalid_argument("bce: prediction/label shape mismatch");
  ad::Var clamped = t.clamp(preds, kPredClampLo, kPredClampHi);
  ad::Var pos = t.mul_const(t.log(clamped), labels);
  Matrix ones(p.rows, p.cols, 1.0);
  ad::Var one_minus = t.add_const(t.scale(clamped, -1.0), ones);
  ad::Var neg = t.mul_const(t.log(one_minus), neg_weight);
  ad::Var per_entry = t.mul_const(t.scale(t.add(pos, neg), -1.0), class_mask);
  // sum over classes, mean over actors
  return t.mean_all(t.sum_cols(per_entry));
}

inline Matrix label_matrix(const std::vector<ActionLabelVector>& labels) {
  if (labels.empty()) throw std::invalid_argument("losses: empty label list");
  Matrix m(static_cast<int>(labels.size()), labels[0].num_classes());
  for (int r = 0; r < m.rows; ++r) {
    if (labels[r].num_classes() != m.cols)
      throw std::invalid_argument("losses: inconsistent class counts");
    for (int c = 0; c < m.cols; ++c) m(r, c) = labels[r].values[c];
  }
  return m;
}

inline Matrix unmasked(int rows, int cols) { return Matrix(rows, cols, 1.0); }

}  // namespace lossdetail

// Relaxed BCE: the negative term is weighted by (1 - E_c) instead of
// (1 - y_c). E is a constant w.r.t. the predictions.
inline ad::Var relaxed_bce_v(ad::Tape& t, ad::Var preds, const Matrix& labels, const Matrix& e,
                             const Matrix& class_mask) {
  if (!labels.same_shape(e)) throw std::invalid_argument("relaxed_bce: E shape mismatch");
  Matrix neg_weight(e.rows, e.cols);
  for (int i = 0; i < e.size(); ++i) neg_weight.d[i] = 1.0 - e.d[i];
  return lossdetail::bce_core(t, preds, labels, neg_weight, class_mask);
}

inline ad::Var standard_bce_v(ad::Tape& t, ad::Var preds, const Matrix& labels,
                              const Matrix& class_mask) {
  Matrix neg_weight(labels.rows, labels.cols);
  for (int i = 0; i < labels.size(); ++i) neg_weight.d[i] = 1.0 - labels.d[i];
  return lossdetail::bce_core(t, preds, labels, neg_weight, class_mask);
}

// (1/K^2) sum (1 - p_hat) (omega - 1)^2, pushing interference-free cells of
// the identity map toward full activation. Column shapes are k*k x 1.
inline ad::Var identity_prior_loss_v(ad::Tape& t, ad::Var omega_idt, const Matrix& p_hat) {
  const Matrix& w = t.val(omega_idt);
  if (!w.same_shape(p_hat)) throw std::invalid_argument("identity_prior_loss: shape mismatch");
  Matrix ones(w.rows, w.cols, 1.0);
  Matrix free_cells(w.rows, w.cols);
  for (int i = 0; i < p_hat.size(); ++i) free_cells.d[i] = 1.0 - p_hat.d[i];
  ad::Var diff = t.add_const(omega_idt, Matrix(w.rows, w.cols, -1.0));
  ad::Var sq = t.mul(diff, diff);
  return t.mean_all(t.mul_const(sq, free_cells));
}

// Ranking prior max(0, gamma - (1/K^2)(sum_p omega - sum_{1-p} omega)); both
// sums are normalized by K^2 rather than by region size.
inline ad::Var semantic_prior_loss_v(ad::Tape& t, ad::Var omega_sem, const Matrix& p_hat,
                                     double gamma) {
  const Matrix& w = t.val(omega_sem);
  if (!w.same_shape(p_hat)) throw std::invalid_argument("semantic_prior_loss: shape mismatch");
  Matrix signed_mask(w.rows, w.cols);
  for (int i = 0; i < p_hat.size(); ++i) signed_mask.d[i] = p_hat.d[i] > 0.5 ? 1.0 : -1.0;
  ad::Var margin_gap = t.scale(t.mean_all(t.mul_const(omega_sem, signed_mask)), -1.0);
  ad::Var shifted = t.add_const(margin_gap, Matrix(1, 1, gamma));
  return t.relu(shifted);
}

// ---- plain-value wrappers over the tape ops ----

inline double relaxed_bce(const Matrix& preds, const std::vector<ActionLabelVector>& labels,
                          const Matrix& e, const Matrix* class_mask = nullptr) {
  ad::Tape t;
  const Matrix lm = lossdetail::label_matrix(labels);
  const Matrix mask = class_mask ? *class_mask : lossdetail::unmasked(lm.rows, lm.cols);
  return t.val(relaxed_bce_v(t, t.input(preds), lm, e, mask))(0, 0);
}

inline double standard_bce(const Matrix& preds, const std::vector<ActionLabelVector>& labels,
                           const Matrix* class_mask = nullptr) {
  ad::Tape t;
  const Matrix lm = lossdetail::label_matrix(labels);
  const Matrix mask = class_mask ? *class_mask : lossdetail::unmasked(lm.rows, lm.cols);
  return t.val(standard_bce_v(t, t.input(preds), lm, mask))(0, 0);
}

inline double identity_prior_loss(const Matrix& omega_idt, const Matrix& p_hat) {
  ad::Tape t;
  return t.val(identity_prior_loss_v(t, t.input(omega_idt), p_hat))(0, 0);
}

inline double semantic_prior_loss(const Matrix& omega_sem, const Matrix& p_hat, double gamma) {
  ad::Tape t;
  return t.val(semantic_prior_loss_v(t, t.input(omega_sem), p_hat, gamma))(0, 0);
}

inline LossReport total_loss(double cls_sem, double cls_idt, double prior_sem, double prior_idt,
                             double cls_fuse, double lambda_aux) {
  for (double v : {cls_sem, cls_idt, prior_sem, prior_idt, cls_fuse})
    if (!std::isfinite(v)) throw std::invalid_argument("total_loss: non-finite component");
  LossReport r;
  r.cls_sem = cls_sem;
  r.cls_idt = cls_idt;
  r.prior_sem = prior_sem;
  r.prior_idt = prior_idt;
  r.cls_fuse = cls_fuse;
  r.lambda_aux = lambda_aux;
  r.total = LossReport::total_of(cls_fuse, cls_sem, cls_idt, prior_sem, prior_idt, lambda_aux);
  return r;
}

}  // namespace igmn
