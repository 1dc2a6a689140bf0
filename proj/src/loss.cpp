#include "trajpred/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace trajpred::loss {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

}  // namespace

int best_mode(const Tensor& mu, const Tensor& y) {
  if (mu.ndim() != 3 || mu.dim(2) != 2 || y.ndim() != 2 || y.dim(1) != 2 ||
      mu.dim(1) != y.dim(0))
    throw std::invalid_argument("best_mode: incompatible shapes " + mu.shape_str() + " and " +
                                y.shape_str());
  const int k = mu.dim(0), tp = mu.dim(1);
  int best = 0;
  double best_d = 0.0;
  for (int kk = 0; kk < k; ++kk) {
    double d = 0.0;
    for (int t = 0; t < tp; ++t) {
      double dx = mu.at3(kk, t, 0) - y.at2(t, 0);
      double dy = mu.at3(kk, t, 1) - y.at2(t, 1);
      d += dx * dx + dy * dy;
    }
    if (kk == 0 || d < best_d) {
      best = kk;
      best_d = d;
    }
  }
  return best;
}

std::vector<int> best_modes(const Tensor& loc_rows, const Tensor& gt,
                            const model::ModeLayout& layout) {
  std::vector<int> winners(static_cast<size_t>(layout.n));
  for (int a = 0; a < layout.n; ++a) {
    int best = 0;
    double best_d = 0.0;
    for (int k = 0; k < layout.k; ++k) {
      double d = 0.0;
      for (int t = 0; t < layout.t_pred; ++t) {
        std::int64_t r = layout.row(k, a, t);
        double dx = loc_rows[r * 2] - gt.at3(a, t, 0);
        double dy = loc_rows[r * 2 + 1] - gt.at3(a, t, 1);
        d += dx * dx + dy * dy;
      }
      if (k == 0 || d < best_d) {
        best = k;
        best_d = d;
      }
    }
    winners[static_cast<size_t>(a)] = best;
  }
  return winners;
}

Tensor soft_target(const Tensor& loc_rows, const Tensor& gt, const model::ModeLayout& layout) {
  Tensor target({layout.n, layout.k});
  std::vector<double> neg_d(static_cast<size_t>(layout.k));
  for (int a = 0; a < layout.n; ++a) {
    for (int k = 0; k < layout.k; ++k) {
      double d = 0.0;
      for (int t = 0; t < layout.t_pred; ++t) {
        std::int64_t r = layout.row(k, a, t);
        double dx = loc_rows[r * 2] - gt.at3(a, t, 0);
        double dy = loc_rows[r * 2 + 1] - gt.at3(a, t, 1);
        d += std::sqrt(dx * dx + dy * dy);
      }
      neg_d[static_cast<size_t>(k)] = -d / layout.t_pred;
    }
    double m = neg_d[0];
    for (int k = 1; k < layout.k; ++k) m = std::max(m, neg_d[static_cast<size_t>(k)]);
    double sum = 0.0;
    for (int k = 0; k < layout.k; ++k) {
      target.at2(a, k) = std::exp(neg_d[static_cast<size_t>(k)] - m);
      sum += target.at2(a, k);
    }
    for (int k = 0; k < layout.k; ++k) target.at2(a, k) /= sum;
  }
  return target;
}

ad::Var laplace_nll(const ad::Var& mu_sel, const ad::Var& b_sel, const Tensor& y) {
  if (y.ndim() != 3 || y.dim(2) != 2)
    throw std::invalid_argument("laplace_nll: expected [N, T', 2] targets, got " + y.shape_str());
  const int n = y.dim(0), tp = y.dim(1);
  if (mu_sel.shape() != std::vector<int>{n * tp, 2})
    throw std::invalid_argument("laplace_nll: location rows do not match targets");
  for (std::int64_t i = 0; i < b_sel.value().size(); ++i)
    if (!(b_sel.value()[i] > 0.0))
      throw std::invalid_argument("laplace_nll: nonpositive scale");
  ad::Var target = ad::constant(Tensor({n * tp, 2}, y.vec()));
  ad::Var err = ad::abs_(ad::sub(target, mu_sel));
  ad::Var term = ad::add(ad::log_(ad::scale(b_sel, 2.0)), ad::div(err, b_sel));
  return ad::scale(ad::sum(term), 1.0 / (static_cast<double>(n) * tp));
}

ad::Var gaussian_nll(const ad::Var& mu_sel, const ad::Var& sigma_sel, const Tensor& y) {
  if (y.ndim() != 3 || y.dim(2) != 2)
    throw std::invalid_argument("gaussian_nll: expected [N, T', 2] targets, got " + y.shape_str());
  const int n = y.dim(0), tp = y.dim(1);
  for (std::int64_t i = 0; i < sigma_sel.value().size(); ++i)
    if (!(sigma_sel.value()[i] > 0.0))
      throw std::invalid_argument("gaussian_nll: nonpositive scale");
  ad::Var target = ad::constant(Tensor({n * tp, 2}, y.vec()));
  ad::Var diff = ad::sub(target, mu_sel);
  ad::Var quad = ad::div(ad::square(diff), ad::scale(ad::square(sigma_sel), 2.0));
  ad::Var term = ad::add(ad::add_scalar(ad::log_(sigma_sel), kHalfLog2Pi), quad);
  return ad::scale(ad::sum(term), 1.0 / (static_cast<double>(n) * tp));
}

ad::Var cls_loss(const Tensor& pi_target, const ad::Var& pi_hat) {
  if (!pi_hat.value().same_shape(pi_target))
    throw std::invalid_argument("cls_loss: shape mismatch " + pi_target.shape_str() + " and " +
                                pi_hat.value().shape_str());
  const int n = pi_target.dim(0);
  ad::Var logp = ad::log_(ad::clamp_min(pi_hat, 1e-12));
  ad::Var weighted = ad::mul(ad::constant(pi_target), logp);
  return ad::scale(ad::sum(weighted), -1.0 / n);
}

LossBreakdown wta_loss(const model::Predictor::Forward& fwd, const Tensor& gt, bool gaussian,
                       double cls_weight, const FixedTargets* fixed) {
  const model::ModeLayout& L = fwd.layout;
  if (gt.ndim() != 3 || gt.dim(0) != L.n || gt.dim(1) != L.t_pred || gt.dim(2) != 2)
    throw std::invalid_argument("wta_loss: ground truth shape " + gt.shape_str() +
                                " does not match layout");

  LossBreakdown out;
  if (fixed) {
    out.k_star = fixed->k_star;
  } else {
    out.k_star = best_modes(fwd.loc.value(), gt, L);
  }
  Tensor pi_target = fixed ? fixed->pi_target : soft_target(fwd.loc.value(), gt, L);

  std::vector<int> rows(static_cast<size_t>(L.n) * L.t_pred);
  for (int a = 0; a < L.n; ++a)
    for (int t = 0; t < L.t_pred; ++t)
      rows[static_cast<size_t>(a) * L.t_pred + t] =
          static_cast<int>(L.row(out.k_star[static_cast<size_t>(a)], a, t));
  ad::Var mu_sel = ad::gather_rows(fwd.loc, rows);
  ad::Var b_sel = ad::gather_rows(fwd.scale, rows);

  out.reg_var = gaussian ? gaussian_nll(mu_sel, b_sel, gt) : laplace_nll(mu_sel, b_sel, gt);
  out.cls_var = cls_loss(pi_target, fwd.probs);
  out.total_var = ad::add(out.reg_var, ad::scale(out.cls_var, cls_weight));
  out.reg = out.reg_var.value()[0];
  out.cls = out.cls_var.value()[0];
  out.total = out.total_var.value()[0];
  return out;
}

}  // namespace trajpred::loss
