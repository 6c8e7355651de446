#include "dancecam/stage23/tween.hpp"

#include "dancecam/core/keyframes.hpp"

namespace dancecam::stage23 {

Eigen::VectorXd linearRamp(Eigen::Index n) {
  if (n <= 0) throw RangeError("tween: interval length must be at least 1");
  if (n == 1) return Eigen::VectorXd::Ones(1);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = static_cast<double>(i) / static_cast<double>(n - 1);
  return r;
}

TweenComputation tweenFromIncrements(const Eigen::VectorXd& delta_tilde) {
  const Eigen::Index n = delta_tilde.size();
  if (n < 1) throw RangeError("tween_values: interval length must be at least 1");
  TweenComputation tc;
  tc.delta_tilde = delta_tilde;
  tc.delta_breve = delta_tilde.array() - delta_tilde.minCoeff();
  tc.rho_breve = tc.delta_breve;
  for (Eigen::Index i = 1; i < n; ++i) tc.rho_breve(i) += tc.rho_breve(i - 1);
  const double denom = tc.rho_breve(n - 1) - tc.rho_breve(0);
  if (n == 1 || denom < kFlatDenominator) {
    tc.rho_hat = linearRamp(n);
    tc.fallback = true;
    return tc;
  }
  tc.rho_hat = (tc.rho_breve.array() - tc.rho_breve(0)) / denom;
  tc.rho_hat(0) = 0.0;
  tc.rho_hat(n - 1) = 1.0;
  return tc;
}

nn::Var tweenFromIncrements(const nn::Var& delta_tilde) {
  const Eigen::Index n = delta_tilde.rows();
  if (n < 1 || delta_tilde.cols() != 1) throw RangeError("tween_values: expects an n x 1 increment column");
  const nn::Var rho_breve = nn::cumsumRows(nn::subMin(delta_tilde));
  const Eigen::VectorXd x = rho_breve.value().col(0);
  const double denom = x(n - 1) - x(0);
  if (n == 1 || denom < kFlatDenominator) return nn::constant(linearRamp(n));

  Eigen::VectorXd y = (x.array() - x(0)) / denom;
  y(0) = 0.0;
  y(n - 1) = 1.0;
  nn::Matrix value = y;
  // y_i = (x_i - x_0) / (x_{n-1} - x_0)
  return nn::customOp(std::move(value), {rho_breve},
                      [y, denom, n](const nn::Matrix& g, const std::vector<nn::Matrix*>& gi) {
                        if (!gi[0]) return;
                        nn::Matrix& gx = *gi[0];
                        const double gs = g.col(0).sum();
                        const double gy = g.col(0).dot(y);
                        gx.col(0) += g.col(0) / denom;
                        gx(0, 0) += (-gs + gy) / denom;
                        gx(n - 1, 0) -= gy / denom;
                      });
}

CameraTrack reconstructInterval(const CameraPosed& c1, const CameraPosed& c2, const Eigen::VectorXd& rho_hat) {
  CameraTrack out(rho_hat.size(), kPoseDim);
  for (Eigen::Index i = 0; i < rho_hat.size(); ++i) setPose(out, i, interpolatePose(c1, c2, rho_hat(i)));
  if (rho_hat.size() > 0) {
    setPose(out, rho_hat.size() - 1, c2);
    if (rho_hat.size() > 1) setPose(out, 0, c1);
  }
  return out;
}

nn::Var reconstructInterval(const nn::Var& c1, const nn::Var& c2, const nn::Var& rho_hat) {
  return nn::addRow(nn::matmul(rho_hat, nn::sub(c2, c1)), c1);
}

}  // namespace dancecam::stage23
