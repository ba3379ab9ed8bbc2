#include "ptsd/guidance.hpp"

#include <stdexcept>

namespace ptsd {

double guided_weight(double t, double t1, double t2) {
  if (!(t > 0.0) || !(t < t1) || !(t1 < t2))
    throw std::invalid_argument("guidance: need 0 < t < t1 < t2");
  return (t1 - t) / (t2 - t1);
}

GuidedScoreField::GuidedScoreField(std::shared_ptr<const ScoreField> hot1,
                                   std::shared_ptr<const ScoreField> hot2,
                                   double t, double t1, double t2)
    : hot1_(std::move(hot1)),
      hot2_(std::move(hot2)),
      weight_(guided_weight(t, t1, t2)) {
  if (!hot1_ || !hot2_) throw std::invalid_argument("guidance: null field");
  if (hot1_->dim() != hot2_->dim())
    throw std::invalid_argument("guidance: dimension mismatch");
}

Eigen::MatrixXd GuidedScoreField::score(const Eigen::MatrixXd& x,
                                        double sigma) const {
  return (1.0 + weight_) * hot1_->score(x, sigma) -
         weight_ * hot2_->score(x, sigma);
}

ScoreField::ScoreAndJvp GuidedScoreField::score_with_jvp(
    const Eigen::MatrixXd& x, double sigma,
    const Eigen::MatrixXd& probe) const {
  const auto a = hot1_->score_with_jvp(x, sigma, probe);
  const auto b = hot2_->score_with_jvp(x, sigma, probe);
  return {(1.0 + weight_) * a.score - weight_ * b.score,
          (1.0 + weight_) * a.jvp - weight_ * b.jvp};
}

RescaledScoreField::RescaledScoreField(std::shared_ptr<const ScoreField> hot1,
                                       double t, double t1)
    : hot1_(std::move(hot1)), ratio_(t1 / t) {
  if (!hot1_) throw std::invalid_argument("guidance: null field");
  if (!(t > 0.0) || !(t < t1))
    throw std::invalid_argument("guidance: need 0 < t < t1");
}

Eigen::MatrixXd RescaledScoreField::score(const Eigen::MatrixXd& x,
                                          double sigma) const {
  return ratio_ * hot1_->score(x, sigma);
}

ScoreField::ScoreAndJvp RescaledScoreField::score_with_jvp(
    const Eigen::MatrixXd& x, double sigma,
    const Eigen::MatrixXd& probe) const {
  const auto a = hot1_->score_with_jvp(x, sigma, probe);
  return {ratio_ * a.score, ratio_ * a.jvp};
}

}  // namespace ptsd
