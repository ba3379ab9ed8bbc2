#pragma once

#include <memory>

#include "ptsd/diffusion.hpp"

namespace ptsd {

// Linear extrapolation weight for estimating the score at temperature t
// from scores at the two hottest known temperatures t1 < t2.
double guided_weight(double t, double t1, double t2);

// Score field for an unseen colder temperature: (1 + w) s1 - w s2 where s1
// and s2 are fields at t1 and t2. Combining denoiser predictions with the
// same coefficients gives exactly this field.
class GuidedScoreField final : public ScoreField {
 public:
  GuidedScoreField(std::shared_ptr<const ScoreField> hot1,
                   std::shared_ptr<const ScoreField> hot2, double t, double t1,
                   double t2);

  int dim() const override { return hot1_->dim(); }
  double weight() const { return weight_; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& x, double sigma) const override;
  ScoreAndJvp score_with_jvp(const Eigen::MatrixXd& x, double sigma,
                             const Eigen::MatrixXd& probe) const override;

 private:
  std::shared_ptr<const ScoreField> hot1_, hot2_;
  double weight_;
};

// Single-model baseline: scales the score at t1 by t1 / t, the exact
// relation for unsmoothed densities that ignores the noise convolution.
class RescaledScoreField final : public ScoreField {
 public:
  RescaledScoreField(std::shared_ptr<const ScoreField> hot1, double t,
                     double t1);

  int dim() const override { return hot1_->dim(); }
  double ratio() const { return ratio_; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& x, double sigma) const override;
  ScoreAndJvp score_with_jvp(const Eigen::MatrixXd& x, double sigma,
                             const Eigen::MatrixXd& probe) const override;

 private:
  std::shared_ptr<const ScoreField> hot1_;
  double ratio_;
};

}  // namespace ptsd
