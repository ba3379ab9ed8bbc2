#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ptsd {

enum class Provenance : std::uint8_t {
  InitialPt,
  Guided,
  Resampled,
  Refined,
  AppendedPt,
};

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::InitialPt: return "initial_pt";
    case Provenance::Guided: return "guided";
    case Provenance::Resampled: return "resampled";
    case Provenance::Refined: return "refined";
    case Provenance::AppendedPt: return "appended_pt";
  }
  return "unknown";
}

// Per-temperature sample store. Columns are samples; alongside each column we
// keep its provenance, the resampling source row (-1 when not applicable), and
// cached base-scale (T=1) energy/gradient when they are known. Caches let PT
// swaps and chain restarts reuse evaluations instead of re-spending budget;
// NaN marks "unknown".
class SampleBuffer {
 public:
  SampleBuffer() = default;
  SampleBuffer(int dim, double temperature) : dim_(dim), temperature_(temperature) {}

  int dim() const { return dim_; }
  double temperature() const { return temperature_; }
  int count() const { return count_; }

  Eigen::Ref<const Eigen::MatrixXd> samples() const {
    return samples_.leftCols(count_);
  }
  Eigen::VectorXd::ConstSegmentReturnType base_energies() const {
    return base_energy_.head(count_);
  }

  Eigen::VectorXd sample(int i) const { return samples_.col(check(i)); }
  double base_energy(int i) const { return base_energy_[check(i)]; }
  Eigen::VectorXd base_gradient(int i) const { return base_gradient_.col(check(i)); }
  bool has_energy(int i) const { return std::isfinite(base_energy_[check(i)]); }
  bool has_gradient(int i) const {
    return std::isfinite(base_gradient_(0, check(i)));
  }
  Provenance provenance(int i) const { return provenance_[check(i)]; }
  std::int64_t source_index(int i) const { return source_index_[check(i)]; }

  void append(const Eigen::VectorXd& x, Provenance prov,
              std::int64_t source = -1,
              double energy = std::numeric_limits<double>::quiet_NaN(),
              const Eigen::VectorXd* gradient = nullptr) {
    if (x.size() != dim_) throw std::invalid_argument("buffer: dim mismatch");
    reserve(count_ + 1);
    samples_.col(count_) = x;
    base_energy_[count_] = energy;
    if (gradient)
      base_gradient_.col(count_) = *gradient;
    else
      base_gradient_.col(count_).setConstant(
          std::numeric_limits<double>::quiet_NaN());
    provenance_.push_back(prov);
    source_index_.push_back(source);
    ++count_;
  }

  // In-place replacement of one column, e.g. with a refined chain state.
  void overwrite(int i, const Eigen::VectorXd& x, Provenance prov,
                 double energy, const Eigen::VectorXd& gradient) {
    check(i);
    samples_.col(i) = x;
    base_energy_[i] = energy;
    base_gradient_.col(i) = gradient;
    provenance_[i] = prov;
  }

  void keep_last(int n) {
    if (n >= count_) return;
    const int drop = count_ - n;
    samples_.leftCols(n) = samples_.middleCols(drop, n).eval();
    base_energy_.head(n) = base_energy_.segment(drop, n).eval();
    base_gradient_.leftCols(n) = base_gradient_.middleCols(drop, n).eval();
    provenance_.erase(provenance_.begin(), provenance_.begin() + drop);
    source_index_.erase(source_index_.begin(), source_index_.begin() + drop);
    count_ = n;
  }

  void clear() {
    count_ = 0;
    provenance_.clear();
    source_index_.clear();
  }

 private:
  int check(int i) const {
    if (i < 0 || i >= count_) throw std::out_of_range("buffer index");
    return i;
  }

  void reserve(int n) {
    if (n <= samples_.cols()) return;
    const int cap = std::max({n, 2 * static_cast<int>(samples_.cols()), 64});
    samples_.conservativeResize(dim_, cap);
    base_energy_.conservativeResize(cap);
    base_gradient_.conservativeResize(dim_, cap);
  }

  int dim_ = 0;
  double temperature_ = 1.0;
  int count_ = 0;
  Eigen::MatrixXd samples_;
  Eigen::VectorXd base_energy_;
  Eigen::MatrixXd base_gradient_;
  std::vector<Provenance> provenance_;
  std::vector<std::int64_t> source_index_;
};

}  // namespace ptsd
