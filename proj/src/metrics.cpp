#include "ptsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ptsd {

// Columns reshaped to 3 x particles and centered on their particle mean.
Eigen::MatrixXd center_particle_blocks(const Eigen::MatrixXd& x) {
  if (x.rows() % 3 != 0)
    throw std::invalid_argument("metrics: particle layout needs dim % 3 == 0");
  Eigen::MatrixXd out = x;
  const Eigen::Index particles = x.rows() / 3;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    Eigen::Map<Eigen::Matrix3Xd> pts(out.col(j).data(), 3, particles);
    pts.colwise() -= Eigen::Vector3d(pts.rowwise().mean());
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distances between columns: |x_i|^2 + |y_j|^2 - 2 x_i . y_j.
Eigen::MatrixXd squared_distance_matrix(const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& y) {
  Eigen::MatrixXd cost = -2.0 * x.transpose() * y;
  cost.colwise() += x.colwise().squaredNorm().transpose();
  cost.rowwise() += y.colwise().squaredNorm();
  return cost.cwiseMax(0.0);
}

// Pairwise costs after the optimal rigid alignment of particle blocks:
// |Xc_i|^2 + |Yc_j|^2 - 2 (s1 + s2 +/- s3) from the SVD of Yc_j Xc_i^T.
Eigen::MatrixXd kabsch_cost_matrix(const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& y) {
  const Eigen::MatrixXd xc = center_particle_blocks(x);
  const Eigen::MatrixXd yc = center_particle_blocks(y);
  const Eigen::Index particles = x.rows() / 3;
  const Eigen::VectorXd xn = xc.colwise().squaredNorm();
  const Eigen::VectorXd yn = yc.colwise().squaredNorm();
  Eigen::MatrixXd cost(x.cols(), y.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Eigen::Map<const Eigen::Matrix3Xd> xi(xc.col(i).data(), 3,
                                                particles);
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const Eigen::Map<const Eigen::Matrix3Xd> yj(yc.col(j).data(), 3,
                                                  particles);
      const Eigen::Matrix3d h = yj * xi.transpose();
      Eigen::JacobiSVD<Eigen::Matrix3d> svd(
          h, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Eigen::Vector3d s = svd.singularValues();
      const double sign =
          (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0
              ? -1.0
              : 1.0;
      cost(i, j) =
          std::max(0.0, xn[i] + yn[j] - 2.0 * (s[0] + s[1] + sign * s[2]));
    }
  }
  return cost;
}

// Winsorization cap: the (1 - clip) pooled quantile.
double upper_clip(std::vector<double> pooled, double clip) {
  const auto n = long(pooled.size());
  const long drop = std::min<long>(long(clip * double(n)), n - 1);
  const long idx = n - 1 - drop;
  std::nth_element(pooled.begin(), pooled.begin() + idx, pooled.end());
  return pooled[std::size_t(idx)];
}

Eigen::VectorXd histogram(const Eigen::VectorXd& e, double lo, double width,
                          int bins) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const int b = std::clamp(int((e[i] - lo) / width * double(bins)), 0,
                             bins - 1);
    h[b] += 1.0;
  }
  return h / double(e.size());
}

// Sum of Gaussian kernel values over all pairs of entries, diagonal
// included, accumulated in row blocks to bound memory.
double kernel_sum(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  double bandwidth) {
  const double scale = -0.5 / (bandwidth * bandwidth);
  const Eigen::Index block = 512;
  double total = 0.0;
  for (Eigen::Index i0 = 0; i0 < a.size(); i0 += block) {
    const Eigen::Index rows = std::min(block, a.size() - i0);
    const Eigen::ArrayXXd diff =
        a.segment(i0, rows).rowwise().replicate(b.size()).array() -
        b.transpose().colwise().replicate(rows).array();
    total += (diff.square() * scale).exp().sum();
  }
  return total;
}

double median_pairwise_distance(const Eigen::VectorXd& ex,
                                const Eigen::VectorXd& ey) {
  // Deterministic thinning keeps the pair count manageable.
  std::vector<double> pooled;
  pooled.reserve(std::size_t(ex.size() + ey.size()));
  for (Eigen::Index i = 0; i < ex.size(); ++i) pooled.push_back(ex[i]);
  for (Eigen::Index i = 0; i < ey.size(); ++i) pooled.push_back(ey[i]);
  const std::size_t cap = 2048;
  if (pooled.size() > cap) {
    std::vector<double> thin;
    thin.reserve(cap);
    const double stride = double(pooled.size()) / double(cap);
    for (std::size_t k = 0; k < cap; ++k)
      thin.push_back(pooled[std::size_t(stride * double(k))]);
    pooled.swap(thin);
  }
  std::vector<double> dists;
  dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j)
      dists.push_back(std::abs(pooled[i] - pooled[j]));
  if (dists.empty()) return 1.0;
  const auto mid = dists.begin() + long(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  const double med = *mid;
  return med > 0.0 ? med : 1.0;
}

std::vector<int> draw_subset(int available, int wanted, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(available));
  std::iota(idx.begin(), idx.end(), 0);
  const int take = std::min(available, wanted);
  for (int i = 0; i < take; ++i) {
    const int j = i + int(rng.uniform() * double(available - i));
    std::swap(idx[std::size_t(i)], idx[std::size_t(std::min(j, available - 1))]);
  }
  idx.resize(std::size_t(take));
  return idx;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& x,
                             const std::vector<int>& idx) {
  Eigen::MatrixXd out(x.rows(), Eigen::Index(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.col(Eigen::Index(k)) = x.col(idx[k]);
  return out;
}

}  // namespace

double assignment_cost(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols())
    throw std::invalid_argument("assignment: square cost matrix required");
  const int n = int(cost.rows());
  if (n == 0) return 0.0;
  // Shortest augmenting paths with dual potentials, 1-indexed sentinels.
  std::vector<double> u(std::size_t(n) + 1, 0.0), v(std::size_t(n) + 1, 0.0);
  std::vector<int> match(std::size_t(n) + 1, 0), way(std::size_t(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(std::size_t(n) + 1, kInf);
    std::vector<char> used(std::size_t(n) + 1, 0);
    do {
      used[std::size_t(j0)] = 1;
      const int i0 = match[std::size_t(j0)];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[std::size_t(i0)] -
                           v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(match[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[std::size_t(j0)] != 0);
    do {
      const int j1 = way[std::size_t(j0)];
      match[std::size_t(j0)] = match[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    total += cost(match[std::size_t(j)] - 1, j - 1);
  return total;
}

double wasserstein2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    bool aligned) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw std::invalid_argument("wasserstein2: equal shapes required");
  if (x.cols() == 0) throw std::invalid_argument("wasserstein2: empty input");
  if (x.cols() > 2000)
    throw std::invalid_argument("wasserstein2: at most 2000 samples");
  const Eigen::MatrixXd cost =
      aligned ? kabsch_cost_matrix(x, y) : squared_distance_matrix(x, y);
  return std::sqrt(assignment_cost(cost) / double(x.cols()));
}

double energy_tvd(const Eigen::VectorXd& ex, const Eigen::VectorXd& ey,
                  int bins, double clip) {
  if (ex.size() == 0 || ey.size() == 0)
    throw std::invalid_argument("tvd: empty energy set");
  if (bins < 1 || clip < 0.0 || clip >= 1.0)
    throw std::invalid_argument("tvd: invalid histogram spec");
  std::vector<double> pooled;
  pooled.reserve(std::size_t(ex.size() + ey.size()));
  for (Eigen::Index i = 0; i < ex.size(); ++i) pooled.push_back(ex[i]);
  for (Eigen::Index i = 0; i < ey.size(); ++i) pooled.push_back(ey[i]);
  const double lo = *std::min_element(pooled.begin(), pooled.end());
  const double hi = upper_clip(std::move(pooled), clip);
  const double width = hi - lo;
  if (!(width > 0.0)) return 0.0;  // all energies in one bin
  const Eigen::VectorXd hx = histogram(ex, lo, width, bins);
  const Eigen::VectorXd hy = histogram(ey, lo, width, bins);
  return 0.5 * (hx - hy).cwiseAbs().sum();
}

double energy_mmd_squared(const Eigen::VectorXd& ex,
                          const Eigen::VectorXd& ey) {
  const auto m = double(ex.size()), n = double(ey.size());
  if (ex.size() < 2 || ey.size() < 2)
    throw std::invalid_argument("mmd: need >= 2 energies per set");
  const double h = median_pairwise_distance(ex, ey);
  const double kxx = kernel_sum(ex, ex, h) - m;  // drop the unit diagonal
  const double kyy = kernel_sum(ey, ey, h) - n;
  const double kxy = kernel_sum(ex, ey, h);
  return kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

double energy_mmd(const Eigen::VectorXd& ex, const Eigen::VectorXd& ey) {
  return std::sqrt(std::max(0.0, energy_mmd_squared(ex, ey)));
}

double observable_mean(const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                       const Eigen::MatrixXd& c, bool center_particles) {
  if (a.size() != x.rows() || c.rows() != x.rows() || c.cols() != x.rows())
    throw std::invalid_argument("observable: shape mismatch");
  const Eigen::MatrixXd pts =
      center_particles ? center_particle_blocks(x) : x;
  double total = 0.0;
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    const Eigen::VectorXd d = pts.col(j) - a;
    total += d.dot(c * d);
  }
  return total / double(pts.cols());
}

double observable_mae(const Eigen::MatrixXd& x, const Eigen::MatrixXd& ref,
                      const Eigen::VectorXd& a, const Eigen::MatrixXd& c,
                      bool center_particles) {
  return std::abs(observable_mean(x, a, c, center_particles) -
                  observable_mean(ref, a, c, center_particles));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"w2", w2},
                   {"tvd", tvd},
                   {"mmd", mmd},
                   {"observable_mae", observable_mae},
                   {"model_count", model_count},
                   {"reference_count", reference_count},
                   {"paired_count", paired_count},
                   {"histogram_count", histogram_count},
                   {"histogram_bins", histogram_bins},
                   {"histogram_clip", histogram_clip},
                   {"eval_energy_calls", eval_energy_calls}};
  if (mean_loglik)
    j["mean_loglik"] = *mean_loglik;
  else
    j["mean_loglik"] = nullptr;
  return j;
}

EvalReport evaluate(const Eigen::MatrixXd& samples,
                    const Eigen::MatrixXd& reference,
                    const EnergyTarget& target, const EvalOptions& options) {
  if (samples.rows() != reference.rows() || samples.rows() != target.dim())
    throw std::invalid_argument("evaluate: dimension mismatch");
  if (samples.cols() < 2 || reference.cols() < 2)
    throw std::invalid_argument("evaluate: need >= 2 samples per set");

  Rng rng(substream_seed(options.seed, "eval"));
  EvalReport report;
  report.model_count = int(samples.cols());
  report.reference_count = int(reference.cols());
  report.histogram_bins = options.bins;
  report.histogram_clip = options.clip;

  const int pairs = std::min({options.max_pairs, report.model_count,
                              report.reference_count});
  const Eigen::MatrixXd xs =
      take_columns(samples, draw_subset(report.model_count, pairs, rng));
  const Eigen::MatrixXd ys =
      take_columns(reference, draw_subset(report.reference_count, pairs, rng));
  report.paired_count = pairs;
  report.w2 = wasserstein2(xs, ys, options.kabsch);

  const int hist = std::min({options.max_histogram, report.model_count,
                             report.reference_count});
  const Eigen::MatrixXd xh =
      take_columns(samples, draw_subset(report.model_count, hist, rng));
  const Eigen::MatrixXd yh =
      take_columns(reference, draw_subset(report.reference_count, hist, rng));
  report.histogram_count = hist;
  Eigen::VectorXd ex(hist), ey(hist);
  for (int i = 0; i < hist; ++i) {
    ex[i] = target.energy(xh.col(i));
    ey[i] = target.energy(yh.col(i));
  }
  report.eval_energy_calls += std::uint64_t(2 * hist);
  report.tvd = energy_tvd(ex, ey, options.bins, options.clip);
  report.mmd = energy_mmd(ex, ey);

  const Eigen::VectorXd a = options.observable_a.size() > 0
                                ? options.observable_a
                                : Eigen::VectorXd::Zero(samples.rows());
  const Eigen::MatrixXd c =
      options.observable_c.size() > 0
          ? options.observable_c
          : Eigen::MatrixXd(Eigen::MatrixXd::Identity(samples.rows(),
                                                      samples.rows()));
  report.observable_mae =
      observable_mae(samples, reference, a, c, options.center_particles);

  if (options.density != nullptr) {
    const int take = std::min(options.density_points, report.reference_count);
    const Eigen::MatrixXd pts =
        take_columns(reference, draw_subset(report.reference_count, take, rng));
    Rng probe(substream_seed(options.seed, "eval-nll"));
    const Eigen::VectorXd logq =
        log_density_forward(*options.density, pts, probe, options.ladder,
                            options.density_probes);
    report.mean_loglik = logq.mean();
  }
  return report;
}

}  // namespace ptsd
