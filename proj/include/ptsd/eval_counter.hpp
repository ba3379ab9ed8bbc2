#pragma once

#include <atomic>
#include <cstdint>

namespace ptsd {

// Budget ledger for target evaluations. Monotone within a run; pipeline stages
// snapshot it before/after so manifest deltas sum exactly to the final totals.
// Metric/reference evaluations use a separate counter instance, never this one.
class EvalCounter {
 public:
  struct Counts {
    std::uint64_t energy = 0;
    std::uint64_t gradient = 0;
    std::uint64_t total() const { return energy + gradient; }
    Counts operator-(const Counts& o) const {
      return Counts{energy - o.energy, gradient - o.gradient};
    }
    bool operator==(const Counts& o) const = default;
  };

  void add_energy(std::uint64_t n = 1) {
    energy_.fetch_add(n, std::memory_order_relaxed);
  }
  void add_gradient(std::uint64_t n = 1) {
    gradient_.fetch_add(n, std::memory_order_relaxed);
  }

  Counts snapshot() const {
    return Counts{energy_.load(std::memory_order_relaxed),
                  gradient_.load(std::memory_order_relaxed)};
  }

 private:
  std::atomic<std::uint64_t> energy_{0};
  std::atomic<std::uint64_t> gradient_{0};
};

}  // namespace ptsd
