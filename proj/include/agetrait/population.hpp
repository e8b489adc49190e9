#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "agetrait/model.hpp"

namespace agetrait {

// Read-only view of X^n at one time: atoms (trait, age) of equal weight 1/n.
struct MeasureSample {
  double time = 0.0;
  std::size_t trait_dim = 1;
  std::vector<double> traits;  // size() * trait_dim, row-major
  std::vector<double> ages;
  double weight = 1.0;  // 1/n, shared by every atom

  std::size_t size() const { return ages.size(); }
  TraitView trait(std::size_t i) const { return {traits.data() + i * trait_dim, trait_dim}; }
  double total_mass() const { return static_cast<double>(size()) * weight; }
};

// Weighted point measure X^n_t = (1/n) sum_i delta_(x_i, a_i). Ages are kept
// implicitly as birth times, a_i = n (clock - birth_time_i).
class Population {
 public:
  Population(std::size_t trait_dim, SimScale scale, double clock = 0.0);

  std::size_t size() const { return birth_times_.size(); }
  bool empty() const { return birth_times_.empty(); }
  std::size_t trait_dim() const { return trait_dim_; }
  const SimScale& scale() const { return scale_; }
  double clock() const { return clock_; }
  void set_clock(double t) { clock_ = t; }

  double mass() const { return static_cast<double>(size()) / scale_.value(); }

  TraitView trait(std::size_t i) const { return {traits_.data() + i * trait_dim_, trait_dim_}; }
  double birth_time(std::size_t i) const { return birth_times_[i]; }
  double age(std::size_t i) const { return scale_.value() * (clock_ - birth_times_[i]); }
  double age_at(std::size_t i, double t) const { return scale_.value() * (t - birth_times_[i]); }

  void add(TraitView trait, double birth_time);
  // Individual with the given age at the current clock.
  void add_with_age(TraitView trait, double age);
  // Swap-with-last removal; the last individual takes index i.
  void remove(std::size_t i);
  void reserve(std::size_t count);

  MeasureSample sample() const { return sample_at(clock_); }
  MeasureSample sample_at(double t) const;

 private:
  std::size_t trait_dim_;
  SimScale scale_;
  double clock_;
  std::vector<double> traits_;
  std::vector<double> birth_times_;
};

// <X^n, f> = (1/n) sum_i f(x_i, a_i) at the population clock.
template <typename F>
double pair(const Population& pop, F&& f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) sum += f(pop.trait(i), pop.age(i));
  return sum / pop.scale().value();
}

template <typename F>
double pair(const MeasureSample& sample, F&& f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) sum += f(sample.trait(i), sample.ages[i]);
  return sum * sample.weight;
}

// X U(x, a): uses the focal-only shortcut U_focal(x, a) * mass when available.
double interaction_total(const Population& pop, const ModelSpec& spec, TraitView focal_trait,
                         double focal_age);
// Always the O(N) sum, regardless of the focal-only flag.
double interaction_total_naive(const Population& pop, const ModelSpec& spec,
                               TraitView focal_trait, double focal_age);

// N [(n r_bar + b_bar) + (n r_bar + d_bar + U_bar N / n)]
double total_event_rate_bound(const Population& pop, const ModelSpec& spec);

}  // namespace agetrait
