#include "agetrait/population.hpp"

#include <algorithm>
#include <stdexcept>

namespace agetrait {

Population::Population(std::size_t trait_dim, SimScale scale, double clock)
    : trait_dim_(trait_dim), scale_(scale), clock_(clock) {}

void Population::add(TraitView trait, double birth_time) {
  if (trait.size() != trait_dim_) throw std::invalid_argument("Population::add: trait dimension");
  traits_.insert(traits_.end(), trait.begin(), trait.end());
  birth_times_.push_back(birth_time);
}

void Population::add_with_age(TraitView trait, double age) {
  add(trait, clock_ - age / scale_.value());
}

void Population::remove(std::size_t i) {
  const std::size_t last = size() - 1;
  if (i != last) {
    std::copy_n(traits_.begin() + static_cast<std::ptrdiff_t>(last * trait_dim_), trait_dim_,
                traits_.begin() + static_cast<std::ptrdiff_t>(i * trait_dim_));
    birth_times_[i] = birth_times_[last];
  }
  traits_.resize(last * trait_dim_);
  birth_times_.pop_back();
}

void Population::reserve(std::size_t count) {
  traits_.reserve(count * trait_dim_);
  birth_times_.reserve(count);
}

MeasureSample Population::sample_at(double t) const {
  MeasureSample s;
  s.time = t;
  s.trait_dim = trait_dim_;
  s.traits = traits_;
  s.ages.resize(size());
  for (std::size_t i = 0; i < size(); ++i) s.ages[i] = age_at(i, t);
  s.weight = 1.0 / scale_.value();
  return s;
}

double interaction_total(const Population& pop, const ModelSpec& spec, TraitView focal_trait,
                         double focal_age) {
  if (pop.empty()) return 0.0;
  if (spec.focal_only()) return spec.interaction_focal(focal_trait, focal_age) * pop.mass();
  return interaction_total_naive(pop, spec, focal_trait, focal_age);
}

double interaction_total_naive(const Population& pop, const ModelSpec& spec,
                               TraitView focal_trait, double focal_age) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    sum += spec.interaction(focal_trait, focal_age, pop.trait(i), pop.age(i));
  }
  return sum / pop.scale().value();
}

double total_event_rate_bound(const Population& pop, const ModelSpec& spec) {
  const double count = static_cast<double>(pop.size());
  if (count == 0.0) return 0.0;
  const double n = pop.scale().value();
  const double birth = n * spec.allometric_bound + spec.birth_bound;
  const double death = n * spec.allometric_bound + spec.death_bound + spec.interaction_bound * count / n;
  return count * (birth + death);
}

}  // namespace agetrait
