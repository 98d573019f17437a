#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "xshot/templates.hpp"
#include "xshot/types.hpp"

namespace xshot {

// Number of negative labels per training instance; nullopt means "all".
struct NegativesMode {
  std::optional<int> k;

  static NegativesMode all() { return {}; }
  static NegativesMode sampled(int k) { return {k}; }
};

// One triplet per non-"None" label in canonical order, polarity unknown.
std::vector<TripletExample> expand_for_evaluation(const RawInstance& inst, const LabelSpace& space,
                                                  const RenderTemplate& tmpl);

std::vector<TripletExample> build_eval_triplets(const std::vector<RawInstance>& instances,
                                                const LabelSpace& space,
                                                const RenderTemplate& tmpl);

// Per instance: one yes-triplet for the gold label plus negatives (all other
// labels, or a seeded sample of k). Emitted in instance order, then canonical
// label order within an instance.
std::vector<TripletExample> build_target_training_set(const std::vector<RawInstance>& train,
                                                      const LabelSpace& space,
                                                      const RenderTemplate& tmpl,
                                                      NegativesMode negatives, std::uint64_t seed);

}  // namespace xshot
