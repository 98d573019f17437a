#include "xshot/triplets.hpp"

#include <set>

#include "xshot/rng.hpp"

namespace xshot {

namespace {
constexpr const char* kModuleTag = "triplet-builder";

TripletExample make_triplet(const RawInstance& inst, const LabelSpace& space,
                            const RenderTemplate& tmpl, const std::string& label,
                            Polarity polarity) {
  TripletExample t;
  t.triplet_id = make_triplet_id(inst.id, label);
  t.instance_id = inst.id;
  t.instruction = tmpl.instruction;
  t.input = render_input(inst, tmpl, label);
  t.label = label;
  t.polarity = polarity;
  t.group = space.group_of(label);
  return t;
}

}  // namespace

std::vector<TripletExample> expand_for_evaluation(const RawInstance& inst, const LabelSpace& space,
                                                  const RenderTemplate& tmpl) {
  std::vector<TripletExample> out;
  for (const auto& label : space.labels) {
    if (label == kNoneLabel) continue;  // "None" is decided by thresholding, never scored
    out.push_back(make_triplet(inst, space, tmpl, label, Polarity::unknown));
  }
  return out;
}

std::vector<TripletExample> build_eval_triplets(const std::vector<RawInstance>& instances,
                                                const LabelSpace& space,
                                                const RenderTemplate& tmpl) {
  std::vector<TripletExample> out;
  for (const auto& inst : instances) {
    auto expanded = expand_for_evaluation(inst, space, tmpl);
    out.insert(out.end(), expanded.begin(), expanded.end());
  }
  return out;
}

std::vector<TripletExample> build_target_training_set(const std::vector<RawInstance>& train,
                                                      const LabelSpace& space,
                                                      const RenderTemplate& tmpl,
                                                      NegativesMode negatives, std::uint64_t seed) {
  const auto scorable = space.scorable_labels();
  if (negatives.k && *negatives.k >= static_cast<int>(space.labels.size()))
    throw ValidationError("negatives_per_positive " + std::to_string(*negatives.k) +
                          " >= label space size; use \"all\"");

  const std::uint64_t module_seed = derive_seed(seed, kModuleTag);

  std::vector<TripletExample> out;
  for (const auto& inst : train) {
    if (!inst.gold_label || *inst.gold_label == kNoneLabel)
      throw ValidationError("train instance \"" + inst.id + "\" has no usable gold label");
    const std::string& gold = *inst.gold_label;
    if (!space.contains(gold))
      throw ValidationError("train instance \"" + inst.id + "\": gold label \"" + gold +
                            "\" not in label space");

    std::set<std::string> chosen;
    if (!negatives.k) {
      for (const auto& label : scorable)
        if (label != gold) chosen.insert(label);
    } else {
      std::vector<std::string> others;
      for (const auto& label : scorable)
        if (label != gold) others.push_back(label);
      Rng rng(derive_seed(module_seed, inst.id));
      for (auto idx : rng.sample_indices(others.size(), static_cast<std::size_t>(*negatives.k)))
        chosen.insert(others[idx]);
    }

    // canonical label order within the instance
    for (const auto& label : scorable) {
      if (label == gold)
        out.push_back(make_triplet(inst, space, tmpl, label, Polarity::yes));
      else if (chosen.count(label))
        out.push_back(make_triplet(inst, space, tmpl, label, Polarity::no));
    }
  }
  return out;
}

}  // namespace xshot
