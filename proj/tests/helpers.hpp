#pragma once

#include <cmath>
#include <vector>

#include "metaforge/dataset.hpp"

namespace mftest {

inline bool near(double a, double b, double tol) {
  return std::isfinite(a) && std::isfinite(b) && std::abs(a - b) <= tol;
}

inline metaforge::MetaDataset make_dataset(std::vector<double> effects, std::vector<double> ses,
                                           metaforge::Metric metric = metaforge::Metric::generic) {
  std::vector<metaforge::EffectRecord> recs;
  for (size_t i = 0; i < effects.size(); ++i) {
    metaforge::EffectRecord r;
    r.effect = effects[i];
    r.se = ses[i];
    recs.push_back(std::move(r));
  }
  return metaforge::MetaDataset::create(std::move(recs), metric);
}

// One moderator column named "x".
inline metaforge::MetaDataset make_dataset_x(std::vector<double> effects, std::vector<double> ses,
                                             std::vector<double> x) {
  std::vector<metaforge::EffectRecord> recs;
  for (size_t i = 0; i < effects.size(); ++i) {
    metaforge::EffectRecord r;
    r.effect = effects[i];
    r.se = ses[i];
    r.moderators = {x[i]};
    recs.push_back(std::move(r));
  }
  return metaforge::MetaDataset::create(std::move(recs), metaforge::Metric::generic, {"x"});
}

}  // namespace mftest
