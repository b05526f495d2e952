#pragma once

#include <map>
#include <string>
#include <vector>

#include "metabias/dataset.hpp"

namespace testing_support {

// One estimate per entry; study ids given as integers.
inline metabias::MetaDataset make_data(const std::vector<double>& theta, const std::vector<double>& se,
                                       const std::vector<int>& study = {},
                                       const std::map<std::string, std::vector<double>>& moderators = {},
                                       const std::vector<metabias::ModeratorSpec>& schema = {}) {
  std::vector<metabias::EffectEstimate> rows;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    metabias::EffectEstimate e;
    e.estimate_id = std::to_string(i + 1);
    e.study_id = "s" + std::to_string(study.empty() ? static_cast<int>(i) : study[i]);
    e.theta = theta[i];
    e.se = se[i];
    for (const auto& [name, col] : moderators) e.moderators[name] = col[i];
    rows.push_back(e);
  }
  std::vector<metabias::ModeratorSpec> specs = schema;
  if (specs.empty())
    for (const auto& [name, col] : moderators) specs.push_back({name, metabias::ModeratorKind::continuous});
  return metabias::MetaDataset(std::move(rows), metabias::ModeratorSchema(specs));
}

}  // namespace testing_support
