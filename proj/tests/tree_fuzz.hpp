#pragma once

#include <random>
#include <string>

#include "kge/knowledge.hpp"

namespace kge::testing {

struct FuzzStats {
  std::size_t applied = 0;
  std::size_t rejected = 0;
};

// Applies one random create / refine / filter / delete edit. Edits the
// library rejects with a domain error leave the tree unchanged.
inline KnowledgeTree random_edit(const KnowledgeTree& tree, const Dataset& ds, std::mt19937_64& rng, FuzzStats& stats) {
  std::vector<int> live;
  for (const auto& nd : tree.nodes())
    if (!nd.removed) live.push_back(nd.id);
  auto pick = [&](const std::vector<int>& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };

  const int op = std::uniform_int_distribution<int>(0, 9)(rng);
  try {
    if (op <= 2) {  // delete
      std::vector<int> cand;
      for (int id : live)
        if (id != 0) cand.push_back(id);
      if (cand.empty()) {
        ++stats.rejected;
        return tree;
      }
      auto out = delete_class(tree, pick(cand));
      ++stats.applied;
      return out;
    }
    // create / refine / filter
    std::vector<int> cand;
    for (int id : live)
      if (id == 0 || tree.is_leaf(id)) cand.push_back(id);
    const int node = pick(cand);
    const bool numeric = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    const std::string attr = numeric ? "num" : "cat";
    const int resolution = std::uniform_int_distribution<int>(1, 6)(rng);
    const auto rows = tree.support(ds, node);
    if (rows.empty()) {
      ++stats.rejected;
      return tree;
    }
    const auto bins = discretize(ds, attr, resolution, rows);
    const int groups = std::uniform_int_distribution<int>(1, static_cast<int>(bins.size()))(rng);
    const bool filter = op >= 7;
    std::vector<int> map(bins.size());
    for (auto& g : map) g = std::uniform_int_distribution<int>(filter ? -1 : 0, groups - 1)(rng);
    // Densify group ids.
    std::vector<int> remap(static_cast<std::size_t>(groups), -1);
    int next = 0;
    for (auto& g : map) {
      if (g < 0) continue;
      if (remap[static_cast<std::size_t>(g)] < 0) remap[static_cast<std::size_t>(g)] = next++;
      g = remap[static_cast<std::size_t>(g)];
    }
    KnowledgeTree out = tree.is_class(node) && node != 0 && op % 2 == 0 ? refine_class(tree, ds, node, bins, map)
                                                                          : create_classes(tree, ds, node, bins, map);
    ++stats.applied;
    return out;
  } catch (const Error&) {
    ++stats.rejected;
    return tree;
  }
}

}  // namespace kge::testing
