#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kge/dataset.hpp"

namespace kge {

// Discretization of one attribute. Numeric bins are [edges[i], edges[i+1])
// with the last bin closed on the right; categorical bins are one per value.
struct BinSet {
  std::string attribute;
  AttributeKind kind = AttributeKind::Numeric;
  std::vector<double> edges;
  std::vector<std::string> values;

  std::size_t size() const { return kind == AttributeKind::Numeric ? edges.size() - 1 : values.size(); }
  std::optional<std::size_t> bin_of(const Dataset& ds, std::size_t row) const;
  std::string label(std::size_t bin) const;

  bool operator==(const BinSet&) const = default;
};

// Bins over the rows in `rows` (all rows when empty).
BinSet discretize(const Dataset& ds, std::string_view attr, int resolution, std::span<const std::size_t> rows = {});
// Numeric discretization with caller-supplied, strictly increasing edges.
BinSet discretize_with_edges(const Dataset& ds, std::string_view attr, std::vector<double> edges);

// Per-bin member counts restricted to `rows` (all rows when empty).
std::vector<std::size_t> bin_counts(const Dataset& ds, const BinSet& bins, std::span<const std::size_t> rows = {});

struct GroupFeature {
  std::size_t bin = 0;
  std::vector<double> vector;
  std::size_t member_count = 0;
};

// One feature per non-empty bin: numeric attributes contribute member means
// min-max scaled across bins, categorical attributes contribute the mean
// one-hot vector over their distinct values.
std::vector<GroupFeature> group_features(const Dataset& ds, const BinSet& bins, const std::vector<std::string>& grouping_attrs,
                                         std::span<const std::size_t> rows = {});

// K-means suggestion over group features; returns one cluster id per feature.
std::vector<int> suggest_grouping(const std::vector<GroupFeature>& features, int k, std::uint64_t seed);

struct TreeNode {
  int id = 0;
  int parent = -1;
  int group = -1;  // index of this node among its parent's split groups
  int color = -1;
  bool colorful = false;
  bool removed = false;
  std::vector<int> children;
  // Present when the node has been split into children.
  std::optional<BinSet> split;
  std::vector<int> bin_to_group;  // -1 marks a filtered bin

  bool operator==(const TreeNode&) const = default;
};

struct LabelAssignment {
  std::vector<std::optional<int>> labels;
  std::size_t active_count = 0;
  std::vector<std::size_t> class_sizes;
  std::vector<int> class_nodes;  // tree node id of each class
  bool single_class = false;     // training with one class makes the classification loss vanish

  std::size_t num_classes() const { return class_sizes.size(); }
  std::vector<std::size_t> active_rows() const;
};

// Hierarchy of classes created by splitting nodes on discretized attributes.
// Value type: every edit returns a new tree and leaves the original intact.
class KnowledgeTree {
 public:
  explicit KnowledgeTree(std::size_t sample_count = 0);

  std::size_t sample_count() const { return sample_count_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int id) const;
  bool is_live(int id) const;
  bool is_leaf(int id) const;
  bool is_class(int id) const;
  std::vector<int> live_children(int id) const;
  // Colorful leaves in depth-first order; position = class id.
  std::vector<int> class_nodes() const;
  // Live nodes (root included) that carry a split, depth-first.
  std::vector<int> split_nodes() const;

  // Node id reached by each row, or nullopt when the row is filtered or deleted.
  std::vector<std::optional<int>> sample_leaves(const Dataset& ds) const;
  std::vector<std::size_t> support(const Dataset& ds, int node) const;

  nlohmann::json to_json() const;
  static KnowledgeTree from_json(const nlohmann::json& j);

  bool operator==(const KnowledgeTree&) const = default;

 private:
  friend KnowledgeTree apply_split(const KnowledgeTree&, const Dataset&, int, BinSet, const std::vector<int>&, bool);
  friend KnowledgeTree delete_class(const KnowledgeTree&, int);

  std::size_t sample_count_ = 0;
  int next_color_ = 0;
  std::vector<TreeNode> nodes_;
};

// Splits `node` (the root or a node without live children) into one child
// per group. Bins mapped to -1 are filtered: their samples leave the subtree.
KnowledgeTree create_classes(const KnowledgeTree& tree, const Dataset& ds, int node, const BinSet& bins,
                             const std::vector<int>& bin_to_group);
KnowledgeTree create_classes(const KnowledgeTree& tree, const Dataset& ds, int node, std::string_view attr, int resolution,
                             const std::vector<int>& bin_to_group);
// Same as create_classes, restricted to class leaves.
KnowledgeTree refine_class(const KnowledgeTree& tree, const Dataset& ds, int leaf, std::string_view attr, int resolution,
                           const std::vector<int>& bin_to_group);
KnowledgeTree refine_class(const KnowledgeTree& tree, const Dataset& ds, int leaf, const BinSet& bins,
                           const std::vector<int>& bin_to_group);
KnowledgeTree delete_class(const KnowledgeTree& tree, int node);

LabelAssignment derive_labels(const KnowledgeTree& tree, const Dataset& ds);

nlohmann::json binset_to_json(const BinSet& b);
BinSet binset_from_json(const nlohmann::json& j);

}  // namespace kge
