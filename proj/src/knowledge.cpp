#include "kge/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "kge/cluster.hpp"

namespace kge {

namespace {

std::vector<std::size_t> all_rows(const Dataset& ds, std::span<const std::size_t> rows) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<std::size_t> out(ds.n());
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::optional<std::size_t> BinSet::bin_of(const Dataset& ds, std::size_t row) const {
  const std::size_t a = ds.index_of(attribute);
  if (kind == AttributeKind::Numeric) {
    const double v = ds.numeric(a)[row];
    if (edges.size() < 2 || v < edges.front() || v > edges.back()) return std::nullopt;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t idx = static_cast<std::size_t>(it - edges.begin()) - 1;
    return std::min(idx, size() - 1);
  }
  const auto& v = ds.categorical(a)[row];
  auto it = std::lower_bound(values.begin(), values.end(), v);
  if (it == values.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - values.begin());
}

std::string BinSet::label(std::size_t bin) const {
  if (kind == AttributeKind::Categorical) return values.at(bin);
  const bool last = bin + 1 == size();
  return "[" + format_number(edges.at(bin)) + ", " + format_number(edges.at(bin + 1)) + (last ? "]" : ")");
}

BinSet discretize(const Dataset& ds, std::string_view attr, int resolution, std::span<const std::size_t> rows) {
  const std::size_t a = ds.index_of(attr);
  const auto idx = all_rows(ds, rows);
  if (idx.empty()) throw Error(Errc::NoActiveSamples, "no rows to discretize");
  BinSet out;
  out.attribute = std::string(attr);
  out.kind = ds.schema()[a].kind;
  if (out.kind == AttributeKind::Categorical) {
    std::set<std::string> distinct;
    for (auto r : idx) distinct.insert(ds.categorical(a)[r]);
    out.values.assign(distinct.begin(), distinct.end());
    return out;
  }
  if (resolution < 1) throw Error(Errc::InvalidArgument, "resolution must be at least 1");
  const auto& col = ds.numeric(a);
  double lo = col[idx.front()], hi = lo;
  for (auto r : idx) {
    lo = std::min(lo, col[r]);
    hi = std::max(hi, col[r]);
  }
  if (lo == hi && resolution > 1)
    throw Error(Errc::DegenerateRange, "attribute '" + out.attribute + "' is constant; cannot split into " +
                                           std::to_string(resolution) + " bins");
  out.edges.resize(static_cast<std::size_t>(resolution) + 1);
  for (int i = 0; i <= resolution; ++i) out.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / resolution;
  out.edges.front() = lo;
  out.edges.back() = hi;
  return out;
}

BinSet discretize_with_edges(const Dataset& ds, std::string_view attr, std::vector<double> edges) {
  const std::size_t a = ds.index_of(attr);
  if (ds.schema()[a].kind != AttributeKind::Numeric)
    throw Error(Errc::InvalidArgument, "explicit edges require a numeric attribute");
  if (edges.size() < 2) throw Error(Errc::InvalidArgument, "need at least two edges");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (!(edges[i] < edges[i + 1]) || !std::isfinite(edges[i]) || !std::isfinite(edges[i + 1]))
      throw Error(Errc::InvalidArgument, "edges must be finite and strictly increasing");
  BinSet out;
  out.attribute = std::string(attr);
  out.kind = AttributeKind::Numeric;
  out.edges = std::move(edges);
  return out;
}

std::vector<std::size_t> bin_counts(const Dataset& ds, const BinSet& bins, std::span<const std::size_t> rows) {
  std::vector<std::size_t> counts(bins.size(), 0);
  for (auto r : all_rows(ds, rows))
    if (auto b = bins.bin_of(ds, r)) ++counts[*b];
  return counts;
}

std::vector<GroupFeature> group_features(const Dataset& ds, const BinSet& bins, const std::vector<std::string>& grouping_attrs,
                                         std::span<const std::size_t> rows) {
  const auto idx = all_rows(ds, rows);
  std::vector<std::vector<std::size_t>> members(bins.size());
  for (auto r : idx)
    if (auto b = bins.bin_of(ds, r)) members[*b].push_back(r);

  std::vector<GroupFeature> out;
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (!members[b].empty()) out.push_back(GroupFeature{b, {}, members[b].size()});
  if (out.empty()) throw Error(Errc::NoActiveSamples, "no samples fall into any bin");

  for (const auto& name : grouping_attrs) {
    const std::size_t a = ds.index_of(name);
    if (ds.schema()[a].kind == AttributeKind::Numeric) {
      const auto& col = ds.numeric(a);
      std::vector<double> means;
      for (const auto& f : out) {
        double s = 0;
        for (auto r : members[f.bin]) s += col[r];
        means.push_back(s / static_cast<double>(f.member_count));
      }
      const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
      const double span = *hi - *lo;
      const double base = *lo;
      for (std::size_t g = 0; g < out.size(); ++g) out[g].vector.push_back(span > 0 ? (means[g] - base) / span : 0.0);
    } else {
      const auto& col = ds.categorical(a);
      std::set<std::string> distinct;
      for (auto r : idx) distinct.insert(col[r]);
      const std::vector<std::string> values(distinct.begin(), distinct.end());
      for (auto& f : out) {
        std::vector<double> onehot(values.size(), 0.0);
        for (auto r : members[f.bin]) {
          auto it = std::lower_bound(values.begin(), values.end(), col[r]);
          onehot[static_cast<std::size_t>(it - values.begin())] += 1.0;
        }
        for (double v : onehot) f.vector.push_back(v / static_cast<double>(f.member_count));
      }
    }
  }
  return out;
}

std::vector<int> suggest_grouping(const std::vector<GroupFeature>& features, int k, std::uint64_t seed) {
  if (k < 1) throw Error(Errc::InvalidArgument, "K must be positive");
  if (static_cast<std::size_t>(k) > features.size())
    throw Error(Errc::TooManyClusters, "K=" + std::to_string(k) + " exceeds " + std::to_string(features.size()) + " bins");
  const std::size_t dims = features.front().vector.size();
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(dims));
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = 0; j < dims; ++j) pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i].vector[j];
  return kmeans(pts, k, seed).assignment;
}

std::vector<std::size_t> LabelAssignment::active_rows() const {
  std::vector<std::size_t> out;
  out.reserve(active_count);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// KnowledgeTree

KnowledgeTree::KnowledgeTree(std::size_t sample_count) : sample_count_(sample_count) {
  TreeNode root;
  root.id = 0;
  root.colorful = true;
  root.color = next_color_++;
  nodes_.push_back(std::move(root));
}

const TreeNode& KnowledgeTree::node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw Error(Errc::InvalidNode, "no node " + std::to_string(id));
  return nodes_[static_cast<std::size_t>(id)];
}

bool KnowledgeTree::is_live(int id) const { return id >= 0 && static_cast<std::size_t>(id) < nodes_.size() && !node(id).removed; }

std::vector<int> KnowledgeTree::live_children(int id) const {
  std::vector<int> out;
  for (int c : node(id).children)
    if (!node(c).removed) out.push_back(c);
  return out;
}

bool KnowledgeTree::is_leaf(int id) const { return is_live(id) && live_children(id).empty(); }

bool KnowledgeTree::is_class(int id) const { return is_leaf(id) && node(id).colorful; }

std::vector<int> KnowledgeTree::class_nodes() const {
  std::vector<int> out;
  std::function<void(int)> walk = [&](int id) {
    const auto live = live_children(id);
    if (live.empty()) {
      if (node(id).colorful) out.push_back(id);
      return;
    }
    for (int c : live) walk(c);
  };
  walk(0);
  return out;
}

std::vector<int> KnowledgeTree::split_nodes() const {
  std::vector<int> out;
  std::function<void(int)> walk = [&](int id) {
    if (node(id).split) out.push_back(id);
    for (int c : live_children(id)) walk(c);
  };
  walk(0);
  return out;
}

std::vector<std::optional<int>> KnowledgeTree::sample_leaves(const Dataset& ds) const {
  if (ds.n() != sample_count_) throw Error(Errc::InvalidArgument, "tree was built for a different dataset");
  std::vector<std::optional<int>> out(sample_count_);
  for (std::size_t r = 0; r < sample_count_; ++r) {
    int cur = 0;
    bool excluded = false;
    while (true) {
      const TreeNode& nd = node(cur);
      if (nd.children.empty()) break;
      const auto bin = nd.split->bin_of(ds, r);
      const int group = bin ? nd.bin_to_group[*bin] : -1;
      if (group < 0) {
        excluded = true;
        break;
      }
      const int child = nd.children[static_cast<std::size_t>(group)];
      if (node(child).removed) {
        excluded = true;
        break;
      }
      cur = child;
    }
    if (!excluded && node(cur).colorful) out[r] = cur;
  }
  return out;
}

std::vector<std::size_t> KnowledgeTree::support(const Dataset& ds, int id) const {
  if (!is_live(id)) throw Error(Errc::InvalidNode, "node " + std::to_string(id) + " is not live");
  // Rows whose path from the root passes through `id`, before any split of `id` itself.
  std::vector<int> path;
  for (int cur = id; cur != -1; cur = node(cur).parent) path.push_back(cur);
  std::reverse(path.begin(), path.end());
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < sample_count_; ++r) {
    bool inside = true;
    for (std::size_t k = 0; k + 1 < path.size() && inside; ++k) {
      const TreeNode& nd = node(path[k]);
      const auto bin = nd.split->bin_of(ds, r);
      inside = bin && nd.bin_to_group[*bin] == node(path[k + 1]).group;
    }
    if (inside) out.push_back(r);
  }
  return out;
}

KnowledgeTree apply_split(const KnowledgeTree& tree, const Dataset& ds, int node_id, BinSet bins,
                          const std::vector<int>& bin_to_group, bool require_class) {
  if (!tree.is_live(node_id)) throw Error(Errc::InvalidNode, "node " + std::to_string(node_id) + " is not live");
  if (node_id != 0 && !tree.is_leaf(node_id))
    throw Error(Errc::InvalidNode, "node " + std::to_string(node_id) + " is neither the root nor a leaf");
  if (require_class && !tree.is_class(node_id))
    throw Error(Errc::InvalidNode, "node " + std::to_string(node_id) + " is not a class leaf");
  if (bin_to_group.size() != bins.size())
    throw Error(Errc::InvalidArgument, "binToGroup has " + std::to_string(bin_to_group.size()) + " entries for " +
                                           std::to_string(bins.size()) + " bins");
  int groups = 0;
  for (int g : bin_to_group) {
    if (g < -1) throw Error(Errc::InvalidArgument, "group ids must be >= -1");
    groups = std::max(groups, g + 1);
  }
  if (groups == 0) throw Error(Errc::EmptyGroup, "every bin is filtered");
  std::vector<char> used(static_cast<std::size_t>(groups), 0);
  for (int g : bin_to_group)
    if (g >= 0) used[static_cast<std::size_t>(g)] = 1;
  for (int g = 0; g < groups; ++g)
    if (!used[static_cast<std::size_t>(g)]) throw Error(Errc::InvalidArgument, "group ids must be dense; group " + std::to_string(g) + " has no bins");

  const auto parent_rows = tree.support(ds, node_id);
  const auto counts = bin_counts(ds, bins, parent_rows);
  std::vector<std::size_t> group_sizes(static_cast<std::size_t>(groups), 0);
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (bin_to_group[b] >= 0) group_sizes[static_cast<std::size_t>(bin_to_group[b])] += counts[b];
  for (int g = 0; g < groups; ++g)
    if (group_sizes[static_cast<std::size_t>(g)] == 0)
      throw Error(Errc::EmptyGroup, "group " + std::to_string(g) + " contains no samples of node " + std::to_string(node_id));

  KnowledgeTree out = tree;
  // Re-creating a split discards the previous subtree.
  std::function<void(int)> drop = [&](int id) {
    auto& nd = out.nodes_[static_cast<std::size_t>(id)];
    nd.removed = true;
    for (int c : nd.children) drop(c);
  };
  for (int c : out.nodes_[static_cast<std::size_t>(node_id)].children) drop(c);

  std::vector<int> children;
  for (int g = 0; g < groups; ++g) {
    TreeNode child;
    child.id = static_cast<int>(out.nodes_.size());
    child.parent = node_id;
    child.group = g;
    child.colorful = true;
    child.color = out.next_color_++;
    children.push_back(child.id);
    out.nodes_.push_back(std::move(child));
  }
  auto& parent = out.nodes_[static_cast<std::size_t>(node_id)];
  parent.children = std::move(children);
  parent.split = std::move(bins);
  parent.bin_to_group = bin_to_group;
  parent.colorful = false;
  return out;
}

KnowledgeTree create_classes(const KnowledgeTree& tree, const Dataset& ds, int node, const BinSet& bins,
                             const std::vector<int>& bin_to_group) {
  return apply_split(tree, ds, node, bins, bin_to_group, false);
}

KnowledgeTree create_classes(const KnowledgeTree& tree, const Dataset& ds, int node, std::string_view attr, int resolution,
                             const std::vector<int>& bin_to_group) {
  const auto rows = tree.support(ds, node);
  if (rows.empty()) throw Error(Errc::EmptyGroup, "node " + std::to_string(node) + " has no samples");
  return apply_split(tree, ds, node, discretize(ds, attr, resolution, rows), bin_to_group, false);
}

KnowledgeTree refine_class(const KnowledgeTree& tree, const Dataset& ds, int leaf, const BinSet& bins,
                           const std::vector<int>& bin_to_group) {
  return apply_split(tree, ds, leaf, bins, bin_to_group, true);
}

KnowledgeTree refine_class(const KnowledgeTree& tree, const Dataset& ds, int leaf, std::string_view attr, int resolution,
                           const std::vector<int>& bin_to_group) {
  if (!tree.is_class(leaf)) throw Error(Errc::InvalidNode, "node " + std::to_string(leaf) + " is not a class leaf");
  const auto rows = tree.support(ds, leaf);
  return apply_split(tree, ds, leaf, discretize(ds, attr, resolution, rows), bin_to_group, true);
}

KnowledgeTree delete_class(const KnowledgeTree& tree, int node) {
  if (node == 0) throw Error(Errc::CannotDeleteRoot, "the root cannot be deleted");
  if (!tree.is_live(node)) throw Error(Errc::InvalidNode, "node " + std::to_string(node) + " is not live");
  KnowledgeTree out = tree;
  std::function<void(int)> drop = [&](int id) {
    auto& nd = out.nodes_[static_cast<std::size_t>(id)];
    nd.removed = true;
    for (int c : nd.children) drop(c);
  };
  drop(node);
  return out;
}

LabelAssignment derive_labels(const KnowledgeTree& tree, const Dataset& ds) {
  LabelAssignment la;
  la.class_nodes = tree.class_nodes();
  if (la.class_nodes.empty()) throw Error(Errc::NoValidClasses, "the tree has no class leaves");
  std::map<int, int> class_of;
  for (std::size_t c = 0; c < la.class_nodes.size(); ++c) class_of[la.class_nodes[c]] = static_cast<int>(c);
  la.class_sizes.assign(la.class_nodes.size(), 0);
  const auto leaves = tree.sample_leaves(ds);
  la.labels.resize(leaves.size());
  for (std::size_t r = 0; r < leaves.size(); ++r) {
    if (!leaves[r]) continue;
    const int c = class_of.at(*leaves[r]);
    la.labels[r] = c;
    ++la.class_sizes[static_cast<std::size_t>(c)];
    ++la.active_count;
  }
  for (std::size_t c = 0; c < la.class_sizes.size(); ++c)
    if (la.class_sizes[c] == 0) throw Error(Errc::NoValidClasses, "class " + std::to_string(c) + " has no samples");
  la.single_class = la.class_nodes.size() == 1;
  return la;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json binset_to_json(const BinSet& b) {
  nlohmann::json j = {{"attribute", b.attribute}, {"kind", b.kind == AttributeKind::Numeric ? "numeric" : "categorical"}};
  if (b.kind == AttributeKind::Numeric) j["edges"] = b.edges;
  else j["values"] = b.values;
  return j;
}

BinSet binset_from_json(const nlohmann::json& j) {
  BinSet b;
  b.attribute = j.at("attribute").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "numeric") {
    b.kind = AttributeKind::Numeric;
    b.edges = j.at("edges").get<std::vector<double>>();
    if (b.edges.size() < 2) throw Error(Errc::InvalidArgument, "numeric bins need at least two edges");
  } else if (kind == "categorical") {
    b.kind = AttributeKind::Categorical;
    b.values = j.at("values").get<std::vector<std::string>>();
    if (!std::is_sorted(b.values.begin(), b.values.end())) throw Error(Errc::InvalidArgument, "categorical bins must be sorted");
  } else {
    throw Error(Errc::InvalidArgument, "unknown bin kind '" + kind + "'");
  }
  return b;
}

nlohmann::json KnowledgeTree::to_json() const {
  auto nodes = nlohmann::json::array();
  for (const auto& nd : nodes_) {
    nlohmann::json j = {{"id", nd.id},           {"parent", nd.parent},     {"group", nd.group},
                        {"color", nd.color},     {"colorful", nd.colorful}, {"removed", nd.removed},
                        {"children", nd.children}};
    if (nd.split) {
      j["split"] = binset_to_json(*nd.split);
      j["binToGroup"] = nd.bin_to_group;
    }
    nodes.push_back(std::move(j));
  }
  return {{"sampleCount", sample_count_}, {"nextColor", next_color_}, {"nodes", std::move(nodes)}};
}

KnowledgeTree KnowledgeTree::from_json(const nlohmann::json& j) {
  try {
    KnowledgeTree t(j.at("sampleCount").get<std::size_t>());
    t.next_color_ = j.at("nextColor").get<int>();
    t.nodes_.clear();
    for (const auto& jn : j.at("nodes")) {
      TreeNode nd;
      nd.id = jn.at("id").get<int>();
      nd.parent = jn.at("parent").get<int>();
      nd.group = jn.at("group").get<int>();
      nd.color = jn.at("color").get<int>();
      nd.colorful = jn.at("colorful").get<bool>();
      nd.removed = jn.at("removed").get<bool>();
      nd.children = jn.at("children").get<std::vector<int>>();
      if (jn.contains("split")) {
        nd.split = binset_from_json(jn.at("split"));
        nd.bin_to_group = jn.at("binToGroup").get<std::vector<int>>();
      }
      if (nd.id != static_cast<int>(t.nodes_.size())) throw Error(Errc::InvalidArgument, "node ids must be dense and ordered");
      t.nodes_.push_back(std::move(nd));
    }
    if (t.nodes_.empty() || t.nodes_[0].parent != -1) throw Error(Errc::InvalidArgument, "missing root node");
    for (const auto& nd : t.nodes_) {
      if (!nd.children.empty() && (!nd.split || nd.bin_to_group.size() != nd.split->size()))
        throw Error(Errc::InvalidArgument, "node " + std::to_string(nd.id) + " has children but no consistent split");
      for (int c : nd.children)
        if (c <= nd.id || static_cast<std::size_t>(c) >= t.nodes_.size() || t.nodes_[static_cast<std::size_t>(c)].parent != nd.id)
          throw Error(Errc::InvalidArgument, "inconsistent child link at node " + std::to_string(nd.id));
      for (int g : nd.bin_to_group)
        if (g >= static_cast<int>(nd.children.size())) throw Error(Errc::InvalidArgument, "binToGroup refers to a missing child");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed tree: ") + e.what());
  }
}

}  // namespace kge
