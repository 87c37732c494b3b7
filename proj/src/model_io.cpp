#include "qrfvimp/model_io.hpp"

#include <fstream>

#include "qrfvimp/errors.hpp"

namespace qrfvimp {

using nlohmann::json;

nlohmann::json model_to_json(const ForestModel& model) {
  const ResolvedForestConfig& cfg = model.config();
  json doc;
  doc["format"] = kModelFormatName;
  doc["version"] = kModelFormatVersion;
  doc["config"] = {
      {"num_trees", cfg.num_trees},     {"subsample_size", cfg.subsample_size},
      {"beta_used", cfg.beta_used},     {"alpha", cfg.alpha},
      {"min_leaf_est", cfg.min_leaf_est}, {"mtry", cfg.mtry},
      {"seed", cfg.seed},               {"tau", cfg.tau},
  };
  doc["query_dim"] = model.query_dim();
  doc["column_map"] = model.column_map();
  doc["fingerprint"] = {{"n_rows", model.data_fingerprint().n_rows},
                        {"n_cols", model.data_fingerprint().n_cols},
                        {"checksum", model.data_fingerprint().checksum}};
  doc["responses"] = model.responses();
  doc["feature_names"] = model.feature_names();
  doc["warnings"] = model.warnings();

  json trees = json::array();
  for (const TreeStructure& tree : model.trees()) {
    json nodes = json::array();
    for (const TreeNode& n : tree.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf, n.n_train});
    }
    json leaves = json::array();
    for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
      const auto members = tree.leaf(static_cast<std::int32_t>(l));
      leaves.push_back(std::vector<std::int32_t>(members.begin(), members.end()));
    }
    trees.push_back({{"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}});
  }
  doc["trees"] = std::move(trees);
  return doc;
}

namespace {

TreeStructure tree_from_json(const json& jt, std::size_t n_rows, std::size_t model_dim) {
  TreeStructure tree;
  const json& nodes = jt.at("nodes");
  const json& leaves = jt.at("leaves");
  tree.nodes.reserve(nodes.size());
  for (const json& jn : nodes) {
    if (!jn.is_array() || jn.size() != 6) throw SchemaError("model: malformed tree node");
    TreeNode node;
    node.feature = jn[0].get<std::int32_t>();
    node.threshold = jn[1].get<double>();
    node.left = jn[2].get<std::int32_t>();
    node.right = jn[3].get<std::int32_t>();
    node.leaf = jn[4].get<std::int32_t>();
    node.n_train = jn[5].get<std::int32_t>();
    tree.nodes.push_back(node);
  }
  if (tree.nodes.empty()) throw SchemaError("model: tree without nodes");

  tree.leaf_offsets.push_back(0);
  for (const json& jl : leaves) {
    for (const json& jm : jl) {
      auto id = jm.get<std::int64_t>();
      if (id < 0 || static_cast<std::size_t>(id) >= n_rows) {
        throw SchemaError("model: leaf member index out of range");
      }
      tree.leaf_members.push_back(static_cast<std::int32_t>(id));
    }
    tree.leaf_offsets.push_back(static_cast<std::int32_t>(tree.leaf_members.size()));
    if (tree.leaf_offsets.back() == *(tree.leaf_offsets.end() - 2)) {
      throw SchemaError("model: leaf without estimation members");
    }
  }

  const auto n_nodes = static_cast<std::int32_t>(tree.nodes.size());
  const auto n_leaves = static_cast<std::int32_t>(tree.num_leaves());
  for (const TreeNode& node : tree.nodes) {
    if (node.feature >= 0) {
      if (static_cast<std::size_t>(node.feature) >= model_dim ||
          node.left < 0 || node.left >= n_nodes || node.right < 0 || node.right >= n_nodes) {
        throw SchemaError("model: invalid internal node");
      }
    } else if (node.leaf < 0 || node.leaf >= n_leaves) {
      throw SchemaError("model: invalid leaf reference");
    }
  }
  return tree;
}

}  // namespace

ForestModel model_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kModelFormatName) {
      throw SchemaError("model: unrecognized format tag");
    }
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw SchemaError("model: unsupported format version");
    }
    const json& jc = doc.at("config");
    ResolvedForestConfig cfg;
    cfg.num_trees = jc.at("num_trees").get<int>();
    cfg.subsample_size = jc.at("subsample_size").get<std::size_t>();
    cfg.beta_used = jc.at("beta_used").get<double>();
    cfg.alpha = jc.at("alpha").get<double>();
    cfg.min_leaf_est = jc.at("min_leaf_est").get<std::size_t>();
    cfg.mtry = jc.at("mtry").get<std::size_t>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();
    cfg.tau = jc.at("tau").get<double>();

    DataFingerprint fp;
    fp.n_rows = doc.at("fingerprint").at("n_rows").get<std::size_t>();
    fp.n_cols = doc.at("fingerprint").at("n_cols").get<std::size_t>();
    fp.checksum = doc.at("fingerprint").at("checksum").get<std::uint64_t>();

    const auto query_dim = doc.at("query_dim").get<std::size_t>();
    auto column_map = doc.at("column_map").get<std::vector<std::size_t>>();
    for (std::size_t c : column_map) {
      if (c >= query_dim) throw SchemaError("model: column map entry out of range");
    }

    std::vector<TreeStructure> trees;
    for (const json& jt : doc.at("trees")) {
      trees.push_back(tree_from_json(jt, fp.n_rows, column_map.size()));
    }
    if (trees.size() != static_cast<std::size_t>(cfg.num_trees)) {
      throw SchemaError("model: tree count does not match config");
    }

    auto responses = doc.at("responses").get<std::vector<double>>();
    std::vector<std::string> warnings;
    if (doc.contains("warnings")) warnings = doc.at("warnings").get<std::vector<std::string>>();
    std::vector<std::string> names;
    if (doc.contains("feature_names")) {
      names = doc.at("feature_names").get<std::vector<std::string>>();
    }
    return ForestModel::from_parts(cfg, std::move(trees), std::move(column_map), fp, query_dim,
                                   std::move(responses), std::move(warnings), std::move(names));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model: malformed document: ") + e.what());
  }
}

void save_model(const ForestModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_model: cannot open '" + path + "' for writing");
  out << model_to_json(model).dump(1) << '\n';
  if (!out) throw IoError("save_model: write failed for '" + path + "'");
}

ForestModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("load_model: invalid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

}  // namespace qrfvimp
