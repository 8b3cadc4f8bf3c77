#include "plotcast/gbm.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "plotcast/frames.hpp"

namespace plotcast {

int RegressionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

int RegressionTree::depth() const {
  std::vector<int> depth(nodes_.size(), 0);
  int max_depth = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.feature < 0) continue;
    depth[static_cast<std::size_t>(n.left)] = depth[i] + 1;
    depth[static_cast<std::size_t>(n.right)] = depth[i] + 1;
    max_depth = std::max(max_depth, depth[i] + 1);
  }
  return max_depth;
}

double RegressionTree::min_leaf() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& n : nodes_)
    if (n.feature < 0) m = std::min(m, n.value);
  return m;
}

double RegressionTree::max_leaf() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& n : nodes_)
    if (n.feature < 0) m = std::max(m, n.value);
  return m;
}

namespace {

double running_mean(const Eigen::VectorXd& values, std::span<const int> rows) {
  double mean = 0.0;
  long k = 0;
  for (int r : rows) mean += (values[r] - mean) / static_cast<double>(++k);
  return mean;
}

struct Split {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct OpenLeaf {
  int node = 0;
  int depth = 0;
  std::vector<int> rows;
  Split split;
};

Split best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& rows,
                 int min_samples_leaf) {
  Split best;
  const auto n = static_cast<long>(rows.size());
  if (n < 2L * min_samples_leaf || n < 2) return best;

  double total = 0.0, total_sq = 0.0;
  for (int r : rows) {
    total += y[r];
    total_sq += y[r] * y[r];
  }
  const double parent = total * total / static_cast<double>(n);

  std::vector<int> order(rows);
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
    double left = 0.0;
    for (long i = 0; i + 1 < n; ++i) {
      left += y[order[static_cast<std::size_t>(i)]];
      const double xv = x(order[static_cast<std::size_t>(i)], f);
      const double xn = x(order[static_cast<std::size_t>(i + 1)], f);
      if (!(xv < xn)) continue;
      const long n_left = i + 1;
      const long n_right = n - n_left;
      if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;
      const double right = total - left;
      const double gain = left * left / static_cast<double>(n_left) + right * right / static_cast<double>(n_right) - parent;
      if (gain > best.gain) {
        best.valid = true;
        best.gain = gain;
        best.feature = static_cast<int>(f);
        best.threshold = 0.5 * (xv + xn);
      }
    }
  }
  // Gains at rounding level are not real structure.
  if (best.valid && best.gain <= 1e-12 * total_sq) best = Split{};
  return best;
}

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, const GbmConfig& config) {
  std::vector<RegressionTree::Node> nodes(1);
  std::vector<int> all(static_cast<std::size_t>(features.rows()));
  std::iota(all.begin(), all.end(), 0);
  nodes[0].value = running_mean(targets, all);

  const int min_leaf = std::max(1, config.min_samples_leaf);
  const bool depth_limited = config.max_depth > 0;
  auto can_split = [&](int depth) { return !depth_limited || depth < config.max_depth; };

  std::vector<OpenLeaf> open;
  {
    OpenLeaf root{0, 0, std::move(all), {}};
    if (can_split(0)) root.split = best_split(features, targets, root.rows, min_leaf);
    open.push_back(std::move(root));
  }

  int leaves = 1;
  while (leaves < config.max_leaves) {
    int pick = -1;
    for (int i = 0; i < static_cast<int>(open.size()); ++i) {
      const auto& leaf = open[static_cast<std::size_t>(i)];
      if (!leaf.split.valid) continue;
      if (pick < 0 || leaf.split.gain > open[static_cast<std::size_t>(pick)].split.gain) pick = i;
    }
    if (pick < 0) break;

    OpenLeaf leaf = std::move(open[static_cast<std::size_t>(pick)]);
    open.erase(open.begin() + pick);

    std::vector<int> left_rows, right_rows;
    for (int r : leaf.rows) (features(r, leaf.split.feature) <= leaf.split.threshold ? left_rows : right_rows).push_back(r);

    const int left_id = static_cast<int>(nodes.size());
    const int right_id = left_id + 1;
    nodes.resize(nodes.size() + 2);
    auto& parent = nodes[static_cast<std::size_t>(leaf.node)];
    parent.feature = leaf.split.feature;
    parent.threshold = leaf.split.threshold;
    parent.left = left_id;
    parent.right = right_id;
    parent.value = 0.0;
    nodes[static_cast<std::size_t>(left_id)].value = running_mean(targets, left_rows);
    nodes[static_cast<std::size_t>(right_id)].value = running_mean(targets, right_rows);

    for (auto [id, rows] : {std::pair{left_id, &left_rows}, std::pair{right_id, &right_rows}}) {
      OpenLeaf child{id, leaf.depth + 1, std::move(*rows), {}};
      if (can_split(child.depth)) child.split = best_split(features, targets, child.rows, min_leaf);
      open.push_back(std::move(child));
    }
    ++leaves;
  }
  return RegressionTree(std::move(nodes));
}

GbmForest::GbmForest(GbmConfig config, Eigen::VectorXd base_score, std::vector<std::vector<RegressionTree>> trees)
    : config_(config), base_score_(std::move(base_score)), trees_(std::move(trees)) {
  if (static_cast<Eigen::Index>(trees_.size()) != base_score_.size())
    throw std::invalid_argument("one tree list per output dimension required");
}

GbmForest fit_gbm(std::span<const Eigen::VectorXd> inputs, std::span<const Eigen::VectorXd> targets,
                  const GbmConfig& config, std::uint64_t /*seed: split search is exhaustive, nothing is sampled*/) {
  if (inputs.size() != targets.size()) throw std::invalid_argument("inputs and targets differ in length");
  if (inputs.size() < 2) throw std::invalid_argument("boosting needs at least two training pairs");
  if (config.n_estimators < 0) throw std::invalid_argument("n_estimators must be non-negative");
  if (!(config.learning_rate > 0.0 && config.learning_rate <= 1.0))
    throw std::invalid_argument("learning_rate must lie in (0, 1]");

  const Eigen::Index n = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index d_in = inputs.front().size();
  const Eigen::Index d_out = targets.front().size();
  Eigen::MatrixXd x(n, d_in);
  Eigen::MatrixXd y(n, d_out);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (inputs[static_cast<std::size_t>(i)].size() != d_in || targets[static_cast<std::size_t>(i)].size() != d_out)
      throw std::invalid_argument("frame vector dimension mismatch at row " + std::to_string(i));
    x.row(i) = inputs[static_cast<std::size_t>(i)].transpose();
    y.row(i) = targets[static_cast<std::size_t>(i)].transpose();
  }

  GbmForest model;
  model.config_ = config;
  model.input_dim_ = static_cast<int>(d_in);
  model.base_score_.resize(d_out);
  model.trees_.assign(static_cast<std::size_t>(d_out), {});
  std::vector<double> sse(static_cast<std::size_t>(config.n_estimators) + 1, 0.0);

  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  for (Eigen::Index d = 0; d < d_out; ++d) {
    const Eigen::VectorXd target = y.col(d);
    const double base = running_mean(target, all);
    model.base_score_[d] = base;
    Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, base);
    Eigen::VectorXd residual = target - pred;
    sse[0] += residual.squaredNorm();
    auto& trees = model.trees_[static_cast<std::size_t>(d)];
    trees.reserve(static_cast<std::size_t>(config.n_estimators));
    for (int round = 0; round < config.n_estimators; ++round) {
      RegressionTree tree = fit_tree(x, residual, config);
      for (Eigen::Index i = 0; i < n; ++i) pred[i] += config.learning_rate * tree.predict(x.row(i));
      residual = target - pred;
      sse[static_cast<std::size_t>(round) + 1] += residual.squaredNorm();
      trees.push_back(std::move(tree));
    }
  }

  model.training_loss_.resize(sse.size());
  const double denom = static_cast<double>(n) * static_cast<double>(std::max<Eigen::Index>(d_out, 1));
  for (std::size_t r = 0; r < sse.size(); ++r) {
    model.training_loss_[r] = sse[r] / denom;
    if (r > 0 && model.training_loss_[r] > model.training_loss_[r - 1] * (1.0 + 1e-12) + 1e-300)
      throw std::logic_error("training loss increased at boosting round " + std::to_string(r));
  }
  return model;
}

Eigen::VectorXd GbmForest::predict_raw(const Eigen::VectorXd& x) const {
  if (input_dim_ != 0 && x.size() != input_dim_)
    throw std::invalid_argument("forecaster expects dimension " + std::to_string(input_dim_) + ", got " +
                                std::to_string(x.size()));
  Eigen::VectorXd out = base_score_;
  for (std::size_t d = 0; d < trees_.size(); ++d) {
    double sum = 0.0;
    for (const auto& tree : trees_[d]) sum += tree.predict(x);
    out[static_cast<Eigen::Index>(d)] += config_.learning_rate * sum;
  }
  return out;
}

Eigen::VectorXd GbmForest::predict(const Eigen::VectorXd& x) const { return clamp_normalize(predict_raw(x)); }

Json GbmForest::to_json() const {
  Json trees = Json::array();
  for (const auto& per_dim : trees_) {
    Json list = Json::array();
    for (const auto& tree : per_dim) {
      Json nodes = Json::array();
      for (const auto& nd : tree.nodes()) nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value});
      list.push_back(std::move(nodes));
    }
    trees.push_back(std::move(list));
  }
  return Json{{"format", "plotcast-gbm"},
              {"version", 1},
              {"config",
               {{"n_estimators", config_.n_estimators},
                {"max_depth", config_.max_depth},
                {"max_leaves", config_.max_leaves},
                {"learning_rate", config_.learning_rate},
                {"min_samples_leaf", config_.min_samples_leaf}}},
              {"input_dim", input_dim_},
              {"base_score", std::vector<double>(base_score_.data(), base_score_.data() + base_score_.size())},
              {"training_loss", training_loss_},
              {"trees", std::move(trees)}};
}

GbmForest GbmForest::from_json(const Json& j) {
  if (j.value("format", "") != "plotcast-gbm") throw std::runtime_error("not a forecaster model file");
  if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported forecaster model version");
  GbmConfig cfg;
  const auto& c = j.at("config");
  cfg.n_estimators = c.at("n_estimators").get<int>();
  cfg.max_depth = c.at("max_depth").get<int>();
  cfg.max_leaves = c.at("max_leaves").get<int>();
  cfg.learning_rate = c.at("learning_rate").get<double>();
  cfg.min_samples_leaf = c.at("min_samples_leaf").get<int>();
  const auto base = j.at("base_score").get<std::vector<double>>();
  std::vector<std::vector<RegressionTree>> trees;
  for (const auto& per_dim : j.at("trees")) {
    std::vector<RegressionTree> list;
    for (const auto& nodes_json : per_dim) {
      std::vector<RegressionTree::Node> nodes;
      for (const auto& nd : nodes_json)
        nodes.push_back({nd[0].get<int>(), nd[1].get<double>(), nd[2].get<int>(), nd[3].get<int>(), nd[4].get<double>()});
      list.emplace_back(std::move(nodes));
    }
    trees.push_back(std::move(list));
  }
  GbmForest model(cfg, Eigen::Map<const Eigen::VectorXd>(base.data(), static_cast<Eigen::Index>(base.size())),
                  std::move(trees));
  model.input_dim_ = j.at("input_dim").get<int>();
  model.training_loss_ = j.value("training_loss", std::vector<double>{});
  return model;
}

void GbmForest::save(const std::filesystem::path& path) const { write_text_atomic(path, to_json().dump()); }

GbmForest GbmForest::load(const std::filesystem::path& path) { return from_json(Json::parse(read_text(path))); }

}  // namespace plotcast
