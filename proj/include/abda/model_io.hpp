#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/inference.hpp"
#include "abda/math.hpp"
#include "abda/synthetic.hpp"

namespace abda {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "abda-model";
inline constexpr const char* kToolVersion = "0.1.0";

namespace io {

using json = nlohmann::json;

// Finite values are plain numbers; nan and infinities are strings.
inline json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double to_num(const json& j) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return -kNegInf;
    if (s == "-inf") return kNegInf;
    throw Error(ErrorCode::CorruptFile, "bad number '" + s + "'");
  }
  return j.get<double>();
}

inline json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::vector<double> to_nums(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(to_num(x));
  return v;
}

inline json dist_to_json(const Distribution& d) {
  json j;
  j["kind"] = std::string(to_string(kind_of(d)));
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          j["mean"] = num(x.mean);
          j["variance"] = num(x.variance);
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          j["shape"] = num(x.shape);
          j["rate"] = num(x.rate);
        } else if constexpr (std::is_same_v<T, Exponential> || std::is_same_v<T, Poisson>) {
          j["rate"] = num(x.rate);
        } else if constexpr (std::is_same_v<T, Categorical>) {
          j["probs"] = nums(x.probs);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          j["success"] = num(x.success);
          j["origin"] = num(x.origin);
        } else {
          j["success"] = num(x.success);
        }
      },
      d);
  return j;
}

inline Kind kind_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kNumKinds; ++i) {
    if (to_string(static_cast<Kind>(i)) == s) return static_cast<Kind>(i);
  }
  throw Error(ErrorCode::CorruptFile, "unknown kind '" + s + "'");
}

inline Distribution dist_from_json(const json& j) {
  switch (kind_from_string(j.at("kind").get<std::string>())) {
    case Kind::Gaussian: return Gaussian{to_num(j.at("mean")), to_num(j.at("variance"))};
    case Kind::Gamma: return GammaFixedShape{to_num(j.at("shape")), to_num(j.at("rate"))};
    case Kind::Exponential: return Exponential{to_num(j.at("rate"))};
    case Kind::Categorical: return Categorical{to_nums(j.at("probs"))};
    case Kind::Poisson: return Poisson{to_num(j.at("rate"))};
    case Kind::Geometric: return Geometric{to_num(j.at("success")), to_num(j.at("origin"))};
    case Kind::Bernoulli: return Bernoulli{to_num(j.at("success"))};
  }
  throw Error(ErrorCode::CorruptFile, "unknown kind");
}

inline json prior_to_json(const Prior& p) {
  json j;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NormalInverseGamma>) {
          j = {{"type", "nig"}, {"center", num(x.center)}, {"precision", num(x.precision)},
               {"weighted_offset", num(x.weighted_offset)}, {"shape", num(x.shape)}, {"energy", num(x.energy)}};
        } else if constexpr (std::is_same_v<T, GammaPrior>) {
          j = {{"type", "gamma"}, {"shape", num(x.shape)}, {"rate", num(x.rate)}};
        } else if constexpr (std::is_same_v<T, DirichletPrior>) {
          j = {{"type", "dirichlet"}, {"concentration", nums(x.concentration)}};
        } else {
          j = {{"type", "beta"}, {"a", num(x.a)}, {"b", num(x.b)}};
        }
      },
      p);
  return j;
}

inline Prior prior_from_json(const json& j) {
  const auto t = j.at("type").get<std::string>();
  if (t == "nig") {
    NormalInverseGamma p;
    p.center = to_num(j.at("center"));
    p.precision = to_num(j.at("precision"));
    p.weighted_offset = to_num(j.at("weighted_offset"));
    p.shape = to_num(j.at("shape"));
    p.energy = to_num(j.at("energy"));
    return p;
  }
  if (t == "gamma") return GammaPrior{to_num(j.at("shape")), to_num(j.at("rate"))};
  if (t == "dirichlet") return DirichletPrior{to_nums(j.at("concentration"))};
  if (t == "beta") return BetaPrior{to_num(j.at("a")), to_num(j.at("b"))};
  throw Error(ErrorCode::CorruptFile, "unknown prior '" + t + "'");
}

inline json dict_to_json(const Dictionary& dict) {
  json a = json::array();
  for (const auto& c : dict) {
    a.push_back({{"kind", std::string(to_string(c.kind))},
                 {"prior", prior_to_json(c.prior)},
                 {"gamma_shape", num(c.gamma_shape)},
                 {"geometric_origin", num(c.geometric_origin)}});
  }
  return a;
}

inline Dictionary dict_from_json(const json& j) {
  Dictionary dict;
  for (const auto& c : j) {
    ComponentSpec s;
    s.kind = kind_from_string(c.at("kind").get<std::string>());
    s.prior = prior_from_json(c.at("prior"));
    s.gamma_shape = to_num(c.at("gamma_shape"));
    s.geometric_origin = to_num(c.at("geometric_origin"));
    dict.push_back(std::move(s));
  }
  return dict;
}

inline json params_to_json(const SpnParams& p) {
  json sums = json::array();
  for (const auto& w : p.sums.log_weights) sums.push_back(nums(w));
  json leaves = json::array();
  for (const auto& per_feature : p.leaves) {
    json f = json::array();
    for (const auto& mix : per_feature) {
      json comps = json::array();
      for (const auto& c : mix.components) comps.push_back(dist_to_json(c));
      f.push_back({{"components", comps}, {"log_weights", nums(mix.log_weights)}});
    }
    leaves.push_back(f);
  }
  return {{"sum_log_weights", sums}, {"concentration", num(p.sums.concentration)}, {"leaves", leaves}};
}

inline SpnParams params_from_json(const json& j) {
  SpnParams p;
  for (const auto& w : j.at("sum_log_weights")) p.sums.log_weights.push_back(to_nums(w));
  p.sums.concentration = to_num(j.at("concentration"));
  for (const auto& f : j.at("leaves")) {
    std::vector<LeafMixture> per_feature;
    for (const auto& mix : f) {
      LeafMixture m;
      for (const auto& c : mix.at("components")) m.components.push_back(dist_from_json(c));
      m.log_weights = to_nums(mix.at("log_weights"));
      per_feature.push_back(std::move(m));
    }
    p.leaves.push_back(std::move(per_feature));
  }
  return p;
}

inline json spn_to_json(const Spn& spn) {
  json nodes = json::array();
  for (std::size_t i = 0; i < spn.size(); ++i) {
    const NodeId id{static_cast<std::uint32_t>(i)};
    const Node& n = spn.node(id);
    json jn;
    if (const auto* s = std::get_if<SumNode>(&n)) {
      jn["type"] = "sum";
      jn["weights"] = s->weight_index;
      for (NodeId c : s->children) jn["children"].push_back(c.value);
    } else if (const auto* pr = std::get_if<ProductNode>(&n)) {
      jn["type"] = "product";
      for (NodeId c : pr->children) jn["children"].push_back(c.value);
    } else {
      const auto& l = std::get<LeafNode>(n);
      jn["type"] = "leaf";
      jn["feature"] = l.feature;
      jn["slot"] = l.leaf_slot;
    }
    jn["scope"] = spn.scope(id);
    nodes.push_back(jn);
  }
  return {{"features", spn.num_features()}, {"root", spn.root().value}, {"nodes", nodes}};
}

inline Spn spn_from_json(const json& j) {
  std::vector<Node> nodes;
  const auto num_nodes = j.at("nodes").size();
  auto child_ids = [&](const json& jn) {
    std::vector<NodeId> ch;
    for (const auto& c : jn.at("children")) {
      const auto v = c.get<std::uint32_t>();
      if (v >= num_nodes) throw Error(ErrorCode::CorruptFile, "child id out of range");
      ch.push_back(NodeId{v});
    }
    return ch;
  };
  for (const auto& jn : j.at("nodes")) {
    const auto t = jn.at("type").get<std::string>();
    if (t == "sum") {
      nodes.push_back(SumNode{child_ids(jn), jn.at("weights").get<std::size_t>()});
    } else if (t == "product") {
      nodes.push_back(ProductNode{child_ids(jn)});
    } else if (t == "leaf") {
      nodes.push_back(LeafNode{jn.at("feature").get<std::size_t>(), jn.at("slot").get<std::size_t>()});
    } else {
      throw Error(ErrorCode::CorruptFile, "unknown node type '" + t + "'");
    }
  }
  const auto root = j.at("root").get<std::uint32_t>();
  if (root >= num_nodes) throw Error(ErrorCode::CorruptFile, "root out of range");
  Spn spn = Spn::from_parts(j.at("features").get<std::size_t>(), std::move(nodes), NodeId{root});
  if (!spn.validate().ok()) throw Error(ErrorCode::CorruptFile, "stored network is not a valid SPN");
  return spn;
}

inline json stats_to_json(const FeatureStats& s) {
  return {{"count", s.count}, {"min", num(s.min)}, {"max", num(s.max)}, {"mean", num(s.mean)},
          {"variance", num(s.variance)}, {"cardinality", s.cardinality}, {"binary", s.binary}};
}

inline FeatureStats stats_from_json(const json& j) {
  FeatureStats s;
  s.count = j.at("count").get<std::size_t>();
  s.min = to_num(j.at("min"));
  s.max = to_num(j.at("max"));
  s.mean = to_num(j.at("mean"));
  s.variance = to_num(j.at("variance"));
  s.cardinality = j.at("cardinality").get<std::size_t>();
  s.binary = j.at("binary").get<bool>();
  return s;
}

inline json configs_to_json(const Model& m) {
  const auto& s = m.structure_config;
  const auto& g = m.gibbs_config;
  const auto& p = m.prior_config;
  return {
      {"structure",
       {{"rdc_threshold", num(s.rdc_threshold)}, {"min_instances_fraction", num(s.min_instances_fraction)},
        {"rdc_features", s.rdc_features}, {"rdc_scale", num(s.rdc_scale)}, {"kmeans_restarts", s.kmeans_restarts},
        {"kmeans_max_iter", s.kmeans_max_iter}, {"seed", s.seed}}},
      {"gibbs",
       {{"iterations", g.iterations}, {"burn_in", g.burn_in}, {"thinning", g.thinning}, {"gamma", num(g.gamma)},
        {"alpha", num(g.alpha)}, {"seed", g.seed}, {"threads", g.threads}, {"freeze_leaves", g.freeze_leaves}}},
      {"priors",
       {{"nig_v0", num(p.nig_v0)}, {"nig_a0", num(p.nig_a0)}, {"gamma_a0", num(p.gamma_a0)},
        {"gamma_b0", num(p.gamma_b0)}, {"dirichlet", num(p.dirichlet)}, {"beta_a", num(p.beta_a)},
        {"beta_b", num(p.beta_b)}}},
  };
}

inline void configs_from_json(const json& j, Model& m) {
  const auto& s = j.at("structure");
  auto& sc = m.structure_config;
  sc.rdc_threshold = to_num(s.at("rdc_threshold"));
  sc.min_instances_fraction = to_num(s.at("min_instances_fraction"));
  sc.rdc_features = s.at("rdc_features").get<std::size_t>();
  sc.rdc_scale = to_num(s.at("rdc_scale"));
  sc.kmeans_restarts = s.at("kmeans_restarts").get<std::size_t>();
  sc.kmeans_max_iter = s.at("kmeans_max_iter").get<std::size_t>();
  sc.seed = s.at("seed").get<std::uint64_t>();
  const auto& g = j.at("gibbs");
  auto& gc = m.gibbs_config;
  gc.iterations = g.at("iterations").get<std::size_t>();
  gc.burn_in = g.at("burn_in").get<std::size_t>();
  gc.thinning = g.at("thinning").get<std::size_t>();
  gc.gamma = to_num(g.at("gamma"));
  gc.alpha = to_num(g.at("alpha"));
  gc.seed = g.at("seed").get<std::uint64_t>();
  gc.threads = g.at("threads").get<std::size_t>();
  gc.freeze_leaves = g.at("freeze_leaves").get<bool>();
  const auto& p = j.at("priors");
  auto& pc = m.prior_config;
  pc.nig_v0 = to_num(p.at("nig_v0"));
  pc.nig_a0 = to_num(p.at("nig_a0"));
  pc.gamma_a0 = to_num(p.at("gamma_a0"));
  pc.gamma_b0 = to_num(p.at("gamma_b0"));
  pc.dirichlet = to_num(p.at("dirichlet"));
  pc.beta_a = to_num(p.at("beta_a"));
  pc.beta_b = to_num(p.at("beta_b"));
}

}  // namespace io

/// Hash of the hyper-parameters, reported with every output.
inline std::uint64_t config_hash(const Model& m) { return fnv1a(io::configs_to_json(m).dump()); }

inline nlohmann::json model_to_json(const Model& m) {
  using io::json;
  json body;
  body["feature_names"] = m.feature_names;
  json meta = json::array();
  for (auto t : m.meta) meta.push_back(std::string(to_string(t)));
  body["meta"] = meta;
  json stats = json::array();
  for (const auto& s : m.train_stats) stats.push_back(io::stats_to_json(s));
  body["train_stats"] = stats;
  body["spn"] = io::spn_to_json(m.spn);
  json dicts = json::array();
  for (const auto& d : m.dictionaries) dicts.push_back(io::dict_to_json(d));
  body["dictionaries"] = dicts;
  json specs = json::array();
  for (const auto& per_feature : m.leaf_specs) {
    json f = json::array();
    for (const auto& d : per_feature) f.push_back(io::dict_to_json(d));
    specs.push_back(f);
  }
  body["leaf_specs"] = specs;
  json draws = json::array();
  for (const auto& d : m.draws) {
    draws.push_back({{"iteration", d.iteration}, {"train_loglik", io::num(d.train_loglik)}, {"params", io::params_to_json(d.params)}});
  }
  body["draws"] = draws;
  body["final_state"] = {{"params", io::params_to_json(m.final_params)},
                         {"node_row_counts", m.node_row_counts},
                         {"sparsity", io::num(m.sparsity)}};
  body["trace"] = io::nums(m.trace);
  body["config"] = io::configs_to_json(m);
  body["provenance"] = {{"tool_version", kToolVersion},
                        {"seed", m.seed},
                        {"config_hash", hex64(config_hash(m))},
                        {"dataset_hash", hex64(m.dataset_hash)}};
  return body;
}

inline Model model_from_json(const nlohmann::json& body) {
  Model m;
  m.feature_names = body.at("feature_names").get<std::vector<std::string>>();
  for (const auto& t : body.at("meta")) {
    const auto s = t.get<std::string>();
    if (s != "C" && s != "D") throw Error(ErrorCode::CorruptFile, "bad meta type '" + s + "'");
    m.meta.push_back(s == "C" ? MetaType::Continuous : MetaType::Discrete);
  }
  for (const auto& s : body.at("train_stats")) m.train_stats.push_back(io::stats_from_json(s));
  m.spn = io::spn_from_json(body.at("spn"));
  for (const auto& d : body.at("dictionaries")) m.dictionaries.push_back(io::dict_from_json(d));
  for (const auto& f : body.at("leaf_specs")) {
    std::vector<Dictionary> per_feature;
    for (const auto& d : f) per_feature.push_back(io::dict_from_json(d));
    m.leaf_specs.push_back(std::move(per_feature));
  }
  for (const auto& d : body.at("draws")) {
    m.draws.push_back({d.at("iteration").get<std::size_t>(), io::to_num(d.at("train_loglik")), io::params_from_json(d.at("params"))});
  }
  const auto& fs = body.at("final_state");
  m.final_params = io::params_from_json(fs.at("params"));
  m.node_row_counts = fs.at("node_row_counts").get<std::vector<std::size_t>>();
  m.sparsity = io::to_num(fs.at("sparsity"));
  m.trace = io::to_nums(body.at("trace"));
  io::configs_from_json(body.at("config"), m);
  m.dataset_hash = std::stoull(body.at("provenance").at("dataset_hash").get<std::string>(), nullptr, 16);
  m.seed = body.at("provenance").at("seed").get<std::uint64_t>();

  const std::size_t D = m.spn.num_features();
  if (m.feature_names.size() != D || m.meta.size() != D || m.train_stats.size() != D || m.dictionaries.size() != D) {
    throw Error(ErrorCode::CorruptFile, "feature tables disagree with the network");
  }
  auto check_params = [&](const SpnParams& p) {
    if (p.sums.log_weights.size() != m.spn.num_sums() || p.leaves.size() != D) {
      throw Error(ErrorCode::CorruptFile, "parameters disagree with the network");
    }
    for (std::size_t d = 0; d < D; ++d) {
      if (p.leaves[d].size() != m.spn.leaves_by_feature(d).size()) throw Error(ErrorCode::CorruptFile, "leaf count mismatch");
    }
  };
  for (const auto& d : m.draws) check_params(d.params);
  check_params(m.final_params);
  return m;
}

/// Serializes a model. The body is checksummed so that truncation or
/// tampering is detected on load.
inline void write_model(std::ostream& out, const Model& m) {
  const nlohmann::json body = model_to_json(m);
  const std::string text = body.dump();
  nlohmann::json file;
  file["format"] = kModelFormatName;
  file["version"] = kModelFormatVersion;
  file["checksum"] = hex64(fnv1a(text));
  file["model"] = body;
  out << file.dump() << '\n';
}

inline Model read_model(std::istream& in) {
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json file;
  try {
    file = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!file.is_object() || file.value("format", std::string()) != kModelFormatName) {
      throw Error(ErrorCode::CorruptFile, "not a model file");
    }
    const int version = file.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) + ", expected " +
                                                  std::to_string(kModelFormatVersion));
    }
    const auto& body = file.at("model");
    if (hex64(fnv1a(body.dump())) != file.at("checksum").get<std::string>()) {
      throw Error(ErrorCode::CorruptFile, "checksum mismatch");
    }
    return model_from_json(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_model(out, m);
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_model(in);
}

inline nlohmann::json truth_to_json(const GroundTruth& gt) {
  using io::json;
  json types = json::array();
  for (auto t : gt.types) types.push_back(std::string(to_string(t)));
  json kinds = json::array();
  for (const auto& w : gt.kind_weights) kinds.push_back(io::nums(std::vector<double>(w.begin(), w.end())));
  return {{"format", "abda-truth"},
          {"version", kModelFormatVersion},
          {"rate_convention", gt.rate_convention},
          {"types", types},
          {"kind_weights", kinds},
          {"partition", gt.partition},
          {"spn", io::spn_to_json(gt.spn)},
          {"params", io::params_to_json(gt.params)}};
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "abda-truth") throw Error(ErrorCode::CorruptFile, "not a ground-truth file");
    if (j.at("version").get<int>() != kModelFormatVersion) throw Error(ErrorCode::VersionMismatch, "ground-truth version mismatch");
    GroundTruth gt;
    gt.rate_convention = j.at("rate_convention").get<std::string>();
    for (const auto& t : j.at("types")) {
      const auto s = t.get<std::string>();
      bool found = false;
      for (std::size_t i = 0; i < kNumStatTypes && !found; ++i) {
        if (to_string(static_cast<StatType>(i)) == s) {
          gt.types.push_back(static_cast<StatType>(i));
          found = true;
        }
      }
      if (!found) throw Error(ErrorCode::CorruptFile, "unknown type '" + s + "'");
    }
    for (const auto& w : j.at("kind_weights")) {
      const auto v = io::to_nums(w);
      if (v.size() != kNumKinds) throw Error(ErrorCode::CorruptFile, "kind weight vector has wrong length");
      std::array<double, kNumKinds> a{};
      std::copy(v.begin(), v.end(), a.begin());
      gt.kind_weights.push_back(a);
    }
    gt.partition = j.at("partition").get<std::vector<std::size_t>>();
    gt.spn = io::spn_from_json(j.at("spn"));
    gt.params = io::params_from_json(j.at("params"));
    return gt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("malformed ground-truth file: ") + e.what());
  }
}

inline void save_truth(const std::string& path, const GroundTruth& gt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << truth_to_json(gt).dump(1) << '\n';
}

inline GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("ground-truth file is not valid JSON: ") + e.what());
  }
  return truth_from_json(j);
}

}  // namespace abda
