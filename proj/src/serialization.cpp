#include "ean/serialization.hpp"

#include <fstream>

namespace ean {

namespace {

constexpr const char* kFormat = "ean-model/1";

}  // namespace

nlohmann::json tensor_to_json(const Tensor& t) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(t.size()));
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) values.push_back(t(i, j));
  }
  return {{"shape", {t.rows(), t.cols()}}, {"values", values}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<long>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw DataError("tensor shape must be [rows, cols]");
  if (static_cast<std::size_t>(shape[0] * shape[1]) != values.size()) {
    throw DataError("tensor value count does not match its shape");
  }
  Tensor t(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) t(i, c) = values[k++];
  }
  if (!t.allFinite()) throw NumericError("tensor contains non-finite values");
  return t;
}

void parameters_to_json(const ParameterSet& params, const std::string& prefix, nlohmann::json& out) {
  for (const auto& [name, p] : params) out[prefix + "." + name] = tensor_to_json(p.value);
}

void parameters_from_json(ParameterSet& params, const std::string& prefix, const nlohmann::json& in) {
  for (auto& [name, p] : params) {
    const std::string key = prefix + "." + name;
    if (!in.contains(key)) throw DataError("model file lacks parameter " + key);
    Tensor t = tensor_from_json(in.at(key));
    if (t.rows() != p.value.rows() || t.cols() != p.value.cols()) {
      throw DataError("parameter " + key + " has the wrong shape");
    }
    p.value = std::move(t);
    p.grad.setZero();
  }
}

nlohmann::json bundle_to_json(const ModelBundle& b) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["metadata"] = {{"hidden_size", b.config.hidden_size},
                   {"embedding_dim", b.embeddings.dim()},
                   {"config_hash", b.config.hash()},
                   {"best_epoch", b.best_epoch}};
  j["config"] = b.config.to_map();
  j["vocabulary"] = b.vocab.tokens();
  nlohmann::json params = nlohmann::json::object();
  params["embeddings.table"] = tensor_to_json(b.embeddings.vectors);
  parameters_to_json(b.generator.params, "generator", params);
  parameters_to_json(b.predictor.params, "predictor", params);
  parameters_to_json(b.adversary.params, "adversary", params);
  j["parameters"] = std::move(params);
  std::vector<std::string> frozen;
  for (const auto& [net, set] : {std::pair{"generator", &b.generator.params}, std::pair{"predictor", &b.predictor.params},
                                 std::pair{"adversary", &b.adversary.params}}) {
    for (const auto& [name, p] : *set) {
      if (p.frozen) frozen.push_back(std::string(net) + "." + name);
    }
  }
  j["frozen"] = frozen;
  return j;
}

ModelBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != kFormat) throw DataError("not an ean model file");
    TrainingConfig cfg;
    for (const auto& [k, v] : j.at("config").items()) cfg.set(k, v.get<std::string>());
    auto tokens = j.at("vocabulary").get<std::vector<std::string>>();
    if (tokens.size() < 2) throw DataError("vocabulary lacks reserved entries");
    Vocabulary vocab(std::vector<std::string>(tokens.begin() + 2, tokens.end()));
    const auto& params = j.at("parameters");
    EmbeddingTable emb{tensor_from_json(params.at("embeddings.table"))};
    ModelBundle b = ModelBundle::create(cfg, std::move(vocab), std::move(emb));
    parameters_from_json(b.generator.params, "generator", params);
    parameters_from_json(b.predictor.params, "predictor", params);
    parameters_from_json(b.adversary.params, "adversary", params);
    for (auto* set : {&b.generator.params, &b.predictor.params, &b.adversary.params}) {
      for (auto& [name, p] : *set) p.frozen = false;
    }
    for (const auto& name : j.at("frozen").get<std::vector<std::string>>()) {
      const auto dot = name.find('.');
      const std::string net = name.substr(0, dot), rest = name.substr(dot + 1);
      ParameterSet& set = net == "generator" ? b.generator.params : net == "predictor" ? b.predictor.params : b.adversary.params;
      set.at(rest).frozen = true;
    }
    b.best_epoch = j.at("metadata").value("best_epoch", 0);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "model.json");
    if (!out) throw DataError("cannot write " + (dir / "model.json").string());
    out << bundle_to_json(bundle).dump() << '\n';
  }
  save_config(dir / "config.txt", bundle.config);
  write_epoch_log(dir / "epochs.csv", bundle.log);
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "model.json" : dir;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace ean
