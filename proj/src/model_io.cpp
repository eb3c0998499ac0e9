#include "seq2gmm/model_io.hpp"

#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "seq2gmm/errors.hpp"

namespace seq2gmm {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ArgumentError("model file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text << '\n';
}

}  // namespace

nlohmann::json model_to_json(const TrainedModel& m) {
  return {{"format", "seq2gmm-model"},
          {"version", kModelFormatVersion},
          {"matrix_layout", "row-major"},
          {"num_segments", m.num_segments},
          {"normal_class", m.normal_class},
          {"normalize", m.normalize},
          {"lambda", m.lambda},
          {"aggregation", m.aggregation},
          {"shapelet_quantile", m.shapelet_quantile},
          {"pretrain_objective", m.pretrain_objective},
          {"networks", m.networks},
          {"gmm", m.gmm},
          {"train_energies", m.train_energies}};
}

TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "seq2gmm-model") throw ArgumentError("not a seq2gmm model file");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ArgumentError("unsupported model format version " + j.at("version").dump());
    }
    if (j.value("matrix_layout", "") != "row-major") throw ArgumentError("unsupported matrix layout");
    TrainedModel m;
    m.num_segments = j.at("num_segments").get<int>();
    m.normal_class = j.at("normal_class").get<int>();
    m.normalize = j.at("normalize").get<bool>();
    m.lambda = j.at("lambda").get<double>();
    m.aggregation = j.at("aggregation").get<std::string>();
    m.shapelet_quantile = j.at("shapelet_quantile").get<double>();
    m.pretrain_objective = j.at("pretrain_objective").get<double>();
    j.at("networks").get_to(m.networks);
    j.at("gmm").get_to(m.gmm);
    m.train_energies = j.at("train_energies").get<std::vector<double>>();
    validate_gmm(m.gmm);
    if (m.gmm.dim() != m.networks.hidden() + 2 || m.gmm.K() != m.networks.estimator.components()) {
      throw ArgumentError("mixture and network shapes disagree");
    }
    if (!all_finite(m.networks)) throw ArgumentError("model file contains non-finite weights");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_text(path, model_to_json(model).dump());
}

TrainedModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("model file not found: " + path.string());
  return model_from_json(read_json(path));
}

std::string dataset_fingerprint(const Dataset& dataset) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 unavailable");
  auto feed = [&](const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); };
  for (const auto& s : dataset.series) {
    feed(s.id.data(), s.id.size() + 1);
    const char label = s.label ? (*s.label == Label::Anomaly ? 'A' : 'N') : '?';
    feed(&label, 1);
    const std::uint64_t n = s.values.size();
    feed(&n, sizeof n);
    feed(s.values.data(), s.values.size() * sizeof(double));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::filesystem::path sidecar_path(const std::filesystem::path& model_path) {
  return std::filesystem::path(model_path.string() + ".meta.json");
}

void save_sidecar(const std::filesystem::path& path, const TrainingConfig& config, const TrainingTrace& trace,
                  const std::string& fingerprint, const nlohmann::json& extra) {
  nlohmann::json j = {{"config", config}, {"trace", trace}, {"dataset_sha256", fingerprint}};
  for (const auto& [key, value] : extra.items()) j[key] = value;
  write_text(path, j.dump(2));
}

}  // namespace seq2gmm
