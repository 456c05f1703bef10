#pragma once

// Versioned JSON form of a trained MultiClassModel. Doubles are written in
// shortest round-trip form, so a reloaded model predicts bit-identically.

#include <string>

#include <nlohmann/json.hpp>

#include "emgsel/svm.hpp"

namespace emgsel {

inline constexpr const char* kModelFormat = "emgsel-svm";
inline constexpr int kModelVersion = 1;

inline nlohmann::json kernel_to_json(const KernelSpec& k) {
  nlohmann::json j;
  j["kind"] = k.kind == KernelKind::linear ? "linear" : "rbf";
  if (k.kind == KernelKind::rbf) j["gamma"] = k.gamma;
  return j;
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  KernelSpec k;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear") k.kind = KernelKind::linear;
  else if (kind == "rbf") k.kind = KernelKind::rbf;
  else throw DataError("model: unknown kernel kind '" + kind + "'");
  if (k.kind == KernelKind::rbf) k.gamma = j.at("gamma").get<double>();
  return k;
}

inline nlohmann::json model_to_json(const MultiClassModel& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["class_count"] = m.class_count;
  j["dimension"] = m.dimension;
  if (m.scaler.empty()) {
    j["scaler"] = nullptr;
  } else {
    j["scaler"] = {{"mean", m.scaler.mean}, {"scale", m.scaler.scale}};
  }
  j["models"] = nlohmann::json::array();
  for (const auto& b : m.models) {
    nlohmann::json bj;
    bj["pair"] = {b.class_pair.first, b.class_pair.second};
    bj["kernel"] = kernel_to_json(b.kernel);
    bj["bias"] = b.bias;
    bj["alphas_signed"] = b.alphas_signed;
    nlohmann::json sv = nlohmann::json::array();
    for (std::size_t i = 0; i < b.support_vectors.rows(); ++i) {
      auto r = b.support_vectors.row(i);
      sv.push_back(std::vector<double>(r.begin(), r.end()));
    }
    bj["support_vectors"] = std::move(sv);
    bj["converged"] = b.diagnostics.converged;
    j["models"].push_back(std::move(bj));
  }
  return j;
}

inline MultiClassModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw DataError("model: wrong format tag");
    if (j.at("version").get<int>() != kModelVersion) throw DataError("model: unsupported version");
    MultiClassModel m;
    m.class_count = j.at("class_count").get<int>();
    m.dimension = j.at("dimension").get<std::size_t>();
    if (!j.at("scaler").is_null()) {
      m.scaler.mean = j["scaler"].at("mean").get<std::vector<double>>();
      m.scaler.scale = j["scaler"].at("scale").get<std::vector<double>>();
    }
    for (const auto& bj : j.at("models")) {
      BinaryModel b;
      b.class_pair = {bj.at("pair").at(0).get<int>(), bj.at("pair").at(1).get<int>()};
      b.kernel = kernel_from_json(bj.at("kernel"));
      b.bias = bj.at("bias").get<double>();
      b.alphas_signed = bj.at("alphas_signed").get<std::vector<double>>();
      b.support_vectors = Matrix(0, m.dimension);
      for (const auto& row : bj.at("support_vectors")) b.support_vectors.append_row(row.get<std::vector<double>>());
      if (b.support_vectors.rows() != b.alphas_signed.size()) throw DataError("model: support vector / alpha count mismatch");
      b.diagnostics.converged = bj.value("converged", true);
      m.models.push_back(std::move(b));
    }
    if (m.models.size() != pair_count(m.class_count)) throw DataError("model: binary model count does not match class count");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

}  // namespace emgsel
