#include "wdro/checkpoint.hpp"

#include <fstream>

#include "wdro/error.hpp"

namespace wdro {

using nlohmann::json;

namespace {

json matrix_rows(const Eigen::MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd parse_matrix(const json& rows, std::size_t layer) {
  if (!rows.is_array() || rows.empty()) throw DimensionError(layer, "weight must be a non-empty array of rows");
  const std::size_t cols = rows.front().size();
  Eigen::MatrixXd a(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw DimensionError(layer, "ragged weight matrix");
    for (std::size_t j = 0; j < cols; ++j) a(i, j) = rows[i][j].get<double>();
  }
  return a;
}

}  // namespace

json to_json(const Mlp& net) {
  json layers = json::array();
  for (const auto& l : net.hidden()) {
    layers.push_back({{"weight", matrix_rows(l.weight)}, {"bias", std::vector<double>(l.bias.begin(), l.bias.end())}});
  }
  layers.push_back({{"weight", matrix_rows(net.output())}, {"bias", json::array()}});
  json j;
  j["m"] = net.order();
  j["truncation"] = net.truncation() ? json(*net.truncation()) : json(nullptr);
  j["layers"] = std::move(layers);
  return j;
}

Mlp mlp_from_json(const json& j) {
  try {
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.empty()) throw ParameterError("checkpoint has no layers");
    std::vector<DenseLayer> hidden;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      hidden.push_back({parse_matrix(layers[l].at("weight"), l),
                        Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()))});
    }
    const auto& last = layers.back();
    if (!last.at("bias").empty()) throw DimensionError(layers.size() - 1, "output layer must not carry a bias");
    std::optional<double> trunc;
    if (j.contains("truncation") && !j["truncation"].is_null()) trunc = j["truncation"].get<double>();
    return Mlp(std::move(hidden), parse_matrix(last.at("weight"), layers.size() - 1), j.at("m").get<int>(), trunc);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Mlp& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << to_json(net).dump() << '\n';
  if (!f) throw IoError("write failed: " + path);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  try {
    return mlp_from_json(json::parse(f));
  } catch (const json::parse_error& e) {
    throw ParameterError(path + ": " + e.what());
  }
}

}  // namespace wdro
