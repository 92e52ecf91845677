#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dcc/error.hpp"
#include "dcc/model.hpp"

namespace dcc {

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string checkpoint_to_string(const MlpParams& params) {
  params.validate();
  json layers = json::array();
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    layers.push_back({{"weight", matrix_json(params.weights[l])}, {"bias", params.biases[l]}});
  }
  const json doc{{"format", "dcc-checkpoint"},
                 {"format_version", kCheckpointFormatVersion},
                 {"layer_dims", params.layer_dims},
                 {"seed", params.seed},
                 {"layers", layers},
                 {"b_logits", matrix_json(params.b_logits)}};
  return doc.dump(1);
}

MlpParams checkpoint_from_string(const std::string& text) {
  MlpParams p;
  try {
    const json doc = json::parse(text);
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ConfigError("unsupported checkpoint format_version " + std::to_string(version));
    }
    p.layer_dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    p.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& layer : doc.at("layers")) {
      p.weights.push_back(matrix_from_json(layer.at("weight")));
      p.biases.push_back(layer.at("bias").get<std::vector<double>>());
    }
    p.b_logits = matrix_from_json(doc.at("b_logits"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  p.validate();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << checkpoint_to_string(params) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace dcc
