#include "graphrefine/serialization.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "graphrefine/error.hpp"

namespace graphrefine {

using nlohmann::json;

namespace {

constexpr const char* kMfnFormat = "graphrefine-mfn";
constexpr const char* kGnnFormat = "graphrefine-gnn";
constexpr int kFormatVersion = 1;

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_number(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw InputError("MFN checkpoint: bad value for " + key);
  return x;
}

json block_json(const char* name, const MlpBlock& b) {
  std::vector<double> w;
  const auto put = [&w](const double* d, Eigen::Index n) { w.insert(w.end(), d, d + n); };
  put(b.w1.data(), b.w1.size());
  put(b.b1.data(), b.b1.size());
  put(b.w2.data(), b.w2.size());
  put(b.b2.data(), b.b2.size());
  put(b.proj.data(), b.proj.size());
  put(b.proj_bias.data(), b.proj_bias.size());
  put(b.gain.data(), b.gain.size());
  put(b.shift.data(), b.shift.size());
  return {{"name", name},
          {"in", b.in_dim()},
          {"hidden", b.hidden_dim()},
          {"out", b.out_dim()},
          {"projection", b.has_projection()},
          {"weights", std::move(w)}};
}

}  // namespace

std::string mfn_params_to_text(const MfnParams& params) {
  std::ostringstream out;
  out << "format " << kMfnFormat << ' ' << kFormatVersion << '\n';
  out << "F " << params.feature_dim() << '\n';
  out << "lambda " << number(params.lambda) << '\n';
  for (int v = 0; v < 3; ++v) out << "beta" << v << ' ' << number(params.beta[v]) << '\n';
  const auto list = [&out](const char* name, const std::vector<double>& xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) out << name << i << ' ' << number(xs[i]) << '\n';
  };
  list("a", params.a);
  list("eta", params.eta);
  list("nu", params.nu);
  return out.str();
}

MfnParams parse_mfn_params(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != std::string("format ") + kMfnFormat + " " + std::to_string(kFormatVersion)) {
    throw InputError("not an MFN checkpoint (expected 'format graphrefine-mfn 1')");
  }
  std::map<std::string, std::string> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw InputError("MFN checkpoint: malformed line '" + line + "'");
    const std::string key = line.substr(0, space);
    if (!values.emplace(key, line.substr(space + 1)).second) {
      throw InputError("MFN checkpoint: repeated key " + key);
    }
  }
  const auto take = [&values](const std::string& key) {
    const auto it = values.find(key);
    if (it == values.end()) throw InputError("MFN checkpoint: missing key " + key);
    const double x = parse_number(key, it->second);
    values.erase(it);
    return x;
  };
  const double f_value = take("F");
  if (!(f_value >= 1.0) || f_value != static_cast<double>(static_cast<std::size_t>(f_value))) {
    throw InputError("MFN checkpoint: F must be a positive integer");
  }
  const auto f = static_cast<std::size_t>(f_value);
  MfnParams p = MfnParams::zeros(f);
  p.lambda = take("lambda");
  for (int v = 0; v < 3; ++v) p.beta[v] = take("beta" + std::to_string(v));
  for (std::size_t i = 0; i < f; ++i) p.a[i] = take("a" + std::to_string(i));
  for (std::size_t i = 0; i < f; ++i) p.eta[i] = take("eta" + std::to_string(i));
  for (std::size_t i = 0; i < f; ++i) p.nu[i] = take("nu" + std::to_string(i));
  if (!values.empty()) throw InputError("MFN checkpoint: unknown key " + values.begin()->first);
  return p;
}

std::string gnn_params_to_json(const GnnParams& params) {
  json blocks = json::array();
  blocks.push_back(block_json("g_n", params.node_embed));
  blocks.push_back(block_json("g_n2e_1", params.node_to_edge[0]));
  for (std::size_t l = 1; l < params.layers(); ++l) {
    blocks.push_back(block_json(("g_e2n_" + std::to_string(l)).c_str(), params.edge_to_node[l - 1]));
    blocks.push_back(block_json(("g_n2e_" + std::to_string(l + 1)).c_str(), params.node_to_edge[l]));
  }
  std::vector<double> dw(params.decoder_weight.data(),
                         params.decoder_weight.data() + params.decoder_weight.size());
  json j;
  j["format"] = kGnnFormat;
  j["version"] = kFormatVersion;
  j["feature_dim"] = params.feature_dim();
  j["channels"] = params.channels();
  j["layers"] = params.layers();
  j["dropout"] = params.dropout;
  j["blocks"] = std::move(blocks);
  j["decoder"] = {{"weight", std::move(dw)}, {"bias", params.decoder_bias}};
  return j.dump() + "\n";
}

GnnParams parse_gnn_params(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("GNN checkpoint: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kGnnFormat || j.at("version").get<int>() != kFormatVersion) {
      throw InputError("not a version-1 GNN checkpoint");
    }
    const auto f = j.at("feature_dim").get<std::size_t>();
    const auto e = j.at("channels").get<std::size_t>();
    const auto layers = j.at("layers").get<std::size_t>();
    GnnParams p = init_gnn(f, e, 0, layers, j.at("dropout").get<double>());
    const auto& blocks = j.at("blocks");
    if (blocks.size() != 2 * layers) throw InputError("GNN checkpoint: block count does not match layers");
    std::vector<const MlpBlock*> expected{&p.node_embed, &p.node_to_edge[0]};
    for (std::size_t l = 1; l < layers; ++l) {
      expected.push_back(&p.edge_to_node[l - 1]);
      expected.push_back(&p.node_to_edge[l]);
    }
    std::vector<double> flat;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto w = blocks[i].at("weights").get<std::vector<double>>();
      if (w.size() != expected[i]->parameter_count()) {
        throw InputError("GNN checkpoint: block " + std::to_string(i) + " has the wrong weight count");
      }
      flat.insert(flat.end(), w.begin(), w.end());
    }
    const auto dw = j.at("decoder").at("weight").get<std::vector<double>>();
    flat.insert(flat.end(), dw.begin(), dw.end());
    flat.push_back(j.at("decoder").at("bias").get<double>());
    p.assign(flat);
    return p;
  } catch (const json::exception& ex) {
    throw InputError(std::string("GNN checkpoint: ") + ex.what());
  } catch (const ParameterError& ex) {
    throw InputError(std::string("GNN checkpoint: ") + ex.what());
  }
}

ModelKind detect_checkpoint(const std::string& text) {
  if (text.rfind(std::string("format ") + kMfnFormat, 0) == 0) return ModelKind::mfn;
  if (text.find(kGnnFormat) != std::string::npos) return ModelKind::gnn;
  throw InputError("checkpoint is neither an MFN nor a GNN model");
}

}  // namespace graphrefine
