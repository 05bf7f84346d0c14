#include "graphrefine/graph_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphrefine/error.hpp"

namespace graphrefine {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string(what) + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key)) {
    throw InputError(std::string(what) + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string(what) + ": field '" + key + "': " + e.what());
  }
}

std::vector<Edge> parse_edges(const json& arr, std::size_t n, const char* what) {
  if (!arr.is_array()) throw InputError(std::string(what) + " must be an array");
  std::vector<Edge> edges;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw InputError(std::string(what) + ": each edge must be a pair of integers");
    }
    const auto a = e[0].get<long long>();
    const auto b = e[1].get<long long>();
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) {
      throw InputError(std::string(what) + ": edge index out of range");
    }
    edges.push_back(Edge::canonical(static_cast<int>(a), static_cast<int>(b)));
    if (a == b) throw InputError(std::string(what) + ": self edge on node " + std::to_string(a));
  }
  return edges;
}

json edges_json(const Adjacency& adj) {
  json arr = json::array();
  for (const Edge& e : adj.edges()) arr.push_back({e.i, e.j});
  return arr;
}

}  // namespace

GraphInstance parse_graph(const std::string& text) {
  const json j = parse_json(text, "graph file");
  GraphInstance g;
  g.id = field<std::string>(j, "id", "graph file");
  const json nodes = field<json>(j, "nodes", "graph file");
  if (!nodes.is_array()) throw InputError("graph file: nodes must be an array");
  for (const auto& n : nodes) {
    const auto mu = field<std::vector<double>>(n, "mu", "graph node");
    const auto var = field<std::vector<double>>(n, "var", "graph node");
    if (mu.size() != kGaussianDim || var.size() != kGaussianDim) {
      throw InputError("graph node: mu and var need 7 entries each");
    }
    NodeFeature f;
    std::copy(mu.begin(), mu.end(), f.mu.begin());
    std::copy(var.begin(), var.end(), f.var.begin());
    g.nodes.push_back(f);
  }
  const std::size_t n = g.nodes.size();
  g.adjacency_in = Adjacency::from_edges(n, parse_edges(field<json>(j, "edges_in", "graph file"), n, "edges_in"));
  if (j.contains("edges_ref")) {
    g.adjacency_ref = Adjacency::from_edges(n, parse_edges(j.at("edges_ref"), n, "edges_ref"));
  }
  g.validate();
  return g;
}

std::string graph_to_json(const GraphInstance& graph) {
  json j;
  j["id"] = graph.id;
  json nodes = json::array();
  for (const auto& f : graph.nodes) {
    nodes.push_back({{"mu", f.mu}, {"var", f.var}});
  }
  j["nodes"] = std::move(nodes);
  j["edges_in"] = edges_json(graph.adjacency_in);
  if (graph.adjacency_ref) j["edges_ref"] = edges_json(*graph.adjacency_ref);
  return j.dump() + "\n";
}

GraphInstance read_graph(const std::filesystem::path& path) {
  try {
    return parse_graph(read_text_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_graph(const std::filesystem::path& path, const GraphInstance& graph) {
  write_text_file_atomic(path, graph_to_json(graph));
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  const json j = parse_json(text, "manifest");
  if (!j.is_array()) throw InputError("manifest must be an array");
  std::vector<ManifestEntry> out;
  for (const auto& e : j) {
    out.push_back({field<std::string>(e, "id", "manifest"), field<std::string>(e, "path", "manifest"),
                   field<std::size_t>(e, "n_nodes", "manifest"),
                   field<std::uint64_t>(e, "seed", "manifest")});
  }
  return out;
}

std::string manifest_to_json(const std::vector<ManifestEntry>& manifest) {
  json j = json::array();
  for (const auto& e : manifest) {
    j.push_back({{"id", e.id}, {"path", e.path}, {"n_nodes", e.n_nodes}, {"seed", e.seed}});
  }
  return j.dump(2) + "\n";
}

std::string alpha_to_json(const std::string& id, const ConnectivityMatrix& alpha) {
  const auto& s = alpha.support();
  json pairs = json::array();
  const auto values = alpha.values();
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    pairs.push_back({s.source(p), s.target(p), values[p]});
  }
  json j;
  j["id"] = id;
  j["n_nodes"] = s.node_count();
  j["alpha"] = std::move(pairs);
  return j.dump() + "\n";
}

std::string adjacency_to_json(const std::string& id, const Adjacency& adjacency) {
  json j;
  j["id"] = id;
  j["n_nodes"] = adjacency.node_count();
  j["edges"] = edges_json(adjacency);
  return j.dump() + "\n";
}

Adjacency parse_adjacency(const std::string& text, std::string* id) {
  const json j = parse_json(text, "adjacency file");
  const auto n = field<std::size_t>(j, "n_nodes", "adjacency file");
  if (id) *id = field<std::string>(j, "id", "adjacency file");
  return Adjacency::from_edges(n, parse_edges(field<json>(j, "edges", "adjacency file"), n, "edges"));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace graphrefine
