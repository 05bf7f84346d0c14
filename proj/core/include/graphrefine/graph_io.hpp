#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "graphrefine/graph.hpp"
#include "graphrefine/synth.hpp"

namespace graphrefine {

// Graph files:
//   { "id": str, "nodes": [ { "mu": [7], "var": [7] } ],
//     "edges_in": [[i, j], ...], "edges_ref": [[i, j], ...] }
// with 0-based indices and each undirected edge listed once.

/// Throws InputError on malformed text, self loops or duplicate edges.
GraphInstance parse_graph(const std::string& text);
std::string graph_to_json(const GraphInstance& graph);

GraphInstance read_graph(const std::filesystem::path& path);
void write_graph(const std::filesystem::path& path, const GraphInstance& graph);

/// [ { "id", "path", "n_nodes", "seed" }, ... ]
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::string manifest_to_json(const std::vector<ManifestEntry>& manifest);

/// { "id", "n_nodes", "alpha": [[k, l, alpha_kl], ...] } in pair order.
std::string alpha_to_json(const std::string& id, const ConnectivityMatrix& alpha);

/// { "id", "n_nodes", "edges": [[i, j], ...] }
std::string adjacency_to_json(const std::string& id, const Adjacency& adjacency);
Adjacency parse_adjacency(const std::string& text, std::string* id = nullptr);

/// Whole-file read; InputError if the file cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it over `path`.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace graphrefine
