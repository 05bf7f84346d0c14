#include "graphrefine/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "graphrefine/error.hpp"

namespace graphrefine {

namespace {

constexpr double kLayerNormEps = 1e-5;

std::size_t block_param_count(const MlpBlock& b) {
  return static_cast<std::size_t>(b.w1.size() + b.b1.size() + b.w2.size() + b.b2.size() +
                                  b.proj.size() + b.proj_bias.size() + b.gain.size() +
                                  b.shift.size());
}

template <int Out>
void affine_fixed(const double* __restrict x, Eigen::Index n, Eigen::Index in,
                  const double* __restrict w, const double* __restrict b,
                  double* __restrict y) {
  for (Eigen::Index r = 0; r < n; ++r) {
    double acc[Out];
    for (int o = 0; o < Out; ++o) acc[o] = b[o];
    const double* xr = x + r * in;
    for (Eigen::Index i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wi = w + i * Out;
      for (int o = 0; o < Out; ++o) acc[o] += xi * wi[o];
    }
    for (int o = 0; o < Out; ++o) y[r * Out + o] = acc[o];
  }
}

// Each output row depends only on its own input row, accumulated in a fixed
// order, so results do not change when rows are permuted.
Matrix affine_rows(const Matrix& x, const Matrix& w, const Vector& b) {
  const Eigen::Index n = x.rows();
  const Eigen::Index in = w.rows();
  const Eigen::Index out = w.cols();
  Matrix y(n, out);
  switch (out) {
    case 4: affine_fixed<4>(x.data(), n, in, w.data(), b.data(), y.data()); return y;
    case 8: affine_fixed<8>(x.data(), n, in, w.data(), b.data(), y.data()); return y;
    case 16: affine_fixed<16>(x.data(), n, in, w.data(), b.data(), y.data()); return y;
    case 32: affine_fixed<32>(x.data(), n, in, w.data(), b.data(), y.data()); return y;
    default: break;
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* xr = x.data() + r * in;
    double* yr = y.data() + r * out;
    for (Eigen::Index o = 0; o < out; ++o) yr[o] = b[o];
    for (Eigen::Index i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wi = w.data() + i * out;
      for (Eigen::Index o = 0; o < out; ++o) yr[o] += xi * wi[o];
    }
  }
  return y;
}

Matrix block_forward(const MlpBlock& block, const Matrix& x, GnnMode mode, Rng* rng,
                     double dropout, GnnForward::BlockCache* cache) {
  if (static_cast<std::size_t>(x.cols()) != block.in_dim()) {
    throw InputError("MLP block expects input width " + std::to_string(block.in_dim()) +
                     ", got " + std::to_string(x.cols()));
  }
  Matrix pre = affine_rows(x, block.w1, block.b1);
  Matrix hidden = pre.cwiseMax(0.0);
  Matrix mask;
  if (mode == GnnMode::train && dropout > 0.0) {
    if (rng == nullptr) throw ParameterError("train-mode forward needs a random source");
    const double keep = 1.0 - dropout;
    mask.resize(hidden.rows(), hidden.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = (keep > 0.0 && rng->uniform() < keep) ? 1.0 / keep : 0.0;
    }
    hidden = hidden.cwiseProduct(mask);
  }
  Matrix y = affine_rows(hidden, block.w2, block.b2);
  if (block.has_projection()) {
    y += affine_rows(x, block.proj, block.proj_bias);
  } else {
    y += x;
  }

  const Eigen::Index n = y.rows();
  const Eigen::Index out = y.cols();
  Matrix normalized(n, out);
  Vector inv_std(n);
  Matrix result(n, out);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean = 0.0;
    for (Eigen::Index o = 0; o < out; ++o) mean += y(r, o);
    mean /= static_cast<double>(out);
    double var = 0.0;
    for (Eigen::Index o = 0; o < out; ++o) var += (y(r, o) - mean) * (y(r, o) - mean);
    var /= static_cast<double>(out);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = inv;
    for (Eigen::Index o = 0; o < out; ++o) {
      normalized(r, o) = (y(r, o) - mean) * inv;
      result(r, o) = normalized(r, o) * block.gain[o] + block.shift[o];
    }
  }
  if (cache) {
    cache->input = x;
    cache->pre_relu = std::move(pre);
    cache->mask = std::move(mask);
    cache->hidden = std::move(hidden);
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return result;
}

// Gradient of one block. Accumulates parameter gradients into `grad`
// (same shape as the block) and returns dL/dinput.
Matrix block_backward(const MlpBlock& block, const GnnForward::BlockCache& c,
                      const Matrix& d_out, MlpBlock& grad) {
  const Eigen::Index n = d_out.rows();
  const Eigen::Index out = d_out.cols();

  grad.gain += (d_out.cwiseProduct(c.normalized)).colwise().sum().transpose();
  grad.shift += d_out.colwise().sum().transpose();

  Matrix d_y(n, out);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean_d = 0.0;
    double mean_dy = 0.0;
    for (Eigen::Index o = 0; o < out; ++o) {
      const double dn = d_out(r, o) * block.gain[o];
      mean_d += dn;
      mean_dy += dn * c.normalized(r, o);
    }
    mean_d /= static_cast<double>(out);
    mean_dy /= static_cast<double>(out);
    for (Eigen::Index o = 0; o < out; ++o) {
      const double dn = d_out(r, o) * block.gain[o];
      d_y(r, o) = c.inv_std[r] * (dn - mean_d - c.normalized(r, o) * mean_dy);
    }
  }

  grad.w2.noalias() += c.hidden.transpose() * d_y;
  grad.b2 += d_y.colwise().sum().transpose();
  Matrix d_hidden = d_y * block.w2.transpose();
  if (c.mask.size() > 0) d_hidden = d_hidden.cwiseProduct(c.mask);
  Matrix d_pre = (c.pre_relu.array() > 0.0).select(d_hidden, 0.0);
  grad.w1.noalias() += c.input.transpose() * d_pre;
  grad.b1 += d_pre.colwise().sum().transpose();

  Matrix d_in = d_pre * block.w1.transpose();
  if (block.has_projection()) {
    grad.proj.noalias() += c.input.transpose() * d_y;
    grad.proj_bias += d_y.colwise().sum().transpose();
    d_in.noalias() += d_y * block.proj.transpose();
  } else {
    d_in += d_y;
  }
  return d_in;
}

MlpBlock zeros_like(const MlpBlock& b) {
  MlpBlock z;
  z.w1 = Matrix::Zero(b.w1.rows(), b.w1.cols());
  z.b1 = Vector::Zero(b.b1.size());
  z.w2 = Matrix::Zero(b.w2.rows(), b.w2.cols());
  z.b2 = Vector::Zero(b.b2.size());
  z.proj = Matrix::Zero(b.proj.rows(), b.proj.cols());
  z.proj_bias = Vector::Zero(b.proj_bias.size());
  z.gain = Vector::Zero(b.gain.size());
  z.shift = Vector::Zero(b.shift.size());
  return z;
}

MlpBlock make_block(std::size_t in, std::size_t out, Rng& rng) {
  const auto uniform_matrix = [&rng](std::size_t rows, std::size_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
    return m;
  };
  const std::size_t hidden = out;
  MlpBlock b;
  b.w1 = uniform_matrix(in, hidden);
  b.b1 = Vector::Zero(static_cast<Eigen::Index>(hidden));
  b.w2 = uniform_matrix(hidden, out);
  b.b2 = Vector::Zero(static_cast<Eigen::Index>(out));
  if (in != out) {
    b.proj = uniform_matrix(in, out);
    b.proj_bias = Vector::Zero(static_cast<Eigen::Index>(out));
  }
  b.gain = Vector::Ones(static_cast<Eigen::Index>(out));
  b.shift = Vector::Zero(static_cast<Eigen::Index>(out));
  return b;
}

template <typename Fn>
void for_each_block(const GnnParams& p, Fn&& fn) {
  fn(p.node_embed);
  fn(p.node_to_edge[0]);
  for (std::size_t l = 1; l < p.node_to_edge.size(); ++l) {
    fn(p.edge_to_node[l - 1]);
    fn(p.node_to_edge[l]);
  }
}

template <typename Fn>
void for_each_block(GnnParams& p, Fn&& fn) {
  fn(p.node_embed);
  fn(p.node_to_edge[0]);
  for (std::size_t l = 1; l < p.node_to_edge.size(); ++l) {
    fn(p.edge_to_node[l - 1]);
    fn(p.node_to_edge[l]);
  }
}

void append(std::vector<double>& flat, const double* data, Eigen::Index size) {
  flat.insert(flat.end(), data, data + size);
}

void append_block(std::vector<double>& flat, const MlpBlock& b) {
  append(flat, b.w1.data(), b.w1.size());
  append(flat, b.b1.data(), b.b1.size());
  append(flat, b.w2.data(), b.w2.size());
  append(flat, b.b2.data(), b.b2.size());
  append(flat, b.proj.data(), b.proj.size());
  append(flat, b.proj_bias.data(), b.proj_bias.size());
  append(flat, b.gain.data(), b.gain.size());
  append(flat, b.shift.data(), b.shift.size());
}

std::size_t read_into(double* data, Eigen::Index size, std::span<const double> flat,
                      std::size_t pos) {
  std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), size, data);
  return pos + static_cast<std::size_t>(size);
}

std::size_t read_block(MlpBlock& b, std::span<const double> flat, std::size_t pos) {
  pos = read_into(b.w1.data(), b.w1.size(), flat, pos);
  pos = read_into(b.b1.data(), b.b1.size(), flat, pos);
  pos = read_into(b.w2.data(), b.w2.size(), flat, pos);
  pos = read_into(b.b2.data(), b.b2.size(), flat, pos);
  pos = read_into(b.proj.data(), b.proj.size(), flat, pos);
  pos = read_into(b.proj_bias.data(), b.proj_bias.size(), flat, pos);
  pos = read_into(b.gain.data(), b.gain.size(), flat, pos);
  pos = read_into(b.shift.data(), b.shift.size(), flat, pos);
  return pos;
}

Matrix node_features_matrix(const PreparedGraph& graph) {
  const auto& f = graph.features();
  Matrix x(static_cast<Eigen::Index>(f.node_count()), static_cast<Eigen::Index>(f.dim));
  std::copy(f.values.begin(), f.values.end(), x.data());
  return x;
}

Matrix gather_pairs(const Matrix& nodes, const DirectedSupport& s) {
  const Eigen::Index e = nodes.cols();
  Matrix cat(static_cast<Eigen::Index>(s.pair_count()), 2 * e);
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    const auto r = static_cast<Eigen::Index>(p);
    cat.row(r).head(e) = nodes.row(s.source(static_cast<std::size_t>(p)));
    cat.row(r).tail(e) = nodes.row(s.target(static_cast<std::size_t>(p)));
  }
  return cat;
}

// Sum of incoming edge embeddings per node. Terms are summed in sorted
// order per channel, which makes the result independent of node labels.
Matrix aggregate_incoming(const Matrix& edges, const DirectedSupport& s) {
  const Eigen::Index e = edges.cols();
  Matrix agg = Matrix::Zero(static_cast<Eigen::Index>(s.node_count()), e);
  std::vector<double> terms;
  for (std::size_t j = 0; j < s.node_count(); ++j) {
    const int node = static_cast<int>(j);
    for (Eigen::Index ch = 0; ch < e; ++ch) {
      terms.clear();
      for (std::size_t p = s.begin(node); p < s.end(node); ++p) {
        terms.push_back(edges(static_cast<Eigen::Index>(s.reverse(p)), ch));
      }
      std::sort(terms.begin(), terms.end());
      double sum = 0.0;
      for (double t : terms) sum += t;
      agg(static_cast<Eigen::Index>(j), ch) = sum;
    }
  }
  return agg;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

}  // namespace

// ------------------------------------------------------------------ params

std::size_t MlpBlock::parameter_count() const { return block_param_count(*this); }

std::size_t GnnParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block(*this, [&n](const MlpBlock& b) { n += b.parameter_count(); });
  return n + static_cast<std::size_t>(decoder_weight.size()) + 1;
}

std::vector<double> GnnParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for_each_block(*this, [&flat](const MlpBlock& b) { append_block(flat, b); });
  append(flat, decoder_weight.data(), decoder_weight.size());
  flat.push_back(decoder_bias);
  return flat;
}

void GnnParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw InputError("GNN parameter vector has " + std::to_string(flat.size()) +
                     " entries, expected " + std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  for_each_block(*this, [&](MlpBlock& b) { pos = read_block(b, flat, pos); });
  pos = read_into(decoder_weight.data(), decoder_weight.size(), flat, pos);
  decoder_bias = flat[pos];
}

GnnParams init_gnn(std::size_t feature_dim, std::size_t channels, std::uint64_t seed,
                   std::size_t layers, double dropout) {
  if (feature_dim == 0 || channels == 0) {
    throw ParameterError("GNN feature and channel counts must be at least 1");
  }
  if (layers == 0) throw ParameterError("GNN needs at least one layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must be in [0, 1)");
  Rng rng(seed);
  GnnParams p;
  p.dropout = dropout;
  p.node_embed = make_block(feature_dim, channels, rng);
  p.node_to_edge.push_back(make_block(2 * channels, channels, rng));
  for (std::size_t l = 1; l < layers; ++l) {
    p.edge_to_node.push_back(make_block(channels, channels, rng));
    p.node_to_edge.push_back(make_block(2 * channels, channels, rng));
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(channels + 1));
  p.decoder_weight.resize(static_cast<Eigen::Index>(channels));
  for (Eigen::Index i = 0; i < p.decoder_weight.size(); ++i) {
    p.decoder_weight[i] = rng.uniform(-limit, limit);
  }
  p.decoder_bias = 0.0;
  return p;
}

// ----------------------------------------------------------------- forward

Vector mlp_forward(const MlpBlock& block, const Vector& input, GnnMode mode, Rng* rng,
                   double dropout) {
  Matrix x(1, input.size());
  x.row(0) = input.transpose();
  const Matrix y = block_forward(block, x, mode, rng, dropout, nullptr);
  return y.row(0).transpose();
}

GnnForward gnn_forward(const PreparedGraph& graph, const GnnParams& params, GnnMode mode,
                       Rng* rng) {
  const auto& s = graph.support();
  if (s.pair_count() == 0) throw InputError("GNN encoder needs a non-empty input adjacency");
  if (graph.feature_dim() != params.feature_dim()) {
    throw InputError("GNN expects " + std::to_string(params.feature_dim()) +
                     " node features, graph has " + std::to_string(graph.feature_dim()));
  }
  const double rate = params.dropout;
  GnnForward fwd;
  fwd.blocks.resize(2 * params.layers());
  std::size_t slot = 0;

  Matrix nodes =
      block_forward(params.node_embed, node_features_matrix(graph), mode, rng, rate,
                    &fwd.blocks[slot++]);
  fwd.node_states.push_back(nodes);
  Matrix edges = block_forward(params.node_to_edge[0], gather_pairs(nodes, s), mode, rng, rate,
                               &fwd.blocks[slot++]);
  for (std::size_t l = 1; l < params.layers(); ++l) {
    nodes = block_forward(params.edge_to_node[l - 1], aggregate_incoming(edges, s), mode, rng,
                          rate, &fwd.blocks[slot++]);
    fwd.node_states.push_back(nodes);
    edges = block_forward(params.node_to_edge[l], gather_pairs(nodes, s), mode, rng, rate,
                          &fwd.blocks[slot++]);
  }
  fwd.alpha = decode(edges, params, graph.support_ptr());
  fwd.edge_embedding = std::move(edges);
  return fwd;
}

Matrix encode(const PreparedGraph& graph, const GnnParams& params, GnnMode mode, Rng* rng) {
  return gnn_forward(graph, params, mode, rng).edge_embedding;
}

ConnectivityMatrix decode(const Matrix& edge_embeddings, const GnnParams& params,
                          const std::shared_ptr<const DirectedSupport>& support) {
  if (static_cast<std::size_t>(edge_embeddings.rows()) != support->pair_count()) {
    throw InputError("decode: one embedding per directed pair expected");
  }
  std::vector<double> alpha(support->pair_count());
  const Eigen::Index e = edge_embeddings.cols();
  for (std::size_t p = 0; p < alpha.size(); ++p) {
    double logit = params.decoder_bias;
    for (Eigen::Index c = 0; c < e; ++c) {
      logit += edge_embeddings(static_cast<Eigen::Index>(p), c) * params.decoder_weight[c];
    }
    alpha[p] = sigmoid(logit);
  }
  return ConnectivityMatrix(support, std::move(alpha));
}

// ---------------------------------------------------------------- backward

std::vector<double> gnn_backward(const PreparedGraph& graph, const GnnParams& params,
                                 const GnnForward& forward,
                                 std::span<const double> dloss_dalpha) {
  const auto& s = graph.support();
  const std::size_t n_pairs = s.pair_count();
  if (dloss_dalpha.size() != n_pairs) throw InputError("gnn_backward: gradient size mismatch");
  const Eigen::Index e = static_cast<Eigen::Index>(params.channels());

  GnnParams grad = params;
  for_each_block(grad, [](MlpBlock& b) { b = zeros_like(b); });
  grad.decoder_weight = Vector::Zero(e);
  grad.decoder_bias = 0.0;

  const auto alpha = forward.alpha.values();
  Matrix d_edges(static_cast<Eigen::Index>(n_pairs), e);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const double dl = dloss_dalpha[p] * alpha[p] * (1.0 - alpha[p]);
    const auto r = static_cast<Eigen::Index>(p);
    grad.decoder_bias += dl;
    grad.decoder_weight += dl * forward.edge_embedding.row(r).transpose();
    d_edges.row(r) = dl * params.decoder_weight.transpose();
  }

  const auto scatter_pairs = [&s, e](const Matrix& d_cat) {
    Matrix d_nodes = Matrix::Zero(static_cast<Eigen::Index>(s.node_count()), e);
    for (std::size_t p = 0; p < s.pair_count(); ++p) {
      const auto r = static_cast<Eigen::Index>(p);
      d_nodes.row(s.source(p)) += d_cat.row(r).head(e);
      d_nodes.row(s.target(p)) += d_cat.row(r).tail(e);
    }
    return d_nodes;
  };

  std::size_t slot = forward.blocks.size();
  for (std::size_t l = params.layers(); l-- > 1;) {
    const Matrix d_cat =
        block_backward(params.node_to_edge[l], forward.blocks[--slot], d_edges, grad.node_to_edge[l]);
    const Matrix d_nodes = scatter_pairs(d_cat);
    const Matrix d_agg = block_backward(params.edge_to_node[l - 1], forward.blocks[--slot],
                                        d_nodes, grad.edge_to_node[l - 1]);
    d_edges.resize(static_cast<Eigen::Index>(n_pairs), e);
    for (std::size_t p = 0; p < n_pairs; ++p) {
      d_edges.row(static_cast<Eigen::Index>(p)) = d_agg.row(s.target(p));
    }
  }
  const Matrix d_cat =
      block_backward(params.node_to_edge[0], forward.blocks[--slot], d_edges, grad.node_to_edge[0]);
  const Matrix d_nodes = scatter_pairs(d_cat);
  block_backward(params.node_embed, forward.blocks[--slot], d_nodes, grad.node_embed);

  return grad.flatten();
}

}  // namespace graphrefine
