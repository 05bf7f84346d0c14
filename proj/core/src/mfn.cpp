#include "graphrefine/mfn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "graphrefine/error.hpp"

namespace graphrefine {

namespace {

// Truncated polynomial in z (coefficients of z^0, z^1, z^2). The product of
// (1 - a_j + a_j z) over a neighbour set holds Pr[deg = 0, 1, 2].
using Poly3 = std::array<double, 3>;

constexpr Poly3 kOne{1.0, 0.0, 0.0};

inline Poly3 mul(const Poly3& p, const Poly3& q) {
  return {p[0] * q[0], p[0] * q[1] + p[1] * q[0], p[0] * q[2] + p[1] * q[1] + p[2] * q[0]};
}

// p * (1 - a + a z), skipping the products against a zero z^2 coefficient.
inline Poly3 times_factor(const Poly3& p, double a) {
  const double b = 1.0 - a;
  return {p[0] * b, p[0] * a + p[1] * b, p[1] * a + p[2] * b};
}

// d(c . (p*q)) / dp  given c and q.
inline Poly3 correlate(const Poly3& c, const Poly3& q) {
  return {c[0] * q[0] + c[1] * q[1] + c[2] * q[2], c[1] * q[0] + c[2] * q[1], c[2] * q[0]};
}

// correlate(c, 1 - a + a z).
inline Poly3 correlate_factor(const Poly3& c, double a) {
  const double b = 1.0 - a;
  return {c[0] * b + c[1] * a, c[1] * b + c[2] * a, c[2] * b};
}

inline void add_to(Poly3& acc, const Poly3& x, double scale = 1.0) {
  acc[0] += scale * x[0];
  acc[1] += scale * x[1];
  acc[2] += scale * x[2];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// Coefficients of (q0, q1, q2) in the degree-prior part of gamma.
inline Poly3 prior_weights(const MfnParams& params) {
  const auto& b = params.beta;
  return {b[1] - b[0], b[2] - b[1], -b[2]};
}

void check_params(const MfnParams& params, std::size_t feature_dim) {
  if (params.a.size() != feature_dim || params.eta.size() != feature_dim ||
      params.nu.size() != feature_dim) {
    throw InputError("MFN parameters have feature dimension " +
                     std::to_string(params.a.size()) + ", graph has " +
                     std::to_string(feature_dim));
  }
}

// Parameter-dependent quantities that are constant across layers.
struct LayerConstants {
  std::vector<double> node_term;  // a^T x_k
  std::vector<double> data_term;  // eta^T absdiff + nu^T prod, per pair
};

LayerConstants layer_constants(const MfnGraph& graph, const MfnParams& params) {
  const auto& s = graph.support();
  const auto& feats = graph.graph().features();
  LayerConstants c;
  c.node_term.resize(s.node_count());
  for (std::size_t k = 0; k < s.node_count(); ++k) c.node_term[k] = dot(params.a, feats.row(k));
  c.data_term.resize(s.pair_count());
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    c.data_term[p] = dot(params.eta, graph.absdiff(p)) + dot(params.nu, graph.prod(p));
  }
  return c;
}

// Scratch space for one node's prefix/suffix products.
struct NodeScratch {
  std::vector<Poly3> prefix;
  std::vector<Poly3> suffix;

  void fill(std::span<const double> alpha) {
    const std::size_t d = alpha.size();
    prefix.resize(d + 1);
    suffix.resize(d + 1);
    prefix[0] = kOne;
    for (std::size_t i = 0; i < d; ++i) prefix[i + 1] = times_factor(prefix[i], alpha[i]);
    suffix[d] = kOne;
    for (std::size_t i = d; i-- > 0;) suffix[i] = times_factor(suffix[i + 1], alpha[i]);
  }

  // Pr[deg = 0,1,2] over the neighbours other than the i-th.
  Poly3 excluding(std::size_t i) const { return mul(prefix[i], suffix[i + 1]); }
};

// gamma for every pair given alpha; optionally records q^(-l) per pair.
void compute_gammas(const MfnGraph& graph, const MfnParams& params, const LayerConstants& c,
                    std::span<const double> alpha, std::span<double> gamma_out,
                    std::vector<Poly3>* q_out) {
  const auto& s = graph.support();
  const Poly3 w = prior_weights(params);
  NodeScratch scratch;
  if (q_out) q_out->resize(s.pair_count());
  for (std::size_t k = 0; k < s.node_count(); ++k) {
    const std::size_t b = s.begin(static_cast<int>(k));
    const std::size_t d = s.degree(static_cast<int>(k));
    scratch.fill(alpha.subspan(b, d));
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t p = b + i;
      const Poly3 q = scratch.excluding(i);
      if (q_out) (*q_out)[p] = q;
      const double a_rev = alpha[s.reverse(p)];
      gamma_out[p] = w[0] * q[0] + w[1] * q[1] + w[2] * q[2] + c.node_term[k] +
                     (4.0 * a_rev - 2.0) * params.lambda + 2.0 * a_rev * c.data_term[p];
    }
  }
}

double elbo_with(const MfnGraph& graph, const MfnParams& params, const LayerConstants& c,
                 std::span<const double> alpha) {
  const auto& s = graph.support();
  const auto& beta = params.beta;
  double total = 0.0;
  for (std::size_t k = 0; k < s.node_count(); ++k) {
    Poly3 q = kOne;
    double expected_degree = 0.0;
    for (std::size_t p = s.begin(static_cast<int>(k)); p < s.end(static_cast<int>(k)); ++p) {
      q = times_factor(q, alpha[p]);
      expected_degree += alpha[p];
    }
    total += beta[0] * q[0] + beta[1] * q[1] + beta[2] * q[2] + c.node_term[k] * expected_degree;
  }
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    const double a = alpha[p];
    total -= xlogx(a) + xlogx(1.0 - a);
    if (s.source(p) < s.target(p)) {
      const double r = alpha[s.reverse(p)];
      total += params.lambda * (1.0 - 2.0 * (a + r) + 4.0 * a * r) +
               (2.0 * a * r - 1.0) * c.data_term[p];
    }
  }
  return total;
}

}  // namespace

// ---------------------------------------------------------------- params

MfnParams MfnParams::zeros(std::size_t feature_dim) {
  MfnParams p;
  p.a.assign(feature_dim, 0.0);
  p.eta.assign(feature_dim, 0.0);
  p.nu.assign(feature_dim, 0.0);
  return p;
}

std::vector<double> MfnParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(4 + 3 * a.size());
  flat.push_back(lambda);
  flat.insert(flat.end(), beta.begin(), beta.end());
  flat.insert(flat.end(), a.begin(), a.end());
  flat.insert(flat.end(), eta.begin(), eta.end());
  flat.insert(flat.end(), nu.begin(), nu.end());
  return flat;
}

MfnParams MfnParams::unflatten(std::span<const double> flat, std::size_t feature_dim) {
  if (flat.size() != mfn_param_count(feature_dim)) {
    throw InputError("MFN parameter vector has " + std::to_string(flat.size()) +
                     " entries, expected " + std::to_string(mfn_param_count(feature_dim)));
  }
  MfnParams p;
  p.lambda = flat[0];
  std::copy_n(flat.begin() + 1, 3, p.beta.begin());
  const auto f = static_cast<std::ptrdiff_t>(feature_dim);
  auto it = flat.begin() + 4;
  p.a.assign(it, it + f);
  p.eta.assign(it + f, it + 2 * f);
  p.nu.assign(it + 2 * f, it + 3 * f);
  return p;
}

std::size_t mfn_param_count(std::size_t feature_dim) {
  if (feature_dim == 0) throw ParameterError("MFN feature dimension must be at least 1");
  return 4 + 3 * feature_dim;
}

// ------------------------------------------------------------ potentials

double node_potential(std::span<const bool> config, std::span<const double> x_i,
                      const MfnParams& params) {
  const auto degree = static_cast<std::size_t>(std::count(config.begin(), config.end(), true));
  double value = degree < 3 ? params.beta[degree] : 0.0;
  value += dot(params.a, x_i) * static_cast<double>(degree);
  return value;
}

double pairwise_potential(bool s_ij, bool s_ji, const PairwiseFeature& feature,
                          const MfnParams& params) {
  const double agree = s_ij == s_ji ? 1.0 : -1.0;
  const double both = (s_ij && s_ji) ? 1.0 : -1.0;
  return params.lambda * agree +
         both * (dot(params.eta, feature.absdiff) + dot(params.nu, feature.prod));
}

// -------------------------------------------------------------- MfnGraph

MfnGraph::MfnGraph(PreparedGraph graph) : graph_(std::move(graph)) {
  const auto& s = graph_.support();
  const std::size_t f = graph_.feature_dim();
  absdiff_.resize(s.pair_count() * f);
  prod_.resize(s.pair_count() * f);
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    const auto pf = pairwise_feature(graph_.features(), s.source(p), s.target(p));
    std::copy(pf.absdiff.begin(), pf.absdiff.end(), absdiff_.begin() + static_cast<std::ptrdiff_t>(p * f));
    std::copy(pf.prod.begin(), pf.prod.end(), prod_.begin() + static_cast<std::ptrdiff_t>(p * f));
  }
}

std::span<const double> MfnGraph::absdiff(std::size_t pair) const {
  return std::span<const double>(absdiff_).subspan(pair * feature_dim(), feature_dim());
}

std::span<const double> MfnGraph::prod(std::size_t pair) const {
  return std::span<const double>(prod_).subspan(pair * feature_dim(), feature_dim());
}

// ----------------------------------------------------------------- gamma

double gamma(int k, int l, const ConnectivityMatrix& alpha, const MfnGraph& graph,
             const MfnParams& params) {
  check_params(params, graph.feature_dim());
  const auto& s = graph.support();
  if (k == l) throw SupportError("gamma: k == l (" + std::to_string(k) + ")");
  const auto p = s.find(k, l);
  if (!p) {
    throw SupportError("gamma: " + std::to_string(l) + " is not a neighbour of " +
                       std::to_string(k));
  }
  const auto a = alpha.values();

  // Pr[deg = 0, 1, 2] among N_k \ l by direct recursion.
  double q0 = 1.0, q1 = 0.0, q2 = 0.0;
  for (std::size_t m = s.begin(k); m < s.end(k); ++m) {
    if (m == *p) continue;
    const double am = a[m];
    q2 = q2 * (1.0 - am) + q1 * am;
    q1 = q1 * (1.0 - am) + q0 * am;
    q0 = q0 * (1.0 - am);
  }
  const auto& beta = params.beta;
  const double prior = q0 * (beta[1] - beta[0]) + q1 * (beta[2] - beta[1]) - q2 * beta[2];
  const double a_lk = a[s.reverse(*p)];
  const double data =
      dot(params.eta, graph.absdiff(*p)) + dot(params.nu, graph.prod(*p));
  return prior + dot(params.a, graph.graph().features().row(static_cast<std::size_t>(k))) +
         (4.0 * a_lk - 2.0) * params.lambda + 2.0 * a_lk * data;
}

std::vector<double> all_gammas(const MfnGraph& graph, const MfnParams& params,
                               std::span<const double> alpha) {
  check_params(params, graph.feature_dim());
  const auto c = layer_constants(graph, params);
  std::vector<double> g(graph.support().pair_count());
  compute_gammas(graph, params, c, alpha, g, nullptr);
  return g;
}

// ------------------------------------------------------------------ ELBO

double elbo(const ConnectivityMatrix& alpha, const MfnGraph& graph, const MfnParams& params) {
  check_params(params, graph.feature_dim());
  return elbo_with(graph, params, layer_constants(graph, params), alpha.values());
}

// --------------------------------------------------------------- forward

MfnForwardResult mfn_forward(const MfnGraph& graph, const MfnParams& params,
                             const MfnOptions& options,
                             std::optional<ConnectivityMatrix> alpha_init) {
  if (options.layers < 1) throw ParameterError("MFN needs at least one layer");
  check_params(params, graph.feature_dim());
  const auto& s = graph.support();
  const std::size_t n_pairs = s.pair_count();

  std::vector<double> current;
  if (alpha_init) {
    if (alpha_init->values().size() != n_pairs) {
      throw SupportError("alpha_init does not match the input adjacency support");
    }
    current.assign(alpha_init->values().begin(), alpha_init->values().end());
  } else {
    current.assign(n_pairs, 0.5);
  }

  const auto c = layer_constants(graph, params);
  MfnForwardResult result;
  result.layers.reserve(static_cast<std::size_t>(options.layers) + 1);
  result.layers.push_back(current);
  if (options.record_elbo) result.trace.values.push_back(elbo_with(graph, params, c, current));

  std::vector<double> g(n_pairs);
  const Poly3 w = prior_weights(params);
  for (int t = 0; t < options.layers; ++t) {
    if (options.schedule == MfnSchedule::synchronous) {
      compute_gammas(graph, params, c, current, g, nullptr);
      for (std::size_t p = 0; p < n_pairs; ++p) current[p] = sigmoid(g[p]);
    } else {
      // Each coordinate update sees the freshest values of its neighbours.
      for (std::size_t p = 0; p < n_pairs; ++p) {
        const int k = s.source(p);
        double q0 = 1.0, q1 = 0.0, q2 = 0.0;
        for (std::size_t m = s.begin(k); m < s.end(k); ++m) {
          if (m == p) continue;
          const double am = current[m];
          q2 = q2 * (1.0 - am) + q1 * am;
          q1 = q1 * (1.0 - am) + q0 * am;
          q0 = q0 * (1.0 - am);
        }
        const double a_rev = current[s.reverse(p)];
        const double gp = w[0] * q0 + w[1] * q1 + w[2] * q2 +
                          c.node_term[static_cast<std::size_t>(k)] +
                          (4.0 * a_rev - 2.0) * params.lambda + 2.0 * a_rev * c.data_term[p];
        current[p] = sigmoid(gp);
      }
    }
    result.layers.push_back(current);
    if (options.record_elbo) result.trace.values.push_back(elbo_with(graph, params, c, current));
  }
  result.alpha = ConnectivityMatrix(graph.graph().support_ptr(), std::move(current));
  return result;
}

// -------------------------------------------------------------- backward

std::vector<double> mfn_backward(const MfnGraph& graph, const MfnParams& params,
                                 const MfnForwardResult& forward,
                                 std::span<const double> dloss_dalpha) {
  check_params(params, graph.feature_dim());
  const auto& s = graph.support();
  const std::size_t n_pairs = s.pair_count();
  const std::size_t f = graph.feature_dim();
  if (dloss_dalpha.size() != n_pairs) throw InputError("mfn_backward: gradient size mismatch");
  if (forward.layers.size() < 2) throw InputError("mfn_backward: forward pass has no layers");

  const auto c = layer_constants(graph, params);
  const Poly3 w = prior_weights(params);
  const auto& features = graph.graph().features();

  // Gradient w.r.t. [lambda, beta, a, eta, nu] accumulated in pieces.
  double d_lambda = 0.0;
  Poly3 d_beta{};
  std::vector<double> d_node_term(s.node_count(), 0.0);
  std::vector<double> d_data_term(n_pairs, 0.0);

  std::vector<double> upstream(dloss_dalpha.begin(), dloss_dalpha.end());
  std::vector<double> u(n_pairs);
  std::vector<double> next(n_pairs);
  NodeScratch scratch;
  std::vector<Poly3> bar_prefix;
  std::vector<Poly3> bar_suffix;

  for (std::size_t t = forward.layers.size() - 1; t-- > 0;) {
    const auto& in = forward.layers[t];
    const auto& out = forward.layers[t + 1];
    for (std::size_t p = 0; p < n_pairs; ++p) u[p] = upstream[p] * out[p] * (1.0 - out[p]);
    std::fill(next.begin(), next.end(), 0.0);

    for (std::size_t k = 0; k < s.node_count(); ++k) {
      const std::size_t b = s.begin(static_cast<int>(k));
      const std::size_t d = s.degree(static_cast<int>(k));
      if (d == 0) continue;
      scratch.fill(std::span<const double>(in).subspan(b, d));
      bar_prefix.assign(d + 1, Poly3{});
      bar_suffix.assign(d + 1, Poly3{});

      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t p = b + i;
        const double up = u[p];
        const Poly3 q = scratch.excluding(i);
        // prior = -b0 q0 + b1 (q0 - q1) + b2 (q1 - q2)
        d_beta[0] -= up * q[0];
        d_beta[1] += up * (q[0] - q[1]);
        d_beta[2] += up * (q[1] - q[2]);
        d_node_term[k] += up;

        const std::size_t rev = s.reverse(p);
        const double a_rev = in[rev];
        d_lambda += up * (4.0 * a_rev - 2.0);
        d_data_term[p] += up * 2.0 * a_rev;
        next[rev] += up * (4.0 * params.lambda + 2.0 * c.data_term[p]);

        add_to(bar_prefix[i], correlate(w, scratch.suffix[i + 1]), up);
        add_to(bar_suffix[i + 1], correlate(w, scratch.prefix[i]), up);
      }
      // prefix[i+1] = prefix[i] * f_i, swept from the end.
      for (std::size_t i = d; i-- > 0;) {
        add_to(bar_prefix[i], correlate_factor(bar_prefix[i + 1], in[b + i]));
        const Poly3 bar_f = correlate(bar_prefix[i + 1], scratch.prefix[i]);
        next[b + i] += bar_f[1] - bar_f[0];
      }
      // suffix[i] = f_i * suffix[i+1], swept from the front.
      for (std::size_t i = 0; i < d; ++i) {
        add_to(bar_suffix[i + 1], correlate_factor(bar_suffix[i], in[b + i]));
        const Poly3 bar_f = correlate(bar_suffix[i], scratch.suffix[i + 1]);
        next[b + i] += bar_f[1] - bar_f[0];
      }
    }
    upstream.swap(next);
  }

  std::vector<double> grad(mfn_param_count(f), 0.0);
  grad[0] = d_lambda;
  grad[1] = d_beta[0];
  grad[2] = d_beta[1];
  grad[3] = d_beta[2];
  for (std::size_t k = 0; k < s.node_count(); ++k) {
    if (d_node_term[k] == 0.0) continue;
    const auto x = features.row(k);
    for (std::size_t j = 0; j < f; ++j) grad[4 + j] += d_node_term[k] * x[j];
  }
  for (std::size_t p = 0; p < n_pairs; ++p) {
    if (d_data_term[p] == 0.0) continue;
    const auto ad = graph.absdiff(p);
    const auto pr = graph.prod(p);
    for (std::size_t j = 0; j < f; ++j) {
      grad[4 + f + j] += d_data_term[p] * ad[j];
      grad[4 + 2 * f + j] += d_data_term[p] * pr[j];
    }
  }
  return grad;
}

}  // namespace graphrefine
