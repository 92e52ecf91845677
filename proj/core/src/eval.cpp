#include "dcc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <json.hpp>

#include "dcc/error.hpp"
#include "dcc/io.hpp"
#include "dcc/rng.hpp"

namespace dcc {

Permutation::Permutation(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
  std::vector<bool> seen(mapping_.size(), false);
  for (std::size_t v : mapping_) {
    if (v >= mapping_.size() || seen[v]) throw DataError("mapping is not a bijection");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t k) {
  std::vector<std::size_t> m(k);
  for (std::size_t i = 0; i < k; ++i) m[i] = i;
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(mapping_.size());
  for (std::size_t i = 0; i < mapping_.size(); ++i) inv[mapping_[i]] = i;
  return Permutation(std::move(inv));
}

Assignment hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("hungarian: cost matrix must be square");
  if (!cost.all_finite()) throw DataError("hungarian: cost matrix must be finite");
  const std::size_t n = cost.rows();
  if (n == 0) return {Permutation{}, 0.0};

  // Shortest augmenting paths with row/column potentials, 1-based with a
  // sentinel column 0.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  Assignment out{Permutation(std::move(row_to_col)), 0.0};
  for (std::size_t r = 0; r < n; ++r) out.total_cost += cost(r, out.assignment[r]);
  return out;
}

namespace {

Matrix row_normalized(const Matrix& m, const char* which) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v * v;
    if (!(s > 0.0)) {
      throw DegenerateInputError(std::string("aligned_mse: ") + which + " row " +
                                 std::to_string(r) + " is zero");
    }
    const double inv = 1.0 / std::sqrt(s);
    for (double& v : out.row(r)) v *= inv;
  }
  return out;
}

}  // namespace

AlignedMse aligned_mse(const Matrix& m_hat, const Matrix& m_true) {
  if (m_hat.rows() != m_true.rows() || m_hat.cols() != m_true.cols()) {
    throw ShapeError("aligned_mse: shapes differ");
  }
  const std::size_t k = m_hat.rows();
  const Matrix h = row_normalized(m_hat, "estimate");
  const Matrix t = row_normalized(m_true, "ground truth");
  Matrix cost(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    const auto ha = h.row(a);
    for (std::size_t b = 0; b < k; ++b) {
      const auto tb = t.row(b);
      double s = 0.0;
      for (std::size_t c = 0; c < ha.size(); ++c) {
        const double d = tb[c] - ha[c];
        s += d * d;
      }
      cost(a, b) = s;
    }
  }
  Assignment as = hungarian(cost);
  return {as.total_cost / static_cast<double>(k), as.assignment};
}

ClusteringMetrics clustering_metrics(std::span<const std::size_t> labels_pred,
                                     std::span<const std::size_t> labels_true) {
  if (labels_pred.size() != labels_true.size()) throw ShapeError("label arrays differ in length");
  if (labels_pred.empty()) throw ShapeError("label arrays are empty");
  const std::size_t n = labels_pred.size();
  const std::size_t kp = *std::max_element(labels_pred.begin(), labels_pred.end()) + 1;
  const std::size_t kt = *std::max_element(labels_true.begin(), labels_true.end()) + 1;

  std::vector<double> table(kp * kt, 0.0), row_sum(kp, 0.0), col_sum(kt, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    table[labels_pred[i] * kt + labels_true[i]] += 1.0;
    row_sum[labels_pred[i]] += 1.0;
    col_sum[labels_true[i]] += 1.0;
  }
  const double dn = static_cast<double>(n);
  ClusteringMetrics out;

  const std::size_t s = std::max(kp, kt);
  Matrix neg(s, s);
  for (std::size_t a = 0; a < kp; ++a)
    for (std::size_t b = 0; b < kt; ++b) neg(a, b) = -table[a * kt + b];
  out.acc = -hungarian(neg).total_cost / dn;

  auto entropy = [dn](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts)
      if (c > 0.0) h -= (c / dn) * std::log(c / dn);
    return h;
  };
  const double hp = entropy(row_sum);
  const double ht = entropy(col_sum);
  double mi = 0.0;
  for (std::size_t a = 0; a < kp; ++a)
    for (std::size_t b = 0; b < kt; ++b) {
      const double c = table[a * kt + b];
      if (c > 0.0) mi += (c / dn) * std::log(dn * c / (row_sum[a] * col_sum[b]));
    }
  if (hp == 0.0 && ht == 0.0) {
    out.nmi = 1.0;
  } else if (hp == 0.0 || ht == 0.0) {
    out.nmi = 0.0;
  } else {
    out.nmi = std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
  }

  auto pairs = [](double c) { return c * (c - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double c : table) index += pairs(c);
  for (double c : row_sum) sum_a += pairs(c);
  for (double c : col_sum) sum_b += pairs(c);
  const double total_pairs = pairs(dn);
  const double expected = total_pairs > 0.0 ? sum_a * sum_b / total_pairs : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  out.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);
  return out;
}

AscCheck check_asc(const Matrix& m, double tol) {
  const std::size_t k = m.rows();
  AscCheck out;
  out.witnesses.assign(k, std::nullopt);
  for (std::size_t e = 0; e < k; ++e) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_col = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double d = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        d = std::max(d, std::abs(m(r, c) - (r == e ? 1.0 : 0.0)));
      }
      if (d < best) {
        best = d;
        best_col = c;
      }
    }
    if (best <= tol) {
      out.witnesses[e] = best_col;
    } else {
      out.missing.push_back(e);
    }
  }
  out.satisfied = out.missing.empty();
  return out;
}

std::string to_string(SscVerdict v) {
  switch (v) {
    case SscVerdict::kCertifiedByAsc: return "certified-by-ASC";
    case SscVerdict::kSampledPass: return "sampled-pass";
    case SscVerdict::kSampledFail: return "sampled-fail";
  }
  return "sampled-fail";
}

SscVerdict ssc_verdict_from_string(const std::string& s) {
  if (s == "certified-by-ASC") return SscVerdict::kCertifiedByAsc;
  if (s == "sampled-pass") return SscVerdict::kSampledPass;
  if (s == "sampled-fail") return SscVerdict::kSampledFail;
  throw DataError("unknown SSC verdict '" + s + "'");
}

NnlsResult nnls(const Matrix& a, std::span<const double> b) {
  const std::size_t rows = a.rows();
  const std::size_t n = a.cols();
  if (b.size() != rows) throw ShapeError("nnls: rhs length mismatch");

  std::vector<double> w(n, 0.0);
  std::vector<bool> passive(n, false), blocked(n, false);
  std::vector<double> resid(b.begin(), b.end());
  auto residual_of = [&](const std::vector<double>& x) {
    std::vector<double> r(b.begin(), b.end());
    for (std::size_t c = 0; c < n; ++c)
      if (x[c] != 0.0)
        for (std::size_t i = 0; i < rows; ++i) r[i] -= a(i, c) * x[c];
    return r;
  };
  // Unconstrained least squares on the passive columns via normal equations.
  auto solve_passive = [&](std::vector<double>& z) -> bool {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < n; ++c)
      if (passive[c]) idx.push_back(c);
    Matrix g(idx.size(), idx.size());
    Matrix rhs(idx.size(), 1);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      for (std::size_t q = 0; q < idx.size(); ++q) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += a(i, idx[p]) * a(i, idx[q]);
        g(p, q) = s;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += a(i, idx[p]) * b[i];
      rhs(p, 0) = s;
    }
    try {
      const Matrix sol = CholeskyFactor(g).solve(rhs);
      z.assign(n, 0.0);
      for (std::size_t p = 0; p < idx.size(); ++p) z[idx[p]] = sol(p, 0);
      return true;
    } catch (const SingularityError&) {
      return false;
    }
  };

  const double tol = 1e-13;
  const std::size_t max_outer = 3 * n + 10;
  std::vector<double> z;
  for (std::size_t outer = 0; outer < max_outer; ++outer) {
    resid = residual_of(w);
    double best = tol;
    std::size_t t = n;
    for (std::size_t c = 0; c < n; ++c) {
      if (passive[c] || blocked[c]) continue;
      double g = 0.0;
      for (std::size_t i = 0; i < rows; ++i) g += a(i, c) * resid[i];
      if (g > best) {
        best = g;
        t = c;
      }
    }
    if (t == n) break;
    passive[t] = true;
    bool progressed = false;
    for (std::size_t inner = 0; inner <= n; ++inner) {
      if (!solve_passive(z)) {
        passive[t] = false;
        blocked[t] = true;
        break;
      }
      bool all_pos = true;
      for (std::size_t c = 0; c < n; ++c)
        if (passive[c] && z[c] <= 0.0) all_pos = false;
      if (all_pos) {
        w = z;
        progressed = true;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n; ++c) {
        if (passive[c] && z[c] <= 0.0) alpha = std::min(alpha, w[c] / (w[c] - z[c]));
      }
      for (std::size_t c = 0; c < n; ++c) {
        if (!passive[c]) continue;
        w[c] += alpha * (z[c] - w[c]);
        if (w[c] <= 1e-15) {
          w[c] = 0.0;
          passive[c] = false;
        }
      }
      progressed = true;
    }
    if (progressed) std::fill(blocked.begin(), blocked.end(), false);
  }
  resid = residual_of(w);
  double r2 = 0.0;
  for (double r : resid) r2 += r * r;
  return {std::move(w), std::sqrt(r2)};
}

SscCheck check_ssc_sampled(const Matrix& m, std::size_t n_directions, std::uint64_t seed) {
  if (n_directions < 100) throw ConfigError("check_ssc_sampled: need at least 100 directions");
  SscCheck out;
  if (check_asc(m, 1e-12).satisfied) {
    out.verdict = SscVerdict::kCertifiedByAsc;
    return out;
  }
  const std::size_t k = m.rows();
  const double dk = static_cast<double>(k);
  const double axis = 1.0 / std::sqrt(dk);
  const double phi_max = std::acos(std::sqrt((dk - 1.0) / dk));
  Rng rng(derive_seed(seed, "ssc"));
  std::vector<double> w(k), x(k);
  out.directions = n_directions;
  for (std::size_t d = 0; d < n_directions; ++d) {
    double norm2 = 0.0;
    while (!(norm2 > 1e-12)) {
      double mean = 0.0;
      for (double& v : w) {
        v = rng.normal();
        mean += v;
      }
      mean /= dk;
      norm2 = 0.0;
      for (double& v : w) {
        v -= mean;
        norm2 += v * v;
      }
    }
    const double inv = 1.0 / std::sqrt(norm2);
    const double phi = d % 4 == 0 ? phi_max : phi_max * rng.uniform01();
    for (std::size_t r = 0; r < k; ++r) x[r] = std::cos(phi) * axis + std::sin(phi) * w[r] * inv;
    const double res = nnls(m, x).residual;
    out.worst_residual = std::max(out.worst_residual, res);
    if (res < kSscResidualTol) ++out.passed;
  }
  out.verdict = out.passed == n_directions ? SscVerdict::kSampledPass : SscVerdict::kSampledFail;
  return out;
}

namespace {

double sq_dist_col(const Matrix& x, std::size_t c, const Matrix& centers, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double d = x(r, c) - centers(r, j);
    s += d * d;
  }
  return s;
}

KMeansResult lloyd(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.cols();
  const std::size_t dim = x.rows();
  Matrix centers(dim, k);
  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
  for (std::size_t r = 0; r < dim; ++r) centers(r, 0) = x(r, first);
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      d2[c] = std::min(d2[c], sq_dist_col(x, c, centers, j - 1));
      total += d2[c];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform01() * total;
      for (std::size_t c = 0; c < n; ++c) {
        target -= d2[c];
        if (target < 0.0) {
          pick = c;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.uniform_index(n));
    }
    for (std::size_t r = 0; r < dim; ++r) centers(r, j) = x(r, pick);
  }

  KMeansResult res;
  res.labels.assign(n, 0);
  std::vector<double> best_d(n, 0.0);
  constexpr std::size_t kMaxIter = 300;
  for (std::size_t iter = 0; iter < kMaxIter; ++iter) {
    bool changed = false;
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t lab = 0;
      double bd = sq_dist_col(x, c, centers, 0);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = sq_dist_col(x, c, centers, j);
        if (d < bd) {
          bd = d;
          lab = j;
        }
      }
      best_d[c] = bd;
      if (iter == 0 || lab != res.labels[c]) changed = true;
      res.labels[c] = lab;
    }
    std::vector<double> counts(k, 0.0);
    Matrix sums(dim, k);
    for (std::size_t c = 0; c < n; ++c) {
      counts[res.labels[c]] += 1.0;
      for (std::size_t r = 0; r < dim; ++r) sums(r, res.labels[c]) += x(r, c);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0.0) {
        // Re-seed from the point farthest from its current centroid.
        const auto far = static_cast<std::size_t>(
            std::max_element(best_d.begin(), best_d.end()) - best_d.begin());
        for (std::size_t r = 0; r < dim; ++r) centers(r, j) = x(r, far);
        best_d[far] = 0.0;
        res.labels[far] = j;
        changed = true;
        continue;
      }
      for (std::size_t r = 0; r < dim; ++r) centers(r, j) = sums(r, j) / counts[j];
    }
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (std::size_t c = 0; c < n; ++c) res.inertia += sq_dist_col(x, c, centers, res.labels[c]);
  return res;
}

}  // namespace

KMeansResult kmeans_reference(const Matrix& x, std::size_t k, std::uint64_t seed,
                              std::size_t restarts) {
  if (k == 0 || k > x.cols()) throw ConfigError("kmeans: need 1 <= k <= sample count");
  Rng rng(derive_seed(seed, "kmeans"));
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    KMeansResult cur = lloyd(x, k, rng);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

Matrix predict_memberships(const MlpParams& params, const Matrix& features) {
  constexpr std::size_t kChunk = 4096;
  Matrix out(params.num_clusters(), features.cols());
  for (std::size_t start = 0; start < features.cols(); start += kChunk) {
    const std::size_t end = std::min(features.cols(), start + kChunk);
    const Matrix m = forward(params, GroundTruth::columns(features, start, end)).first;
    for (std::size_t r = 0; r < m.rows(); ++r)
      std::copy(m.row(r).begin(), m.row(r).end(),
                out.row(r).begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

namespace {

SplitMetrics split_metrics(const Matrix& m_hat, const Matrix& m_true) {
  SplitMetrics s;
  const AlignedMse am = aligned_mse(m_hat, m_true);
  s.mse = am.mse;
  s.perm = am.perm;
  const auto pred = argmax_labels(m_hat);
  const auto truth = argmax_labels(m_true);
  s.clustering = clustering_metrics(pred, truth);
  return s;
}

}  // namespace

EvalReport evaluate_model(const MlpParams& params, const GroundTruth& gt,
                          const EvalOptions& options) {
  if (params.input_dim() != gt.features.rows()) {
    throw ConfigError("model input dim " + std::to_string(params.input_dim()) +
                      " does not match feature dim " + std::to_string(gt.features.rows()));
  }
  if (params.num_clusters() != gt.num_clusters()) {
    throw ConfigError("model K " + std::to_string(params.num_clusters()) +
                      " does not match ground-truth K " + std::to_string(gt.num_clusters()));
  }
  const Matrix m_hat = predict_memberships(params, gt.features);
  const Matrix hat_seen = GroundTruth::columns(m_hat, 0, gt.seen_count);
  EvalReport rep;
  rep.seen = split_metrics(hat_seen, gt.seen_memberships());
  if (gt.unseen_count() > 0) {
    rep.unseen = split_metrics(GroundTruth::columns(m_hat, gt.seen_count, gt.num_samples()),
                               gt.unseen_memberships());
  }
  rep.gram_logdet = logdet_gram(hat_seen, options.gram_ridge).value;
  rep.asc = check_asc(hat_seen, options.asc_tol);
  rep.ssc = check_ssc_sampled(hat_seen, options.ssc_directions, options.ssc_seed);
  return rep;
}

std::vector<std::string> eval_report_csv_header() {
  return {"mse_seen", "acc_seen",   "nmi_seen",    "ari_seen",      "mse_unseen", "acc_unseen",
          "nmi_unseen", "ari_unseen", "gram_logdet", "asc_satisfied", "ssc_verdict"};
}

std::vector<std::string> eval_report_csv_row(const EvalReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const SplitMetrics none{nan, {}, {nan, nan, nan}};
  const SplitMetrics& u = r.unseen ? *r.unseen : none;
  return {format_double(r.seen.mse),
          format_double(r.seen.clustering.acc),
          format_double(r.seen.clustering.nmi),
          format_double(r.seen.clustering.ari),
          format_double(u.mse),
          format_double(u.clustering.acc),
          format_double(u.clustering.nmi),
          format_double(u.clustering.ari),
          format_double(r.gram_logdet),
          r.asc.satisfied ? "1" : "0",
          to_string(r.ssc.verdict)};
}

std::string eval_report_json(const EvalReport& r) {
  using nlohmann::json;
  json witnesses = json::array();
  for (const auto& w : r.asc.witnesses) witnesses.push_back(w ? json(*w) : json(nullptr));
  json doc{{"permutation_seen", r.seen.perm.mapping()},
           {"asc",
            {{"satisfied", r.asc.satisfied}, {"witnesses", witnesses}, {"missing", r.asc.missing}}},
           {"ssc",
            {{"verdict", to_string(r.ssc.verdict)},
             {"directions", r.ssc.directions},
             {"passed", r.ssc.passed},
             {"worst_residual", r.ssc.worst_residual}}}};
  if (r.unseen) doc["permutation_unseen"] = r.unseen->perm.mapping();
  return doc.dump(2);
}

}  // namespace dcc
