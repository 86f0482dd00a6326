// Independent reference implementations used to check the library.
// Written for obviousness, not speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Tokens = std::vector<std::string>;

inline std::vector<Tokens> windows(const Tokens& t, std::size_t n) {
  std::vector<Tokens> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
  return out;
}

// Clipped overlap by pairing each candidate window with an unused equal
// reference window.
inline std::size_t ngram_overlap(const Tokens& cand, const Tokens& ref, std::size_t n) {
  const auto c = windows(cand, n);
  const auto r = windows(ref, n);
  std::vector<bool> used(r.size(), false);
  std::size_t hits = 0;
  for (const auto& w : c) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!used[j] && r[j] == w) {
        used[j] = true;
        ++hits;
        break;
      }
    }
  }
  return hits;
}

struct Prf {
  double p = 0, r = 0, f = 0;
};

inline Prf prf(double overlap, double cand_total, double ref_total) {
  Prf out;
  out.p = cand_total > 0 ? overlap / cand_total : 0.0;
  out.r = ref_total > 0 ? overlap / ref_total : 0.0;
  out.f = out.p + out.r > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

inline Prf rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n) {
  return prf(static_cast<double>(ngram_overlap(cand, ref, n)), static_cast<double>(windows(cand, n).size()),
             static_cast<double>(windows(ref, n).size()));
}

inline bool is_subsequence(const Tokens& small, const Tokens& big) {
  std::size_t k = 0;
  for (const auto& t : big) {
    if (k < small.size() && small[k] == t) ++k;
  }
  return k == small.size();
}

// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) sub.push_back(a[i]);
    }
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline Prf rouge_l(const Tokens& cand, const Tokens& ref) {
  return prf(static_cast<double>(lcs(cand, ref)), static_cast<double>(cand.size()), static_cast<double>(ref.size()));
}

using Vec = std::vector<double>;

inline double cosine(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Exhaustive greedy matching; inputs must already be unit vectors.
inline Prf bertscore(const std::vector<Vec>& cand, const std::vector<Vec>& ref) {
  double p = 0.0;
  for (const auto& c : cand) {
    double best = -2.0;
    for (const auto& r : ref) best = std::max(best, dot(c, r));
    p += best;
  }
  double r = 0.0;
  for (const auto& x : ref) {
    double best = -2.0;
    for (const auto& c : cand) best = std::max(best, dot(c, x));
    r += best;
  }
  Prf out;
  out.p = p / static_cast<double>(cand.size());
  out.r = r / static_cast<double>(ref.size());
  out.f = out.p + out.r > 0 ? 2 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

// TF-IDF cosine between bags of words, idf = ln(N/df); raw term-frequency
// cosine when a vector has no weight left after idf.
inline Eigen::MatrixXd similarity(const std::vector<Tokens>& sentences) {
  const auto n = static_cast<Eigen::Index>(sentences.size());
  std::map<std::string, Eigen::Index> vocab;
  for (const auto& s : sentences) {
    for (const auto& t : s) vocab.emplace(t, static_cast<Eigen::Index>(vocab.size()));
  }
  Eigen::MatrixXd tf = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(vocab.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& t : sentences[static_cast<std::size_t>(i)]) tf(i, vocab[t]) += 1.0;
  }
  Eigen::MatrixXd w = tf;
  for (Eigen::Index c = 0; c < tf.cols(); ++c) {
    const double df = static_cast<double>((tf.col(c).array() > 0).count());
    w.col(c) *= std::log(static_cast<double>(n) / df);
  }
  Eigen::MatrixXd sim = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      double v = 0.0;
      if (w.row(i).norm() > 0 && w.row(j).norm() > 0) {
        v = w.row(i).dot(w.row(j)) / (w.row(i).norm() * w.row(j).norm());
      } else if (tf.row(i).norm() > 0 && tf.row(j).norm() > 0) {
        v = tf.row(i).dot(tf.row(j)) / (tf.row(i).norm() * tf.row(j).norm());
      }
      sim(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  return sim;
}

// Stationary distribution of the damped random walk on the thresholded
// similarity graph, from a dense eigen-decomposition.
inline std::vector<double> lexrank(const Eigen::MatrixXd& sim, double threshold, double damping) {
  const auto n = sim.rows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && sim(i, j) >= threshold) m(i, j) = 1.0;
    }
    const double deg = m.row(i).sum();
    if (deg == 0) {
      m.row(i).setConstant(1.0 / static_cast<double>(n));
    } else {
      m.row(i) /= deg;
    }
  }
  const Eigen::MatrixXd g =
      damping * m.transpose() + Eigen::MatrixXd::Constant(n, n, (1.0 - damping) / static_cast<double>(n));
  Eigen::EigenSolver<Eigen::MatrixXd> solver(g);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < n; ++k) {
    if (std::abs(solver.eigenvalues()[k] - 1.0) < std::abs(solver.eigenvalues()[best] - 1.0)) best = k;
  }
  Eigen::VectorXd v = solver.eigenvectors().col(best).real();
  v /= v.sum();
  return {v.data(), v.data() + v.size()};
}

// Top k by score, ties to the earlier index, returned in index order.
inline std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k, double tie = 1e-9) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] + tie; });
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace oracle
