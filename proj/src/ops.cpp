#include "subln/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "subln/errors.hpp"

namespace subln::ops {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

// C[m x n] += A[m x k] . B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a[i * k + p];
      if (a_ip == 0.0) continue;
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

// C[m x n] += A[m x k] . B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T . B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* b_row = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a[i * k + p];
      if (a_ip == 0.0) continue;
      double* c_row = c + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return tape.record("matmul", {a, b}, {m, n}, std::move(out), [a, b, m, k, n](std::span<const double> g) {
    if (a.requires_grad()) {
      std::vector<double> da(m * k, 0.0);
      gemm_nt(g.data(), b.data().data(), da.data(), m, n, k);
      Tape::accumulate(a, da);
    }
    if (b.requires_grad()) {
      std::vector<double> db(k * n, 0.0);
      gemm_tn(a.data().data(), g.data(), db.data(), m, k, n);
      Tape::accumulate(b, db);
    }
  });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t m = x.rows(), k = x.cols(), n = w.rows();
  if (w.cols() != k) {
    throw DimensionError("linear: input width " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(x.data().data(), w.data().data(), out.data(), m, k, n);
  return tape.record("linear", {x, w}, {m, n}, std::move(out), [x, w, m, k, n](std::span<const double> g) {
    if (x.requires_grad()) {
      std::vector<double> dx(m * k, 0.0);
      gemm_nn(g.data(), w.data().data(), dx.data(), m, n, k);
      Tape::accumulate(x, dx);
    }
    if (w.requires_grad()) {
      std::vector<double> dw(n * k, 0.0);
      gemm_tn(g.data(), x.data().data(), dw.data(), m, n, k);
      Tape::accumulate(w, dw);
    }
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  return tape.record("transpose", {a}, {n, m}, std::move(out), [a, m, n](std::span<const double> g) {
    std::vector<double> da(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] = g[j * m + i];
    Tape::accumulate(a, da);
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ, " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return tape.record("add", {a, b}, a.shape(), std::move(out), [a, b](std::span<const double> g) {
    Tape::accumulate(a, g);
    Tape::accumulate(b, g);
  });
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
  return tape.record("scale", {a}, a.shape(), std::move(out), [a, c](std::span<const double> g) {
    std::vector<double> da(g.begin(), g.end());
    for (auto& v : da) v *= c;
    Tape::accumulate(a, da);
  });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return tape.record("sum", {a}, {1}, {total}, [a](std::span<const double> g) {
    std::vector<double> da(a.numel(), g[0]);
    Tape::accumulate(a, da);
  });
}

Tensor pick(Tape& tape, const Tensor& a, std::size_t row, std::size_t col) {
  if (row >= a.rows() || col >= a.cols() || a.rank() > 2) {
    throw IndexError("pick: (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
                     shape_string(a.shape()));
  }
  const std::size_t index = row * a.cols() + col;
  return tape.record("pick", {a}, {1}, {a[index]},
                     [a, index](std::span<const double> g) { Tape::accumulate(a, index, g[0]); });
}

Tensor layer_norm(Tape& tape, const Tensor& x, double eps) {
  if (eps < 0.0) throw ConfigError("layer_norm: eps must be non-negative");
  const std::size_t d = x.cols();
  if (x.rank() == 0 || d < 2) throw DimensionError("layer_norm: last dimension must be >= 2, got " + shape_string(x.shape()));
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double* y = out.data() + r * d;
    const bool constant = std::all_of(in, in + d, [first = in[0]](double v) { return v == first; });
    if (constant) {
      if (eps == 0.0) throw DivisionHazard("layer_norm: constant input vector with eps = 0");
      std::fill(y, y + d, 0.0);
      inv_std[r] = 1.0 / std::sqrt(eps);
      continue;
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += in[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < d; ++i) y[i] = (in[i] - mean) * is;
  }
  std::vector<double> normalized = out;
  return tape.record("layer_norm", {x}, x.shape(), std::move(out),
                     [x, d, rows, inv_std = std::move(inv_std), y = std::move(normalized)](std::span<const double> g) {
                       std::vector<double> dx(x.numel());
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g.data() + r * d;
                         const double* yr = y.data() + r * d;
                         double g_mean = 0.0, gy_mean = 0.0;
                         for (std::size_t i = 0; i < d; ++i) {
                           g_mean += gr[i];
                           gy_mean += gr[i] * yr[i];
                         }
                         g_mean *= inv_d;
                         gy_mean *= inv_d;
                         for (std::size_t i = 0; i < d; ++i) {
                           dx[r * d + i] = inv_std[r] * (gr[i] - g_mean - yr[i] * gy_mean);
                         }
                       }
                       Tape::accumulate(x, dx);
                     });
}

Tensor gelu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * normal_cdf(x[i]);
  return tape.record("gelu", {x}, x.shape(), std::move(out), [x](std::span<const double> g) {
    std::vector<double> dx(x.numel());
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = x[i];
      dx[i] = g[i] * (normal_cdf(v) + v * normal_pdf(v));
    }
    Tape::accumulate(x, dx);
  });
}

Tensor softmax_rows(Tape& tape, const Tensor& x, bool causal) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? std::min(n, i + 1) : n;
    const double* in = x.data().data() + i * n;
    double* y = out.data() + i * n;
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(in[j] - peak);
      total += y[j];
    }
    for (std::size_t j = 0; j < width; ++j) y[j] /= total;
  }
  std::vector<double> probs = out;
  return tape.record("softmax_rows", {x}, {m, n}, std::move(out),
                     [x, m, n, y = std::move(probs)](std::span<const double> g) {
                       std::vector<double> dx(m * n);
                       for (std::size_t i = 0; i < m; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                         for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
                       }
                       Tape::accumulate(x, dx);
                     });
}

Tensor embed(Tape& tape, const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "embed");
  if (ids.empty()) throw DimensionError("embed: empty id sequence");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= vocab) {
      throw IndexError("embed: id " + std::to_string(ids[t]) + " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[t] * d), d, out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return tape.record("embed", {table}, {ids.size(), d}, std::move(out),
                     [table, d, rows = std::move(rows)](std::span<const double> g) {
                       if (!table.requires_grad()) return;
                       Tensor t = table;
                       auto grad = t.mutable_grad();
                       for (std::size_t r = 0; r < rows.size(); ++r)
                         for (std::size_t j = 0; j < d; ++j) grad[rows[r] * d + j] += g[r * d + j];
                     });
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside " +
                     shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i, begin + j);
  return tape.record("slice_cols", {x}, {m, w}, std::move(out), [x, m, n, w, begin](std::span<const double> g) {
    if (!x.requires_grad()) return;
    Tensor t = x;
    auto grad = t.mutable_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) grad[i * n + begin + j] += g[i * w + j];
  });
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out[i * n + offset + j] = p.at(i, j);
    offset += p.cols();
  }
  return tape.record("concat_cols", parts, {m, n}, std::move(out), [parts, m, n](std::span<const double> g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.cols();
      if (p.requires_grad()) {
        std::vector<double> dp(m * w);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) dp[i * w + j] = g[i * n + off + j];
        Tape::accumulate(p, dp);
      }
      off += w;
    }
  });
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t label) {
  if (logits.rank() > 2 || (logits.rank() == 2 && logits.rows() != 1)) {
    throw DimensionError("cross_entropy: expected [V] or [1 x V] logits, got " + shape_string(logits.shape()));
  }
  const long target = static_cast<long>(label);
  if (label >= logits.cols()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " outside " + std::to_string(logits.cols()) +
                     " classes");
  }
  return cross_entropy_rows(tape, logits, std::span<const long>(&target, 1));
}

Tensor cross_entropy_rows(Tape& tape, const Tensor& logits, std::span<const long> targets) {
  const std::size_t v = logits.cols();
  const std::size_t m = logits.numel() / v;
  if (targets.size() != m) {
    throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
  }
  double loss = 0.0;
  std::vector<double> probs(m * v, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= v) {
      throw IndexError("cross_entropy: label " + std::to_string(targets[i]) + " outside " + std::to_string(v) +
                       " classes");
    }
    const double* row = logits.data().data() + i * v;
    const double peak = *std::max_element(row, row + v);
    double total = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(row[j] - peak);
      total += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= total;
    loss += std::log(total) + peak - row[targets[i]];
  }
  std::vector<long> labels(targets.begin(), targets.end());
  return tape.record("cross_entropy", {logits}, {1}, {loss},
                     [logits, m, v, probs = std::move(probs), labels = std::move(labels)](std::span<const double> g) {
                       std::vector<double> dl(m * v, 0.0);
                       for (std::size_t i = 0; i < m; ++i) {
                         if (labels[i] < 0) continue;
                         for (std::size_t j = 0; j < v; ++j) dl[i * v + j] = g[0] * probs[i * v + j];
                         dl[i * v + static_cast<std::size_t>(labels[i])] -= g[0];
                       }
                       Tape::accumulate(logits, dl);
                     });
}

}  // namespace subln::ops
