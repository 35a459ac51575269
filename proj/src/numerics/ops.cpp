/* Copyright 2026 The LoZA Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "loza/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "loza/errors.hpp"

namespace loza::num {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape) + " vs " +
                         to_string(b.shape));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(a.shape));
  }
}

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ContractError("unbound Var");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ContractError("operands recorded on different graphs");
  return graph_of(a);
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
    throw DimensionError("matmul: cannot multiply " + to_string(A.shape) + " by " +
                         to_string(B.shape));
  }
  const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* c = &C.data[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.data[i * k + p];
      const double* brow = &B.data[p * n];
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
    }
  }
  const Var ins[] = {a, b};
  return g.record(std::move(C), ins, [m, k, n](BackwardContext& ctx) {
    const auto dC = ctx.grad_out();
    const Tensor& A = ctx.in(0);
    const Tensor& B = ctx.in(1);
    if (auto dA = ctx.grad_in(0); !dA.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* dc = &dC[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &B.data[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dc[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (auto dB = ctx.grad_in(1); !dB.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* dc = &dC[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A.data[i * k + p];
          double* db = &dB[p * n];
          for (std::size_t j = 0; j < n; ++j) db[j] += aip * dc[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  require_rank("transpose", A, 2);
  const std::size_t m = A.shape[0], n = A.shape[1];
  Tensor T({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T.data[j * m + i] = A.data[i * n + j];
  const Var ins[] = {a};
  return g.record(std::move(T), ins, [m, n](BackwardContext& ctx) {
    const auto dT = ctx.grad_out();
    auto dA = ctx.grad_in(0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += dT[j * m + i];
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out(a.shape(), a.value().data);
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
  const Var ins[] = {a, b};
  return g.record(std::move(out), ins, [](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    for (std::size_t k = 0; k < 2; ++k) {
      auto di = ctx.grad_in(k);
      for (std::size_t i = 0; i < di.size(); ++i) di[i] += d[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor out(a.shape(), a.value().data);
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
  const Var ins[] = {a, b};
  return g.record(std::move(out), ins, [](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i];
    auto db = ctx.grad_in(1);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= d[i];
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out(a.shape(), a.value().data);
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
  const Var ins[] = {a, b};
  return g.record(std::move(out), ins, [](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    const auto& av = ctx.in(0).data;
    const auto& bv = ctx.in(1).data;
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i] * bv[i];
    auto db = ctx.grad_in(1);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += d[i] * av[i];
  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  Tensor out(a.shape(), a.value().data);
  for (double& x : out.data) x *= factor;
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [factor](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i] * factor;
  });
}

Var sigmoid(Var a) {
  Graph& g = graph_of(a);
  Tensor out(a.shape());
  const auto& x = a.value().data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
  }
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    const auto& y = ctx.out().data;
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i] * y[i] * (1.0 - y[i]);
  });
}

Var gelu(Var a) {
  // tanh approximation
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  Graph& g = graph_of(a);
  Tensor out(a.shape());
  const auto& x = a.value().data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = kC * (x[i] + kA * x[i] * x[i] * x[i]);
    out.data[i] = 0.5 * x[i] * (1.0 + std::tanh(u));
  }
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    const auto& x = ctx.in(0).data;
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double u = kC * (x[i] + kA * x[i] * x[i] * x[i]);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * x[i] * x[i]);
      da[i] += d[i] * (0.5 * (1.0 + t) + 0.5 * x[i] * (1.0 - t * t) * du);
    }
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double x : a.value().data) s += x;
  const Var ins[] = {a};
  return g.record(Tensor::scalar(s), ins, [](BackwardContext& ctx) {
    const double d = ctx.grad_out()[0];
    auto da = ctx.grad_in(0);
    for (double& x : da) x += d;
  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  if (numel(shape) != a.value().size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  Tensor out(std::move(shape), a.value().data);
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  require_rank("slice_rows", A, 2);
  if (begin > end || end > A.shape[0]) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + to_string(A.shape));
  }
  const std::size_t cols = A.shape[1];
  Tensor out({end - begin, cols},
             std::vector<double>(A.data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                 A.data.begin() + static_cast<std::ptrdiff_t>(end * cols)));
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [begin, cols](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < d.size(); ++i) da[begin * cols + i] += d[i];
  });
}

Var head_slice(Var a, std::size_t head) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  require_rank("head_slice", A, 3);
  const std::size_t n = A.shape[0], h = A.shape[1], d = A.shape[2];
  if (head >= h) throw DimensionError("head_slice: head " + std::to_string(head) + " of " + to_string(A.shape));
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out.data[i * d + c] = A.data[(i * h + head) * d + c];
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [n, h, d, head](BackwardContext& ctx) {
    const auto dout = ctx.grad_out();
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) da[(i * h + head) * d + c] += dout[i * d + c];
  });
}

Var concat_heads(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_heads: no parts");
  Graph& g = graph_of(parts[0]);
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 2) throw DimensionError("concat_heads: parts must be n x d, got " + to_string(s0));
  for (Var p : parts) {
    graph_of(parts[0], p);
    require_same_shape("concat_heads", parts[0].value(), p.value());
  }
  const std::size_t n = s0[0], d = s0[1], h = parts.size();
  Tensor out({n, h, d});
  for (std::size_t hh = 0; hh < h; ++hh) {
    const auto& src = parts[hh].value().data;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) out.data[(i * h + hh) * d + c] = src[i * d + c];
  }
  return g.record(std::move(out), parts, [n, h, d](BackwardContext& ctx) {
    const auto dout = ctx.grad_out();
    for (std::size_t hh = 0; hh < h; ++hh) {
      auto dp = ctx.grad_in(hh);
      if (dp.empty()) continue;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) dp[i * d + c] += dout[(i * h + hh) * d + c];
    }
  });
}

Var rmsnorm(Var x, Var gain, double eps) {
  Graph& g = graph_of(x, gain);
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  require_rank("rmsnorm", X, 2);
  const std::size_t n = X.shape[0], d = X.shape[1];
  if (G.size() != d) {
    throw DimensionError("rmsnorm: gain " + to_string(G.shape) + " vs input " + to_string(X.shape));
  }
  Tensor out({n, d});
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ms = 0.0;
    for (std::size_t c = 0; c < d; ++c) ms += X.data[i * d + c] * X.data[i * d + c];
    inv[i] = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    for (std::size_t c = 0; c < d; ++c) out.data[i * d + c] = X.data[i * d + c] * inv[i] * G.data[c];
  }
  const Var ins[] = {x, gain};
  return g.record(std::move(out), ins, [n, d, inv = std::move(inv)](BackwardContext& ctx) {
    const auto dy = ctx.grad_out();
    const auto& X = ctx.in(0).data;
    const auto& G = ctx.in(1).data;
    auto dx = ctx.grad_in(0);
    auto dg = ctx.grad_in(1);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = inv[i];
      if (!dg.empty()) {
        for (std::size_t c = 0; c < d; ++c) dg[c] += dy[i * d + c] * X[i * d + c] * r;
      }
      if (!dx.empty()) {
        // y = g * x * r, r = (mean(x^2)+eps)^-1/2, dr/dx_c = -r^3 x_c / d
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += dy[i * d + c] * G[c] * X[i * d + c];
        const double k = dot * r * r * r / static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
          dx[i * d + c] += dy[i * d + c] * G[c] * r - k * X[i * d + c];
        }
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = graph_of(table);
  const Tensor& T = table.value();
  require_rank("embedding", T, 2);
  const std::size_t vocab = T.shape[0], d = T.shape[1];
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out({idv.size(), d});
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw ContractError("embedding: id " + std::to_string(idv[i]) + " outside vocabulary of " +
                          std::to_string(vocab));
    }
    std::copy_n(&T.data[static_cast<std::size_t>(idv[i]) * d], d, &out.data[i * d]);
  }
  const Var ins[] = {table};
  return g.record(std::move(out), ins, [d, idv = std::move(idv)](BackwardContext& ctx) {
    const auto dout = ctx.grad_out();
    auto dt = ctx.grad_in(0);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      double* row = &dt[static_cast<std::size_t>(idv[i]) * d];
      for (std::size_t c = 0; c < d; ++c) row[c] += dout[i * d + c];
    }
  });
}

Var softmax_rows(Var x, std::span<const std::uint8_t> mask) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  require_rank("softmax_rows", X, 2);
  const std::size_t m = X.shape[0], n = X.shape[1];
  if (!mask.empty() && mask.size() != X.size()) {
    throw DimensionError("softmax_rows: mask has " + std::to_string(mask.size()) +
                         " entries for input " + to_string(X.shape));
  }
  auto allowed = [&](std::size_t i, std::size_t j) { return mask.empty() || mask[i * n + j] != 0; };
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (allowed(i, j)) {
        mx = std::max(mx, X.data[i * n + j]);
        any = true;
      }
    }
    if (!any) throw DegenerateRowError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (allowed(i, j)) {
        const double e = std::exp(X.data[i * n + j] - mx);
        out.data[i * n + j] = e;
        s += e;
      }
    }
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] /= s;
  }
  const Var ins[] = {x};
  return g.record(std::move(out), ins, [m, n](BackwardContext& ctx) {
    const auto dy = ctx.grad_out();
    const auto& y = ctx.out().data;
    auto dx = ctx.grad_in(0);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Graph& g = graph_of(logits);
  const Tensor& L = logits.value();
  require_rank("cross_entropy", L, 2);
  const std::size_t n = L.shape[0], v = L.shape[1];
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         to_string(L.shape));
  }
  if (n == 0) throw DimensionError("cross_entropy: empty logits");
  std::vector<double> probs(n * v);
  std::vector<int> tv(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tv[i] < 0 || static_cast<std::size_t>(tv[i]) >= v) {
      throw ContractError("cross_entropy: target " + std::to_string(tv[i]) + " outside " +
                          std::to_string(v) + " classes");
    }
    const double* row = &L.data[i * v];
    const double mx = *std::max_element(row, row + v);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[i * v + j] = std::exp(row[j] - mx);
      s += probs[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= s;
    total += (mx + std::log(s)) - row[tv[i]];
  }
  const Var ins[] = {logits};
  return g.record(Tensor::scalar(total / static_cast<double>(n)), ins,
                  [n, v, probs = std::move(probs), tv = std::move(tv)](BackwardContext& ctx) {
                    const double d = ctx.grad_out()[0] / static_cast<double>(n);
                    auto dl = ctx.grad_in(0);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < v; ++j) dl[i * v + j] += d * probs[i * v + j];
                      dl[i * v + static_cast<std::size_t>(tv[i])] -= d;
                    }
                  });
}

Var mse(Var a, const Tensor& target) {
  Graph& g = graph_of(a);
  require_same_shape("mse", a.value(), target);
  const auto& x = a.value().data;
  std::vector<double> diff(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    diff[i] = x[i] - target.data[i];
    s += diff[i] * diff[i];
  }
  const double count = static_cast<double>(x.size());
  const Var ins[] = {a};
  return g.record(Tensor::scalar(s / count), ins, [count, diff = std::move(diff)](BackwardContext& ctx) {
    const double d = ctx.grad_out()[0] * 2.0 / count;
    auto da = ctx.grad_in(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d * diff[i];
  });
}

}  // namespace loza::num
