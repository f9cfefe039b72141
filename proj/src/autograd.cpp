// src/autograd.cpp

#include "akvsr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "akvsr/errors.hpp"

namespace akvsr {

void Node::accumulate(std::span<const double> g) {
  Tensor& buf = grad_buffer();
  auto d = buf.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

const Tensor& GradMap::at(const Var& v) const {
  auto it = grads_.find(v.node());
  if (it == grads_.end()) throw ContractError("no gradient recorded for this leaf");
  return it->second;
}

namespace {

thread_local bool g_no_grad = false;

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = prev_; }

namespace {

Var make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  const bool needs = !g_no_grad && std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(const char* op, const Var& a) {
  if (a.value().rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
      C[i * n + j] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    const double* b = B + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      double* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

GradMap backward(const Var& root) {
  if (!root) throw ContractError("backward on empty var");
  if (root.value().size() != 1)
    throw ContractError("backward needs a scalar root, got shape " + shape_str(root.shape()));

  GradMap out;
  if (!root.requires_grad()) return out;

  // Iterative post-order DFS; the parent visiting order fixes the
  // accumulation order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad = Tensor();
  root.node()->grad = Tensor(root.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (!n->backward_fn) out.insert(n, n->grad.empty() ? Tensor(n->value.shape(), 0.0) : n->grad);
  }
  return out;
}

// ---- element-wise -------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor y = a.value();
  auto yd = y.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += bd[i];
  return make_node(std::move(y), {a.ptr(), b.ptr()}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad.data());
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  auto yd = y.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] -= bd[i];
  return make_node(std::move(y), {a.ptr(), b.ptr()}, [](Node& self) {
    auto g = self.grad.data();
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(g);
    if (self.parents[1]->requires_grad) {
      auto d = self.parents[1]->grad_buffer().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  auto yd = y.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] *= bd[i];
  return make_node(std::move(y), {a.ptr(), b.ptr()}, [](Node& self) {
    auto g = self.grad.data();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto d = pa.grad_buffer().data();
      auto o = pb.value.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * o[i];
    }
    if (pb.requires_grad) {
      auto d = pb.grad_buffer().data();
      auto o = pa.value.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * o[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= c;
  return make_node(std::move(y), {a.ptr()}, [c](Node& self) {
    auto g = self.grad.data();
    auto d = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * g[i];
  });
}

Var relu(const Var& a) {
  Tensor y = a.value();
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(y), {a.ptr()}, [](Node& self) {
    auto g = self.grad.data();
    auto x = self.parents[0]->value.data();
    auto d = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] > 0.0) d[i] += g[i];
  });
}

Var add_row(const Var& x, const Var& b) {
  require_rank2("add_row", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (b.value().size() != n)
    throw DimensionError("add_row: row bias " + shape_str(b.shape()) + " does not fit " + shape_str(x.shape()));
  Tensor y = x.value();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += bd[j];
  }
  return make_node(std::move(y), {x.ptr(), b.ptr()}, [m, n](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad.data());
    if (self.parents[1]->requires_grad) {
      auto d = self.parents[1]->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) {
        auto g = self.grad.row(i);
        for (std::size_t j = 0; j < n; ++j) d[j] += g[j];
      }
    }
  });
}

// ---- reductions ---------------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_node(Tensor::scalar(s), {a.ptr()}, [](Node& self) {
    const double g = self.grad[0];
    for (auto& d : self.parents[0]->grad_buffer().data()) d += g;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var logsumexp(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.empty()) throw DimensionError("logsumexp over an empty axis");
  if (xv.rank() > 2) throw DimensionError("logsumexp: rank " + std::to_string(xv.rank()) + " unsupported");
  const std::size_t m = xv.rank() == 2 ? xv.rows() : 1;
  const std::size_t n = xv.cols();
  Tensor y({m});
  for (std::size_t i = 0; i < m; ++i) {
    auto r = xv.rank() == 2 ? xv.row(i) : xv.data();
    const double mx = *std::max_element(r.begin(), r.end());
    if (mx == kNegInf) {
      y[i] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    y[i] = mx + std::log(s);
  }
  return make_node(std::move(y), {x.ptr()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    auto xd = p.value.data();
    auto d = p.grad_buffer().data();
    for (std::size_t i = 0; i < m; ++i) {
      const double out = self.value[i];
      if (!std::isfinite(out)) continue;
      const double g = self.grad[i];
      if (g == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g * std::exp(xd[i * n + j] - out);
    }
  });
}

// ---- linear algebra -----------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor y({m, n}, 0.0);
  gemm_nn(a.value().data().data(), b.value().data().data(), y.data().data(), m, k, n);
  return make_node(std::move(y), {a.ptr(), b.ptr()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data().data();
    if (pa.requires_grad) gemm_nt(g, pb.value.data().data(), pa.grad_buffer().data().data(), m, n, k);
    if (pb.requires_grad) gemm_tn(pa.value.data().data(), g, pb.grad_buffer().data().data(), m, k, n);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  Tensor y({m, n}, 0.0);
  gemm_nt(a.value().data().data(), b.value().data().data(), y.data().data(), m, k, n);
  return make_node(std::move(y), {a.ptr(), b.ptr()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data().data();
    // dA = G B, dB = G^T A
    if (pa.requires_grad) gemm_nn(g, pb.value.data().data(), pa.grad_buffer().data().data(), m, n, k);
    if (pb.requires_grad) gemm_tn(g, pa.value.data().data(), pb.grad_buffer().data().data(), m, n, k);
  });
}

Var transpose(const Var& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor y({n, m});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(j, i) = x(i, j);
  return make_node(std::move(y), {a.ptr()}, [m, n](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d(i, j) += self.grad(j, i);
  });
}

// ---- row-wise normalizers ------------------------------------------------

Var softmax_rows(const Var& x, double scale) {
  if (!(scale > 0.0)) throw ParameterError("softmax_rows: scale must be positive, got " + std::to_string(scale));
  require_rank2("softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row(i);
    auto o = y.row(i);
    double mx = kNegInf;
    for (double v : r) mx = std::max(mx, v / scale);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(r[j] / scale - mx);
      s += o[j];
    }
    for (auto& v : o) v /= s;
  }
  return make_node(std::move(y), {x.ptr()}, [m, n, scale](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      auto g = self.grad.row(i);
      auto yv = self.value.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * yv[j];
      auto dr = d.row(i);
      for (std::size_t j = 0; j < n; ++j) dr[j] += yv[j] * (g[j] - dot) / scale;
    }
  });
}

Var log_softmax_rows(const Var& x) {
  require_rank2("log_softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    auto o = y.row(i);
    for (std::size_t j = 0; j < n; ++j) o[j] = r[j] - lse;
  }
  return make_node(std::move(y), {x.ptr()}, [m, n](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      auto g = self.grad.row(i);
      auto yv = self.value.row(i);
      double gs = 0.0;
      for (double v : g) gs += v;
      auto dr = d.row(i);
      for (std::size_t j = 0; j < n; ++j) dr[j] += g[j] - std::exp(yv[j]) * gs;
    }
  });
}

Var causal_mask(const Var& x) {
  require_rank2("causal_mask", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y = x.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < n; ++j) y(i, j) = kNegInf;
  return make_node(std::move(y), {x.ptr()}, [m, n](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j <= i && j < n; ++j) d(i, j) += self.grad(i, j);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank2("layer_norm", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.value().size() != n || beta.value().size() != n)
    throw DimensionError("layer_norm: gain/bias " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not fit " + shape_str(x.shape()));
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  Tensor y({m, n});
  Tensor xhat({m, n});
  std::vector<double> rstd(m);
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    auto h = xhat.row(i);
    auto o = y.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      h[j] = (r[j] - mu) * rstd[i];
      o[j] = h[j] * gv[j] + bv[j];
    }
  }
  return make_node(std::move(y), {x.ptr(), gamma.ptr(), beta.ptr()},
                   [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                     Node& px = *self.parents[0];
                     Node& pg = *self.parents[1];
                     Node& pb = *self.parents[2];
                     auto gv = pg.value.data();
                     if (pg.requires_grad) {
                       auto d = pg.grad_buffer().data();
                       for (std::size_t i = 0; i < m; ++i) {
                         auto g = self.grad.row(i);
                         auto h = xhat.row(i);
                         for (std::size_t j = 0; j < n; ++j) d[j] += g[j] * h[j];
                       }
                     }
                     if (pb.requires_grad) {
                       auto d = pb.grad_buffer().data();
                       for (std::size_t i = 0; i < m; ++i) {
                         auto g = self.grad.row(i);
                         for (std::size_t j = 0; j < n; ++j) d[j] += g[j];
                       }
                     }
                     if (px.requires_grad) {
                       Tensor& d = px.grad_buffer();
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t i = 0; i < m; ++i) {
                         auto g = self.grad.row(i);
                         auto h = xhat.row(i);
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = g[j] * gv[j];
                           s1 += dh;
                           s2 += dh * h[j];
                         }
                         auto dr = d.row(i);
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = g[j] * gv[j];
                           dr[j] += rstd[i] * (dh - s1 * inv_n - h[j] * s2 * inv_n);
                         }
                       }
                     }
                   });
}

// ---- indexing -------------------------------------------------------------

Var take(const Var& x, std::span<const std::ptrdiff_t> index, double fill) {
  if (index.empty()) throw DimensionError("take: empty index list");
  const auto total = static_cast<std::ptrdiff_t>(x.value().size());
  Tensor y({index.size()});
  auto xd = x.value().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto k = index[i];
    if (k >= total) throw IndexError("take: index " + std::to_string(k) + " outside " + shape_str(x.shape()));
    y[i] = k < 0 ? fill : xd[static_cast<std::size_t>(k)];
  }
  return make_node(std::move(y), {x.ptr()},
                   [idx = std::vector<std::ptrdiff_t>(index.begin(), index.end())](Node& self) {
                     auto d = self.parents[0]->grad_buffer().data();
                     for (std::size_t i = 0; i < idx.size(); ++i)
                       if (idx[i] >= 0) d[static_cast<std::size_t>(idx[i])] += self.grad[i];
                   });
}

Var gather_rows(const Var& table, std::span<const std::size_t> idx) {
  require_rank2("gather_rows", table);
  if (idx.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t n = table.rows(), d = table.cols();
  Tensor y({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n)
      throw IndexError("gather_rows: row " + std::to_string(idx[i]) + " at position " + std::to_string(i) +
                       " outside table of " + std::to_string(n) + " rows");
    auto src = table.value().row(idx[i]);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return make_node(std::move(y), {table.ptr()},
                   [d, rows = std::vector<std::size_t>(idx.begin(), idx.end())](Node& self) {
                     Tensor& g = self.parents[0]->grad_buffer();
                     for (std::size_t i = 0; i < rows.size(); ++i) {
                       auto dst = g.row(rows[i]);
                       auto src = self.grad.row(i);
                       for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                     }
                   });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n)
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside " +
                         shape_str(x.shape()));
  const std::size_t w = end - begin;
  Tensor y({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    auto src = x.value().row(i).subspan(begin, w);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return make_node(std::move(y), {x.ptr()}, [m, w, begin](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      auto dst = d.row(i).subspan(begin, w);
      auto src = self.grad.row(i);
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != m) throw DimensionError("concat_cols: row counts disagree");
    n += p.cols();
    parents.push_back(p.ptr());
  }
  if (parts.size() == 1) return parts[0];
  Tensor y({m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      auto src = p.value().row(i);
      std::copy(src.begin(), src.end(), y.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += w;
  }
  return make_node(std::move(y), std::move(parents), [m](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t w = p->value.cols();
      if (p->requires_grad) {
        Tensor& d = p->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          auto src = self.grad.row(i).subspan(off, w);
          auto dst = d.row(i);
          for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
        }
      }
      off += w;
    }
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: nothing to stack");
  const std::size_t n = rows[0].value().size();
  std::vector<NodePtr> parents;
  Tensor y({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].value().size() != n) throw DimensionError("stack_rows: row lengths disagree");
    auto src = rows[i].value().data();
    std::copy(src.begin(), src.end(), y.row(i).begin());
    parents.push_back(rows[i].ptr());
  }
  return make_node(std::move(y), std::move(parents), [](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad) self.parents[i]->accumulate(self.grad.row(i));
  });
}

Var reshape(const Var& x, Shape shape) {
  if (shape_numel(shape) != x.value().size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> data(x.value().data().begin(), x.value().data().end());
  return make_node(Tensor(std::move(shape), std::move(data)), {x.ptr()},
                   [](Node& self) { self.parents[0]->accumulate(self.grad.data()); });
}

Var flip_gradient(const Var& x) {
  return make_node(x.value(), {x.ptr()}, [](Node& self) {
    auto g = self.grad.data();
    auto d = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
  });
}

}  // namespace akvsr
