#include "vlwb/diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vlwb::diff {

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, requires_grad});
  grads_.emplace_back();
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  for (auto in : inputs) needs = needs || nodes_[in].requires_grad;
  nodes_.push_back(Node{std::move(op), std::move(value), std::move(inputs),
                        needs ? std::move(fn) : nullptr, needs});
  grads_.emplace_back();
  return Var(this, nodes_.size() - 1);
}

void Graph::truncate(std::size_t size) {
  if (size > nodes_.size()) throw std::out_of_range("truncate: graph has fewer nodes");
  nodes_.resize(size);
  grads_.resize(size);
  for (auto& g : grads_) g = Tensor();
  kinks_.clear();
  touched_kink_ = false;
}

Tensor& Graph::grad_buffer(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty()) g = Tensor(nodes_[id].value.shape());
  return g;
}

void Graph::backward(Var root) {
  if (&root.graph() != this) throw std::invalid_argument("backward: root belongs to another graph");
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + to_string(root.shape()));
  }
  for (auto& g : grads_) g = Tensor();
  grad_buffer(root.id())[0] = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    const auto& node = nodes_[id];
    if (!node.requires_grad || !node.backward || grads_[id].empty()) continue;
    node.backward(*this, id);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].requires_grad && grads_[id].empty()) grad_buffer(id);
  }
}

const Tensor& Graph::grad(Var v) const {
  if (!nodes_[v.id()].requires_grad) {
    throw std::logic_error("grad: node " + std::to_string(v.id()) + " does not require grad");
  }
  if (grads_[v.id()].empty()) throw std::logic_error("grad: backward() has not run");
  return grads_[v.id()];
}

namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

void same_graph(const char* op, const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  }
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m,k] += G[m,n] * B[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * G[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

Var matmul(Var a, Var b) {
  same_graph("matmul", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    mismatch("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("matmul", std::move(out), {ia, ib},
                          [ia, ib, m, k, n](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            if (g.requires_grad(ia)) {
                              gemm_nt(go.values().data(), g.value(ib).values().data(),
                                      g.grad_buffer(ia).values().data(), m, k, n);
                            }
                            if (g.requires_grad(ib)) {
                              gemm_tn(g.value(ia).values().data(), go.values().data(),
                                      g.grad_buffer(ib).values().data(), m, k, n);
                            }
                          });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const auto& av = a.value();
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const auto ia = a.id();
  return a.graph().record("transpose", std::move(out), {ia},
                          [ia, m, n](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            auto& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
                          });
}

namespace {

template <typename Fwd>
Var binary_same_shape(const char* op, Var a, Var b, Fwd fwd, double sign_b, bool product) {
  same_graph(op, a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) mismatch(op, av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const auto ia = a.id(), ib = b.id();
  return a.graph().record(op, std::move(out), {ia, ib},
                          [ia, ib, sign_b, product](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            if (g.requires_grad(ia)) {
                              auto& ga = g.grad_buffer(ia);
                              const auto& bv = g.value(ib);
                              for (std::size_t i = 0; i < ga.size(); ++i)
                                ga[i] += product ? go[i] * bv[i] : go[i];
                            }
                            if (g.requires_grad(ib)) {
                              auto& gb = g.grad_buffer(ib);
                              const auto& av = g.value(ia);
                              for (std::size_t i = 0; i < gb.size(); ++i)
                                gb[i] += product ? go[i] * av[i] : sign_b * go[i];
                            }
                          });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape("add", a, b, [](double x, double y) { return x + y; }, 1.0, false);
}

Var sub(Var a, Var b) {
  return binary_same_shape("sub", a, b, [](double x, double y) { return x - y; }, -1.0, false);
}

Var mul(Var a, Var b) {
  return binary_same_shape("mul", a, b, [](double x, double y) { return x * y; }, 1.0, true);
}

Var add_row(Var m, Var row) {
  same_graph("add_row", m, row);
  const auto& mv = m.value();
  const auto& rv = row.value();
  if (mv.rank() != 2 || rv.size() != mv.dim(1) || rv.rank() > 2 ||
      (rv.rank() == 2 && rv.dim(0) != 1)) {
    mismatch("add_row", mv.shape(), rv.shape());
  }
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  Tensor out(mv.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = mv[i * cols + j] + rv[j];
  const auto im = m.id(), ir = row.id();
  return m.graph().record("add_row", std::move(out), {im, ir},
                          [im, ir, rows, cols](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            if (g.requires_grad(im)) {
                              auto& gm = g.grad_buffer(im);
                              for (std::size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
                            }
                            if (g.requires_grad(ir)) {
                              auto& gr = g.grad_buffer(ir);
                              for (std::size_t i = 0; i < rows; ++i)
                                for (std::size_t j = 0; j < cols; ++j) gr[j] += go[i * cols + j];
                            }
                          });
}

Var relu(Var a) {
  const auto& av = a.value();
  Tensor out(av.shape());
  auto& g = a.graph();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    out[i] = x > 0.0 ? x : 0.0;
    g.note_kink(x > 0.0 ? 1 : (x < 0.0 ? -1 : 0));
    if (x == 0.0) g.mark_kink();
  }
  const auto ia = a.id();
  return g.record("relu", std::move(out), {ia}, [ia](Graph& g, std::size_t self) {
    const auto& go = g.grad_buffer(self);
    const auto& av = g.value(ia);
    auto& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (av[i] > 0.0) ga[i] += go[i];
  });
}

Var tanh(Var a) {
  const auto& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
  const auto ia = a.id();
  return a.graph().record("tanh", std::move(out), {ia}, [ia](Graph& g, std::size_t self) {
    const auto& go = g.grad_buffer(self);
    const auto& y = g.value(self);
    auto& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id();
  return a.graph().record("sum", Tensor::scalar(s), {ia}, [ia](Graph& g, std::size_t self) {
    const double go = g.grad_buffer(self)[0];
    auto& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var scale(Var a, double factor) {
  const auto& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  const auto ia = a.id();
  return a.graph().record("scale", std::move(out), {ia}, [ia, factor](Graph& g, std::size_t self) {
    const auto& go = g.grad_buffer(self);
    auto& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * factor;
  });
}

Var shift(Var a, double offset) {
  const auto& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + offset;
  const auto ia = a.id();
  return a.graph().record("shift", std::move(out), {ia}, [ia](Graph& g, std::size_t self) {
    const auto& go = g.grad_buffer(self);
    auto& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
  });
}

Var scale_by(Var a, Var factor) {
  same_graph("scale_by", a, factor);
  if (factor.value().size() != 1) mismatch("scale_by", a.shape(), factor.shape());
  const auto& av = a.value();
  const double f = factor.value()[0];
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * f;
  const auto ia = a.id(), ifac = factor.id();
  return a.graph().record("scale_by", std::move(out), {ia, ifac},
                          [ia, ifac](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            const double f = g.value(ifac)[0];
                            if (g.requires_grad(ia)) {
                              auto& ga = g.grad_buffer(ia);
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * f;
                            }
                            if (g.requires_grad(ifac)) {
                              const auto& av = g.value(ia);
                              double acc = 0.0;
                              for (std::size_t i = 0; i < av.size(); ++i) acc += go[i] * av[i];
                              g.grad_buffer(ifac)[0] += acc;
                            }
                          });
}

Var l2_normalize(Var a) {
  const auto& av = a.value();
  const std::size_t d = last_dim(av);
  const std::size_t rows = av.size() / d;
  Tensor out(av.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += av[r * d + j] * av[r * d + j];
    const double norm = std::max(std::sqrt(ss), 1e-300);
    norms[r] = norm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] / norm;
  }
  const auto ia = a.id();
  return a.graph().record(
      "l2_normalize", std::move(out), {ia},
      [ia, d, rows, norms = std::move(norms)](Graph& g, std::size_t self) {
        const auto& go = g.grad_buffer(self);
        const auto& y = g.value(self);
        auto& ga = g.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += y[r * d + j] * go[r * d + j];
          for (std::size_t j = 0; j < d; ++j)
            ga[r * d + j] += (go[r * d + j] - y[r * d + j] * dot) / norms[r];
        }
      });
}

Var cosine_similarity(Var a, Var b) {
  same_graph("cosine_similarity", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool single = av.rank() == 1;
  if (av.rank() > 2 || bv.rank() != 2 || last_dim(av) != bv.dim(1)) {
    mismatch("cosine_similarity", av.shape(), bv.shape());
  }
  const std::size_t d = bv.dim(1);
  const std::size_t m = av.size() / d;
  const std::size_t n = bv.dim(0);
  Tensor out(single ? Shape{n} : Shape{m, n});
  gemm_nt(av.values().data(), bv.values().data(), out.values().data(), m, n, d);
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("cosine_similarity", std::move(out), {ia, ib},
                          [ia, ib, m, n, d](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            if (g.requires_grad(ia)) {
                              gemm_nn(go.values().data(), g.value(ib).values().data(),
                                      g.grad_buffer(ia).values().data(), m, n, d);
                            }
                            if (g.requires_grad(ib)) {
                              gemm_tn(go.values().data(), g.value(ia).values().data(),
                                      g.grad_buffer(ib).values().data(), m, n, d);
                            }
                          });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  require_rank("softmax_cross_entropy", logits, 1);
  const std::size_t labels[] = {label};
  const auto k = logits.value().size();
  return softmax_cross_entropy(reshape(logits, {1, k}), labels);
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const auto& lv = logits.value();
  const std::size_t m = lv.dim(0), k = lv.dim(1);
  if (labels.size() != m) {
    mismatch("softmax_cross_entropy", lv.shape(), Shape{labels.size()});
  }
  std::vector<double> probs(m * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (labels[r] >= k) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                       " out of range for " + to_string(lv.shape()));
    }
    const double* row = lv.values().data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - log_z);
    loss += log_z - row[labels[r]];
  }
  loss /= static_cast<double>(m);
  const auto il = logits.id();
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  return logits.graph().record(
      "softmax_cross_entropy", Tensor::scalar(loss), {il},
      [il, m, k, probs = std::move(probs), owned = std::move(owned)](Graph& g, std::size_t self) {
        const double go = g.grad_buffer(self)[0] / static_cast<double>(m);
        auto& gl = g.grad_buffer(il);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < k; ++j)
            gl[r * k + j] += go * (probs[r * k + j] - (j == owned[r] ? 1.0 : 0.0));
      });
}

Var max_over_axis(Var a) {
  const auto& av = a.value();
  if (av.rank() > 2) throw ShapeError("max_over_axis: expected rank 1 or 2, got " + to_string(av.shape()));
  const std::size_t k = last_dim(av);
  const std::size_t rows = av.size() / k;
  Tensor out(av.rank() == 1 ? Shape{1} : Shape{rows});
  std::vector<std::size_t> arg(rows);
  auto& g = a.graph();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (av[r * k + j] > av[r * k + best]) best = j;
    arg[r] = best;
    out[r] = av[r * k + best];
    g.note_kink(static_cast<std::int64_t>(best));
  }
  const auto ia = a.id();
  return g.record("max_over_axis", std::move(out), {ia},
                  [ia, k, arg = std::move(arg)](Graph& g, std::size_t self) {
                    const auto& go = g.grad_buffer(self);
                    auto& ga = g.grad_buffer(ia);
                    for (std::size_t r = 0; r < arg.size(); ++r) ga[r * k + arg[r]] += go[r];
                  });
}

Var select(Var a, std::size_t index) {
  const auto& av = a.value();
  if (index >= av.size()) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for " +
                     to_string(av.shape()));
  }
  const auto ia = a.id();
  return a.graph().record("select", Tensor::scalar(av[index]), {ia},
                          [ia, index](Graph& g, std::size_t self) {
                            g.grad_buffer(ia)[index] += g.grad_buffer(self)[0];
                          });
}

Var squared_l2_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const auto ia = a.id();
  return a.graph().record("squared_l2_norm", Tensor::scalar(s), {ia},
                          [ia](Graph& g, std::size_t self) {
                            const double go = g.grad_buffer(self)[0];
                            const auto& av = g.value(ia);
                            auto& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * go * av[i];
                          });
}

Var reshape(Var a, Shape shape) {
  auto out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.graph().record("reshape", std::move(out), {ia}, [ia](Graph& g, std::size_t self) {
    const auto& go = g.grad_buffer(self);
    auto& ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
  });
}

Var gather(Var a, std::vector<std::size_t> index, Shape shape) {
  const auto& av = a.value();
  if (element_count(shape) != index.size()) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices do not fill " +
                     to_string(shape));
  }
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) {
      throw ShapeError("gather: index " + std::to_string(index[i]) + " out of range for " +
                       to_string(av.shape()));
    }
    out[i] = av[index[i]];
  }
  const auto ia = a.id();
  return a.graph().record("gather", std::move(out), {ia},
                          [ia, index = std::move(index)](Graph& g, std::size_t self) {
                            const auto& go = g.grad_buffer(self);
                            auto& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < index.size(); ++i) ga[index[i]] += go[i];
                          });
}

Var embedding_bag_mean(Var table, const std::vector<std::vector<std::size_t>>& bags) {
  require_rank("embedding_bag_mean", table, 2);
  const auto& tv = table.value();
  const std::size_t vocab = tv.dim(0), e = tv.dim(1);
  if (bags.empty()) throw ShapeError("embedding_bag_mean: no bags");
  Tensor out({bags.size(), e});
  for (std::size_t r = 0; r < bags.size(); ++r) {
    const auto& bag = bags[r];
    if (bag.empty()) throw ShapeError("embedding_bag_mean: empty bag at row " + std::to_string(r));
    const double w = 1.0 / static_cast<double>(bag.size());
    for (auto tok : bag) {
      if (tok >= vocab) {
        throw ShapeError("embedding_bag_mean: token " + std::to_string(tok) +
                         " out of range for " + to_string(tv.shape()));
      }
      for (std::size_t j = 0; j < e; ++j) out[r * e + j] += w * tv[tok * e + j];
    }
  }
  const auto it = table.id();
  return table.graph().record("embedding_bag_mean", std::move(out), {it},
                              [it, e, bags](Graph& g, std::size_t self) {
                                const auto& go = g.grad_buffer(self);
                                auto& gt = g.grad_buffer(it);
                                for (std::size_t r = 0; r < bags.size(); ++r) {
                                  const double w = 1.0 / static_cast<double>(bags[r].size());
                                  for (auto tok : bags[r])
                                    for (std::size_t j = 0; j < e; ++j)
                                      gt[tok * e + j] += w * go[r * e + j];
                                }
                              });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const ScalarBuilder& build, const Tensor& input, double h) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("grad_check: h must lie in (0, 1e-3]");

  Graph base;
  const Var x = base.leaf(input, true);
  const Var root = build(base, x);
  if (root.value().size() != 1) {
    throw ShapeError("grad_check: builder must return a scalar, got " + to_string(root.shape()));
  }
  base.backward(root);
  const Tensor analytic = base.grad(x);
  const auto base_signature = base.kink_signature();

  struct Probe {
    double loss;
    std::vector<std::int64_t> signature;
  };
  auto evaluate = [&](const Tensor& point) {
    Graph g;
    const Var v = g.leaf(point, false);
    const Var r = build(g, v);
    return Probe{r.value().item(), g.kink_signature()};
  };

  GradCheckReport report;
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double orig = input[i];
    probe[i] = orig + h;
    const auto plus = evaluate(probe);
    probe[i] = orig - h;
    const auto minus = evaluate(probe);
    probe[i] = orig;

    if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss)) {
      report.nonfinite.push_back(i);
      continue;
    }
    if (plus.signature != base_signature || minus.signature != base_signature) {
      report.nondifferentiable.push_back(i);
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    report.max_relative_error = std::max(report.max_relative_error, err);
    ++report.checked;
  }
  return report;
}

}  // namespace vlwb::diff
