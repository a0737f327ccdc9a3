#include "ptune/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace ptune {

const Tensor& Var::value() const { return graph->value(id); }

AttentionCapture::AttentionCapture(std::size_t layers, std::size_t heads, std::size_t seq)
    : layers(layers), heads(heads), seq(seq), weights(layers * heads * seq * seq, 0.0) {}

Var Graph::param(Tensor& tensor) {
  Node node;
  node.value = Tensor(tensor.shape(), tensor.values());
  node.param = &tensor;
  node.needs_grad = tensor.requires_grad();
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor tensor) {
  Node node;
  node.value = std::move(tensor);
  node.value.set_requires_grad(false);
  node.value.clear_grad();
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  for (std::size_t in : inputs) {
    // Inputs must already exist: this is what keeps the tape acyclic.
    if (in >= nodes_.size()) {
      throw std::logic_error("graph cycle: input node " + std::to_string(in) +
                             " does not precede its consumer");
    }
    node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  }
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::invalid_argument("loss belongs to another graph");
  if (loss.id >= nodes_.size()) throw std::invalid_argument("unknown loss node");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                nodes_[loss.id].value.shape_string());
  }
  for (Node& n : nodes_) {
    if (n.needs_grad) {
      n.adjoint.assign(n.value.size(), 0.0);
    } else {
      n.adjoint.clear();
    }
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].adjoint[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.param != nullptr) {
      std::span<double> g = n.param->ensure_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.adjoint[j];
    }
  }
}

namespace ops {
namespace {

Graph& graph_of(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw std::invalid_argument("operands belong to different graphs");
  }
  return *a.graph;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::size_t rows_of(const Tensor& t) { return t.rows(); }
std::size_t cols_of(const Tensor& t) { return t.cols(); }

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rank() == 2 && B.rank() == 2, "matmul expects rank-2 operands");
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  require(B.rows() == k, "matmul inner dimensions differ: " + A.shape_string() +
                             " * " + B.shape_string());
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return g.push(std::move(out), {a.id, b.id}, [n, k, m](Graph& gr, std::size_t self) {
    const auto& in = gr.inputs(self);
    const std::span<const double> dout = gr.adjoint(self);
    const Tensor& A = gr.value(in[0]);
    const Tensor& B = gr.value(in[1]);
    if (gr.needs_grad(in[0])) {
      std::span<double> da = gr.adjoint(in[0]);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += dout[i * m + j] * B[p * m + j];
          da[i * k + p] += acc;
        }
      }
    }
    if (gr.needs_grad(in[1])) {
      std::span<double> db = gr.adjoint(in[1]);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) db[p * m + j] += aip * dout[i * m + j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "add shape mismatch: " + A.shape_string() + " vs " +
                               B.shape_string());
  Tensor out(A.shape(), A.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return g.push(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
    const auto& in = gr.inputs(self);
    const std::span<const double> dout = gr.adjoint(self);
    for (std::size_t which = 0; which < 2; ++which) {
      if (!gr.needs_grad(in[which])) continue;
      std::span<double> d = gr.adjoint(in[which]);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  Graph& g = graph_of(a, bias);
  const Tensor& A = a.value();
  const Tensor& Bv = bias.value();
  require(A.rank() == 2 && Bv.rank() == 1 && Bv.size() == A.cols(),
          "add_row expects [n x m] + [m], got " + A.shape_string() + " + " +
              Bv.shape_string());
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(A.shape(), A.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += Bv[j];
  return g.push(std::move(out), {a.id, bias.id}, [n, m](Graph& gr, std::size_t self) {
    const auto& in = gr.inputs(self);
    const std::span<const double> dout = gr.adjoint(self);
    if (gr.needs_grad(in[0])) {
      std::span<double> da = gr.adjoint(in[0]);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i];
    }
    if (gr.needs_grad(in[1])) {
      std::span<double> db = gr.adjoint(in[1]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) db[j] += dout[i * m + j];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.same_shape(B), "mul shape mismatch: " + A.shape_string() + " vs " +
                               B.shape_string());
  Tensor out(A.shape(), A.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return g.push(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
    const auto& in = gr.inputs(self);
    const std::span<const double> dout = gr.adjoint(self);
    const Tensor& A = gr.value(in[0]);
    const Tensor& B = gr.value(in[1]);
    if (gr.needs_grad(in[0])) {
      std::span<double> da = gr.adjoint(in[0]);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i] * B[i];
    }
    if (gr.needs_grad(in[1])) {
      std::span<double> db = gr.adjoint(in[1]);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dout[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  Graph& g = *a.graph;
  Tensor out(a.value().shape(), a.value().values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return g.push(std::move(out), {a.id}, [factor](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const std::span<const double> dout = gr.adjoint(self);
    std::span<double> da = gr.adjoint(in);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i] * factor;
  });
}

Var relu(Var a) {
  Graph& g = *a.graph;
  Tensor out(a.value().shape(), a.value().values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return g.push(std::move(out), {a.id}, [](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& x = gr.value(in);
    const std::span<const double> dout = gr.adjoint(self);
    std::span<double> da = gr.adjoint(in);
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (x[i] > 0.0) da[i] += dout[i];
    }
  });
}

Var softmax_rows(Var a) {
  Graph& g = *a.graph;
  const Tensor& X = a.value();
  const std::size_t n = rows_of(X), m = cols_of(X);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> p = softmax(X.data().subspan(i * m, m));
    std::copy(p.begin(), p.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  return g.push(std::move(out), {a.id}, [n, m](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& P = gr.value(self);
    const std::span<const double> dout = gr.adjoint(self);
    std::span<double> da = gr.adjoint(in);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += dout[i * m + j] * P[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        da[i * m + j] += P[i * m + j] * (dout[i * m + j] - dot);
    }
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x, gain);
  graph_of(x, bias);
  const Tensor& X = x.value();
  require(X.rank() == 2, "layer_norm expects a rank-2 input");
  const std::size_t n = X.rows(), m = X.cols();
  require(gain.value().size() == m && bias.value().size() == m,
          "layer_norm gain/bias must match the row width");
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor out(X.shape());
  auto normalized = std::make_shared<std::vector<double>>(n * m);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += X[i * m + j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = X[i * m + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double r = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = r;
    for (std::size_t j = 0; j < m; ++j) {
      const double xh = (X[i * m + j] - mean) * r;
      (*normalized)[i * m + j] = xh;
      out[i * m + j] = G[j] * xh + B[j];
    }
  }
  return g.push(std::move(out), {x.id, gain.id, bias.id},
                [n, m, normalized, inv_std](Graph& gr, std::size_t self) {
                  const auto& in = gr.inputs(self);
                  const std::span<const double> dout = gr.adjoint(self);
                  const Tensor& G = gr.value(in[1]);
                  const std::vector<double>& xh = *normalized;
                  if (gr.needs_grad(in[0])) {
                    std::span<double> dx = gr.adjoint(in[0]);
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (std::size_t i = 0; i < n; ++i) {
                      double mean_d = 0.0, mean_dx = 0.0;
                      for (std::size_t j = 0; j < m; ++j) {
                        const double d = dout[i * m + j] * G[j];
                        mean_d += d;
                        mean_dx += d * xh[i * m + j];
                      }
                      mean_d *= inv_m;
                      mean_dx *= inv_m;
                      for (std::size_t j = 0; j < m; ++j) {
                        const double d = dout[i * m + j] * G[j];
                        dx[i * m + j] +=
                            (*inv_std)[i] * (d - mean_d - xh[i * m + j] * mean_dx);
                      }
                    }
                  }
                  if (gr.needs_grad(in[1])) {
                    std::span<double> dg = gr.adjoint(in[1]);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j)
                        dg[j] += dout[i * m + j] * xh[i * m + j];
                  }
                  if (gr.needs_grad(in[2])) {
                    std::span<double> db = gr.adjoint(in[2]);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < m; ++j) db[j] += dout[i * m + j];
                  }
                });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  Graph& g = *table.graph;
  const Tensor& T = table.value();
  require(T.rank() == 2, "embedding table must be rank-2");
  require(!ids.empty(), "embedding lookup needs at least one id");
  const std::size_t vocab = T.rows(), d = T.cols();
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] >= vocab) {
      throw std::out_of_range("token id " + std::to_string(ids[p]) + " at position " +
                              std::to_string(p) + " exceeds vocabulary size " +
                              std::to_string(vocab));
    }
  }
  Tensor out({ids.size(), d});
  for (std::size_t p = 0; p < ids.size(); ++p)
    std::copy_n(&T[ids[p] * d], d, &out[p * d]);
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return g.push(std::move(out), {table.id},
                [rows = std::move(rows), d](Graph& gr, std::size_t self) {
                  const std::size_t in = gr.inputs(self)[0];
                  if (!gr.needs_grad(in)) return;
                  const std::span<const double> dout = gr.adjoint(self);
                  std::span<double> dt = gr.adjoint(in);
                  for (std::size_t p = 0; p < rows.size(); ++p)
                    for (std::size_t j = 0; j < d; ++j) dt[rows[p] * d + j] += dout[p * d + j];
                });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return g.push(Tensor::scalar(total), {a.id}, [](Graph& gr, std::size_t self) {
    const std::size_t in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const double up = gr.adjoint(self)[0];
    for (double& d : gr.adjoint(in)) d += up;
  });
}

Var causal_attention(Var q, Var k, Var v, std::size_t batch, std::size_t seq,
                     std::size_t heads, std::vector<AttentionCapture>* capture,
                     std::size_t layer) {
  Graph& g = graph_of(q, k);
  graph_of(q, v);
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  require(Q.rank() == 2 && Q.same_shape(K) && Q.same_shape(V),
          "attention q/k/v must share a rank-2 shape");
  require(Q.rows() == batch * seq, "attention rows must equal batch * seq");
  const std::size_t d = Q.cols();
  require(heads > 0 && d % heads == 0, "attention width must divide by heads");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq, 0.0);
  Tensor out(Q.shape());
  std::vector<double> scores(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      double* P = probs->data() + (b * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        const double* qi = &Q[(b * seq + i) * d + off];
        double peak = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = &K[(b * seq + j) * d + off];
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * inv_sqrt;
          peak = std::max(peak, scores[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - peak);
          total += scores[j];
        }
        double* oi = &out[(b * seq + i) * d + off];
        for (std::size_t j = 0; j <= i; ++j) {
          const double p = scores[j] / total;
          P[i * seq + j] = p;
          const double* vj = &V[(b * seq + j) * d + off];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
        }
      }
      if (capture != nullptr) {
        AttentionCapture& cap = (*capture)[b];
        std::copy_n(P, seq * seq, &cap.at(layer, h, 0, 0));
      }
    }
  }

  return g.push(
      std::move(out), {q.id, k.id, v.id},
      [batch, seq, heads, d, dh, inv_sqrt, probs](Graph& gr, std::size_t self) {
        const auto& in = gr.inputs(self);
        const Tensor& Q = gr.value(in[0]);
        const Tensor& K = gr.value(in[1]);
        const Tensor& V = gr.value(in[2]);
        const std::span<const double> dout = gr.adjoint(self);
        const bool gq = gr.needs_grad(in[0]), gk = gr.needs_grad(in[1]),
                   gv = gr.needs_grad(in[2]);
        std::span<double> dq = gq ? gr.adjoint(in[0]) : std::span<double>{};
        std::span<double> dk = gk ? gr.adjoint(in[1]) : std::span<double>{};
        std::span<double> dv = gv ? gr.adjoint(in[2]) : std::span<double>{};
        std::vector<double> dp(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            const double* P = probs->data() + (b * heads + h) * seq * seq;
            for (std::size_t i = 0; i < seq; ++i) {
              const double* doi = &dout[(b * seq + i) * d + off];
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) {
                const double* vj = &V[(b * seq + j) * d + off];
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
                dp[j] = s;
                dot += s * P[i * seq + j];
                if (gv) {
                  double* dvj = &dv[(b * seq + j) * d + off];
                  for (std::size_t c = 0; c < dh; ++c) dvj[c] += P[i * seq + j] * doi[c];
                }
              }
              for (std::size_t j = 0; j <= i; ++j) {
                const double ds = P[i * seq + j] * (dp[j] - dot) * inv_sqrt;
                if (ds == 0.0) continue;
                if (gq) {
                  const double* kj = &K[(b * seq + j) * d + off];
                  double* dqi = &dq[(b * seq + i) * d + off];
                  for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                }
                if (gk) {
                  const double* qi = &Q[(b * seq + i) * d + off];
                  double* dkj = &dk[(b * seq + j) * d + off];
                  for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

Var soft_cross_entropy(Var logits, const Tensor& target) {
  Graph& g = *logits.graph;
  const Tensor& Z = logits.value();
  require(Z.rank() == 2, "cross entropy expects [rows x classes] logits");
  require(Z.same_shape(target), "cross entropy target shape " + target.shape_string() +
                                    " differs from logits " + Z.shape_string());
  const std::size_t n = Z.rows(), m = Z.cols();
  auto probs = std::make_shared<std::vector<double>>(n * m);
  double mass = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_mass = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      require(target[i * m + j] >= 0.0, "cross entropy target mass must be non-negative");
      row_mass += target[i * m + j];
    }
    const std::span<const double> row = Z.data().subspan(i * m, m);
    const std::vector<double> p = softmax(row);
    std::copy(p.begin(), p.end(), probs->begin() + static_cast<std::ptrdiff_t>(i * m));
    if (row_mass == 0.0) continue;
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - peak);
    const double log_z = std::log(z) + peak;
    for (std::size_t j = 0; j < m; ++j) {
      if (target[i * m + j] != 0.0) loss += target[i * m + j] * (log_z - row[j]);
    }
    mass += row_mass;
  }
  const double norm = mass > 0.0 ? 1.0 / mass : 0.0;
  auto tgt = std::make_shared<std::vector<double>>(target.values());
  return g.push(Tensor::scalar(loss * norm), {logits.id},
                [n, m, norm, probs, tgt](Graph& gr, std::size_t self) {
                  const std::size_t in = gr.inputs(self)[0];
                  if (!gr.needs_grad(in) || norm == 0.0) return;
                  const double up = gr.adjoint(self)[0] * norm;
                  std::span<double> dz = gr.adjoint(in);
                  for (std::size_t i = 0; i < n; ++i) {
                    double row_mass = 0.0;
                    for (std::size_t j = 0; j < m; ++j) row_mass += (*tgt)[i * m + j];
                    if (row_mass == 0.0) continue;
                    for (std::size_t j = 0; j < m; ++j)
                      dz[i * m + j] +=
                          up * ((*probs)[i * m + j] * row_mass - (*tgt)[i * m + j]);
                  }
                });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& Z = logits.value();
  require(Z.rank() == 2 && Z.rows() == targets.size(),
          "cross entropy needs one target per logits row");
  Tensor onehot(Z.shape());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= Z.cols()) {
      throw std::out_of_range("target index " + std::to_string(targets[i]) +
                              " out of range for " + std::to_string(Z.cols()) +
                              " classes");
    }
    onehot[i * Z.cols() + targets[i]] = 1.0;
  }
  return soft_cross_entropy(logits, onehot);
}

}  // namespace ops
}  // namespace ptune
