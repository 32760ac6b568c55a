#include "mmpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mmpt/errors.hpp"

namespace mmpt {

size_t Tensor::Node::numel() const {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::vector<double>& Tensor::Node::grad_buffer() {
  if (grad.size() != numel()) grad.assign(numel(), 0.0);
  return grad;
}

static void check_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorKind::NumericalError, "non-finite tensor value");
}

static std::shared_ptr<Tensor::Node> make_node(std::vector<size_t> shape,
                                               std::vector<double> values) {
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  if (n->value.size() != n->numel())
    throw Error(ErrorKind::ShapeMismatch, "value size does not match shape");
  check_finite(n->value);
  return n;
}

Tensor make_op(std::vector<size_t> shape, std::vector<double> values,
               std::vector<Tensor> parents, std::function<void(Tensor::Node&)> backward_fn) {
  auto n = make_node(std::move(shape), std::move(values));
  bool needs = false;
  for (const Tensor& p : parents)
    if (p.requires_grad()) needs = true;
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

Tensor Tensor::constant(std::vector<size_t> shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::zeros(std::vector<size_t> shape) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(n->numel(), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(std::vector<size_t> shape, std::vector<double> values) {
  auto t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const std::vector<size_t>& Tensor::shape() const { return node_->shape; }
size_t Tensor::numel() const { return node_->numel(); }

size_t Tensor::rows() const {
  if (node_->shape.size() != 2) throw Error(ErrorKind::ShapeMismatch, "rank-2 tensor required");
  return node_->shape[0];
}

size_t Tensor::cols() const {
  if (node_->shape.size() != 2) throw Error(ErrorKind::ShapeMismatch, "rank-2 tensor required");
  return node_->shape[1];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::value() const { return node_->value; }

std::vector<double>& Tensor::mutable_value() {
  if (!node_->parents.empty())
    throw Error(ErrorKind::InvalidArgument, "only leaf tensors may be mutated");
  return node_->value;
}

const std::vector<double>& Tensor::grad() const {
  return node_->grad_buffer();
}

void Tensor::zero_grad() { node_->grad.assign(node_->numel(), 0.0); }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::ShapeMismatch, "item() requires a single element");
  return node_->value[0];
}

void Tensor::backward() const {
  if (!node_) throw Error(ErrorKind::InvalidArgument, "backward on empty tensor");
  if (numel() != 1)
    throw Error(ErrorKind::ShapeMismatch, "backward requires a single-element tensor");

  // Reverse topological order via iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  if (node_->requires_grad) stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].node();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Leaf gradients accumulate across backward calls; op-node gradients are
  // per-call scratch and start from zero.
  for (Node* n : order)
    if (n->backward_fn) n->grad.assign(n->numel(), 0.0);
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

static void require_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw Error(ErrorKind::ShapeMismatch, "shape mismatch");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
    for (int p = 0; p < 2; ++p) {
      Tensor::Node* pn = n.parents[static_cast<size_t>(p)].node();
      if (!pn->requires_grad) continue;
      auto& g = pn->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    Tensor::Node* pb = n.parents[1].node();
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    Tensor::Node* pb = n.parents[1].node();
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa->value[i];
    }
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] / b.value()[i];
  return make_op(a.shape(), std::move(v), {a, b}, [](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    Tensor::Node* pb = n.parents[1].node();
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i)
        g[i] -= n.grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
    }
  });
}

Tensor neg(const Tensor& a) { return scalar_mul(a, -1.0); }

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * c;
  return make_op(a.shape(), std::move(v), {a}, [c](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
  });
}

Tensor scalar_add(const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + c;
  return make_op(a.shape(), std::move(v), {a}, [](Tensor::Node& n) {
    auto& g = n.parents[0].node()->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw Error(ErrorKind::ShapeMismatch, "matmul shape mismatch");
  size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(m * n, 0.0);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < m; ++i)
    for (size_t l = 0; l < k; ++l) {
      double x = av[i * k + l];
      if (x == 0.0) continue;
      for (size_t j = 0; j < n; ++j) v[i * n + j] += x * bv[l * n + j];
    }
  return make_op({m, n}, std::move(v), {a, b}, [m, k, n](Tensor::Node& node) {
    Tensor::Node* pa = node.parents[0].node();
    Tensor::Node* pb = node.parents[1].node();
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      // dA = G * B^T
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
          double gv = node.grad[i * n + j];
          if (gv == 0.0) continue;
          for (size_t l = 0; l < k; ++l) g[i * k + l] += gv * pb->value[l * n + j];
        }
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      // dB = A^T * G
      for (size_t i = 0; i < m; ++i)
        for (size_t l = 0; l < k; ++l) {
          double av = pa->value[i * k + l];
          if (av == 0.0) continue;
          for (size_t j = 0; j < n; ++j) g[l * n + j] += av * node.grad[i * n + j];
        }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat of nothing");
  size_t rank = parts[0].shape().size();
  if (rank == 1) {
    if (axis != 0) throw Error(ErrorKind::ShapeMismatch, "rank-1 concat requires axis 0");
    size_t total = 0;
    for (const Tensor& p : parts) {
      if (p.shape().size() != 1) throw Error(ErrorKind::ShapeMismatch, "concat rank mismatch");
      total += p.numel();
    }
    std::vector<double> v;
    v.reserve(total);
    for (const Tensor& p : parts) v.insert(v.end(), p.value().begin(), p.value().end());
    return make_op({total}, std::move(v), parts, [](Tensor::Node& n) {
      size_t at = 0;
      for (Tensor& par : n.parents) {
        Tensor::Node* pn = par.node();
        size_t len = pn->numel();
        if (pn->requires_grad) {
          auto& g = pn->grad_buffer();
          for (size_t i = 0; i < len; ++i) g[i] += n.grad[at + i];
        }
        at += len;
      }
    });
  }
  if (rank != 2 || (axis != 0 && axis != 1))
    throw Error(ErrorKind::ShapeMismatch, "concat supports rank-2 axis 0/1");
  if (axis == 0) {
    size_t c = parts[0].cols(), r = 0;
    for (const Tensor& p : parts) {
      if (p.shape().size() != 2 || p.cols() != c)
        throw Error(ErrorKind::ShapeMismatch, "concat column mismatch");
      r += p.rows();
    }
    std::vector<double> v;
    v.reserve(r * c);
    for (const Tensor& p : parts) v.insert(v.end(), p.value().begin(), p.value().end());
    return make_op({r, c}, std::move(v), parts, [](Tensor::Node& n) {
      size_t at = 0;
      for (Tensor& par : n.parents) {
        Tensor::Node* pn = par.node();
        size_t len = pn->numel();
        if (pn->requires_grad) {
          auto& g = pn->grad_buffer();
          for (size_t i = 0; i < len; ++i) g[i] += n.grad[at + i];
        }
        at += len;
      }
    });
  }
  // axis == 1
  size_t r = parts[0].rows();
  size_t total_c = 0;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 2 || p.rows() != r)
      throw Error(ErrorKind::ShapeMismatch, "concat row mismatch");
    total_c += p.cols();
  }
  std::vector<double> v(r * total_c);
  size_t at = 0;
  for (const Tensor& p : parts) {
    size_t c = p.cols();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) v[i * total_c + at + j] = p.value()[i * c + j];
    at += c;
  }
  return make_op({r, total_c}, std::move(v), parts, [r, total_c](Tensor::Node& n) {
    size_t col0 = 0;
    for (Tensor& par : n.parents) {
      Tensor::Node* pn = par.node();
      size_t c = pn->shape[1];
      if (pn->requires_grad) {
        auto& g = pn->grad_buffer();
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * total_c + col0 + j];
      }
      col0 += c;
    }
  });
}

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  if (n != a.numel()) throw Error(ErrorKind::ShapeMismatch, "reshape element count mismatch");
  return make_op(std::move(shape), a.value(), {a}, [](Tensor::Node& node) {
    Tensor::Node* pa = node.parents[0].node();
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) throw Error(ErrorKind::ShapeMismatch, "transpose needs rank 2");
  size_t r = a.rows(), c = a.cols();
  std::vector<double> v(r * c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) v[j * r + i] = a.value()[i * c + j];
  return make_op({c, r}, std::move(v), {a}, [r, c](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
  if (x.shape().size() != 2) throw Error(ErrorKind::ShapeMismatch, "gather_rows needs rank 2");
  size_t r = x.rows(), c = x.cols();
  std::vector<double> v(indices.size() * c);
  for (size_t i = 0; i < indices.size(); ++i) {
    int idx = indices[i];
    if (idx < 0 || static_cast<size_t>(idx) >= r)
      throw Error(ErrorKind::IndexOutOfRange, "gather index out of range");
    std::copy_n(x.value().begin() + static_cast<long>(idx) * static_cast<long>(c), c,
                v.begin() + static_cast<long>(i * c));
  }
  auto idxs = indices;
  return make_op({indices.size(), c}, std::move(v), {x}, [idxs, c](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < idxs.size(); ++i)
      for (size_t j = 0; j < c; ++j) g[static_cast<size_t>(idxs[i]) * c + j] += n.grad[i * c + j];
  });
}

Tensor scatter_add_rows(const Tensor& x, const std::vector<int>& indices, size_t num_rows) {
  if (x.shape().size() != 2) throw Error(ErrorKind::ShapeMismatch, "scatter needs rank 2");
  if (indices.size() != x.rows())
    throw Error(ErrorKind::ShapeMismatch, "one index per input row required");
  size_t c = x.cols();
  std::vector<double> v(num_rows * c, 0.0);
  for (size_t i = 0; i < indices.size(); ++i) {
    int idx = indices[i];
    if (idx < 0 || static_cast<size_t>(idx) >= num_rows)
      throw Error(ErrorKind::IndexOutOfRange, "scatter index out of range");
    for (size_t j = 0; j < c; ++j) v[static_cast<size_t>(idx) * c + j] += x.value()[i * c + j];
  }
  auto idxs = indices;
  return make_op({num_rows, c}, std::move(v), {x}, [idxs, c](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < idxs.size(); ++i)
      for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[static_cast<size_t>(idxs[i]) * c + j];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return make_op({}, {s}, {a}, [](Tensor::Node& n) {
    auto& g = n.parents[0].node()->grad_buffer();
    for (double& x : g) x += n.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw Error(ErrorKind::InvalidArgument, "mean of empty tensor");
  return scalar_mul(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis) {
  if (a.shape().size() != 2 || (axis != 0 && axis != 1))
    throw Error(ErrorKind::ShapeMismatch, "sum_axis supports rank-2 axis 0/1");
  size_t r = a.rows(), c = a.cols();
  if (axis == 0) {
    std::vector<double> v(c, 0.0);
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) v[j] += a.value()[i * c + j];
    return make_op({c}, std::move(v), {a}, [r, c](Tensor::Node& n) {
      auto& g = n.parents[0].node()->grad_buffer();
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j];
    });
  }
  std::vector<double> v(r, 0.0);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) v[i] += a.value()[i * c + j];
  return make_op({r}, std::move(v), {a}, [r, c](Tensor::Node& n) {
    auto& g = n.parents[0].node()->grad_buffer();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i];
  });
}

Tensor mean_axis(const Tensor& a, int axis) {
  size_t count = axis == 0 ? a.rows() : a.cols();
  return scalar_mul(sum_axis(a, axis), 1.0 / static_cast<double>(count));
}

Tensor max_axis(const Tensor& a, int axis) {
  if (a.shape().size() != 2 || (axis != 0 && axis != 1))
    throw Error(ErrorKind::ShapeMismatch, "max_axis supports rank-2 axis 0/1");
  size_t r = a.rows(), c = a.cols();
  size_t out_n = axis == 0 ? c : r;
  std::vector<double> v(out_n);
  std::vector<size_t> arg(out_n);
  if (axis == 0) {
    for (size_t j = 0; j < c; ++j) {
      size_t best = 0;
      for (size_t i = 1; i < r; ++i)
        if (a.value()[i * c + j] > a.value()[best * c + j]) best = i;
      arg[j] = best;
      v[j] = a.value()[best * c + j];
    }
  } else {
    for (size_t i = 0; i < r; ++i) {
      size_t best = 0;
      for (size_t j = 1; j < c; ++j)
        if (a.value()[i * c + j] > a.value()[i * c + best]) best = j;
      arg[i] = best;
      v[i] = a.value()[i * c + arg[i]];
    }
  }
  return make_op({out_n}, std::move(v), {a}, [axis, c, arg](Tensor::Node& n) {
    auto& g = n.parents[0].node()->grad_buffer();
    for (size_t o = 0; o < arg.size(); ++o) {
      size_t flat = axis == 0 ? arg[o] * c + o : o * c + arg[o];
      g[flat] += n.grad[o];
    }
  });
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
  if (x.shape().size() != 2 || s.shape().size() != 1 || s.numel() != x.rows())
    throw Error(ErrorKind::ShapeMismatch, "row_scale needs (r x c, r)");
  size_t r = x.rows(), c = x.cols();
  std::vector<double> v(r * c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) v[i * c + j] = x.value()[i * c + j] * s.value()[i];
  return make_op({r, c}, std::move(v), {x, s}, [r, c](Tensor::Node& n) {
    Tensor::Node* px = n.parents[0].node();
    Tensor::Node* ps = n.parents[1].node();
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * c + j] * ps->value[i];
    }
    if (ps->requires_grad) {
      auto& g = ps->grad_buffer();
      for (size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < c; ++j) acc += n.grad[i * c + j] * px->value[i * c + j];
        g[i] += acc;
      }
    }
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || b.numel() != x.cols())
    throw Error(ErrorKind::ShapeMismatch, "add_rowvec needs (r x c, c)");
  size_t r = x.rows(), c = x.cols();
  std::vector<double> v(r * c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) v[i * c + j] = x.value()[i * c + j] + b.value()[j];
  return make_op({r, c}, std::move(v), {x, b}, [r, c](Tensor::Node& n) {
    Tensor::Node* px = n.parents[0].node();
    Tensor::Node* pb = n.parents[1].node();
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
    }
  });
}

template <typename F, typename DF>
static Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> v(a.numel());
  for (size_t i = 0; i < v.size(); ++i) v[i] = f(a.value()[i]);
  return make_op(a.shape(), std::move(v), {a}, [df](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    auto& g = pa->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(pa->value[i], n.value[i]);
  });
}

Tensor tsqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor texp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor tlog(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor tabs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

static double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Tensor swish(const Tensor& a) {
  return unary(a, [](double x) { return x * sigmoid(x); },
               [](double x, double) {
                 double s = sigmoid(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Tensor l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x * x;
  double nrm = std::sqrt(s);
  return make_op({}, {nrm}, {a}, [nrm](Tensor::Node& n) {
    Tensor::Node* pa = n.parents[0].node();
    auto& g = pa->grad_buffer();
    if (nrm == 0.0) return;  // subgradient 0 at the origin
    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * pa->value[i] / nrm;
  });
}

static void softmax_row(const double* x, double* out, size_t n) {
  double mx = x[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double denom = 0.0;
  for (size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    denom += out[i];
  }
  for (size_t i = 0; i < n; ++i) out[i] /= denom;
}

static void softmax_row_backward(const double* p, const double* gout, double* gin, size_t n) {
  double dot = 0.0;
  for (size_t i = 0; i < n; ++i) dot += gout[i] * p[i];
  for (size_t i = 0; i < n; ++i) gin[i] += p[i] * (gout[i] - dot);
}

Tensor softmax(const Tensor& a) {
  size_t rank = a.shape().size();
  if (rank == 1 || rank == 0) {
    size_t n = a.numel();
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "softmax of empty tensor");
    std::vector<double> v(n);
    softmax_row(a.value().data(), v.data(), n);
    return make_op(a.shape(), std::move(v), {a}, [n](Tensor::Node& node) {
      auto& g = node.parents[0].node()->grad_buffer();
      softmax_row_backward(node.value.data(), node.grad.data(), g.data(), n);
    });
  }
  if (rank != 2) throw Error(ErrorKind::ShapeMismatch, "softmax supports rank 1 or 2");
  size_t r = a.rows(), c = a.cols();
  if (c == 0) throw Error(ErrorKind::InvalidArgument, "softmax of empty rows");
  std::vector<double> v(r * c);
  for (size_t i = 0; i < r; ++i) softmax_row(a.value().data() + i * c, v.data() + i * c, c);
  return make_op({r, c}, std::move(v), {a}, [r, c](Tensor::Node& node) {
    auto& g = node.parents[0].node()->grad_buffer();
    for (size_t i = 0; i < r; ++i)
      softmax_row_backward(node.value.data() + i * c, node.grad.data() + i * c,
                           g.data() + i * c, c);
  });
}

Tensor segment_softmax(const Tensor& scores, const std::vector<int>& segments) {
  if (scores.shape().size() != 1)
    throw Error(ErrorKind::ShapeMismatch, "segment_softmax needs rank 1");
  if (segments.size() != scores.numel())
    throw Error(ErrorKind::ShapeMismatch, "one segment id per score required");
  for (size_t i = 1; i < segments.size(); ++i)
    if (segments[i] < segments[i - 1])
      throw Error(ErrorKind::InvalidArgument, "segment ids must be non-decreasing");

  size_t n = scores.numel();
  std::vector<double> v(n);
  std::vector<std::pair<size_t, size_t>> runs;
  size_t start = 0;
  while (start < n) {
    size_t end = start;
    while (end < n && segments[end] == segments[start]) ++end;
    softmax_row(scores.value().data() + start, v.data() + start, end - start);
    runs.push_back({start, end});
    start = end;
  }
  return make_op({n}, std::move(v), {scores}, [runs](Tensor::Node& node) {
    auto& g = node.parents[0].node()->grad_buffer();
    for (auto [s, e] : runs)
      softmax_row_backward(node.value.data() + s, node.grad.data() + s, g.data() + s, e - s);
  });
}

Tensor segment_max(const Tensor& x, const std::vector<int>& segments, size_t num_segments) {
  if (x.shape().size() != 2) throw Error(ErrorKind::ShapeMismatch, "segment_max needs rank 2");
  if (segments.size() != x.rows())
    throw Error(ErrorKind::ShapeMismatch, "one segment id per row required");
  size_t c = x.cols();
  std::vector<double> v(num_segments * c);
  std::vector<size_t> arg(num_segments * c);
  std::vector<char> seen(num_segments, 0);
  for (size_t i = 0; i < segments.size(); ++i) {
    int s = segments[i];
    if (s < 0 || static_cast<size_t>(s) >= num_segments)
      throw Error(ErrorKind::IndexOutOfRange, "segment id out of range");
    size_t si = static_cast<size_t>(s);
    for (size_t j = 0; j < c; ++j) {
      double val = x.value()[i * c + j];
      if (!seen[si] || val > v[si * c + j]) {
        v[si * c + j] = val;
        arg[si * c + j] = i;
      }
    }
    seen[si] = 1;
  }
  for (size_t s = 0; s < num_segments; ++s)
    if (!seen[s]) throw Error(ErrorKind::InvalidArgument, "empty segment in segment_max");
  return make_op({num_segments, c}, std::move(v), {x}, [arg, c](Tensor::Node& n) {
    auto& g = n.parents[0].node()->grad_buffer();
    for (size_t o = 0; o < arg.size(); ++o) g[arg[o] * c + o % c] += n.grad[o];
  });
}

}  // namespace mmpt
