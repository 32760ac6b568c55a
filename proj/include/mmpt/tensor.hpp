#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mmpt {

// Dense float64 tensor with define-by-run reverse-mode differentiation.
// Rank 0 (scalar), 1, or 2; row-major storage. Ops that consume a tensor
// requiring gradients record parent links and a pull-back closure; backward()
// runs the tape once per node in reverse topological order. Gradients
// accumulate until cleared. Recording is single-threaded by design;
// independent graphs may live on separate threads.
class Tensor {
 public:
  struct Node;

  Tensor() = default;

  static Tensor constant(std::vector<size_t> shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor zeros(std::vector<size_t> shape);
  static Tensor parameter(std::vector<size_t> shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const std::vector<size_t>& shape() const;
  size_t numel() const;
  size_t rows() const;  // rank-2 only
  size_t cols() const;
  bool requires_grad() const;

  const std::vector<double>& value() const;
  std::vector<double>& mutable_value();  // leaves only; in-place optimizer updates
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;  // numel == 1

  // Accumulates d(this)/d(leaf) into every reachable leaf; this must be a
  // single-element tensor.
  void backward() const;

  Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_op(std::vector<size_t> shape, std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn);
};

struct Tensor::Node {
  std::vector<size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on demand
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(Node&)> backward_fn;

  size_t numel() const;
  std::vector<double>& grad_buffer();
};

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);

// Rank-2 along axis 0 or 1; rank-1 along axis 0.
Tensor concat(const std::vector<Tensor>& parts, int axis);

// Same data, new shape with equal element count.
Tensor reshape(const Tensor& a, std::vector<size_t> shape);

Tensor transpose(const Tensor& a);  // rank-2

// Row selection: out[r] = x[indices[r]]; repeated indices allowed.
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);
// out has num_rows rows; out[indices[r]] += x[r].
Tensor scatter_add_rows(const Tensor& x, const std::vector<int>& indices, size_t num_rows);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis);
Tensor mean_axis(const Tensor& a, int axis);
Tensor max_axis(const Tensor& a, int axis);  // ties: first index wins

// Per-row scaling of a rank-2 tensor by a rank-1 factor of length rows.
Tensor row_scale(const Tensor& x, const Tensor& s);
// Adds a rank-1 bias of length cols to every row of a rank-2 tensor.
Tensor add_rowvec(const Tensor& x, const Tensor& b);

Tensor tsqrt(const Tensor& a);
Tensor texp(const Tensor& a);
Tensor tlog(const Tensor& a);
Tensor tabs(const Tensor& a);  // subgradient 0 at 0

// Rank-2: softmax across each row; rank-1: over the whole vector.
Tensor softmax(const Tensor& a);
// Rank-1 scores with contiguous non-decreasing segment ids; softmax within
// each segment.
Tensor segment_softmax(const Tensor& scores, const std::vector<int>& segments);
// Per-segment max over rows of a rank-2 tensor; every segment in
// [0, num_segments) must be non-empty.
Tensor segment_max(const Tensor& x, const std::vector<int>& segments, size_t num_segments);

Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor relu(const Tensor& a);
Tensor swish(const Tensor& a);  // x * sigmoid(x)

Tensor l2_norm(const Tensor& a);  // rank-0 result

}  // namespace mmpt
