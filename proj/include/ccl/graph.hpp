#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ccl/matrix.hpp"

namespace ccl {

struct NodeId {
  std::uint32_t index = 0;
};

// Eager reverse-mode tape over Matrix values. Every op computes its value on
// creation; gradients() replays the tape backwards from a scalar root and
// returns d(root)/d(leaf) for the requested leaves. Constants never receive
// gradients. A graph is append-only and single-threaded.
class Graph {
 public:
  NodeId constant(Matrix value);
  NodeId leaf(Matrix value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);  // a * b^T
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId scale(NodeId a, double c);
  NodeId add_row(NodeId x, NodeId row);
  NodeId tanh(NodeId x);
  NodeId log_floored(NodeId x);  // log(max(x, kEpsFloor))
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId l2_normalize_rows(NodeId x);
  NodeId row_softmax(NodeId s, double temperature);
  NodeId sum_all(NodeId x);  // 1x1
  // out(i,j) = sum over k != j of x(i,k). For probability rows this is a
  // cancellation-free 1 - x(i,j); forward and backward sum the excluded
  // terms directly.
  NodeId sum_others(NodeId x);
  // out[i,0] = x(i, cols[i]); cols.size() must equal x rows.
  NodeId pick(NodeId x, std::span<const std::uint32_t> cols);
  NodeId diag(NodeId x);  // square x -> n x 1 diagonal
  // Identity forward, zero backward.
  NodeId stop_gradient(NodeId x);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;  // requires a 1x1 node

  // Reverse pass from a scalar root. Throws NumericError naming the first
  // op that produced a non-finite value if the root is not finite.
  std::vector<Matrix> gradients(NodeId root, std::span<const NodeId> leaves) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConstant,
    kLeaf,
    kMatmul,
    kMatmulNT,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRow,
    kTanh,
    kLogFloored,
    kConcatCols,
    kL2NormalizeRows,
    kRowSoftmax,
    kSumAll,
    kSumOthers,
    kPick,
    kDiag,
    kStopGradient,
  };

  struct Node {
    Op op;
    Matrix value;
    std::uint32_t input0 = 0;
    std::uint32_t input1 = 0;
    std::uint8_t num_inputs = 0;
    double attr = 0.0;                 // scale factor or temperature
    std::vector<std::uint32_t> cols;  // pick targets
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  static const char* op_name(Op op);

  std::vector<Node> nodes_;
};

}  // namespace ccl
