#include "ccl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

void accumulate(Matrix& dst, const Matrix& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.values()[i] += src.values()[i];
}

}  // namespace

const char* Graph::op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kMatmulNT: return "matmul_nt";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddRow: return "add_row";
    case Op::kTanh: return "tanh";
    case Op::kLogFloored: return "log_floored";
    case Op::kConcatCols: return "concat_cols";
    case Op::kL2NormalizeRows: return "l2_normalize_rows";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kSumAll: return "sum_all";
    case Op::kSumOthers: return "sum_others";
    case Op::kPick: return "pick";
    case Op::kDiag: return "diag";
    case Op::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(NodeId id) const { return nodes_.at(id.index); }

const Matrix& Graph::value(NodeId id) const { return node(id).value; }

double Graph::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("Graph::scalar: node is not 1x1");
  }
  return v(0, 0);
}

NodeId Graph::constant(Matrix value) {
  return push({Op::kConstant, std::move(value), 0, 0, 0, 0.0, {}});
}

NodeId Graph::leaf(Matrix value) { return push({Op::kLeaf, std::move(value), 0, 0, 0, 0.0, {}}); }

NodeId Graph::matmul(NodeId a, NodeId b) {
  Matrix v = ccl::matmul(value(a), value(b));
  return push({Op::kMatmul, std::move(v), a.index, b.index, 2, 0.0, {}});
}

NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  Matrix v = ccl::matmul_nt(value(a), value(b));
  return push({Op::kMatmulNT, std::move(v), a.index, b.index, 2, 0.0, {}});
}

NodeId Graph::add(NodeId a, NodeId b) {
  Matrix v = ccl::add(value(a), value(b));
  return push({Op::kAdd, std::move(v), a.index, b.index, 2, 0.0, {}});
}

NodeId Graph::sub(NodeId a, NodeId b) {
  Matrix v = ccl::sub(value(a), value(b));
  return push({Op::kSub, std::move(v), a.index, b.index, 2, 0.0, {}});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  Matrix v = ccl::mul_elem(value(a), value(b));
  return push({Op::kMul, std::move(v), a.index, b.index, 2, 0.0, {}});
}

NodeId Graph::scale(NodeId a, double c) {
  Matrix v = ccl::scale(value(a), c);
  return push({Op::kScale, std::move(v), a.index, 0, 1, c, {}});
}

NodeId Graph::add_row(NodeId x, NodeId row) {
  Matrix v = ccl::add_row_broadcast(value(x), value(row));
  return push({Op::kAddRow, std::move(v), x.index, row.index, 2, 0.0, {}});
}

NodeId Graph::tanh(NodeId x) {
  Matrix v = ccl::tanh_elem(value(x));
  return push({Op::kTanh, std::move(v), x.index, 0, 1, 0.0, {}});
}

NodeId Graph::log_floored(NodeId x) {
  Matrix v = value(x);
  for (double& e : v.values()) e = std::log(std::max(e, kEpsFloor));
  return push({Op::kLogFloored, std::move(v), x.index, 0, 1, 0.0, {}});
}

NodeId Graph::concat_cols(NodeId a, NodeId b) {
  Matrix v = ccl::concat_cols(value(a), value(b));
  return push({Op::kConcatCols, std::move(v), a.index, b.index, 2, 0.0, {}});
}

NodeId Graph::l2_normalize_rows(NodeId x) {
  Matrix v = ccl::l2_normalize_rows(value(x));
  return push({Op::kL2NormalizeRows, std::move(v), x.index, 0, 1, 0.0, {}});
}

NodeId Graph::row_softmax(NodeId s, double temperature) {
  Matrix v = ccl::row_softmax(value(s), temperature);
  return push({Op::kRowSoftmax, std::move(v), s.index, 0, 1, temperature, {}});
}

NodeId Graph::sum_all(NodeId x) {
  double acc = 0.0;
  for (double e : value(x).values()) acc += e;
  return push({Op::kSumAll, Matrix(1, 1, {acc}), x.index, 0, 1, 0.0, {}});
}

NodeId Graph::sum_others(NodeId x) {
  const Matrix& src = value(x);
  Matrix v(src.rows(), src.cols());
  for (std::size_t i = 0; i < src.rows(); ++i) {
    for (std::size_t j = 0; j < src.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < src.cols(); ++k) {
        if (k != j) acc += src(i, k);
      }
      v(i, j) = acc;
    }
  }
  return push({Op::kSumOthers, std::move(v), x.index, 0, 1, 0.0, {}});
}

NodeId Graph::pick(NodeId x, std::span<const std::uint32_t> cols) {
  const Matrix& src = value(x);
  if (cols.size() != src.rows()) {
    throw ShapeError("Graph::pick: index count does not match rows");
  }
  Matrix v(src.rows(), 1);
  std::vector<std::uint32_t> idx(cols.begin(), cols.end());
  for (std::size_t i = 0; i < src.rows(); ++i) {
    if (idx[i] >= src.cols()) {
      throw ParamError("Graph::pick: column index " + std::to_string(idx[i]) +
                       " out of range for " + std::to_string(src.cols()) + " columns");
    }
    v(i, 0) = src(i, idx[i]);
  }
  return push({Op::kPick, std::move(v), x.index, 0, 1, 0.0, std::move(idx)});
}

NodeId Graph::diag(NodeId x) {
  const Matrix& src = value(x);
  if (src.rows() != src.cols()) throw ShapeError("Graph::diag: matrix is not square");
  Matrix v(src.rows(), 1);
  for (std::size_t i = 0; i < src.rows(); ++i) v(i, 0) = src(i, i);
  return push({Op::kDiag, std::move(v), x.index, 0, 1, 0.0, {}});
}

NodeId Graph::stop_gradient(NodeId x) {
  return push({Op::kStopGradient, value(x), x.index, 0, 1, 0.0, {}});
}

std::vector<Matrix> Graph::gradients(NodeId root, std::span<const NodeId> leaves) const {
  const Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ShapeError("Graph::gradients: root must be a scalar node");
  }
  if (!r.value.all_finite()) {
    // Identify the first op that went non-finite for the diagnostic.
    for (std::size_t i = 0; i <= root.index; ++i) {
      if (!nodes_[i].value.all_finite()) {
        throw NumericError(std::string("Graph::gradients: non-finite value produced by op '") +
                           op_name(nodes_[i].op) + "' (node " + std::to_string(i) + ")");
      }
    }
  }

  std::vector<Matrix> adj(root.index + 1);
  adj[root.index] = Matrix(1, 1, {1.0});

  for (std::size_t ni = root.index + 1; ni-- > 0;) {
    const Node& n = nodes_[ni];
    Matrix& g = adj[ni];
    if (g.empty()) continue;  // not an ancestor of the root
    const Matrix& y = n.value;

    switch (n.op) {
      case Op::kConstant:
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Matrix& a = nodes_[n.input0].value;
        const Matrix& b = nodes_[n.input1].value;
        accumulate(adj[n.input0], ccl::matmul_nt(g, b));          // dA = dC * B^T
        accumulate(adj[n.input1], ccl::matmul(transpose(a), g));  // dB = A^T * dC
        break;
      }
      case Op::kMatmulNT: {
        const Matrix& a = nodes_[n.input0].value;
        const Matrix& b = nodes_[n.input1].value;
        accumulate(adj[n.input0], ccl::matmul(g, b));             // dA = dC * B
        accumulate(adj[n.input1], ccl::matmul(transpose(g), a));  // dB = dC^T * A
        break;
      }
      case Op::kAdd:
        accumulate(adj[n.input0], g);
        accumulate(adj[n.input1], g);
        break;
      case Op::kSub:
        accumulate(adj[n.input0], g);
        accumulate(adj[n.input1], ccl::scale(g, -1.0));
        break;
      case Op::kMul:
        accumulate(adj[n.input0], mul_elem(g, nodes_[n.input1].value));
        accumulate(adj[n.input1], mul_elem(g, nodes_[n.input0].value));
        break;
      case Op::kScale:
        accumulate(adj[n.input0], ccl::scale(g, n.attr));
        break;
      case Op::kAddRow: {
        accumulate(adj[n.input0], g);
        Matrix row_grad(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) row_grad(0, j) += g(i, j);
        accumulate(adj[n.input1], row_grad);
        break;
      }
      case Op::kTanh: {
        Matrix dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const double t = y.values()[i];
          dx.values()[i] *= 1.0 - t * t;
        }
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kLogFloored: {
        const Matrix& x = nodes_[n.input0].value;
        Matrix dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const double xv = x.values()[i];
          dx.values()[i] = xv >= kEpsFloor ? dx.values()[i] / xv : 0.0;
        }
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kConcatCols: {
        const Matrix& a = nodes_[n.input0].value;
        const Matrix& b = nodes_[n.input1].value;
        Matrix da(a.rows(), a.cols());
        Matrix db(b.rows(), b.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < a.cols(); ++j) da(i, j) = g(i, j);
          for (std::size_t j = 0; j < b.cols(); ++j) db(i, j) = g(i, a.cols() + j);
        }
        accumulate(adj[n.input0], da);
        accumulate(adj[n.input1], db);
        break;
      }
      case Op::kL2NormalizeRows: {
        const Matrix& x = nodes_[n.input0].value;
        Matrix dx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double sq = 0.0;
          for (std::size_t j = 0; j < x.cols(); ++j) sq += x(i, j) * x(i, j);
          const double norm = std::sqrt(sq);
          if (norm < kEpsFloor) continue;  // zero output row, zero gradient
          double dot = 0.0;
          for (std::size_t j = 0; j < x.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < x.cols(); ++j)
            dx(i, j) = (g(i, j) - y(i, j) * dot) / norm;
        }
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kRowSoftmax: {
        const double inv_tau = 1.0 / n.attr;
        Matrix dx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j)
            dx(i, j) = y(i, j) * (g(i, j) - dot) * inv_tau;
        }
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kSumAll: {
        const Matrix& x = nodes_[n.input0].value;
        Matrix dx(x.rows(), x.cols());
        const double gv = g(0, 0);
        for (double& e : dx.values()) e = gv;
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kSumOthers: {
        Matrix dx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t k = 0; k < g.cols(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) {
              if (j != k) acc += g(i, j);
            }
            dx(i, k) = acc;
          }
        }
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kPick: {
        const Matrix& x = nodes_[n.input0].value;
        Matrix dx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) dx(i, n.cols[i]) += g(i, 0);
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kDiag: {
        const Matrix& x = nodes_[n.input0].value;
        Matrix dx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) dx(i, i) += g(i, 0);
        accumulate(adj[n.input0], dx);
        break;
      }
      case Op::kStopGradient:
        break;
    }
  }

  std::vector<Matrix> out;
  out.reserve(leaves.size());
  for (NodeId leaf : leaves) {
    const Node& n = node(leaf);
    if (leaf.index <= root.index && !adj[leaf.index].empty()) {
      out.push_back(adj[leaf.index]);
    } else {
      out.push_back(Matrix(n.value.rows(), n.value.cols()));
    }
  }
  return out;
}

}  // namespace ccl
