// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/autodiff.hpp"

#include <cmath>

namespace ddiff {

namespace {

// out += a * b
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    for (int i = 0; i < a.rows; ++i) {
        double* o = out.data.data() + static_cast<std::size_t>(i) * out.cols;
        const double* ar = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double av = ar[k];
            if (av == 0.0) {
                continue;
            }
            const double* br = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) {
                o[j] += av * br[j];
            }
        }
    }
}

// out += a * b^T
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        for (int j = 0; j < b.rows; ++j) {
            const double* br = b.data.data() + static_cast<std::size_t>(j) * b.cols;
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                acc += ar[k] * br[k];
            }
            out(i, j) += acc;
        }
    }
}

// out += a^T * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    for (int k = 0; k < a.rows; ++k) {
        const double* ar = a.data.data() + static_cast<std::size_t>(k) * a.cols;
        const double* br = b.data.data() + static_cast<std::size_t>(k) * b.cols;
        for (int i = 0; i < a.cols; ++i) {
            const double av = ar[i];
            if (av == 0.0) {
                continue;
            }
            double* o = out.data.data() + static_cast<std::size_t>(i) * out.cols;
            for (int j = 0; j < b.cols; ++j) {
                o[j] += av * br[j];
            }
        }
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ContractError("matmul shape mismatch");
    }
    Matrix out(a.rows, b.cols);
    gemm_acc(a, b, out);
    return out;
}

Tape::Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Tape::Var Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.cols != bv.rows) {
        throw ContractError("tape matmul shape mismatch");
    }
    Node n;
    n.op = Op::matmul;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = ddiff::matmul(av, bv);
    return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (!av.same_shape(bv)) {
        throw ContractError("tape add shape mismatch");
    }
    Node n;
    n.op = Op::add;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    n.value = av;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value.data[i] += bv.data[i];
    }
    return push(std::move(n));
}

Tape::Var Tape::add_row(Var a, Var row) {
    const Matrix& av = value(a);
    const Matrix& rv = value(row);
    if (rv.rows != 1 || rv.cols != av.cols) {
        throw ContractError("tape add_row expects a 1 x C row");
    }
    Node n;
    n.op = Op::add_row;
    n.a = a.id;
    n.b = row.id;
    n.requires_grad = requires_grad(a) || requires_grad(row);
    n.value = av;
    for (int i = 0; i < av.rows; ++i) {
        auto r = n.value.row(i);
        for (int j = 0; j < av.cols; ++j) {
            r[static_cast<std::size_t>(j)] += rv.data[static_cast<std::size_t>(j)];
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::tanh(Var a) {
    Node n;
    n.op = Op::tanh;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (double& x : n.value.data) {
        x = std::tanh(x);
    }
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
    Node n;
    n.op = Op::scale;
    n.a = a.id;
    n.scalar = c;
    n.requires_grad = requires_grad(a);
    n.value = value(a);
    for (double& x : n.value.data) {
        x *= c;
    }
    return push(std::move(n));
}

Tape::Var Tape::group_mean(Var a, int group) {
    const Matrix& av = value(a);
    if (group <= 0 || av.rows % group != 0) {
        throw ContractError("group_mean: rows not divisible by group");
    }
    Node n;
    n.op = Op::group_mean;
    n.a = a.id;
    n.group = group;
    n.requires_grad = requires_grad(a);
    n.value = Matrix(av.rows / group, av.cols);
    const double inv = 1.0 / group;
    for (int g = 0; g < n.value.rows; ++g) {
        auto out = n.value.row(g);
        for (int r = 0; r < group; ++r) {
            auto in = av.row(g * group + r);
            for (std::size_t j = 0; j < out.size(); ++j) {
                out[j] += in[j];
            }
        }
        for (double& x : out) {
            x *= inv;
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::group_broadcast(Var a, int group) {
    const Matrix& av = value(a);
    if (group <= 0) {
        throw ContractError("group_broadcast: group must be positive");
    }
    Node n;
    n.op = Op::group_broadcast;
    n.a = a.id;
    n.group = group;
    n.requires_grad = requires_grad(a);
    n.value = Matrix(av.rows * group, av.cols);
    for (int g = 0; g < av.rows; ++g) {
        auto in = av.row(g);
        for (int r = 0; r < group; ++r) {
            auto out = n.value.row(g * group + r);
            std::copy(in.begin(), in.end(), out.begin());
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::gather_rows(Var table, std::vector<int> index) {
    const Matrix& tv = value(table);
    Node n;
    n.op = Op::gather_rows;
    n.a = table.id;
    n.requires_grad = requires_grad(table);
    n.value = Matrix(static_cast<int>(index.size()), tv.cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= tv.rows) {
            throw ContractError("gather_rows: index out of range");
        }
        auto in = tv.row(index[i]);
        auto out = n.value.row(static_cast<int>(i));
        std::copy(in.begin(), in.end(), out.begin());
    }
    n.index = std::move(index);
    return push(std::move(n));
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (!n.grad.same_shape(n.value)) {
        return Matrix(n.value.rows, n.value.cols);
    }
    return n.grad;
}

Matrix& Tape::adjoint(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad.same_shape(n.value)) {
        n.grad = Matrix(n.value.rows, n.value.cols);
    }
    return n.grad;
}

void Tape::backward(Var out, const Matrix& seed) {
    if (!seed.same_shape(value(out))) {
        throw ContractError("backward seed shape mismatch");
    }
    for (auto& n : nodes_) {
        n.grad = Matrix();
    }
    adjoint(out.id) = seed;

    for (std::size_t k = out.id + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (!n.requires_grad || n.grad.size() == 0 || n.op == Op::leaf) {
            continue;
        }
        const Matrix& g = n.grad;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::matmul: {
                if (nodes_[n.a].requires_grad) {
                    gemm_nt_acc(g, nodes_[n.b].value, adjoint(n.a));
                }
                if (nodes_[n.b].requires_grad) {
                    gemm_tn_acc(nodes_[n.a].value, g, adjoint(n.b));
                }
                break;
            }
            case Op::add: {
                for (std::size_t src : {n.a, n.b}) {
                    if (nodes_[src].requires_grad) {
                        Matrix& d = adjoint(src);
                        for (std::size_t i = 0; i < d.size(); ++i) {
                            d.data[i] += g.data[i];
                        }
                    }
                }
                break;
            }
            case Op::add_row: {
                if (nodes_[n.a].requires_grad) {
                    Matrix& d = adjoint(n.a);
                    for (std::size_t i = 0; i < d.size(); ++i) {
                        d.data[i] += g.data[i];
                    }
                }
                if (nodes_[n.b].requires_grad) {
                    Matrix& d = adjoint(n.b);
                    for (int i = 0; i < g.rows; ++i) {
                        auto gr = g.row(i);
                        for (std::size_t j = 0; j < gr.size(); ++j) {
                            d.data[j] += gr[j];
                        }
                    }
                }
                break;
            }
            case Op::tanh: {
                Matrix& d = adjoint(n.a);
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const double y = n.value.data[i];
                    d.data[i] += g.data[i] * (1.0 - y * y);
                }
                break;
            }
            case Op::scale: {
                Matrix& d = adjoint(n.a);
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d.data[i] += g.data[i] * n.scalar;
                }
                break;
            }
            case Op::group_mean: {
                Matrix& d = adjoint(n.a);
                const double inv = 1.0 / n.group;
                for (int r = 0; r < d.rows; ++r) {
                    auto gr = g.row(r / n.group);
                    auto dr = d.row(r);
                    for (std::size_t j = 0; j < dr.size(); ++j) {
                        dr[j] += gr[j] * inv;
                    }
                }
                break;
            }
            case Op::group_broadcast: {
                Matrix& d = adjoint(n.a);
                for (int r = 0; r < g.rows; ++r) {
                    auto gr = g.row(r);
                    auto dr = d.row(r / n.group);
                    for (std::size_t j = 0; j < dr.size(); ++j) {
                        dr[j] += gr[j];
                    }
                }
                break;
            }
            case Op::gather_rows: {
                Matrix& d = adjoint(n.a);
                for (std::size_t i = 0; i < n.index.size(); ++i) {
                    auto gr = g.row(static_cast<int>(i));
                    auto dr = d.row(n.index[i]);
                    for (std::size_t j = 0; j < dr.size(); ++j) {
                        dr[j] += gr[j];
                    }
                }
                break;
            }
        }
    }
}

}  // namespace ddiff
