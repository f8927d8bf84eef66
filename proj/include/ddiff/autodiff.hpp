// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal matrix-level reverse-mode differentiation.
//
// A Tape records one evaluation as a list of nodes in creation order.
// backward() seeds the adjoint of one node and replays the list in reverse,
// accumulating adjoints into every node that (transitively) depends on a
// leaf created with requires_grad = true. Losses whose gradient with respect
// to the model output is known in closed form are applied by seeding the
// output node directly, so the tape never needs elementwise log/div ops.

#pragma once

#include <cstddef>
#include <vector>

#include "ddiff/core.hpp"

namespace ddiff {

class Tape {
public:
    struct Var {
        std::size_t id = 0;
    };

    Var leaf(Matrix value, bool requires_grad = false);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    // Adds a 1 x C row to every row of a.
    Var add_row(Var a, Var row);
    Var tanh(Var a);
    Var scale(Var a, double c);
    // Mean over consecutive blocks of `group` rows: (G*group) x C -> G x C.
    Var group_mean(Var a, int group);
    // Repeats each row `group` times: G x C -> (G*group) x C.
    Var group_broadcast(Var a, int group);
    // Row lookup: out.row(i) = table.row(index[i]).
    Var gather_rows(Var table, std::vector<int> index);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    // Zero matrix of the right shape when no adjoint reached the node.
    Matrix grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    void backward(Var out, const Matrix& seed);

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op { leaf, matmul, add, add_row, tanh, scale, group_mean, group_broadcast, gather_rows };

    struct Node {
        Op op = Op::leaf;
        std::size_t a = 0;
        std::size_t b = 0;
        double scalar = 0.0;
        int group = 0;
        std::vector<int> index;
        bool requires_grad = false;
        Matrix value;
        Matrix grad;
    };

    Var push(Node node);
    Matrix& adjoint(std::size_t id);

    std::vector<Node> nodes_;
};

// C = A * B on plain matrices.
Matrix matmul(const Matrix& a, const Matrix& b);

}  // namespace ddiff
