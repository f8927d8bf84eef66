#include <doctest.h>

#include <cmath>

#include "ddiff/autodiff.hpp"
#include "ddiff/rng.hpp"

using namespace ddiff;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) {
        v = rng.normal();
    }
    return m;
}

double dot(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a.data[i] * b.data[i];
    }
    return s;
}

// f(A, B, r) = <W, tanh(scale(A B + r)) broadcast and pooled>.
double forward(const Matrix& a, const Matrix& b, const Matrix& r, const Matrix& w, Tape* keep = nullptr) {
    Tape local;
    Tape& tape = keep ? *keep : local;
    auto va = tape.leaf(a, true);
    auto vb = tape.leaf(b, true);
    auto vr = tape.leaf(r, true);
    auto h = tape.tanh(tape.scale(tape.add_row(tape.matmul(va, vb), vr), 0.7));
    auto pooled = tape.group_broadcast(tape.group_mean(h, 2), 2);
    auto g = tape.gather_rows(tape.add(h, pooled), {3, 0, 1, 1});
    return dot(tape.value(g), w);
}

}  // namespace

TEST_CASE("matmul") {
    Matrix a(2, 2);
    a.data = {1, 2, 3, 4};
    Matrix b(2, 1);
    b.data = {5, 6};
    CHECK(matmul(a, b).data == std::vector<double>{17, 39});
    CHECK_THROWS_AS(matmul(b, b), ContractError);
}

TEST_CASE("every op backpropagates like central differences") {
    Rng rng(9);
    const Matrix a = random_matrix(4, 3, rng);
    const Matrix b = random_matrix(3, 5, rng);
    const Matrix r = random_matrix(1, 5, rng);
    const Matrix w = random_matrix(4, 5, rng);

    Tape tape;
    auto va = tape.leaf(a, true);
    auto vb = tape.leaf(b, true);
    auto vr = tape.leaf(r, true);
    auto h = tape.tanh(tape.scale(tape.add_row(tape.matmul(va, vb), vr), 0.7));
    auto pooled = tape.group_broadcast(tape.group_mean(h, 2), 2);
    auto g = tape.gather_rows(tape.add(h, pooled), {3, 0, 1, 1});
    tape.backward(g, w);

    const double eps = 1e-6;
    auto check = [&](Matrix m, int which, const Matrix& grad) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            Matrix up = m;
            Matrix down = m;
            up.data[i] += eps;
            down.data[i] -= eps;
            double fu = 0.0;
            double fd = 0.0;
            if (which == 0) {
                fu = forward(up, b, r, w);
                fd = forward(down, b, r, w);
            } else if (which == 1) {
                fu = forward(a, up, r, w);
                fd = forward(a, down, r, w);
            } else {
                fu = forward(a, b, up, w);
                fd = forward(a, b, down, w);
            }
            const double num = (fu - fd) / (2 * eps);
            CHECK(std::abs(num - grad.data[i]) / std::max({std::abs(num), std::abs(grad.data[i]), 1e-4}) < 1e-6);
        }
    };
    check(a, 0, tape.grad(va));
    check(b, 1, tape.grad(vb));
    check(r, 2, tape.grad(vr));
}

TEST_CASE("constants receive no gradient and unreached nodes give zeros") {
    Tape tape;
    Matrix one(1, 1, 2.0);
    auto c = tape.leaf(one, false);
    auto x = tape.leaf(one, true);
    auto unused = tape.leaf(one, true);
    auto y = tape.matmul(c, x);
    tape.backward(y, Matrix(1, 1, 1.0));
    CHECK(tape.grad(x).data[0] == 2.0);
    CHECK(tape.grad(unused).data[0] == 0.0);
}
