#include "cgt/error.hpp"
#include "cgt/tensor.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace cgt;
using cgt::test::max_fd_error;
using cgt::test::random_tensor;
using cgt::test::values;

TEST_CASE("tensor construction checks element count") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.shape() == Shape{2, 3});
}

TEST_CASE("matmul hand cases") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor b({2, 2}, {3, 4, 5, 6});
    CHECK(values(matmul(eye, b)) == std::vector<double>{3, 4, 5, 6});
    const Tensor r({1, 2}, {1, 2});
    const Tensor c({2, 1}, {3, 4});
    CHECK(matmul(r, c).item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a({2, 3});
    const Tensor b({2, 3});
    try {
        matmul(a, b);
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(1);
    Tensor a = random_tensor({3, 3}, rng, -2, 2, true);
    Tensor b = random_tensor({3, 3}, rng, -2, 2, true);
    CHECK(max_fd_error([&] { return sum(matmul(a, b)); }, {a, b}) < 1e-6);
    Tensor batched = random_tensor({2, 3, 4}, rng, -2, 2, true);
    Tensor shared = random_tensor({4, 2}, rng, -2, 2, true);
    Tensor w = random_tensor({2, 3, 2}, rng);
    CHECK(max_fd_error([&] { return sum(mul(matmul(batched, shared), w)); }, {batched, shared}) < 1e-6);
}

TEST_CASE("softmax rows") {
    const Tensor z({1, 2}, {0, 0});
    CHECK(values(softmax_rows(z)) == std::vector<double>{0.5, 0.5});
    const Tensor big({1, 2}, {1000, 0});
    const auto s = values(softmax_rows(big));
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(0.0));
    CHECK(all_finite(softmax_rows(big)));
    Rng rng(2);
    const Tensor r = softmax_rows(random_tensor({4, 5}, rng));
    for (std::size_t i = 0; i < 4; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 5; ++j) total += r.data()[i * 5 + j];
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax gradient matches finite differences") {
    Rng rng(3);
    Tensor x = random_tensor({3, 4}, rng, -2, 2, true);
    Tensor w = random_tensor({3, 4}, rng);
    CHECK(max_fd_error([&] { return sum(mul(softmax_rows(x), w)); }, {x}) < 1e-6);
}

TEST_CASE("masked softmax restricts to allowed entries and adds log weights") {
    const Tensor logits({2, 3}, {1.0, 2.0, 3.0, 0.5, 0.5, 0.5});
    const Tensor weights({2, 3}, {1.0, 0.0, 2.0, 0.0, 0.0, 0.0});
    const auto p = values(masked_softmax(logits, weights));
    const double e0 = std::exp(1.0), e2 = 2.0 * std::exp(3.0);
    CHECK(p[0] == doctest::Approx(e0 / (e0 + e2)).epsilon(1e-14));
    CHECK(p[1] == 0.0);
    CHECK(p[2] == doctest::Approx(e2 / (e0 + e2)).epsilon(1e-14));
    CHECK(p[3] == 0.0);
    CHECK(p[4] == 0.0);
    CHECK(p[5] == 0.0);
    Rng rng(4);
    Tensor x = random_tensor({2, 3}, rng, -2, 2, true);
    Tensor w = random_tensor({2, 3}, rng);
    CHECK(max_fd_error([&] { return sum(mul(masked_softmax(x, weights), w)); }, {x}) < 1e-6);
}

TEST_CASE("elementwise identities") {
    Rng rng(5);
    const Tensor a = random_tensor({2, 2}, rng);
    CHECK(values(mul(Tensor::ones({2, 2}), a)) == values(a));
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(values(relu(Tensor({3}, {-1.0, 0.0, 2.0}))) == std::vector<double>{0.0, 0.0, 2.0});
    CHECK(values(neg(a)) == values(scale(a, -1.0)));
    CHECK_THROWS_AS(add(Tensor({2, 3}), Tensor({2, 2})), DimensionError);
}

TEST_CASE("broadcast time-slice mask matches an explicit loop") {
    Rng rng(6);
    const std::size_t t = 4, n = 3, c = 2;
    const Tensor x = random_tensor({t, n, c}, rng);
    const Tensor m = random_tensor({t, 1, 1}, rng, 0, 1);
    const Tensor y = mul(x, m);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < n * c; ++j) {
            CHECK(y.data()[i * n * c + j] == x.data()[i * n * c + j] * m.data()[i]);
        }
    }
}

TEST_CASE("every differentiable op passes the finite-difference sweep") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng, -2, 2, true);
    Tensor b = random_tensor({3, 4}, rng, -2, 2, true);
    Tensor row = random_tensor({1, 4}, rng, -2, 2, true);
    Tensor w = random_tensor({3, 4}, rng);
    const double tol = 1e-4;
    CHECK(max_fd_error([&] { return sum(mul(add(a, row), w)); }, {a, row}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(sub(a, b), w)); }, {a, b}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(mul(a, b), w)); }, {a, b}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(sigmoid(a), w)); }, {a}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(square(a), w)); }, {a}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(affine(a, 1.7, -0.3), w)); }, {a}) < tol);
    CHECK(max_fd_error([&] { return mean(mul(neg(a), w)); }, {a}) < tol);
    CHECK(max_fd_error([&] { return mse(a, b); }, {a, b}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(transpose_last(a), transpose_last(w))); }, {a}) < tol);
    CHECK(max_fd_error([&] { return sum(mul(reshape(a, {4, 3}), reshape(w, {4, 3}))); }, {a}) < tol);
    Tensor cube = random_tensor({2, 3, 4}, rng, -2, 2, true);
    Tensor wc = random_tensor({4, 2, 3}, rng);
    CHECK(max_fd_error([&] { return sum(mul(permute(cube, {2, 0, 1}), wc)); }, {cube}) < tol);
    Tensor upper = random_tensor({3}, rng, -2, 2, true);
    Tensor wu = random_tensor({3, 3}, rng);
    CHECK(max_fd_error([&] { return sum(mul(symmetric_from_upper(upper, 3, 1.0), wu)); }, {upper}) < tol);
    // relu away from the kink
    Tensor away({4}, {-1.5, -0.5, 0.5, 1.5});
    away.set_requires_grad(true);
    CHECK(max_fd_error([&] { return sum(square(relu(away))); }, {away}) < tol);
}

TEST_CASE("backward contract") {
    Tensor x = Tensor({3}, {1, 2, 3});
    x.set_requires_grad(true);
    backward(sum(scale(x, 2.0)));
    CHECK(values(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end()))) ==
          std::vector<double>{2, 2, 2});
    backward(sum(scale(x, 2.0)));
    CHECK(x.grad()[0] == 4.0);
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
    CHECK_THROWS_AS(backward(scale(x, 2.0)), ContractError);
}

TEST_CASE("matmul, softmax and MSE chain matches finite differences") {
    Rng rng(8);
    Tensor a = random_tensor({3, 4}, rng, -2, 2, true);
    Tensor b = random_tensor({4, 5}, rng, -2, 2, true);
    const Tensor target = random_tensor({3, 5}, rng, 0, 1);
    CHECK(max_fd_error([&] { return mse(softmax_rows(matmul(a, b)), target); }, {a, b}) < 1e-5);
}

TEST_CASE("tape records each node once, parents before children") {
    Tensor x = Tensor({2}, {0.3, -0.4});
    x.set_requires_grad(true);
    const Tensor y = mul(x, x);
    const Tensor z = add(y, x);
    const Tensor s = sum(mul(z, y));
    const auto tape = ComputationTape::record(s);
    std::vector<const detail::Node*> seen;
    for (const auto* n : tape.order()) {
        CHECK(std::find(seen.begin(), seen.end(), n) == seen.end());
        for (const auto& p : n->parents) {
            if (p->requires_grad) CHECK(std::find(seen.begin(), seen.end(), p.get()) != seen.end());
        }
        seen.push_back(n);
    }
    CHECK(tape.size() == 5);
    CHECK(tape.order().back() == s.node());
}

TEST_CASE("no-grad guard stops recording") {
    Tensor x = Tensor({2}, {1, 2});
    x.set_requires_grad(true);
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        CHECK_FALSE(mul(x, x).requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(mul(x, x).requires_grad());
}

TEST_CASE("forward ops are deterministic") {
    Rng rng(9);
    const Tensor a = random_tensor({5, 6}, rng);
    const Tensor b = random_tensor({6, 7}, rng);
    CHECK(values(softmax_rows(matmul(a, b))) == values(softmax_rows(matmul(a, b))));
}
