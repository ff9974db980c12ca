#include <catch2/catch_amalgamated.hpp>

#include "tat/ops.hpp"

using tat::Tape;
using tat::Tensor;

TEST_CASE("tensor construction and invariants") {
    auto t = Tensor<double>::from_vec({2, 3}, {1, 2, 3, 4, 5, 6});
    REQUIRE(t.numel() == 6);
    REQUIRE(t.shape() == tat::Shape{2, 3});
    REQUIRE_THROWS_AS(Tensor<double>::from_vec({2, 2}, {1, 2, 3}), tat::UsageError);

    auto z = Tensor<float>::zeros({4, 1, 8, 8});
    REQUIRE(z.numel() == 256);
    REQUIRE(z.data()[255] == 0.0f);
}

TEST_CASE("grad is zero for tensors unreachable from the loss") {
    auto x = Tensor<double>::from_vec({3}, {1, -2, 3}).set_requires_grad();
    auto y = Tensor<double>::from_vec({3}, {5, 5, 5}).set_requires_grad();
    Tape<double> tape;
    auto loss = tat::sum_all(tat::mul(x, x));
    tape.backward(loss);
    REQUIRE(x.grad() == std::vector<double>{2, -4, 6});
    REQUIRE(y.grad() == std::vector<double>{0, 0, 0});
    REQUIRE_FALSE(y.grad_nonzero());
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = Tensor<double>::from_vec({2}, {1, 2}).set_requires_grad();
    Tape<double> tape;
    auto y = tat::mul(x, x);
    REQUIRE_THROWS_AS(tape.backward(y), tat::UsageError);
}

TEST_CASE("successive backward calls on independent graphs do not cross-contaminate") {
    auto x = Tensor<double>::from_vec({2}, {1, 2}).set_requires_grad();
    {
        Tape<double> tape;
        auto loss = tat::sum_all(tat::mul(x, x));
        tape.backward(loss);
    }
    REQUIRE(x.grad() == std::vector<double>{2, 4});
    x.zero_grad();
    {
        Tape<double> tape;
        auto loss = tat::sum_all(tat::mul_scalar(x, 3.0));
        tape.backward(loss);
    }
    REQUIRE(x.grad() == std::vector<double>{3, 3});
}

TEST_CASE("stop_gradient is identity on data and severs the graph") {
    auto x = Tensor<double>::from_vec({2}, {1.5, -2.0}).set_requires_grad();
    {
        Tape<double> tape;
        auto sg = tat::stop_gradient(x);
        REQUIRE(sg.data()[0] == 1.5);
        REQUIRE(sg.data()[1] == -2.0);
        auto loss = tat::sum_all(tat::mul(sg, sg));
        tape.backward(loss);
    }
    REQUIRE(x.grad() == std::vector<double>{0, 0});  // exact

    // loss = sum(SG(x) * x): the severed branch contributes x, not 2x.
    x.zero_grad();
    {
        Tape<double> tape;
        auto loss = tat::sum_all(tat::mul(tat::stop_gradient(x), x));
        tape.backward(loss);
    }
    REQUIRE(x.grad() == std::vector<double>{1.5, -2.0});
}

TEST_CASE("no tape means no recording") {
    auto x = Tensor<double>::from_vec({2}, {1, 2}).set_requires_grad();
    auto y = tat::mul(x, x);  // outside any tape
    REQUIRE_FALSE(y.requires_grad());
    REQUIRE(y.data()[1] == 4.0);
}

TEST_CASE("grad store redirects leaf gradients") {
    auto x = Tensor<double>::from_vec({2}, {3, 4}).set_requires_grad();
    tat::GradStore<double> store;
    store.next_epoch();
    {
        Tape<double> tape;
        auto loss = tat::sum_all(tat::mul(x, x));
        tape.backward(loss, &store);
    }
    REQUIRE_FALSE(x.grad_nonzero());  // leaf grad went to the store
    auto g = store.lookup(*x.node());
    REQUIRE(g.size() == 2);
    REQUIRE(g[0] == 6.0);
    REQUIRE(g[1] == 8.0);

    // next epoch discards stale entries
    store.next_epoch();
    REQUIRE(store.lookup(*x.node()).empty());
}

TEST_CASE("backward seed scales gradients") {
    auto x = Tensor<double>::from_vec({2}, {1, 2}).set_requires_grad();
    Tape<double> tape;
    auto loss = tat::sum_all(tat::mul(x, x));
    tape.backward(loss, nullptr, 0.5);
    REQUIRE(x.grad() == std::vector<double>{1, 2});
}
