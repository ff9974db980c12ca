#include <catch2/catch_amalgamated.hpp>

#include "tat/optim.hpp"
#include "tat/ops.hpp"

using tat::AdamW;
using tat::Tape;
using tat::Tensor;
using D = Tensor<double>;

TEST_CASE("AdamW reaches the analytic minimum of a convex quadratic within 1e-6") {
    // f(x) = 0.5 * sum(a_i (x_i - b_i)^2), minimum at x = b
    auto a = D::from_vec({4}, {1.0, 3.0, 0.5, 2.0});
    auto b = D::from_vec({4}, {0.3, -1.2, 2.0, 0.7});
    auto x = D::zeros({4});
    x.set_requires_grad();
    typename AdamW<double>::Options opt;
    opt.lr = 0.05;
    opt.weight_decay = 0;  // decay would shift the minimizer
    AdamW<double> adamw(opt);
    std::vector<D> params = {x};
    for (int step = 0; step < 5000; ++step) {
        AdamW<double>::zero_grad(params);
        Tape<double> tape;
        auto d = tat::sub(x, b);
        auto loss = tat::mul_scalar(tat::sum_all(tat::mul(a, tat::mul(d, d))), 0.5);
        tape.backward(loss);
        adamw.step(params);
    }
    for (int i = 0; i < 4; ++i)
        REQUIRE_THAT(x.data()[i], Catch::Matchers::WithinAbs(b.data()[i], 1e-6));
}

TEST_CASE("weight decay is decoupled: pure decay shrinks parameters geometrically") {
    auto x = D::from_vec({1}, {1.0});
    x.set_requires_grad();
    typename AdamW<double>::Options opt;
    opt.lr = 0.1;
    opt.weight_decay = 0.5;
    AdamW<double> adamw(opt);
    std::vector<D> params = {x};
    // gradient of zero: only the decay term applies, but grad-less params are skipped
    {
        Tape<double> tape;
        auto loss = tat::mul_scalar(tat::sum_all(x), 0.0);
        tape.backward(loss);
    }
    adamw.step(params);
    // m = v = 0 so the Adam term vanishes; x <- x - lr*wd*x
    REQUIRE_THAT(x.data()[0], Catch::Matchers::WithinAbs(1.0 - 0.1 * 0.5, 1e-12));
}

TEST_CASE("parameters never reached by a loss are left untouched") {
    auto x = D::from_vec({2}, {1.0, 2.0});
    auto y = D::from_vec({2}, {3.0, 4.0});
    x.set_requires_grad();
    y.set_requires_grad();
    AdamW<double> adamw;
    std::vector<D> params = {x, y};
    {
        Tape<double> tape;
        auto loss = tat::sum_all(tat::mul(x, x));
        tape.backward(loss);
    }
    adamw.step(params);
    REQUIRE(y.data()[0] == 3.0);
    REQUIRE(y.data()[1] == 4.0);
    REQUIRE(x.data()[0] != 1.0);
}
