#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cgcnn/error.hpp"
#include "cgcnn/optimizer.hpp"

using namespace cgcnn;

namespace {

OptimizerState sgd(double lr, double momentum = 0.0) {
    OptimizerSettings s;
    s.kind = OptimizerKind::Sgd;
    s.learning_rate = lr;
    s.momentum = momentum;
    return OptimizerState(s);
}

}  // namespace

TEST_CASE("sgd: zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.5, -2.0, 0.0};
    const std::vector<double> g(3, 0.0);
    auto st = sgd(0.1);
    optimizer_step(p, g, st);
    CHECK(p == std::vector<double>{1.5, -2.0, 0.0});
}

TEST_CASE("sgd: single step") {
    std::vector<double> p{1.0};
    const std::vector<double> g{0.5};
    auto st = sgd(0.1);
    optimizer_step(p, g, st);
    CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("sgd: momentum accumulates velocity") {
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    auto st = sgd(0.1, 0.9);
    optimizer_step(p, g, st);
    CHECK(p[0] == doctest::Approx(-0.1));
    optimizer_step(p, g, st);
    // v = 0.9 * 1 + 1 = 1.9
    CHECK(p[0] == doctest::Approx(-0.1 - 0.19));
}

TEST_CASE("adam: first step moves by lr in the gradient sign") {
    std::vector<double> p{2.0, -3.0};
    const std::vector<double> g{4.0, -0.001};
    OptimizerState st(OptimizerSettings{OptimizerKind::Adam, 0.01, 0.0, 0.9, 0.999, 1e-8});
    optimizer_step(p, g, st);
    CHECK(p[0] == doctest::Approx(1.99).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-2.99).epsilon(1e-6));
    CHECK(st.step == 1);
}

TEST_CASE("adam: ten steps on p^2 shrink |p| monotonically") {
    std::vector<double> p{1.0};
    OptimizerState st(OptimizerSettings{OptimizerKind::Adam, 0.05, 0.0, 0.9, 0.999, 1e-8});
    double prev = std::abs(p[0]);
    for (int i = 0; i < 10; ++i) {
        const std::vector<double> g{2.0 * p[0]};
        optimizer_step(p, g, st);
        CHECK(std::abs(p[0]) < prev);
        prev = std::abs(p[0]);
    }
}

TEST_CASE("non-finite gradient is rejected without side effects") {
    for (const auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
        std::vector<double> p{1.0, 2.0};
        OptimizerSettings s;
        s.kind = kind;
        OptimizerState st(s);
        const std::vector<double> ok{0.1, 0.1};
        optimizer_step(p, ok, st);
        const auto p_before = p;
        const auto m_before = st.first_moment;
        const auto step_before = st.step;
        const std::vector<double> bad{std::numeric_limits<double>::quiet_NaN(), 0.0};
        CHECK_THROWS_AS(optimizer_step(p, bad, st), NumericalError);
        const std::vector<double> inf{0.0, std::numeric_limits<double>::infinity()};
        CHECK_THROWS_AS(optimizer_step(p, inf, st), NumericalError);
        CHECK(p == p_before);
        CHECK(st.first_moment == m_before);
        CHECK(st.step == step_before);
    }
}

TEST_CASE("size mismatch and names") {
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{1.0};
    auto st = sgd(0.1);
    CHECK_THROWS_AS(optimizer_step(p, g, st), InvalidInput);
    CHECK(optimizer_kind_from_string("sgd") == OptimizerKind::Sgd);
    CHECK(optimizer_kind_from_string("adam") == OptimizerKind::Adam);
    CHECK(to_string(OptimizerKind::Adam) == "adam");
    CHECK_THROWS(optimizer_kind_from_string("rmsprop"));
}
