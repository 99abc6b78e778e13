#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "dos/losses.hpp"
#include "dos/rng.hpp"

using namespace dos;

namespace {

std::vector<Tensor<double>> random_points(std::size_t n, std::size_t dim, SeededRng& rng) {
    std::vector<Tensor<double>> pts;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor<double> p({dim});
        for (std::size_t j = 0; j < dim; ++j) p[j] = rng.normal();
        pts.push_back(std::move(p));
    }
    return pts;
}

Tensor<double> mean_of(const std::vector<Tensor<double>>& pts) {
    Tensor<double> m({pts.front().size()});
    for (const auto& p : pts)
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += p[j];
    for (std::size_t j = 0; j < m.size(); ++j) m[j] /= static_cast<double>(pts.size());
    return m;
}

// Numerical gradient of a scalar function of fx.
template <typename F>
Tensor<double> numeric_grad(F f, Tensor<double> x, double eps = 1e-6) {
    Tensor<double> g({x.size()});
    for (std::size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + eps;
        double fp = f(x);
        x[i] = keep - eps;
        double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2 * eps);
    }
    return g;
}

} // namespace

// ---------- cross_entropy ----------

TEST_CASE("cross-entropy of a one-hot correct prediction is zero") {
    Tensor<double> p({3}, {0, 1, 0});
    CHECK(cross_entropy(p, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross-entropy of p=0.1 on the true class is ln 10") {
    Tensor<double> p({2}, {0.1, 0.9});
    CHECK(cross_entropy(p, 0) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy clamps zero probability to a large finite value") {
    Tensor<double> p({2}, {0.0, 1.0});
    double loss = cross_entropy(p, 0);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(kProbClamp)).epsilon(1e-12));
}

TEST_CASE("cross-entropy rejects out-of-range labels") {
    Tensor<double> p({3}, {0.2, 0.3, 0.5});
    CHECK_THROWS_AS(cross_entropy(p, 3), DataError);
    CHECK_THROWS_AS(cross_entropy(p, -1), DataError);
}

// ---------- loss_f ----------

TEST_CASE("loss_f against a hand-computed two-neighbor case") {
    Tensor<double> fx({2}, {0, 0});
    std::vector<Tensor<double>> vs;
    vs.push_back(Tensor<double>({2}, {1, 0}));  // squared distance 1
    vs.push_back(Tensor<double>({2}, {0, 2}));  // squared distance 4
    CHECK(loss_f(fx, vs) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("loss_f is minimized at the neighbor mean") {
    SeededRng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        auto vs = random_points(5, 4, rng);
        Tensor<double> mean = mean_of(vs);
        double at_mean = loss_f(mean, vs);
        for (int probe = 0; probe < 30; ++probe) {
            Tensor<double> other({4});
            for (std::size_t j = 0; j < 4; ++j) other[j] = mean[j] + 0.1 * rng.normal();
            CHECK(loss_f(other, vs) >= at_mean - 1e-12);
        }
        // gradient vanishes at the mean
        auto f = [&](const Tensor<double>& x) { return loss_f(x, vs); };
        Tensor<double> g = numeric_grad(f, mean);
        for (std::size_t j = 0; j < g.size(); ++j) CHECK(std::fabs(g[j]) < 1e-6);
    }
}

TEST_CASE("loss_f input validation") {
    Tensor<double> fx({3});
    CHECK_THROWS_AS(loss_f(fx, {}), DataError);
    std::vector<Tensor<double>> bad;
    bad.push_back(Tensor<double>({2}));
    CHECK_THROWS_AS(loss_f(fx, bad), DimensionError);
}

// ---------- rho ----------

TEST_CASE("rho sums to one and the nearest neighbor gets the largest weight") {
    SeededRng rng(13);
    for (int rep = 0; rep < 30; ++rep) {
        auto vs = random_points(6, 3, rng);
        Tensor<double> fx({3});
        for (std::size_t j = 0; j < 3; ++j) fx[j] = rng.normal();
        std::vector<double> r = rho(fx, vs);
        double total = 0;
        std::size_t nearest = 0;
        double best = 1e300;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            total += r[i];
            double d = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                double t = fx[j] - vs[i][j];
                d += t * t;
            }
            if (d < best) {
                best = d;
                nearest = i;
            }
        }
        CHECK(std::fabs(total - 1.0) < 1e-12);
        for (std::size_t i = 0; i < vs.size(); ++i) CHECK(r[nearest] >= r[i]);
    }
}

TEST_CASE("rho matches the direct exponential formula when distances are small") {
    Tensor<double> fx({1}, {0.0});
    std::vector<Tensor<double>> vs;
    vs.push_back(Tensor<double>({1}, {1.0}));
    vs.push_back(Tensor<double>({1}, {2.0}));
    std::vector<double> r = rho(fx, vs);
    double e1 = std::exp(-1.0), e4 = std::exp(-4.0);
    CHECK(r[0] == doctest::Approx(e1 / (e1 + e4)).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(e4 / (e1 + e4)).epsilon(1e-12));
}

TEST_CASE("rho is stable under huge distances") {
    Tensor<double> fx({1}, {0.0});
    std::vector<Tensor<double>> vs;
    vs.push_back(Tensor<double>({1}, {100.0}));
    vs.push_back(Tensor<double>({1}, {101.0}));
    std::vector<double> r = rho(fx, vs); // naive exponentials would underflow to 0/0
    CHECK(std::isfinite(r[0]));
    CHECK(r[0] + r[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r[0] > r[1]);
}

// ---------- loss_g ----------

TEST_CASE("loss_g is the weight-linear combination of per-neighbor cross-entropies") {
    std::vector<Tensor<double>> outs;
    outs.push_back(Tensor<double>({2}, {0.5, 0.5}));
    outs.push_back(Tensor<double>({2}, {0.25, 0.75}));
    std::vector<double> w{0.4, 0.6};
    double expect = 0.4 * (-std::log(0.5)) + 0.6 * (-std::log(0.25));
    CHECK(loss_g(outs, 0, w) == doctest::Approx(expect).epsilon(1e-12));
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(loss_g(outs, 0, one), DataError);
}

// ---------- weighted_loss_f ----------

TEST_CASE("weighted_loss_f hand case and reduction to loss_f at unit weights") {
    Tensor<double> fx({2}, {0, 0});
    std::vector<Tensor<double>> vs;
    vs.push_back(Tensor<double>({2}, {1, 0}));
    vs.push_back(Tensor<double>({2}, {0, 2}));
    Tensor<double> w({2}, {0.25, 0.75});
    CHECK(weighted_loss_f(fx, vs, w) == doctest::Approx(0.25 * 1 + 0.75 * 4).epsilon(1e-12));

    Tensor<double> ones({2}, {1, 1});
    CHECK(weighted_loss_f(fx, vs, ones) == doctest::Approx(loss_f(fx, vs)).epsilon(1e-12));

    Tensor<double> short_w({1}, {1.0});
    CHECK_THROWS_AS(weighted_loss_f(fx, vs, short_w), DataError);
}

TEST_CASE("weighted_loss_f is minimized at the weighted mean of the neighbors") {
    SeededRng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        auto vs = random_points(4, 3, rng);
        Tensor<double> w = sample_simplex<double>(4, rng);
        Tensor<double> wmean({3});
        for (std::size_t i = 0; i < vs.size(); ++i)
            for (std::size_t j = 0; j < 3; ++j) wmean[j] += w[i] * vs[i][j];
        auto f = [&](const Tensor<double>& x) { return weighted_loss_f(x, vs, w); };
        Tensor<double> g = numeric_grad(f, wmean);
        for (std::size_t j = 0; j < g.size(); ++j) CHECK(std::fabs(g[j]) < 1e-6);
        // and strictly below nearby perturbations
        double at_min = weighted_loss_f(wmean, vs, w);
        for (int probe = 0; probe < 10; ++probe) {
            Tensor<double> other({3});
            for (std::size_t j = 0; j < 3; ++j) other[j] = wmean[j] + 0.05 * rng.normal();
            CHECK(weighted_loss_f(other, vs, w) >= at_min - 1e-12);
        }
    }
}

// ---------- rho_weighted ----------

TEST_CASE("rho_weighted with a zero weight gives that neighbor exp(0) mass") {
    Tensor<double> fx({1}, {0.0});
    std::vector<Tensor<double>> vs;
    vs.push_back(Tensor<double>({1}, {3.0})); // squared distance 9
    vs.push_back(Tensor<double>({1}, {5.0})); // squared distance 25
    Tensor<double> w({2}, {0.0, 1.0});
    std::vector<double> r = rho_weighted(fx, vs, w);
    // exponents: -0*9 = 0 and -1*25 = -25
    double z = 1.0 + std::exp(-25.0);
    CHECK(r[0] == doctest::Approx(1.0 / z).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(std::exp(-25.0) / z).epsilon(1e-12));
}

TEST_CASE("rho_weighted is uniform when all distances vanish") {
    Tensor<double> fx({2}, {1, 2});
    std::vector<Tensor<double>> vs(3, fx);
    SeededRng rng(3);
    Tensor<double> w = sample_simplex<double>(3, rng);
    std::vector<double> r = rho_weighted(fx, vs, w);
    for (double ri : r) CHECK(ri == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("rho_weighted reduces to rho at unit weights") {
    SeededRng rng(41);
    auto vs = random_points(5, 3, rng);
    Tensor<double> fx({3});
    for (std::size_t j = 0; j < 3; ++j) fx[j] = rng.normal();
    Tensor<double> ones({5});
    ones.fill(1.0);
    std::vector<double> a = rho_weighted(fx, vs, ones);
    std::vector<double> b = rho(fx, vs);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

// ---------- weighted_loss_g ----------

TEST_CASE("weighted_loss_g combines cross-entropies with the rho' weights") {
    std::vector<Tensor<double>> outs;
    outs.push_back(Tensor<double>({3}, {0.7, 0.2, 0.1}));
    outs.push_back(Tensor<double>({3}, {0.1, 0.8, 0.1}));
    std::vector<double> rw{0.3, 0.7};
    double expect = 0.3 * (-std::log(0.2)) + 0.7 * (-std::log(0.8));
    CHECK(weighted_loss_g(outs, 1, rw) == doctest::Approx(expect).epsilon(1e-12));
    std::vector<double> bad{1.0};
    CHECK_THROWS_AS(weighted_loss_g(outs, 1, bad), DataError);
}

TEST_CASE("degenerate single-neighbor instance reduces every piece to the plain case") {
    SeededRng rng(59);
    Tensor<double> fx({4});
    Tensor<double> v({4});
    for (std::size_t j = 0; j < 4; ++j) {
        fx[j] = rng.normal();
        v[j] = rng.normal();
    }
    std::vector<Tensor<double>> vs{v};
    Tensor<double> w({1}, {1.0});
    double d = 0;
    for (std::size_t j = 0; j < 4; ++j) {
        double t = fx[j] - v[j];
        d += t * t;
    }
    CHECK(weighted_loss_f(fx, vs, w) == doctest::Approx(d).epsilon(1e-12));
    std::vector<double> r = rho_weighted(fx, vs, w);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-12));
}
