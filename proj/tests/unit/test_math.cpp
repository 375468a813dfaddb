#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedrlhf/distribution.hpp"
#include "fedrlhf/errors.hpp"
#include "fedrlhf/parameter_vector.hpp"
#include "fedrlhf/rng.hpp"
#include "fedrlhf/stats.hpp"

using namespace fedrlhf;

namespace {

// Extended-precision softmax oracle (long double accumulation).
std::vector<double> softmax_oracle(const std::vector<double>& logits) {
    long double max_logit = logits[0];
    for (double x : logits) max_logit = std::max<long double>(max_logit, x);
    std::vector<long double> e(logits.size());
    long double sum = 0.0L;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = expl(static_cast<long double>(logits[i]) - max_logit);
        sum += e[i];
    }
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<double>(e[i] / sum);
    }
    return out;
}

// Extended-precision direct-summation KL oracle.
double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            acc += static_cast<long double>(p[i]) *
                   logl(static_cast<long double>(p[i]) / static_cast<long double>(q[i]));
        }
    }
    return static_cast<double>(acc);
}

// Brute-force mid ranks (quadratic counting) + Pearson in long double.
std::vector<double> ranks_oracle(const std::vector<double>& xs) {
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        int less = 0, equal = 0;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            if (xs[j] < xs[i]) ++less;
            if (xs[j] == xs[i]) ++equal;
        }
        r[i] = less + 0.5 * (equal + 1);  // average of ranks less+1 .. less+equal
    }
    return r;
}

double spearman_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::vector<double> rx = ranks_oracle(xs);
    const std::vector<double> ry = ranks_oracle(ys);
    const std::size_t n = xs.size();
    long double mx = 0.0L, my = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    long double sxx = 0.0L, syy = 0.0L, sxy = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
        sxy += (rx[i] - mx) * (ry[i] - my);
    }
    return static_cast<double>(sxy / sqrtl(sxx * syy));
}

Distribution random_distribution(int n, RngStream& rng) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (double& x : p) {
        x = 0.01 + rng.next_double();
        sum += x;
    }
    for (double& x : p) x /= sum;
    return Distribution(p);
}

}  // namespace

TEST_CASE("rng reproducibility and substreams") {
    RngStream a(1234, 5);
    RngStream b(1234, 5);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(1234, 5);
    RngStream d = c.substream(0);
    RngStream e = c.substream(1);
    CHECK(d.next_u64() != e.next_u64());

    // fork consumes exactly one parent draw regardless of child usage
    RngStream p1(9, 0), p2(9, 0);
    RngStream child1 = p1.fork(7);
    RngStream child2 = p2.fork(7);
    CHECK(child1.next_u64() == child2.next_u64());
    (void)child1.next_u64();  // extra child use
    CHECK(p1.next_u64() == p2.next_u64());
}

TEST_CASE("rng draw helpers") {
    RngStream rng(42, 0);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / 10000.0 - 0.5) < 0.02);

    for (int i = 0; i < 1000; ++i) CHECK(rng.next_below(7) < 7);
    CHECK_THROWS_AS(rng.next_below(0), ArgumentError);

    double gsum = 0.0, gsq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.next_gaussian();
        CHECK(std::isfinite(g));
        gsum += g;
        gsq += g * g;
    }
    CHECK(std::abs(gsum / n) < 0.03);
    CHECK(std::abs(gsq / n - 1.0) < 0.05);
}

TEST_CASE("parameter vector arithmetic") {
    ParameterVector a(std::vector<double>{1.0, 2.0});
    ParameterVector b(std::vector<double>{0.5, -1.0});
    CHECK((a + b).values() == std::vector<double>{1.5, 1.0});
    CHECK((a - b).values() == std::vector<double>{0.5, 3.0});
    CHECK(a.dot(b) == doctest::Approx(-1.5));
    a.axpy(2.0, b);
    CHECK(a.values() == std::vector<double>{2.0, 0.0});

    ParameterVector big(std::vector<double>{3.0, 4.0});
    big.clip_norm(1.0);
    CHECK(big.norm() == doctest::Approx(1.0));
    ParameterVector small(std::vector<double>{0.3, 0.4});
    ParameterVector copy = small;
    small.clip_norm(10.0);
    CHECK(bitwise_equal(small, copy));

    ParameterVector bad(std::vector<double>{1.0, std::nan("")});
    CHECK_THROWS_AS(bad.ensure_finite(), NumericalError);
    CHECK_THROWS_AS(a.dot(ParameterVector(3)), ArgumentError);

    CHECK(bitwise_equal(ParameterVector(std::vector<double>{0.0}),
                        ParameterVector(std::vector<double>{0.0})));
    CHECK_FALSE(bitwise_equal(ParameterVector(std::vector<double>{0.0}),
                              ParameterVector(std::vector<double>{-0.0})));
}

TEST_CASE("softmax analytic cases") {
    const Distribution d1 = softmax(std::vector<double>{0.0, 0.0});
    CHECK(d1[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d1[1] == doctest::Approx(0.5).epsilon(1e-14));

    const Distribution d2 = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
    CHECK(std::abs(d2[0] - 0.25) < 1e-12);
    CHECK(std::abs(d2[1] - 0.75) < 1e-12);
}

TEST_CASE("softmax matches extended-precision oracle") {
    RngStream rng(7, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(30));
        std::vector<double> logits(n);
        for (double& x : logits) x = -50.0 + 100.0 * rng.next_double();
        const Distribution got = softmax(logits);
        const std::vector<double> expected = softmax_oracle(logits);
        for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - expected[i]) < 1e-12);
    }
}

TEST_CASE("softmax shift invariance") {
    RngStream rng(11, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits(5);
        for (double& x : logits) x = -5.0 + 10.0 * rng.next_double();
        const double shift = -100.0 + 200.0 * rng.next_double();
        std::vector<double> shifted = logits;
        for (double& x : shifted) x += shift;
        const Distribution a = softmax(logits);
        const Distribution b = softmax(shifted);
        for (int i = 0; i < 5; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
}

TEST_CASE("softmax rejects bad input") {
    CHECK_THROWS_AS(softmax(std::vector<double>{}), ArgumentError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), ArgumentError);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, INFINITY}), ArgumentError);
}

TEST_CASE("kl divergence analytic cases") {
    const Distribution p({0.3, 0.7});
    CHECK(kl_divergence(p, p) == 0.0);
    const Distribution point({1.0, 0.0});
    const Distribution half({0.5, 0.5});
    CHECK(std::abs(kl_divergence(point, half) - std::log(2.0)) < 1e-12);
}

TEST_CASE("kl divergence error paths") {
    const Distribution p({0.3, 0.7});
    const Distribution q3({0.2, 0.3, 0.5});
    CHECK_THROWS_AS(kl_divergence(p, q3), ArgumentError);
    const Distribution zeroed({1.0, 0.0});
    CHECK_THROWS_AS(kl_divergence(p, zeroed), InfiniteDivergenceError);
    // p zero where q zero is fine
    CHECK(kl_divergence(zeroed, zeroed) == 0.0);
}

TEST_CASE("kl divergence matches extended-precision oracle and is non-negative") {
    RngStream rng(13, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_below(12));
        const Distribution p = random_distribution(n, rng);
        const Distribution q = random_distribution(n, rng);
        const double got = kl_divergence(p, q);
        CHECK(got >= 0.0);
        CHECK(std::abs(got - kl_oracle(p.probs(), q.probs())) < 1e-10);
        CHECK(kl_divergence(p, p) == 0.0);
    }
}

TEST_CASE("spearman analytic cases") {
    const std::vector<double> inc{1, 2, 3, 4};
    const std::vector<double> dec{4, 3, 2, 1};
    CHECK(spearman_rank_correlation(inc, inc) == doctest::Approx(1.0));
    CHECK(spearman_rank_correlation(inc, dec) == doctest::Approx(-1.0));
}

TEST_CASE("spearman error paths") {
    CHECK_THROWS_AS(spearman_rank_correlation(std::vector<double>{1.0},
                                              std::vector<double>{1.0}),
                    ArgumentError);
    CHECK_THROWS_AS(spearman_rank_correlation(std::vector<double>{1.0, 2.0},
                                              std::vector<double>{1.0}),
                    ArgumentError);
    CHECK_THROWS_AS(spearman_rank_correlation(std::vector<double>{2.0, 2.0, 2.0},
                                              std::vector<double>{1.0, 2.0, 3.0}),
                    UndefinedCorrelationError);
}

TEST_CASE("spearman matches brute-force mid-rank oracle on tied data") {
    RngStream rng(17, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 4 + static_cast<int>(rng.next_below(40));
        std::vector<double> xs(n), ys(n);
        // coarse integer levels force plenty of ties
        for (int i = 0; i < n; ++i) {
            xs[i] = static_cast<double>(rng.next_below(5));
            ys[i] = static_cast<double>(rng.next_below(5));
        }
        bool defined = true;
        double got = 0.0;
        try {
            got = spearman_rank_correlation(xs, ys);
        } catch (const UndefinedCorrelationError&) {
            defined = false;
        }
        if (defined) {
            CHECK(std::abs(got - spearman_oracle(xs, ys)) < 1e-10);
            CHECK(got >= -1.0 - 1e-12);
            CHECK(got <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("mid ranks average ties") {
    const std::vector<double> xs{10.0, 20.0, 20.0, 30.0};
    const std::vector<double> r = mid_ranks(xs);
    CHECK(r == std::vector<double>{1.0, 2.5, 2.5, 4.0});
}

TEST_CASE("linear fit recovers exact lines") {
    const std::vector<double> xs{0, 1, 2, 3, 4};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(3.0 - 2.0 * x);
    const LinearFit fit = linear_fit(xs, ys);
    CHECK(fit.slope == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}
