#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>

#include "nnsym/correlators.hpp"
#include "nnsym/symmetry.hpp"

using namespace nnsym;

namespace {

InputSet two_points_2d() {
    InputSet in;
    in.dim = 2;
    in.points = {{0.3, 0.5}, {0.8, -0.2}};
    return in;
}

// Brute-force count of perfect matchings of n elements: enumerate all
// permutations interpreted as ordered pairings, divide by the overcount.
std::size_t matchings_by_bruteforce(std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::size_t matchings = 0;
    do {
        bool canonical = true;
        for (std::size_t q = 0; q < n / 2 && canonical; ++q) {
            if (perm[2 * q] > perm[2 * q + 1]) canonical = false;
            if (q > 0 && perm[2 * q - 2] > perm[2 * q]) canonical = false;
        }
        if (canonical) ++matchings;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return matchings;
}

// Complex composite Simpson on [-10,10]; used for the complex-step
// derivative of the quartic moment ratio.
cplx simpson_c(const std::function<cplx(double)>& f, int intervals) {
    const double lo = -10.0, hi = 10.0;
    const double h = (hi - lo) / intervals;
    cplx acc = f(lo) + f(hi);
    for (int i = 1; i < intervals; ++i)
        acc += f(lo + i * h) * (i % 2 == 0 ? 2.0 : 4.0);
    return acc * (h / 3.0);
}

// E[theta^2] under exp(-theta^2/2 - lambda theta^4) for complex lambda.
cplx quartic_moment_ratio(cplx lambda) {
    auto weight = [&](double t) {
        const double t2 = t * t;
        return std::exp(-0.5 * t2) * std::exp(-lambda * (t2 * t2));
    };
    const cplx z = simpson_c(weight, 50000);
    const cplx num = simpson_c([&](double t) { return t * t * weight(t); }, 50000);
    return num / z;
}

}  // namespace

TEST_CASE("odd correlators of zero-mean ensembles vanish") {
    ArchitectureSpec spec = relu_net(2, 20, 3, 0.5, 0.3);
    const InputSet inputs = two_points_2d();
    for (auto slots : {std::vector<Slot>{{0, false}},
                       std::vector<Slot>{{0, false}, {1, false}, {0, false}}}) {
        auto g = estimate_correlator(spec, inputs, slots, 200000, RngStream(31), 2);
        for (std::size_t i = 0; i < g.mean.size(); ++i)
            CHECK(std::fabs(g.mean[i]) <= 4.0 * g.std_error[i]);
    }
}

TEST_CASE("linear 1-d net: G2(x,x) = sigma^2 x^2") {
    const double sigma = 0.9, x = 1.7;
    ArchitectureSpec spec = linear_net(1, 1, 0.0, sigma);
    InputSet inputs;
    inputs.dim = 1;
    inputs.points = {{x}};
    const std::vector<Slot> slots{{0, false}, {0, false}};
    auto g = estimate_correlator(spec, inputs, slots, 400000, RngStream(32), 2);
    const double expected = sigma * sigma * x * x;  // closed-form gaussian moment
    CHECK(std::fabs(g.mean[0] - expected) <= 4.0 * g.std_error[0]);
}

TEST_CASE("kernel is symmetric by construction with non-negative diagonal") {
    ArchitectureSpec spec = relu_net(2, 30, 2, 0.5, 0.4);
    const InputSet inputs = two_points_2d();
    Kernel k = estimate_kernel(spec, inputs, 50000, RngStream(33), 2);
    CHECK(k.values(0, 1) == k.values(1, 0));
    CHECK(k.values(0, 0) >= -k.std_error(0, 0));
    CHECK(k.values(1, 1) >= -k.std_error(1, 1));
}

TEST_CASE("gauss-net kernel at moderate width matches a wider reference") {
    const InputSet inputs = two_points_2d();
    Kernel k_small = estimate_kernel(gauss_net(2, 1000, 1, 1.0, 1.0), inputs, 60000,
                                     RngStream(34), 2);
    Kernel k_ref = estimate_kernel(gauss_net(2, 10000, 1, 1.0, 1.0), inputs, 60000,
                                   RngStream(35), 2);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
            const double err = std::hypot(k_small.std_error(a, b), k_ref.std_error(a, b));
            CHECK(std::fabs(k_small.values(a, b) - k_ref.values(a, b)) <= 4.0 * err);
        }
}

TEST_CASE("wick pairings: counts follow the double factorial") {
    CHECK(pair_partitions(2).size() == 1);
    CHECK(pair_partitions(4).size() == 3);
    CHECK(pair_partitions(6).size() == 15);
    CHECK(pair_partitions(8).size() == 105);
    CHECK(pair_partitions(6).size() == matchings_by_bruteforce(6));
    CHECK(pair_partitions(8).size() == matchings_by_bruteforce(8));
    CHECK_THROWS_AS(pair_partitions(3), std::invalid_argument);
}

TEST_CASE("wick order-2 tensor is delta_{ij} K(x1,x2)") {
    Kernel k;
    k.inputs = two_points_2d();
    k.values = RMatrix(2, 2);
    k.values(0, 0) = 1.2;
    k.values(0, 1) = 0.4;
    k.values(1, 0) = 0.4;
    k.values(1, 1) = 0.9;
    k.std_error = RMatrix(2, 2);
    const std::vector<std::size_t> pts{0, 1};
    RTensor w = wick_correlator(k, pts, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(w.at({i, j}) == (i == j ? 0.4 : 0.0));

    // order 4 has exactly the three pairing terms
    const std::vector<std::size_t> pts4{0, 0, 1, 1};
    RTensor w4 = wick_correlator(k, pts4, 2);
    // element (0,0,1,1): (12)(34) -> K00 K11; (13)(24),(14)(23) need index
    // coincidences that fail here.
    CHECK(w4.at({0, 0, 1, 1}) == doctest::Approx(1.2 * 0.9));
    // element (0,0,0,0): all three pairings contribute
    CHECK(w4.at({0, 0, 0, 0}) == doctest::Approx(1.2 * 0.9 + 2.0 * 0.4 * 0.4));
}

TEST_CASE("connected 4-pt of exact GP draws vanishes") {
    Kernel k;
    k.inputs = two_points_2d();
    k.values = RMatrix(2, 2);
    k.values(0, 0) = 1.0;
    k.values(0, 1) = 0.35;
    k.values(1, 0) = 0.35;
    k.values(1, 1) = 0.8;
    k.std_error = RMatrix(2, 2);

    const std::vector<Slot> slots{{0, false}, {0, false}, {1, false}, {1, false}};
    auto g4 = estimate_gp_correlator(k, 3, slots, 200000, RngStream(36));
    const std::vector<std::size_t> pts{0, 0, 1, 1};
    RTensor wick = wick_correlator(k, pts, 3);
    for (std::size_t i = 0; i < g4.mean.size(); ++i)
        CHECK(std::fabs(g4.mean[i] - wick[i]) <= 4.0 * g4.std_error[i]);

    // cumulant subtraction against the exact kernel says the same thing
    RTensor kappa = connected_4pt(g4, [&](std::size_t a, std::size_t i, std::size_t b,
                                          std::size_t j) {
        return i == j ? k.values(a, b) : 0.0;
    });
    for (std::size_t i = 0; i < kappa.size(); ++i)
        CHECK(std::fabs(kappa[i]) <= 4.0 * g4.std_error[i]);
}

TEST_CASE("connected 2-pt subtracts a broken mean") {
    // f_i = W_ij x_j with E[W] = mu: kappa2 = sigma^2 delta_ij (x.x')
    const double mu = 0.2, sigma = 0.8;
    ArchitectureSpec spec = linear_net(2, 2, mu, sigma);
    const InputSet inputs = two_points_2d();
    const std::vector<Slot> slots{{0, false}, {1, false}};
    auto g2 = estimate_correlator(spec, inputs, slots, 400000, RngStream(49), 2);
    auto one_pt = [&](std::size_t p, std::size_t) {
        return mu * (inputs.points[p][0] + inputs.points[p][1]);
    };
    RTensor kappa = connected_2pt(g2, one_pt);
    double dot = 0.0;
    for (std::size_t j = 0; j < 2; ++j) dot += inputs.points[0][j] * inputs.points[1][j];
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const double expected = i == j ? sigma * sigma * dot : 0.0;
            CHECK(std::fabs(kappa.at({i, j}) - expected) <=
                  4.0 * g2.std_error.at({i, j}));
        }
}

TEST_CASE("gp limit: wide relu net is Wick-consistent, width 1 is not") {
    const InputSet inputs = two_points_2d();
    auto family = [](std::size_t n) {
        return relu_net(2, n, 3, 0.7, 1.0 / std::sqrt(static_cast<double>(n)));
    };
    const std::vector<std::size_t> widths{1, 1000};
    GpLimitReport report = gp_limit_check(family, inputs, widths, 100000, 50000,
                                          RngStream(37), 2);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].frac_within_4sigma < 1.0);   // width 1: violations
    CHECK(report.rows[0].max_sigma > 4.0);
    CHECK(report.rows[1].frac_within_4sigma >= 0.95);  // wide: Wick holds
    CHECK(report.rows[1].max_sigma < report.rows[0].max_sigma);
}

TEST_CASE("perturbative 2-pt: lambda = 0 returns the GP kernel unchanged") {
    Kernel hidden;
    hidden.inputs = two_points_2d();
    hidden.values = RMatrix(2, 2);
    hidden.values(0, 0) = 0.5;
    hidden.values(0, 1) = 0.2;
    hidden.values(1, 0) = 0.2;
    hidden.values(1, 1) = 0.7;
    hidden.std_error = RMatrix(2, 2);
    const double sigma = 1.3;
    PerturbativeKernel out = perturbative_ngp_2pt(sigma, 0.0, hidden, 4, 3);
    CHECK(out.coefficient == sigma * sigma);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b)
            CHECK(out.kernel.values(a, b) == 4.0 * sigma * sigma * hidden.values(a, b));
    CHECK_THROWS_AS(perturbative_ngp_2pt(0.0, 0.1, hidden, 1, 1), std::invalid_argument);
}

TEST_CASE("perturbative O(lambda) coefficient matches the complex-step quadrature") {
    // Scalar case D = N = 1, sigma = 1: numeric d/dlambda at 0 of the
    // quadrature-computed moment ratio.
    Kernel unit;
    unit.inputs.dim = 1;
    unit.inputs.points = {{1.0}};
    unit.values = RMatrix(1, 1);
    unit.values(0, 0) = 1.0;
    unit.std_error = RMatrix(1, 1);
    PerturbativeKernel out = perturbative_ngp_2pt(1.0, 0.0, unit, 1, 1);

    const double h = 1e-100;
    const cplx shifted = quartic_moment_ratio(cplx(0.0, h));
    const double numeric = shifted.imag() / h;
    CHECK(std::fabs(numeric - out.order_lambda_coefficient) <=
          1e-10 * std::fabs(out.order_lambda_coefficient));
    // the closed-form value for one theta entry: sigma^6 (3 - 15) = -12
    CHECK(out.order_lambda_coefficient == doctest::Approx(-12.0));
}

TEST_CASE("perturbative scalar 2-pt matches the metropolis ensemble at lambda = 0.01") {
    const double sigma = 1.0, lambda = 0.01;
    Kernel unit;
    unit.inputs.dim = 1;
    unit.inputs.points = {{1.0}};
    unit.values = RMatrix(1, 1);
    unit.values(0, 0) = 1.0;
    unit.std_error = RMatrix(1, 1);
    PerturbativeKernel pred = perturbative_ngp_2pt(sigma, lambda, unit, 1, 1);
    CHECK_FALSE(pred.large_lambda_warning);

    ArchitectureSpec spec;
    spec.input_dim = 1;
    spec.output_dim = 1;
    LinearLayer l;
    l.in = 1;
    l.out = 1;
    l.weight_prior = {QuarticInvariantPrior{sigma, lambda}, {1, 1}};
    spec.layers = {l};
    InputSet inputs;
    inputs.dim = 1;
    inputs.points = {{1.0}};
    const std::vector<Slot> slots{{0, false}, {0, false}};
    auto g2 = estimate_correlator(spec, inputs, slots, 5000, RngStream(38), 1);
    CHECK(std::fabs(g2.mean[0] - pred.kernel.values(0, 0)) <= 4.0 * g2.std_error[0]);
}

TEST_CASE("perturbative index sums match a brute-force enumeration") {
    // Enumerate the excluded sums literally for a small theta matrix and
    // compare against the combinatorial counts inside perturbative_ngp_2pt.
    const double s2 = 1.0, m2 = s2, m4 = 3.0, m6 = 15.0;
    const std::size_t D = 2, N = 3, M = D * N;
    double numer_brute = 0.0;
    // one fixed (i1,j1) entry, say index 0
    for (std::size_t ab = 0; ab < M; ++ab)
        for (std::size_t cd = 0; cd < M; ++cd) {
            if (ab == cd && ab == 0)
                numer_brute += m6;
            else if (ab == cd)
                numer_brute += m2 * m4;
            else if (ab == 0 || cd == 0)
                numer_brute += m4 * m2;
            else
                numer_brute += m2 * m2 * m2;
        }
    double denom_brute = 0.0;
    for (std::size_t ab = 0; ab < M; ++ab)
        for (std::size_t cd = 0; cd < M; ++cd)
            denom_brute += ab == cd ? m4 : m2 * m2;

    Kernel unit;
    unit.inputs.dim = 1;
    unit.inputs.points = {{1.0}};
    unit.values = RMatrix(1, 1);
    unit.values(0, 0) = 1.0;
    unit.std_error = RMatrix(1, 1);
    const double lambda = 1e-3;
    PerturbativeKernel out = perturbative_ngp_2pt(1.0, lambda, unit, N, D);
    const double expected = (m2 - lambda * numer_brute) / (1.0 - lambda * denom_brute);
    CHECK(out.coefficient == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ward sum vanishes for the SO(2)-invariant linear ensemble") {
    ArchitectureSpec spec = linear_net(2, 2, 0.0, 1.0);
    const InputSet inputs = two_points_2d();
    RMatrix gen(2, 2);
    gen(0, 1) = -1.0;
    gen(1, 0) = 1.0;
    auto sum = ward_identity_sum(spec, inputs, gen, 200000, RngStream(39), 2);
    for (std::size_t i = 0; i < sum.mean.size(); ++i)
        CHECK(std::fabs(sum.mean[i]) <= 4.0 * sum.std_error[i]);
}

TEST_CASE("ward sum equals the index algebra on the measured 2-pt function") {
    // Broken ensemble so both sides are nonzero.
    ArchitectureSpec spec = linear_net(2, 2, 0.1, 1.0);
    const InputSet inputs = two_points_2d();
    RMatrix gen(2, 2);
    gen(0, 1) = -1.0;
    gen(1, 0) = 1.0;
    auto ward = ward_identity_sum(spec, inputs, gen, 300000, RngStream(40), 2);

    const std::vector<Slot> slots{{0, false}, {1, false}};
    auto g2 = estimate_correlator(spec, inputs, slots, 300000, RngStream(41), 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            // (T G)_ij + (G T^T)_ij with T the plane generator
            double expected = 0.0, var = 0.0;
            for (std::size_t p = 0; p < 2; ++p) {
                if (gen(i, p) != 0.0) {
                    expected += gen(i, p) * g2.mean.at({p, j});
                    var += g2.std_error.at({p, j}) * g2.std_error.at({p, j});
                }
                if (gen(j, p) != 0.0) {
                    expected += gen(j, p) * g2.mean.at({i, p});
                    var += g2.std_error.at({i, p}) * g2.std_error.at({i, p});
                }
            }
            const double mutual =
                std::sqrt(var + ward.std_error.at({i, j}) * ward.std_error.at({i, j}));
            CHECK(std::fabs(ward.mean.at({i, j}) - expected) <= 4.0 * mutual);
        }
}

TEST_CASE("ward sum detects the broken one-point function") {
    ArchitectureSpec spec = linear_net(2, 2, 0.1, 1.0);
    InputSet one;
    one.dim = 2;
    one.points = {{0.3, 0.5}};
    RMatrix gen(2, 2);
    gen(0, 1) = -1.0;
    gen(1, 0) = 1.0;
    auto sum = ward_identity_sum(spec, one, gen, 200000, RngStream(42), 2);
    // mean-formula oracle: G1_i = mu_W sum_j x_j = 0.08; T G1 = (-0.08, 0.08)
    const double expected = 0.1 * (0.3 + 0.5);
    CHECK(std::fabs(sum.mean[0] + expected) <= 4.0 * sum.std_error[0]);
    CHECK(std::fabs(sum.mean[1] - expected) <= 4.0 * sum.std_error[1]);
    bool breaks = std::fabs(sum.mean[0]) > 4.0 * sum.std_error[0] ||
                  std::fabs(sum.mean[1]) > 4.0 * sum.std_error[1];
    CHECK(breaks);
    CHECK_THROWS_AS(ward_identity_sum(spec, one, RMatrix(3, 3), 100, RngStream(1), 1),
                    std::invalid_argument);
}

TEST_CASE("estimator determinism: same seed and worker count, bitwise equal") {
    ArchitectureSpec spec = relu_net(2, 10, 2, 0.6, 0.5);
    const InputSet inputs = two_points_2d();
    const std::vector<Slot> slots{{0, false}, {1, false}};
    auto a = estimate_correlator(spec, inputs, slots, 20000, RngStream(43, 5), 2);
    auto b = estimate_correlator(spec, inputs, slots, 20000, RngStream(43, 5), 2);
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        CHECK(a.mean[i] == b.mean[i]);
        CHECK(a.std_error[i] == b.std_error[i]);
    }
}

TEST_CASE("slot permutation permutes the estimator axes exactly") {
    ArchitectureSpec spec = relu_net(2, 10, 3, 0.6, 0.5);
    const InputSet inputs = two_points_2d();
    const std::vector<Slot> ab{{0, false}, {1, false}};
    const std::vector<Slot> ba{{1, false}, {0, false}};
    auto g_ab = estimate_correlator(spec, inputs, ab, 5000, RngStream(44), 1);
    auto g_ba = estimate_correlator(spec, inputs, ba, 5000, RngStream(44), 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(g_ab.mean.at({i, j}) == g_ba.mean.at({j, i}));
}

TEST_CASE("stderr scales as one over root samples") {
    ArchitectureSpec spec = relu_net(2, 16, 2, 0.6, 0.5);
    const InputSet inputs = two_points_2d();
    const std::vector<Slot> slots{{0, false}, {1, false}};
    auto small = estimate_correlator(spec, inputs, slots, 40000, RngStream(45), 2);
    auto big = estimate_correlator(spec, inputs, slots, 80000, RngStream(46), 2);
    std::vector<double> ratios;
    for (std::size_t i = 0; i < small.mean.size(); ++i)
        ratios.push_back(small.std_error[i] / big.std_error[i]);
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    const double median = ratios[ratios.size() / 2];
    CHECK(median > std::sqrt(2.0) * 0.9);
    CHECK(median < std::sqrt(2.0) * 1.1);
}

TEST_CASE("complex estimator honors conjugation slots") {
    const double sigma = 0.7;
    ArchitectureSpec spec = complex_output_net(2, 4, 2, 0.8, sigma);
    const InputSet inputs = two_points_2d();

    // balanced f f-dagger at equal points: diagonal = 2 sigma^2 E[|g|^2] > 0
    const std::vector<Slot> balanced{{0, false}, {0, true}};
    auto g_bal = estimate_correlator_complex(spec, inputs, balanced, 100000, RngStream(47), 2);
    CHECK(g_bal.mean.at({0, 0}).real() > 10.0 * g_bal.std_error.at({0, 0}));
    CHECK(std::fabs(g_bal.mean.at({0, 0}).imag()) <= 4.0 * g_bal.std_error.at({0, 0}));

    // unbalanced f f vanishes
    const std::vector<Slot> unbalanced{{0, false}, {0, false}};
    auto g_unb = estimate_correlator_complex(spec, inputs, unbalanced, 100000, RngStream(48), 2);
    for (std::size_t i = 0; i < g_unb.mean.size(); ++i)
        CHECK(std::abs(g_unb.mean[i]) <= 4.0 * g_unb.std_error[i]);
}

TEST_CASE("exceptions inside worker threads reach the caller") {
    // uniform-circle weights on a linear layer throw at the first draw,
    // which happens on a worker thread
    ArchitectureSpec spec;
    spec.input_dim = 2;
    spec.output_dim = 2;
    LinearLayer l;
    l.in = 2;
    l.out = 2;
    l.weight_prior = {UniformCirclePrior{}, {2, 2}};
    spec.layers = {l};
    const InputSet inputs = two_points_2d();
    const std::vector<Slot> slots{{0, false}};
    CHECK_THROWS_AS(estimate_correlator(spec, inputs, slots, 1000, RngStream(1), 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_kernel(spec, inputs, 1000, RngStream(1), 2),
                    std::invalid_argument);
}

TEST_CASE("estimator input validation") {
    ArchitectureSpec spec = relu_net(2, 4, 2, 0.6, 0.5);
    const InputSet inputs = two_points_2d();
    const std::vector<Slot> slots{{0, false}};
    CHECK_THROWS_AS(estimate_correlator(spec, inputs, slots, 1, RngStream(1), 1),
                    std::invalid_argument);
    const std::vector<Slot> bad_slot{{7, false}};
    CHECK_THROWS_AS(estimate_correlator(spec, inputs, bad_slot, 100, RngStream(1), 1),
                    std::invalid_argument);
    InputSet wrong_dim;
    wrong_dim.dim = 3;
    wrong_dim.points = {{1.0, 2.0, 3.0}};
    CHECK_THROWS_AS(estimate_correlator(spec, wrong_dim, slots, 100, RngStream(1), 1),
                    std::invalid_argument);
}
