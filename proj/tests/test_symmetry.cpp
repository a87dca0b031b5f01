#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nnsym/symmetry.hpp"

using namespace nnsym;

namespace {

InputSet two_points_3d() {
    InputSet in;
    in.dim = 3;
    in.points = {{0.2, 0.5, 0.9}, {0.7, 0.1, 0.4}};
    return in;
}

std::vector<CorrelatorTensor<double>> gauss_net_experiments(std::size_t width,
                                                            std::size_t order,
                                                            std::size_t experiments,
                                                            std::size_t samples,
                                                            std::uint64_t seed) {
    ArchitectureSpec spec = gauss_net(3, width, 3, 1.0, 1.0);
    const InputSet inputs = two_points_3d();
    std::vector<Slot> slots;
    for (std::size_t t = 0; t < order; ++t) slots.push_back(Slot{t % 2, false});
    std::vector<CorrelatorTensor<double>> out;
    RngStream root(seed, 9);
    for (std::size_t e = 0; e < experiments; ++e)
        out.push_back(estimate_correlator(spec, inputs, slots, samples, root.spawn(e), 2));
    return out;
}

}  // namespace

TEST_CASE("so(3) generators are the standard basis in the standard order") {
    const auto gens = so_generators(3);
    REQUIRE(gens.size() == 3);
    // T1: plane {2,3}
    CHECK(gens[0](1, 2) == -1.0);
    CHECK(gens[0](2, 1) == 1.0);
    CHECK(gens[0](0, 0) == 0.0);
    CHECK(gens[0](0, 1) == 0.0);
    // T2: plane {1,3}
    CHECK(gens[1](0, 2) == -1.0);
    CHECK(gens[1](2, 0) == 1.0);
    // T3: plane {1,2}
    CHECK(gens[2](0, 1) == -1.0);
    CHECK(gens[2](1, 0) == 1.0);
}

TEST_CASE("so(2) has the single plane generator") {
    const auto gens = so_generators(2);
    REQUIRE(gens.size() == 1);
    CHECK(gens[0](0, 1) == -1.0);
    CHECK(gens[0](1, 0) == 1.0);
    CHECK_THROWS_AS(so_generators(1), std::invalid_argument);
}

TEST_CASE("so(5) generators: count, skewness, linear independence") {
    const auto gens = so_generators(5);
    REQUIRE(gens.size() == 10);
    for (const auto& t : gens)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(t(i, j) == -t(j, i));
    // distinct plane pairs: dot products vanish pairwise
    for (std::size_t a = 0; a < gens.size(); ++a)
        for (std::size_t b = a + 1; b < gens.size(); ++b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j) dot += gens[a](i, j) * gens[b](i, j);
            CHECK(dot == 0.0);
        }
}

TEST_CASE("su(D) generators are Hermitian, traceless and complete") {
    for (std::size_t d : {2, 3}) {
        const auto gens = su_generators(d);
        CHECK(gens.size() == d * d - 1);
        for (const auto& h : gens) {
            cplx tr{};
            for (std::size_t i = 0; i < d; ++i) {
                tr += h(i, i);
                for (std::size_t j = 0; j < d; ++j)
                    CHECK(std::abs(h(i, j) - std::conj(h(j, i))) == 0.0);
            }
            CHECK(std::abs(tr) <= 1e-15);
        }
    }
}

TEST_CASE("zero coefficients give the identity element") {
    const std::vector<double> alphas(3, 0.0);
    GroupElement e = so_element(3, alphas);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(e.rotation(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("random SO(5) elements are special orthogonal") {
    GroupSpec group{GroupName::SO, 5, ActionSide::Output};
    RngStream rng(51);
    double worst_residual = 0.0;
    for (int i = 0; i < 1000; ++i) {
        GroupElement e = random_group_element(group, rng);
        worst_residual = std::max(worst_residual, e.residual);
        CHECK(std::fabs(determinant(e.rotation) - 1.0) <= 1e-10);
    }
    CHECK(worst_residual <= 1e-12);
}

TEST_CASE("random SU(3) elements are special unitary") {
    GroupSpec group{GroupName::SU, 3, ActionSide::Output};
    RngStream rng(52);
    for (int i = 0; i < 200; ++i) {
        GroupElement e = random_group_element(group, rng);
        CHECK(e.residual <= 1e-12);
        CHECK(std::abs(determinant(e.unitary) - cplx(1.0, 0.0)) <= 1e-10);
    }
}

TEST_CASE("transform_correlator: identity leaves everything unchanged") {
    auto tensors = gauss_net_experiments(10, 2, 2, 2000, 53);
    GroupElement id = GroupElement::identity(GroupSpec{GroupName::SO, 3, ActionSide::Output});
    auto out = transform_correlator(tensors[0], id);
    for (std::size_t i = 0; i < out.mean.size(); ++i) {
        CHECK(out.mean[i] == tensors[0].mean[i]);
        CHECK(out.std_error[i] == tensors[0].std_error[i]);
    }
}

TEST_CASE("transform_correlator rotates a rank-1 basis tensor") {
    CorrelatorTensor<double> g;
    g.slots = {Slot{0, false}};
    g.mean = RTensor({3});
    g.mean[0] = 1.0;
    g.std_error = RTensor({3});
    g.sample_count = 1;
    // quarter turn in the {1,2} plane: generator index 2 at D=3
    std::vector<double> alphas(3, 0.0);
    alphas[2] = std::numbers::pi / 2.0;
    GroupElement e = so_element(3, alphas);
    auto out = transform_correlator(g, e);
    CHECK(std::fabs(out.mean[0]) <= 1e-12);
    CHECK(std::fabs(out.mean[1] - 1.0) <= 1e-12);
    CHECK(std::fabs(out.mean[2]) <= 1e-12);
}

TEST_CASE("transform_correlator leaves delta K invariant") {
    CorrelatorTensor<double> g;
    g.slots = {Slot{0, false}, Slot{1, false}};
    g.mean = RTensor({3, 3});
    for (std::size_t i = 0; i < 3; ++i) g.mean.at({i, i}) = 0.8;
    g.std_error = RTensor({3, 3});
    RngStream rng(54);
    GroupElement e = random_group_element(GroupSpec{GroupName::SO, 3, ActionSide::Output}, rng);
    auto out = transform_correlator(g, e);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::fabs(out.mean.at({i, j}) - g.mean.at({i, j})) <= 1e-10);
}

TEST_CASE("transform_inputs: zero shift, plane rotation, norm preservation") {
    InputSet in = two_points_3d();
    auto same = transform_inputs(in, translation_element({0.0, 0.0, 0.0}));
    CHECK(same.points == in.points);

    // rotation by pi in the {1,2} plane maps e1 to -e1
    InputSet e1;
    e1.dim = 3;
    e1.points = {{1.0, 0.0, 0.0}};
    std::vector<double> alphas(3, 0.0);
    alphas[2] = std::numbers::pi;
    GroupElement rot = so_element(3, alphas, ActionSide::Input);
    auto out = transform_inputs(e1, rot);
    CHECK(std::fabs(out.points[0][0] + 1.0) <= 1e-12);
    CHECK(std::fabs(out.points[0][1]) <= 1e-12);

    RngStream rng(55);
    GroupElement r = random_group_element(GroupSpec{GroupName::SO, 3, ActionSide::Input}, rng);
    auto moved = transform_inputs(in, r);
    for (std::size_t p = 0; p < in.points.size(); ++p) {
        double n0 = 0.0, n1 = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            n0 += in.points[p][j] * in.points[p][j];
            n1 += moved.points[p][j] * moved.points[p][j];
        }
        CHECK(std::fabs(std::sqrt(n0) - std::sqrt(n1)) <= 1e-12);
    }
}

TEST_CASE("deviation_report on exact GP tensors is a report of zeros") {
    Kernel k;
    k.inputs = two_points_3d();
    k.values = RMatrix(2, 2);
    k.values(0, 0) = 1.0;
    k.values(0, 1) = 0.4;
    k.values(1, 0) = 0.4;
    k.values(1, 1) = 0.8;
    k.std_error = RMatrix(2, 2);
    const std::vector<std::size_t> pts{0, 1};
    CorrelatorTensor<double> exact;
    exact.slots = {Slot{0, false}, Slot{1, false}};
    exact.mean = wick_correlator(k, pts, 3);
    exact.std_error = RTensor({3, 3});
    exact.sample_count = 1;
    std::vector<CorrelatorTensor<double>> experiments(3, exact);
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    DeviationReport rep = deviation_report(experiments, group, 50, RngStream(56));
    CHECK(rep.mu_m <= 1e-10);
    CHECK(rep.sigma_m <= 1e-10);
    CHECK(rep.elementwise_mean.max_abs() <= 1e-10);
}

TEST_CASE("gauss-net 2-pt deviations sit inside the propagated band") {
    auto tensors = gauss_net_experiments(50, 2, 8, 40000, 57);
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    DeviationReport rep =
        deviation_report(tensors, group, 200, RngStream(58), DeviationOptions{1.0});
    CHECK(rep.mu_m + rep.sigma_m <= rep.delta_m);
    CHECK(rep.pass_fraction >= 0.95);
    CHECK(rep.delta_r <= 1e-13);
    CHECK(rep.delta_m > 0.0);
}

TEST_CASE("gauss-net odd-order correlators are invariant too") {
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    for (std::size_t order : {std::size_t{1}, std::size_t{3}}) {
        auto tensors = gauss_net_experiments(50, order, 8, 20000, 570 + order);
        DeviationReport rep = deviation_report(tensors, group, 100, RngStream(580 + order),
                                               DeviationOptions{3.0});
        CHECK(rep.mu_m <= 3.0 * rep.delta_m);
        CHECK(rep.pass_fraction >= 0.95);
    }
}

TEST_CASE("a symmetry-broken mean pushes the 1-pt deviation past the bound") {
    ArchitectureSpec spec = relu_net(3, 30, 3, 0.5, 1.0);
    // give the output weights a nonzero mean: SO(3) broken in all components
    auto& lin = std::get<LinearLayer>(spec.layers.back());
    lin.weight_prior.kind = GaussianPrior{0.1, 1.0 / std::sqrt(30.0)};

    const InputSet inputs = two_points_3d();
    const std::vector<Slot> slots{Slot{0, false}};
    std::vector<CorrelatorTensor<double>> tensors;
    RngStream root(59);
    for (std::size_t e = 0; e < 6; ++e)
        tensors.push_back(estimate_correlator(spec, inputs, slots, 20000, root.spawn(e), 2));
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    DeviationReport rep = deviation_report(tensors, group, 100, RngStream(60));
    CHECK(rep.mu_m > rep.delta_m);
    CHECK(rep.pass_fraction < 0.5);
}

TEST_CASE("deviation bound shrinks as sample counts grow") {
    auto coarse = gauss_net_experiments(20, 2, 6, 5000, 61);
    auto fine = gauss_net_experiments(20, 2, 6, 40000, 62);
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    DeviationReport rep_coarse = deviation_report(coarse, group, 100, RngStream(63));
    DeviationReport rep_fine = deviation_report(fine, group, 100, RngStream(63));
    CHECK(rep_fine.delta_m < rep_coarse.delta_m);
    CHECK(rep_fine.delta_m >= 0.0);
}

TEST_CASE("low-width artifact: wider nets deviate less at equal samples") {
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    auto narrow = gauss_net_experiments(5, 2, 6, 20000, 64);
    auto wide = gauss_net_experiments(500, 2, 6, 20000, 65);
    DeviationReport rep_narrow = deviation_report(narrow, group, 100, RngStream(66));
    DeviationReport rep_wide = deviation_report(wide, group, 100, RngStream(66));
    CHECK(rep_narrow.mu_m > rep_wide.mu_m);
}

TEST_CASE("SU balanced 2-pt function is invariant under random unitaries") {
    ArchitectureSpec spec = complex_output_net(3, 20, 3, 0.6, 0.5);
    const InputSet inputs = two_points_3d();
    const std::vector<Slot> balanced{Slot{0, false}, Slot{1, true}};
    std::vector<CorrelatorTensor<cplx>> tensors;
    RngStream root(67);
    for (std::size_t e = 0; e < 6; ++e)
        tensors.push_back(
            estimate_correlator_complex(spec, inputs, balanced, 30000, root.spawn(e), 2));
    GroupSpec group{GroupName::SU, 3, ActionSide::Output};
    DeviationReport rep = deviation_report(std::span<const CorrelatorTensor<cplx>>(tensors),
                                           group, 100, RngStream(68), DeviationOptions{3.0});
    CHECK(rep.mu_m <= 3.0 * rep.delta_m);
    CHECK(rep.pass_fraction >= 0.95);
}

TEST_CASE("translation: t-layer correlators agree between shifted input sets") {
    RngStream wseed(70);
    RMatrix t_weight(4, 3);
    for (double& v : t_weight.data()) v = 0.4 * wseed.normal();
    ArchitectureSpec spec = t_layer_net(t_weight, 20, 3, 1.0, 0.5);
    const InputSet inputs = two_points_3d();
    const std::vector<Slot> slots{Slot{0, false}, Slot{1, false}};

    auto ref = estimate_correlator(spec, inputs, slots, 60000, RngStream(71), 2);
    RngStream shift_rng(72);
    for (int rep = 0; rep < 2; ++rep) {
        std::vector<double> c(3);
        for (double& v : c) v = shift_rng.normal();
        auto moved_inputs = transform_inputs(inputs, translation_element(c));
        auto got = estimate_correlator(spec, moved_inputs, slots, 60000,
                                       RngStream(73 + rep), 2);
        for (std::size_t i = 0; i < ref.mean.size(); ++i) {
            const double err = std::hypot(ref.std_error[i], got.std_error[i]);
            CHECK(std::fabs(ref.mean[i] - got.mean[i]) <= 3.0 * err);
        }
    }
}

TEST_CASE("deviation_report validates its inputs") {
    auto tensors = gauss_net_experiments(5, 1, 1, 1000, 74);
    GroupSpec group{GroupName::SO, 3, ActionSide::Output};
    CHECK_THROWS_AS(deviation_report(tensors, group, 10, RngStream(1)),
                    std::invalid_argument);  // needs >= 2 experiments
    auto two = gauss_net_experiments(5, 1, 2, 1000, 75);
    CHECK_THROWS_AS(deviation_report(two, group, 0, RngStream(1)), std::invalid_argument);
    GroupSpec trans{GroupName::Translation, 3, ActionSide::Output};
    CHECK_THROWS_AS(deviation_report(two, trans, 10, RngStream(1)), std::invalid_argument);
}
