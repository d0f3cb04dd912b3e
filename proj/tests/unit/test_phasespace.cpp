#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "paintbrush/evolve.hpp"
#include "paintbrush/herald.hpp"
#include "paintbrush/phasespace.hpp"
#include "paintbrush/pulses.hpp"

using namespace paintbrush;

namespace {

Vec fock(int dim, int n) { return Vec::Unit(dim, n); }

}  // namespace

TEST(Wigner, VacuumPeak) {
    EXPECT_NEAR(wigner_at(fock(10, 0), 0.0, 0.0), 1.0 / kPi, 1e-14);
    EXPECT_NEAR(wigner_at(fock(10, 0), 1.0, -0.5), std::exp(-1.25) / kPi, 1e-14);
}

TEST(Wigner, OnePhononIsNegativeAtOrigin) {
    EXPECT_NEAR(wigner_at(fock(10, 1), 0.0, 0.0), -1.0 / kPi, 1e-14);
}

TEST(Wigner, RecursionMatchesDisplacedParity) {
    const MechModel m{1.0, 1.2, 30};
    const Vec psi = normalized(coherent_state(m, cplx(0.8, 0.3)) + coherent_state(m, cplx(-0.5, -0.9)));
    for (auto [x, p] : {std::pair{0.0, 0.0}, {0.7, -0.2}, {-1.1, 1.3}, {2.0, 0.4}})
        EXPECT_NEAR(wigner_at(psi, x, p), wigner_displaced_parity(psi, x, p), 1e-10);
}

TEST(Wigner, GridNormalizationAndAutoExpand) {
    const MechModel m{1.0, 2.0, 40};
    const Vec psi = displaced_fock_state(m, 2);
    WignerOptions o;
    o.half_width = 2.0;
    o.spacing = 0.05;
    const auto g = wigner(psi, o);
    EXPECT_GT(g.axis0.back(), 2.5);
    EXPECT_NEAR(g.integral(), 1.0, 1e-3);
    EXPECT_LT(negativity(g).min_value, 0.0);
    EXPECT_GT(negativity(g).negative_volume, 0.0);
    o.max_expansions = 0;
    EXPECT_THROW(wigner(psi, o), CutoffError);
}

TEST(Wigner, CatLobesAndFringes) {
    const MechModel m{0.125, 1.0, 130};
    const double phi = 3.0 / 8.0, t_d = 5.0;
    const Vec cat = target_cat(m, phi, 0.0, t_d);
    const Vec first = apply_u1(m, t_d, default_initial_state(m));
    const Vec second = apply_u1(m, t_d - phi / 0.125, default_initial_state(m));
    Mat a = Mat::Zero(m.dim(), m.dim());
    for (int k = 1; k < m.dim(); ++k) a(k - 1, k) = std::sqrt(double(k));
    const cplx a1 = first.dot(a * first), a2 = second.dot(a * second);
    const cplx mid = 0.5 * (a1 + a2);
    WignerOptions o;
    o.center_x = std::sqrt(2.0) * mid.real();
    o.center_p = std::sqrt(2.0) * mid.imag();
    o.half_width = 4.5;
    o.spacing = 0.05;
    const auto g = wigner(cat, o);
    const auto peaks = find_peaks(g, 0.25);
    ASSERT_GE(peaks.size(), 2u);
    const double dist = outer_peak_distance(peaks) / std::sqrt(2.0);
    // the fringes pull each maximum off its branch centre by a few hundredths
    EXPECT_NEAR(dist, 2 * 8 * std::sin(phi / 2), 0.1);
    // lobe maxima located independently on a fine displaced-parity stencil
    std::vector<Peak> oracle;
    for (const auto& pk : peaks) {
        Peak best{pk.a0, pk.a1, -1.0};
        for (int i = -6; i <= 6; ++i)
            for (int j = -6; j <= 6; ++j) {
                const double x = pk.a0 + 0.005 * i, p = pk.a1 + 0.005 * j;
                const double w = wigner_displaced_parity(cat, x, p);
                if (w > best.value) best = {x, p, w};
            }
        EXPECT_NEAR(best.a0, pk.a0, 0.025);  // half a grid cell
        EXPECT_NEAR(best.a1, pk.a1, 0.025);
        oracle.push_back(best);
    }
    EXPECT_NEAR(outer_peak_distance(oracle), outer_peak_distance(peaks), 0.02);
    EXPECT_LT(negativity(g).min_value, -0.01);
    EXPECT_NEAR(g.integral(), 1.0, 1e-3);
}

TEST(Wigner, PaintedFockRingIsRound) {
    const MechModel m{1.0, 0.5, 40};
    const CavityModel c{1.0, 0.0, 3};
    CoeffTarget t;
    t.basis = CoeffBasis::displaced_fock;
    t.coeffs = {0.0, 1.0};
    const Vec psi0 = default_initial_state(m);
    const auto d = synthesize_from_coeffs(t, psi0, m, 1.0, 1e-3);
    const Vec painted = normalized(weak_drive_heralded_state(psi0, m, c, d, d.t_end, 1e-12));
    const double cx = std::sqrt(2.0) * 0.5;
    EXPECT_LT(ring_angular_variation(painted, cx, 0.0, {0.3, 0.7, 1.0, 1.5, 2.0}), 1e-3);
    EXPECT_NEAR(wigner_at(painted, cx, 0.0), -1.0 / kPi, 1e-3);
}

TEST(Peaks, OuterDistance) {
    EXPECT_EQ(outer_peak_distance({}), 0.0);
    EXPECT_DOUBLE_EQ(outer_peak_distance({{0, 0, 2.0}, {1, 0, 1.0}, {-2, 0, 1.0}}), 3.0);
}

TEST(Husimi, CssPeak) {
    const SpinModel s{10, 1.0};
    const auto g = husimi_sphere(s, coherent_spin_state(s, kPi / 2, 0.0), 65, 128);
    const auto peaks = find_peaks(g, 0.5);
    ASSERT_EQ(peaks.size(), 1u);
    EXPECT_NEAR(peaks[0].a0, kPi / 2, 1e-9);
    EXPECT_NEAR(peaks[0].a1, 0.0, 1e-9);
    EXPECT_NEAR(g.values.maxCoeff(), 11.0 / (4 * kPi), 1e-12);
    EXPECT_GE(g.values.minCoeff(), 0.0);
    EXPECT_NEAR(g.integral(), 1.0, 1e-3);
}

TEST(Husimi, CatHasTwoEqualMaxima) {
    const SpinModel s{30, 1.0};
    const Vec cat = target_cat(s, kTwoPi / 3, 0.0, kTwoPi / 3);
    const auto g = husimi_sphere(s, cat, 65, 129);
    const auto peaks = find_peaks(g, 0.5);
    ASSERT_EQ(peaks.size(), 2u);
    EXPECT_NEAR(peaks[0].value / peaks[1].value, 1.0, 1e-2);
    const double dphi = std::abs(std::remainder(peaks[0].a1 - peaks[1].a1, kTwoPi));
    EXPECT_NEAR(dphi, kTwoPi / 3, 2e-2);
    EXPECT_NEAR(g.integral(), 1.0, 1e-3);
}

TEST(Husimi, DickeIsAzimuthallySymmetric) {
    const SpinModel s{12, 1.0};
    const auto g = husimi_sphere(s, Vec::Unit(13, 12), 64, 128);
    for (int i = 0; i < g.values.rows(); ++i)
        EXPECT_LT(g.values.row(i).maxCoeff() - g.values.row(i).minCoeff(), 1e-10);
}

TEST(Husimi, RotationShiftsAzimuth) {
    const SpinModel s{9, 1.0};
    const Vec psi = normalized(coherent_spin_state(s, 1.0, 0.4) + 0.5 * coherent_spin_state(s, 2.1, 2.0));
    const int n_phi = 128;
    const double alpha = kTwoPi * 5 / n_phi;
    const auto g0 = husimi_sphere(s, psi, 64, n_phi);
    const auto g1 = husimi_sphere(s, rotate_spin(s, psi, alpha), 64, n_phi);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < n_phi; ++j) EXPECT_NEAR(g1.values(i, (j + 5) % n_phi), g0.values(i, j), 1e-6);
}

TEST(Export, CsvAndSvg) {
    const auto g = wigner(fock(4, 0), WignerOptions{0, 0, 1.0, 0.5, false});
    const std::string csv = grid_csv(g);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,p,W");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 25);
    const auto dir = std::filesystem::temp_directory_path();
    write_grid_svg(dir / "pb_grid.svg", g);
    std::ifstream svg(dir / "pb_grid.svg");
    std::stringstream ss;
    ss << svg.rdbuf();
    EXPECT_NE(ss.str().find("<svg"), std::string::npos);
    EXPECT_NE(ss.str().find("</svg>"), std::string::npos);
    std::filesystem::remove(dir / "pb_grid.svg");

    const auto q = husimi_sphere(SpinModel{2, 1.0}, coherent_spin_state(SpinModel{2, 1.0}, 1.0, 0.0), 4, 8);
    EXPECT_EQ(grid_csv(q).substr(0, 12), "theta,phi,Q\n");
}
