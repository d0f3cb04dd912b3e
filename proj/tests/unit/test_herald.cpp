#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "paintbrush/herald.hpp"

using namespace paintbrush;

namespace {

Mat annihilation(int n) {
    Mat a = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(double(k));
    return a;
}

Scenario cat_spin_scenario() {
    Scenario s;
    s.preset = "cat-spin";
    s.system = SpinModel{30, 1.0};
    s.cavity = CavityModel{1.0, 0.0, 10};
    return s;
}

}  // namespace

TEST(TargetCat, CoincidentBranches) {
    const SpinModel s{6, 1.0};
    const Vec t = target_cat(s, 0.0, 0.0, 1.3);
    const Vec expected = rotate_spin(s, coherent_spin_state(s, kPi / 2, 0), 1.3);
    EXPECT_NEAR(std::abs(t.dot(expected)), 1.0, 1e-14);
}

TEST(TargetCat, BranchOverlapN30) {
    const SpinModel s{30, 1.0};
    const Vec a = coherent_spin_state(s, kPi / 2, 0);
    const Vec b = rotate_spin(s, a, kTwoPi / 3);
    const double direct = std::abs(a.dot(b));
    // a sum of unit-size terms cancelling to 1e-9: roundoff sets the floor
    EXPECT_NEAR(direct, std::pow(std::cos(kPi / 3), 30), 1e-15);
    EXPECT_NEAR(direct, 9.3e-10, 0.05e-10);
    // normalization with the branch overlap
    const Vec t = target_cat(s, kTwoPi / 3, 0.4, 2.0);
    const Vec raw = rotate_spin(s, a, 2.0) + std::polar(1.0, 0.4) * rotate_spin(s, a, 2.0 - kTwoPi / 3);
    EXPECT_NEAR(raw.squaredNorm(), 2 + 2 * (std::polar(1.0, 0.4) * rotate_spin(s, a, 2.0).dot(rotate_spin(s, a, 2.0 - kTwoPi / 3))).real(), 1e-12);
    EXPECT_LT((t - raw / raw.norm()).norm(), 1e-12);
}

TEST(TargetCat, MechanicalLobeSeparation) {
    const MechModel m{0.125, 1.0, 140};
    const double phi = 3.0 / 8.0;
    const double t_d = 5.0;
    const Vec first = apply_u1(m, t_d, default_initial_state(m));
    const Vec second = apply_u1(m, t_d - phi / 0.125, default_initial_state(m));
    const Mat a = annihilation(m.dim());
    const cplx a1 = first.dot(a * first), a2 = second.dot(a * second);
    EXPECT_NEAR(std::abs(a1 - a2), 2 * 8 * std::sin(phi / 2), 1e-8);
    EXPECT_NEAR(std::abs(a1 - a2), 2.98, 0.01);
    EXPECT_NEAR(target_cat(m, phi, 0.0, t_d).norm(), 1.0, 1e-12);
}

TEST(Fidelity, BasicValues) {
    Vec a(3), b(3);
    a << 1.0, cplx(0, 1), 0.5;
    b << 0.0, 0.0, 0.0;
    EXPECT_NEAR(fidelity_eps(cplx(0.3, -2.0) * a, normalized(a)), 1.0, 1e-14);
    Vec o(3);
    o << cplx(0, 1), 1.0, 0.0;
    EXPECT_NEAR(fidelity_eps(a, normalized(o)), 0.0, 1e-14);
    EXPECT_THROW(fidelity_eps(b, normalized(a)), std::invalid_argument);
}

TEST(Fidelity, RotationOptimizerFindsAngle) {
    const SpinModel s{10, 1.0};
    const Vec t = normalized(coherent_spin_state(s, 1.0, 0.0) + coherent_spin_state(s, 2.0, 1.0));
    const Vec psi = 0.3 * rotate_spin(s, t, -0.77);
    const auto r = fidelity_eps_rotated(psi, t, s);
    EXPECT_NEAR(r.fidelity, 1.0, 1e-10);
    EXPECT_NEAR(std::remainder(r.angle + 0.77, kTwoPi), 0.0, 1e-5);
}

TEST(Fidelity, StrongDriveCatRegression) {
    SweepCell cell;
    cell.eps_over_omega = 1.0;
    const auto row = evaluate_cell(cat_spin_scenario(), cell);
    EXPECT_LT(row.f_eps, 1.0);
    EXPECT_NEAR(row.f_eps, 0.99704675137589682, 1e-6);
}

TEST(FidelityMin, Limits) {
    EXPECT_DOUBLE_EQ(fidelity_min(0.93, 2e-3, 2e-3, DetectorModel{1.0, 0.0}), 0.93);
    EXPECT_DOUBLE_EQ(fidelity_min(1.0, 2e-3, 2e-3, DetectorModel{0.5, 1e-3}), 0.5);
    EXPECT_DOUBLE_EQ(fidelity_min(0.8, 2e-3, 2e-3, DetectorModel{0.5, 1e-3}), 0.4);
}

TEST(FidelityMin, MonotoneInDarkCounts) {
    double prev = 1.0;
    for (double rd : {0.0, 1e-6, 1e-4, 1e-2, 1.0}) {
        const double f = fidelity_min(0.97, 1e-3, 1.1e-3, DetectorModel{0.6, rd});
        EXPECT_LE(f, prev);
        EXPECT_LE(f, 0.97);
        prev = f;
    }
    EXPECT_THROW(validate(DetectorModel{0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(validate(DetectorModel{1.0, -1.0}), std::invalid_argument);
}

TEST(Cooperativity, Eta50) {
    const auto l = cooperativity_limits({50.0, 30}, 1.0);
    EXPECT_NEAR(l.phi_c_max, std::sqrt(50.0 / 60.0), 1e-15);
    EXPECT_NEAR(l.phi_c_max, 0.9129, 1e-4);
    EXPECT_NEAR(l.cat_size_max, 5.0, 1e-15);
    EXPECT_FALSE(l.flagged);
    EXPECT_NEAR(l.kappa_n, 1.0 / l.phi_c_max, 1e-14);
    const auto over = cooperativity_limits({50.0, 30}, 1.0, 1.2);
    EXPECT_TRUE(over.flagged);
    EXPECT_NEAR(over.kappa_n, 1.0 / 1.2, 1e-15);
}

TEST(Cooperativity, LargeNScaling) {
    const auto small = cooperativity_limits({50.0, 10}, 1.0);
    const auto big = cooperativity_limits({50.0, 1000000}, 1.0);
    EXPECT_LT(big.phi_c_max, 0.01);
    EXPECT_DOUBLE_EQ(big.cat_size_max, small.cat_size_max);
}

TEST(Cooperativity, FromRates) {
    const auto in = CooperativityInput::from_rates(3.0, 0.1, 0.9, 7);
    EXPECT_NEAR(in.eta, 100.0, 1e-12);
    EXPECT_EQ(in.n_atoms, 7);
    EXPECT_THROW(cooperativity_limits({0.0, 7}, 1.0), std::invalid_argument);
}

TEST(Cooperativity, CavityModel) {
    const auto cc = cavity_from_cooperativity({50.0, 30}, 1.0);
    EXPECT_DOUBLE_EQ(cc.cavity.kappa_n(), 2.0);
    EXPECT_NEAR(cc.spin.omega_s / cc.cavity.kappa_n(), cc.limits.phi_c_max, 1e-15);
}

TEST(Sweep, OneCellEqualsDirectCall) {
    Scenario sc = cat_spin_scenario();
    sc.system = SpinModel{8, 1.0};
    sc.cavity.n_c_max = 3;
    SweepPlan plan;
    plan.eps_over_omega = {1e-3};
    plan.t_d = {3.0};
    const auto rows = sweep(sc, plan);
    ASSERT_EQ(rows.size(), 1u);
    const Vec x = coherent_spin_state(SpinModel{8, 1.0}, kPi / 2, 0);
    const auto d = cat_pulse(kTwoPi / 3, 0.0, 1.0, 1.0, 1e-3);
    const auto h = heralded_state(x, SpinModel{8, 1.0}, sc.cavity, d, 3.0);
    EXPECT_DOUBLE_EQ(rows[0].r_s, h.r_s);
    EXPECT_DOUBLE_EQ(rows[0].f_eps, fidelity_eps(h.psi1, target_cat(SpinModel{8, 1.0}, kTwoPi / 3, 0.0, 3.0)));
}

TEST(Sweep, RowMajorOrderOverDeclaredAxes) {
    SweepPlan plan;
    plan.eps_over_omega = {1, 2};
    plan.rd_over_qkappa = {10, 20};
    plan.order = {"rd_over_qkappa", "eps_over_omega"};
    const auto cells = plan.cells();
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_EQ(cells[0].rd_over_qkappa, 10);
    EXPECT_EQ(cells[0].eps_over_omega, 1);
    EXPECT_EQ(cells[1].rd_over_qkappa, 10);
    EXPECT_EQ(cells[1].eps_over_omega, 2);
    EXPECT_EQ(cells[2].rd_over_qkappa, 20);
    EXPECT_EQ(cells[2].eps_over_omega, 1);
}

TEST(Sweep, EmptyPlanHasNoRows) {
    SweepPlan plan;
    EXPECT_EQ(plan.size(), 0u);
    EXPECT_TRUE(sweep(cat_spin_scenario(), plan).empty());
}

TEST(Sweep, CellErrorsAreRecorded) {
    Scenario sc = cat_spin_scenario();
    sc.system = SpinModel{4, 1.0};
    sc.cavity = CavityModel{1.0, 0.0, 1};
    SweepPlan plan;
    plan.eps_over_omega = {1e-3, 3.0};
    const auto rows = sweep(sc, plan, 2);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].error.empty());
    EXPECT_FALSE(rows[1].error.empty());
    EXPECT_TRUE(rows[1].physics_failure);
    EXPECT_TRUE(std::isnan(rows[1].f_min));
}

TEST(Sweep, ParallelMatchesSerialAndCallbackInOrder) {
    Scenario sc = cat_spin_scenario();
    sc.system = SpinModel{6, 1.0};
    sc.cavity.n_c_max = 4;
    SweepPlan plan;
    plan.eps_over_omega = {1e-3, 1e-2, 0.1};
    plan.rd_over_qkappa = {0.0, 1e-3};
    std::vector<std::size_t> seen;
    const auto serial = sweep(sc, plan, 1);
    const auto parallel = sweep(sc, plan, 3, [&](std::size_t i, const SweepRow&) { seen.push_back(i); });
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(sweep_csv_line(serial[i]), sweep_csv_line(parallel[i]));
    EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
    EXPECT_EQ(seen.size(), serial.size());
}

TEST(Sweep, CsvSchema) {
    EXPECT_EQ(sweep_csv_header(), "preset,eps_over_omega,phi,t_d,eta,rd_over_qkappa,r_s,r_t,f_eps,f_min");
    SweepRow row;
    row.preset = "dicke";
    row.cell.eps_over_omega = 0.1;
    row.r_s = 1.0 / 3.0;
    const auto line = sweep_csv_line(row);
    EXPECT_NE(line.find("dicke,1.0000000000000001e-01,nan"), std::string::npos);
    EXPECT_NE(line.find("3.3333333333333331e-01"), std::string::npos);
}

TEST(Sweep, FminNeverAboveFeps) {
    Scenario sc = cat_spin_scenario();
    sc.system = SpinModel{8, 1.0};
    sc.cavity.n_c_max = 6;
    SweepPlan plan;
    plan.eps_over_omega = {0.01, 0.3, 1.0};
    plan.rd_over_qkappa = {0.0, 1e-4, 1e-2};
    for (const auto& row : sweep(sc, plan)) {
        EXPECT_LE(row.f_min, row.f_eps + 1e-15);
        EXPECT_LE(row.r_s, row.r_t * (1 + 1e-9));
        EXPECT_GE(row.f_min, 0.0);
    }
}

TEST(Sweep, OptimalDriveGrowsWithDarkCounts) {
    SweepPlan plan;
    for (int i = 0; i < 9; ++i) plan.eps_over_omega.push_back(std::pow(10.0, -2.0 + 0.25 * i));
    plan.rd_over_qkappa = {1e-5, 1e-4, 1e-3, 1e-2};
    const auto rows = sweep(cat_spin_scenario(), plan);
    std::vector<double> best_eps(4), best_f(4, -1.0);
    for (const auto& row : rows) {
        const auto j = std::find(plan.rd_over_qkappa.begin(), plan.rd_over_qkappa.end(), row.cell.rd_over_qkappa) -
                       plan.rd_over_qkappa.begin();
        if (row.f_min > best_f[j]) {
            best_f[j] = row.f_min;
            best_eps[j] = row.cell.eps_over_omega;
        }
    }
    for (int j = 1; j < 4; ++j) {
        EXPECT_GE(best_eps[j], best_eps[j - 1]);
        EXPECT_LT(best_f[j], best_f[j - 1]);
    }
    EXPECT_GT(best_eps[3], best_eps[0]);
}

TEST(Sweep, CatSizeCeilingAtEta50) {
    Scenario sc = cat_spin_scenario();
    sc.cavity.n_c_max = 6;
    SweepPlan plan;
    plan.eta = {50.0};
    plan.eps_over_omega = {0.03, 0.1, 0.2, 0.4};
    plan.rd_over_qkappa = {1e-5};
    // cat sizes Φ√N from the ceiling √(η/2) = 5 upwards
    const double n = 30.0;
    std::vector<double> peaks;
    for (double size : {5.0, 7.0, 9.0, 11.0}) {
        plan.phi = {size / std::sqrt(n)};
        plan.t_d = {};
        double peak = 0.0;
        for (const auto& row : sweep(sc, plan)) {
            ASSERT_TRUE(row.error.empty()) << row.error;
            peak = std::max(peak, row.f_min);
        }
        peaks.push_back(peak);
    }
    for (std::size_t i = 1; i < peaks.size(); ++i) EXPECT_LT(peaks[i], peaks[i - 1]);
}

TEST(MechQubit, HalvingDisplacementQuartersRate) {
    Scenario sc;
    sc.preset = "mech-qubit";
    sc.cavity = CavityModel{0.5, 0.0, 3};
    double rates[2];
    const double drive_times_a = 1e-4;  // ε A held fixed
    for (int i = 0; i < 2; ++i) {
        const double x1 = i == 0 ? 0.02 : 0.01;
        sc.system = MechModel{1.0, x1, 8};
        SweepCell cell;
        cell.eps_over_omega = drive_times_a / mech_qubit_normalization(x1);
        rates[i] = evaluate_cell(sc, cell).r_t;
    }
    EXPECT_NEAR(rates[0] / rates[1], 4.0 * std::exp(-0.0003), 4e-3);
}

TEST(Average, TrapezoidWeights) {
    DetectionSeries s;
    s.t_d = {0.0, 1.0, 2.0};
    s.r_s = {1.0, 1.0, 1.0};
    s.r_t = {1.0, 1.0, 1.0};
    s.f_eps = {0.0, 1.0, 0.0};
    const auto a = average_over_detection(s, DetectorModel{});
    EXPECT_DOUBLE_EQ(a.f_eps, 0.5);
    EXPECT_DOUBLE_EQ(a.f_min, 0.5);
}

TEST(Resolve, BadPresetsAndLevels) {
    Scenario sc;
    sc.preset = "nope";
    EXPECT_THROW(resolve_cell(sc, SweepCell{1e-3}), std::invalid_argument);
    sc.preset = "dicke";
    sc.system = SpinModel{4, 1.0};
    sc.level = 3;
    EXPECT_THROW(resolve_cell(sc, SweepCell{1e-3}), std::invalid_argument);
    sc.preset = "fock";
    EXPECT_THROW(resolve_cell(sc, SweepCell{1e-3}), std::invalid_argument);
}

TEST(Resolve, PhysicsErrorClassification) {
    EXPECT_TRUE(is_physics_error(CutoffError("x")));
    EXPECT_TRUE(is_physics_error(UnreachableTargetError("x")));
    EXPECT_FALSE(is_physics_error(std::invalid_argument("x")));
}
