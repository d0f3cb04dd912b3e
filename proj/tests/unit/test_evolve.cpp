#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "paintbrush/evolve.hpp"
#include "paintbrush/herald.hpp"
#include "paintbrush/pulses.hpp"

using namespace paintbrush;

namespace {

DriveWaveform constant_drive(cplx value, double t_end, int steps = 64) {
    DriveWaveform d;
    d.t_end = t_end;
    d.dt = t_end / steps;
    d.samples.assign(steps + 1, value);
    d.epsilon = std::abs(value);
    return d;
}

DriveWaveform dicke_drive(const SpinModel& s, const Vec& initial, int k, double kappa, double eps) {
    CoeffTarget t;
    t.coeffs.assign(s.dim(), 0.0);
    t.coeffs[k] = 1.0;
    return synthesize_from_coeffs(t, initial, s, kappa, eps);
}

// Plain RK4 for the classical cavity amplitude of one J_z sector, then free decay after the drive.
cplx sector_amplitude(const DriveWaveform& d, double detuning, double kappa_n, double t_end) {
    const int steps = 40000;
    const double driven = std::min(t_end, d.t_end);
    const double h = driven / steps;
    const cplx rate(0.5 * kappa_n, detuning);
    auto f = [&](double t, cplx a) { return -rate * a - cplx(0, 1) * d.envelope(t); };
    cplx a = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double t = i * h;
        const cplx k1 = f(t, a), k2 = f(t + h / 2, a + h / 2 * k1), k3 = f(t + h / 2, a + h / 2 * k2), k4 = f(t + h, a + h * k3);
        a += h / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return a * std::exp(-rate * (t_end - driven));
}

}  // namespace

TEST(NoJump, PhotonDecayNorm) {
    const SpinModel s{2, 1.0};
    const CavityModel c{0.7, 0.3, 3};
    const JointState start = JointState::product(coherent_spin_state(s, kPi / 2, 0), c.dim(), 1);
    const auto out = propagate_nojump(s, c, start, DriveWaveform{}, 0.0, 2.5);
    EXPECT_NEAR(out.norm_squared(), std::exp(-2.5), 1e-12);
}

TEST(NoJump, SpinSectorPhase) {
    const SpinModel s{2, 1.3};
    const CavityModel c{1.0, 0.0, 3};
    const JointState start = JointState::product(Vec::Unit(3, 2), c.dim(), 1);
    const auto out = propagate_nojump(s, c, start, DriveWaveform{}, 0.0, 0.9);
    const cplx amp = out.amplitudes()[1 * 3 + 2];
    EXPECT_NEAR(std::abs(amp - std::polar(std::exp(-0.45), -1.3 * 0.9)), 0.0, 1e-12);
}

TEST(NoJump, LosslessLimitConservesNorm) {
    const MechModel m{1.0, 0.6, 30};
    const CavityModel c{1e-14, 0.0, 2};
    JointState start(m.dim(), c.dim());
    start.block(1) = displaced_fock_state(m, 0) * std::sqrt(0.5);
    start.block(0) = coherent_state(m, cplx(0.3, 0.1)) * std::sqrt(0.5);
    const auto out = propagate_nojump(m, c, start, DriveWaveform{}, 0.0, 7.3);
    EXPECT_NEAR(out.norm_squared(), start.norm_squared(), 1e-8);
}

TEST(NoJump, ConstantDriveApproachesSteadyState) {
    const SpinModel s{1, 0.0};
    const CavityModel c{1.0, 0.0, 4};
    const cplx e0(2e-3, 1e-3);
    const auto d = constant_drive(e0, 30.0);
    const auto out = propagate_nojump(s, c, JointState::product(Vec::Unit(2, 0), c.dim()), d, 0.0, 30.0);
    // the no-jump state stays coherent: <1|psi>/<0|psi> is the field amplitude
    const cplx alpha = out.amplitudes()[2] / out.amplitudes()[0];
    const cplx steady = -cplx(0, 1) * e0 / 0.5;
    EXPECT_NEAR(std::abs(alpha - steady * (1.0 - std::exp(-15.0))), 0.0, 1e-10);
}

TEST(NoJump, MatchesDenseExponentialUnderConstantDrive) {
    const MechModel m{1.0, 0.5, 14};
    const CavityModel c{0.8, 0.2, 3};
    const cplx e0(0.05, -0.02);
    const auto d = constant_drive(e0, 3.0);
    Vec psi0 = Vec::Zero(m.dim());
    psi0[0] = 1.0;
    const auto out = propagate_nojump(m, c, JointState::product(psi0, c.dim()), d, 0.0, 3.0);
    const Mat h = build_h_eff(m, c, e0);
    const Vec ref = (cplx(0, -3.0) * h).exp() * JointState::product(psi0, c.dim()).amplitudes();
    EXPECT_LT((out.amplitudes() - ref).norm(), 1e-7 * ref.norm());
}

TEST(NoJump, StepUnderflowIsReported) {
    const SpinModel s{2, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    PropagationOptions opts;
    opts.tolerance = 1e-30;
    opts.max_halvings = 2;
    const auto d = constant_drive(0.05, 2.0);
    EXPECT_THROW(propagate_nojump(s, c, JointState::product(Vec::Unit(3, 0), c.dim()), d, 0.0, 2.0, opts),
                 StepUnderflowError);
}

TEST(NoJump, CutoffLeakageIsReported) {
    const SpinModel s{1, 1.0};
    const CavityModel c{1.0, 0.0, 1};
    const auto d = constant_drive(1.0, 2.0);
    EXPECT_THROW(propagate_nojump(s, c, JointState::product(Vec::Unit(2, 0), c.dim()), d, 0.0, 2.0), CutoffError);
}

TEST(Kick, ZeroIsIdentity) {
    const CavityModel c{1.0, 0.0, 3};
    const JointState js = JointState::product(Vec::Unit(2, 1), c.dim());
    EXPECT_LT((apply_delta_kick(c, js, 0.0).amplitudes() - js.amplitudes()).norm(), 1e-15);
}

TEST(Kick, SmallAreaOnePhotonAmplitude) {
    const CavityModel c{1.0, 0.0, 3};
    const cplx beta(1e-3, 2e-3);
    const auto out = apply_delta_kick(c, JointState::product(Vec::Unit(1, 0), c.dim()), beta);
    EXPECT_NEAR(std::abs(out.amplitudes()[1] - (-cplx(0, 1) * beta)), 0.0, 1e-8);
}

TEST(Kick, MeanPhotonNumberIsPoissonian) {
    const CavityModel c{1.0, 0.0, 14};
    const auto out = apply_delta_kick(c, JointState::product(Vec::Unit(1, 0), c.dim()), 0.2);
    double mean = 0.0;
    for (int n = 0; n < c.dim(); ++n) {
        mean += n * out.photon_population(n);
        const double poisson = std::exp(-0.04) * std::pow(0.04, n) / std::tgamma(n + 1.0);
        EXPECT_NEAR(out.photon_population(n), poisson, 1e-14);
    }
    EXPECT_NEAR(mean, 0.04, 1e-14);
}

TEST(Kick, LeakageAfterKick) {
    const CavityModel c{1.0, 0.0, 2};
    EXPECT_THROW(apply_delta_kick(c, JointState::product(Vec::Unit(1, 0), c.dim()), 1.0), CutoffError);
}

TEST(Herald, SingleKickSiftsToRotation) {
    const SpinModel s{6, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    DriveWaveform d;
    d.deltas = {{0.0, 1e-4}};
    const double t_d = 1.7;
    const auto r = heralded_state(x, s, c, d, t_d);
    const Vec expected = apply_u1(s, t_d, x) * (-cplx(0, 1) * 1e-4 * std::exp(-0.5 * t_d));
    EXPECT_LT((r.psi1 - expected).norm(), 1e-8 * expected.norm());
    EXPECT_NEAR(r.r_s, 1e-8 * std::exp(-t_d), 1e-15);
}

TEST(Herald, CatMatchesWeakOracle) {
    const SpinModel s{30, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    const auto d = cat_pulse(kTwoPi / 3, 0.0, 1.0, 1.0, 1e-3);
    for (double t_d : {2.2, 3.0, 5.0}) {
        const auto r = heralded_state(x, s, c, d, t_d);
        const Vec w = weak_drive_heralded_state(x, s, c, d, t_d);
        EXPECT_GT(fidelity_eps(r.psi1, normalized(w)), 1 - 1e-6);
        EXPECT_GT(fidelity_eps(r.psi1, target_cat(s, kTwoPi / 3, 0.0, t_d)), 0.999);
    }
}

TEST(Herald, DickeSuccessRateWeakLimit) {
    const SpinModel s{8, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    const double eps = 1e-3;
    const auto d = dicke_drive(s, x, 6, 1.0, eps);
    for (double t_d : {kTwoPi, kTwoPi + 2.0}) {
        const auto r = heralded_state(x, s, c, d, t_d);
        EXPECT_NEAR(r.r_s / (eps * eps * std::exp(-t_d)), 1.0, 1e-3);
    }
}

TEST(Herald, ManyDetectionTimesMatchSingleCalls) {
    const SpinModel s{4, 1.0};
    const CavityModel c{1.0, 0.2, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    const auto d = dicke_drive(s, x, 3, 1.2, 0.05);
    const std::vector<double> times{7.0, 2.0, kTwoPi};
    const auto many = heralded_states(x, s, c, d, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto one = heralded_state(x, s, c, d, times[i]);
        EXPECT_LT((many[i].psi1 - one.psi1).norm(), 1e-9 * one.psi1.norm());
    }
}

TEST(Herald, FinalTimeTooEarly) {
    const SpinModel s{2, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    EXPECT_THROW(heralded_state(Vec::Unit(3, 0), s, c, DriveWaveform{}, 1.0, 2.0), std::invalid_argument);
}

TEST(Weak, ZeroDriveGivesZero) {
    const SpinModel s{4, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    EXPECT_EQ(weak_drive_heralded_state(Vec::Unit(5, 2), s, c, DriveWaveform{}, 3.0).norm(), 0.0);
}

TEST(Weak, WeightDriveGivesScaledTarget) {
    const SpinModel s{6, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    WeightTarget w;
    for (int j = 0; j < 129; ++j) w.samples.push_back(1.0 + 0.4 * std::sin(kTwoPi * j / 128.0));
    const double eps = 1e-3;
    SynthesisOptions fine;
    fine.dt_max = 0.01;
    const auto d = synthesize_from_weight(w, 1.0, 1.0, eps, fine);
    const double t_d = d.t_end;
    const Vec psi = weak_drive_heralded_state(x, s, c, d, t_d, 1e-12);
    // unnormalized target ψ* = ∫ f(φ) U_1(φ) ψ0 dφ, by brute-force trapezoid
    Vec star = Vec::Zero(7);
    const int n = 20000;
    for (int j = 0; j <= n; ++j) {
        const double phi = kTwoPi * j / n;
        const double wgt = (j == 0 || j == n) ? 0.5 : 1.0;
        star += wgt * (kTwoPi / n) * w.value(phi) * rotate_spin(s, x, phi);
    }
    const Vec expected = (eps / 1.0) * std::exp(-0.5 * t_d) * star;
    // equal up to a global phase
    const cplx phase = expected.dot(psi) / expected.squaredNorm();
    EXPECT_NEAR(std::abs(phase), 1.0, 1e-6);
    EXPECT_LT((psi - phase * expected).norm(), 1e-6 * expected.norm());
}

TEST(Weak, DetectionTimeIndifference) {
    const SpinModel s{6, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    WeightTarget w;
    for (int j = 0; j < 129; ++j) w.samples.push_back(std::polar(1.0 + 0.3 * std::cos(kTwoPi * j / 128.0), 0.2 * j / 128.0));
    const auto d = synthesize_from_weight(w, 1.0, 1.0, 1e-3);
    const Vec ref = normalized(weak_drive_heralded_state(x, s, c, d, d.t_end, 1e-12));
    for (double extra : {0.3, 1.0, 2.5, 4.0}) {
        const Vec psi = weak_drive_heralded_state(x, s, c, d, d.t_end + extra, 1e-12);
        EXPECT_GT(fidelity_eps_rotated(psi, ref, s).fidelity, 1 - 1e-8);
    }
}

TEST(Weak, MechanicsApproachesSpinForSmallDisplacement) {
    const SpinModel s{8, 1.0};
    const MechModel m{1.0, 1e-3, 20};
    const CavityModel c{1.0, 0.0, 3};
    WeightTarget w;
    for (int j = 0; j < 129; ++j) w.samples.push_back(std::polar(1.0 + 0.3 * std::cos(kTwoPi * j / 128.0), 0.5 * j / 128.0));
    const auto d = synthesize_from_weight(w, 1.0, 1.0, 1e-3);
    const Vec xs = coherent_spin_state(s, kPi / 2, 0);
    const Vec ps = weak_drive_heralded_state(xs, s, c, d, d.t_end, 1e-12);
    const Vec pm = weak_drive_heralded_state(default_initial_state(m), m, c, d, d.t_end, 1e-12);
    const auto c0 = expansion_coefficients(m, default_initial_state(m), 3);
    const auto c1 = expansion_coefficients(m, pm, 3);
    for (int k = 0; k < 3; ++k) {
        const cplx spin_ratio = ps[4 + k] / xs[4 + k];
        const cplx mech_ratio = c1[k] / c0[k];
        EXPECT_NEAR(std::abs(mech_ratio / spin_ratio - 1.0), 0.0, 1e-4) << "k=" << k;
    }
}

TEST(Rates, ZeroDrive) {
    const SpinModel s{4, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    EXPECT_EQ(transmission_rate(Vec::Unit(5, 1), s, c, DriveWaveform{}, 2.0), 0.0);
}

TEST(Rates, MasterEquationMatchesSectorAmplitudes) {
    const SpinModel s{4, 1.0};
    const CavityModel c{1.0, 0.25, 4};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    const auto d = dicke_drive(s, x, 3, 1.25, 0.1);
    const std::vector<double> times{1.0, 3.0, kTwoPi, 8.0};
    const auto rates = transmission_rates(x, s, c, d, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        double oracle = 0.0;
        for (int k = 0; k < 5; ++k)
            oracle += std::norm(x[k]) * c.kappa * std::norm(sector_amplitude(d, s.m_of(k), c.kappa_n(), times[i]));
        EXPECT_NEAR(rates[i] / oracle, 1.0, 1e-6) << "t=" << times[i];
    }
    const auto sol = spin_sector_solution(x, s, c, d, times);
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(sol.r_t[i] / rates[i], 1.0, 1e-6);
}

TEST(Rates, MechanicsRateDecaysAfterDrive) {
    const MechModel m{1.0, 0.4, 24};
    const CavityModel c{1.0, 0.0, 3};
    const auto d = mech_qubit_pulse(m, 1.0, 0.01);
    const auto r = transmission_rates(default_initial_state(m), m, c, d, {d.t_end, d.t_end + 1.5});
    EXPECT_NEAR(r[1] / r[0], std::exp(-1.5), 1e-8);
}

TEST(Rates, SuccessRatioWeakLimit) {
    const SpinModel s{4, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    const auto r = success_ratio(x, s, c, dicke_drive(s, x, 3, 1.0, 1e-3));
    EXPECT_NEAR(r.ratio, 1.0, 1e-5);
    EXPECT_FALSE(r.flagged);
}

TEST(Rates, SuccessRatioMonotoneInDrive) {
    const SpinModel s{4, 1.0};
    const CavityModel c{1.0, 0.0, 6};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    double prev = 2.0;
    for (double eps : {0.01, 0.1, 0.2, 0.3, 0.5}) {
        const double r = success_ratio(x, s, c, dicke_drive(s, x, 3, 1.0, eps)).ratio;
        EXPECT_LE(r, prev + 1e-9) << "eps=" << eps;
        prev = r;
    }
}

TEST(Records, CompletenessSpin) {
    const SpinModel s{3, 1.0};
    const CavityModel c{1.0, 0.3, 6};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    const auto d = dicke_drive(s, x, 2, 1.3, 0.5);
    const auto p = click_record_probabilities(x, s, c, d, default_final_time(c, d, d.t_end), 8);
    EXPECT_NEAR(p.total, 1.0 - p.cutoff_leakage, 1e-4);
    EXPECT_GT(p.by_count[1], p.by_count[2]);
}

TEST(Records, CompletenessMechanics) {
    const MechModel m{1.0, 0.5, 12};
    const CavityModel c{4.0, 0.0, 4};
    const auto d = cat_pulse(2.0, 0.0, 1.0, 4.0, 0.5);
    const auto p = click_record_probabilities(default_initial_state(m), m, c, d, default_final_time(c, d, 2.0), 5);
    EXPECT_NEAR(p.total, 1.0 - p.cutoff_leakage, 1e-4);
}

TEST(Records, WeakDriveOneCountMatchesIntegratedRate) {
    const SpinModel s{2, 1.0};
    const CavityModel c{1.0, 0.0, 3};
    const Vec x = coherent_spin_state(s, kPi / 2, 0);
    DriveWaveform d;
    d.deltas = {{0.0, 1e-3}};
    const auto p = click_record_probabilities(x, s, c, d, 30.0, 3);
    EXPECT_NEAR(p.by_count[1], 1e-6, 1e-10);
    EXPECT_NEAR(p.by_count[0], 1.0 - 1e-6, 1e-10);
}

TEST(Trajectory, CsvColumns) {
    const SpinModel s{1, 1.0};
    const CavityModel c{1.0, 0.0, 1};
    const auto states = trajectory(Vec::Unit(2, 0), s, c, cat_pulse(1.0, 0.0, 1.0, 1.0, 1e-3), {0.0, 0.5});
    const auto path = std::filesystem::temp_directory_path() / "pb_traj.csv";
    write_trajectory_csv(path, s, {0.0, 0.5}, states);
    std::ifstream in(path);
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, "t,sector,re,im");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2 * 4);
    std::filesystem::remove(path);
    EXPECT_THROW(trajectory(Vec::Unit(2, 0), s, c, DriveWaveform{}, {1.0, 0.5}), std::invalid_argument);
}
