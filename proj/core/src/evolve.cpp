#include "paintbrush/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

namespace paintbrush {

namespace {

constexpr cplx kI{0.0, 1.0};

// e^{-i(β c† + β* c)} on cd photon levels
Mat photon_kick(int cd, cplx beta) {
    Mat gen = Mat::Zero(cd, cd);
    for (int n = 0; n + 1 < cd; ++n) {
        const double amp = std::sqrt(static_cast<double>(n + 1));
        gen(n + 1, n) = beta * amp;
        gen(n, n + 1) = std::conj(beta) * amp;
    }
    Eigen::SelfAdjointEigenSolver<Mat> solver(gen);
    Vec phases(cd);
    for (int k = 0; k < cd; ++k) phases[k] = std::polar(1.0, -solver.eigenvalues()[k]);
    return solver.eigenvectors() * phases.asDiagonal() * solver.eigenvectors().adjoint();
}

void apply_kick(JointState& state, cplx beta) {
    if (beta == cplx{}) return;
    const int cd = state.cavity_dim(), md = state.matter_dim();
    const Mat k = photon_kick(cd, beta);
    Vec out = Vec::Zero(state.amplitudes().size());
    for (int n = 0; n < cd; ++n)
        for (int np = 0; np < cd; ++np) out.segment(n * md, md) += k(n, np) * state.block(np);
    state.amplitudes() = std::move(out);
}

template <class State, class Rhs>
State rk4(const State& y0, double a, double b, int steps, Rhs& rhs) {
    State y = y0;
    State k(y0.rows(), y0.cols());
    State acc(y0.rows(), y0.cols());
    State tmp(y0.rows(), y0.cols());
    const double h = (b - a) / steps;
    for (int i = 0; i < steps; ++i) {
        const double t = a + i * h;
        rhs(t, y, k);
        acc = k;
        tmp = y + (0.5 * h) * k;
        rhs(t + 0.5 * h, tmp, k);
        acc += 2.0 * k;
        tmp = y + (0.5 * h) * k;
        rhs(t + 0.5 * h, tmp, k);
        acc += 2.0 * k;
        tmp = y + h * k;
        rhs(t + h, tmp, k);
        acc += k;
        y += (h / 6.0) * acc;
    }
    return y;
}

// Sectors below this fraction of the whole state are held to an absolute floor instead;
// below it rounding from the neighbouring sectors dominates. Density blocks are
// quadratic in the amplitudes and sit on a higher floor.
constexpr double kAmplitudeFloor = 1e-12;
constexpr double kDensityFloor = 1e-9;

// Largest difference over `block`-sized tiles (photon sectors), each relative to its own
// size, so a weakly populated sector is resolved as well as the dominant one.
template <class State>
double block_error(const State& fine, const State& coarse, Eigen::Index block) {
    const bool pure = fine.cols() == 1;
    const double floor = (pure ? kAmplitudeFloor : kDensityFloor) * fine.norm();
    const Eigen::Index cb = pure ? 1 : block;
    double worst = 0.0;
    for (Eigen::Index r = 0; r < fine.rows(); r += block)
        for (Eigen::Index c = 0; c < fine.cols(); c += cb) {
            const double size = fine.block(r, c, block, cb).norm();
            const double diff = (fine.block(r, c, block, cb) - coarse.block(r, c, block, cb)).norm();
            worst = std::max(worst, diff / std::max(size, floor));
        }
    return worst;
}

// Halve the step until two resolutions agree sector by sector, then Richardson-extrapolate.
// Steps never straddle a break, so a piecewise-smooth envelope keeps full RK4 order.
template <class State, class Rhs>
State integrate_controlled(const State& y0, const std::vector<double>& breaks, double h0,
                           const PropagationOptions& options, Eigen::Index block, Rhs& rhs) {
    std::vector<int> steps;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
        steps.push_back(std::max(1, static_cast<int>(std::ceil((breaks[i + 1] - breaks[i]) / h0 - 1e-9))));
    const auto run = [&] {
        State y = y0;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i) y = rk4(y, breaks[i], breaks[i + 1], steps[i], rhs);
        return y;
    };
    State coarse = run();
    if (y0.norm() == 0.0) return coarse;
    for (int level = 0; level < options.max_halvings; ++level) {
        for (int& n : steps) n *= 2;
        State fine = run();
        if (block_error(fine, coarse, block) <= options.tolerance) {
            State out = fine + (fine - coarse) / 15.0;
            return out;
        }
        coarse = std::move(fine);
    }
    throw StepUnderflowError(fmt::format("no convergence on [{}, {}] after {} halvings", breaks.front(), breaks.back(),
                                         options.max_halvings));
}

// [a, b] split at the sample knots of the envelope that fall inside it.
std::vector<double> segment_breaks(const DriveWaveform& drive, double a, double b) {
    std::vector<double> out{a};
    if (drive.has_samples() && drive.dt > 0.0 && b > 0.0 && a < drive.t_end) {
        const auto first = static_cast<long>(std::floor(std::max(a, 0.0) / drive.dt)) + 1;
        const auto last = static_cast<long>(drive.samples.size()) - 1;
        for (long k = first; k <= last; ++k) {
            const double t = k * drive.dt;
            if (t >= b - 1e-12 * drive.dt) break;
            if (t > a + 1e-12 * drive.dt) out.push_back(t);
        }
    }
    out.push_back(b);
    return out;
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Cut points of [t0, t1]: the ends, interior atoms, and the edges of the sampled envelope.
std::vector<double> cut_points(const DriveWaveform& drive, double t0, double t1) {
    std::vector<double> cuts{t0};
    for (const auto& atom : drive.deltas)
        if (atom.t > t0 && atom.t < t1) cuts.push_back(atom.t);
    if (drive.has_samples()) {
        for (double edge : {0.0, drive.t_end})
            if (edge > t0 && edge < t1) cuts.push_back(edge);
    }
    cuts.push_back(t1);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(), near), cuts.end());
    return cuts;
}

// Calls kick(β) for every atom at cut i that the window admits.
template <class Kick>
void apply_atoms_at(const DriveWaveform& drive, const std::vector<double>& cuts, std::size_t i, AtomWindow window,
                    Kick&& kick) {
    const bool first = i == 0;
    const bool last = i + 1 == cuts.size();
    if (first && !window.include_start) return;
    if (last && !window.include_end) return;
    for (const auto& atom : drive.deltas)
        if (near(atom.t, cuts[i])) kick(atom.area);
}

// Kick or jump action on the cavity index of a joint matrix (rows grouped by photon number).
Mat apply_cavity_matrix(const Mat& cav, const Mat& in, int md) {
    Mat out = Mat::Zero(in.rows(), in.cols());
    const int cd = static_cast<int>(cav.rows());
    for (int n = 0; n < cd; ++n)
        for (int np = 0; np < cd; ++np)
            if (cav(n, np) != cplx{}) out.middleRows(n * md, md) += cav(n, np) * in.middleRows(np * md, md);
    return out;
}

}  // namespace

JointDynamics::JointDynamics(SystemModel system, CavityModel cavity, PropagationOptions options)
    : system_(std::move(system)), cavity_(cavity), options_(options) {
    validate(system_);
    validate(cavity_);
    md_ = paintbrush::matter_dim(system_);
    cd_ = cavity_.dim();
    diagonal_ = is_spin(system_);
    for (int n = 0; n < cd_; ++n) {
        if (diagonal_) {
            diag_.push_back(spin_sector_diagonal(std::get<SpinModel>(system_), n));
            offset_.push_back(0.0);
            matter_radius_ = std::max(matter_radius_, diag_.back().cwiseAbs().maxCoeff());
        } else {
            Mat h = sector_hamiltonian(system_, n);
            Eigen::SelfAdjointEigenSolver<Mat> solver(h);
            block_eval_.push_back(solver.eigenvalues());
            block_evec_.push_back(solver.eigenvectors());
            blocks_.push_back(std::move(h));
            const double lo = block_eval_.back().minCoeff();
            const double hi = block_eval_.back().maxCoeff();
            offset_.push_back(0.5 * (lo + hi));
            matter_radius_ = std::max(matter_radius_, 0.5 * (hi - lo));
        }
    }
}

double JointDynamics::spectral_radius(double drive_amplitude) const {
    return matter_radius_ + 0.5 * cavity_.kappa_n() * (cd_ - 1) + 2.0 * drive_amplitude * std::sqrt(static_cast<double>(cd_));
}

template <class T>
void JointDynamics::apply_blocks(const T& in, double tau, cplx envelope, bool framed, T& out) const {
    out.resize(in.rows(), in.cols());
    const double kn = cavity_.kappa_n();
    for (int n = 0; n < cd_; ++n) {
        auto o = out.middleRows(n * md_, md_);
        const auto x = in.middleRows(n * md_, md_);
        if (diagonal_) {
            o = x.array().colwise() * diag_[n].cast<cplx>().array();
        } else {
            o.noalias() = blocks_[n] * x;
        }
        o -= cplx(framed ? offset_[n] : 0.0, 0.5 * kn * n) * x;
        // Row n couples to n-1 through E sqrt(n) e^{i(c_n - c_{n-1}) tau}.
        if (envelope == cplx{}) continue;
        if (n > 0) {
            const cplx up = framed ? std::polar(1.0, (offset_[n] - offset_[n - 1]) * tau) : cplx(1.0);
            o += (envelope * up * std::sqrt(static_cast<double>(n))) * in.middleRows((n - 1) * md_, md_);
        }
        if (n + 1 < cd_) {
            const cplx up = framed ? std::polar(1.0, (offset_[n + 1] - offset_[n]) * tau) : cplx(1.0);
            o += (std::conj(envelope * up) * std::sqrt(static_cast<double>(n + 1))) * in.middleRows((n + 1) * md_, md_);
        }
    }
}

void JointDynamics::apply_h_eff(const Vec& in, cplx envelope, Vec& out) const { apply_blocks(in, 0.0, envelope, false, out); }
void JointDynamics::apply_h_eff(const Mat& in, cplx envelope, Mat& out) const { apply_blocks(in, 0.0, envelope, false, out); }
void JointDynamics::apply_h_frame(const Vec& in, double tau, cplx envelope, Vec& out) const {
    apply_blocks(in, tau, envelope, true, out);
}
void JointDynamics::apply_h_frame(const Mat& in, double tau, cplx envelope, Mat& out) const {
    apply_blocks(in, tau, envelope, true, out);
}

Mat JointDynamics::kick_matrix(cplx beta) const { return photon_kick(cd_, beta); }

void JointDynamics::kick(JointState& state, cplx beta) const { apply_kick(state, beta); }

void JointDynamics::jump(JointState& state, double rate) const {
    const double s = std::sqrt(rate);
    for (int n = 0; n + 1 < cd_; ++n) state.block(n) = s * std::sqrt(static_cast<double>(n + 1)) * state.block(n + 1);
    state.block(cd_ - 1).setZero();
}

void JointDynamics::check_leakage(const JointState& state) const {
    if (!options_.check_leakage) return;
    const double total = state.norm_squared();
    if (!(total > 0.0)) return;
    const double top = state.photon_population(cd_ - 1) / total;
    if (top > kCutoffTolerance) {
        throw CutoffError(fmt::format("photon cutoff n_c_max={} holds {:.3e} of the population", cavity_.n_c_max, top));
    }
    if (!diagonal_) {
        double edge = 0.0;
        for (int n = 0; n < cd_; ++n) edge += std::norm(state.block(n)[md_ - 1]);
        if (edge / total > kCutoffTolerance) {
            throw CutoffError(fmt::format("phonon cutoff n_ph_max={} holds {:.3e} of the population",
                                          std::get<MechModel>(system_).n_ph_max, edge / total));
        }
    }
}

void JointDynamics::free_evolve(Vec& amplitudes, double dt) const {
    const double kn = cavity_.kappa_n();
    for (int n = 0; n < cd_; ++n) {
        auto x = amplitudes.segment(n * md_, md_);
        const double decay = std::exp(-0.5 * kn * n * dt);
        if (diagonal_) {
            for (int k = 0; k < md_; ++k) x[k] *= std::polar(decay, -diag_[n][k] * dt);
        } else {
            Vec c = block_evec_[n].adjoint() * x;
            for (int k = 0; k < md_; ++k) c[k] *= std::polar(decay, -block_eval_[n][k] * dt);
            x = block_evec_[n] * c;
        }
    }
}

void JointDynamics::evolve_segment(Vec& psi, const DriveWaveform& drive, double a, double b) const {
    if (!(b > a)) return;
    if (drive.is_zero_on(a, b)) {
        free_evolve(psi, b - a);
        return;
    }
    auto rhs = [&](double t, const Vec& y, Vec& dy) {
        apply_h_frame(y, t - a, drive.envelope(t), dy);
        dy *= -kI;
    };
    double h0 = 0.5 / std::max(spectral_radius(drive.max_abs_sample()), 1e-12);
    if (drive.dt > 0.0) h0 = std::min(h0, drive.dt);
    psi = integrate_controlled(psi, segment_breaks(drive, a, b), h0, options_, md_, rhs);
    for (int n = 0; n < cd_; ++n) psi.segment(n * md_, md_) *= std::polar(1.0, -offset_[n] * (b - a));
}

JointState JointDynamics::propagate_nojump(const JointState& state, const DriveWaveform& drive, double t0, double t1,
                                           AtomWindow window) const {
    if (t1 < t0) throw std::invalid_argument("propagate_nojump needs t0 <= t1");
    if (state.matter_dim() != md_ || state.cavity_dim() != cd_) throw std::invalid_argument("state shape mismatch");
    JointState out = state;
    const auto cuts = cut_points(drive, t0, t1);
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        apply_atoms_at(drive, cuts, i, window, [&](cplx beta) { kick(out, beta); });
        if (i + 1 < cuts.size()) evolve_segment(out.amplitudes(), drive, cuts[i], cuts[i + 1]);
    }
    check_leakage(out);
    return out;
}

JointState propagate_nojump(const SystemModel& system, const CavityModel& cavity, const JointState& state,
                            const DriveWaveform& drive, double t0, double t1, const PropagationOptions& options) {
    return JointDynamics(system, cavity, options).propagate_nojump(state, drive, t0, t1);
}

JointState apply_delta_kick(const CavityModel& cavity, const JointState& state, cplx beta) {
    if (state.cavity_dim() != cavity.dim()) throw std::invalid_argument("state and cavity dimensions differ");
    JointState out = state;
    apply_kick(out, beta);
    const double total = out.norm_squared();
    if (total > 0.0 && out.photon_population(out.cavity_dim() - 1) / total > kCutoffTolerance)
        throw CutoffError("kick pushes population into the top photon level");
    return out;
}

double default_final_time(const CavityModel& cavity, const DriveWaveform& drive, double t_d) {
    double last_drive = drive.has_samples() ? drive.t_end : 0.0;
    for (const auto& atom : drive.deltas) last_drive = std::max(last_drive, atom.t);
    return std::max(t_d, last_drive) + 10.0 / cavity.kappa_n();
}

namespace {

HeraldedResult finish_herald(const JointDynamics& dyn, JointState state, const DriveWaveform& drive, double t_d,
                             double t_final) {
    dyn.jump(state, dyn.cavity().kappa);
    state = dyn.propagate_nojump(state, drive, t_d, t_final, {.include_start = false, .include_end = true});
    HeraldedResult result;
    result.t_d = t_d;
    result.psi1 = apply_u0(dyn.system(), -(t_final - t_d), Vec(state.block(0)));
    result.r_s = result.psi1.squaredNorm();
    return result;
}

void check_final_time(const CavityModel& cavity, double t_d, double t_final) {
    if (t_final < t_d + 8.0 / cavity.kappa_n() - 1e-12)
        throw std::invalid_argument("t_final must leave at least 8/κ_N after detection");
}

}  // namespace

HeraldedResult heralded_state(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                              const DriveWaveform& drive, double t_d, std::optional<double> t_final,
                              const PropagationOptions& options) {
    if (t_d < 0.0) throw std::invalid_argument("detection time must be non-negative");
    const double tf = t_final.value_or(default_final_time(cavity, drive, t_d));
    check_final_time(cavity, t_d, tf);
    const JointDynamics dyn(system, cavity, options);
    JointState state = JointState::product(initial, cavity.dim());
    state = dyn.propagate_nojump(state, drive, 0.0, t_d, {.include_start = true, .include_end = true});
    return finish_herald(dyn, std::move(state), drive, t_d, tf);
}

std::vector<HeraldedResult> heralded_states(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                                            const DriveWaveform& drive, const std::vector<double>& detection_times,
                                            const PropagationOptions& options) {
    std::vector<std::size_t> order(detection_times.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return detection_times[a] < detection_times[b]; });
    const JointDynamics dyn(system, cavity, options);
    std::vector<HeraldedResult> out(detection_times.size());
    JointState state = JointState::product(initial, cavity.dim());
    double t = 0.0;
    bool first = true;
    for (const auto idx : order) {
        const double t_d = detection_times[idx];
        if (t_d < 0.0) throw std::invalid_argument("detection time must be non-negative");
        state = dyn.propagate_nojump(state, drive, t, t_d, {.include_start = first, .include_end = true});
        first = false;
        t = t_d;
        out[idx] = finish_herald(dyn, state, drive, t_d, default_final_time(cavity, drive, t_d));
    }
    return out;
}

Vec weak_drive_heralded_state(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                              const DriveWaveform& drive, double t_d, double rel_tol) {
    validate(cavity);
    const U1Evaluator u1(system);
    const auto& lambda = u1.eigenvalues();
    const double kn = cavity.kappa_n();
    const Eigen::Index ne = lambda.size();

    // U_1(t_d - t') e^{-κ_N (t_d - t')/2} in the eigenbasis of H_1.
    const auto propagate_factor = [&](double tau, Vec& coeffs) {
        const double decay = std::exp(-0.5 * kn * tau);
        for (Eigen::Index k = 0; k < ne; ++k) coeffs[k] *= std::polar(decay, -lambda[k] * tau);
    };
    // U_0(t')|psi0> never changes for spins or for a Fock-state start.
    int support = 0;
    for (int k = 0; k < initial.size(); ++k)
        if (initial[k] != cplx{}) ++support;
    const bool static_start = is_spin(system) || support <= 1;
    const Vec static_coeffs = u1.to_eigen(initial);
    int fock_index = 0;
    for (int k = 0; k < initial.size(); ++k)
        if (initial[k] != cplx{}) fock_index = k;
    const double omega = rotation_rate(system);
    const auto start_coeffs = [&](double t) -> Vec {
        if (is_spin(system)) return static_coeffs;
        if (static_start) return static_coeffs * std::polar(1.0, -omega * fock_index * t);
        return u1.to_eigen(apply_u0(system, t, initial));
    };

    Vec acc = Vec::Zero(ne);
    for (const auto& atom : drive.deltas) {
        if (atom.t > t_d * (1.0 + 1e-12) + 1e-300) continue;
        Vec c = start_coeffs(atom.t);
        propagate_factor(t_d - atom.t, c);
        acc += atom.area * c;
    }

    const double span = drive.has_samples() ? std::min(t_d, drive.t_end) : 0.0;
    if (span > 0.0) {
        const auto integrand = [&](double t) -> Vec {
            const cplx e = drive.envelope(t);
            if (e == cplx{}) return Vec::Zero(ne);
            Vec c = start_coeffs(t);
            propagate_factor(t_d - t, c);
            return e * c;
        };
        int intervals = std::max(8, static_cast<int>(std::ceil(span / drive.dt)));
        double h = span / intervals;
        Vec trap = 0.5 * h * (integrand(0.0) + integrand(span));
        for (int j = 1; j < intervals; ++j) trap += h * integrand(j * h);
        Vec simpson_prev;
        bool converged = false;
        for (int level = 0; level < 24; ++level) {
            Vec mid = Vec::Zero(ne);
            for (int j = 0; j < intervals; ++j) mid += integrand((j + 0.5) * h);
            Vec refined = 0.5 * trap + 0.5 * h * mid;
            Vec simpson = (4.0 * refined - trap) / 3.0;
            trap = std::move(refined);
            intervals *= 2;
            h *= 0.5;
            if (level > 0 && (simpson - simpson_prev).norm() <= rel_tol * simpson.norm()) {
                simpson_prev = std::move(simpson);
                converged = true;
                break;
            }
            simpson_prev = std::move(simpson);
        }
        if (!converged) throw QuadratureError("weak-drive quadrature did not converge");
        acc += simpson_prev;
    }
    return -kI * std::sqrt(cavity.kappa) * u1.from_eigen(acc);
}

namespace {

// Density-matrix dynamics. With `hierarchy` the state holds ρ_0..ρ_K side by side and
// the jump term feeds ρ_{k-1} into ρ_k; otherwise it is the plain master equation.
class DensityDynamics {
  public:
    DensityDynamics(const JointDynamics& dyn, int blocks, bool hierarchy)
        : dyn_(dyn), blocks_(blocks), hierarchy_(hierarchy), dim_(dyn.matter_dim() * dyn.cavity_dim()) {}

    // Right-hand side in the offset-free frame, tau after it was attached.
    void rhs(double tau, const Mat& y, Mat& dy, cplx envelope) const {
        dyn_.apply_h_frame(y, tau, envelope, a_);
        dy.resize(y.rows(), y.cols());
        const int md = dyn_.matter_dim();
        const int cd = dyn_.cavity_dim();
        const double kn = dyn_.cavity().kappa_n();
        const auto& c = dyn_.block_offsets();
        for (int k = 0; k < blocks_; ++k) {
            auto d = dy.middleCols(k * dim_, dim_);
            d.noalias() = -kI * a_.middleCols(k * dim_, dim_);
            d.noalias() += kI * a_.middleCols(k * dim_, dim_).adjoint();
            // κ_N c ρ c†: (n, n') block fed by (n+1, n'+1).
            const int src = hierarchy_ ? k - 1 : k;
            if (src < 0) continue;
            for (int n = 0; n + 1 < cd; ++n)
                for (int np = 0; np + 1 < cd; ++np) {
                    const double phase = ((c[n] - c[n + 1]) - (c[np] - c[np + 1])) * tau;
                    d.block(n * md, np * md, md, md) +=
                        std::polar(kn * std::sqrt(static_cast<double>((n + 1) * (np + 1))), phase) *
                        y.block((n + 1) * md, src * dim_ + (np + 1) * md, md, md);
                }
        }
    }

    // Leaves the frame after tau: ρ_{nn'} picks up e^{-i(c_n - c_n') tau}.
    void unframe(Mat& y, double tau) const {
        const int md = dyn_.matter_dim();
        const int cd = dyn_.cavity_dim();
        const auto& c = dyn_.block_offsets();
        for (int k = 0; k < blocks_; ++k)
            for (int n = 0; n < cd; ++n)
                for (int np = 0; np < cd; ++np)
                    if (c[n] != c[np]) y.block(n * md, k * dim_ + np * md, md, md) *= std::polar(1.0, -(c[n] - c[np]) * tau);
    }

    void kick(Mat& y, cplx beta) const {
        const Mat km = dyn_.kick_matrix(beta);
        for (int k = 0; k < blocks_; ++k) {
            Mat half = apply_cavity_matrix(km, y.middleCols(k * dim_, dim_), dyn_.matter_dim());
            Mat adj = half.adjoint();
            y.middleCols(k * dim_, dim_) = apply_cavity_matrix(km, adj, dyn_.matter_dim());
        }
    }

    // Drive-free evolution of a diagonal (spin) system in closed form. For fixed matter
    // labels (k, k') and photon offset d = n' - n the equations close on the chain
    // n = n0, n0+1, ...: decay and phase on the diagonal, the jump feeding n+1 into n.
    void free_evolve(Mat& y, double dt) const {
        const int md = dyn_.matter_dim();
        const int cd = dyn_.cavity_dim();
        const double kn = dyn_.cavity().kappa_n();
        for (int d = -(cd - 1); d <= cd - 1; ++d) {
            const int n0 = std::max(0, -d);
            const int len = cd - std::max(0, d) - n0;
            const int size = len * blocks_;
            Mat gen(size, size);
            Vec v(size);
            for (int k = 0; k < md; ++k)
                for (int kp = 0; kp < md; ++kp) {
                    gen.setZero();
                    for (int b = 0; b < blocks_; ++b)
                        for (int i = 0; i < len; ++i) {
                            const int n = n0 + i;
                            const int np = n + d;
                            const double de = dyn_.block_diagonal(n)[k] - dyn_.block_diagonal(np)[kp];
                            gen(b * len + i, b * len + i) = cplx(-0.5 * kn * (n + np), -de);
                            const int src = hierarchy_ ? b - 1 : b;
                            if (i + 1 < len && src >= 0)
                                gen(b * len + i, src * len + i + 1) = kn * std::sqrt((n + 1.0) * (np + 1.0));
                        }
                    const Mat step = (gen * dt).exp();
                    for (int b = 0; b < blocks_; ++b)
                        for (int i = 0; i < len; ++i)
                            v[b * len + i] = y((n0 + i) * md + k, b * dim_ + (n0 + i + d) * md + kp);
                    v = step * v;
                    for (int b = 0; b < blocks_; ++b)
                        for (int i = 0; i < len; ++i)
                            y((n0 + i) * md + k, b * dim_ + (n0 + i + d) * md + kp) = v[b * len + i];
                }
        }
    }

    void propagate(Mat& y, const DriveWaveform& drive, double t0, double t1, AtomWindow window) const {
        const auto cuts = cut_points(drive, t0, t1);
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            apply_atoms_at(drive, cuts, i, window, [&](cplx beta) { kick(y, beta); });
            if (i + 1 == cuts.size() || !(cuts[i + 1] > cuts[i])) continue;
            if (dyn_.diagonal() && drive.is_zero_on(cuts[i], cuts[i + 1])) {
                free_evolve(y, cuts[i + 1] - cuts[i]);
                continue;
            }
            const double start = cuts[i];
            auto f = [&](double t, const Mat& state, Mat& d) { rhs(t - start, state, d, drive.envelope(t)); };
            double h0 = 0.25 / std::max(dyn_.spectral_radius(drive.max_abs_sample()), 1e-12);
            if (drive.dt > 0.0 && !drive.is_zero_on(cuts[i], cuts[i + 1])) h0 = std::min(h0, drive.dt);
            y = integrate_controlled(y, segment_breaks(drive, cuts[i], cuts[i + 1]), h0, dyn_.options(),
                                     dyn_.matter_dim(), f);
            unframe(y, cuts[i + 1] - start);
        }
    }

    int dim() const { return dim_; }

  private:
    const JointDynamics& dyn_;
    int blocks_;
    bool hierarchy_;
    int dim_;
    mutable Mat a_;
};

double trace_real(const Mat& rho) { return rho.trace().real(); }

double top_level_population(const Mat& rho, int md, int cd) {
    return rho.block((cd - 1) * md, (cd - 1) * md, md, md).trace().real();
}

}  // namespace

namespace {

// Time after which the drive stays off: the last atom or the end of the sampled part.
double drive_quiet_time(const DriveWaveform& drive) {
    double t = drive.has_samples() && !drive.is_zero_on(0.0, drive.t_end) ? drive.t_end : 0.0;
    for (const auto& atom : drive.deltas) t = std::max(t, atom.t);
    return t;
}

}  // namespace

std::vector<double> transmission_rates(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                                       const DriveWaveform& drive, const std::vector<double>& times,
                                       const PropagationOptions& options) {
    const JointDynamics dyn(system, cavity, options);
    const DensityDynamics dd(dyn, 1, false);
    const int md = dyn.matter_dim();
    const int cd = dyn.cavity_dim();
    const Vec psi0 = JointState::product(initial, cd).amplitudes();
    Mat rho = psi0 * psi0.adjoint();

    const auto photons = [&] {
        const double total = trace_real(rho);
        if (options.check_leakage && top_level_population(rho, md, cd) > kCutoffTolerance * total)
            throw CutoffError("photon cutoff reached in the master-equation evolution");
        double n_mean = 0.0;
        for (int n = 1; n < cd; ++n) n_mean += n * rho.block(n * md, n * md, md, md).trace().real();
        return n_mean;
    };

    // Once the drive is off, H commutes with c†c and <c†c> decays as e^{-κ_N t} exactly.
    const double quiet = drive_quiet_time(drive);
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
    std::vector<double> out(times.size());
    double t = 0.0;
    bool first = true;
    std::optional<double> quiet_photons;
    for (const auto idx : order) {
        if (times[idx] < 0.0) throw std::invalid_argument("rate time must be non-negative");
        if (times[idx] >= quiet) {
            if (!quiet_photons) {
                dd.propagate(rho, drive, t, quiet, {.include_start = first, .include_end = true});
                first = false;
                t = quiet;
                quiet_photons = photons();
            }
            out[idx] = cavity.kappa * *quiet_photons * std::exp(-cavity.kappa_n() * (times[idx] - quiet));
            continue;
        }
        dd.propagate(rho, drive, t, times[idx], {.include_start = first, .include_end = true});
        first = false;
        t = times[idx];
        out[idx] = cavity.kappa * photons();
    }
    return out;
}

double transmission_rate(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                         const DriveWaveform& drive, double t, const PropagationOptions& options) {
    return transmission_rates(initial, system, cavity, drive, {t}, options).front();
}

SpinSectorSolution spin_sector_solution(const Vec& initial, const SpinModel& spin, const CavityModel& cavity,
                                        const DriveWaveform& drive, const std::vector<double>& times) {
    validate(spin);
    validate(cavity);
    const double kn = cavity.kappa_n();
    double drive_end = drive.has_samples() ? drive.t_end : 0.0;
    for (const auto& atom : drive.deltas) drive_end = std::max(drive_end, atom.t);

    SpinSectorSolution sol;
    sol.times = times;
    sol.r_t.assign(times.size(), 0.0);
    sol.r_s.assign(times.size(), 0.0);
    sol.psi1.assign(times.size(), Vec::Zero(spin.dim()));

    std::vector<double> events(times.begin(), times.end());
    events.push_back(0.0);
    events.push_back(drive_end);
    if (drive.has_samples()) events.push_back(drive.t_end);
    for (const auto& atom : drive.deltas) events.push_back(atom.t);
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end(), near), events.end());
    for (const double t : times)
        if (t < 0.0) throw std::invalid_argument("detection time must be non-negative");

    for (int k = 0; k < spin.dim(); ++k) {
        if (initial[k] == cplx{}) continue;
        const cplx rate = cplx(0.5 * kn, spin.omega_s * spin.m_of(k));
        // y = (α, log λ): α' = -rate α - i E0, (log λ)' = -i E0* α.
        using Y = Eigen::Vector2cd;
        bool quiet = false;  // segment lies past the sampled drive; its end knot must not leak in
        auto f = [&](double t, const Y& y, Y& dy) {
            const cplx e = quiet ? cplx{} : drive.envelope(t);
            dy[0] = -rate * y[0] - kI * e;
            dy[1] = -kI * std::conj(e) * y[0];
        };
        Y y = Y::Zero();
        std::vector<cplx> alpha_at(times.size());
        const double h_max = std::min(drive.dt > 0.0 ? drive.dt / 4.0 : 1e300, 0.02 / std::abs(rate));
        for (std::size_t e = 0; e < events.size(); ++e) {
            // Atoms at an event act before anything is read off there.
            for (const auto& atom : drive.deltas) {
                if (!near(atom.t, events[e])) continue;
                const cplx gamma = -kI * atom.area;
                y[1] += -0.5 * std::norm(gamma) - std::conj(gamma) * y[0];
                y[0] += gamma;
            }
            for (std::size_t i = 0; i < times.size(); ++i)
                if (near(times[i], events[e])) alpha_at[i] = y[0];
            if (e + 1 == events.size()) break;
            const double a = events[e];
            const double b = events[e + 1];
            const int steps = std::max(1, static_cast<int>(std::ceil((b - a) / h_max)));
            quiet = !drive.has_samples() || a >= drive.t_end - 1e-12 * std::max(1.0, drive.t_end);
            y = rk4(y, a, b, steps, f);
        }
        // After the last event α decays freely and log λ no longer changes.
        const cplx log_lambda = y[1];
        const double weight = std::norm(initial[k]);
        for (std::size_t i = 0; i < times.size(); ++i) {
            sol.r_t[i] += weight * cavity.kappa * std::norm(alpha_at[i]);
            sol.psi1[i][k] = initial[k] * std::sqrt(cavity.kappa) * alpha_at[i] * std::exp(log_lambda);
        }
    }
    for (std::size_t i = 0; i < times.size(); ++i) sol.r_s[i] = sol.psi1[i].squaredNorm();
    return sol;
}

SuccessRatio success_ratio(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                           const DriveWaveform& drive, const PropagationOptions& options) {
    const double t = drive.t_end;
    SuccessRatio out;
    out.r_s = heralded_state(initial, system, cavity, drive, t, {}, options).r_s;
    out.r_t = transmission_rate(initial, system, cavity, drive, t, options);
    out.ratio = out.r_t > 0.0 ? out.r_s / out.r_t : 0.0;
    const double x = drive.epsilon / rotation_rate(system);
    out.expected = std::exp(-x * x);
    out.flagged = std::abs(x) <= 0.5 && std::abs(out.ratio / out.expected - 1.0) > 0.05;
    return out;
}

RecordProbabilities click_record_probabilities(const Vec& initial, const SystemModel& system,
                                               const CavityModel& cavity, const DriveWaveform& drive, double t_final,
                                               int max_events, const PropagationOptions& options) {
    if (max_events < 0) throw std::invalid_argument("max_events must be non-negative");
    const JointDynamics dyn(system, cavity, options);
    const int blocks = max_events + 1;
    const DensityDynamics dd(dyn, blocks, true);
    const int dim = dd.dim();
    const Vec psi0 = JointState::product(initial, cavity.dim()).amplitudes();
    Mat y = Mat::Zero(dim, static_cast<Eigen::Index>(dim) * blocks);
    y.leftCols(dim) = psi0 * psi0.adjoint();
    dd.propagate(y, drive, 0.0, t_final, {.include_start = true, .include_end = true});
    RecordProbabilities out;
    for (int k = 0; k < blocks; ++k) {
        const Mat rk = y.middleCols(k * dim, dim);
        out.by_count.push_back(trace_real(rk));
        out.cutoff_leakage += top_level_population(rk, dyn.matter_dim(), dyn.cavity_dim());
    }
    out.total = std::accumulate(out.by_count.begin(), out.by_count.end(), 0.0);
    return out;
}

std::vector<JointState> trajectory(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                                   const DriveWaveform& drive, const std::vector<double>& times,
                                   const PropagationOptions& options) {
    if (!std::is_sorted(times.begin(), times.end())) throw std::invalid_argument("trajectory times must be sorted");
    const JointDynamics dyn(system, cavity, options);
    JointState state = JointState::product(initial, cavity.dim());
    std::vector<JointState> out;
    double t = 0.0;
    bool first = true;
    for (const double when : times) {
        state = dyn.propagate_nojump(state, drive, t, when, {.include_start = first, .include_end = true});
        first = false;
        t = when;
        out.push_back(state);
    }
    return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const SystemModel& system,
                          const std::vector<double>& times, const std::vector<JointState>& states) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << "t,sector,re,im\n";
    const auto labels = basis_labels(system);
    const bool spin = is_spin(system);
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& s = states[i];
        for (int n = 0; n < s.cavity_dim(); ++n) {
            for (int k = 0; k < s.matter_dim(); ++k) {
                const cplx a = s.block(n)[k];
                if (spin) {
                    out << fmt::format("{:.16e},m={};n={},{:.16e},{:.16e}\n", times[i], labels[k], n, a.real(), a.imag());
                } else {
                    out << fmt::format("{:.16e},k={};n={},{:.16e},{:.16e}\n", times[i], k, n, a.real(), a.imag());
                }
            }
        }
    }
}

}  // namespace paintbrush
