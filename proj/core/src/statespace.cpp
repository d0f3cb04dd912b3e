#include "paintbrush/statespace.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace paintbrush {

namespace {

int padding_for(const MechModel& mech) { return std::max(48, mech.dim() / 2); }

// Ω a†a - n g0 (a + a†) on a Fock space of the given dimension.
Eigen::MatrixXd mech_hamiltonian(const MechModel& mech, int n_photons, int dim) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    const double coupling = n_photons * mech.g0;
    for (int k = 0; k < dim; ++k) {
        h(k, k) = mech.omega_m * k;
        if (k + 1 < dim) {
            const double off = -coupling * std::sqrt(static_cast<double>(k + 1));
            h(k, k + 1) = off;
            h(k + 1, k) = off;
        }
    }
    return h;
}

Vec padded(const Vec& v, int dim) {
    Vec out = Vec::Zero(dim);
    out.head(v.size()) = v;
    return out;
}

}  // namespace

void validate(const SpinModel& spin) {
    if (spin.n_atoms < 1) throw std::invalid_argument("spin model needs at least one atom");
    if (!std::isfinite(spin.omega_s)) throw std::invalid_argument("omega_s must be finite");
}

void validate(const MechModel& mech) {
    if (!(mech.omega_m > 0.0) || !std::isfinite(mech.omega_m))
        throw std::invalid_argument("omega_m must be positive");
    if (!(mech.g0 > 0.0) || !std::isfinite(mech.x1()))
        throw std::invalid_argument("X1 = g0/omega_m must be finite and positive");
    if (mech.n_ph_max < 1) throw std::invalid_argument("phonon cutoff must be at least 1");
}

void validate(const CavityModel& cavity) {
    if (!(cavity.kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    if (cavity.kappa_loss < 0.0) throw std::invalid_argument("kappa_loss must be non-negative");
    if (cavity.n_c_max < 1) throw std::invalid_argument("photon cutoff must be at least 1");
}

void validate(const SystemModel& system) {
    std::visit([](const auto& s) { validate(s); }, system);
}

int matter_dim(const SystemModel& system) {
    return std::visit([](const auto& s) { return s.dim(); }, system);
}

double rotation_rate(const SystemModel& system) {
    if (const auto* spin = std::get_if<SpinModel>(&system)) return spin->omega_s;
    return std::get<MechModel>(system).omega_m;
}

double mu_offset(const SystemModel& system) {
    if (const auto* mech = std::get_if<MechModel>(&system)) return mech->mu();
    return 0.0;
}

bool is_spin(const SystemModel& system) { return std::holds_alternative<SpinModel>(system); }

std::vector<double> basis_labels(const SystemModel& system) {
    std::vector<double> labels(static_cast<std::size_t>(matter_dim(system)));
    if (const auto* spin = std::get_if<SpinModel>(&system)) {
        for (int k = 0; k < spin->dim(); ++k) labels[k] = spin->m_of(k);
    } else {
        const double mu = std::get<MechModel>(system).mu();
        for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = static_cast<double>(k) - mu;
    }
    return labels;
}

JointState::JointState(int matter_dim, int cavity_dim)
    : amp_(Vec::Zero(static_cast<Eigen::Index>(matter_dim) * cavity_dim)),
      matter_dim_(matter_dim),
      cavity_dim_(cavity_dim) {}

JointState JointState::product(const Vec& matter, int cavity_dim, int photon_number) {
    JointState s(static_cast<int>(matter.size()), cavity_dim);
    s.block(photon_number) = matter;
    return s;
}

Vec coherent_spin_state(const SpinModel& spin, double polar, double azimuth) {
    validate(spin);
    const int n = spin.n_atoms;
    const double c = std::cos(0.5 * polar);
    const double s = std::sin(0.5 * polar);
    Vec out(spin.dim());
    for (int k = 0; k <= n; ++k) {
        // k = J + m spins up
        const double log_binom = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        const double mag = std::exp(0.5 * log_binom) * std::pow(c, k) * std::pow(s, n - k);
        out[k] = std::polar(mag, -spin.m_of(k) * azimuth);
    }
    return out;
}

Vec rotate_spin(const SpinModel& spin, const Vec& state, double phi) {
    Vec out(state.size());
    for (int k = 0; k < state.size(); ++k) out[k] = state[k] * std::polar(1.0, -phi * spin.m_of(k));
    return out;
}

Vec coherent_state(const MechModel& mech, cplx alpha) {
    Vec out(mech.dim());
    cplx c = std::exp(-0.5 * std::norm(alpha));
    for (int k = 0; k < mech.dim(); ++k) {
        if (k > 0) c *= alpha / std::sqrt(static_cast<double>(k));
        out[k] = c;
    }
    return out;
}

Vec displaced_fock_state(const MechModel& mech, int m) {
    // X1 = 0 is allowed here: the plain Fock basis
    if (!(mech.g0 >= 0.0)) throw std::invalid_argument("g0 must be non-negative");
    if (mech.g0 > 0.0) validate(mech);
    if (m < 0) throw std::invalid_argument("displaced Fock index must be non-negative");
    const int dim = mech.dim() + padding_for(mech) + m;
    MechModel wide = mech;
    wide.n_ph_max = dim - 1;
    // |m~> = (a† - X1)^m / sqrt(m!) |X1>
    Vec v = coherent_state(wide, mech.x1());
    for (int step = 1; step <= m; ++step) {
        Vec next = Vec::Zero(dim);
        for (int k = 0; k + 1 < dim; ++k) next[k + 1] += std::sqrt(static_cast<double>(k + 1)) * v[k];
        next -= mech.x1() * v;
        v = next / std::sqrt(static_cast<double>(step));
    }
    const double deficit = std::abs(1.0 - v.head(mech.dim()).squaredNorm());
    if (deficit > kCutoffTolerance) {
        throw CutoffError(fmt::format("displaced Fock state m={} loses {:.3e} of its norm at phonon cutoff {}", m,
                                      deficit, mech.n_ph_max));
    }
    return v.head(mech.dim());
}

Eigen::VectorXd spin_sector_diagonal(const SpinModel& spin, int n_photons) {
    Eigen::VectorXd d(spin.dim());
    for (int k = 0; k < spin.dim(); ++k) d[k] = n_photons * spin.omega_s * spin.m_of(k);
    return d;
}

Mat sector_hamiltonian(const SystemModel& system, int n_photons) {
    if (const auto* spin = std::get_if<SpinModel>(&system)) {
        return spin_sector_diagonal(*spin, n_photons).cast<cplx>().asDiagonal();
    }
    const auto& mech = std::get<MechModel>(system);
    return mech_hamiltonian(mech, n_photons, mech.dim()).cast<cplx>();
}

U1Evaluator::U1Evaluator(const SystemModel& system) : retained_(matter_dim(system)) {
    validate(system);
    if (const auto* spin = std::get_if<SpinModel>(&system)) {
        diagonal_ = true;
        eigenvalues_ = spin_sector_diagonal(*spin, 1);
        return;
    }
    const auto& mech = std::get<MechModel>(system);
    diagonal_ = false;
    const int dim = mech.dim() + padding_for(mech);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(mech_hamiltonian(mech, 1, dim));
    eigenvalues_ = solver.eigenvalues();
    eigenvectors_ = solver.eigenvectors().cast<cplx>();
}

Vec U1Evaluator::apply(double tau, const Vec& state) const {
    double lost = 0.0;
    return apply(tau, state, lost);
}

Vec U1Evaluator::apply(double tau, const Vec& state, double& lost_norm2) const {
    if (diagonal_) {
        lost_norm2 = 0.0;
        Vec out(state.size());
        for (int k = 0; k < state.size(); ++k) out[k] = state[k] * std::polar(1.0, -eigenvalues_[k] * tau);
        return out;
    }
    Vec coeffs = eigenvectors_.adjoint() * padded(state, static_cast<int>(eigenvectors_.rows()));
    for (int k = 0; k < coeffs.size(); ++k) coeffs[k] *= std::polar(1.0, -eigenvalues_[k] * tau);
    Vec full = eigenvectors_ * coeffs;
    lost_norm2 = full.tail(full.size() - retained_).squaredNorm();
    return full.head(retained_);
}

Vec U1Evaluator::to_eigen(const Vec& state) const {
    if (diagonal_) return state;
    return eigenvectors_.adjoint() * padded(state, static_cast<int>(eigenvectors_.rows()));
}

Vec U1Evaluator::from_eigen(const Vec& coeffs, double* lost_norm2) const {
    if (diagonal_) {
        if (lost_norm2) *lost_norm2 = 0.0;
        return coeffs;
    }
    Vec full = eigenvectors_ * coeffs;
    if (lost_norm2) *lost_norm2 = full.tail(full.size() - retained_).squaredNorm();
    return full.head(retained_);
}

Mat u1_propagator(const SystemModel& system, double tau) {
    if (tau < 0.0) throw std::invalid_argument("u1_propagator needs tau >= 0");
    const U1Evaluator u1(system);
    const int dim = u1.retained_dim();
    Mat out(dim, dim);
    double worst = 0.0;
    for (int j = 0; j < dim; ++j) {
        double lost = 0.0;
        out.col(j) = u1.apply(tau, Vec::Unit(dim, j), lost);
        if (j <= dim / 2) worst = std::max(worst, lost);
    }
    if (worst > kCutoffTolerance) {
        throw CutoffError(fmt::format("U1({}) leaves the retained basis (unitarity defect {:.3e})", tau, worst));
    }
    return out;
}

Vec apply_u1(const SystemModel& system, double tau, const Vec& state) {
    const U1Evaluator u1(system);
    double lost = 0.0;
    Vec out = u1.apply(tau, state, lost);
    if (lost > kCutoffTolerance * std::max(state.squaredNorm(), 1e-300)) {
        throw CutoffError(fmt::format("U1({}) pushes {:.3e} of the norm past the phonon cutoff", tau, lost));
    }
    return out;
}

Vec apply_u0(const SystemModel& system, double tau, const Vec& state) {
    if (is_spin(system)) return state;
    const double omega = std::get<MechModel>(system).omega_m;
    Vec out(state.size());
    for (int k = 0; k < state.size(); ++k) out[k] = state[k] * std::polar(1.0, -omega * k * tau);
    return out;
}

Mat build_h_eff(const SystemModel& system, const CavityModel& cavity, cplx envelope) {
    validate(system);
    validate(cavity);
    const int md = matter_dim(system);
    const int cd = cavity.dim();
    Mat h = Mat::Zero(static_cast<Eigen::Index>(md) * cd, static_cast<Eigen::Index>(md) * cd);
    const Mat identity = Mat::Identity(md, md);
    for (int n = 0; n < cd; ++n) {
        h.block(n * md, n * md, md, md) = sector_hamiltonian(system, n) - cplx(0.0, 0.5 * cavity.kappa_n() * n) * identity;
        if (n + 1 < cd) {
            const double amp = std::sqrt(static_cast<double>(n + 1));
            h.block((n + 1) * md, n * md, md, md) = envelope * amp * identity;
            h.block(n * md, (n + 1) * md, md, md) = std::conj(envelope) * amp * identity;
        }
    }
    return h;
}

Vec default_initial_state(const SystemModel& system) {
    if (const auto* spin = std::get_if<SpinModel>(&system)) return coherent_spin_state(*spin, 0.5 * kPi, 0.0);
    return Vec::Unit(matter_dim(system), 0);
}

Vec normalized(const Vec& v) {
    const double n = v.norm();
    if (!(n > 0.0)) throw std::invalid_argument("cannot normalize a zero vector");
    return v / n;
}

}  // namespace paintbrush
