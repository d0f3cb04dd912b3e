#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace paintbrush {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Raised when a truncated basis (phonon or photon cutoff) loses more norm
/// than the allowed 1e-6.
class CutoffError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised when a requested target has weight on basis states the initial
/// state does not populate.
class UnreachableTargetError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kCutoffTolerance = 1e-6;

/// Collective spin of N two-level atoms coupled dispersively, H = Ω_S c†c J_z.
/// Basis index k = 0..N holds the Dicke state with m = k - J.
struct SpinModel {
    int n_atoms = 1;
    double omega_s = 1.0;

    double j() const { return 0.5 * n_atoms; }
    int dim() const { return n_atoms + 1; }
    double m_of(int k) const { return k - j(); }

    friend bool operator==(const SpinModel&, const SpinModel&) = default;
};

/// Mechanical oscillator in the undisplaced Fock basis |0..n_ph_max>.
/// One intracavity photon shifts the equilibrium to a = X1 with X1 = g0/Ω_M.
struct MechModel {
    double omega_m = 1.0;
    double g0 = 1.0;
    int n_ph_max = 40;

    double x1() const { return g0 / omega_m; }
    double mu() const { return x1() * x1(); }
    int dim() const { return n_ph_max + 1; }

    friend bool operator==(const MechModel&, const MechModel&) = default;
};

using SystemModel = std::variant<SpinModel, MechModel>;

/// Cavity in the frame rotating at ω_c. kappa is the detected port,
/// kappa_loss everything that leaves without reaching the detector.
struct CavityModel {
    double kappa = 1.0;
    double kappa_loss = 0.0;
    int n_c_max = 3;

    double kappa_n() const { return kappa + kappa_loss; }
    int dim() const { return n_c_max + 1; }

    friend bool operator==(const CavityModel&, const CavityModel&) = default;
};

void validate(const SpinModel& spin);
void validate(const MechModel& mech);
void validate(const CavityModel& cavity);
void validate(const SystemModel& system);

int matter_dim(const SystemModel& system);
/// Ω_S or Ω_M: the rotation rate imparted by one photon.
double rotation_rate(const SystemModel& system);
/// Frequency offset μ of the single-photon sector (0 for spins, X1² for mechanics).
double mu_offset(const SystemModel& system);
bool is_spin(const SystemModel& system);
/// Single-photon frequency labels ℓ (in units of the rotation rate): U_1(φ/Ω) multiplies
/// basis state k by e^{-i ℓ_k φ}. ℓ = m for spins, k - X1² for displaced Fock states.
std::vector<double> basis_labels(const SystemModel& system);

/// Amplitudes on (matter) ⊗ (cavity Fock), stored photon-number major:
/// index = n * matter_dim + k. Norm is not forced to one.
class JointState {
  public:
    JointState() = default;
    JointState(int matter_dim, int cavity_dim);
    static JointState product(const Vec& matter, int cavity_dim, int photon_number = 0);

    int matter_dim() const { return matter_dim_; }
    int cavity_dim() const { return cavity_dim_; }
    Vec& amplitudes() { return amp_; }
    const Vec& amplitudes() const { return amp_; }

    auto block(int n) { return amp_.segment(static_cast<Eigen::Index>(n) * matter_dim_, matter_dim_); }
    auto block(int n) const { return amp_.segment(static_cast<Eigen::Index>(n) * matter_dim_, matter_dim_); }

    double norm_squared() const { return amp_.squaredNorm(); }
    /// Population in photon-number sector n.
    double photon_population(int n) const { return block(n).squaredNorm(); }

  private:
    Vec amp_;
    int matter_dim_ = 0;
    int cavity_dim_ = 0;
};

/// Coherent spin state pointing along (polar, azimuth); e^{-i azimuth J_z} applied
/// to the state in the x-z plane, so amplitudes carry e^{-i m azimuth}.
Vec coherent_spin_state(const SpinModel& spin, double polar, double azimuth);

/// e^{-i phi J_z} |state>.
Vec rotate_spin(const SpinModel& spin, const Vec& state, double phi);

/// Eigenstate m of ã†ã with ã = a - X1, in the undisplaced Fock basis.
Vec displaced_fock_state(const MechModel& mech, int m);

/// Coherent state |alpha> truncated to the model cutoff.
Vec coherent_state(const MechModel& mech, cplx alpha);

/// Matter Hamiltonian projected on n intracavity photons (rotating frame).
/// Spin: n Ω_S J_z. Mechanics: Ω_M a†a - n g0 (a + a†).
Mat sector_hamiltonian(const SystemModel& system, int n_photons);
/// Diagonal of sector_hamiltonian for the spin case.
Eigen::VectorXd spin_sector_diagonal(const SpinModel& spin, int n_photons);

/// U_1(tau) by spectral decomposition, for repeated evaluation at many durations.
/// Mechanics is diagonalized in a padded Fock space; spins are diagonal already.
class U1Evaluator {
  public:
    explicit U1Evaluator(const SystemModel& system);

    /// Result truncated to the retained basis; no cutoff check.
    Vec apply(double tau, const Vec& state) const;
    /// Same, also returning the norm that fell outside the retained basis.
    Vec apply(double tau, const Vec& state, double& lost_norm2) const;
    int retained_dim() const { return retained_; }

    // Work directly in the eigenbasis of H_1 (padded for mechanics).
    Vec to_eigen(const Vec& state) const;
    Vec from_eigen(const Vec& coeffs, double* lost_norm2 = nullptr) const;
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  private:
    bool diagonal_ = true;
    int retained_ = 0;
    Eigen::VectorXd eigenvalues_;
    Mat eigenvectors_;
};

/// U_1(tau) restricted to the retained basis. For mechanics the exponential is
/// taken in a padded space so the retained block matches the untruncated
/// operator; CutoffError if the lower half of the block loses unitarity.
Mat u1_propagator(const SystemModel& system, double tau);

/// U_1(tau)|state> with a norm-loss check on the result.
Vec apply_u1(const SystemModel& system, double tau, const Vec& state);

/// U_0(tau)|state>: identity for spins, e^{-i Ω_M a†a tau} for mechanics.
Vec apply_u0(const SystemModel& system, double tau, const Vec& state);

/// Dense joint H_eff = H_{S/M} + E c† + E* c - i (κ_N/2) c†c for one envelope value.
Mat build_h_eff(const SystemModel& system, const CavityModel& cavity, cplx envelope);

/// Initial matter state used by presets: x-polarized CSS for spins, ground state for mechanics.
Vec default_initial_state(const SystemModel& system);

/// Normalized copy; throws std::invalid_argument on a zero vector.
Vec normalized(const Vec& v);

}  // namespace paintbrush
