#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "paintbrush/pulses.hpp"
#include "paintbrush/statespace.hpp"

namespace paintbrush {

class StepUnderflowError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class QuadratureError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct PropagationOptions {
    /// Bound on |ψ_h - ψ_{h/2}| in each photon sector relative to that sector. Sectors below
    /// 1e-12 of the whole state (1e-9 for density blocks) are measured against that floor.
    double tolerance = 1e-8;
    int max_halvings = 20;
    bool check_leakage = true;

    friend bool operator==(const PropagationOptions&, const PropagationOptions&) = default;
};

/// Which delta atoms a propagation window applies: those with t0 <= t <= t1,
/// minus the endpoints that are excluded.
struct AtomWindow {
    bool include_start = true;
    bool include_end = false;
};

/// One trial's detector record. The heralded path has exactly one click and no loss events.
struct ClickRecord {
    std::vector<double> click_times;
    int loss_events = 0;
};

/// Per-detection-time outcome. Rates are probability densities per unit time.
struct HeraldedResult {
    double t_d = 0.0;
    Vec psi1;  ///< unnormalized conditional matter state
    double r_s = 0.0;
    double r_t = std::numeric_limits<double>::quiet_NaN();
    double f_eps = std::numeric_limits<double>::quiet_NaN();
    double f_min = std::numeric_limits<double>::quiet_NaN();
};

/// No-jump dynamics of the joint matter-cavity state under H_eff.
///
/// Matter Hamiltonians are held per photon-number block. Drive-free stretches are
/// propagated exactly from the block spectra; driven stretches use classical RK4,
/// halving the step until two successive resolutions agree to the tolerance and
/// returning the Richardson-extrapolated result. Delta atoms are exact kicks.
class JointDynamics {
  public:
    JointDynamics(SystemModel system, CavityModel cavity, PropagationOptions options = {});

    const SystemModel& system() const { return system_; }
    const CavityModel& cavity() const { return cavity_; }
    const PropagationOptions& options() const { return options_; }
    int matter_dim() const { return md_; }
    int cavity_dim() const { return cd_; }

    JointState propagate_nojump(const JointState& state, const DriveWaveform& drive, double t0, double t1,
                                AtomWindow window = {}) const;

    /// Multiplies by e^{-i(β c† + β* c)} on the cavity factor.
    void kick(JointState& state, cplx beta) const;
    /// ψ <- sqrt(rate) c ψ.
    void jump(JointState& state, double rate) const;
    /// Throws CutoffError when the top photon (or phonon) level holds more than 1e-6 of the norm.
    void check_leakage(const JointState& state) const;

    /// out = H_eff(envelope) in, for a joint vector or for each column of a joint matrix.
    void apply_h_eff(const Vec& in, cplx envelope, Vec& out) const;
    void apply_h_eff(const Mat& in, cplx envelope, Mat& out) const;
    /// H_eff seen in the frame e^{i c_n tau} that strips the constant offset c_n from
    /// photon block n, tau after the frame was attached. The couplings pick up phases.
    void apply_h_frame(const Vec& in, double tau, cplx envelope, Vec& out) const;
    void apply_h_frame(const Mat& in, double tau, cplx envelope, Mat& out) const;
    const std::vector<double>& block_offsets() const { return offset_; }
    /// Cavity-factor kick matrix e^{-i(β c† + β* c)}.
    Mat kick_matrix(cplx beta) const;
    /// Bound on the spectral radius of H_eff in the offset-free frame.
    double spectral_radius(double drive_amplitude) const;

    /// Exact drive-free propagation of each photon block over dt.
    void free_evolve(Vec& amplitudes, double dt) const;

    /// True when every photon block of the matter Hamiltonian is diagonal (spins).
    bool diagonal() const { return diagonal_; }
    /// Matter energies in photon block n; only for diagonal systems.
    const Eigen::VectorXd& block_diagonal(int n) const { return diag_[n]; }

  private:
    template <class T>
    void apply_blocks(const T& in, double tau, cplx envelope, bool framed, T& out) const;
    void evolve_segment(Vec& psi, const DriveWaveform& drive, double a, double b) const;

    SystemModel system_;
    CavityModel cavity_;
    PropagationOptions options_;
    int md_ = 0;
    int cd_ = 0;
    bool diagonal_ = true;
    std::vector<Eigen::VectorXd> diag_;
    std::vector<Mat> blocks_;
    std::vector<Eigen::VectorXd> block_eval_;
    std::vector<Mat> block_evec_;
    std::vector<double> offset_;
    double matter_radius_ = 0.0;
};

/// Convenience wrapper around JointDynamics::propagate_nojump.
JointState propagate_nojump(const SystemModel& system, const CavityModel& cavity, const JointState& state,
                            const DriveWaveform& drive, double t0, double t1, const PropagationOptions& options = {});

/// Kick on a standalone state, with the leakage check.
JointState apply_delta_kick(const CavityModel& cavity, const JointState& state, cplx beta);

/// Default end of the no-further-click window: max(t_d, t_end) + 10/κ_N.
double default_final_time(const CavityModel& cavity, const DriveWaveform& drive, double t_d);

/// Conditional state for one detected photon at t_d and no other emission:
/// no-jump to t_d, apply sqrt(κ) c, no-jump to t_final, project the cavity on vacuum.
/// psi1 is reported at time t_d (free matter evolution after t_d is undone) and r_s = <psi1|psi1>.
HeraldedResult heralded_state(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                              const DriveWaveform& drive, double t_d, std::optional<double> t_final = {},
                              const PropagationOptions& options = {});

/// Same path for many detection times sharing one forward propagation.
std::vector<HeraldedResult> heralded_states(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                                            const DriveWaveform& drive, const std::vector<double>& detection_times,
                                            const PropagationOptions& options = {});

/// First-order (single-photon) heralded state:
/// psi1 = -i sqrt(κ) ∫_0^{t_d} dt' E0(t') e^{-κ_N (t_d - t')/2} U_1(t_d - t') U_0(t') |psi0>,
/// delta atoms added in closed form, the continuous part by refined trapezoid
/// with Richardson extrapolation.
Vec weak_drive_heralded_state(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                              const DriveWaveform& drive, double t_d, double rel_tol = 1e-10);

/// R_t(t) = κ <c†c>(t) from the Lindblad master equation with jump operators
/// sqrt(κ) c and sqrt(κ_loss) c. Times need not be sorted.
std::vector<double> transmission_rates(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                                       const DriveWaveform& drive, const std::vector<double>& times,
                                       const PropagationOptions& options = {});
double transmission_rate(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                         const DriveWaveform& drive, double t, const PropagationOptions& options = {});

/// Closed-form per-sector solution for the spin: in each J_z sector the cavity is a
/// driven damped mode that stays coherent, α' = -(i Ω_S m + κ_N/2) α - i E0(t),
/// kicks shift α by -iβ. Gives R_t exactly and R_s and psi1 at any drive strength.
struct SpinSectorSolution {
    std::vector<double> times;
    std::vector<double> r_t;
    std::vector<double> r_s;
    std::vector<Vec> psi1;
};
SpinSectorSolution spin_sector_solution(const Vec& initial, const SpinModel& spin, const CavityModel& cavity,
                                        const DriveWaveform& drive, const std::vector<double>& times);

struct SuccessRatio {
    double ratio = 0.0;     ///< R_s/R_t at t_end
    double expected = 0.0;  ///< e^{-|ε/Ω|²}
    bool flagged = false;   ///< departs by more than 5% while ε/Ω <= 0.5
    double r_s = 0.0;
    double r_t = 0.0;
};
SuccessRatio success_ratio(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                           const DriveWaveform& drive, const PropagationOptions& options = {});

/// Probabilities of emitting exactly k photons (detected or lost) over [0, t_final],
/// from the jump-count hierarchy ρ_k' = L0 ρ_k + κ_N c ρ_{k-1} c†.
struct RecordProbabilities {
    std::vector<double> by_count;
    double total = 0.0;
    double cutoff_leakage = 0.0;  ///< population left in the top photon level
};
RecordProbabilities click_record_probabilities(const Vec& initial, const SystemModel& system,
                                               const CavityModel& cavity, const DriveWaveform& drive, double t_final,
                                               int max_events, const PropagationOptions& options = {});

/// Joint state snapshots at the given times (sorted ascending), for debugging dumps.
std::vector<JointState> trajectory(const Vec& initial, const SystemModel& system, const CavityModel& cavity,
                                   const DriveWaveform& drive, const std::vector<double>& times,
                                   const PropagationOptions& options = {});
/// CSV with columns t, sector, re, im; sector reads "m=<m>;n=<n>" or "k=<k>;n=<n>".
void write_trajectory_csv(const std::filesystem::path& path, const SystemModel& system,
                          const std::vector<double>& times, const std::vector<JointState>& states);

}  // namespace paintbrush
