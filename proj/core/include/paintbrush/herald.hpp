#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paintbrush/evolve.hpp"
#include "paintbrush/pulses.hpp"
#include "paintbrush/statespace.hpp"

namespace paintbrush {

/// Detector with quantum efficiency q and dark-count rate r_d.
struct DetectorModel {
    double q = 1.0;
    double r_d = 0.0;

    friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};
void validate(const DetectorModel& detector);

/// Single-atom cooperativity η = G²/(κΓ) and atom number.
struct CooperativityInput {
    double eta = 1.0;
    int n_atoms = 1;

    static CooperativityInput from_rates(double g_rabi, double gamma, double kappa, int n_atoms);
};

struct CooperativityLimits {
    double phi_c_max = 0.0;     ///< sqrt(η/(2N))
    double cat_size_max = 0.0;  ///< sqrt(η/2), in units of the coherent-state width
    double phi_c = 0.0;         ///< phase per cavity lifetime actually used
    double kappa_n = 0.0;       ///< Ω_S / phi_c
    bool flagged = false;       ///< requested phi_c above phi_c_max
};

/// Limits for a collective spin rotating at omega_s. Without a request phi_c = phi_c_max.
CooperativityLimits cooperativity_limits(const CooperativityInput& input, double omega_s,
                                         std::optional<double> requested_phi_c = {});

/// Finite-cooperativity cavity at the optimum detuning: the atoms double the
/// linewidth (κ_N = 2κ, the excess is undetected loss) and the spin rotates at
/// Ω_S = κ_N * phi_c_max.
struct CooperativityCavity {
    SpinModel spin;
    CavityModel cavity;
    CooperativityLimits limits;
};
CooperativityCavity cavity_from_cooperativity(const CooperativityInput& input, double kappa, int n_c_max = 3);

/// (|Ω t_d> + e^{iφ}|Ω t_d - Φ>)/norm, each branch U_1 applied to the preset initial state
/// (x-polarized CSS for spins, ground state for mechanics, which U_1 carries around
/// the radius-X1 circle).
Vec target_cat(const SystemModel& system, double phi_sep, double rel_phase, double t_d);

/// Target ψ* = ∫ f(φ) U_1(φ/Ω)|ψ0> dφ of a weight function, carried to detection time
/// t_d by U_1(t_d - φ_max/Ω), normalized.
Vec target_from_weight(const SystemModel& system, const Vec& initial, const WeightTarget& target, double t_d);

/// Σ c^f_m |basis_m> (Dicke or displaced-Fock basis) carried by U_1(t_d - φ_max/Ω), normalized.
Vec target_from_coeffs(const SystemModel& system, const CoeffTarget& target, double t_d);

struct RotatedFidelity {
    double fidelity = 0.0;
    double angle = 0.0;  ///< rotation φ of U_1(φ/Ω) applied to the target
};

/// |<target|psi1>|² / <psi1|psi1>. Target must be normalized.
double fidelity_eps(const Vec& psi1, const Vec& target);
/// Same, maximized over the U_1 rotation of the target: coarse scan then golden section to 1e-6 rad.
RotatedFidelity fidelity_eps_rotated(const Vec& psi1, const Vec& target, const SystemModel& system);

/// F_min = F_ε R_s / (R_t + R_d/Q).
double fidelity_min(double f_eps, double r_s, double r_t, const DetectorModel& detector);

/// Rotation-equivalent state comparison used by the painting checks.
double rotation_invariant_overlap(const Vec& a, const Vec& b, const SystemModel& system);

// ---------------------------------------------------------------------------
// Scenarios and sweeps

/// One physical scenario. Preset names: cat-spin, cat-mech, dicke, fock, mech-qubit, paint.
struct Scenario {
    std::string preset = "cat-spin";
    SystemModel system = SpinModel{30, 1.0};
    CavityModel cavity;
    DetectorModel detector;
    double phi_sep = kTwoPi / 3.0;  ///< cat separation Φ when a cell leaves it unset
    double rel_phase = 0.0;         ///< cat relative phase φ
    int level = 2;                  ///< Dicke m (spin) or Fock index (mechanics)
    std::optional<WeightTarget> weight;
    std::optional<Vec> initial;
    /// Replaces the preset's synthesized drive; the preset still supplies the target.
    std::optional<DriveWaveform> waveform;
    PropagationOptions options;
};

/// One grid point. NaN fields fall back to the scenario (t_d defaults to the end of the drive).
struct SweepCell {
    double eps_over_omega = std::numeric_limits<double>::quiet_NaN();
    double phi = std::numeric_limits<double>::quiet_NaN();
    double t_d = std::numeric_limits<double>::quiet_NaN();
    double eta = std::numeric_limits<double>::quiet_NaN();
    double rd_over_qkappa = 0.0;
};

struct SweepRow {
    std::string preset;
    SweepCell cell;
    double r_s = std::numeric_limits<double>::quiet_NaN();
    double r_t = std::numeric_limits<double>::quiet_NaN();
    double f_eps = std::numeric_limits<double>::quiet_NaN();
    double f_min = std::numeric_limits<double>::quiet_NaN();
    std::string error;
    bool physics_failure = false;
};

/// Everything one cell needs, resolved from a scenario.
struct CellSetup {
    SystemModel system;
    CavityModel cavity;
    DetectorModel detector;
    Vec initial;
    DriveWaveform drive;
    double t_d = 0.0;
    bool rotate = false;  ///< compare up to a U_1 rotation
    std::function<Vec(double)> target;  ///< normalized target at a detection time
};
CellSetup resolve_cell(const Scenario& scenario, const SweepCell& cell);

/// Full evaluation of one cell: heralded state, transmission rate, F_ε and F_min.
SweepRow evaluate_cell(const Scenario& scenario, const SweepCell& cell);

/// Heralded and transmission rates and F_ε on a uniform detection-time grid over [t0, t1].
struct DetectionSeries {
    std::vector<double> t_d;
    std::vector<double> r_s;
    std::vector<double> r_t;
    std::vector<double> f_eps;
};
DetectionSeries detection_series(const Scenario& scenario, const SweepCell& cell, double t0, double t1,
                                 int points = 64);

/// Uniform (trapezoid) average over the series; F_min is averaged pointwise.
struct AveragedFidelity {
    double f_min = 0.0;
    double f_eps = 0.0;
    double r_s = 0.0;
    double r_t = 0.0;
};
AveragedFidelity average_over_detection(const DetectionSeries& series, const DetectorModel& detector);
/// Convenience: series plus average, with the cell's dark-count ratio.
AveragedFidelity averaged_f_min(const Scenario& scenario, const SweepCell& cell, double t0, double t1,
                                int points = 64);

/// Detector with R_d/(Qκ) = ratio on the given cavity.
DetectorModel detector_for_ratio(DetectorModel base, double rd_over_qkappa, const CavityModel& cavity);

/// True for errors that mean the physics is out of the model's validity (cutoff leakage,
/// unreachable target, integrator or quadrature failure) rather than bad input.
bool is_physics_error(const std::exception& e);

/// Grid of axis values; the cell order is row-major over `order` (first axis slowest).
struct SweepPlan {
    std::vector<double> eps_over_omega;
    std::vector<double> phi;
    std::vector<double> t_d;
    std::vector<double> eta;
    std::vector<double> rd_over_qkappa;
    std::vector<std::string> order{"eps_over_omega", "phi", "t_d", "eta", "rd_over_qkappa"};

    std::vector<SweepCell> cells() const;
    std::size_t size() const;
};

using CellCallback = std::function<void(std::size_t index, const SweepRow& row)>;

/// Evaluates every cell on `jobs` threads. Rows come back in plan order; a failing cell
/// keeps its NaN values and the error text. on_row is called in plan order as soon as
/// the prefix of finished rows grows.
std::vector<SweepRow> sweep(const Scenario& scenario, const SweepPlan& plan, int jobs = 1,
                            const CellCallback& on_row = {});

/// Generic version with a caller-supplied evaluator.
std::vector<SweepRow> sweep(const std::vector<SweepCell>& cells,
                            const std::function<SweepRow(const SweepCell&)>& evaluate, int jobs = 1,
                            const CellCallback& on_row = {});

std::string sweep_csv_header();
std::string sweep_csv_line(const SweepRow& row);
nlohmann::json sweep_row_json(const SweepRow& row);

}  // namespace paintbrush
