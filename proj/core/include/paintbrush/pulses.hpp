#pragma once

#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "paintbrush/statespace.hpp"

namespace paintbrush {

/// Instantaneous kick of the cavity field with complex area β = ∫E0 dt.
struct DeltaAtom {
    double t = 0.0;
    cplx area{};

    friend bool operator==(const DeltaAtom&, const DeltaAtom&) = default;
};

/// Drive envelope E0(t) in the cavity rotating frame.
///
/// The continuous part is sampled at t_k = k*dt for k = 0..K with K*dt = t_end
/// and is zero outside [0, t_end]. Between samples the envelope is evaluated by
/// Catmull-Rom interpolation. Delta atoms are kept symbolically.
struct DriveWaveform {
    double dt = 0.0;
    std::vector<cplx> samples;
    std::vector<DeltaAtom> deltas;
    double t_end = 0.0;
    double epsilon = 0.0;

    cplx envelope(double t) const;
    bool has_samples() const { return samples.size() >= 2; }
    /// True when the continuous part vanishes on (a, b).
    bool is_zero_on(double a, double b) const;
    double max_abs_sample() const;
    /// Largest |β| over the delta atoms.
    double max_atom_area() const;

    friend bool operator==(const DriveWaveform&, const DriveWaveform&) = default;
};

/// A weight function f(φ) on [0, phi_max]: uniformly spaced samples plus point masses.
struct WeightTarget {
    struct Atom {
        double phi = 0.0;
        cplx weight{};

        friend bool operator==(const Atom&, const Atom&) = default;
    };
    double phi_max = kTwoPi;
    std::vector<cplx> samples;  // f at φ_j = j*phi_max/(size-1); empty for pure point masses
    std::vector<Atom> atoms;

    cplx value(double phi) const;

    friend bool operator==(const WeightTarget&, const WeightTarget&) = default;
};

enum class CoeffBasis { dicke, displaced_fock };

/// Target amplitudes c^f in the Dicke or displaced-Fock basis, indexed like the matter basis.
struct CoeffTarget {
    std::vector<cplx> coeffs;
    CoeffBasis basis = CoeffBasis::dicke;
    double phi_max = kTwoPi;
};

using TargetSpec = std::variant<WeightTarget, CoeffTarget>;

struct SynthesisOptions {
    /// Upper bound on the sample spacing; the grid is further refined to the
    /// default resolution rule when that is finer.
    std::optional<double> dt_max;
};

/// Ratio above which the single-photon mapping is considered outside the weak limit.
inline constexpr double kWeakDriveLimit = 0.3;
bool weak_limit_exceeded(double epsilon, double omega);

/// E0(t) = ε f(φ_max - Ω t) e^{-κ t/2} on [0, φ_max/Ω].
DriveWaveform synthesize_from_weight(const WeightTarget& target, double omega, double kappa, double epsilon,
                                     const SynthesisOptions& options = {});

/// Two kicks: β1 = ε/(√2 Ω) at t = 0 and β1 e^{iφ} e^{-κT/2} at T = Φ/Ω.
DriveWaveform cat_pulse(double phi_sep, double rel_phase, double omega, double kappa, double epsilon);

/// Expansion coefficients c^0 of a matter state in the Dicke basis (spins) or the
/// displaced-Fock basis (mechanics), for basis indices 0..count-1.
std::vector<cplx> expansion_coefficients(const SystemModel& system, const Vec& state, int count);

/// E0(t) = (ε/2π) Σ_m (c^f_m / c^0_m) e^{-i Ω ℓ_m t - κ t/2} on [0, φ_max/Ω].
/// Throws UnreachableTargetError when c^f_m != 0 but c^0_m = 0.
DriveWaveform synthesize_from_coeffs(const CoeffTarget& target, const Vec& initial, const SystemModel& system,
                                     double kappa, double epsilon, const SynthesisOptions& options = {});

/// A = e^{X1²/2} / (2π √2 X1).
double mech_qubit_normalization(double x1);

/// E0(t) = ε A e^{i X1² Ω t - κ t/2} (X1 + e^{-i Ω t}) for t in [0, 2π/Ω].
DriveWaveform mech_qubit_pulse(const MechModel& mech, double kappa, double epsilon,
                               const SynthesisOptions& options = {});

/// f_ℓ = ∫ f(φ) e^{-i ℓ φ} dφ for every label, trapezoid refined until the change is below tol.
std::vector<cplx> fourier_weights(const WeightTarget& target, const std::vector<double>& labels, double tol = 1e-9);

/// Default grid spacing: resolve the fastest component Ω max|ℓ| with 40 points per
/// period and the decay with 20 points per lifetime.
double default_sample_spacing(double omega, double max_abs_label, double kappa);

// Waveform exchange format: {dt, samples: [[re,im],...], deltas: [{t,re,im}], t_end, epsilon}.
nlohmann::json waveform_to_json(const DriveWaveform& drive);
DriveWaveform waveform_from_json(const nlohmann::json& j);
void save_waveform(const DriveWaveform& drive, const std::filesystem::path& path);
DriveWaveform load_waveform(const std::filesystem::path& path);

namespace detail {
/// Catmull-Rom interpolation of uniformly spaced samples at fractional index x.
cplx catmull_rom(const std::vector<cplx>& samples, double x);
}  // namespace detail

}  // namespace paintbrush
