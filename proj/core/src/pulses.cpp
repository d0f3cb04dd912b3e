#include "paintbrush/pulses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace paintbrush {

namespace detail {

cplx catmull_rom(const std::vector<cplx>& samples, double x) {
    const int last = static_cast<int>(samples.size()) - 1;
    if (last < 0) return {};
    if (x <= 0.0) return samples.front();
    if (x >= last) return samples.back();
    const int i = static_cast<int>(std::floor(x));
    const double t = x - i;
    const cplx p0 = samples[std::max(i - 1, 0)];
    const cplx p1 = samples[i];
    const cplx p2 = samples[std::min(i + 1, last)];
    const cplx p3 = samples[std::min(i + 2, last)];
    const double t2 = t * t;
    const double t3 = t2 * t;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

}  // namespace detail

namespace {

int grid_steps(double duration, double dt_target) {
    return std::max(2, static_cast<int>(std::ceil(duration / dt_target - 1e-9)));
}

void require_rate(double value, const char* what) {
    if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument(fmt::format("{} must be positive", what));
}

}  // namespace

cplx DriveWaveform::envelope(double t) const {
    if (!has_samples() || t < 0.0 || t > t_end) return {};
    return detail::catmull_rom(samples, t / dt);
}

bool DriveWaveform::is_zero_on(double a, double b) const {
    if (!has_samples() || b <= 0.0 || a >= t_end) return true;
    const int last = static_cast<int>(samples.size()) - 1;
    const int lo = std::clamp(static_cast<int>(std::floor(std::max(a, 0.0) / dt)) - 1, 0, last);
    const int hi = std::clamp(static_cast<int>(std::ceil(std::min(b, t_end) / dt)) + 1, 0, last);
    for (int k = lo; k <= hi; ++k)
        if (samples[k] != cplx{}) return false;
    return true;
}

double DriveWaveform::max_abs_sample() const {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, std::abs(s));
    return m;
}

double DriveWaveform::max_atom_area() const {
    double m = 0.0;
    for (const auto& d : deltas) m = std::max(m, std::abs(d.area));
    return m;
}

cplx WeightTarget::value(double phi) const {
    if (samples.size() < 2 || phi < 0.0 || phi > phi_max) return {};
    return detail::catmull_rom(samples, phi / phi_max * static_cast<double>(samples.size() - 1));
}

bool weak_limit_exceeded(double epsilon, double omega) { return std::abs(epsilon / omega) > kWeakDriveLimit; }

double default_sample_spacing(double omega, double max_abs_label, double kappa) {
    double dt = std::numeric_limits<double>::infinity();
    if (max_abs_label > 0.0) dt = kTwoPi / (40.0 * std::abs(omega) * max_abs_label);
    if (kappa > 0.0) dt = std::min(dt, 1.0 / (20.0 * kappa));
    return dt;
}

DriveWaveform synthesize_from_weight(const WeightTarget& target, double omega, double kappa, double epsilon,
                                     const SynthesisOptions& options) {
    require_rate(omega, "omega");
    if (kappa < 0.0) throw std::invalid_argument("kappa must be non-negative");
    if (!(target.phi_max > 0.0) || target.phi_max > kTwoPi + 1e-12)
        throw std::invalid_argument("phi_max must lie in (0, 2π]");
    const bool has_samples = std::any_of(target.samples.begin(), target.samples.end(), [](cplx v) { return v != cplx{}; });
    const bool has_atoms = std::any_of(target.atoms.begin(), target.atoms.end(), [](const auto& a) { return a.weight != cplx{}; });
    if (!has_samples && !has_atoms) throw std::invalid_argument("weight function is empty or identically zero");
    if (has_samples && target.samples.size() < 2) throw std::invalid_argument("weight samples need at least two points");

    DriveWaveform drive;
    drive.epsilon = epsilon;
    drive.t_end = target.phi_max / omega;
    for (const auto& atom : target.atoms) {
        if (atom.phi < -1e-12 || atom.phi > target.phi_max + 1e-12)
            throw std::invalid_argument("weight atom outside [0, phi_max]");
        if (atom.weight == cplx{}) continue;
        const double t = std::clamp((target.phi_max - atom.phi) / omega, 0.0, drive.t_end);
        drive.deltas.push_back({t, epsilon * atom.weight * std::exp(-0.5 * kappa * t) / omega});
    }
    std::sort(drive.deltas.begin(), drive.deltas.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

    if (has_samples) {
        const double dphi = target.phi_max / static_cast<double>(target.samples.size() - 1);
        double dt = std::min(dphi / omega, kappa > 0.0 ? 1.0 / (20.0 * kappa) : dphi / omega);
        if (options.dt_max) dt = std::min(dt, *options.dt_max);
        const int steps = grid_steps(drive.t_end, dt);
        drive.dt = drive.t_end / steps;
        drive.samples.resize(static_cast<std::size_t>(steps) + 1);
        for (int k = 0; k <= steps; ++k) {
            const double t = k * drive.dt;
            drive.samples[k] = epsilon * target.value(target.phi_max - omega * t) * std::exp(-0.5 * kappa * t);
        }
    }
    return drive;
}

DriveWaveform cat_pulse(double phi_sep, double rel_phase, double omega, double kappa, double epsilon) {
    require_rate(omega, "omega");
    if (kappa < 0.0) throw std::invalid_argument("kappa must be non-negative");
    if (!(phi_sep > 0.0) || phi_sep > kTwoPi + 1e-12)
        throw std::invalid_argument(fmt::format("cat separation {} outside (0, 2π]", phi_sep));
    const double t_sep = phi_sep / omega;
    const cplx first = epsilon / (std::sqrt(2.0) * omega);
    DriveWaveform drive;
    drive.epsilon = epsilon;
    drive.t_end = t_sep;
    drive.deltas = {{0.0, first}, {t_sep, first * std::polar(std::exp(-0.5 * kappa * t_sep), rel_phase)}};
    return drive;
}

std::vector<cplx> expansion_coefficients(const SystemModel& system, const Vec& state, int count) {
    std::vector<cplx> out(static_cast<std::size_t>(count));
    if (is_spin(system)) {
        for (int k = 0; k < count; ++k) out[k] = state[k];
        return out;
    }
    const auto& mech = std::get<MechModel>(system);
    for (int k = 0; k < count; ++k) out[k] = displaced_fock_state(mech, k).dot(state);
    return out;
}

DriveWaveform synthesize_from_coeffs(const CoeffTarget& target, const Vec& initial, const SystemModel& system,
                                     double kappa, double epsilon, const SynthesisOptions& options) {
    validate(system);
    if (kappa < 0.0) throw std::invalid_argument("kappa must be non-negative");
    const bool basis_ok = is_spin(system) == (target.basis == CoeffBasis::dicke);
    if (!basis_ok) throw std::invalid_argument("coefficient basis does not match the system type");
    const int dim = matter_dim(system);
    if (static_cast<int>(target.coeffs.size()) > dim) throw std::invalid_argument("more target coefficients than basis states");
    if (!(target.phi_max > 0.0) || target.phi_max > kTwoPi + 1e-12)
        throw std::invalid_argument("phi_max must lie in (0, 2π]");
    double norm2 = 0.0;
    for (const auto& c : target.coeffs) norm2 += std::norm(c);
    if (std::abs(norm2 - 1.0) > 1e-6) throw std::invalid_argument(fmt::format("target coefficients have norm² {}", norm2));

    const double omega = rotation_rate(system);
    require_rate(omega, "rotation rate");
    const auto labels = basis_labels(system);
    int support_end = 0;
    for (int k = 0; k < static_cast<int>(target.coeffs.size()); ++k)
        if (target.coeffs[k] != cplx{}) support_end = k + 1;
    const auto c0 = expansion_coefficients(system, initial, support_end);
    double c0_scale = 0.0;
    for (const auto& c : c0) c0_scale = std::max(c0_scale, std::abs(c));

    struct Component {
        double label;
        cplx ratio;
    };
    std::vector<Component> comps;
    double max_label = 0.0;
    for (int k = 0; k < support_end; ++k) {
        if (target.coeffs[k] == cplx{}) continue;
        if (std::abs(c0[k]) <= 1e-14 * std::max(c0_scale, 1e-300)) {
            throw UnreachableTargetError(fmt::format("target weight on basis state {} but the initial state has none", k));
        }
        comps.push_back({labels[k], target.coeffs[k] / c0[k]});
        max_label = std::max(max_label, std::abs(labels[k]));
    }

    DriveWaveform drive;
    drive.epsilon = epsilon;
    drive.t_end = target.phi_max / omega;
    double dt = default_sample_spacing(omega, max_label, kappa);
    if (options.dt_max) dt = std::min(dt, *options.dt_max);
    const int steps = grid_steps(drive.t_end, std::min(dt, drive.t_end / 2.0));
    drive.dt = drive.t_end / steps;
    drive.samples.resize(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        const double t = k * drive.dt;
        cplx sum{};
        for (const auto& c : comps) sum += c.ratio * std::polar(1.0, -omega * c.label * t);
        drive.samples[k] = epsilon / kTwoPi * sum * std::exp(-0.5 * kappa * t);
    }
    return drive;
}

double mech_qubit_normalization(double x1) {
    if (!(x1 > 0.0)) throw std::invalid_argument("X1 must be positive");
    return std::exp(0.5 * x1 * x1) / (kTwoPi * std::sqrt(2.0) * x1);
}

DriveWaveform mech_qubit_pulse(const MechModel& mech, double kappa, double epsilon, const SynthesisOptions& options) {
    validate(mech);
    const double x1 = mech.x1();
    const double amp = mech_qubit_normalization(x1);
    const double omega = mech.omega_m;
    DriveWaveform drive;
    drive.epsilon = epsilon;
    drive.t_end = kTwoPi / omega;
    double dt = default_sample_spacing(omega, std::max(std::abs(mech.mu()), std::abs(1.0 - mech.mu())), kappa);
    // The |1> term is 1/X1 larger than the |0> term, so its interpolation error has to stay
    // well below X1: the cubic error of the spline needs (Ω dt)³ ≲ 0.02 X1.
    dt = std::min(dt, std::cbrt(0.02 * x1) / omega);
    if (options.dt_max) dt = std::min(dt, *options.dt_max);
    const int steps = grid_steps(drive.t_end, dt);
    drive.dt = drive.t_end / steps;
    drive.samples.resize(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        const double t = k * drive.dt;
        drive.samples[k] = epsilon * amp * std::polar(std::exp(-0.5 * kappa * t), x1 * x1 * omega * t) *
                           (x1 + std::polar(1.0, -omega * t));
    }
    return drive;
}

std::vector<cplx> fourier_weights(const WeightTarget& target, const std::vector<double>& labels, double tol) {
    std::vector<cplx> out(labels.size());
    for (const auto& atom : target.atoms)
        for (std::size_t i = 0; i < labels.size(); ++i) out[i] += atom.weight * std::polar(1.0, -labels[i] * atom.phi);
    if (target.samples.size() < 2) return out;

    const auto integrate = [&](int intervals) {
        std::vector<cplx> acc(labels.size());
        const double h = target.phi_max / intervals;
        for (int j = 0; j <= intervals; ++j) {
            const double phi = j * h;
            const double w = (j == 0 || j == intervals) ? 0.5 * h : h;
            const cplx f = target.value(phi);
            if (f == cplx{}) continue;
            for (std::size_t i = 0; i < labels.size(); ++i) acc[i] += w * f * std::polar(1.0, -labels[i] * phi);
        }
        return acc;
    };
    int intervals = std::max<int>(64, static_cast<int>(target.samples.size() - 1));
    auto prev = integrate(intervals);
    for (int level = 0; level < 20; ++level) {
        intervals *= 2;
        auto next = integrate(intervals);
        double change = 0.0;
        double scale = 1.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            change = std::max(change, std::abs(next[i] - prev[i]));
            scale = std::max(scale, std::abs(next[i]));
        }
        prev = std::move(next);
        if (change < tol * scale) break;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] += prev[i];
    return out;
}

nlohmann::json waveform_to_json(const DriveWaveform& drive) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : drive.samples) samples.push_back({s.real(), s.imag()});
    nlohmann::json deltas = nlohmann::json::array();
    for (const auto& d : drive.deltas) deltas.push_back({{"t", d.t}, {"re", d.area.real()}, {"im", d.area.imag()}});
    return {{"dt", drive.dt}, {"samples", samples}, {"deltas", deltas}, {"t_end", drive.t_end}, {"epsilon", drive.epsilon}};
}

DriveWaveform waveform_from_json(const nlohmann::json& j) {
    DriveWaveform drive;
    drive.dt = j.at("dt").get<double>();
    drive.t_end = j.at("t_end").get<double>();
    drive.epsilon = j.at("epsilon").get<double>();
    for (const auto& s : j.at("samples")) drive.samples.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
    for (const auto& d : j.at("deltas"))
        drive.deltas.push_back({d.at("t").get<double>(), {d.at("re").get<double>(), d.at("im").get<double>()}});
    if (drive.has_samples()) {
        const double span = drive.dt * static_cast<double>(drive.samples.size() - 1);
        if (!(drive.dt > 0.0) || std::abs(span - drive.t_end) > 1e-9 * std::max(1.0, std::abs(drive.t_end)))
            throw std::invalid_argument("waveform samples do not span [0, t_end] on the stated grid");
    }
    for (const auto& d : drive.deltas)
        if (d.t < 0.0 || d.t > drive.t_end * (1.0 + 1e-12)) throw std::invalid_argument("delta atom outside [0, t_end]");
    return drive;
}

void save_waveform(const DriveWaveform& drive, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << waveform_to_json(drive).dump(2) << '\n';
}

DriveWaveform load_waveform(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    return waveform_from_json(nlohmann::json::parse(in));
}

}  // namespace paintbrush
