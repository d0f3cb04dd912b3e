#include "paintbrush/herald.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace paintbrush {

void validate(const DetectorModel& detector) {
    if (!(detector.q > 0.0 && detector.q <= 1.0)) throw std::invalid_argument("quantum efficiency must lie in (0, 1]");
    if (!(detector.r_d >= 0.0)) throw std::invalid_argument("dark-count rate must be non-negative");
}

CooperativityInput CooperativityInput::from_rates(double g_rabi, double gamma, double kappa, int n_atoms) {
    if (!(gamma > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("gamma and kappa must be positive");
    return {g_rabi * g_rabi / (kappa * gamma), n_atoms};
}

CooperativityLimits cooperativity_limits(const CooperativityInput& input, double omega_s,
                                         std::optional<double> requested_phi_c) {
    if (!(input.eta > 0.0)) throw std::invalid_argument("cooperativity must be positive");
    if (input.n_atoms < 1) throw std::invalid_argument("atom number must be positive");
    CooperativityLimits out;
    out.phi_c_max = std::sqrt(input.eta / (2.0 * input.n_atoms));
    out.cat_size_max = std::sqrt(input.eta / 2.0);
    out.phi_c = requested_phi_c.value_or(out.phi_c_max);
    if (!(out.phi_c > 0.0)) throw std::invalid_argument("phase per lifetime must be positive");
    out.flagged = out.phi_c > out.phi_c_max * (1.0 + 1e-12);
    out.kappa_n = std::abs(omega_s) / out.phi_c;
    return out;
}

CooperativityCavity cavity_from_cooperativity(const CooperativityInput& input, double kappa, int n_c_max) {
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    const double phi_c_max = cooperativity_limits(input, 1.0).phi_c_max;
    CooperativityCavity out;
    out.spin = SpinModel{input.n_atoms, 2.0 * kappa * phi_c_max};
    out.cavity = CavityModel{kappa, kappa, n_c_max};
    out.limits = cooperativity_limits(input, out.spin.omega_s);
    return out;
}

Vec target_cat(const SystemModel& system, double phi_sep, double rel_phase, double t_d) {
    const U1Evaluator u1(system);
    const Vec initial = default_initial_state(system);
    const double sep_time = phi_sep / rotation_rate(system);
    Vec sum = u1.apply(t_d, initial) + std::polar(1.0, rel_phase) * u1.apply(t_d - sep_time, initial);
    return normalized(sum);
}

namespace {

std::vector<double> eigen_labels(const U1Evaluator& u1, const SystemModel& system) {
    const double omega = rotation_rate(system);
    std::vector<double> labels(static_cast<std::size_t>(u1.eigenvalues().size()));
    for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = u1.eigenvalues()[static_cast<Eigen::Index>(k)] / omega;
    return labels;
}

void rotate_eigen(Vec& coeffs, const std::vector<double>& labels, double angle) {
    for (Eigen::Index k = 0; k < coeffs.size(); ++k) coeffs[k] *= std::polar(1.0, -labels[k] * angle);
}

}  // namespace

Vec target_from_weight(const SystemModel& system, const Vec& initial, const WeightTarget& target, double t_d) {
    const U1Evaluator u1(system);
    const auto labels = eigen_labels(u1, system);
    const auto weights = fourier_weights(target, labels);
    Vec c = u1.to_eigen(initial);
    for (Eigen::Index k = 0; k < c.size(); ++k) c[k] *= weights[k];
    rotate_eigen(c, labels, rotation_rate(system) * t_d - target.phi_max);
    return normalized(u1.from_eigen(c));
}

Vec target_from_coeffs(const SystemModel& system, const CoeffTarget& target, double t_d) {
    const int dim = matter_dim(system);
    if (static_cast<int>(target.coeffs.size()) > dim) throw std::invalid_argument("more target coefficients than basis states");
    Vec state = Vec::Zero(dim);
    if (const auto* mech = std::get_if<MechModel>(&system)) {
        if (target.basis != CoeffBasis::displaced_fock) throw std::invalid_argument("mechanics targets use the displaced-Fock basis");
        for (std::size_t m = 0; m < target.coeffs.size(); ++m)
            if (target.coeffs[m] != cplx{}) state += target.coeffs[m] * displaced_fock_state(*mech, static_cast<int>(m));
    } else {
        if (target.basis != CoeffBasis::dicke) throw std::invalid_argument("spin targets use the Dicke basis");
        for (std::size_t m = 0; m < target.coeffs.size(); ++m) state[static_cast<Eigen::Index>(m)] = target.coeffs[m];
    }
    const U1Evaluator u1(system);
    return normalized(u1.apply(t_d - target.phi_max / rotation_rate(system), state));
}

double fidelity_eps(const Vec& psi1, const Vec& target) {
    if (psi1.size() != target.size()) throw std::invalid_argument("state sizes differ");
    const double n2 = psi1.squaredNorm();
    if (!(n2 > 0.0)) throw std::invalid_argument("heralded state has zero norm");
    return std::clamp(std::norm(target.dot(psi1)) / n2, 0.0, 1.0);
}

RotatedFidelity fidelity_eps_rotated(const Vec& psi1, const Vec& target, const SystemModel& system) {
    if (psi1.size() != target.size()) throw std::invalid_argument("state sizes differ");
    const double n2 = psi1.squaredNorm();
    if (!(n2 > 0.0)) throw std::invalid_argument("heralded state has zero norm");
    const U1Evaluator u1(system);
    const auto labels = eigen_labels(u1, system);
    const Vec a = u1.to_eigen(target);
    const Vec b = u1.to_eigen(psi1);
    Vec w(a.size());
    for (Eigen::Index k = 0; k < a.size(); ++k) w[k] = std::conj(a[k]) * b[k];
    const auto overlap = [&](double angle) {
        cplx s{};
        for (Eigen::Index k = 0; k < w.size(); ++k)
            if (w[k] != cplx{}) s += w[k] * std::polar(1.0, labels[k] * angle);
        return std::norm(s) / n2;
    };
    constexpr int coarse = 720;
    const double step = kTwoPi / coarse;
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i < coarse; ++i) {
        const double v = overlap(i * step);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    // Golden-section refinement around the best coarse point.
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = (best - 1) * step;
    double hi = (best + 1) * step;
    double x1 = hi - g * (hi - lo);
    double x2 = lo + g * (hi - lo);
    double f1 = overlap(x1);
    double f2 = overlap(x2);
    while (hi - lo > 1e-6) {
        if (f1 > f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = overlap(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = overlap(x2);
        }
    }
    const double angle = 0.5 * (lo + hi);
    RotatedFidelity out;
    out.fidelity = std::clamp(std::max(overlap(angle), best_val), 0.0, 1.0);
    out.angle = std::remainder(angle, kTwoPi);
    return out;
}

double rotation_invariant_overlap(const Vec& a, const Vec& b, const SystemModel& system) {
    return fidelity_eps_rotated(b, normalized(a), system).fidelity;
}

double fidelity_min(double f_eps, double r_s, double r_t, const DetectorModel& detector) {
    validate(detector);
    const double denom = r_t + detector.r_d / detector.q;
    if (!(denom > 0.0)) return 0.0;
    return f_eps * r_s / denom;
}

CellSetup resolve_cell(const Scenario& scenario, const SweepCell& cell) {
    CellSetup s;
    s.system = scenario.system;
    s.cavity = scenario.cavity;
    if (std::isfinite(cell.eta)) {
        const auto* spin = std::get_if<SpinModel>(&scenario.system);
        if (!spin) throw std::invalid_argument("cooperativity applies to the spin system only");
        const auto cc = cavity_from_cooperativity({cell.eta, spin->n_atoms}, scenario.cavity.kappa, scenario.cavity.n_c_max);
        s.system = cc.spin;
        s.cavity = cc.cavity;
    }
    validate(s.system);
    validate(s.cavity);
    const double omega = rotation_rate(s.system);
    double eps_ratio = cell.eps_over_omega;
    if (!std::isfinite(eps_ratio) && scenario.waveform)
        eps_ratio = scenario.waveform->epsilon > 0.0 ? scenario.waveform->epsilon / omega : 1e-3;
    if (!std::isfinite(eps_ratio)) throw std::invalid_argument("cell has no drive strength");
    const double eps = eps_ratio * omega;
    const double kn = s.cavity.kappa_n();
    s.detector = detector_for_ratio(scenario.detector, cell.rd_over_qkappa, s.cavity);
    s.initial = scenario.initial.value_or(default_initial_state(s.system));
    if (s.initial.size() != matter_dim(s.system)) throw std::invalid_argument("initial state has the wrong dimension");

    const bool spin = is_spin(s.system);
    const auto& preset = scenario.preset;
    const auto require = [&](bool want_spin) {
        if (want_spin != spin)
            throw std::invalid_argument(fmt::format("preset {} needs a {} system", preset, want_spin ? "spin" : "mechanical"));
    };
    const SystemModel sys = s.system;
    if (preset == "cat-spin" || preset == "cat-mech") {
        require(preset == "cat-spin");
        const double phi = std::isfinite(cell.phi) ? cell.phi : scenario.phi_sep;
        const double rel = scenario.rel_phase;
        s.drive = cat_pulse(phi, rel, omega, kn, eps);
        s.target = [sys, phi, rel](double t) { return target_cat(sys, phi, rel, t); };
    } else if (preset == "dicke" || preset == "fock") {
        require(preset == "dicke");
        CoeffTarget target;
        int index = scenario.level;
        if (spin) {
            const auto& sp = std::get<SpinModel>(sys);
            index = static_cast<int>(std::lround(scenario.level + sp.j()));
            if (std::abs(index - sp.j() - scenario.level) > 1e-9 || index < 0 || index >= sp.dim())
                throw std::invalid_argument(fmt::format("Dicke level m={} does not exist for N={}", scenario.level, sp.n_atoms));
            target.basis = CoeffBasis::dicke;
        } else {
            if (index < 0 || index >= matter_dim(sys)) throw std::invalid_argument("Fock level outside the phonon cutoff");
            target.basis = CoeffBasis::displaced_fock;
        }
        target.coeffs.assign(static_cast<std::size_t>(index + 1), cplx{});
        target.coeffs[static_cast<std::size_t>(index)] = 1.0;
        s.drive = synthesize_from_coeffs(target, s.initial, sys, kn, eps);
        s.target = [sys, target](double t) { return target_from_coeffs(sys, target, t); };
        s.rotate = true;
    } else if (preset == "mech-qubit") {
        require(false);
        s.drive = mech_qubit_pulse(std::get<MechModel>(sys), kn, eps);
        CoeffTarget target{{std::sqrt(0.5), std::sqrt(0.5)}, CoeffBasis::displaced_fock, kTwoPi};
        s.target = [sys, target](double t) { return target_from_coeffs(sys, target, t); };
        s.rotate = true;
    } else if (preset == "paint") {
        if (!scenario.weight) throw std::invalid_argument("paint preset needs a weight function");
        const WeightTarget weight = *scenario.weight;
        const Vec initial = s.initial;
        s.drive = synthesize_from_weight(weight, omega, kn, eps);
        s.target = [sys, initial, weight](double t) { return target_from_weight(sys, initial, weight, t); };
        s.rotate = true;
    } else {
        throw std::invalid_argument(fmt::format("unknown preset '{}'", preset));
    }
    if (scenario.waveform) s.drive = *scenario.waveform;
    s.t_d = std::isfinite(cell.t_d) ? cell.t_d : s.drive.t_end;
    return s;
}

namespace {

double rated_fidelity(const CellSetup& s, const Vec& psi1, double t_d) {
    if (!(psi1.squaredNorm() > 0.0)) return 0.0;
    const Vec target = s.target(t_d);
    return s.rotate ? fidelity_eps_rotated(psi1, target, s.system).fidelity : fidelity_eps(psi1, target);
}

}  // namespace

SweepRow evaluate_cell(const Scenario& scenario, const SweepCell& cell) {
    SweepRow row;
    row.preset = scenario.preset;
    row.cell = cell;
    const CellSetup s = resolve_cell(scenario, cell);
    row.cell.t_d = s.t_d;
    if (scenario.preset.rfind("cat", 0) == 0 && !std::isfinite(cell.phi)) row.cell.phi = scenario.phi_sep;
    const auto h = heralded_state(s.initial, s.system, s.cavity, s.drive, s.t_d, {}, scenario.options);
    row.r_s = h.r_s;
    row.r_t = transmission_rate(s.initial, s.system, s.cavity, s.drive, s.t_d, scenario.options);
    row.f_eps = rated_fidelity(s, h.psi1, s.t_d);
    row.f_min = fidelity_min(row.f_eps, row.r_s, row.r_t, s.detector);
    return row;
}

DetectionSeries detection_series(const Scenario& scenario, const SweepCell& cell, double t0, double t1, int points) {
    if (!(t1 > t0) || points < 2) throw std::invalid_argument("averaging window needs t1 > t0 and two points");
    const CellSetup s = resolve_cell(scenario, cell);
    DetectionSeries out;
    for (int i = 0; i < points; ++i) out.t_d.push_back(t0 + (t1 - t0) * i / (points - 1));
    const auto heralded = heralded_states(s.initial, s.system, s.cavity, s.drive, out.t_d, scenario.options);
    out.r_t = transmission_rates(s.initial, s.system, s.cavity, s.drive, out.t_d, scenario.options);
    for (int i = 0; i < points; ++i) {
        out.r_s.push_back(heralded[i].r_s);
        out.f_eps.push_back(rated_fidelity(s, heralded[i].psi1, out.t_d[i]));
    }
    return out;
}

AveragedFidelity average_over_detection(const DetectionSeries& series, const DetectorModel& detector) {
    const std::size_t n = series.t_d.size();
    if (n < 2) throw std::invalid_argument("series needs two points");
    AveragedFidelity out;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        total += w;
        out.f_eps += w * series.f_eps[i];
        out.f_min += w * fidelity_min(series.f_eps[i], series.r_s[i], series.r_t[i], detector);
        out.r_s += w * series.r_s[i];
        out.r_t += w * series.r_t[i];
    }
    out.f_eps /= total;
    out.f_min /= total;
    out.r_s /= total;
    out.r_t /= total;
    return out;
}

AveragedFidelity averaged_f_min(const Scenario& scenario, const SweepCell& cell, double t0, double t1, int points) {
    const auto series = detection_series(scenario, cell, t0, t1, points);
    const CellSetup s = resolve_cell(scenario, cell);
    return average_over_detection(series, s.detector);
}

DetectorModel detector_for_ratio(DetectorModel base, double rd_over_qkappa, const CavityModel& cavity) {
    if (!(rd_over_qkappa >= 0.0)) throw std::invalid_argument("dark-count ratio must be non-negative");
    base.r_d = rd_over_qkappa * base.q * cavity.kappa;
    validate(base);
    return base;
}

bool is_physics_error(const std::exception& e) {
    return dynamic_cast<const CutoffError*>(&e) || dynamic_cast<const UnreachableTargetError*>(&e) ||
           dynamic_cast<const StepUnderflowError*>(&e) || dynamic_cast<const QuadratureError*>(&e);
}

namespace {

const std::vector<double>& axis(const SweepPlan& plan, const std::string& name) {
    if (name == "eps_over_omega") return plan.eps_over_omega;
    if (name == "phi") return plan.phi;
    if (name == "t_d") return plan.t_d;
    if (name == "eta") return plan.eta;
    if (name == "rd_over_qkappa") return plan.rd_over_qkappa;
    throw std::invalid_argument(fmt::format("unknown sweep axis '{}'", name));
}

void set_axis(SweepCell& cell, const std::string& name, double v) {
    if (name == "eps_over_omega") cell.eps_over_omega = v;
    else if (name == "phi") cell.phi = v;
    else if (name == "t_d") cell.t_d = v;
    else if (name == "eta") cell.eta = v;
    else cell.rd_over_qkappa = v;
}

}  // namespace

std::size_t SweepPlan::size() const {
    std::size_t n = 1;
    bool any = false;
    for (const auto& name : order) {
        const auto& a = axis(*this, name);
        if (a.empty()) continue;
        any = true;
        n *= a.size();
    }
    // A plan without a drive-strength axis has nothing to evaluate.
    if (!any || eps_over_omega.empty()) return 0;
    return n;
}

std::vector<SweepCell> SweepPlan::cells() const {
    std::vector<std::string> used;
    for (const auto& name : order)
        if (!axis(*this, name).empty()) used.push_back(name);
    for (const char* name : {"eps_over_omega", "phi", "t_d", "eta", "rd_over_qkappa"})
        if (!axis(*this, name).empty() && std::find(used.begin(), used.end(), name) == used.end())
            throw std::invalid_argument(fmt::format("axis '{}' missing from the sweep order", name));
    const std::size_t total = size();
    std::vector<SweepCell> out;
    out.reserve(total);
    std::vector<std::size_t> idx(used.size(), 0);
    for (std::size_t c = 0; c < total; ++c) {
        SweepCell cell;
        for (std::size_t a = 0; a < used.size(); ++a) set_axis(cell, used[a], axis(*this, used[a])[idx[a]]);
        out.push_back(cell);
        for (std::size_t a = used.size(); a-- > 0;) {
            if (++idx[a] < axis(*this, used[a]).size()) break;
            idx[a] = 0;
        }
    }
    return out;
}

std::vector<SweepRow> sweep(const std::vector<SweepCell>& cells,
                            const std::function<SweepRow(const SweepCell&)>& evaluate, int jobs,
                            const CellCallback& on_row) {
    std::vector<SweepRow> rows(cells.size());
    std::vector<char> done(cells.size(), 0);
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::size_t emitted = 0;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            SweepRow row;
            try {
                row = evaluate(cells[i]);
            } catch (const std::exception& e) {
                row = SweepRow{};
                row.cell = cells[i];
                row.error = e.what();
                row.physics_failure = is_physics_error(e);
            }
            std::lock_guard lock(mutex);
            rows[i] = std::move(row);
            done[i] = 1;
            while (emitted < rows.size() && done[emitted]) {
                if (on_row) on_row(emitted, rows[emitted]);
                ++emitted;
            }
        }
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(std::max<std::size_t>(cells.size(), 1))));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    return rows;
}

std::vector<SweepRow> sweep(const Scenario& scenario, const SweepPlan& plan, int jobs, const CellCallback& on_row) {
    const auto evaluate = [&](const SweepCell& cell) {
        try {
            return evaluate_cell(scenario, cell);
        } catch (const std::exception& e) {
            SweepRow row;
            row.preset = scenario.preset;
            row.cell = cell;
            row.error = e.what();
            row.physics_failure = is_physics_error(e);
            return row;
        }
    };
    return sweep(plan.cells(), evaluate, jobs, on_row);
}

std::string sweep_csv_header() { return "preset,eps_over_omega,phi,t_d,eta,rd_over_qkappa,r_s,r_t,f_eps,f_min"; }

std::string sweep_csv_line(const SweepRow& row) {
    return fmt::format("{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", row.preset,
                       row.cell.eps_over_omega, row.cell.phi, row.cell.t_d, row.cell.eta, row.cell.rd_over_qkappa,
                       row.r_s, row.r_t, row.f_eps, row.f_min);
}

nlohmann::json sweep_row_json(const SweepRow& row) {
    const auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    nlohmann::json j{{"preset", row.preset},
                     {"eps_over_omega", num(row.cell.eps_over_omega)},
                     {"phi", num(row.cell.phi)},
                     {"t_d", num(row.cell.t_d)},
                     {"eta", num(row.cell.eta)},
                     {"rd_over_qkappa", num(row.cell.rd_over_qkappa)},
                     {"r_s", num(row.r_s)},
                     {"r_t", num(row.r_t)},
                     {"f_eps", num(row.f_eps)},
                     {"f_min", num(row.f_min)}};
    if (!row.error.empty()) j["error"] = row.error;
    return j;
}

}  // namespace paintbrush
