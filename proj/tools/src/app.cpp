#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace paintbrush::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const char* const kVersion = "0.1.0";

json number(double v) { return std::isfinite(v) ? json(v) : json(); }

bool wants(const RunConfig& c, const std::string& format) {
    return std::find(c.formats.begin(), c.formats.end(), format) != c.formats.end();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << text;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

/// Output directory holding the resolved config echo and the metadata record.
class Output {
  public:
    Output(const RunConfig& config, std::string command) : config_(config), dir_(config.directory) {
        fs::create_directories(dir_);
        write_text(dir_ / "config.yaml", to_yaml(config_));
        meta_["program"] = "paintbrush";
        meta_["version"] = kVersion;
        meta_["command"] = std::move(command);
        meta_["preset"] = config_.preset;
        meta_["config"] = "config.yaml";
        meta_["files"] = json::array({"config.yaml", "metadata.json"});
    }

    fs::path path(const std::string& name) {
        meta_["files"].push_back(name);
        return dir_ / name;
    }
    json& meta() { return meta_; }

    void finish(int status) {
        meta_["exit_status"] = status;
        meta_["created"] = utc_timestamp();
        write_text(dir_ / "metadata.json", meta_.dump(2) + "\n");
    }

  private:
    const RunConfig& config_;
    fs::path dir_;
    json meta_;
};

/// Rows are written as soon as they are final so a long run leaves usable partial output.
class RowWriter {
  public:
    RowWriter(Output& out, const RunConfig& config) : json_(wants(config, "json")) {
        csv_.open(out.path("results.csv"), std::ios::binary);
        if (!csv_) throw std::runtime_error("cannot write results.csv");
        csv_ << sweep_csv_header() << '\n' << std::flush;
        if (json_) json_path_ = out.path("results.json");
        rows_ = json::array();
    }

    void add(const SweepRow& row) {
        csv_ << sweep_csv_line(row) << '\n' << std::flush;
        if (json_) rows_.push_back(sweep_row_json(row));
        if (!row.error.empty()) (row.physics_failure ? physics_ : invalid_)++;
        ++count_;
    }

    void close() {
        csv_.close();
        if (json_) write_text(json_path_, rows_.dump(2) + "\n");
    }

    std::size_t count() const { return count_; }
    std::size_t physics_failures() const { return physics_; }
    std::size_t invalid() const { return invalid_; }

  private:
    std::ofstream csv_;
    bool json_ = false;
    fs::path json_path_;
    json rows_;
    std::size_t count_ = 0, physics_ = 0, invalid_ = 0;
};

int worker_count(int jobs) {
    if (jobs > 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string describe(const SweepCell& c) {
    std::string s = fmt::format("eps/omega={:.3g}", c.eps_over_omega);
    if (std::isfinite(c.phi)) s += fmt::format(" phi={:.4g}", c.phi);
    if (std::isfinite(c.t_d)) s += fmt::format(" t_d={:.4g}", c.t_d);
    if (std::isfinite(c.eta)) s += fmt::format(" eta={:.4g}", c.eta);
    return s;
}

double detection_time(const RunConfig& c) {
    if (c.t_d) return *c.t_d;
    if (c.average) return c.average->from;
    return std::numeric_limits<double>::quiet_NaN();
}

SweepCell base_cell(const RunConfig& c, double eps) {
    SweepCell cell;
    cell.eps_over_omega = eps;
    cell.t_d = c.t_d ? *c.t_d : std::numeric_limits<double>::quiet_NaN();
    if (c.eta) cell.eta = *c.eta;
    return cell;
}

/// Normalized heralded state for the first drive strength of the config.
Vec heralded_for_display(const RunConfig& c, const Scenario& scenario, SweepCell& cell) {
    if (c.eps_over_omega.empty()) throw ConfigError("drive.eps_over_omega is empty");
    cell = base_cell(c, c.eps_over_omega.front());
    cell.t_d = detection_time(c);
    const CellSetup s = resolve_cell(scenario, cell);
    cell.t_d = s.t_d;
    const auto h = heralded_state(s.initial, s.system, s.cavity, s.drive, s.t_d, {}, scenario.options);
    return normalized(h.psi1);
}

json peaks_json(const std::vector<Peak>& peaks, const char* n0, const char* n1) {
    json out = json::array();
    for (const auto& p : peaks) out.push_back({{n0, p.a0}, {n1, p.a1}, {"value", p.value}});
    return out;
}

/// Wigner summary: normalization, negativity, peaks and the separation of the outermost two.
json wigner_summary(const PhaseSpaceGrid& grid) {
    const auto neg = negativity(grid);
    const auto peaks = find_peaks(grid, 0.2);
    json j{{"integral", grid.integral()},
           {"min_value", neg.min_value},
           {"negative_volume", neg.negative_volume},
           {"peaks", peaks_json(std::vector<Peak>(peaks.begin(), peaks.begin() + std::min<std::size_t>(peaks.size(), 4)),
                                "x", "p")}};
    if (peaks.size() >= 2) {
        const double d = outer_peak_distance(peaks);
        j["lobe_separation_quadrature"] = d;
        j["lobe_separation"] = d / std::sqrt(2.0);  // in units of the displacement a
    }
    return j;
}

PhaseSpaceGrid wigner_grid(const RunConfig& c, const Vec& psi) {
    cplx mean_a{};
    for (Eigen::Index k = 0; k + 1 < psi.size(); ++k) mean_a += std::conj(psi[k]) * std::sqrt(k + 1.0) * psi[k + 1];
    WignerOptions w;
    w.center_x = std::sqrt(2.0) * mean_a.real();
    w.center_p = std::sqrt(2.0) * mean_a.imag();
    w.half_width = c.wigner_half_width;
    w.spacing = c.wigner_spacing;
    return wigner(psi, w);
}

void emit_grid(Output& out, const RunConfig& c, const PhaseSpaceGrid& grid, const std::string& stem, bool force_csv) {
    if (force_csv || wants(c, "csv")) write_grid_csv(out.path(stem + ".csv"), grid);
    if (wants(c, "svg")) write_grid_svg(out.path(stem + ".svg"), grid);
}

/// Phase-space picture of the heralded state: Wigner for mechanics, Husimi Q for spins.
json phase_space(Output& out, const RunConfig& c, const Scenario& scenario, bool force_csv, std::ostream& log) {
    SweepCell cell;
    const Vec psi = heralded_for_display(c, scenario, cell);
    json j{{"eps_over_omega", cell.eps_over_omega}, {"t_d", cell.t_d}};
    if (const auto* spin = std::get_if<SpinModel>(&c.system)) {
        log << fmt::format("paintbrush: Husimi Q at t_d={:.4g}\n", cell.t_d);
        const auto grid = husimi_sphere(*spin, psi, c.husimi_theta, c.husimi_phi);
        emit_grid(out, c, grid, "husimi", force_csv);
        const auto peaks = find_peaks(grid, 0.2);
        j["kind"] = "husimi";
        j["integral"] = grid.integral();
        j["peaks"] = peaks_json(std::vector<Peak>(peaks.begin(), peaks.begin() + std::min<std::size_t>(peaks.size(), 4)),
                                "theta", "phi");
    } else {
        log << fmt::format("paintbrush: Wigner function at t_d={:.4g}\n", cell.t_d);
        const auto grid = wigner_grid(c, psi);
        emit_grid(out, c, grid, "wigner", force_csv);
        j.update(wigner_summary(grid));
        j["kind"] = "wigner";
    }
    return j;
}

json preset_summary(const RunConfig& c, const std::vector<SweepRow>& base_rows) {
    json j = json::object();
    if (const auto* mech = std::get_if<MechModel>(&c.system)) {
        const double x1 = mech->x1();
        j["x1"] = x1;
        j["x1_squared"] = x1 * x1;
        if (c.preset == "mech-qubit") {
            const double a = mech_qubit_normalization(x1);
            j["expected_suppression"] = 8.0 * kPi * kPi * x1 * x1 * std::exp(-x1 * x1);
            json measured = json::array();
            for (const auto& row : base_rows) {
                // rate relative to an unshaped drive of the same peak scale ε A
                const double ref = c.cavity.kappa * std::pow(row.cell.eps_over_omega * a, 2) *
                                   std::exp(-c.cavity.kappa_n() * row.cell.t_d);
                measured.push_back({{"eps_over_omega", row.cell.eps_over_omega}, {"suppression", number(row.r_t / ref)}});
            }
            j["suppression"] = measured;
        }
    }
    if (c.eta) {
        const auto& spin = std::get<SpinModel>(c.system);
        const auto lim = cooperativity_limits({*c.eta, spin.n_atoms}, spin.omega_s, c.phi);
        j["cooperativity"] = {{"eta", *c.eta},
                              {"phi_c_max", lim.phi_c_max},
                              {"cat_size_max", lim.cat_size_max},
                              {"flagged", lim.flagged}};
    }
    if (c.average) j["average"] = {{"from", c.average->from}, {"to", c.average->to}, {"points", c.average->points}};
    return j;
}

int status_of(const RowWriter& rows) {
    if (rows.physics_failures() > 0) return kExitPhysics;
    if (rows.invalid() > 0) return kExitConfig;
    return kExitOk;
}

int run_preset(const RunConfig& c, const fs::path& base_dir, int jobs, std::ostream& log) {
    const Scenario scenario = build_scenario(c, base_dir);
    if (c.eps_over_omega.empty()) throw ConfigError("drive.eps_over_omega is empty");
    const std::vector<double> rd = c.rd_over_qkappa.empty() ? std::vector<double>{0.0} : c.rd_over_qkappa;

    std::vector<SweepCell> cells;
    for (double eps : c.eps_over_omega) cells.push_back(base_cell(c, eps));

    // One evaluation per drive strength; the dark-count ladder only changes F_min.
    std::vector<std::optional<DetectionSeries>> series(cells.size());
    std::mutex series_mutex;
    const auto evaluate = [&](const SweepCell& cell) {
        if (!c.average) return evaluate_cell(scenario, cell);
        auto s = detection_series(scenario, cell, c.average->from, c.average->to, c.average->points);
        const auto avg = average_over_detection(s, scenario.detector);
        SweepRow row;
        row.preset = scenario.preset;
        row.cell = cell;
        if (!std::isfinite(row.cell.phi) && scenario.preset.rfind("cat", 0) == 0) row.cell.phi = scenario.phi_sep;
        row.r_s = avg.r_s;
        row.r_t = avg.r_t;
        row.f_eps = avg.f_eps;
        row.f_min = avg.f_min;
        const auto at = std::find_if(cells.begin(), cells.end(), [&](const SweepCell& x) {
            return x.eps_over_omega == cell.eps_over_omega;
        });
        std::lock_guard lock(series_mutex);
        series[static_cast<std::size_t>(at - cells.begin())] = std::move(s);
        return row;
    };

    Output out(c, c.preset);
    RowWriter writer(out, c);
    std::vector<SweepRow> base_rows;
    const auto on_row = [&](std::size_t i, const SweepRow& row) {
        log << fmt::format("paintbrush: [{}/{}] {}{}\n", i + 1, cells.size(), describe(row.cell),
                           row.error.empty() ? "" : " failed: " + row.error);
        base_rows.push_back(row);
        for (double r : rd) {
            SweepRow line = row;
            line.cell.rd_over_qkappa = r;
            if (row.error.empty()) {
                const auto det = detector_for_ratio(scenario.detector, r, scenario.cavity);
                line.f_min = series[i] ? average_over_detection(*series[i], det).f_min
                                       : fidelity_min(row.f_eps, row.r_s, row.r_t, det);
            }
            writer.add(line);
        }
    };
    sweep(cells, evaluate, worker_count(jobs), on_row);
    writer.close();

    json summary = preset_summary(c, base_rows);
    int status = status_of(writer);
    const bool picture = c.preset == "cat-mech" || wants(c, "svg");
    if (picture && status == kExitOk) summary["phase_space"] = phase_space(out, c, scenario, false, log);
    out.meta()["rows"] = writer.count();
    out.meta()["failed_rows"] = writer.physics_failures() + writer.invalid();
    out.meta()["summary"] = summary;
    out.finish(status);
    return status;
}

int run_sweep(RunConfig c, const fs::path& plan_path, const fs::path& base_dir, int jobs, std::ostream& log) {
    const PlanFile plan_file = load_plan(plan_path);
    SweepPlan plan = plan_file.plan;
    if (!plan_file.empty && plan.eps_over_omega.empty()) {
        if (c.eps_over_omega.empty()) throw ConfigError("plan has no eps_over_omega axis and the config none either");
        plan.eps_over_omega = {c.eps_over_omega.front()};
        plan.order.insert(plan.order.begin(), "eps_over_omega");
    }
    Scenario scenario = build_scenario(c, base_dir);
    std::vector<SweepCell> cells = plan_file.empty ? std::vector<SweepCell>{} : plan.cells();
    for (auto& cell : cells) {
        if (!std::isfinite(cell.t_d) && c.t_d) cell.t_d = *c.t_d;
        if (!std::isfinite(cell.eta) && c.eta) cell.eta = *c.eta;
    }

    Output out(c, "sweep");
    RowWriter writer(out, c);
    const auto evaluate = [&](const SweepCell& cell) { return evaluate_cell(scenario, cell); };
    const auto on_row = [&](std::size_t i, const SweepRow& row) {
        log << fmt::format("paintbrush: [{}/{}] {} rd={:.3g}{}\n", i + 1, cells.size(), describe(row.cell),
                           row.cell.rd_over_qkappa, row.error.empty() ? "" : " failed: " + row.error);
        writer.add(row);
    };
    sweep(cells, [&](const SweepCell& cell) {
        try {
            return evaluate(cell);
        } catch (const std::exception& e) {
            SweepRow row;
            row.preset = scenario.preset;
            row.cell = cell;
            row.error = e.what();
            row.physics_failure = is_physics_error(e);
            return row;
        }
    }, worker_count(jobs), on_row);
    writer.close();
    out.meta()["plan"] = fs::absolute(plan_path).string();
    out.meta()["axes"] = plan.order;
    out.meta()["rows"] = writer.count();
    out.meta()["failed_rows"] = writer.physics_failures() + writer.invalid();
    out.finish(kExitOk);
    return kExitOk;
}

int run_picture(const RunConfig& c, const std::string& command, const fs::path& base_dir, std::ostream& log) {
    if (command == "husimi" && !is_spin(c.system)) throw ConfigError("husimi needs a spin system");
    if (command == "wigner" && is_spin(c.system)) throw ConfigError("wigner needs a mechanical system");
    const Scenario scenario = build_scenario(c, base_dir);
    Output out(c, command);
    out.meta()["summary"] = phase_space(out, c, scenario, true, log);
    out.finish(kExitOk);
    return kExitOk;
}

const std::vector<std::string>& presets() {
    static const std::vector<std::string> names{"cat-spin", "cat-mech", "dicke", "fock", "mech-qubit", "paint"};
    return names;
}

}  // namespace

int run(const Invocation& inv, std::ostream& log) {
    try {
        const bool is_preset = std::find(presets().begin(), presets().end(), inv.command) != presets().end();
        std::optional<std::string> preset;
        if (is_preset) preset = inv.command;
        // a plan may name its preset; it then takes the place of the config's
        if (inv.command == "sweep" && inv.plan) preset = load_plan(*inv.plan).preset;
        RunConfig c = inv.config ? load_config(*inv.config, preset) : preset_defaults(preset.value_or("cat-spin"));
        if (inv.out) c.directory = inv.out->string();
        if (!inv.formats.empty()) c.formats = inv.formats;
        validate(c);
        const fs::path base_dir = inv.config ? fs::absolute(*inv.config).parent_path() : fs::path{};
        if (is_preset) return run_preset(c, base_dir, inv.jobs, log);
        if (inv.command == "sweep") {
            if (!inv.plan) throw ConfigError("sweep needs a plan file");
            return run_sweep(c, *inv.plan, base_dir, inv.jobs, log);
        }
        if (inv.command == "wigner" || inv.command == "husimi") return run_picture(c, inv.command, base_dir, log);
        throw ConfigError(fmt::format("unknown command '{}'", inv.command));
    } catch (const ConfigError& e) {
        log << "paintbrush: config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        log << "paintbrush: invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        if (is_physics_error(e)) {
            log << "paintbrush: outside model validity: " << e.what() << '\n';
            return kExitPhysics;
        }
        log << "paintbrush: error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int main(int argc, char** argv) {
    CLI::App app{"Heralded state painting with shaped single-photon drives"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    Invocation inv;
    std::string config, out, plan;
    app.add_option("--config", config, "Config file (YAML key-value tree with unit suffixes)");
    app.add_option("--out", out, "Output directory");
    app.add_option("--jobs", inv.jobs, "Worker threads (default: logical cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--format", inv.formats, "Output format, repeatable")
        ->check(CLI::IsMember({"csv", "json", "svg"}))
        ->take_all();

    const std::vector<std::pair<std::string, std::string>> commands{
        {"cat-spin", "Two-pulse spin cat (Ω_S = κ, N = 30) over drive strength and dark counts"},
        {"cat-mech", "Motional cat (g0 = κ, Ω_M = g0/8), F_min averaged over detection time"},
        {"dicke", "Dicke-state pulse from the x-polarized state"},
        {"fock", "Displaced Fock state of the mechanical oscillator"},
        {"mech-qubit", "Mechanical qubit (|0> + |1>)/sqrt(2) and its rate suppression"},
        {"paint", "General weight-function drive from a phi,re,im table"},
        {"sweep", "Grid sweep from a plan file"},
        {"wigner", "Wigner function of the heralded mechanical state"},
        {"husimi", "Husimi Q of the heralded spin state"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (name == "sweep") sub->add_option("plan", plan, "Plan file")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    inv.command = app.get_subcommands().front()->get_name();
    if (!config.empty()) inv.config = config;
    if (!out.empty()) inv.out = out;
    if (!plan.empty()) inv.plan = plan;
    return run(inv, std::cerr);
}

}  // namespace paintbrush::cli
