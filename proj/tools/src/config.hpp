#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "paintbrush/evolve.hpp"
#include "paintbrush/herald.hpp"
#include "paintbrush/phasespace.hpp"

namespace paintbrush::cli {

/// Bad configuration or plan file; maps to exit status 2.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Dimension { none, rate, time, angle };

/// "100 kHz" -> 2π·1e5, "3 us" -> 3e-6, "30 deg" -> π/6, plain numbers pass through.
double parse_quantity(const std::string& text, Dimension dim);

/// Averaging window over detection times [from, to] with `points` samples.
struct AverageWindow {
    double from = 0.0;
    double to = 0.0;
    int points = 64;

    friend bool operator==(const AverageWindow&, const AverageWindow&) = default;
};

struct RunConfig {
    std::string preset = "cat-spin";
    SystemModel system = SpinModel{30, 1.0};
    CavityModel cavity{1.0, 0.0, 10};
    std::optional<double> eta;  ///< single-atom cooperativity; replaces the cavity by the finite-η model

    // drive
    std::vector<double> eps_over_omega;
    double phi = kTwoPi / 3.0;
    double rel_phase = 0.0;
    int level = 2;
    std::optional<double> t_d;
    std::optional<AverageWindow> average;
    std::string initial = "default";  ///< default | dicke:<m> | fock:<k>
    std::optional<std::string> weight_file;
    std::optional<std::string> waveform_file;

    // detector
    double q = 1.0;
    std::vector<double> rd_over_qkappa;

    PropagationOptions integrator;

    // phase space
    double wigner_half_width = 6.0;
    double wigner_spacing = 0.05;
    int husimi_theta = 64;
    int husimi_phi = 128;

    // output
    std::string directory = "paintbrush-out";
    std::vector<std::string> formats{"csv"};

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Default parameters for each preset.
RunConfig preset_defaults(const std::string& preset);

/// Reads a config tree. Keys absent from the text keep the preset's defaults; the
/// preset comes from drive.preset unless `preset` is given.
RunConfig parse_config(const std::string& text, const std::optional<std::string>& preset = {});
RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset = {});

/// Fully resolved config in internal (dimensionless or rad/s) units; parse_config reads it back unchanged.
std::string to_yaml(const RunConfig& config);

void validate(const RunConfig& config);

/// Sweep plan: axes in declaration order.
struct PlanFile {
    std::optional<std::string> preset;
    SweepPlan plan;
    bool empty = true;
};
PlanFile parse_plan(const std::string& text);
PlanFile load_plan(const std::filesystem::path& path);

/// Scenario for the herald layer. Relative paths are resolved against base_dir.
Scenario build_scenario(const RunConfig& config, const std::filesystem::path& base_dir = {});

/// Weight table with columns phi,re[,im]; phi must be uniform from 0.
WeightTarget load_weight_table(const std::filesystem::path& path);

}  // namespace paintbrush::cli
