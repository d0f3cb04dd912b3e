#include "config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace paintbrush::cli {

namespace {

constexpr std::size_t kMaxAxis = 10000;
constexpr std::size_t kMaxCells = 1000000;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

const std::map<std::string, double>& units(Dimension dim) {
    static const std::map<std::string, double> rate{
        {"Hz", kTwoPi}, {"kHz", kTwoPi * 1e3}, {"MHz", kTwoPi * 1e6}, {"GHz", kTwoPi * 1e9}, {"rad/s", 1.0}};
    static const std::map<std::string, double> time{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}, {"ps", 1e-12}};
    static const std::map<std::string, double> angle{{"rad", 1.0}, {"deg", kPi / 180.0}};
    static const std::map<std::string, double> none;
    switch (dim) {
    case Dimension::rate: return rate;
    case Dimension::time: return time;
    case Dimension::angle: return angle;
    default: return none;
    }
}

std::string where(const YAML::Node& node) {
    const auto m = node.Mark();
    return m.is_null() ? std::string{} : fmt::format(" (line {})", m.line + 1);
}

double quantity(const YAML::Node& node, Dimension dim, const std::string& key) {
    if (!node.IsScalar()) throw ConfigError(fmt::format("'{}' must be a scalar{}", key, where(node)));
    try {
        return parse_quantity(node.Scalar(), dim);
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("'{}': {}{}", key, e.what(), where(node)));
    }
}

int integer(const YAML::Node& node, const std::string& key) {
    const double v = quantity(node, Dimension::none, key);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(fmt::format("'{}' must be an integer{}", key, where(node)));
    return static_cast<int>(v);
}

bool boolean(const YAML::Node& node, const std::string& key) {
    try {
        return node.as<bool>();
    } catch (const YAML::Exception&) {
        throw ConfigError(fmt::format("'{}' must be true or false{}", key, where(node)));
    }
}

std::string string(const YAML::Node& node, const std::string& key) {
    if (!node.IsScalar()) throw ConfigError(fmt::format("'{}' must be a string{}", key, where(node)));
    return node.Scalar();
}

void allow(const YAML::Node& map, const std::string& block, std::initializer_list<const char*> keys) {
    if (!map.IsMap()) throw ConfigError(fmt::format("'{}' must be a key-value block{}", block, where(map)));
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key)) throw ConfigError(fmt::format("unknown key '{}.{}'{}", block, key, where(kv.first)));
    }
}

/// A list, a single value, or {log|linear: [from, to, count]}.
std::vector<double> axis_values(const YAML::Node& node, Dimension dim, const std::string& key) {
    std::vector<double> out;
    if (node.IsScalar()) {
        out.push_back(quantity(node, dim, key));
    } else if (node.IsSequence()) {
        for (const auto& v : node) out.push_back(quantity(v, dim, key));
    } else if (node.IsMap()) {
        if (node.size() != 1) throw ConfigError(fmt::format("'{}' generator needs exactly one of log/linear", key));
        const auto kind = node.begin()->first.as<std::string>();
        const auto args = node.begin()->second;
        if ((kind != "log" && kind != "linear") || !args.IsSequence() || args.size() != 3)
            throw ConfigError(fmt::format("'{}' generator must be log: [from, to, count] or linear: [from, to, count]{}", key,
                                          where(node)));
        const double a = quantity(args[0], dim, key);
        const double b = quantity(args[1], dim, key);
        const int n = integer(args[2], key);
        if (n < 1 || static_cast<std::size_t>(n) > kMaxAxis)
            throw ConfigError(fmt::format("'{}' count must be between 1 and {}", key, kMaxAxis));
        if (kind == "log" && !(a > 0.0 && b > 0.0)) throw ConfigError(fmt::format("'{}' log range must be positive", key));
        for (int i = 0; i < n; ++i) {
            const double f = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
            out.push_back(kind == "log" ? a * std::pow(b / a, f) : a + (b - a) * f);
        }
    } else if (!node.IsNull()) {
        throw ConfigError(fmt::format("'{}' must be a value, a list or a generator{}", key, where(node)));
    }
    if (out.size() > kMaxAxis) throw ConfigError(fmt::format("'{}' has more than {} points", key, kMaxAxis));
    return out;
}

void read_system(const YAML::Node& node, RunConfig& c) {
    allow(node, "system", {"spin", "mech"});
    if (node.size() != 1) throw ConfigError("system needs exactly one of 'spin' or 'mech'");
    if (node["spin"]) {
        const auto s = node["spin"];
        allow(s, "system.spin", {"n_atoms", "omega_s"});
        SpinModel spin = std::holds_alternative<SpinModel>(c.system) ? std::get<SpinModel>(c.system) : SpinModel{8, 1.0};
        if (s["n_atoms"]) spin.n_atoms = integer(s["n_atoms"], "n_atoms");
        if (s["omega_s"]) spin.omega_s = quantity(s["omega_s"], Dimension::rate, "omega_s");
        c.system = spin;
    } else {
        const auto m = node["mech"];
        allow(m, "system.mech", {"omega_m", "g0", "cutoff"});
        MechModel mech = std::holds_alternative<MechModel>(c.system) ? std::get<MechModel>(c.system) : MechModel{};
        if (m["omega_m"]) mech.omega_m = quantity(m["omega_m"], Dimension::rate, "omega_m");
        if (m["g0"]) mech.g0 = quantity(m["g0"], Dimension::rate, "g0");
        if (m["cutoff"]) mech.n_ph_max = integer(m["cutoff"], "cutoff");
        c.system = mech;
    }
}

void read_cavity(const YAML::Node& node, RunConfig& c) {
    allow(node, "cavity", {"kappa", "kappa_loss", "n_c_max", "eta", "gamma", "g_rabi"});
    if (node["kappa"]) c.cavity.kappa = quantity(node["kappa"], Dimension::rate, "kappa");
    if (node["kappa_loss"]) c.cavity.kappa_loss = quantity(node["kappa_loss"], Dimension::rate, "kappa_loss");
    if (node["n_c_max"]) c.cavity.n_c_max = integer(node["n_c_max"], "n_c_max");
    const bool rates = node["gamma"] || node["g_rabi"];
    if (node["eta"] && rates) throw ConfigError("give either cavity.eta or cavity.{gamma, g_rabi}, not both");
    if (node["eta"]) c.eta = quantity(node["eta"], Dimension::none, "eta");
    if (rates) {
        if (!node["gamma"] || !node["g_rabi"]) throw ConfigError("cavity.gamma and cavity.g_rabi go together");
        const double g = quantity(node["g_rabi"], Dimension::rate, "g_rabi");
        const double gamma = quantity(node["gamma"], Dimension::rate, "gamma");
        if (!(gamma > 0.0) || !(c.cavity.kappa > 0.0)) throw ConfigError("gamma and kappa must be positive");
        c.eta = g * g / (c.cavity.kappa * gamma);
    }
}

void read_drive(const YAML::Node& node, RunConfig& c) {
    allow(node, "drive", {"preset", "eps_over_omega", "phi", "rel_phase", "level", "t_d", "average", "initial",
                          "weight_file", "waveform_file"});
    if (node["eps_over_omega"]) c.eps_over_omega = axis_values(node["eps_over_omega"], Dimension::none, "eps_over_omega");
    if (node["phi"]) c.phi = quantity(node["phi"], Dimension::angle, "phi");
    if (node["rel_phase"]) c.rel_phase = quantity(node["rel_phase"], Dimension::angle, "rel_phase");
    if (node["level"]) c.level = integer(node["level"], "level");
    if (node["t_d"]) c.t_d = quantity(node["t_d"], Dimension::time, "t_d");
    if (node["average"]) {
        const auto a = node["average"];
        if (a.IsScalar() && !boolean(a, "average")) {
            c.average.reset();
        } else {
            allow(a, "drive.average", {"from", "to", "points"});
            AverageWindow w = c.average.value_or(AverageWindow{});
            if (a["from"]) w.from = quantity(a["from"], Dimension::time, "from");
            if (a["to"]) w.to = quantity(a["to"], Dimension::time, "to");
            if (a["points"]) w.points = integer(a["points"], "points");
            c.average = w;
        }
    }
    if (node["initial"]) c.initial = string(node["initial"], "initial");
    if (node["weight_file"]) c.weight_file = string(node["weight_file"], "weight_file");
    if (node["waveform_file"]) c.waveform_file = string(node["waveform_file"], "waveform_file");
}

void read_detector(const YAML::Node& node, RunConfig& c) {
    allow(node, "detector", {"q", "rd_over_qkappa", "r_d"});
    if (node["q"]) c.q = quantity(node["q"], Dimension::none, "q");
    if (node["rd_over_qkappa"] && node["r_d"]) throw ConfigError("give either detector.r_d or detector.rd_over_qkappa");
    if (node["rd_over_qkappa"]) c.rd_over_qkappa = axis_values(node["rd_over_qkappa"], Dimension::none, "rd_over_qkappa");
    if (node["r_d"]) {
        c.rd_over_qkappa.clear();
        for (double r : axis_values(node["r_d"], Dimension::rate, "r_d")) c.rd_over_qkappa.push_back(r / (c.q * c.cavity.kappa));
    }
}

void read_rest(const YAML::Node& root, RunConfig& c) {
    if (const auto n = root["integrator"]) {
        allow(n, "integrator", {"tolerance", "max_halvings", "check_leakage"});
        if (n["tolerance"]) c.integrator.tolerance = quantity(n["tolerance"], Dimension::none, "tolerance");
        if (n["max_halvings"]) c.integrator.max_halvings = integer(n["max_halvings"], "max_halvings");
        if (n["check_leakage"]) c.integrator.check_leakage = boolean(n["check_leakage"], "check_leakage");
    }
    if (const auto n = root["phase_space"]) {
        allow(n, "phase_space", {"wigner_half_width", "wigner_spacing", "husimi_theta", "husimi_phi"});
        if (n["wigner_half_width"]) c.wigner_half_width = quantity(n["wigner_half_width"], Dimension::none, "wigner_half_width");
        if (n["wigner_spacing"]) c.wigner_spacing = quantity(n["wigner_spacing"], Dimension::none, "wigner_spacing");
        if (n["husimi_theta"]) c.husimi_theta = integer(n["husimi_theta"], "husimi_theta");
        if (n["husimi_phi"]) c.husimi_phi = integer(n["husimi_phi"], "husimi_phi");
    }
    if (const auto n = root["output"]) {
        allow(n, "output", {"directory", "formats"});
        if (n["directory"]) c.directory = string(n["directory"], "directory");
        if (const auto f = n["formats"]) {
            c.formats.clear();
            if (f.IsScalar()) c.formats.push_back(f.Scalar());
            else for (const auto& v : f) c.formats.push_back(string(v, "formats"));
        }
    }
}

YAML::Node load_yaml(const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("cannot parse config: {}", e.what()));
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> log_grid(double a, double b, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(a * std::pow(b / a, static_cast<double>(i) / (n - 1)));
    return v;
}

}  // namespace

double parse_quantity(const std::string& raw, Dimension dim) {
    const std::string text = trim(raw);
    if (text.empty()) throw ConfigError("empty value");
    const char* begin = text.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin) throw ConfigError(fmt::format("'{}' is not a number", text));
    const std::string unit = trim(std::string(end));
    if (unit.empty()) return value;
    const auto& table = units(dim);
    const auto it = table.find(unit == "µs" ? "us" : unit);
    if (it == table.end()) {
        if (dim == Dimension::none) throw ConfigError(fmt::format("'{}' takes no unit", text));
        std::string known;
        for (const auto& [k, v] : table) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError(fmt::format("unknown unit '{}' (expected {})", unit, known));
    }
    return value * it->second;
}

RunConfig preset_defaults(const std::string& preset) {
    RunConfig c;
    c.preset = preset;
    const std::vector<double> fig2_ladder{1e-5, 1e-4, 1e-3, 1e-2};
    if (preset == "cat-spin" || preset == "sweep") {
        c.preset = "cat-spin";
        c.system = SpinModel{30, 1.0};
        c.cavity = {1.0, 0.0, 10};
        c.eps_over_omega = log_grid(1e-2, 1.0, 9);
        c.rd_over_qkappa = fig2_ladder;
    } else if (preset == "cat-mech") {
        // g0 = κ, Ω_M = g0/8, separation T = 3/κ, averaged over T < t_d < T + 2/κ
        c.system = MechModel{0.125, 1.0, 120};
        c.cavity = {1.0, 0.0, 2};
        c.phi = 0.125 * 3.0;
        c.eps_over_omega = {1e-3, 3e-3, 1e-2};
        c.average = AverageWindow{3.0, 5.0, 64};
        c.rd_over_qkappa = {1e-6, 1e-5, 1e-4, 1e-3};
    } else if (preset == "dicke") {
        c.system = SpinModel{8, 1.0};
        c.cavity = {1.0, 0.0, 6};
        c.level = 2;
        c.eps_over_omega = {1e-3, 1e-2, 0.1, 0.3};
        c.rd_over_qkappa = fig2_ladder;
    } else if (preset == "fock") {
        c.system = MechModel{1.0, 0.5, 40};
        c.cavity = {1.0, 0.0, 4};
        c.level = 1;
        c.eps_over_omega = {1e-3, 1e-2, 0.1};
        c.rd_over_qkappa = fig2_ladder;
    } else if (preset == "mech-qubit") {
        c.system = MechModel{kTwoPi * 4e9, kTwoPi * 1e6, 8};
        c.cavity = {kTwoPi * 5e8, 0.0, 3};
        c.eps_over_omega = {1e-6, 3e-6, 1e-5, 3e-5};
        c.rd_over_qkappa = {1e-10, 1e-9, 1e-8, 1e-7};
    } else if (preset == "paint") {
        c.system = SpinModel{8, 1.0};
        c.cavity = {1.0, 0.0, 6};
        c.eps_over_omega = {1e-3, 1e-2, 0.1};
        c.rd_over_qkappa = fig2_ladder;
    } else {
        throw ConfigError(fmt::format("unknown preset '{}'", preset));
    }
    return c;
}

RunConfig parse_config(const std::string& text, const std::optional<std::string>& preset) {
    const YAML::Node root = load_yaml(text);
    if (!root.IsNull() && !root.IsMap()) throw ConfigError("config must be a key-value tree");
    allow(root.IsNull() ? YAML::Node(YAML::NodeType::Map) : root, "config",
          {"system", "cavity", "drive", "detector", "integrator", "phase_space", "output"});
    std::string name = "cat-spin";
    if (root["drive"] && root["drive"]["preset"]) name = string(root["drive"]["preset"], "preset");
    if (preset) name = *preset;
    RunConfig c = preset_defaults(name);
    if (root["system"]) read_system(root["system"], c);
    if (root["cavity"]) read_cavity(root["cavity"], c);
    if (root["drive"]) read_drive(root["drive"], c);
    if (root["detector"]) read_detector(root["detector"], c);
    read_rest(root, c);
    validate(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset) {
    return parse_config(read_file(path), preset);
}

std::string to_yaml(const RunConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "system" << YAML::Value << YAML::BeginMap;
    if (const auto* spin = std::get_if<SpinModel>(&c.system)) {
        out << YAML::Key << "spin" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "n_atoms" << YAML::Value << spin->n_atoms;
        out << YAML::Key << "omega_s" << YAML::Value << spin->omega_s;
    } else {
        const auto& mech = std::get<MechModel>(c.system);
        out << YAML::Key << "mech" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "omega_m" << YAML::Value << mech.omega_m;
        out << YAML::Key << "g0" << YAML::Value << mech.g0;
        out << YAML::Key << "cutoff" << YAML::Value << mech.n_ph_max;
    }
    out << YAML::EndMap << YAML::EndMap;

    out << YAML::Key << "cavity" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "kappa" << YAML::Value << c.cavity.kappa;
    out << YAML::Key << "kappa_loss" << YAML::Value << c.cavity.kappa_loss;
    out << YAML::Key << "n_c_max" << YAML::Value << c.cavity.n_c_max;
    if (c.eta) out << YAML::Key << "eta" << YAML::Value << *c.eta;
    out << YAML::EndMap;

    out << YAML::Key << "drive" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "preset" << YAML::Value << c.preset;
    out << YAML::Key << "eps_over_omega" << YAML::Value << YAML::Flow << c.eps_over_omega;
    out << YAML::Key << "phi" << YAML::Value << c.phi;
    out << YAML::Key << "rel_phase" << YAML::Value << c.rel_phase;
    out << YAML::Key << "level" << YAML::Value << c.level;
    if (c.t_d) out << YAML::Key << "t_d" << YAML::Value << *c.t_d;
    if (c.average) {
        out << YAML::Key << "average" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "from" << YAML::Value << c.average->from;
        out << YAML::Key << "to" << YAML::Value << c.average->to;
        out << YAML::Key << "points" << YAML::Value << c.average->points;
        out << YAML::EndMap;
    }
    out << YAML::Key << "initial" << YAML::Value << c.initial;
    if (c.weight_file) out << YAML::Key << "weight_file" << YAML::Value << *c.weight_file;
    if (c.waveform_file) out << YAML::Key << "waveform_file" << YAML::Value << *c.waveform_file;
    out << YAML::EndMap;

    out << YAML::Key << "detector" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "q" << YAML::Value << c.q;
    out << YAML::Key << "rd_over_qkappa" << YAML::Value << YAML::Flow << c.rd_over_qkappa;
    out << YAML::EndMap;

    out << YAML::Key << "integrator" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "tolerance" << YAML::Value << c.integrator.tolerance;
    out << YAML::Key << "max_halvings" << YAML::Value << c.integrator.max_halvings;
    out << YAML::Key << "check_leakage" << YAML::Value << c.integrator.check_leakage;
    out << YAML::EndMap;

    out << YAML::Key << "phase_space" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "wigner_half_width" << YAML::Value << c.wigner_half_width;
    out << YAML::Key << "wigner_spacing" << YAML::Value << c.wigner_spacing;
    out << YAML::Key << "husimi_theta" << YAML::Value << c.husimi_theta;
    out << YAML::Key << "husimi_phi" << YAML::Value << c.husimi_phi;
    out << YAML::EndMap;

    out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "directory" << YAML::Value << c.directory;
    out << YAML::Key << "formats" << YAML::Value << YAML::Flow << c.formats;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void validate(const RunConfig& c) {
    try {
        validate(c.system);
        validate(c.cavity);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(c.cavity.kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (c.eta && !(*c.eta > 0.0)) throw ConfigError("eta must be positive");
    if (c.eta && !is_spin(c.system)) throw ConfigError("cooperativity applies to the spin system only");
    for (double e : c.eps_over_omega)
        if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("eps_over_omega values must be positive");
    for (double r : c.rd_over_qkappa)
        if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("rd_over_qkappa values must be non-negative");
    if (!(c.q > 0.0 && c.q <= 1.0)) throw ConfigError("detector q must be in (0, 1]");
    if (c.t_d && !(*c.t_d >= 0.0)) throw ConfigError("t_d must be non-negative");
    if (c.average && (!(c.average->to > c.average->from) || c.average->points < 2))
        throw ConfigError("average window needs to > from and at least two points");
    if (!(c.integrator.tolerance > 0.0) || c.integrator.max_halvings < 0) throw ConfigError("bad integrator settings");
    if (!(c.wigner_half_width > 0.0) || !(c.wigner_spacing > 0.0)) throw ConfigError("bad Wigner window");
    if (c.husimi_theta < 2 || c.husimi_phi < 2) throw ConfigError("bad Husimi grid");
    for (const auto& f : c.formats)
        if (f != "csv" && f != "json" && f != "svg") throw ConfigError(fmt::format("unknown format '{}'", f));
    if (c.initial != "default" && c.initial.rfind("dicke:", 0) != 0 && c.initial.rfind("fock:", 0) != 0)
        throw ConfigError(fmt::format("initial must be default, dicke:<m> or fock:<k>, got '{}'", c.initial));
    if (c.preset == "paint" && !c.weight_file) throw ConfigError("paint preset needs drive.weight_file");
}

PlanFile parse_plan(const std::string& text) {
    const YAML::Node root = load_yaml(text);
    PlanFile out;
    if (root.IsNull()) return out;
    allow(root, "plan", {"preset", "axes"});
    if (root["preset"]) out.preset = string(root["preset"], "preset");
    out.plan.order.clear();
    const auto axes = root["axes"];
    if (!axes || axes.IsNull()) return out;
    allow(axes, "axes", {"eps_over_omega", "phi", "t_d", "eta", "rd_over_qkappa"});
    std::size_t total = 1;
    for (const auto& kv : axes) {
        const auto name = kv.first.as<std::string>();
        const Dimension dim = name == "phi" ? Dimension::angle : name == "t_d" ? Dimension::time : Dimension::none;
        auto values = axis_values(kv.second, dim, name);
        if (values.empty()) continue;
        total *= values.size();
        if (total > kMaxCells) throw ConfigError(fmt::format("plan has more than {} cells", kMaxCells));
        out.plan.order.push_back(name);
        if (name == "eps_over_omega") out.plan.eps_over_omega = std::move(values);
        else if (name == "phi") out.plan.phi = std::move(values);
        else if (name == "t_d") out.plan.t_d = std::move(values);
        else if (name == "eta") out.plan.eta = std::move(values);
        else out.plan.rd_over_qkappa = std::move(values);
    }
    out.empty = out.plan.order.empty();
    return out;
}

PlanFile load_plan(const std::filesystem::path& path) { return parse_plan(read_file(path)); }

WeightTarget load_weight_table(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<double> phi;
    WeightTarget w;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cols.push_back(trim(cell));
        char* end = nullptr;
        std::strtod(cols[0].c_str(), &end);
        if (end == cols[0].c_str()) continue;  // header
        if (cols.size() < 2 || cols.size() > 3)
            throw ConfigError(fmt::format("{}:{}: expected phi,re[,im]", path.string(), lineno));
        double v[3] = {0, 0, 0};
        for (std::size_t i = 0; i < cols.size(); ++i) v[i] = parse_quantity(cols[i], Dimension::none);
        phi.push_back(v[0]);
        w.samples.emplace_back(v[1], v[2]);
    }
    if (phi.size() < 2) throw ConfigError(fmt::format("{}: weight table needs at least two rows", path.string()));
    const double step = phi.back() / static_cast<double>(phi.size() - 1);
    if (std::abs(phi.front()) > 1e-12 || !(step > 0.0))
        throw ConfigError(fmt::format("{}: phi must start at 0 and increase", path.string()));
    for (std::size_t i = 0; i < phi.size(); ++i)
        if (std::abs(phi[i] - step * static_cast<double>(i)) > 1e-9 * (1.0 + phi.back()))
            throw ConfigError(fmt::format("{}: phi must be uniformly spaced", path.string()));
    w.phi_max = phi.back();
    return w;
}

Scenario build_scenario(const RunConfig& c, const std::filesystem::path& base_dir) {
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    Scenario s;
    s.preset = c.preset;
    s.system = c.system;
    s.cavity = c.cavity;
    s.detector = {c.q, 0.0};
    s.phi_sep = c.phi;
    s.rel_phase = c.rel_phase;
    s.level = c.level;
    s.options = c.integrator;
    if (c.weight_file) s.weight = load_weight_table(resolve(*c.weight_file));
    if (c.waveform_file) {
        try {
            s.waveform = load_waveform(resolve(*c.waveform_file));
        } catch (const std::exception& e) {
            throw ConfigError(fmt::format("waveform file: {}", e.what()));
        }
    }
    if (c.initial != "default") {
        const auto colon = c.initial.find(':');
        const std::string kind = c.initial.substr(0, colon);
        const double label = parse_quantity(c.initial.substr(colon + 1), Dimension::none);
        if (kind == "dicke") {
            const auto* spin = std::get_if<SpinModel>(&c.system);
            if (!spin) throw ConfigError("dicke initial state needs a spin system");
            const double k = label + spin->j();
            if (k != std::round(k) || k < 0 || k > spin->n_atoms)
                throw ConfigError(fmt::format("Dicke m={} does not exist for N={}", label, spin->n_atoms));
            s.initial = Vec::Unit(spin->dim(), static_cast<Eigen::Index>(k));
        } else {
            const auto* mech = std::get_if<MechModel>(&c.system);
            if (!mech) throw ConfigError("fock initial state needs a mechanical system");
            if (label != std::round(label) || label < 0 || label > mech->n_ph_max)
                throw ConfigError(fmt::format("Fock level {} outside the cutoff", label));
            s.initial = Vec::Unit(mech->dim(), static_cast<Eigen::Index>(label));
        }
    }
    return s;
}

}  // namespace paintbrush::cli
