#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paintbrush/statespace.hpp"

namespace paintbrush {

/// Values on a rectangular mesh. Oscillator grids hold W(x, p) with values(i, j) at
/// (axis0[i], axis1[j]) = (x_i, p_j); sphere grids hold Q(θ_i, φ_j).
struct PhaseSpaceGrid {
    enum class Kind { wigner, husimi };
    Kind kind = Kind::wigner;
    std::vector<double> axis0;
    std::vector<double> axis1;
    Eigen::MatrixXd values;

    /// ∫∫W dx dp for Wigner grids, ∫∫Q sinθ dθ dφ for sphere grids.
    double integral() const;
};

/// Quadrature x = (a + a†)/√2, p = (a - a†)/(i√2): vacuum W(0,0) = 1/π.
struct WignerOptions {
    double center_x = 0.0;
    double center_p = 0.0;
    double half_width = 6.0;
    double spacing = 0.05;
    bool auto_expand = true;
    double boundary_tolerance = 1e-6;
    int max_expansions = 8;
};

/// Wigner function of a pure oscillator state on a square window, by the Laguerre
/// recursion over Fock pairs. The window grows until the boundary |W| drops below
/// the tolerance (CutoffError when it never does).
PhaseSpaceGrid wigner(const Vec& state, const WignerOptions& options = {});
/// W at one point from the same recursion.
double wigner_at(const Vec& state, double x, double p);
/// W at one point as (1/π)<ψ|D(α)ΠD(α)†|ψ> with dense operators on a padded Fock space.
double wigner_displaced_parity(const Vec& state, double x, double p);

struct Negativity {
    double min_value = 0.0;
    double negative_volume = 0.0;  ///< ∫∫ max(-W, 0)
};
Negativity negativity(const PhaseSpaceGrid& grid);

struct Peak {
    double a0 = 0.0;  ///< x or θ
    double a1 = 0.0;  ///< p or φ
    double value = 0.0;
};
/// Local maxima above `floor` times the global maximum, strongest first, positions refined
/// by a parabolic fit. Sphere grids wrap in φ.
std::vector<Peak> find_peaks(const PhaseSpaceGrid& grid, double floor = 0.1);

/// Largest distance between two of the peaks, 0 with fewer than two. For a cat these are
/// the lobes; the interference fringes between them can be the taller maxima.
double outer_peak_distance(const std::vector<Peak>& peaks);

/// Largest spread max_θ W - min_θ W over circles of the given radii about (cx, cp).
double ring_angular_variation(const Vec& state, double cx, double cp, const std::vector<double>& radii,
                              int angles = 72);

/// Q(θ, φ) = (2J+1)/(4π)|<θ,φ|ψ>|² on n_theta midpoint polar rows by n_phi azimuths from 0.
PhaseSpaceGrid husimi_sphere(const SpinModel& spin, const Vec& state, int n_theta = 64, int n_phi = 128);

/// CSV with columns x,p,W or theta,phi,Q.
void write_grid_csv(const std::filesystem::path& path, const PhaseSpaceGrid& grid);
std::string grid_csv(const PhaseSpaceGrid& grid);
/// Heatmap with a fixed diverging scale: blue below zero, white at zero, red above,
/// symmetric in max|value|.
void write_grid_svg(const std::filesystem::path& path, const PhaseSpaceGrid& grid);

}  // namespace paintbrush
