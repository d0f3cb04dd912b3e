#include "paintbrush/phasespace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace paintbrush {

namespace {

// Laguerre recursion over Fock pairs at a = (x + ip)/√2:
// W = Σ_{m,n} ρ_mn w_mn with w built up row by row from w_00 = e^{-2|a|²}/π.
double wigner_recursion(const Vec& psi, cplx a, std::vector<cplx>& w) {
    const int dim = static_cast<int>(psi.size());
    w.assign(static_cast<std::size_t>(dim), cplx{});
    w[0] = std::exp(-2.0 * std::norm(a)) / kPi;
    double total = std::norm(psi[0]) * w[0].real();
    for (int n = 1; n < dim; ++n) {
        w[n] = 2.0 * a * w[n - 1] / std::sqrt(static_cast<double>(n));
        total += 2.0 * (psi[0] * std::conj(psi[n]) * w[n]).real();
    }
    for (int m = 1; m < dim; ++m) {
        const double sm = std::sqrt(static_cast<double>(m));
        cplx temp = w[m];
        w[m] = (2.0 * std::conj(a) * temp - sm * w[m - 1]) / sm;
        total += std::norm(psi[m]) * w[m].real();
        for (int n = m + 1; n < dim; ++n) {
            const cplx next = (2.0 * a * w[n - 1] - sm * temp) / std::sqrt(static_cast<double>(n));
            temp = w[n];
            w[n] = next;
            total += 2.0 * (psi[m] * std::conj(psi[n]) * w[n]).real();
        }
    }
    return total;
}

double boundary_max(const Eigen::MatrixXd& v) {
    const auto r = v.rows() - 1;
    const auto c = v.cols() - 1;
    return std::max({v.row(0).cwiseAbs().maxCoeff(), v.row(r).cwiseAbs().maxCoeff(), v.col(0).cwiseAbs().maxCoeff(),
                     v.col(c).cwiseAbs().maxCoeff()});
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return out;
}

}  // namespace

double wigner_at(const Vec& state, double x, double p) {
    std::vector<cplx> w;
    return wigner_recursion(state, cplx(x, p) / std::sqrt(2.0), w);
}

double wigner_displaced_parity(const Vec& state, double x, double p) {
    const cplx alpha = cplx(x, p) / std::sqrt(2.0);
    const int dim = static_cast<int>(state.size()) + 40 + static_cast<int>(4.0 * std::norm(alpha));
    Mat h = Mat::Zero(dim, dim);
    for (int n = 0; n + 1 < dim; ++n) {
        const double s = std::sqrt(static_cast<double>(n + 1));
        h(n + 1, n) = cplx(0.0, -1.0) * alpha * s;  // i(-α) a†
        h(n, n + 1) = cplx(0.0, 1.0) * std::conj(alpha) * s;
    }
    // h is i(-α a† + α* a), Hermitian; D(-α) = exp(-i h).
    Eigen::SelfAdjointEigenSolver<Mat> solver(h);
    Vec padded = Vec::Zero(dim);
    padded.head(state.size()) = state;
    Vec c = solver.eigenvectors().adjoint() * padded;
    for (int k = 0; k < dim; ++k) c[k] *= std::polar(1.0, -solver.eigenvalues()[k]);
    const Vec shifted = solver.eigenvectors() * c;
    double parity = 0.0;
    for (int n = 0; n < dim; ++n) parity += (n % 2 == 0 ? 1.0 : -1.0) * std::norm(shifted[n]);
    return parity / kPi;
}

PhaseSpaceGrid wigner(const Vec& state, const WignerOptions& options) {
    if (!(options.spacing > 0.0) || !(options.half_width > 0.0)) throw std::invalid_argument("bad Wigner window");
    double half = options.half_width;
    for (int attempt = 0;; ++attempt) {
        const int n = 2 * static_cast<int>(std::ceil(half / options.spacing)) + 1;
        PhaseSpaceGrid grid;
        grid.kind = PhaseSpaceGrid::Kind::wigner;
        grid.axis0 = linspace(options.center_x - half, options.center_x + half, n);
        grid.axis1 = linspace(options.center_p - half, options.center_p + half, n);
        grid.values.resize(n, n);
        std::vector<cplx> w;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                grid.values(i, j) = wigner_recursion(state, cplx(grid.axis0[i], grid.axis1[j]) / std::sqrt(2.0), w);
        const double edge = boundary_max(grid.values);
        if (edge < options.boundary_tolerance || !options.auto_expand) return grid;
        if (attempt >= options.max_expansions) {
            throw CutoffError(fmt::format("Wigner window of half-width {} still has |W| = {:.3e} on its edge", half, edge));
        }
        half *= 1.5;
    }
}

double PhaseSpaceGrid::integral() const {
    if (axis0.size() < 2 || axis1.size() < 2) return 0.0;
    if (kind == Kind::wigner) {
        const double d0 = (axis0.back() - axis0.front()) / (axis0.size() - 1);
        const double d1 = (axis1.back() - axis1.front()) / (axis1.size() - 1);
        return values.sum() * d0 * d1;
    }
    // Midpoint rows in θ, periodic uniform φ.
    const double dtheta = kPi / axis0.size();
    const double dphi = kTwoPi / axis1.size();
    double total = 0.0;
    for (std::size_t i = 0; i < axis0.size(); ++i) total += values.row(static_cast<Eigen::Index>(i)).sum() * std::sin(axis0[i]);
    return total * dtheta * dphi;
}

Negativity negativity(const PhaseSpaceGrid& grid) {
    Negativity out;
    out.min_value = grid.values.minCoeff();
    const double d0 = (grid.axis0.back() - grid.axis0.front()) / (grid.axis0.size() - 1);
    const double d1 = (grid.axis1.back() - grid.axis1.front()) / (grid.axis1.size() - 1);
    out.negative_volume = (-grid.values.array()).max(0.0).sum() * d0 * d1;
    return out;
}

double outer_peak_distance(const std::vector<Peak>& peaks) {
    double best = 0.0;
    for (std::size_t i = 0; i < peaks.size(); ++i)
        for (std::size_t j = i + 1; j < peaks.size(); ++j)
            best = std::max(best, std::hypot(peaks[i].a0 - peaks[j].a0, peaks[i].a1 - peaks[j].a1));
    return best;
}

std::vector<Peak> find_peaks(const PhaseSpaceGrid& grid, double floor) {
    const auto& v = grid.values;
    const int n0 = static_cast<int>(v.rows());
    const int n1 = static_cast<int>(v.cols());
    const bool wrap = grid.kind == PhaseSpaceGrid::Kind::husimi;
    const double threshold = floor * v.maxCoeff();
    const double d0 = n0 > 1 ? grid.axis0[1] - grid.axis0[0] : 0.0;
    const double d1 = n1 > 1 ? grid.axis1[1] - grid.axis1[0] : 0.0;
    const auto at = [&](int i, int j) {
        if (wrap) j = (j % n1 + n1) % n1;
        return v(i, j);
    };
    std::vector<Peak> peaks;
    for (int i = 1; i + 1 < n0; ++i) {
        for (int j = wrap ? 0 : 1; j < (wrap ? n1 : n1 - 1); ++j) {
            const double c = v(i, j);
            if (c < threshold) continue;
            bool is_max = true;
            for (int di = -1; di <= 1 && is_max; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const double o = at(i + di, j + dj);
                    // Ties broken toward the earlier index so plateaus yield one peak.
                    if (o > c || (o == c && (di < 0 || (di == 0 && dj < 0)))) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max) continue;
            const auto vertex = [](double l, double m, double r) {
                const double den = l - 2.0 * m + r;
                return den != 0.0 ? 0.5 * (l - r) / den : 0.0;
            };
            Peak peak;
            peak.a0 = grid.axis0[i] + d0 * vertex(at(i - 1, j), c, at(i + 1, j));
            peak.a1 = grid.axis1[j] + d1 * vertex(at(i, j - 1), c, at(i, j + 1));
            peak.value = c;
            peaks.push_back(peak);
        }
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    return peaks;
}

double ring_angular_variation(const Vec& state, double cx, double cp, const std::vector<double>& radii, int angles) {
    double worst = 0.0;
    std::vector<cplx> w;
    for (const double r : radii) {
        double lo = 1e300;
        double hi = -1e300;
        for (int k = 0; k < angles; ++k) {
            const double th = kTwoPi * k / angles;
            const double value =
                wigner_recursion(state, cplx(cx + r * std::cos(th), cp + r * std::sin(th)) / std::sqrt(2.0), w);
            lo = std::min(lo, value);
            hi = std::max(hi, value);
        }
        worst = std::max(worst, hi - lo);
    }
    return worst;
}

PhaseSpaceGrid husimi_sphere(const SpinModel& spin, const Vec& state, int n_theta, int n_phi) {
    validate(spin);
    if (state.size() != spin.dim()) throw std::invalid_argument("spin state has the wrong dimension");
    if (n_theta < 2 || n_phi < 2) throw std::invalid_argument("sphere mesh too coarse");
    PhaseSpaceGrid grid;
    grid.kind = PhaseSpaceGrid::Kind::husimi;
    for (int i = 0; i < n_theta; ++i) grid.axis0.push_back(kPi * (i + 0.5) / n_theta);
    for (int j = 0; j < n_phi; ++j) grid.axis1.push_back(kTwoPi * j / n_phi);
    grid.values.resize(n_theta, n_phi);
    const double prefactor = (2.0 * spin.j() + 1.0) / (4.0 * kPi);
    const int dim = spin.dim();
    // <θ,φ|ψ> = Σ_k css_k(θ, 0) e^{+i m φ} ψ_k with real css_k(θ, 0).
    std::vector<cplx> phase(static_cast<std::size_t>(dim));
    for (int i = 0; i < n_theta; ++i) {
        const Vec radial = coherent_spin_state(spin, grid.axis0[i], 0.0);
        for (int j = 0; j < n_phi; ++j) {
            cplx s{};
            for (int k = 0; k < dim; ++k) s += radial[k].real() * std::polar(1.0, spin.m_of(k) * grid.axis1[j]) * state[k];
            grid.values(i, j) = prefactor * std::norm(s);
        }
    }
    return grid;
}

std::string grid_csv(const PhaseSpaceGrid& grid) {
    std::string out = grid.kind == PhaseSpaceGrid::Kind::wigner ? "x,p,W\n" : "theta,phi,Q\n";
    for (std::size_t i = 0; i < grid.axis0.size(); ++i)
        for (std::size_t j = 0; j < grid.axis1.size(); ++j)
            out += fmt::format("{:.16e},{:.16e},{:.16e}\n", grid.axis0[i], grid.axis1[j],
                               grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    return out;
}

void write_grid_csv(const std::filesystem::path& path, const PhaseSpaceGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << grid_csv(grid);
}

void write_grid_svg(const std::filesystem::path& path, const PhaseSpaceGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    const int n0 = static_cast<int>(grid.values.rows());
    const int n1 = static_cast<int>(grid.values.cols());
    const double scale = std::max(grid.values.cwiseAbs().maxCoeff(), 1e-300);
    constexpr int cell = 3;
    constexpr int bar = 40;
    const int width = n0 * cell + bar + 80;
    const int height = n1 * cell;
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n", width, height);
    const auto color = [&](double v) {
        const double t = std::clamp(v / scale, -1.0, 1.0);
        const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
        return t >= 0 ? fmt::format("rgb(255,{},{})", fade, fade) : fmt::format("rgb({},{},255)", fade, fade);
    };
    // axis0 runs left to right, axis1 bottom to top.
    for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j)
            out << fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", i * cell,
                               (n1 - 1 - j) * cell, cell, cell, color(grid.values(i, j)));
    const int x0 = n0 * cell + 10;
    for (int k = 0; k < height; ++k) {
        const double v = scale * (1.0 - 2.0 * k / std::max(height - 1, 1));
        out << fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"1\" fill=\"{}\"/>\n", x0, k, bar / 2, color(v));
    }
    out << fmt::format("<text x=\"{}\" y=\"12\" font-size=\"10\">{:.3e}</text>\n", x0 + bar / 2 + 4, scale);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">0</text>\n", x0 + bar / 2 + 4, height / 2);
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{:.3e}</text>\n", x0 + bar / 2 + 4, height - 2, -scale);
    out << "</svg>\n";
}

}  // namespace paintbrush
