#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "kvn/common.hpp"

namespace kvn {

/// One periodic phase-space axis: L levels covering [x_min, x_min + extent).
struct AxisSpec {
    std::string label;
    int levels = 0;
    double x_min = 0.0;
    double extent = 0.0;  // period length X_max
};

/// Periodic tensor-product grid with the Fourier-conjugate momentum grids.
///
/// Conventions (fixed for files and tests alike):
///  - row-major flat indexing, axis 0 slowest;
///  - momentum bins in standard DFT ordering, frequency k for k < L/2 and
///    k - L above, so the unpaired Nyquist mode of an even axis sits at -L/2;
///  - dx * dp * L == 2*pi*hbar exactly on every axis.
class PhaseSpaceGrid {
public:
    PhaseSpaceGrid(std::vector<AxisSpec> axes, double hbar)
        : axes_(std::move(axes)), hbar_(hbar) {
        if (axes_.empty()) throw std::invalid_argument("grid needs at least one axis");
        if (!(hbar_ > 0.0)) throw std::invalid_argument("hbar must be positive");
        const double h = two_pi * hbar_;
        size_ = 1;
        for (const auto& ax : axes_) {
            if (ax.levels < 4)
                throw std::invalid_argument("axis '" + ax.label + "': levels must be >= 4");
            if (!(ax.extent > 0.0))
                throw std::invalid_argument("axis '" + ax.label + "': extent must be positive");
            dx_.push_back(ax.extent / ax.levels);
            dp_.push_back(h / ax.extent);
            size_ *= static_cast<std::size_t>(ax.levels);
        }
        strides_.assign(axes_.size(), 1);
        for (int j = static_cast<int>(axes_.size()) - 2; j >= 0; --j)
            strides_[j] = strides_[j + 1] * static_cast<std::size_t>(axes_[j + 1].levels);
        for (std::size_t j = 0; j < axes_.size(); ++j) {
            const int L = axes_[j].levels;
            std::vector<double> p(static_cast<std::size_t>(L));
            for (int k = 0; k < L; ++k)
                p[static_cast<std::size_t>(k)] = dp_[j] * fourier_frequency(k, L);
            momenta_.push_back(std::move(p));
        }
    }

    int dim() const { return static_cast<int>(axes_.size()); }
    std::size_t size() const { return size_; }
    double hbar() const { return hbar_; }
    double planck() const { return two_pi * hbar_; }
    const std::vector<AxisSpec>& axes() const { return axes_; }
    const AxisSpec& axis(int j) const { return axes_.at(static_cast<std::size_t>(j)); }

    double dx(int j) const { return dx_.at(static_cast<std::size_t>(j)); }
    double dp(int j) const { return dp_.at(static_cast<std::size_t>(j)); }
    std::size_t stride(int j) const { return strides_.at(static_cast<std::size_t>(j)); }

    /// Product of level spacings; the volume element of the discrete inner product.
    double cell_volume() const {
        double v = 1.0;
        for (double d : dx_) v *= d;
        return v;
    }

    /// Qubit count n = log2(N), or -1 when some axis is not a power of two.
    int qubit_count() const {
        std::size_t n = size_;
        int bits = 0;
        while (n > 1) {
            if (n & 1) return -1;
            n >>= 1;
            ++bits;
        }
        return bits;
    }

    static int fourier_frequency(int k, int levels) {
        return k < (levels + 1) / 2 ? k : k - levels;
    }

    /// DFT-ordered momentum values for one axis (entry k = dp * frequency(k)).
    const std::vector<double>& momentum_grid(int j) const {
        if (j < 0 || j >= dim()) throw std::out_of_range("momentum_grid: invalid axis");
        return momenta_[static_cast<std::size_t>(j)];
    }

    double coordinate(int j, int level) const {
        return axes_[static_cast<std::size_t>(j)].x_min + dx_[static_cast<std::size_t>(j)] * level;
    }

    void unflatten(std::size_t flat, std::vector<int>& multi) const {
        if (flat >= size_) throw std::out_of_range("unflatten: index out of range");
        multi.resize(axes_.size());
        for (std::size_t j = 0; j < axes_.size(); ++j) {
            multi[j] = static_cast<int>(flat / strides_[j]);
            flat %= strides_[j];
        }
    }

    std::size_t index_of(const std::vector<int>& multi) const {
        if (multi.size() != axes_.size())
            throw std::invalid_argument("index_of: dimension mismatch");
        std::size_t flat = 0;
        for (std::size_t j = 0; j < multi.size(); ++j) {
            const int L = axes_[j].levels;
            const int m = ((multi[j] % L) + L) % L;  // periodic wrap
            flat += static_cast<std::size_t>(m) * strides_[j];
        }
        return flat;
    }

    Eigen::VectorXd coordinates_of(std::size_t flat) const {
        std::vector<int> multi;
        unflatten(flat, multi);
        Eigen::VectorXd x(dim());
        for (int j = 0; j < dim(); ++j) x[j] = coordinate(j, multi[static_cast<std::size_t>(j)]);
        return x;
    }

    /// Flat index of the nearest node, with periodic wrapping.
    std::size_t index_of_point(const Eigen::VectorXd& x) const {
        if (x.size() != dim()) throw std::invalid_argument("index_of_point: dimension mismatch");
        std::vector<int> multi(axes_.size());
        for (int j = 0; j < dim(); ++j) {
            const auto& ax = axes_[static_cast<std::size_t>(j)];
            const double u = (x[j] - ax.x_min) / dx_[static_cast<std::size_t>(j)];
            multi[static_cast<std::size_t>(j)] = static_cast<int>(std::lround(u));
        }
        return index_of(multi);
    }

    /// Wrap a point into [x_min, x_min + extent) on every axis.
    Eigen::VectorXd wrap_point(const Eigen::VectorXd& x) const {
        Eigen::VectorXd out(dim());
        for (int j = 0; j < dim(); ++j) {
            const auto& ax = axes_[static_cast<std::size_t>(j)];
            double r = std::fmod(x[j] - ax.x_min, ax.extent);
            if (r < 0) r += ax.extent;
            out[j] = ax.x_min + r;
        }
        return out;
    }

    /// Signed displacement a-b on axis j, reduced to the nearest periodic image.
    double wrap_delta(int j, double a, double b) const {
        const double X = axes_[static_cast<std::size_t>(j)].extent;
        double d = std::fmod(a - b, X);
        if (d < -0.5 * X) d += X;
        if (d >= 0.5 * X) d -= X;
        return d;
    }

    bool contains(const Eigen::VectorXd& x) const {
        for (int j = 0; j < dim(); ++j) {
            const auto& ax = axes_[static_cast<std::size_t>(j)];
            if (x[j] < ax.x_min || x[j] >= ax.x_min + ax.extent) return false;
        }
        return true;
    }

private:
    std::vector<AxisSpec> axes_;
    double hbar_;
    std::vector<double> dx_, dp_;
    std::vector<std::vector<double>> momenta_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

inline PhaseSpaceGrid build_grid(std::vector<AxisSpec> axes, double hbar = 1.0) {
    return PhaseSpaceGrid(std::move(axes), hbar);
}

}  // namespace kvn
