#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kvn/common.hpp"
#include "kvn/expression.hpp"
#include "kvn/grid.hpp"
#include "kvn/parallel.hpp"

namespace kvn {

using VelocityFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;
using ScalarFieldFn = std::function<double(const Eigen::VectorXd&, double)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&, double)>;

/// Canonical Hamiltonian structure attached to a system whose axes split into
/// configuration coordinates q and conjugate momenta p.
struct CanonicalStructure {
    std::function<double(const Eigen::VectorXd& q, const Eigen::VectorXd& p, double t)> hamiltonian;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&, double)> dH_dq;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&, double)> dH_dp;
    std::vector<int> q_axes;
    std::vector<int> p_axes;
    std::vector<int> cyclic_q_axes;   // q axes the Hamiltonian does not depend on
    bool time_independent = true;

    Eigen::VectorXd pick_q(const Eigen::VectorXd& x) const {
        Eigen::VectorXd q(q_axes.size());
        for (std::size_t i = 0; i < q_axes.size(); ++i) q[static_cast<int>(i)] = x[q_axes[i]];
        return q;
    }
    Eigen::VectorXd pick_p(const Eigen::VectorXd& x) const {
        Eigen::VectorXd p(p_axes.size());
        for (std::size_t i = 0; i < p_axes.size(); ++i) p[static_cast<int>(i)] = x[p_axes[i]];
        return p;
    }
    double h_at(const Eigen::VectorXd& x, double t) const {
        return hamiltonian(pick_q(x), pick_p(x), t);
    }
};

/// A vector field xdot = v(x, t) with whatever analytic structure is known.
/// Missing divergence or Jacobian falls back to central finite differences
/// with step 1e-5 * length_scale.
struct DynamicalSystem {
    int dimension = 0;
    std::string name;
    VelocityFn velocity;
    ScalarFieldFn divergence;        // may be empty
    JacobianFn velocity_jacobian;    // may be empty
    bool is_divergence_free = false;
    std::optional<CanonicalStructure> canonical;
    double length_scale = 1.0;

    double fd_step() const { return 1e-5 * length_scale; }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, double t) const {
        if (velocity_jacobian) return velocity_jacobian(x, t);
        const double h = fd_step();
        Eigen::MatrixXd J(dimension, dimension);
        Eigen::VectorXd xp = x, xm = x;
        for (int k = 0; k < dimension; ++k) {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            J.col(k) = (velocity(xp, t) - velocity(xm, t)) / (2.0 * h);
            xp[k] = x[k];
            xm[k] = x[k];
        }
        return J;
    }

    double div(const Eigen::VectorXd& x, double t) const {
        if (is_divergence_free) return 0.0;
        if (divergence) return divergence(x, t);
        return jacobian(x, t).trace();
    }
};

/// Gauge choice for the amplitude phase: phidot = -W/hbar.
/// Modes: zero (phase frozen), lagrangian (W = -L, canonical systems only),
/// custom (user field).
class PhaseGenerator {
public:
    enum class Mode { zero, lagrangian, custom };

    using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;

    static PhaseGenerator zero() { return PhaseGenerator(Mode::zero); }
    static PhaseGenerator lagrangian() { return PhaseGenerator(Mode::lagrangian); }
    static PhaseGenerator custom(ScalarFieldFn w, GradientFn grad = nullptr) {
        PhaseGenerator g(Mode::custom);
        g.w_ = std::move(w);
        g.grad_ = std::move(grad);
        return g;
    }

    Mode mode() const { return mode_; }
    bool is_zero() const { return mode_ == Mode::zero; }

    double operator()(const DynamicalSystem& sys, const Eigen::VectorXd& x, double t) const {
        switch (mode_) {
            case Mode::zero:
                return 0.0;
            case Mode::lagrangian: {
                if (!sys.canonical)
                    throw std::invalid_argument(
                        "lagrangian phase generator requires a canonical system");
                const auto& c = *sys.canonical;
                const Eigen::VectorXd q = c.pick_q(x), p = c.pick_p(x);
                // W = -L = H - p . dH/dp
                return c.hamiltonian(q, p, t) - p.dot(c.dH_dp(q, p, t));
            }
            default:
                return w_(x, t);
        }
    }

    Eigen::VectorXd gradient(const DynamicalSystem& sys, const Eigen::VectorXd& x, double t) const {
        if (mode_ == Mode::zero) return Eigen::VectorXd::Zero(sys.dimension);
        if (grad_) return grad_(x, t);
        const double h = sys.fd_step();
        Eigen::VectorXd g(sys.dimension);
        Eigen::VectorXd xp = x, xm = x;
        for (int k = 0; k < sys.dimension; ++k) {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            g[k] = ((*this)(sys, xp, t) - (*this)(sys, xm, t)) / (2.0 * h);
            xp[k] = x[k];
            xm[k] = x[k];
        }
        return g;
    }

private:
    explicit PhaseGenerator(Mode m) : mode_(m) {}
    Mode mode_;
    ScalarFieldFn w_;
    GradientFn grad_;
};

/// Everything gathered along one characteristic.
struct CharacteristicsBundle {
    std::vector<double> times;
    Eigen::MatrixXd states;        // (steps+1) x d
    Eigen::MatrixXd multipliers;   // (steps+1) x d, empty unless the multiplier flow ran
    std::vector<double> jacobian_full;    // J0(t) = det(dx0/dx)
    std::vector<double> jacobian_config;  // det(dq/dq0)|_{p0}; canonical systems only
    int maslov = 0;                       // filled by the phase module
    std::vector<double> phase;            // likewise
    std::vector<double> w_integral;       // likewise

    std::size_t samples() const { return times.size(); }
    Eigen::VectorXd state_at(std::size_t k) const { return states.row(static_cast<int>(k)); }
    Eigen::VectorXd multiplier_at(std::size_t k) const {
        return multipliers.row(static_cast<int>(k));
    }
};

namespace detail {

inline void check_finite(const Eigen::VectorXd& y, double t, const std::string& who) {
    if (!y.allFinite())
        throw BlowupError(t, who + ": non-finite state at t = " + fmt_g17(t));
}

/// One RK4 step of y' = f(t, y).
template <typename Rhs>
Eigen::VectorXd rk4_step(const Rhs& f, double t, const Eigen::VectorXd& y, double h) {
    const Eigen::VectorXd k1 = f(t, y);
    const Eigen::VectorXd k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = f(t + h, y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline int step_count(double t0, double t1, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const double span = std::abs(t1 - t0);
    if (span == 0.0) return 0;
    return std::max(1, static_cast<int>(std::ceil(span / dt - 1e-12)));
}

}  // namespace detail

/// Integrates x' = v(x,t) together with the variational matrix Phi = dx/dx0,
/// Phi' = (grad v) Phi, and stores J0 = 1/det(Phi) at every sample.
/// Fixed-step RK4; the step is shrunk slightly so the span divides evenly.
inline CharacteristicsBundle integrate_characteristics(const DynamicalSystem& sys,
                                                       const Eigen::VectorXd& x0, double t0,
                                                       double t1, double dt) {
    const int d = sys.dimension;
    const int n = detail::step_count(t0, t1, dt);
    const double h = n > 0 ? (t1 - t0) / n : 0.0;

    auto rhs = [&](double t, const Eigen::VectorXd& y) {
        const Eigen::VectorXd x = y.head(d);
        const Eigen::MatrixXd Phi = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
        const Eigen::MatrixXd J = sys.jacobian(x, t);
        Eigen::VectorXd dy(d + d * d);
        dy.head(d) = sys.velocity(x, t);
        Eigen::Map<Eigen::MatrixXd>(dy.data() + d, d, d) = J * Phi;
        return dy;
    };

    Eigen::VectorXd y(d + d * d);
    y.head(d) = x0;
    Eigen::Map<Eigen::MatrixXd>(y.data() + d, d, d) = Eigen::MatrixXd::Identity(d, d);

    CharacteristicsBundle b;
    b.times.resize(static_cast<std::size_t>(n) + 1);
    b.states.resize(n + 1, d);
    b.jacobian_full.resize(static_cast<std::size_t>(n) + 1);
    const bool config = sys.canonical.has_value() && !sys.canonical->q_axes.empty();
    if (config) b.jacobian_config.resize(static_cast<std::size_t>(n) + 1);

    auto record = [&](int k, double t) {
        b.times[static_cast<std::size_t>(k)] = t;
        b.states.row(k) = y.head(d);
        const Eigen::MatrixXd Phi = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
        const double det_fwd = Phi.determinant();
        b.jacobian_full[static_cast<std::size_t>(k)] = 1.0 / det_fwd;
        if (config) {
            const auto& qa = sys.canonical->q_axes;
            const int nq = static_cast<int>(qa.size());
            Eigen::MatrixXd Qblock(nq, nq);
            for (int r = 0; r < nq; ++r)
                for (int c = 0; c < nq; ++c) Qblock(r, c) = Phi(qa[static_cast<std::size_t>(r)], qa[static_cast<std::size_t>(c)]);
            b.jacobian_config[static_cast<std::size_t>(k)] = Qblock.determinant();
        }
    };

    record(0, t0);
    for (int k = 0; k < n; ++k) {
        const double t = t0 + h * k;
        y = detail::rk4_step(rhs, t, y, h);
        detail::check_finite(y, t + h, "integrate_characteristics");
        record(k + 1, t0 + h * (k + 1));
    }
    return b;
}

/// Characteristics plus the Lagrange multiplier flow
/// Pdot = -(grad v)^T P - grad W generated by H = P.v + W.
inline CharacteristicsBundle lagrange_multiplier_flow(const DynamicalSystem& sys,
                                                      const PhaseGenerator& w,
                                                      const Eigen::VectorXd& x0,
                                                      const Eigen::VectorXd& p0, double t0,
                                                      double t1, double dt) {
    const int d = sys.dimension;
    const int n = detail::step_count(t0, t1, dt);
    const double h = n > 0 ? (t1 - t0) / n : 0.0;

    auto rhs = [&](double t, const Eigen::VectorXd& y) {
        const Eigen::VectorXd x = y.head(d);
        const Eigen::MatrixXd Phi = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
        const Eigen::VectorXd P = y.tail(d);
        const Eigen::MatrixXd J = sys.jacobian(x, t);
        Eigen::VectorXd dy(2 * d + d * d);
        dy.head(d) = sys.velocity(x, t);
        Eigen::Map<Eigen::MatrixXd>(dy.data() + d, d, d) = J * Phi;
        dy.tail(d) = -J.transpose() * P - w.gradient(sys, x, t);
        return dy;
    };

    Eigen::VectorXd y(2 * d + d * d);
    y.head(d) = x0;
    Eigen::Map<Eigen::MatrixXd>(y.data() + d, d, d) = Eigen::MatrixXd::Identity(d, d);
    y.tail(d) = p0;

    CharacteristicsBundle b;
    b.times.resize(static_cast<std::size_t>(n) + 1);
    b.states.resize(n + 1, d);
    b.multipliers.resize(n + 1, d);
    b.jacobian_full.resize(static_cast<std::size_t>(n) + 1);
    const bool config = sys.canonical.has_value() && !sys.canonical->q_axes.empty();
    if (config) b.jacobian_config.resize(static_cast<std::size_t>(n) + 1);

    auto record = [&](int k, double t) {
        b.times[static_cast<std::size_t>(k)] = t;
        b.states.row(k) = y.head(d);
        b.multipliers.row(k) = y.tail(d);
        const Eigen::MatrixXd Phi = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
        b.jacobian_full[static_cast<std::size_t>(k)] = 1.0 / Phi.determinant();
        if (config) {
            const auto& qa = sys.canonical->q_axes;
            const int nq = static_cast<int>(qa.size());
            Eigen::MatrixXd Qblock(nq, nq);
            for (int r = 0; r < nq; ++r)
                for (int c = 0; c < nq; ++c) Qblock(r, c) = Phi(qa[static_cast<std::size_t>(r)], qa[static_cast<std::size_t>(c)]);
            b.jacobian_config[static_cast<std::size_t>(k)] = Qblock.determinant();
        }
    };

    record(0, t0);
    for (int k = 0; k < n; ++k) {
        const double t = t0 + h * k;
        y = detail::rk4_step(rhs, t, y, h);
        detail::check_finite(y, t + h, "lagrange_multiplier_flow");
        record(k + 1, t0 + h * (k + 1));
    }
    return b;
}

/// Nonnegative density sampled on a grid; sum(f) * cell_volume == 1 once normalized.
struct GridDensity {
    const PhaseSpaceGrid* grid = nullptr;
    Eigen::VectorXd values;

    double total() const { return values.sum() * grid->cell_volume(); }
    /// Scales to unit total probability; returns the factor applied.
    double normalize() {
        const double tot = total();
        if (!(tot > 0.0)) throw std::runtime_error("GridDensity::normalize: zero total mass");
        values /= tot;
        return 1.0 / tot;
    }
};

/// Periodic multilinear interpolation of grid samples at an arbitrary point.
inline double interpolate_periodic(const PhaseSpaceGrid& grid, const Eigen::VectorXd& values,
                                   const Eigen::VectorXd& point) {
    const int d = grid.dim();
    std::vector<int> base(static_cast<std::size_t>(d));
    std::vector<double> frac(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        const auto& ax = grid.axis(j);
        double u = (point[j] - ax.x_min) / grid.dx(j);
        u -= std::floor(u / ax.levels) * ax.levels;  // into [0, L)
        const int i0 = static_cast<int>(std::floor(u)) % ax.levels;
        base[static_cast<std::size_t>(j)] = i0;
        frac[static_cast<std::size_t>(j)] = u - std::floor(u);
    }
    double acc = 0.0;
    std::vector<int> corner(static_cast<std::size_t>(d));
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
        double w = 1.0;
        for (int j = 0; j < d; ++j) {
            const bool hi = mask & (1u << j);
            w *= hi ? frac[static_cast<std::size_t>(j)] : 1.0 - frac[static_cast<std::size_t>(j)];
            corner[static_cast<std::size_t>(j)] = base[static_cast<std::size_t>(j)] + (hi ? 1 : 0);
        }
        if (w != 0.0) acc += w * values[static_cast<Eigen::Index>(grid.index_of(corner))];
    }
    return acc;
}

struct LiouvilleResult {
    GridDensity density;
    double renormalization = 1.0;  // factor applied to restore unit mass
};

/// Semi-Lagrangian reference solution of the Liouville equation: each node is
/// traced backward along the characteristics, f0 is sampled there, and the
/// value is weighted by |J0|. Independent of the spectral/sparse machinery.
inline LiouvilleResult liouville_oracle(const DynamicalSystem& sys, const GridDensity& f0,
                                        double t0, double t1, int substeps) {
    if (substeps < 1) throw std::invalid_argument("liouville_oracle: substeps must be >= 1");
    const PhaseSpaceGrid& grid = *f0.grid;
    const int d = sys.dimension;
    if (grid.dim() != d) throw std::invalid_argument("liouville_oracle: grid/system dimension mismatch");

    const std::size_t N = grid.size();
    Eigen::VectorXd out(static_cast<Eigen::Index>(N));
    const double h = (t0 - t1) / substeps;  // backward in time

    parallel_for(0, N, [&](std::size_t i) {
        auto rhs = [&](double t, const Eigen::VectorXd& y) {
            const Eigen::VectorXd x = y.head(d);
            const Eigen::MatrixXd Psi = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
            const Eigen::MatrixXd J = sys.jacobian(x, t);
            Eigen::VectorXd dy(d + d * d);
            dy.head(d) = sys.velocity(x, t);
            Eigen::Map<Eigen::MatrixXd>(dy.data() + d, d, d) = J * Psi;
            return dy;
        };
        Eigen::VectorXd y(d + d * d);
        y.head(d) = grid.coordinates_of(i);
        Eigen::Map<Eigen::MatrixXd>(y.data() + d, d, d) = Eigen::MatrixXd::Identity(d, d);
        double t = t1;
        for (int k = 0; k < substeps; ++k) {
            y = detail::rk4_step(rhs, t, y, h);
            t += h;
            detail::check_finite(y, t, "liouville_oracle (backward characteristic)");
        }
        // Psi = d x0 / d x, so det(Psi) is exactly J0 evaluated at this node.
        const Eigen::MatrixXd Psi = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
        const double j0 = Psi.determinant();
        const double f_val = interpolate_periodic(grid, f0.values, y.head(d));
        out[static_cast<Eigen::Index>(i)] = std::abs(j0) * std::max(0.0, f_val);
    });

    LiouvilleResult r;
    r.density.grid = &grid;
    r.density.values = out;
    r.renormalization = r.density.normalize();
    return r;
}

/// Max |divergence - trace(grad v)| over the samples; both must be analytic.
inline double divergence_check(const DynamicalSystem& sys,
                               const std::vector<Eigen::VectorXd>& samples, double t = 0.0) {
    if (!sys.divergence && !sys.is_divergence_free)
        throw std::invalid_argument("divergence_check: system lacks an analytic divergence");
    if (!sys.velocity_jacobian)
        throw std::invalid_argument("divergence_check: system lacks an analytic Jacobian");
    double worst = 0.0;
    for (const auto& x : samples)
        worst = std::max(worst, std::abs(sys.div(x, t) - sys.velocity_jacobian(x, t).trace()));
    return worst;
}

// ---------------------------------------------------------------------------
// Builtin systems
// ---------------------------------------------------------------------------

struct BuiltinParams {
    std::map<std::string, double> scalars;
    Eigen::MatrixXd matrix;                 // linear system A
    std::vector<std::string> expressions;   // expression-defined fields

    double get(const std::string& key, double fallback) const {
        auto it = scalars.find(key);
        return it == scalars.end() ? fallback : it->second;
    }
    double require(const std::string& key) const {
        auto it = scalars.find(key);
        if (it == scalars.end())
            throw std::invalid_argument("missing parameter '" + key + "'");
        return it->second;
    }
};

inline DynamicalSystem make_exponential(double gamma) {
    DynamicalSystem s;
    s.dimension = 1;
    s.name = "exponential";
    s.velocity = [gamma](const Eigen::VectorXd& x, double) {
        return Eigen::VectorXd::Constant(1, gamma * x[0]);
    };
    s.divergence = [gamma](const Eigen::VectorXd&, double) { return gamma; };
    s.velocity_jacobian = [gamma](const Eigen::VectorXd&, double) {
        return Eigen::MatrixXd::Constant(1, 1, gamma);
    };
    s.is_divergence_free = (gamma == 0.0);
    return s;
}

inline DynamicalSystem make_linear(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols() || A.rows() < 1)
        throw std::invalid_argument("linear system: A must be square and non-empty");
    DynamicalSystem s;
    s.dimension = static_cast<int>(A.rows());
    s.name = "linear";
    s.velocity = [A](const Eigen::VectorXd& x, double) -> Eigen::VectorXd { return A * x; };
    const double tr = A.trace();
    s.divergence = [tr](const Eigen::VectorXd&, double) { return tr; };
    s.velocity_jacobian = [A](const Eigen::VectorXd&, double) { return A; };
    s.is_divergence_free = (tr == 0.0);
    return s;
}

inline DynamicalSystem make_harmonic_oscillator(double omega0) {
    DynamicalSystem s;
    s.dimension = 2;
    s.name = "harmonic_oscillator";
    s.velocity = [omega0](const Eigen::VectorXd& x, double) {
        Eigen::VectorXd v(2);
        v << omega0 * x[1], -omega0 * x[0];
        return v;
    };
    s.divergence = [](const Eigen::VectorXd&, double) { return 0.0; };
    s.velocity_jacobian = [omega0](const Eigen::VectorXd&, double) {
        Eigen::MatrixXd J(2, 2);
        J << 0, omega0, -omega0, 0;
        return J;
    };
    s.is_divergence_free = true;
    CanonicalStructure c;
    c.q_axes = {0};
    c.p_axes = {1};
    c.hamiltonian = [omega0](const Eigen::VectorXd& q, const Eigen::VectorXd& p, double) {
        return 0.5 * omega0 * (q.squaredNorm() + p.squaredNorm());
    };
    c.dH_dq = [omega0](const Eigen::VectorXd& q, const Eigen::VectorXd&, double) -> Eigen::VectorXd {
        return omega0 * q;
    };
    c.dH_dp = [omega0](const Eigen::VectorXd&, const Eigen::VectorXd& p, double) -> Eigen::VectorXd {
        return omega0 * p;
    };
    s.canonical = std::move(c);
    return s;
}

inline DynamicalSystem make_free_particle(double mass) {
    if (!(mass > 0.0)) throw std::invalid_argument("free_particle: mass must be positive");
    DynamicalSystem s;
    s.dimension = 2;
    s.name = "free_particle";
    s.velocity = [mass](const Eigen::VectorXd& x, double) {
        Eigen::VectorXd v(2);
        v << x[1] / mass, 0.0;
        return v;
    };
    s.divergence = [](const Eigen::VectorXd&, double) { return 0.0; };
    s.velocity_jacobian = [mass](const Eigen::VectorXd&, double) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2, 2);
        J(0, 1) = 1.0 / mass;
        return J;
    };
    s.is_divergence_free = true;
    CanonicalStructure c;
    c.q_axes = {0};
    c.p_axes = {1};
    c.cyclic_q_axes = {0};
    c.hamiltonian = [mass](const Eigen::VectorXd&, const Eigen::VectorXd& p, double) {
        return 0.5 * p.squaredNorm() / mass;
    };
    c.dH_dq = [](const Eigen::VectorXd& q, const Eigen::VectorXd&, double) -> Eigen::VectorXd {
        return Eigen::VectorXd::Zero(q.size());
    };
    c.dH_dp = [mass](const Eigen::VectorXd&, const Eigen::VectorXd& p, double) -> Eigen::VectorXd {
        return p / mass;
    };
    s.canonical = std::move(c);
    return s;
}

/// H = p^2/2 - omega0^2 cos(q); the q axis is naturally 2*pi periodic.
inline DynamicalSystem make_pendulum(double omega0) {
    DynamicalSystem s;
    s.dimension = 2;
    s.name = "pendulum";
    const double w2 = omega0 * omega0;
    s.velocity = [w2](const Eigen::VectorXd& x, double) {
        Eigen::VectorXd v(2);
        v << x[1], -w2 * std::sin(x[0]);
        return v;
    };
    s.divergence = [](const Eigen::VectorXd&, double) { return 0.0; };
    s.velocity_jacobian = [w2](const Eigen::VectorXd& x, double) {
        Eigen::MatrixXd J(2, 2);
        J << 0, 1, -w2 * std::cos(x[0]), 0;
        return J;
    };
    s.is_divergence_free = true;
    CanonicalStructure c;
    c.q_axes = {0};
    c.p_axes = {1};
    c.hamiltonian = [w2](const Eigen::VectorXd& q, const Eigen::VectorXd& p, double) {
        return 0.5 * p.squaredNorm() - w2 * std::cos(q[0]);
    };
    c.dH_dq = [w2](const Eigen::VectorXd& q, const Eigen::VectorXd&, double) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, w2 * std::sin(q[0]));
    };
    c.dH_dp = [](const Eigen::VectorXd&, const Eigen::VectorXd& p, double) -> Eigen::VectorXd {
        return p;
    };
    s.canonical = std::move(c);
    return s;
}

/// Unforced Duffing oscillator qdot = p, pdot = -delta p - alpha q - beta q^3.
/// Dissipative for delta > 0, so deliberately non-canonical here.
inline DynamicalSystem make_duffing(double alpha, double beta, double delta) {
    DynamicalSystem s;
    s.dimension = 2;
    s.name = "duffing";
    s.velocity = [=](const Eigen::VectorXd& x, double) {
        Eigen::VectorXd v(2);
        v << x[1], -delta * x[1] - alpha * x[0] - beta * x[0] * x[0] * x[0];
        return v;
    };
    s.divergence = [delta](const Eigen::VectorXd&, double) { return -delta; };
    s.velocity_jacobian = [=](const Eigen::VectorXd& x, double) {
        Eigen::MatrixXd J(2, 2);
        J << 0, 1, -alpha - 3.0 * beta * x[0] * x[0], -delta;
        return J;
    };
    s.is_divergence_free = (delta == 0.0);
    return s;
}

/// Integrable oscillator in action-angle form on axes (theta, J):
/// H0(J) = omega0 J + beta J^2 / 2, thetadot = omega0 + beta J.
inline DynamicalSystem make_action_angle(double omega0, double beta) {
    DynamicalSystem s;
    s.dimension = 2;
    s.name = "action_angle";
    s.velocity = [=](const Eigen::VectorXd& x, double) {
        Eigen::VectorXd v(2);
        v << omega0 + beta * x[1], 0.0;
        return v;
    };
    s.divergence = [](const Eigen::VectorXd&, double) { return 0.0; };
    s.velocity_jacobian = [beta](const Eigen::VectorXd&, double) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2, 2);
        J(0, 1) = beta;
        return J;
    };
    s.is_divergence_free = true;
    CanonicalStructure c;
    c.q_axes = {0};
    c.p_axes = {1};
    c.cyclic_q_axes = {0};
    c.hamiltonian = [=](const Eigen::VectorXd&, const Eigen::VectorXd& p, double) {
        return omega0 * p[0] + 0.5 * beta * p[0] * p[0];
    };
    c.dH_dq = [](const Eigen::VectorXd& q, const Eigen::VectorXd&, double) -> Eigen::VectorXd {
        return Eigen::VectorXd::Zero(q.size());
    };
    c.dH_dp = [=](const Eigen::VectorXd&, const Eigen::VectorXd& p, double) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, omega0 + beta * p[0]);
    };
    s.canonical = std::move(c);
    return s;
}

/// Field defined by one expression string per component, over x1..xd and t.
/// Divergence and Jacobian fall back to finite differences.
inline DynamicalSystem make_expression_system(const std::vector<std::string>& exprs) {
    if (exprs.empty()) throw std::invalid_argument("expression system needs >= 1 component");
    const int d = static_cast<int>(exprs.size());
    std::vector<Expression> compiled;
    compiled.reserve(exprs.size());
    for (const auto& e : exprs) compiled.push_back(Expression::parse(e, d));
    DynamicalSystem s;
    s.dimension = d;
    s.name = "expression";
    s.velocity = [compiled](const Eigen::VectorXd& x, double t) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(compiled.size()));
        for (std::size_t j = 0; j < compiled.size(); ++j)
            v[static_cast<Eigen::Index>(j)] = compiled[j](x, t);
        return v;
    };
    return s;
}

inline DynamicalSystem make_builtin_system(const std::string& name,
                                           const BuiltinParams& params = {}) {
    if (name == "exponential") return make_exponential(params.get("gamma", 1.0));
    if (name == "linear") return make_linear(params.matrix);
    if (name == "harmonic_oscillator")
        return make_harmonic_oscillator(params.get("omega0", 1.0));
    if (name == "free_particle") return make_free_particle(params.get("mass", 1.0));
    if (name == "pendulum") return make_pendulum(params.get("omega0", 1.0));
    if (name == "duffing")
        return make_duffing(params.get("alpha", 1.0), params.get("beta", 1.0),
                            params.get("delta", 0.0));
    if (name == "action_angle")
        return make_action_angle(params.get("omega0", 1.0), params.get("beta", 0.0));
    if (name == "scalar_autonomous" || name == "expression") {
        if (params.expressions.empty())
            throw std::invalid_argument(name + " system requires expression strings");
        if (name == "scalar_autonomous" && params.expressions.size() != 1)
            throw std::invalid_argument("scalar_autonomous takes exactly one expression");
        return make_expression_system(params.expressions);
    }
    throw std::invalid_argument(
        "unknown builtin system '" + name +
        "' (expected one of: scalar_autonomous, exponential, linear, harmonic_oscillator, "
        "free_particle, pendulum, duffing, action_angle, expression)");
}

/// Max mismatch between the declared velocity and the one induced by the
/// canonical structure (qdot = dH/dp, pdot = -dH/dq) over the samples.
inline double canonical_consistency_check(const DynamicalSystem& sys,
                                          const std::vector<Eigen::VectorXd>& samples,
                                          double t = 0.0) {
    if (!sys.canonical) throw std::invalid_argument("system has no canonical structure");
    const auto& c = *sys.canonical;
    double worst = 0.0;
    for (const auto& x : samples) {
        const Eigen::VectorXd q = c.pick_q(x), p = c.pick_p(x);
        const Eigen::VectorXd v = sys.velocity(x, t);
        const Eigen::VectorXd dq = c.dH_dp(q, p, t);
        const Eigen::VectorXd dp = -c.dH_dq(q, p, t);
        for (std::size_t i = 0; i < c.q_axes.size(); ++i)
            worst = std::max(worst, std::abs(v[c.q_axes[i]] - dq[static_cast<Eigen::Index>(i)]));
        for (std::size_t i = 0; i < c.p_axes.size(); ++i)
            worst = std::max(worst, std::abs(v[c.p_axes[i]] - dp[static_cast<Eigen::Index>(i)]));
    }
    return worst;
}

}  // namespace kvn
