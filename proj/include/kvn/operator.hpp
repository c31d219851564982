#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "kvn/common.hpp"
#include "kvn/dynamics.hpp"
#include "kvn/grid.hpp"

namespace kvn {

enum class Scheme { central_fd2, central_fd4, spectral };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::central_fd2: return "central_fd2";
        case Scheme::central_fd4: return "central_fd4";
        default: return "spectral";
    }
}

namespace detail {

/// Offsets/coefficients of the periodic antisymmetric derivative stencils.
inline std::vector<std::pair<int, double>> stencil(Scheme s, double dx) {
    if (s == Scheme::central_fd2)
        return {{1, 1.0 / (2.0 * dx)}, {-1, -1.0 / (2.0 * dx)}};
    return {{1, 8.0 / (12.0 * dx)},
            {2, -1.0 / (12.0 * dx)},
            {-1, -8.0 / (12.0 * dx)},
            {-2, 1.0 / (12.0 * dx)}};
}

/// Applies the forward DFT along one axis of the row-major array (in place).
/// sign=+1 is the forward transform, sign=-1 the scaled inverse.
inline void fft_axis(const PhaseSpaceGrid& grid, int axis, Eigen::VectorXcd& data, int sign) {
    const int L = grid.axis(axis).levels;
    const std::size_t stride = grid.stride(axis);
    const std::size_t N = grid.size();
    Eigen::FFT<double> fft;
    std::vector<cplx> line(static_cast<std::size_t>(L)), out(static_cast<std::size_t>(L));
    for (std::size_t base = 0; base < N; ++base) {
        if ((base / stride) % static_cast<std::size_t>(L) != 0) continue;
        for (int k = 0; k < L; ++k) line[static_cast<std::size_t>(k)] = data[static_cast<Eigen::Index>(base + static_cast<std::size_t>(k) * stride)];
        if (sign > 0)
            fft.fwd(out, line);
        else
            fft.inv(out, line);
        for (int k = 0; k < L; ++k) data[static_cast<Eigen::Index>(base + static_cast<std::size_t>(k) * stride)] = out[static_cast<std::size_t>(k)];
    }
}

}  // namespace detail

/// Matrix-free realization of the spectral KvN Hamiltonian:
/// sum_j (V_j P_j + P_j V_j)/2 + W with P_j applied in Fourier space.
class SpectralKvN {
public:
    SpectralKvN(const PhaseSpaceGrid& grid, std::vector<Eigen::VectorXd> velocity_fields,
                Eigen::VectorXd w_diag)
        : grid_(&grid), v_(std::move(velocity_fields)), w_(std::move(w_diag)) {}

    Eigen::VectorXcd apply(const Eigen::VectorXcd& psi) const {
        const std::size_t N = grid_->size();
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(N));
        for (int j = 0; j < grid_->dim(); ++j) {
            const Eigen::VectorXd& vj = v_[static_cast<std::size_t>(j)];
            Eigen::VectorXcd a = psi;
            momentum_multiply(j, a);  // P_j psi
            Eigen::VectorXcd b(psi.size());
            for (Eigen::Index i = 0; i < psi.size(); ++i) b[i] = vj[i] * psi[i];
            momentum_multiply(j, b);  // P_j (v_j psi)
            for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += 0.5 * (vj[i] * a[i] + b[i]);
        }
        if (w_.size() > 0)
            for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += w_[i] * psi[i];
        return out;
    }

private:
    void momentum_multiply(int axis, Eigen::VectorXcd& data) const {
        detail::fft_axis(*grid_, axis, data, +1);
        const auto& P = grid_->momentum_grid(axis);
        const int L = grid_->axis(axis).levels;
        const std::size_t stride = grid_->stride(axis);
        const std::size_t N = grid_->size();
        for (std::size_t base = 0; base < N; ++base) {
            if ((base / stride) % static_cast<std::size_t>(L) != 0) continue;
            for (int k = 0; k < L; ++k)
                data[static_cast<Eigen::Index>(base + static_cast<std::size_t>(k) * stride)] *= P[static_cast<std::size_t>(k)];
        }
        detail::fft_axis(*grid_, axis, data, -1);
    }

    const PhaseSpaceGrid* grid_;
    std::vector<Eigen::VectorXd> v_;  // one sampled field per axis
    Eigen::VectorXd w_;
};

/// Discrete Hermitian KvN Hamiltonian K = sum_j (V_j D_j + D_j V_j) * (-i hbar/2) + W.
/// Central schemes materialize a sparse matrix whose Hermiticity is structural;
/// the spectral scheme stays matrix-free.
class KvNOperator {
public:
    using Sparse = Eigen::SparseMatrix<cplx>;

    const PhaseSpaceGrid& grid() const { return *grid_; }
    Scheme scheme() const { return scheme_; }
    PhaseGenerator::Mode w_mode() const { return w_mode_; }
    double built_at_time() const { return time_; }
    int sparsity() const { return sparsity_; }
    double norm_bound() const { return norm_bound_; }
    bool is_matrix_free() const { return scheme_ == Scheme::spectral; }

    const Sparse& matrix() const {
        if (is_matrix_free())
            throw std::logic_error("spectral operator has no assembled sparse matrix");
        return mat_;
    }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& psi) const {
        if (static_cast<std::size_t>(psi.size()) != grid_->size())
            throw std::invalid_argument("KvNOperator::apply: size mismatch");
        if (is_matrix_free()) return spectral_->apply(psi);
        return mat_ * psi;
    }

    /// Materializes the full matrix (column by column for spectral operators).
    Eigen::MatrixXcd dense(std::size_t max_states = 4096) const {
        const std::size_t N = grid_->size();
        if (N > max_states)
            throw std::invalid_argument("dense(): grid too large (" + std::to_string(N) +
                                        " states, cap " + std::to_string(max_states) + ")");
        if (!is_matrix_free()) return Eigen::MatrixXcd(mat_);
        Eigen::MatrixXcd out(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(N));
        for (std::size_t c = 0; c < N; ++c) {
            e[static_cast<Eigen::Index>(c)] = 1.0;
            out.col(static_cast<Eigen::Index>(c)) = spectral_->apply(e);
            e[static_cast<Eigen::Index>(c)] = 0.0;
        }
        return out;
    }

    /// True when every stored entry sits on the diagonal (the W Trotter part).
    bool is_diagonal() const {
        if (is_matrix_free()) return false;
        for (int k = 0; k < mat_.outerSize(); ++k)
            for (Sparse::InnerIterator it(mat_, k); it; ++it)
                if (it.row() != it.col() && it.value() != cplx(0.0, 0.0)) return false;
        return true;
    }

    Eigen::VectorXcd diagonal() const { return mat_.diagonal(); }

private:
    friend KvNOperator build_kvn_operator(const PhaseSpaceGrid&, const DynamicalSystem&,
                                          const PhaseGenerator&, Scheme, double);
    friend std::vector<KvNOperator> trotter_split(const KvNOperator&);

    KvNOperator() = default;

    void finalize_norm_bound() {
        // 20 power iterations; plenty for a step-size heuristic.
        const std::size_t N = grid_->size();
        std::mt19937_64 rng(0x5eed5eedULL);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Eigen::VectorXcd x(static_cast<Eigen::Index>(N));
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = cplx(u(rng), u(rng));
        x.normalize();
        double lambda = 0.0;
        for (int it = 0; it < 20; ++it) {
            Eigen::VectorXcd y = apply(x);
            lambda = y.norm();
            if (lambda == 0.0) break;
            x = y / lambda;
        }
        norm_bound_ = lambda;
    }

    void count_sparsity() {
        int s = 0;
        for (int k = 0; k < mat_.outerSize(); ++k) {
            int row_nnz = 0;
            for (Sparse::InnerIterator it(mat_, k); it; ++it)
                if (it.value() != cplx(0.0, 0.0)) ++row_nnz;
            s = std::max(s, row_nnz);
        }
        sparsity_ = s;
    }

    const PhaseSpaceGrid* grid_ = nullptr;
    Scheme scheme_ = Scheme::central_fd2;
    PhaseGenerator::Mode w_mode_ = PhaseGenerator::Mode::zero;
    double time_ = 0.0;
    Sparse mat_;
    std::shared_ptr<const SpectralKvN> spectral_;
    int sparsity_ = 0;
    double norm_bound_ = 0.0;
};

inline KvNOperator build_kvn_operator(const PhaseSpaceGrid& grid, const DynamicalSystem& sys,
                                      const PhaseGenerator& w, Scheme scheme, double time = 0.0) {
    if (grid.dim() != sys.dimension)
        throw std::invalid_argument("build_kvn_operator: grid and system dimension differ");
    if (w.mode() == PhaseGenerator::Mode::lagrangian && !sys.canonical)
        throw std::invalid_argument(
            "build_kvn_operator: lagrangian W requires a canonical system");

    const std::size_t N = grid.size();
    const double hbar = grid.hbar();
    const int d = grid.dim();

    // Node-sampled velocity components and W.
    std::vector<Eigen::VectorXd> v_fields(static_cast<std::size_t>(d),
                                          Eigen::VectorXd(static_cast<Eigen::Index>(N)));
    Eigen::VectorXd w_diag;
    if (!w.is_zero()) w_diag.resize(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
        const Eigen::VectorXd x = grid.coordinates_of(i);
        const Eigen::VectorXd v = sys.velocity(x, time);
        for (int j = 0; j < d; ++j) v_fields[static_cast<std::size_t>(j)][static_cast<Eigen::Index>(i)] = v[j];
        if (!w.is_zero()) w_diag[static_cast<Eigen::Index>(i)] = w(sys, x, time);
    }

    KvNOperator op;
    op.grid_ = &grid;
    op.scheme_ = scheme;
    op.w_mode_ = w.mode();
    op.time_ = time;

    if (scheme == Scheme::spectral) {
        op.spectral_ = std::make_shared<SpectralKvN>(grid, std::move(v_fields),
                                                     w.is_zero() ? Eigen::VectorXd() : w_diag);
        op.sparsity_ = static_cast<int>(N);  // dense coupling in the position basis
        op.finalize_norm_bound();
        return op;
    }

    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(N * static_cast<std::size_t>(d) * (scheme == Scheme::central_fd2 ? 2 : 4) + N);
    std::vector<int> multi;
    for (int j = 0; j < d; ++j) {
        const auto st = detail::stencil(scheme, grid.dx(j));
        const int L = grid.axis(j).levels;
        const std::size_t stride = grid.stride(j);
        const auto& vj = v_fields[static_cast<std::size_t>(j)];
        for (std::size_t r = 0; r < N; ++r) {
            const int level = static_cast<int>((r / stride) % static_cast<std::size_t>(L));
            for (const auto& [off, coef] : st) {
                const int lc = ((level + off) % L + L) % L;
                const std::size_t c = r + (static_cast<std::size_t>(lc) - static_cast<std::size_t>(level)) * stride;
                // K(r,c) = -i (hbar/2) coef (v_r + v_c); purely imaginary.
                const double val = -0.5 * hbar * coef *
                                   (vj[static_cast<Eigen::Index>(r)] + vj[static_cast<Eigen::Index>(c)]);
                trips.emplace_back(static_cast<int>(r), static_cast<int>(c), cplx(0.0, val));
            }
        }
    }
    if (!w.is_zero())
        for (std::size_t i = 0; i < N; ++i)
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i),
                               cplx(w_diag[static_cast<Eigen::Index>(i)], 0.0));

    op.mat_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    op.mat_.setFromTriplets(trips.begin(), trips.end());
    op.count_sparsity();
    op.finalize_norm_bound();
    return op;
}

/// Max-norm of K - K^dagger. Central schemes give exactly zero by construction;
/// spectral operators are materialized under the given state cap.
inline double hermiticity_defect(const KvNOperator& op, std::size_t dense_cap = 4096) {
    if (!op.is_matrix_free()) {
        const auto& A = op.matrix();
        const KvNOperator::Sparse AH = A.adjoint();
        double worst = 0.0;
        KvNOperator::Sparse diff = A - AH;
        for (int k = 0; k < diff.outerSize(); ++k)
            for (KvNOperator::Sparse::InnerIterator it(diff, k); it; ++it)
                worst = std::max(worst, std::abs(it.value()));
        return worst;
    }
    const Eigen::MatrixXcd A = op.dense(dense_cap);
    return (A - A.adjoint()).cwiseAbs().maxCoeff();
}

/// Splits a central-scheme operator into one advection part per axis plus a
/// diagonal W part. The parts are assembled from the same sampled fields, so
/// they sum to the original matrix exactly.
inline std::vector<KvNOperator> trotter_split(const KvNOperator& op) {
    if (op.is_matrix_free())
        throw std::invalid_argument("trotter_split: spectral operators are not splittable");
    const PhaseSpaceGrid& grid = op.grid();
    const std::size_t N = grid.size();
    const int d = grid.dim();

    std::vector<KvNOperator> parts;
    // Rebuild per-axis blocks by scanning the assembled matrix: off-diagonal
    // entries of distinct axes live at distinct columns, so each entry belongs
    // to exactly one axis block (identified by its stride offset).
    std::vector<std::vector<Eigen::Triplet<cplx>>> axis_trips(static_cast<std::size_t>(d));
    std::vector<Eigen::Triplet<cplx>> diag_trips;
    const auto& A = op.matrix();
    for (int k = 0; k < A.outerSize(); ++k) {
        for (KvNOperator::Sparse::InnerIterator it(A, k); it; ++it) {
            const std::size_t r = static_cast<std::size_t>(it.row());
            const std::size_t c = static_cast<std::size_t>(it.col());
            if (r == c) {
                diag_trips.emplace_back(it.row(), it.col(), it.value());
                continue;
            }
            int owner = -1;
            for (int j = 0; j < d; ++j) {
                const std::size_t stride = grid.stride(j);
                const int L = grid.axis(j).levels;
                // same multi-index on every other axis?
                const std::size_t rj = (r / stride) % static_cast<std::size_t>(L);
                const std::size_t cj = (c / stride) % static_cast<std::size_t>(L);
                const std::size_t r_rest = r - rj * stride;
                const std::size_t c_rest = c - cj * stride;
                if (rj != cj && r_rest == c_rest) {
                    owner = j;
                    break;
                }
            }
            if (owner < 0) throw std::logic_error("trotter_split: entry belongs to no axis");
            axis_trips[static_cast<std::size_t>(owner)].emplace_back(it.row(), it.col(), it.value());
        }
    }

    for (int j = 0; j < d; ++j) {
        KvNOperator part;
        part.grid_ = &grid;
        part.scheme_ = op.scheme();
        part.w_mode_ = PhaseGenerator::Mode::zero;
        part.time_ = op.built_at_time();
        part.mat_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
        part.mat_.setFromTriplets(axis_trips[static_cast<std::size_t>(j)].begin(),
                                  axis_trips[static_cast<std::size_t>(j)].end());
        part.count_sparsity();
        part.finalize_norm_bound();
        parts.push_back(std::move(part));
    }
    if (op.w_mode() != PhaseGenerator::Mode::zero) {
        KvNOperator wpart;
        wpart.grid_ = &grid;
        wpart.scheme_ = op.scheme();
        wpart.w_mode_ = op.w_mode();
        wpart.time_ = op.built_at_time();
        wpart.mat_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
        wpart.mat_.setFromTriplets(diag_trips.begin(), diag_trips.end());
        wpart.count_sparsity();
        wpart.finalize_norm_bound();
        parts.push_back(std::move(wpart));
    }
    return parts;
}

/// Applies the periodic central-difference stencil along one axis.
inline Eigen::VectorXcd apply_periodic_central_diff(const PhaseSpaceGrid& grid, int axis,
                                                    Scheme scheme, const Eigen::VectorXcd& f) {
    if (scheme == Scheme::spectral)
        throw std::invalid_argument("apply_periodic_central_diff: central schemes only");
    const auto st = detail::stencil(scheme, grid.dx(axis));
    const int L = grid.axis(axis).levels;
    const std::size_t stride = grid.stride(axis);
    const std::size_t N = grid.size();
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(f.size());
    for (std::size_t r = 0; r < N; ++r) {
        const int level = static_cast<int>((r / stride) % static_cast<std::size_t>(L));
        cplx acc = 0.0;
        for (const auto& [off, coef] : st) {
            const int lc = ((level + off) % L + L) % L;
            const std::size_t c = r + (static_cast<std::size_t>(lc) - static_cast<std::size_t>(level)) * stride;
            acc += coef * f[static_cast<Eigen::Index>(c)];
        }
        out[static_cast<Eigen::Index>(r)] = acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resource accounting (quantum vs classical Monte Carlo cost formulas)
// ---------------------------------------------------------------------------

struct ResourceInputs {
    unsigned long long sparsity_s = 1;
    unsigned long long ell_bits = 1;          // qubits per axis, L = 2^ell
    unsigned long long particles_M = 1;
    unsigned long long dims_per_particle_d = 1;
    unsigned long long levels_L = 2;
    double epsilon = 0.1;                     // target accuracy for MC sampling
    unsigned long long interaction_sparsity_r = 1;
    unsigned long long time_steps_T = 1;
};

struct ResourceReport {
    unsigned long long quantum_cost = 0;    // 2 s ell M d^2 L^2
    unsigned long long mc_samples_K = 0;    // ceil(1/eps^2)
    unsigned long long classical_cost = 0;  // K r D T with D = 2 d M
    unsigned long long phase_space_dim_D = 0;
    unsigned long long qubits_n = 0;        // ell * D
};

inline unsigned long long mc_sample_count(double epsilon) {
    if (!(epsilon > 0.0) || !(epsilon <= 1.0))
        throw std::invalid_argument("mc_sample_count: epsilon must be in (0, 1]");
    const double raw = 1.0 / (epsilon * epsilon);
    const double rounded = std::nearbyint(raw);
    // Absorb float noise when 1/eps^2 is an exact integer, e.g. eps = 0.1.
    if (std::abs(raw - rounded) < 1e-6 * std::max(1.0, rounded))
        return static_cast<unsigned long long>(rounded);
    return static_cast<unsigned long long>(std::ceil(raw));
}

inline ResourceReport resource_estimate(const ResourceInputs& in) {
    ResourceReport r;
    r.phase_space_dim_D = 2ULL * in.dims_per_particle_d * in.particles_M;
    r.qubits_n = in.ell_bits * r.phase_space_dim_D;
    r.quantum_cost = 2ULL * in.sparsity_s * in.ell_bits * in.particles_M *
                     in.dims_per_particle_d * in.dims_per_particle_d * in.levels_L * in.levels_L;
    r.mc_samples_K = mc_sample_count(in.epsilon);
    r.classical_cost = r.mc_samples_K * in.interaction_sparsity_r * r.phase_space_dim_D *
                       in.time_steps_T;
    return r;
}

/// T = ||K t||_max / hbar, the step-count surrogate used in the cost formulas.
inline double norm_time_steps(const KvNOperator& op, double t) {
    return op.norm_bound() * std::abs(t) / op.grid().hbar();
}

}  // namespace kvn
