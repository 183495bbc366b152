#pragma once

// Lanczos coefficients from an explicit Hamiltonian: the commutator
// superoperator in the matrix-unit basis, and its tridiagonalization.

#include "kryloscope/error.hpp"
#include "kryloscope/profile.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace kryloscope {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

class OperatorSpaceProblem {
public:
    OperatorSpaceProblem(CMatrix hamiltonian, CMatrix seed, double normalization = 0.0)
        : h_(std::move(hamiltonian)), seed_(std::move(seed)), norm_(normalization)
    {
        if (h_.rows() == 0 || h_.rows() != h_.cols()) throw validation_error("hamiltonian must be square and non-empty");
        if (seed_.rows() != h_.rows() || seed_.cols() != h_.cols()) {
            throw validation_error("seed operator must match the hamiltonian dimension");
        }
        if (!h_.allFinite() || !seed_.allFinite()) throw validation_error("matrices must be finite");
        const double dev = (h_ - h_.adjoint()).cwiseAbs().maxCoeff();
        if (dev > 1e-12) throw validation_error("hamiltonian is not Hermitian (deviation " + std::to_string(dev) + ")");
        if (norm_ == 0.0) norm_ = static_cast<double>(h_.rows());
        if (!(norm_ > 0)) throw validation_error("normalization must be positive");
        if (seed_.squaredNorm() == 0.0) throw validation_error("seed operator has zero Hilbert-Schmidt norm");
    }

    [[nodiscard]] const CMatrix& hamiltonian() const noexcept { return h_; }
    [[nodiscard]] const CMatrix& seed() const noexcept { return seed_; }
    [[nodiscard]] double normalization() const noexcept { return norm_; }
    [[nodiscard]] Eigen::Index dimension() const noexcept { return h_.rows(); }

    /// Components of an operator in the orthonormal basis sqrt(N)|i><j|, row-major.
    [[nodiscard]] CVector vectorize(const CMatrix& op) const
    {
        const Eigen::Index d = dimension();
        CVector v(d * d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) v(i * d + j) = op(i, j) / std::sqrt(norm_);
        }
        return v;
    }

    /// Seed vector normalized under Tr(A^dag B)/N.
    [[nodiscard]] CVector normalized_seed() const
    {
        const CVector v = vectorize(seed_);
        return v / v.norm();
    }

private:
    CMatrix h_;
    CMatrix seed_;
    double norm_;
};

/// Matrix of A -> [H, A]: H (x) 1 - 1 (x) H^T in the row-major basis.
inline CMatrix build_liouvillian(const OperatorSpaceProblem& problem)
{
    const CMatrix& h = problem.hamiltonian();
    const Eigen::Index d = h.rows();
    CMatrix L = CMatrix::Zero(d * d, d * d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const Eigen::Index row = i * d + j;
            for (Eigen::Index k = 0; k < d; ++k) {
                L(row, k * d + j) += h(i, k);
                L(row, i * d + k) -= h(k, j);
            }
        }
    }
    return L;
}

enum class Reorthogonalization { full, selective, none };

inline Reorthogonalization parse_reorthogonalization(const std::string& s)
{
    if (s == "full") return Reorthogonalization::full;
    if (s == "selective") return Reorthogonalization::selective;
    if (s == "none") return Reorthogonalization::none;
    throw validation_error("unknown reorthogonalization policy '" + s + "'");
}

struct LanczosResult {
    LanczosProfile profile = LanczosProfile::tabulated({});
    std::vector<double> b; // b_1..b_m
    std::vector<double> a; // a_0..a_m
    std::vector<CVector> basis;
    bool exhausted = false; // Krylov space exhausted before n_max
    double orthogonality_error = 0; // max |Q^dag Q - 1|
    bool orthogonality_warning = false;
    std::string flag;
};

/// Lanczos recursion on a Hermitian matrix from a normalized seed.
inline LanczosResult lanczos_tridiagonalize(const CMatrix& L, const CVector& seed, std::size_t n_max,
                                            Reorthogonalization policy = Reorthogonalization::full)
{
    if (L.rows() != L.cols()) throw validation_error("liouvillian must be square");
    if (seed.size() != L.rows()) throw validation_error("seed dimension mismatch");
    if (static_cast<Eigen::Index>(n_max) > L.rows()) throw validation_error("n_max exceeds the matrix dimension");
    const double sn = seed.norm();
    if (sn == 0.0) throw validation_error("seed vector is zero");
    if (std::abs(sn - 1.0) > 1e-10) throw validation_error("seed vector must be normalized");

    LanczosResult res;
    std::vector<CVector>& q = res.basis;
    q.push_back(seed);
    double b_max = 0.0;
    auto project_all = [&q](CVector& w) {
        for (int pass = 0; pass < 2; ++pass) {
            for (const CVector& v : q) w -= v * v.dot(w);
        }
    };
    while (res.b.size() < n_max) {
        const std::size_t n = q.size() - 1;
        CVector w = L * q[n];
        const double scale = std::max(b_max, w.norm());
        const double a = q[n].dot(w).real();
        res.a.push_back(a);
        w -= a * q[n];
        if (n > 0) w -= res.b[n - 1] * q[n - 1];
        switch (policy) {
        case Reorthogonalization::full: project_all(w); break;
        case Reorthogonalization::selective: {
            double worst = 0.0;
            const double wn = w.norm();
            for (const CVector& v : q) worst = std::max(worst, std::abs(v.dot(w)));
            if (wn > 0 && worst > 1e-8 * wn) project_all(w);
            break;
        }
        case Reorthogonalization::none: break;
        }
        const double b = w.norm();
        if (b < 1e-12 * scale || b == 0.0) {
            res.exhausted = true;
            break;
        }
        res.b.push_back(b);
        b_max = std::max(b_max, b);
        q.push_back(w / b);
    }
    if (!res.exhausted && q.size() > res.a.size()) {
        res.a.push_back(q.back().dot(L * q.back()).real());
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const std::complex<double> g = q[i].dot(q[j]);
            const double dev = std::abs(g - (i == j ? 1.0 : 0.0));
            res.orthogonality_error = std::max(res.orthogonality_error, dev);
        }
    }
    if (res.orthogonality_error > 1e-6) {
        res.orthogonality_warning = true;
        res.flag = "Krylov basis lost orthogonality (" + std::to_string(res.orthogonality_error) + ")";
    }
    res.profile = LanczosProfile::tabulated(res.b, res.a);
    return res;
}

/// Convenience: Liouvillian + seed from a problem.
inline LanczosResult lanczos_tridiagonalize(const OperatorSpaceProblem& problem, std::size_t n_max,
                                            Reorthogonalization policy = Reorthogonalization::full)
{
    const CMatrix L = build_liouvillian(problem);
    return lanczos_tridiagonalize(L, problem.normalized_seed(), std::min<std::size_t>(n_max, L.rows()), policy);
}

/// Tridiagonal matrix of a tabulated chain with the given number of sites.
inline CMatrix tridiagonal_matrix(const LanczosProfile& profile, std::size_t sites)
{
    CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(sites), static_cast<Eigen::Index>(sites));
    for (std::size_t n = 0; n < sites; ++n) {
        const auto i = static_cast<Eigen::Index>(n);
        m(i, i) = profile.onsite(static_cast<long>(n));
        if (n + 1 < sites) {
            const double b = profile.hopping(static_cast<long>(n + 1));
            m(i, i + 1) = b;
            m(i + 1, i) = b;
        }
    }
    return m;
}

} // namespace kryloscope
