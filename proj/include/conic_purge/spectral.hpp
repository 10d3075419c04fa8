#pragma once

// Proximity graph of a point set: distances, heat-kernel weights, the graph
// Laplacian L = D - W and the generalized eigenproblem L f = lambda D f.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace conic_purge {

using DistanceMatrix = Eigen::MatrixXd;

struct LaplacianPair {
    Eigen::MatrixXd L;
    Eigen::VectorXd D;  // diagonal of the degree matrix

    Eigen::Index size() const { return D.size(); }
};

/// Ascending eigenvalues; column i of `eigenvectors` pairs with eigenvalue i.
/// Each eigenvector has unit max-norm and a positive largest-magnitude entry.
struct Spectrum {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;

    Eigen::Index size() const { return eigenvalues.size(); }
};

template <int Dim>
DistanceMatrix pairwise_distances(const PointSet<Dim>& points) {
    const auto k = static_cast<Eigen::Index>(points.size());
    if (k < 2) throw Error(ErrorCode::TooFewPoints, "need at least 2 points for a distance matrix");
    DistanceMatrix q = DistanceMatrix::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (!points[i].allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite coordinate");
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const double d = (points[i] - points[j]).norm();
            q(i, j) = d;
            q(j, i) = d;
        }
    }
    return q;
}

/// Squared value of the (p*K)-th smallest of all K^2 entries of Q (1-indexed,
/// clamped to K^2). Diagonal zeros and both symmetric copies are counted.
inline double select_bandwidth(const DistanceMatrix& q, int p) {
    if (p < 1) throw Error(ErrorCode::InvalidArgument, "bandwidth rank p must be >= 1");
    const auto k = q.rows();
    std::vector<double> sorted(q.data(), q.data() + q.size());
    const auto total = static_cast<Eigen::Index>(sorted.size());
    const Eigen::Index rank = std::min<Eigen::Index>(static_cast<Eigen::Index>(p) * k, total);
    auto nth = sorted.begin() + (rank - 1);
    std::nth_element(sorted.begin(), nth, sorted.end());
    const double root_t = *nth;
    if (!(root_t > 0.0)) {
        std::ostringstream msg;
        msg << "entry " << rank << " of " << total << " sorted distances is zero; too many coincident points";
        throw Error(ErrorCode::DegenerateBandwidth, msg.str());
    }
    return root_t * root_t;
}

inline Eigen::MatrixXd heat_kernel_weights(const DistanceMatrix& q, double t) {
    if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "heat kernel bandwidth must be positive");
    return (-q.array().square() / t).exp().matrix();
}

inline LaplacianPair graph_laplacian(const Eigen::MatrixXd& w) {
    LaplacianPair lp;
    lp.D = w.rowwise().sum();
    lp.L = -w;
    lp.L.diagonal() += lp.D;
    return lp;
}

struct EigenOptions {
    Eigen::Index max_size = 5000;
    // Couplings with |L_ij| / sqrt(D_i D_j) at or below this are below double
    // resolution of the normalized operator; the graph splits there.
    double split_tolerance = 1e-16;
    double residual_tolerance = 1e-8;
};

/// max over eigenpairs of |L f - lambda D f|_inf
inline double max_residual(const LaplacianPair& lp, const Spectrum& s) {
    const Eigen::MatrixXd r = lp.L * s.eigenvectors -
                              lp.D.asDiagonal() * s.eigenvectors * s.eigenvalues.asDiagonal();
    return r.size() == 0 ? 0.0 : r.cwiseAbs().maxCoeff();
}

namespace detail {

inline std::vector<std::vector<Eigen::Index>> coupled_components(const LaplacianPair& lp, double tol) {
    const Eigen::Index k = lp.size();
    const Eigen::VectorXd inv_sqrt = lp.D.cwiseSqrt().cwiseInverse();
    std::vector<int> seen(static_cast<std::size_t>(k), 0);
    std::vector<std::vector<Eigen::Index>> comps;
    std::vector<Eigen::Index> stack;
    for (Eigen::Index s = 0; s < k; ++s) {
        if (seen[s]) continue;
        comps.emplace_back();
        stack.push_back(s);
        seen[s] = 1;
        while (!stack.empty()) {
            const Eigen::Index i = stack.back();
            stack.pop_back();
            comps.back().push_back(i);
            for (Eigen::Index j = 0; j < k; ++j) {
                if (seen[j] || j == i) continue;
                if (std::abs(lp.L(i, j)) * inv_sqrt[i] * inv_sqrt[j] > tol) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        std::sort(comps.back().begin(), comps.back().end());
    }
    return comps;
}

} // namespace detail

/// Full spectrum of L f = lambda D f through the symmetric reduction
/// D^-1/2 L D^-1/2, solved independently on each numerically decoupled
/// component of the graph.
inline Spectrum generalized_eigs(const LaplacianPair& lp, const EigenOptions& opts = {}) {
    const Eigen::Index k = lp.size();
    if (k == 0 || lp.L.rows() != k || lp.L.cols() != k)
        throw Error(ErrorCode::InvalidArgument, "Laplacian and degree sizes disagree");
    if (k > opts.max_size) throw Error(ErrorCode::InvalidArgument, "problem exceeds the dense eigensolver size cap");
    if (!(lp.D.minCoeff() > 0.0)) throw Error(ErrorCode::InvalidArgument, "degrees must be positive");

    const Eigen::VectorXd inv_sqrt = lp.D.cwiseSqrt().cwiseInverse();

    struct Pair {
        double value;
        Eigen::Index order;
        Eigen::VectorXd vec;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(k));

    for (const auto& comp : detail::coupled_components(lp, opts.split_tolerance)) {
        const auto n = static_cast<Eigen::Index>(comp.size());
        Eigen::MatrixXd block(n, n);
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < n; ++b)
                block(a, b) = lp.L(comp[a], comp[b]) * inv_sqrt[comp[a]] * inv_sqrt[comp[b]];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
        if (eig.info() != Eigen::Success)
            throw Error(ErrorCode::ConvergenceFailure, "symmetric eigensolver did not converge");
        for (Eigen::Index c = 0; c < n; ++c) {
            Eigen::VectorXd f = Eigen::VectorXd::Zero(k);
            for (Eigen::Index a = 0; a < n; ++a) f[comp[a]] = eig.eigenvectors()(a, c) * inv_sqrt[comp[a]];
            pairs.push_back({eig.eigenvalues()[c], static_cast<Eigen::Index>(pairs.size()), std::move(f)});
        }
    }

    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        return x.value < y.value || (x.value == y.value && x.order < y.order);
    });

    Spectrum s;
    s.eigenvalues.resize(k);
    s.eigenvectors.resize(k, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::VectorXd& f = pairs[c].vec;
        Eigen::Index idx = 0;
        f.cwiseAbs().maxCoeff(&idx);
        f /= f[idx];  // max-norm 1, largest-magnitude entry positive
        s.eigenvalues[c] = pairs[c].value;
        s.eigenvectors.col(c) = f;
    }

    const double scale = lp.L.cwiseAbs().rowwise().sum().maxCoeff();
    const double worst = max_residual(lp, s);
    if (worst > opts.residual_tolerance * scale) {
        std::ostringstream msg;
        msg << "max eigenpair residual " << worst << " exceeds " << opts.residual_tolerance << " * |L|_inf";
        throw Error(ErrorCode::ConvergenceFailure, msg.str());
    }
    return s;
}

} // namespace conic_purge
