#pragma once

#include "a3m/types.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace a3m {

using EmbeddingsRef = Eigen::Ref<const RowMat>;
using Labels = std::vector<std::size_t>;

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
std::size_t argmax(const Eigen::MatrixBase<Derived>& v)
{
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(static_cast<Eigen::Index>(best)))
            best = static_cast<std::size_t>(i);
    return best;
}

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
template <typename DerivedA, typename DerivedB>
MatrixRowX<typename DerivedA::Scalar> pairwise_sq_distances(const Eigen::MatrixBase<DerivedA>& a,
                                                            const Eigen::MatrixBase<DerivedB>& b)
{
    MatrixRowX<typename DerivedA::Scalar> out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j)
            out(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    return out;
}

double accuracy(const Labels& predicted, const Labels& truth);

inline constexpr std::array<std::size_t, 4> kCmcRanks{1, 5, 10, 20};

struct ReidResult {
    double mean_ap = 0.0;
    std::array<double, 4> cmc{}; // at kCmcRanks
};

/**
 * Re-identification mAP and CMC. Gallery items are ranked by Euclidean
 * distance (ties by gallery index); AP averages precision at each relevant
 * hit. When sample ids are given, a gallery item with the query's id is
 * skipped. Throws ConfigError if some query identity never appears among
 * its candidate gallery items.
 */
ReidResult reid_map_cmc(EmbeddingsRef query, const Labels& query_ids, EmbeddingsRef gallery, const Labels& gallery_ids,
                        const std::optional<Labels>& query_sample_ids = std::nullopt,
                        const std::optional<Labels>& gallery_sample_ids = std::nullopt);

/// Fraction of samples with a same-label item among their k nearest others
/// (self excluded, ties by index), for each k in `ks`.
std::vector<double> recall_at_k(EmbeddingsRef embeddings, const Labels& labels, const std::vector<std::size_t>& ks);

/**
 * Lloyd's k-means with seeded k-means++ initialization. Stops after
 * `max_iter` iterations or when no center moves more than `tol`. A cluster
 * that ends an iteration empty is re-seeded on the point farthest from its
 * current center.
 */
Labels kmeans(EmbeddingsRef points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100,
              double tol = 1e-9);

/// I(C; L) / sqrt(H(C) H(L)) with natural logs. Two single-block partitions
/// score 1; one single-block partition against a finer one scores 0.
double nmi_score(const Labels& clusters, const Labels& labels);

/// Clusters with k-means into `n_clusters` groups and scores against labels.
double nmi(EmbeddingsRef embeddings, const Labels& labels, std::size_t n_clusters, std::uint64_t seed = 0);

} // namespace a3m
