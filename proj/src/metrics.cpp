#include "a3m/metrics.hpp"

#include "a3m/errors.hpp"
#include "a3m/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace a3m {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Indices 0..n-1 ordered by (distance, index).
std::vector<std::size_t> rank_by_distance(const Eigen::Ref<const Vec>& dist)
{
    std::vector<std::size_t> order(static_cast<std::size_t>(dist.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&dist](std::size_t a, std::size_t b) { return dist[idx(a)] < dist[idx(b)]; });
    return order;
}

} // namespace

double accuracy(const Labels& predicted, const Labels& truth)
{
    if (predicted.size() != truth.size())
        throw DimensionError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                             std::to_string(truth.size()) + " labels");
    if (truth.empty())
        return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ReidResult reid_map_cmc(EmbeddingsRef query, const Labels& query_ids, EmbeddingsRef gallery, const Labels& gallery_ids,
                        const std::optional<Labels>& query_sample_ids, const std::optional<Labels>& gallery_sample_ids)
{
    if (static_cast<std::size_t>(query.rows()) != query_ids.size() ||
        static_cast<std::size_t>(gallery.rows()) != gallery_ids.size())
        throw DimensionError("reid_map_cmc: embedding rows and id lists disagree");
    if (query.rows() > 0 && gallery.cols() != query.cols())
        throw DimensionError("reid_map_cmc: query and gallery embedding widths differ");
    if (query_sample_ids.has_value() != gallery_sample_ids.has_value())
        throw ConfigError("reid_map_cmc: sample ids must be given for both query and gallery or neither");

    ReidResult result;
    if (query_ids.empty())
        return result;
    const RowMat dist = pairwise_sq_distances(query, gallery);
    for (std::size_t q = 0; q < query_ids.size(); ++q) {
        const auto order = rank_by_distance(dist.row(idx(q)).transpose());
        std::size_t rank = 0, hits = 0, first_hit = 0;
        double precision_sum = 0.0;
        for (std::size_t g : order) {
            if (query_sample_ids && (*query_sample_ids)[q] == (*gallery_sample_ids)[g])
                continue;
            ++rank;
            if (gallery_ids[g] != query_ids[q])
                continue;
            ++hits;
            if (first_hit == 0)
                first_hit = rank;
            precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
        }
        if (hits == 0)
            throw ConfigError("reid_map_cmc: query " + std::to_string(q) + " identity " +
                              std::to_string(query_ids[q]) + " has no match in the gallery");
        result.mean_ap += precision_sum / static_cast<double>(hits);
        for (std::size_t r = 0; r < kCmcRanks.size(); ++r)
            if (first_hit <= kCmcRanks[r])
                result.cmc[r] += 1.0;
    }
    const auto nq = static_cast<double>(query_ids.size());
    result.mean_ap /= nq;
    for (auto& c : result.cmc)
        c /= nq;
    return result;
}

std::vector<double> recall_at_k(EmbeddingsRef embeddings, const Labels& labels, const std::vector<std::size_t>& ks)
{
    const std::size_t n = labels.size();
    if (static_cast<std::size_t>(embeddings.rows()) != n)
        throw DimensionError("recall_at_k: embedding rows and labels disagree");
    std::vector<double> recall(ks.size(), 0.0);
    if (n < 2)
        return recall;
    const RowMat dist = pairwise_sq_distances(embeddings, embeddings);
    for (std::size_t i = 0; i < n; ++i) {
        const auto order = rank_by_distance(dist.row(idx(i)).transpose());
        // Rank (1-based, self excluded) of the first same-label neighbour.
        std::size_t rank = 0, first_hit = 0;
        for (std::size_t j : order) {
            if (j == i)
                continue;
            ++rank;
            if (labels[j] == labels[i]) {
                first_hit = rank;
                break;
            }
        }
        for (std::size_t r = 0; r < ks.size(); ++r)
            if (first_hit != 0 && first_hit <= ks[r])
                recall[r] += 1.0;
    }
    for (auto& r : recall)
        r /= static_cast<double>(n);
    return recall;
}

Labels kmeans(EmbeddingsRef points, std::size_t k, std::uint64_t seed, std::size_t max_iter, double tol)
{
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0 || k > n)
        throw ConfigError("kmeans: need 1 <= k <= number of points");
    Rng rng(seed);

    // k-means++ seeding.
    RowMat centers(idx(k), points.cols());
    centers.row(0) = points.row(idx(rng.index(n)));
    Vec nearest = Vec::Constant(idx(n), std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i)
            nearest[idx(i)] = std::min(nearest[idx(i)], (points.row(idx(i)) - centers.row(idx(c - 1))).squaredNorm());
        const double total = nearest.sum();
        std::size_t pick = n - 1;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= nearest[idx(i)];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        centers.row(idx(c)) = points.row(idx(pick));
    }

    Labels assign(n, 0);
    Vec assigned_dist(idx(n));
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double dd = (points.row(idx(i)) - centers.row(idx(c))).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            assign[i] = best;
            assigned_dist[idx(i)] = best_d;
        }
        RowMat next = RowMat::Zero(idx(k), points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            next.row(idx(assign[i])) += points.row(idx(i));
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                next.row(idx(c)) /= static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: move it onto the point worst served by its center.
            std::size_t far = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (assigned_dist[idx(i)] > assigned_dist[idx(far)])
                    far = i;
            next.row(idx(c)) = points.row(idx(far));
            assigned_dist[idx(far)] = 0.0;
        }
        const double shift = (next - centers).rowwise().norm().maxCoeff();
        centers = next;
        if (shift <= tol && std::find(counts.begin(), counts.end(), 0) == counts.end())
            break;
    }
    // Final assignment against the last centers.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double dd = (points.row(idx(i)) - centers.row(idx(c))).squaredNorm();
            if (dd < best_d) {
                best_d = dd;
                best = c;
            }
        }
        assign[i] = best;
    }
    return assign;
}

double nmi_score(const Labels& clusters, const Labels& labels)
{
    if (clusters.size() != labels.size())
        throw DimensionError("nmi_score: cluster and label lists differ in length");
    const auto n = static_cast<double>(labels.size());
    if (labels.empty())
        return 0.0;
    std::map<std::size_t, double> pc, pl;
    std::map<std::pair<std::size_t, std::size_t>, double> joint;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        pc[clusters[i]] += 1.0;
        pl[labels[i]] += 1.0;
        joint[{clusters[i], labels[i]}] += 1.0;
    }
    auto entropy = [n](const std::map<std::size_t, double>& counts) {
        double h = 0.0;
        for (const auto& [key, c] : counts)
            h -= (c / n) * std::log(c / n);
        return h;
    };
    // one label per cluster and one cluster per label: same partition
    if (joint.size() == pc.size() && joint.size() == pl.size())
        return 1.0;
    const double hc = entropy(pc), hl = entropy(pl);
    if (hc == 0.0 && hl == 0.0)
        return 1.0;
    if (hc == 0.0 || hl == 0.0)
        return 0.0;
    double mi = 0.0;
    for (const auto& [key, c] : joint) {
        const double pij = c / n;
        mi += pij * std::log(pij / ((pc[key.first] / n) * (pl[key.second] / n)));
    }
    return std::clamp(mi / std::sqrt(hc * hl), 0.0, 1.0);
}

double nmi(EmbeddingsRef embeddings, const Labels& labels, std::size_t n_clusters, std::uint64_t seed)
{
    return nmi_score(kmeans(embeddings, n_clusters, seed), labels);
}

} // namespace a3m
