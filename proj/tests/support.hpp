#pragma once

// Scalar-loop oracles and small helpers shared by the unit tests and the
// acceptance binary. Nothing here calls the library routine it checks.

#include "a3m/data.hpp"
#include "a3m/model.hpp"
#include "a3m/ops.hpp"
#include "a3m/rng.hpp"
#include "a3m/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace a3m::test {

using Grid = std::vector<std::vector<double>>; // [rows][cols]

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = rng.uniform(lo, hi);
    return t;
}

inline Grid to_grid(const Tensor& t)
{
    const std::size_t rows = t.dim(0), cols = t.size() / rows;
    Grid g(rows, std::vector<double>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            g[r][c] = t[r * cols + c];
    return g;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct AttrAttentionOracle {
    Grid masks;                   // [K][L]
    std::vector<double> region;   // [L]
    std::vector<double> f_region; // [d]
};

// m_k[l] = logistic(sum_i V[i][l] A[i][k]), region = max_k, f = V region / L.
inline AttrAttentionOracle attr_attention_oracle(const Grid& V, const Grid& A)
{
    const std::size_t d = V.size(), L = V[0].size(), K = A[0].size();
    AttrAttentionOracle o;
    o.masks.assign(K, std::vector<double>(L, 0.0));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < L; ++l) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                dot += V[i][l] * A[i][k];
            o.masks[k][l] = logistic(dot);
        }
    o.region.assign(L, -1.0);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k)
            o.region[l] = std::max(o.region[l], o.masks[k][l]);
    o.f_region.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t l = 0; l < L; ++l)
            o.f_region[i] += V[i][l] * o.region[l];
        o.f_region[i] /= static_cast<double>(L);
    }
    return o;
}

struct CatAttentionOracle {
    std::vector<double> weights; // [K]
    std::vector<double> f_attr;  // [d]
};

inline CatAttentionOracle cat_attention_oracle(const Grid& A, const std::vector<double>& v)
{
    const std::size_t d = A.size(), K = A[0].size();
    CatAttentionOracle o;
    for (std::size_t k = 0; k < K; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            dot += A[i][k] * v[i];
        o.weights.push_back(logistic(dot));
    }
    o.f_attr.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < K; ++k)
            o.f_attr[i] += A[i][k] * o.weights[k];
        o.f_attr[i] /= static_cast<double>(K);
    }
    return o;
}

// --- metric oracles (brute force) -------------------------------------------

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Gallery indices sorted by (distance, index) with a selection sort.
inline std::vector<std::size_t> brute_rank(const std::vector<double>& q, const Grid& gallery,
                                           const std::vector<bool>& skip)
{
    std::vector<std::size_t> order;
    std::vector<bool> used(gallery.size(), false);
    for (std::size_t n = 0; n < gallery.size(); ++n) {
        std::size_t best = gallery.size();
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (used[g] || skip[g])
                continue;
            if (best == gallery.size() || sq_dist(q, gallery[g]) < sq_dist(q, gallery[best]))
                best = g;
        }
        if (best == gallery.size())
            break;
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

struct ReidOracle {
    double mean_ap = 0.0;
    std::vector<double> cmc; // at 1, 5, 10, 20
};

// AP = (1/R) sum over relevant ranks r_j of j / r_j.
inline ReidOracle reid_oracle(const Grid& query, const std::vector<std::size_t>& qids, const Grid& gallery,
                              const std::vector<std::size_t>& gids, const std::vector<std::size_t>* qsid = nullptr,
                              const std::vector<std::size_t>* gsid = nullptr)
{
    const std::vector<std::size_t> ranks{1, 5, 10, 20};
    ReidOracle o;
    o.cmc.assign(ranks.size(), 0.0);
    for (std::size_t q = 0; q < query.size(); ++q) {
        std::vector<bool> skip(gallery.size(), false);
        if (qsid)
            for (std::size_t g = 0; g < gallery.size(); ++g)
                skip[g] = (*qsid)[q] == (*gsid)[g];
        const auto order = brute_rank(query[q], gallery, skip);
        std::vector<std::size_t> hit_ranks;
        for (std::size_t r = 0; r < order.size(); ++r)
            if (gids[order[r]] == qids[q])
                hit_ranks.push_back(r + 1);
        double ap = 0.0;
        for (std::size_t j = 0; j < hit_ranks.size(); ++j)
            ap += static_cast<double>(j + 1) / static_cast<double>(hit_ranks[j]);
        o.mean_ap += ap / static_cast<double>(hit_ranks.size());
        for (std::size_t r = 0; r < ranks.size(); ++r)
            o.cmc[r] += hit_ranks.front() <= ranks[r] ? 1.0 : 0.0;
    }
    o.mean_ap /= static_cast<double>(query.size());
    for (auto& c : o.cmc)
        c /= static_cast<double>(query.size());
    return o;
}

inline double recall_oracle(const Grid& x, const std::vector<std::size_t>& labels, std::size_t k)
{
    double hits = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<bool> skip(x.size(), false);
        skip[i] = true;
        const auto order = brute_rank(x[i], x, skip);
        bool found = false;
        for (std::size_t r = 0; r < std::min(k, order.size()); ++r)
            found = found || labels[order[r]] == labels[i];
        hits += found ? 1.0 : 0.0;
    }
    return hits / static_cast<double>(x.size());
}

// Direct formula from the contingency table, natural logs. Counts stay
// integral so a single cluster has exactly zero entropy.
inline double nmi_oracle(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    const double n = static_cast<double>(a.size());
    std::map<std::size_t, std::size_t> ca, cb;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> cab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++ca[a[i]];
        ++cb[b[i]];
        ++cab[{a[i], b[i]}];
    }
    if (ca.size() == 1 && cb.size() == 1)
        return 1.0;
    if (ca.size() == 1 || cb.size() == 1)
        return 0.0;
    double ha = 0.0, hb = 0.0, mi = 0.0;
    for (auto [k, c] : ca)
        ha -= (static_cast<double>(c) / n) * std::log(static_cast<double>(c) / n);
    for (auto [k, c] : cb)
        hb -= (static_cast<double>(c) / n) * std::log(static_cast<double>(c) / n);
    for (auto [kv, c] : cab) {
        const double p = static_cast<double>(c) / n;
        const double qa = static_cast<double>(ca[kv.first]) / n, qb = static_cast<double>(cb[kv.second]) / n;
        mi += p * std::log(p / (qa * qb));
    }
    return mi / std::sqrt(ha * hb);
}

// --- smoothness margin for finite-difference checks -------------------------

// Smallest distance of any ReLU input, and of any runner-up attention mask
// entry, from the point where the loss stops being differentiable. A central
// difference with step h is only meaningful when this margin is well above
// the change h can cause.
inline double kink_margin(const Tensor& image, const A3MParams& params, const A3MConfig& config)
{
    double margin = std::numeric_limits<double>::infinity();
    Tensor x = image;
    for (std::size_t i = 0; i < config.backbone.size(); ++i) {
        const auto& layer = config.backbone[i];
        Tensor pre = conv2d(x, params.backbone[i].weight, params.backbone[i].bias, layer.stride, layer.padding);
        for (std::size_t j = 0; j < pre.size(); ++j)
            margin = std::min(margin, std::abs(pre[j]));
        x = relu(pre);
    }
    if (config.variant == Variant::Baseline1)
        return margin;
    const AttentionState st = forward_full(image, params, config);
    const std::size_t L = st.masks.front().size();
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> col;
        for (const auto& m : st.masks)
            col.push_back(m[l]);
        std::sort(col.rbegin(), col.rend());
        if (col.size() > 1)
            margin = std::min(margin, col[0] - col[1]);
    }
    return margin;
}

// Raw bytes of a tensor's values, for bitwise comparison.
inline std::string tensor_bytes(const Tensor& t)
{
    std::string out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t[i];
        out.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    return out;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace a3m::test
