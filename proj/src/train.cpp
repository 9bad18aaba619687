#include "a3m/train.hpp"

#include "a3m/errors.hpp"
#include "a3m/ops.hpp"
#include "a3m/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace a3m {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

Tensor augment(const Tensor& image, const TrainConfig& tc, Rng& rng)
{
    if (!tc.random_flip && tc.crop_pad == 0)
        return image;
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    const bool flip = tc.random_flip && rng.uniform() < 0.5;
    long dx = 0, dy = 0;
    if (tc.crop_pad > 0) {
        const auto span = 2 * tc.crop_pad + 1;
        dx = static_cast<long>(rng.index(span)) - static_cast<long>(tc.crop_pad);
        dy = static_cast<long>(rng.index(span)) - static_cast<long>(tc.crop_pad);
    }
    Tensor out = Tensor::zeros(image.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const long sy = static_cast<long>(y) + dy;
                long sx = static_cast<long>(x) + dx;
                if (sy < 0 || sy >= static_cast<long>(H) || sx < 0 || sx >= static_cast<long>(W))
                    continue;
                if (flip)
                    sx = static_cast<long>(W) - 1 - sx;
                out[(c * H + y) * W + x] = image[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)];
            }
    return out;
}

void check_finite(const Tensor& term, const char* name, std::size_t epoch, std::size_t batch, std::size_t sample)
{
    if (term.defined() && !std::isfinite(term.item()))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                           ", sample " + std::to_string(sample) + ": term " + name + " = " +
                           std::to_string(term.item()));
}

} // namespace

TrainConfig TrainConfig::full_scale()
{
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 32;
    tc.learning_rate = 1e-3;
    tc.lr_drop_factor = 0.1;
    tc.lr_drop_epoch = 50;
    return tc;
}

double TrainConfig::learning_rate_at(std::size_t epoch) const
{
    return epoch >= lr_drop_epoch ? learning_rate * lr_drop_factor : learning_rate;
}

void TrainConfig::validate() const
{
    if (batch_size == 0)
        throw ConfigError("train.batch_size: must be >= 1");
    if (!(learning_rate >= 0.0))
        throw ConfigError("train.lr: must be non-negative");
    if (!(lr_drop_factor >= 0.0))
        throw ConfigError("train.lr_drop_factor: must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("train.momentum: must lie in [0, 1)");
    if (!(weight_decay >= 0.0))
        throw ConfigError("train.weight_decay: must be non-negative");
}

A3MParams seeded_init(const A3MConfig& config, std::uint64_t seed)
{
    Rng rng = Rng(seed).fork(1);
    return init_params(config, rng);
}

TrainResult train(const A3MConfig& config, const std::vector<SyntheticSample>& samples,
                  const std::vector<std::size_t>& indices, const TrainConfig& tc, const TrainHooks& hooks)
{
    config.validate();
    tc.validate();
    if (indices.empty())
        throw ConfigError("train: empty training set");
    for (auto i : indices) {
        const auto& s = samples.at(i);
        if (s.category >= config.num_categories)
            throw IndexError("train: sample " + std::to_string(i) + " category " + std::to_string(s.category) +
                             " >= " + std::to_string(config.num_categories));
        if (config.uses_attributes() && s.attr_labels.size() != config.num_attributes())
            throw DimensionError("train: sample " + std::to_string(i) + " has " +
                                 std::to_string(s.attr_labels.size()) + " attribute labels, model expects " +
                                 std::to_string(config.num_attributes()));
    }

    TrainResult result;
    result.params = hooks.initial ? hooks.initial->clone() : seeded_init(config, tc.seed);
    std::vector<Tensor> tensors = result.params.tensors();
    for (auto& t : tensors)
        t.set_requires_grad(true);
    SgdState optimizer(tensors, SgdOptions{tc.learning_rate, tc.momentum, tc.weight_decay});

    Rng order_rng = Rng(tc.seed).fork(2);
    Rng aug_rng = Rng(tc.seed).fork(3);
    std::vector<std::size_t> order = indices;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        optimizer.set_learning_rate(tc.learning_rate_at(epoch));
        order_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batch = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), start + tc.batch_size);
            Tape tape;
            Tensor acc;
            for (std::size_t b = start; b < end; ++b) {
                const auto& s = samples[order[b]];
                AttentionState state = forward_full(augment(s.image, tc, aug_rng), result.params, config);
                LossTerms terms = combined_loss_terms(state, s.category, s.attr_labels, config);
                check_finite(terms.additive, "additive", epoch, batch, order[b]);
                check_finite(terms.category, "category", epoch, batch, order[b]);
                check_finite(terms.attr_mean, "attribute", epoch, batch, order[b]);
                check_finite(terms.total, "total", epoch, batch, order[b]);
                acc = acc.defined() ? add(acc, terms.total) : terms.total;
            }
            loss_sum += acc.item();
            Tensor loss = scale(acc, 1.0 / static_cast<double>(end - start));
            tape.backward(loss);
            optimizer.step();
            optimizer.zero_grad();
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
        if (hooks.on_epoch)
            hooks.on_epoch(epoch, result.epoch_loss.back());
    }
    for (auto& t : tensors)
        t.set_requires_grad(false);
    return result;
}

ClassificationResult evaluate_classification(const A3MParams& params, const A3MConfig& config,
                                             const std::vector<SyntheticSample>& samples,
                                             const std::vector<std::size_t>& indices)
{
    ClassificationResult r;
    const std::size_t K = config.uses_attributes() ? config.num_attributes() : 0;
    Labels pred, truth;
    std::vector<Labels> attr_pred(K), attr_truth(K);
    for (auto i : indices) {
        const auto& s = samples.at(i);
        AttentionState st = forward_full(s.image, params, config);
        pred.push_back(argmax(st.logits_final.data()));
        truth.push_back(s.category);
        for (std::size_t k = 0; k < K; ++k) {
            attr_pred[k].push_back(argmax(st.logits_attr[k].data()));
            attr_truth[k].push_back(s.attr_labels.at(k));
        }
    }
    r.accuracy = accuracy(pred, truth);
    for (std::size_t k = 0; k < K; ++k)
        r.attr_accuracy.push_back(accuracy(attr_pred[k], attr_truth[k]));
    return r;
}

RowMat extract_embeddings(const A3MParams& params, const A3MConfig& config, const std::vector<SyntheticSample>& samples,
                          const std::vector<std::size_t>& indices, bool l2_normalize)
{
    RowMat E(idx(indices.size()), idx(config.d));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        AttentionState st = forward_full(samples.at(indices[r]).image, params, config);
        E.row(idx(r)) = st.f_final.data().transpose();
        if (l2_normalize) {
            const double norm = E.row(idx(r)).norm();
            if (norm > 0.0)
                E.row(idx(r)) /= norm;
        }
    }
    return E;
}

RowMat upsample_nearest(const Vec& mask, std::size_t h, std::size_t w, std::size_t H, std::size_t W)
{
    if (static_cast<std::size_t>(mask.size()) != h * w)
        throw DimensionError("upsample_nearest: mask of " + std::to_string(mask.size()) + " cells is not " +
                             std::to_string(h) + "x" + std::to_string(w));
    RowMat out(idx(H), idx(W));
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            out(idx(y), idx(x)) = mask[idx((y * h / H) * w + x * w / W)];
    return out;
}

std::optional<double> attention_lift(const RowMat& pixel_mask, const Box& box)
{
    const auto H = static_cast<std::size_t>(pixel_mask.rows()), W = static_cast<std::size_t>(pixel_mask.cols());
    if (box.area() == 0 || box.x + box.w > W || box.y + box.h > H)
        return std::nullopt;
    const double total = pixel_mask.sum();
    if (!(total > 0.0))
        return std::nullopt;
    const double inside = pixel_mask.block(idx(box.y), idx(box.x), idx(box.h), idx(box.w)).sum();
    const double area_fraction = static_cast<double>(box.area()) / static_cast<double>(H * W);
    return (inside / total) / area_fraction;
}

bool peak_in_box(const Vec& mask, std::size_t h, std::size_t w, std::size_t H, std::size_t W, const Box& box)
{
    const std::size_t cell = argmax(mask);
    const double cy = (static_cast<double>(cell / w) + 0.5) * static_cast<double>(H) / static_cast<double>(h);
    const double cx = (static_cast<double>(cell % w) + 0.5) * static_cast<double>(W) / static_cast<double>(w);
    return box.contains(cx, cy);
}

LocalizationResult attention_localization_score(const A3MParams& params, const A3MConfig& config,
                                                const std::vector<SyntheticSample>& samples,
                                                const std::vector<std::size_t>& indices)
{
    if (!config.uses_attributes())
        throw ConfigError("attention localization needs a variant with attribute branches");
    const std::size_t K = config.num_attributes();
    const auto [h, w] = config.feature_size();
    LocalizationResult r;
    std::vector<double> lift_sum(K, 0.0), peak_sum(K, 0.0);
    std::vector<std::size_t> counted(K, 0);
    for (auto i : indices) {
        const auto& s = samples.at(i);
        AttentionState st = forward_full(s.image, params, config);
        for (std::size_t k = 0; k < K; ++k) {
            const Box box = k < s.attr_boxes.size() ? s.attr_boxes[k] : Box{};
            const Vec& mask = st.masks[k].data();
            auto lift = attention_lift(upsample_nearest(mask, h, w, config.height, config.width), box);
            if (!lift) {
                ++r.skipped;
                continue;
            }
            lift_sum[k] += *lift;
            peak_sum[k] += peak_in_box(mask, h, w, config.height, config.width, box) ? 1.0 : 0.0;
            ++counted[k];
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        const double n = static_cast<double>(std::max<std::size_t>(counted[k], 1));
        r.lift.push_back(lift_sum[k] / n);
        r.peak_in_box.push_back(peak_sum[k] / n);
    }
    for (std::size_t k = 0; k < K; ++k) {
        r.mean_lift += r.lift[k] / static_cast<double>(K);
        r.mean_peak_in_box += r.peak_in_box[k] / static_cast<double>(K);
    }
    return r;
}

std::string MetricsReport::to_text() const
{
    std::ostringstream os;
    auto opt = [](const std::optional<double>& v) { return v ? fixed6(*v) : std::string("-"); };
    os << "accuracy: " << opt(accuracy) << '\n';
    os << "attr_accuracy: ";
    if (attr_accuracy.empty())
        os << '-';
    for (std::size_t k = 0; k < attr_accuracy.size(); ++k)
        os << (k ? "," : "") << fixed6(attr_accuracy[k]);
    os << '\n';
    os << "mAP: " << opt(mean_ap) << '\n';
    for (std::size_t r = 0; r < kCmcRanks.size(); ++r)
        os << "rank-" << kCmcRanks[r] << ": " << (cmc ? fixed6((*cmc)[r]) : std::string("-")) << '\n';
    for (const auto& [k, v] : recall_at)
        os << "R@" << k << ": " << fixed6(v) << '\n';
    os << "nmi: " << opt(nmi) << '\n';
    return os.str();
}

MetricsReport evaluate_report(const A3MParams& params, const A3MConfig& config,
                              const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& indices,
                              bool l2_normalize)
{
    MetricsReport rep;
    const ClassificationResult cls = evaluate_classification(params, config, samples, indices);
    rep.accuracy = cls.accuracy;
    rep.attr_accuracy = cls.attr_accuracy;

    Labels labels;
    for (auto i : indices)
        labels.push_back(samples.at(i).category);
    std::map<std::size_t, std::size_t> counts;
    for (auto l : labels)
        ++counts[l];
    const RowMat E = extract_embeddings(params, config, samples, indices, l2_normalize);
    const bool every_label_repeats =
        std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; });
    if (every_label_repeats && !labels.empty()) {
        Labels ids(indices.begin(), indices.end());
        ReidResult rr = reid_map_cmc(E, labels, E, labels, ids, ids);
        rep.mean_ap = rr.mean_ap;
    }
    if (labels.size() >= 2) {
        rep.recall_at[1] = recall_at_k(E, labels, {1}).front();
        rep.nmi = nmi(E, labels, counts.size());
    }
    return rep;
}

MetricsReport evaluate_reid(const A3MParams& params, const A3MConfig& config,
                            const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& query,
                            const std::vector<std::size_t>& gallery, bool l2_normalize)
{
    if (query.empty() || gallery.empty())
        throw ConfigError("re-id evaluation needs query and gallery samples");
    Labels qids, gids;
    for (auto i : query)
        qids.push_back(samples.at(i).category);
    for (auto i : gallery)
        gids.push_back(samples.at(i).category);
    const RowMat Q = extract_embeddings(params, config, samples, query, l2_normalize);
    const RowMat G = extract_embeddings(params, config, samples, gallery, l2_normalize);
    const ReidResult rr = reid_map_cmc(Q, qids, G, gids);
    MetricsReport rep;
    rep.mean_ap = rr.mean_ap;
    rep.cmc = rr.cmc;
    return rep;
}

MetricsReport evaluate_retrieval(const A3MParams& params, const A3MConfig& config,
                                 const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& indices,
                                 const std::vector<std::size_t>& ks, bool l2_normalize)
{
    if (indices.size() < 2)
        throw ConfigError("retrieval evaluation needs at least 2 samples");
    Labels labels;
    for (auto i : indices)
        labels.push_back(samples.at(i).category);
    const std::set<std::size_t> distinct(labels.begin(), labels.end());
    const RowMat E = extract_embeddings(params, config, samples, indices, l2_normalize);
    MetricsReport rep;
    const auto r = recall_at_k(E, labels, ks);
    for (std::size_t j = 0; j < ks.size(); ++j)
        rep.recall_at[ks[j]] = r[j];
    rep.nmi = nmi(E, labels, distinct.size());
    return rep;
}

double AblationResult::mean_accuracy(Variant v) const
{
    for (const auto& m : means)
        if (m.variant == v)
            return m.report.accuracy.value_or(0.0);
    throw ConfigError("ablation has no variant " + std::string(variant_name(v)));
}

std::string AblationResult::to_csv() const
{
    std::ostringstream os;
    os << "variant,seed,accuracy,mAP,r1,nmi\n";
    auto cell = [](const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); };
    auto emit = [&](const AblationRow& row) {
        const auto r1 = row.report.recall_at.find(1);
        os << variant_name(row.variant) << ',' << (row.seed ? std::to_string(*row.seed) : std::string("mean")) << ','
           << cell(row.report.accuracy) << ',' << cell(row.report.mean_ap) << ','
           << (r1 != row.report.recall_at.end() ? fixed6(r1->second) : std::string()) << ','
           << cell(row.report.nmi) << '\n';
    };
    for (const auto& row : rows)
        emit(row);
    for (const auto& row : means)
        emit(row);
    return os.str();
}

AblationResult run_ablation(const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& train_idx,
                            const std::vector<std::size_t>& test_idx, const A3MConfig& base,
                            const TrainConfig& train_config, const std::vector<std::uint64_t>& seeds,
                            const std::vector<Variant>& variants,
                            const std::function<void(Variant, std::uint64_t, const A3MParams&)>& on_trained)
{
    if (seeds.empty())
        throw ConfigError("ablation needs at least one seed");
    AblationResult result;
    for (Variant v : variants) {
        A3MConfig config = base;
        config.variant = v;
        std::vector<MetricsReport> reports;
        for (auto seed : seeds) {
            TrainConfig tc = train_config;
            tc.seed = seed;
            TrainResult tr = train(config, samples, train_idx, tc);
            if (on_trained)
                on_trained(v, seed, tr.params);
            reports.push_back(evaluate_report(tr.params, config, samples, test_idx));
            result.rows.push_back(AblationRow{v, seed, reports.back()});
        }
        MetricsReport mean;
        auto average = [&reports](auto getter) -> std::optional<double> {
            double acc = 0.0;
            for (const auto& r : reports) {
                auto v = getter(r);
                if (!v)
                    return std::nullopt;
                acc += *v;
            }
            return acc / static_cast<double>(reports.size());
        };
        mean.accuracy = average([](const MetricsReport& r) { return r.accuracy; });
        mean.mean_ap = average([](const MetricsReport& r) { return r.mean_ap; });
        mean.nmi = average([](const MetricsReport& r) { return r.nmi; });
        auto r1 = average([](const MetricsReport& r) -> std::optional<double> {
            auto it = r.recall_at.find(1);
            return it == r.recall_at.end() ? std::nullopt : std::optional<double>(it->second);
        });
        if (r1)
            mean.recall_at[1] = *r1;
        result.means.push_back(AblationRow{v, std::nullopt, mean});
    }
    return result;
}

A3MConfig config_for_manifest(const DatasetManifest& manifest, A3MConfig base)
{
    base.channels = manifest.channels;
    base.height = manifest.height;
    base.width = manifest.width;
    base.num_categories = manifest.num_categories;
    base.attr_cardinalities = manifest.cardinalities;
    return base;
}

} // namespace a3m
