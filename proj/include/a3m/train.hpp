#pragma once

#include "a3m/data.hpp"
#include "a3m/metrics.hpp"
#include "a3m/model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace a3m {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 8;
    double learning_rate = 0.003;
    double lr_drop_factor = 0.1;
    /// Zero-based epoch from which the dropped rate applies.
    std::size_t lr_drop_epoch = 90;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    bool random_flip = false;
    /// Random translation by up to this many pixels (zero fill).
    std::size_t crop_pad = 0;

    /// 60 epochs, batch 32, 1e-3 dropping to 1e-4 for the last 10 epochs.
    static TrainConfig full_scale();
    double learning_rate_at(std::size_t epoch) const;
    void validate() const;
};

struct TrainResult {
    A3MParams params;
    std::vector<double> epoch_loss; // mean combined loss per epoch
};

/// Optional hooks; `initial` replaces the seeded initialization.
struct TrainHooks {
    const A3MParams* initial = nullptr;
    std::function<void(std::size_t epoch, double mean_loss)> on_epoch;
};

/**
 * Mini-batch SGD on the combined loss over `indices` of `samples`.
 * Initialization draws from Rng(seed).fork(1) and batch order from
 * Rng(seed).fork(2), so (seed, config, data) fix the result bitwise.
 * Throws NumericError naming epoch, batch and loss term on a non-finite loss.
 */
TrainResult train(const A3MConfig& config, const std::vector<SyntheticSample>& samples,
                  const std::vector<std::size_t>& indices, const TrainConfig& train_config, const TrainHooks& hooks = {});

A3MParams seeded_init(const A3MConfig& config, std::uint64_t seed);

struct ClassificationResult {
    double accuracy = 0.0;
    std::vector<double> attr_accuracy; // empty for Baseline1
};

ClassificationResult evaluate_classification(const A3MParams& params, const A3MConfig& config,
                                             const std::vector<SyntheticSample>& samples,
                                             const std::vector<std::size_t>& indices);

/// One f^(final) row per index (v_category for Baseline1).
RowMat extract_embeddings(const A3MParams& params, const A3MConfig& config, const std::vector<SyntheticSample>& samples,
                          const std::vector<std::size_t>& indices, bool l2_normalize = false);

/// Expands an [h x w] cell mask to [H x W] pixels: pixel (y, x) takes cell
/// (y*h/H, x*w/W).
RowMat upsample_nearest(const Vec& mask, std::size_t h, std::size_t w, std::size_t H, std::size_t W);

/// (mass inside box / total mass) / (box area / image area). Returns nullopt
/// for an empty box, a box leaving the image, or zero total mass.
std::optional<double> attention_lift(const RowMat& pixel_mask, const Box& box);

/// Whether the centre of the highest cell (lowest index on ties) lies in box.
bool peak_in_box(const Vec& mask, std::size_t h, std::size_t w, std::size_t H, std::size_t W, const Box& box);

struct LocalizationResult {
    std::vector<double> lift;        // per attribute
    std::vector<double> peak_in_box; // per attribute, fraction of samples
    double mean_lift = 0.0;
    double mean_peak_in_box = 0.0;
    std::size_t skipped = 0; // degenerate boxes
};

/// Scores each m^(k) against the ground-truth box of attribute k.
LocalizationResult attention_localization_score(const A3MParams& params, const A3MConfig& config,
                                                const std::vector<SyntheticSample>& samples,
                                                const std::vector<std::size_t>& indices);

struct MetricsReport {
    std::optional<double> accuracy;
    std::vector<double> attr_accuracy;
    std::optional<double> mean_ap;
    std::optional<std::array<double, 4>> cmc;
    std::map<std::size_t, double> recall_at;
    std::optional<double> nmi;
    /// Wall-clock time; reported on the console only, never serialized, so
    /// reruns write identical files.
    double runtime_seconds = 0.0;

    /// "key: value" lines in fixed order, 6 decimals; absent values print "-".
    std::string to_text() const;
};

/// Accuracy plus leave-one-out retrieval metrics (mAP, Recall@1, NMI) on the
/// embeddings of `indices`.
MetricsReport evaluate_report(const A3MParams& params, const A3MConfig& config,
                              const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& indices,
                              bool l2_normalize = false);

/// Re-id protocol: every query ranked against the gallery.
MetricsReport evaluate_reid(const A3MParams& params, const A3MConfig& config,
                            const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& query,
                            const std::vector<std::size_t>& gallery, bool l2_normalize = false);

/// Retrieval protocol on one pool: Recall@k for each k and NMI with one
/// cluster per distinct label.
MetricsReport evaluate_retrieval(const A3MParams& params, const A3MConfig& config,
                                 const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& indices,
                                 const std::vector<std::size_t>& ks, bool l2_normalize = false);

struct AblationRow {
    Variant variant = Variant::A3M;
    std::optional<std::uint64_t> seed; // nullopt on mean rows
    MetricsReport report;
};

struct AblationResult {
    std::vector<AblationRow> rows;  // variant-major, seeds in given order
    std::vector<AblationRow> means; // one per variant
    double mean_accuracy(Variant v) const;
    /// Header "variant,seed,accuracy,mAP,r1,nmi"; per-seed rows then mean rows.
    std::string to_csv() const;
};

AblationResult run_ablation(const std::vector<SyntheticSample>& samples, const std::vector<std::size_t>& train_idx,
                            const std::vector<std::size_t>& test_idx, const A3MConfig& base,
                            const TrainConfig& train_config, const std::vector<std::uint64_t>& seeds,
                            const std::vector<Variant>& variants = all_variants(),
                            const std::function<void(Variant, std::uint64_t, const A3MParams&)>& on_trained = {});

/// A model config whose data-dependent fields come from a manifest.
A3MConfig config_for_manifest(const DatasetManifest& manifest, A3MConfig base);

} // namespace a3m
