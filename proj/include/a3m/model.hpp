#pragma once

#include "a3m/rng.hpp"
#include "a3m/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace a3m {

enum class Variant { A3M, Baseline1, Baseline2, Att1, Att2, NoAttrLabel };

std::string_view variant_name(Variant v);
/// Accepts the canonical names ("a3m", "baseline1", ...) case-insensitively,
/// with or without a dash before the digit.
Variant parse_variant(std::string_view name);
/// All variants in ablation-table order.
const std::vector<Variant>& all_variants();

/// Whether the attribute-guided masks feed the output for this variant.
bool has_attribute_attention(Variant v);

struct ConvSpec {
    std::size_t out_channels = 16;
    std::size_t kernel = 3;
    std::size_t stride = 2;
    std::size_t padding = 1;
};

struct A3MConfig {
    std::size_t channels = 3;
    std::size_t height = 16;
    std::size_t width = 16;
    std::vector<ConvSpec> backbone{{16, 3, 2, 1}, {32, 3, 2, 1}};
    std::size_t d = 32;
    std::size_t num_categories = 24;
    std::vector<std::size_t> attr_cardinalities{3, 3, 2, 2};
    double alpha = 0.5;
    double beta = 0.5;
    Variant variant = Variant::A3M;
    /// ReLU after the 1x1 branch convolutions (off: branches are linear).
    bool branch_relu = false;

    std::size_t num_attributes() const { return attr_cardinalities.size(); }
    bool uses_attributes() const { return variant != Variant::Baseline1; }
    std::size_t shared_channels() const;
    /// Spatial extent (h, w) of the shared feature map.
    std::pair<std::size_t, std::size_t> feature_size() const;
    std::size_t num_locations() const;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct ConvParams {
    Tensor weight; // [out x in x k x k]
    Tensor bias;   // [out]
};

struct LinearParams {
    Tensor weight; // [out x in]
    Tensor bias;   // [out]
};

/**
 * All learnable tensors. Declared order (also the checkpoint order):
 * backbone layers, category 1x1 conv, attribute 1x1 convs, category head,
 * attribute heads, final head. Baseline1 has no attribute convs, attribute
 * heads or final head.
 */
struct A3MParams {
    std::vector<ConvParams> backbone;
    ConvParams category_conv;
    std::vector<ConvParams> attr_convs;
    LinearParams category_head;
    std::vector<LinearParams> attr_heads;
    LinearParams final_head;

    std::vector<Tensor> tensors() const;
    std::vector<std::string> names() const;
    std::size_t scalar_count() const;
    A3MParams clone() const;
};

/// Convolution weights ~ U(-s, s), s = sqrt(6 / (fan_in + fan_out)); conv
/// biases zero. Classifier heads start at zero so an untrained model scores
/// every class equally. Draws happen in declared order, so variants built
/// from the same seed share the backbone and category conv.
A3MParams init_params(const A3MConfig& config, Rng& rng);

/// Replaces classifier heads with Glorot-uniform draws (tests and gradient
/// checks need non-degenerate heads).
void randomize_heads(A3MParams& params, Rng& rng);

/// Forces attention weights to ones regardless of variant.
struct AttentionClamp {
    bool region_ones = false;
    bool attr_ones = false;
};

struct CategoryBranch {
    Tensor V;          // [d x L]
    Tensor v_category; // [d]
    Tensor logits;     // [C_category]
};

struct AttributeBranch {
    Tensor embedding; // a^(k), [d]
    Tensor logits;    // [C^(k)]
};

struct AttributeAttention {
    std::vector<Tensor> masks; // m^(k), each [L]
    Tensor region_mask;        // [L]
    Tensor f_region;           // [d]
};

struct CategoryAttention {
    Tensor weights; // s^(attr), [K]
    Tensor f_attr;  // [d]
};

struct AttentionState {
    Tensor V;
    Tensor v_category;
    Tensor A;                  // [d x K]
    std::vector<Tensor> masks; // m^(k)
    Tensor region_mask;        // m^(region)
    Tensor attr_weights;       // s^(attr)
    Tensor f_region;
    Tensor f_attr;
    Tensor f_final;
    Tensor logits_category;
    Tensor logits_final;
    std::vector<Tensor> logits_attr;
};

Tensor forward_shared(const Tensor& image, const A3MParams& params, const A3MConfig& config);
CategoryBranch category_branch(const Tensor& shared, const A3MParams& params, const A3MConfig& config);
/// `k` is zero-based.
AttributeBranch attribute_branch(const Tensor& shared, const A3MParams& params, const A3MConfig& config,
                                 std::size_t k);

/// m^(k) = sigmoid(V^T a^(k)), m^(region) = max_k m^(k),
/// f^(region) = (1/L) V m^(region).
AttributeAttention attribute_guided_attention(const Tensor& V, const Tensor& A);
/// s^(attr) = sigmoid(A^T v), f^(attr) = (1/K) A s^(attr).
CategoryAttention category_guided_attention(const Tensor& A, const Tensor& v_category);

AttentionState forward_full(const Tensor& image, const A3MParams& params, const A3MConfig& config,
                            AttentionClamp clamp = {});

struct LossTerms {
    Tensor total;
    Tensor additive;
    Tensor category;
    Tensor attr_mean; // undefined for Baseline1
};

/// L = L_add + alpha * L_category + beta * mean_k L_k. NoAttrLabel drops the
/// attribute term; Baseline1 uses L_category alone.
LossTerms combined_loss_terms(const AttentionState& state, std::size_t category_label,
                              const std::vector<std::size_t>& attr_labels, const A3MConfig& config);
Tensor combined_loss(const AttentionState& state, std::size_t category_label,
                     const std::vector<std::size_t>& attr_labels, const A3MConfig& config);

/// Checkpoint: "A3M1" then every parameter value as little-endian float64
/// in declared order.
void write_checkpoint(const std::filesystem::path& path, const A3MParams& params);
A3MParams read_checkpoint(const std::filesystem::path& path, const A3MConfig& config);

} // namespace a3m
