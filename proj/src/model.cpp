#include "a3m/model.hpp"

#include "a3m/errors.hpp"
#include "a3m/ops.hpp"
#include "binary_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace a3m {

std::string_view variant_name(Variant v)
{
    switch (v) {
    case Variant::A3M:
        return "a3m";
    case Variant::Baseline1:
        return "baseline1";
    case Variant::Baseline2:
        return "baseline2";
    case Variant::Att1:
        return "att1";
    case Variant::Att2:
        return "att2";
    case Variant::NoAttrLabel:
        return "noattrlabel";
    }
    throw ConfigError("unknown variant");
}

Variant parse_variant(std::string_view name)
{
    std::string key;
    for (char c : name)
        if (c != '-' && c != '_')
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (Variant v : all_variants())
        if (key == variant_name(v))
            return v;
    if (key == "woattrlabel")
        return Variant::NoAttrLabel;
    throw ConfigError("model.variant: unknown variant '" + std::string(name) + "'");
}

const std::vector<Variant>& all_variants()
{
    static const std::vector<Variant> order{Variant::Baseline1, Variant::Baseline2, Variant::Att1,
                                            Variant::Att2,      Variant::NoAttrLabel, Variant::A3M};
    return order;
}

bool has_attribute_attention(Variant v)
{
    return v == Variant::A3M || v == Variant::Att1 || v == Variant::NoAttrLabel;
}

std::size_t A3MConfig::shared_channels() const
{
    return backbone.empty() ? channels : backbone.back().out_channels;
}

std::pair<std::size_t, std::size_t> A3MConfig::feature_size() const
{
    std::size_t h = height, w = width;
    for (const auto& layer : backbone) {
        if (layer.kernel > h + 2 * layer.padding || layer.kernel > w + 2 * layer.padding)
            throw ConfigError("model.backbone: kernel " + std::to_string(layer.kernel) + " exceeds feature map " +
                              std::to_string(h) + "x" + std::to_string(w));
        h = (h + 2 * layer.padding - layer.kernel) / layer.stride + 1;
        w = (w + 2 * layer.padding - layer.kernel) / layer.stride + 1;
    }
    return {h, w};
}

std::size_t A3MConfig::num_locations() const
{
    auto [h, w] = feature_size();
    return h * w;
}

void A3MConfig::validate() const
{
    if (channels == 0 || height == 0 || width == 0)
        throw ConfigError("model.input: image extents must be positive");
    if (d == 0)
        throw ConfigError("model.d: must be positive");
    if (num_categories < 2)
        throw ConfigError("model.num_categories: need at least 2 categories");
    if (uses_attributes() && attr_cardinalities.empty())
        throw ConfigError("model.attr_cardinalities: need at least one attribute");
    for (auto c : attr_cardinalities)
        if (c < 2)
            throw ConfigError("model.attr_cardinalities: every attribute needs at least 2 values");
    if (!(alpha >= 0.0) || !(beta >= 0.0))
        throw ConfigError("model.alpha/model.beta: trade-off weights must be non-negative");
    for (const auto& layer : backbone)
        if (layer.out_channels == 0 || layer.kernel == 0 || layer.stride == 0)
            throw ConfigError("model.backbone: layer extents and stride must be positive");
    (void)feature_size();
}

std::vector<Tensor> A3MParams::tensors() const
{
    std::vector<Tensor> out;
    for (const auto& l : backbone) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    out.push_back(category_conv.weight);
    out.push_back(category_conv.bias);
    for (const auto& c : attr_convs) {
        out.push_back(c.weight);
        out.push_back(c.bias);
    }
    out.push_back(category_head.weight);
    out.push_back(category_head.bias);
    for (const auto& h : attr_heads) {
        out.push_back(h.weight);
        out.push_back(h.bias);
    }
    if (final_head.weight.defined()) {
        out.push_back(final_head.weight);
        out.push_back(final_head.bias);
    }
    return out;
}

std::vector<std::string> A3MParams::names() const
{
    std::vector<std::string> out;
    auto pair = [&out](const std::string& prefix) {
        out.push_back(prefix + ".weight");
        out.push_back(prefix + ".bias");
    };
    for (std::size_t i = 0; i < backbone.size(); ++i)
        pair("backbone." + std::to_string(i));
    pair("category.conv");
    for (std::size_t k = 0; k < attr_convs.size(); ++k)
        pair("attr." + std::to_string(k) + ".conv");
    pair("category.head");
    for (std::size_t k = 0; k < attr_heads.size(); ++k)
        pair("attr." + std::to_string(k) + ".head");
    if (final_head.weight.defined())
        pair("final.head");
    return out;
}

std::size_t A3MParams::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& t : tensors())
        n += t.size();
    return n;
}

A3MParams A3MParams::clone() const
{
    A3MParams out;
    auto conv = [](const ConvParams& c) { return ConvParams{c.weight.clone(), c.bias.clone()}; };
    auto lin = [](const LinearParams& l) {
        if (!l.weight.defined())
            return LinearParams{};
        return LinearParams{l.weight.clone(), l.bias.clone()};
    };
    for (const auto& l : backbone)
        out.backbone.push_back(conv(l));
    out.category_conv = conv(category_conv);
    for (const auto& c : attr_convs)
        out.attr_convs.push_back(conv(c));
    out.category_head = lin(category_head);
    for (const auto& h : attr_heads)
        out.attr_heads.push_back(lin(h));
    out.final_head = lin(final_head);
    return out;
}

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape), true);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = rng.uniform(-s, s);
    return t;
}

ConvParams make_conv(std::size_t in, std::size_t out, std::size_t k, Rng& rng)
{
    return {glorot({out, in, k, k}, in * k * k, out * k * k, rng), Tensor::zeros({out}, true)};
}

LinearParams make_head(std::size_t in, std::size_t out)
{
    return {Tensor::zeros({out, in}, true), Tensor::zeros({out}, true)};
}

} // namespace

A3MParams init_params(const A3MConfig& config, Rng& rng)
{
    config.validate();
    A3MParams p;
    std::size_t in = config.channels;
    for (const auto& layer : config.backbone) {
        p.backbone.push_back(make_conv(in, layer.out_channels, layer.kernel, rng));
        in = layer.out_channels;
    }
    const std::size_t shared = config.shared_channels();
    p.category_conv = make_conv(shared, config.d, 1, rng);
    if (config.uses_attributes())
        for (std::size_t k = 0; k < config.num_attributes(); ++k)
            p.attr_convs.push_back(make_conv(shared, config.d, 1, rng));
    p.category_head = make_head(config.d, config.num_categories);
    if (config.uses_attributes()) {
        for (auto c : config.attr_cardinalities)
            p.attr_heads.push_back(make_head(config.d, c));
        p.final_head = make_head(config.d, config.num_categories);
    }
    return p;
}

void randomize_heads(A3MParams& params, Rng& rng)
{
    auto fill = [&rng](LinearParams& h) {
        if (!h.weight.defined())
            return;
        const std::size_t out = h.weight.dim(0), in = h.weight.dim(1);
        h.weight.data() = glorot({out, in}, in, out, rng).data();
        for (std::size_t i = 0; i < h.bias.size(); ++i)
            h.bias[i] = rng.uniform(-0.1, 0.1);
    };
    fill(params.category_head);
    for (auto& h : params.attr_heads)
        fill(h);
    fill(params.final_head);
}

Tensor forward_shared(const Tensor& image, const A3MParams& params, const A3MConfig& config)
{
    const Shape expected{config.channels, config.height, config.width};
    if (image.shape() != expected)
        throw DimensionError("forward_shared: image " + shape_str(image.shape()) + " does not match config " +
                             shape_str(expected));
    Tensor x = image;
    for (std::size_t i = 0; i < config.backbone.size(); ++i) {
        const auto& layer = config.backbone[i];
        x = relu(conv2d(x, params.backbone.at(i).weight, params.backbone.at(i).bias, layer.stride, layer.padding));
    }
    return x;
}

namespace {

Tensor branch_map(const Tensor& shared, const ConvParams& conv, const A3MConfig& config)
{
    Tensor y = conv2d(shared, conv.weight, conv.bias, 1, 0);
    if (config.branch_relu)
        y = relu(y);
    return y;
}

} // namespace

CategoryBranch category_branch(const Tensor& shared, const A3MParams& params, const A3MConfig& config)
{
    Tensor map = branch_map(shared, params.category_conv, config);
    const std::size_t d = map.dim(0);
    CategoryBranch out;
    out.V = reshape(map, {d, map.size() / d});
    out.v_category = global_avg_pool(out.V);
    out.logits = linear(params.category_head.weight, out.v_category, params.category_head.bias);
    return out;
}

AttributeBranch attribute_branch(const Tensor& shared, const A3MParams& params, const A3MConfig& config,
                                 std::size_t k)
{
    if (k >= params.attr_convs.size() || k >= params.attr_heads.size())
        throw IndexError("attribute_branch: attribute " + std::to_string(k) + " outside [0, " +
                         std::to_string(params.attr_convs.size()) + ")");
    AttributeBranch out;
    out.embedding = global_avg_pool(branch_map(shared, params.attr_convs[k], config));
    out.logits = linear(params.attr_heads[k].weight, out.embedding, params.attr_heads[k].bias);
    return out;
}

AttributeAttention attribute_guided_attention(const Tensor& V, const Tensor& A)
{
    if (V.rank() != 2 || A.rank() != 2 || V.dim(0) != A.dim(0))
        throw DimensionError("attribute_guided_attention: V " + shape_str(V.shape()) + " and A " +
                             shape_str(A.shape()) + " must share the embedding dimension");
    AttributeAttention out;
    Tensor scores = sigmoid(matmul(transpose(V), A)); // [L x K]
    for (std::size_t k = 0; k < A.dim(1); ++k)
        out.masks.push_back(column(scores, k));
    out.region_mask = elementwise_max(out.masks);
    out.f_region = weighted_column_mean(V, out.region_mask);
    return out;
}

CategoryAttention category_guided_attention(const Tensor& A, const Tensor& v_category)
{
    if (A.rank() != 2 || v_category.rank() != 1 || A.dim(0) != v_category.dim(0))
        throw DimensionError("category_guided_attention: A " + shape_str(A.shape()) + " and v " +
                             shape_str(v_category.shape()) + " must share the embedding dimension");
    CategoryAttention out;
    out.weights = sigmoid(matmul(transpose(A), v_category));
    out.f_attr = weighted_column_mean(A, out.weights);
    return out;
}

AttentionState forward_full(const Tensor& image, const A3MParams& params, const A3MConfig& config,
                            AttentionClamp clamp)
{
    Tensor shared = forward_shared(image, params, config);
    CategoryBranch cat = category_branch(shared, params, config);

    AttentionState s;
    s.V = cat.V;
    s.v_category = cat.v_category;
    s.logits_category = cat.logits;
    if (config.variant == Variant::Baseline1) {
        s.f_final = cat.v_category;
        s.logits_final = cat.logits;
        return s;
    }

    const std::size_t K = config.num_attributes();
    std::vector<Tensor> embeddings;
    for (std::size_t k = 0; k < K; ++k) {
        AttributeBranch ab = attribute_branch(shared, params, config, k);
        embeddings.push_back(ab.embedding);
        s.logits_attr.push_back(ab.logits);
    }
    s.A = stack_columns(embeddings);

    switch (config.variant) {
    case Variant::Baseline2:
        clamp.region_ones = clamp.attr_ones = true;
        break;
    case Variant::Att1:
        clamp.attr_ones = true;
        break;
    case Variant::Att2:
        clamp.region_ones = true;
        break;
    default:
        break;
    }

    AttributeAttention aga = attribute_guided_attention(s.V, s.A);
    s.masks = aga.masks;
    if (clamp.region_ones) {
        s.region_mask = Tensor::ones({s.V.dim(1)});
        s.f_region = weighted_column_mean(s.V, s.region_mask);
    } else {
        s.region_mask = aga.region_mask;
        s.f_region = aga.f_region;
    }

    if (clamp.attr_ones) {
        s.attr_weights = Tensor::ones({K});
        s.f_attr = weighted_column_mean(s.A, s.attr_weights);
    } else {
        CategoryAttention cga = category_guided_attention(s.A, s.v_category);
        s.attr_weights = cga.weights;
        s.f_attr = cga.f_attr;
    }

    s.f_final = add(s.f_region, s.f_attr);
    s.logits_final = linear(params.final_head.weight, s.f_final, params.final_head.bias);
    return s;
}

LossTerms combined_loss_terms(const AttentionState& state, std::size_t category_label,
                              const std::vector<std::size_t>& attr_labels, const A3MConfig& config)
{
    LossTerms t;
    t.category = softmax_cross_entropy(state.logits_category, category_label);
    if (config.variant == Variant::Baseline1) {
        t.additive = t.category;
        t.total = t.category;
        return t;
    }
    const std::size_t K = state.logits_attr.size();
    if (attr_labels.size() != K)
        throw DimensionError("combined_loss: expected " + std::to_string(K) + " attribute labels, got " +
                             std::to_string(attr_labels.size()));
    t.additive = softmax_cross_entropy(state.logits_final, category_label);
    Tensor total = add(t.additive, scale(t.category, config.alpha));
    if (config.variant != Variant::NoAttrLabel) {
        Tensor acc = softmax_cross_entropy(state.logits_attr[0], attr_labels[0]);
        for (std::size_t k = 1; k < K; ++k)
            acc = add(acc, softmax_cross_entropy(state.logits_attr[k], attr_labels[k]));
        t.attr_mean = scale(acc, 1.0 / static_cast<double>(K));
        total = add(total, scale(t.attr_mean, config.beta));
    }
    t.total = total;
    return t;
}

Tensor combined_loss(const AttentionState& state, std::size_t category_label,
                     const std::vector<std::size_t>& attr_labels, const A3MConfig& config)
{
    return combined_loss_terms(state, category_label, attr_labels, config).total;
}

void write_checkpoint(const std::filesystem::path& path, const A3MParams& params)
{
    std::string bytes = "A3M1";
    for (const auto& t : params.tensors())
        for (std::size_t i = 0; i < t.size(); ++i)
            detail::put_f64_le(bytes, t[i]);
    detail::write_file(path, bytes);
}

A3MParams read_checkpoint(const std::filesystem::path& path, const A3MConfig& config)
{
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < 4 || bytes.compare(0, 4, "A3M1") != 0)
        throw ParseError(path.string() + ": not an A3M1 checkpoint");
    Rng unused(0);
    A3MParams params = init_params(config, unused);
    const std::size_t expected = params.scalar_count();
    const std::size_t payload = bytes.size() - 4;
    if (payload % 8 != 0 || payload / 8 != expected)
        throw DimensionError(path.string() + ": checkpoint holds " + std::to_string(payload / 8) +
                             " values [" + std::to_string(payload) + " bytes] but model " +
                             std::string(variant_name(config.variant)) + " (d=" + std::to_string(config.d) +
                             ", K=" + std::to_string(config.num_attributes()) + ", C=" +
                             std::to_string(config.num_categories) + ") expects " + std::to_string(expected));
    std::size_t offset = 4;
    for (Tensor t : params.tensors())
        for (std::size_t i = 0; i < t.size(); ++i, offset += 8)
            t[i] = detail::get_f64_le(bytes, offset);
    return params;
}

} // namespace a3m
