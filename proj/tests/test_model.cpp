// Model forward pass, attention algebra, loss, gradients and checkpoints.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "a3m/data.hpp"
#include "a3m/errors.hpp"
#include "a3m/grad_check.hpp"
#include "a3m/model.hpp"
#include "a3m/ops.hpp"
#include "a3m/optim.hpp"

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

using namespace a3m;
namespace t = a3m::test;
namespace fs = std::filesystem;

namespace {

A3MParams random_model(const A3MConfig& cfg, std::uint64_t seed)
{
    Rng rng(seed);
    A3MParams p = init_params(cfg, rng);
    randomize_heads(p, rng);
    return p;
}

void require_bitwise_equal(const Tensor& a, const Tensor& b)
{
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == b[i]);
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("a3m_test_model_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("default backbone yields a 4x4 map")
{
    A3MConfig cfg;
    CHECK(cfg.feature_size() == std::make_pair(std::size_t{4}, std::size_t{4}));
    CHECK(cfg.num_locations() == 16);
    A3MParams p = random_model(cfg, 1);
    const Tensor shared = forward_shared(Tensor::zeros({3, 16, 16}), p, cfg);
    CHECK(shared.shape() == Shape{32, 4, 4});
}

TEST_CASE("large input with five stride-2 layers yields 7x7")
{
    A3MConfig cfg;
    cfg.height = cfg.width = 224;
    cfg.backbone.assign(5, ConvSpec{8, 3, 2, 1});
    CHECK(cfg.feature_size() == std::make_pair(std::size_t{7}, std::size_t{7}));
    CHECK(cfg.num_locations() == 49);
}

TEST_CASE("zero image with zero biases gives a zero feature map")
{
    A3MConfig cfg;
    A3MParams p = random_model(cfg, 2);
    const Tensor shared = forward_shared(Tensor::zeros({3, 16, 16}), p, cfg);
    for (std::size_t i = 0; i < shared.size(); ++i)
        CHECK(shared[i] == 0.0);
}

TEST_CASE("input shape mismatch names both shapes")
{
    A3MConfig cfg;
    A3MParams p = random_model(cfg, 2);
    try {
        forward_shared(Tensor::zeros({3, 8, 8}), p, cfg);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[3x8x8]") != std::string::npos);
        CHECK(msg.find("[3x16x16]") != std::string::npos);
    }
}

TEST_CASE("invalid model configs are rejected with the field named")
{
    A3MConfig cfg;
    cfg.d = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("model.d"), ConfigError);
    A3MConfig tiny;
    tiny.height = 0;
    CHECK_THROWS_AS(tiny.validate(), ConfigError);
}

TEST_CASE("category branch pools V by its mean")
{
    A3MConfig cfg;
    A3MParams p = random_model(cfg, 3);
    Rng rng(3);
    const Tensor shared = forward_shared(t::random_tensor({3, 16, 16}, rng, 0.0, 1.0), p, cfg);
    const CategoryBranch cb = category_branch(shared, p, cfg);
    const auto V = t::to_grid(cb.V);
    for (std::size_t i = 0; i < V.size(); ++i) {
        const double mean = std::accumulate(V[i].begin(), V[i].end(), 0.0) / static_cast<double>(V[i].size());
        CHECK(cb.v_category[i] == doctest::Approx(mean).epsilon(1e-14));
    }
}

TEST_CASE("attribute branch with zero conv gives a zero embedding and bias logits")
{
    A3MConfig cfg;
    A3MParams p = random_model(cfg, 4);
    p.attr_convs[1].weight.data().setZero();
    p.attr_convs[1].bias.data().setZero();
    Rng rng(4);
    const Tensor shared = forward_shared(t::random_tensor({3, 16, 16}, rng, 0.0, 1.0), p, cfg);
    const AttributeBranch ab = attribute_branch(shared, p, cfg, 1);
    for (std::size_t i = 0; i < ab.embedding.size(); ++i)
        CHECK(ab.embedding[i] == 0.0);
    for (std::size_t c = 0; c < ab.logits.size(); ++c)
        CHECK(ab.logits[c] == p.attr_heads[1].bias[c]);
}

TEST_CASE("identical attribute convs give identical embeddings")
{
    A3MConfig cfg;
    A3MParams p = random_model(cfg, 5);
    p.attr_convs[2].weight = p.attr_convs[0].weight.clone();
    p.attr_convs[2].bias = p.attr_convs[0].bias.clone();
    Rng rng(5);
    const Tensor shared = forward_shared(t::random_tensor({3, 16, 16}, rng, 0.0, 1.0), p, cfg);
    require_bitwise_equal(attribute_branch(shared, p, cfg, 0).embedding, attribute_branch(shared, p, cfg, 2).embedding);
}

TEST_CASE("attribute-guided attention matches the scalar-loop oracle on 200 instances")
{
    Rng rng(606);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng.index(8), L = 1 + rng.index(20), K = 1 + rng.index(6);
        const Tensor V = t::random_tensor({d, L}, rng, -2.0, 2.0);
        const Tensor A = t::random_tensor({d, K}, rng, -2.0, 2.0);
        const AttributeAttention got = attribute_guided_attention(V, A);
        const auto want = t::attr_attention_oracle(t::to_grid(V), t::to_grid(A));
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < L; ++l)
                REQUIRE(std::abs(got.masks[k][l] - want.masks[k][l]) <= 1e-12);
        for (std::size_t l = 0; l < L; ++l)
            REQUIRE(std::abs(got.region_mask[l] - want.region[l]) <= 1e-12);
        for (std::size_t i = 0; i < d; ++i)
            REQUIRE(std::abs(got.f_region[i] - want.f_region[i]) <= 1e-12);
    }
}

TEST_CASE("category-guided attention matches the scalar-loop oracle on 200 instances")
{
    Rng rng(707);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng.index(8), K = 1 + rng.index(6);
        const Tensor A = t::random_tensor({d, K}, rng, -2.0, 2.0);
        const Tensor v = t::random_tensor({d}, rng, -2.0, 2.0);
        const CategoryAttention got = category_guided_attention(A, v);
        std::vector<double> vv(v.data().data(), v.data().data() + d);
        const auto want = t::cat_attention_oracle(t::to_grid(A), vv);
        for (std::size_t k = 0; k < K; ++k)
            REQUIRE(std::abs(got.weights[k] - want.weights[k]) <= 1e-12);
        for (std::size_t i = 0; i < d; ++i)
            REQUIRE(std::abs(got.f_attr[i] - want.f_attr[i]) <= 1e-12);
    }
}

TEST_CASE("attention special cases")
{
    Rng rng(8);
    const Tensor V = t::random_tensor({4, 6}, rng);
    SUBCASE("A = 0 gives half masks and half the mean")
    {
        const AttributeAttention a = attribute_guided_attention(V, Tensor::zeros({4, 3}));
        const Tensor gap = global_avg_pool(V);
        for (std::size_t l = 0; l < 6; ++l) {
            CHECK(a.masks[0][l] == 0.5);
            CHECK(a.region_mask[l] == 0.5);
        }
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(a.f_region[i] == doctest::Approx(0.5 * gap[i]).epsilon(1e-14));
    }
    SUBCASE("K = 1 region mask is the single mask")
    {
        const AttributeAttention a = attribute_guided_attention(V, t::random_tensor({4, 1}, rng));
        require_bitwise_equal(a.region_mask, a.masks[0]);
    }
    SUBCASE("v = 0 gives half weights and half the attribute mean")
    {
        const Tensor A = t::random_tensor({4, 3}, rng);
        const CategoryAttention c = category_guided_attention(A, Tensor::zeros({4}));
        const Tensor mean = global_avg_pool(A);
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(c.weights[k] == 0.5);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(c.f_attr[i] == doctest::Approx(0.5 * mean[i]).epsilon(1e-14));
    }
    SUBCASE("K = 1 f_attr is sigmoid(a.v) a")
    {
        const Tensor A = t::random_tensor({4, 1}, rng), v = t::random_tensor({4}, rng);
        double dot = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            dot += A[i] * v[i];
        const CategoryAttention c = category_guided_attention(A, v);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(c.f_attr[i] == doctest::Approx(sigmoid(dot) * A[i]).epsilon(1e-14));
    }
}

TEST_CASE("spatial permutation permutes masks and keeps f_region")
{
    Rng rng(9);
    const std::size_t d = 5, L = 7, K = 3;
    const Tensor V = t::random_tensor({d, L}, rng), A = t::random_tensor({d, K}, rng);
    std::vector<std::size_t> perm(L);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor Vp = Tensor::zeros({d, L});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t l = 0; l < L; ++l)
            Vp[i * L + l] = V[i * L + perm[l]];
    const auto a = attribute_guided_attention(V, A), b = attribute_guided_attention(Vp, A);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t k = 0; k < K; ++k)
            CHECK(b.masks[k][l] == a.masks[k][perm[l]]);
        CHECK(b.region_mask[l] == a.region_mask[perm[l]]);
    }
    for (std::size_t i = 0; i < d; ++i)
        CHECK(b.f_region[i] == doctest::Approx(a.f_region[i]).epsilon(1e-14));
}

TEST_CASE("attribute permutation keeps the region mask and f_attr")
{
    Rng rng(10);
    const std::size_t d = 5, L = 7, K = 4;
    const Tensor V = t::random_tensor({d, L}, rng), A = t::random_tensor({d, K}, rng), v = t::random_tensor({d}, rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor Ap = Tensor::zeros({d, K});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < K; ++k)
            Ap[i * K + k] = A[i * K + perm[k]];
    require_bitwise_equal(attribute_guided_attention(V, A).region_mask, attribute_guided_attention(V, Ap).region_mask);
    const auto c = category_guided_attention(A, v), cp = category_guided_attention(Ap, v);
    for (std::size_t k = 0; k < K; ++k)
        CHECK(cp.weights[k] == c.weights[perm[k]]);
    for (std::size_t i = 0; i < d; ++i)
        CHECK(cp.f_attr[i] == doctest::Approx(c.f_attr[i]).epsilon(1e-14));
}

TEST_CASE("masks increase strictly with the inner product")
{
    // Scaling a^(k) by 1+eps moves every positive inner product up.
    Rng rng(12);
    const Tensor V = t::random_tensor({4, 6}, rng), A = t::random_tensor({4, 1}, rng);
    Tensor A2 = A.clone();
    for (std::size_t i = 0; i < A2.size(); ++i)
        A2[i] *= 1.1;
    const auto a = attribute_guided_attention(V, A), b = attribute_guided_attention(V, A2);
    for (std::size_t l = 0; l < 6; ++l) {
        double dot = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            dot += V[i * 6 + l] * A[i];
        if (dot > 0)
            CHECK(b.masks[0][l] > a.masks[0][l]);
        else if (dot < 0)
            CHECK(b.masks[0][l] < a.masks[0][l]);
    }
}

TEST_CASE("equivalence ladder holds bitwise on logits")
{
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        A3MConfig cfg;
        const A3MParams p = random_model(cfg, 100 + static_cast<std::uint64_t>(trial));
        const Tensor image = t::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
        A3MConfig b2 = cfg, att1 = cfg, att2 = cfg;
        b2.variant = Variant::Baseline2;
        att1.variant = Variant::Att1;
        att2.variant = Variant::Att2;
        const AttentionState ref = forward_full(image, p, b2);
        require_bitwise_equal(forward_full(image, p, cfg, {true, true}).logits_final, ref.logits_final);
        require_bitwise_equal(forward_full(image, p, att1, {true, false}).logits_final, ref.logits_final);
        require_bitwise_equal(forward_full(image, p, att2, {false, true}).logits_final, ref.logits_final);
        require_bitwise_equal(ref.f_region, global_avg_pool(ref.V));
    }
}

TEST_CASE("forward state invariants on a fixed toy sample")
{
    A3MConfig cfg;
    const A3MParams p = random_model(cfg, 14);
    const SyntheticSpec spec = default_spec(0);
    Rng rng(14);
    const SyntheticSample s = render_sample(spec, 5, rng);
    const AttentionState st = forward_full(s.image, p, cfg);
    REQUIRE(st.masks.size() == 4);
    for (const auto& m : st.masks)
        for (std::size_t l = 0; l < m.size(); ++l) {
            CHECK(m[l] > 0.0);
            CHECK(m[l] < 1.0);
        }
    double bound_v = 0.0, bound_a = 0.0;
    for (std::size_t i = 0; i < st.V.size(); ++i)
        bound_v = std::max(bound_v, std::abs(st.V[i]));
    for (std::size_t i = 0; i < st.A.size(); ++i)
        bound_a = std::max(bound_a, std::abs(st.A[i]));
    for (std::size_t i = 0; i < st.f_final.size(); ++i) {
        CHECK(st.f_final[i] == st.f_region[i] + st.f_attr[i]);
        CHECK(std::abs(st.f_final[i]) <= bound_v + bound_a);
    }
}

TEST_CASE("combined loss weights its terms")
{
    A3MConfig cfg;
    const A3MParams p = random_model(cfg, 15);
    Rng rng(15);
    const Tensor image = t::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    const AttentionState st = forward_full(image, p, cfg);
    const std::vector<std::size_t> attrs{1, 2, 0, 1};
    const LossTerms lt = combined_loss_terms(st, 7, attrs, cfg);
    double attr = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
        attr += softmax_cross_entropy(st.logits_attr[k], attrs[k]).item();
    attr /= 4.0;
    const double add = softmax_cross_entropy(st.logits_final, 7).item();
    const double cat = softmax_cross_entropy(st.logits_category, 7).item();
    CHECK(lt.total.item() == doctest::Approx(add + 0.5 * cat + 0.5 * attr).epsilon(1e-14));
    CHECK(lt.attr_mean.item() == doctest::Approx(attr).epsilon(1e-14));

    A3MConfig zero = cfg;
    zero.alpha = zero.beta = 0.0;
    CHECK(combined_loss(st, 7, attrs, zero).item() == doctest::Approx(add).epsilon(1e-14));
    A3MConfig b1 = cfg;
    b1.variant = Variant::Baseline1;
    const AttentionState sb = forward_full(image, p, b1);
    CHECK(combined_loss(sb, 7, attrs, b1).item() == softmax_cross_entropy(sb.logits_category, 7).item());
    CHECK_THROWS_AS(combined_loss(st, 7, {1, 2}, cfg), DimensionError);
}

TEST_CASE("full-loss gradient check on a two-sample batch for every variant")
{
    const SyntheticSpec spec = default_spec(0);
    for (Variant v : all_variants()) {
        CAPTURE(variant_name(v));
        A3MConfig cfg;
        cfg.variant = v;
        // Draw instances until no ReLU input or mask runner-up is within a
        // safe distance of a kink for the step size used below.
        for (std::uint64_t seed = 0;; ++seed) {
            REQUIRE(seed < 50);
            const A3MParams p = random_model(cfg, 500 + seed);
            Rng rng(900 + seed);
            const SyntheticSample s0 = render_sample(spec, 0, rng), s1 = render_sample(spec, 3, rng);
            if (std::min(t::kink_margin(s0.image, p, cfg), t::kink_margin(s1.image, p, cfg)) < 1e-4)
                continue;
            const double err = grad_check(
                [&] {
                    return add(combined_loss(forward_full(s0.image, p, cfg), s0.category, s0.attr_labels, cfg),
                               combined_loss(forward_full(s1.image, p, cfg), s1.category, s1.attr_labels, cfg));
                },
                p.tensors(), {1e-5, 8, seed});
            CHECK(err < 1e-4);
            break;
        }
    }
}

TEST_CASE("category logits gradient matches finite differences")
{
    A3MConfig cfg;
    const A3MParams p = random_model(cfg, 16);
    Rng rng(16);
    const Tensor image = t::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    const double err = grad_check(
        [&] {
            const Tensor shared = forward_shared(image, p, cfg);
            return softmax_cross_entropy(category_branch(shared, p, cfg).logits, 3);
        },
        {p.category_head.weight, p.category_head.bias});
    CHECK(err < 1e-5);
}

TEST_CASE("an attribute loss reaches only its own attribute conv")
{
    A3MConfig cfg;
    const A3MParams p = random_model(cfg, 17);
    Rng rng(17);
    const Tensor image = t::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    auto params = p.tensors();
    for (auto& q : params)
        q.set_requires_grad(true);
    {
        Tape tape;
        const Tensor shared = forward_shared(image, p, cfg);
        tape.backward(softmax_cross_entropy(attribute_branch(shared, p, cfg, 1).logits, 2));
    }
    CHECK(p.attr_convs[1].weight.grad().cwiseAbs().maxCoeff() > 0.0);
    for (std::size_t k : {0u, 2u, 3u}) {
        CHECK(p.attr_convs[k].weight.grad().cwiseAbs().maxCoeff() == 0.0);
        CHECK(p.attr_convs[k].bias.grad().cwiseAbs().maxCoeff() == 0.0);
    }
    const double err = grad_check(
        [&] {
            const Tensor shared = forward_shared(image, p, cfg);
            return softmax_cross_entropy(attribute_branch(shared, p, cfg, 1).logits, 2);
        },
        {p.attr_convs[0].weight, p.attr_convs[1].weight});
    CHECK(err < 1e-6);
    for (auto& q : params)
        q.set_requires_grad(false);
}

TEST_CASE("with beta = 0 attribute heads get exactly zero gradient")
{
    for (Variant v : {Variant::A3M, Variant::NoAttrLabel}) {
        A3MConfig cfg;
        cfg.variant = v;
        cfg.beta = 0.0;
        const A3MParams p = random_model(cfg, 18);
        Rng rng(18);
        const Tensor image = t::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
        auto params = p.tensors();
        for (auto& q : params)
            q.set_requires_grad(true);
        {
            Tape tape;
            tape.backward(combined_loss(forward_full(image, p, cfg), 2, {0, 1, 1, 0}, cfg));
        }
        for (const auto& head : p.attr_heads) {
            CHECK(head.weight.grad().cwiseAbs().maxCoeff() == 0.0);
            CHECK(head.bias.grad().cwiseAbs().maxCoeff() == 0.0);
        }
        CHECK(p.final_head.weight.grad().cwiseAbs().maxCoeff() > 0.0);
        for (auto& q : params)
            q.set_requires_grad(false);
    }
}

TEST_CASE("one sgd step at lr 1e-3 lowers the loss on a fixed batch")
{
    const SyntheticSpec spec = default_spec(0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        A3MConfig cfg;
        Rng rng(seed);
        A3MParams p = init_params(cfg, rng);
        std::vector<SyntheticSample> batch;
        for (std::size_t c : {0u, 5u, 11u, 17u})
            batch.push_back(render_sample(spec, c, rng));
        auto batch_loss = [&] {
            Tensor acc = Tensor::scalar(0.0);
            for (const auto& s : batch)
                acc = add(acc, combined_loss(forward_full(s.image, p, cfg), s.category, s.attr_labels, cfg));
            return scale(acc, 1.0 / static_cast<double>(batch.size()));
        };
        const double before = batch_loss().item();
        auto params = p.tensors();
        for (auto& q : params)
            q.set_requires_grad(true);
        SgdState opt(params, {1e-3, 0.9, 5e-4});
        {
            Tape tape;
            tape.backward(batch_loss());
        }
        opt.step();
        for (auto& q : params)
            q.set_requires_grad(false);
        CHECK(batch_loss().item() < before);
    }
}

TEST_CASE("variants built from one seed share the backbone and category conv")
{
    A3MConfig a3m;
    A3MConfig b1 = a3m;
    b1.variant = Variant::Baseline1;
    Rng r1(21), r2(21);
    const A3MParams pa = init_params(a3m, r1), pb = init_params(b1, r2);
    for (std::size_t i = 0; i < pa.backbone.size(); ++i)
        require_bitwise_equal(pa.backbone[i].weight, pb.backbone[i].weight);
    require_bitwise_equal(pa.category_conv.weight, pb.category_conv.weight);
    CHECK(pb.attr_convs.empty());
    CHECK(pa.category_head.weight.data().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint write-read-write is byte-identical")
{
    const fs::path dir = scratch("ckpt");
    for (Variant v : all_variants()) {
        A3MConfig cfg;
        cfg.variant = v;
        const A3MParams p = random_model(cfg, 22);
        write_checkpoint(dir / "a.a3m", p);
        const A3MParams q = read_checkpoint(dir / "a.a3m", cfg);
        write_checkpoint(dir / "b.a3m", q);
        CHECK(t::slurp(dir / "a.a3m") == t::slurp(dir / "b.a3m"));
        CHECK(t::slurp(dir / "a.a3m").substr(0, 4) == "A3M1");
        CHECK(t::slurp(dir / "a.a3m").size() == 4 + 8 * p.scalar_count());
    }
    A3MConfig b1;
    b1.variant = Variant::Baseline1;
    CHECK_THROWS_AS(read_checkpoint(dir / "a.a3m", b1), DimensionError);
    t::slurp(dir / "a.a3m");
    {
        std::ofstream bad(dir / "bad.a3m", std::ios::binary);
        bad << "NOPE";
    }
    CHECK_THROWS_AS(read_checkpoint(dir / "bad.a3m", b1), ParseError);
}

TEST_CASE("variant names parse in several spellings")
{
    CHECK(parse_variant("Baseline-1") == Variant::Baseline1);
    CHECK(parse_variant("att2") == Variant::Att2);
    CHECK(parse_variant("A3M") == Variant::A3M);
    for (Variant v : all_variants())
        CHECK(parse_variant(variant_name(v)) == v);
    CHECK_THROWS_AS(parse_variant("resnet"), ConfigError);
}
