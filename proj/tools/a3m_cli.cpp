// a3m: dataset generation, training, evaluation, ablation, sweeps and
// attention heatmaps for the attribute-attention model on synthetic data.

#include "a3m/config.hpp"
#include "a3m/data.hpp"
#include "a3m/errors.hpp"
#include "a3m/export.hpp"
#include "a3m/model.hpp"
#include "a3m/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace a3m;

namespace {

constexpr int kExitUser = 2;
constexpr int kExitNumeric = 3;

struct Common {
    std::string config_path;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config_path, "INI config file ([data] [model] [train] [eval])");
    cmd->add_option("--out", c.out, "output directory (created if absent)");
    cmd->add_option("--seed", c.seed, "seed (data seed for gen, training seed otherwise)");
    cmd->add_option("--set", c.overrides, "section.key=value override, repeatable")->take_all();
}

RunConfig load_config(const Common& c, const fs::path& fallback = {})
{
    RunConfig cfg;
    if (!c.config_path.empty())
        cfg = read_config(c.config_path);
    else if (!fallback.empty() && fs::exists(fallback))
        cfg = read_config(fallback);
    else
        cfg = default_run_config();
    for (const auto& o : c.overrides)
        apply_override(cfg, o);
    return cfg;
}

fs::path prepare_out(const Common& c)
{
    fs::path out(c.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec)
        throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    return out;
}

// Accepts a manifest file or a directory holding manifest.csv.
fs::path manifest_path(const std::string& data)
{
    fs::path p(data);
    if (fs::is_directory(p))
        p /= "manifest.csv";
    return p;
}

struct Dataset {
    DatasetManifest manifest;
    std::vector<SyntheticSample> samples;
    std::vector<std::size_t> train, test, query, gallery;

    std::vector<std::size_t> eval_pool() const
    {
        if (!test.empty())
            return test;
        std::vector<std::size_t> all = query;
        all.insert(all.end(), gallery.begin(), gallery.end());
        std::sort(all.begin(), all.end());
        return all;
    }
};

Dataset load_dataset(const std::string& data)
{
    const fs::path path = manifest_path(data);
    Dataset d;
    d.manifest = read_manifest(path);
    d.samples = load_samples(d.manifest, path);
    for (std::size_t i = 0; i < d.manifest.rows.size(); ++i) {
        switch (d.manifest.rows[i].split) {
        case SplitTag::Train: d.train.push_back(i); break;
        case SplitTag::Test: d.test.push_back(i); break;
        case SplitTag::Query: d.query.push_back(i); break;
        case SplitTag::Gallery: d.gallery.push_back(i); break;
        }
    }
    if (d.train.empty())
        throw ConfigError(path.string() + ": manifest has no train rows");
    return d;
}

// The model trained under `cfg` must fit the manifest's images and labels.
void check_dims(const RunConfig& cfg, const DatasetManifest& m)
{
    const auto& s = cfg.data.spec;
    auto desc = [](std::size_t c, std::size_t h, std::size_t w, std::size_t n, const std::vector<std::size_t>& card) {
        std::string out = "[" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) +
                          "], categories=" + std::to_string(n) + ", cardinalities=";
        for (std::size_t k = 0; k < card.size(); ++k)
            out += (k ? ":" : "") + std::to_string(card[k]);
        return out;
    };
    if (m.channels != 3 || m.height != s.height || m.width != s.width || m.num_categories != cfg.data.num_categories ||
        m.cardinalities != s.cardinalities)
        throw DimensionError("model expects " + desc(3, s.height, s.width, cfg.data.num_categories, s.cardinalities) +
                             " but manifest has " +
                             desc(m.channels, m.height, m.width, m.num_categories, m.cardinalities));
}

MetricsReport report_for(EvalMode mode, const A3MParams& params, const A3MConfig& model, const Dataset& d,
                         const std::vector<std::size_t>& pool, const RunConfig& cfg)
{
    switch (mode) {
    case EvalMode::Classify:
        // same report train writes
        return evaluate_report(params, model, d.samples, pool, cfg.eval.l2_normalize);
    case EvalMode::Reid:
        if (!d.query.empty() && !d.gallery.empty())
            return evaluate_reid(params, model, d.samples, d.query, d.gallery, cfg.eval.l2_normalize);
        else {
            // no query/gallery tags: leave-one-out over the pool
            MetricsReport rep = evaluate_report(params, model, d.samples, pool, cfg.eval.l2_normalize);
            MetricsReport out;
            out.mean_ap = rep.mean_ap;
            std::vector<std::size_t> ranks(kCmcRanks.begin(), kCmcRanks.end());
            const auto r = evaluate_retrieval(params, model, d.samples, pool, ranks, cfg.eval.l2_normalize);
            out.cmc = std::array<double, 4>{r.recall_at.at(1), r.recall_at.at(5), r.recall_at.at(10),
                                            r.recall_at.at(20)};
            return out;
        }
    case EvalMode::Retrieval:
        return evaluate_retrieval(params, model, d.samples, pool, cfg.eval.recall_ks, cfg.eval.l2_normalize);
    }
    return {};
}

std::string seconds(std::chrono::steady_clock::time_point t0)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f s",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return buf;
}

// --- gen -------------------------------------------------------------------

int cmd_gen(const Common& c)
{
    RunConfig cfg = load_config(c);
    if (c.seed) {
        cfg.data.spec.seed = *c.seed;
        cfg.sync();
    }
    cfg.validate();
    const fs::path out = prepare_out(c);
    const auto samples = generate(cfg.data.spec);
    const auto labels = category_labels(samples);
    std::vector<SplitTag> tags(samples.size(), SplitTag::Train);
    switch (cfg.data.split) {
    case EvalMode::Classify:
        for (auto i : split_classification(labels, cfg.data.split_ratio, cfg.data.spec.seed).test)
            tags[i] = SplitTag::Test;
        break;
    case EvalMode::Retrieval:
        for (auto i : split_retrieval(labels).test)
            tags[i] = SplitTag::Test;
        break;
    case EvalMode::Reid: {
        const auto s = split_reid(labels, cfg.data.queries_per_id);
        for (auto i : s.query)
            tags[i] = SplitTag::Query;
        for (auto i : s.gallery)
            tags[i] = SplitTag::Gallery;
        break;
    }
    }
    write_dataset(out, samples, tags, cfg.data.spec, cfg.data.num_categories, cfg.data.format);
    write_text(out / "config.ini", format_config(cfg));
    std::cout << "samples: " << samples.size() << "\ncategories: " << cfg.data.num_categories
              << "\nmanifest: " << (out / "manifest.csv").string() << '\n';
    return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::optional<std::string> variant;
    std::optional<double> alpha, beta;
};

void apply_model_flags(RunConfig& cfg, const TrainArgs& a)
{
    if (a.variant)
        apply_setting(cfg, "model.variant", *a.variant);
    if (a.alpha)
        cfg.model.alpha = *a.alpha;
    if (a.beta)
        cfg.model.beta = *a.beta;
}

int cmd_train(const Common& c, const TrainArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = load_dataset(a.data);
    RunConfig cfg = load_config(c, manifest_path(a.data).parent_path() / "config.ini");
    if (c.seed)
        cfg.train.seed = *c.seed;
    apply_model_flags(cfg, a);
    cfg.validate();
    check_dims(cfg, d.manifest);
    const A3MConfig model = config_for_manifest(d.manifest, cfg.model);
    const fs::path out = prepare_out(c);

    TrainHooks hooks;
    hooks.on_epoch = [&](std::size_t epoch, double loss) {
        std::cout << "epoch " << epoch + 1 << "/" << cfg.train.epochs << " loss " << format_double(loss) << '\n';
    };
    const TrainResult tr = train(model, d.samples, d.train, cfg.train, hooks);
    write_checkpoint(out / "checkpoint.a3m", tr.params);
    write_text(out / "loss_curve.csv", format_loss_curve(tr.epoch_loss));
    write_text(out / "config.ini", format_config(cfg));

    MetricsReport rep;
    if (!d.query.empty())
        rep = evaluate_reid(tr.params, model, d.samples, d.query, d.gallery, cfg.eval.l2_normalize);
    else if (!d.test.empty())
        rep = evaluate_report(tr.params, model, d.samples, d.test, cfg.eval.l2_normalize);
    write_text(out / "report.txt", rep.to_text());
    std::cout << rep.to_text() << "runtime: " << seconds(t0) << '\n';
    return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, data;
    std::optional<std::string> mode;
    std::string split = "test";
    std::optional<std::string> variant;
};

int cmd_eval(const Common& c, const EvalArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = load_dataset(a.data);
    const fs::path sibling = fs::path(a.checkpoint).parent_path() / "config.ini";
    RunConfig cfg = load_config(c, sibling);
    if (a.variant)
        apply_setting(cfg, "model.variant", *a.variant);
    if (a.mode)
        cfg.eval.mode = parse_eval_mode(*a.mode);
    cfg.validate();
    if (!c.config_path.empty() || fs::exists(sibling))
        check_dims(cfg, d.manifest);
    const A3MConfig model = config_for_manifest(d.manifest, cfg.model);
    const A3MParams params = read_checkpoint(a.checkpoint, model);

    std::vector<std::size_t> pool;
    if (a.split == "train")
        pool = d.train;
    else if (a.split == "test")
        pool = d.eval_pool();
    else if (a.split == "all")
        for (std::size_t i = 0; i < d.samples.size(); ++i)
            pool.push_back(i);
    else
        throw ConfigError("--split: expected train, test or all, got '" + a.split + "'");
    if (pool.empty())
        throw ConfigError("--split " + a.split + ": no samples");

    const MetricsReport rep = report_for(cfg.eval.mode, params, model, d, pool, cfg);
    if (!c.out.empty() && c.out != ".") {
        const fs::path out = prepare_out(c);
        write_text(out / ("eval_" + eval_mode_name(cfg.eval.mode) + ".txt"), rep.to_text());
    }
    std::cout << "mode: " << eval_mode_name(cfg.eval.mode) << '\n' << rep.to_text() << "runtime: " << seconds(t0)
              << '\n';
    return 0;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
    std::string data;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> variants;
};

std::vector<std::uint64_t> default_seeds(const Common& c, const RunConfig& cfg)
{
    const std::uint64_t first = c.seed.value_or(cfg.train.seed);
    return {first, first + 1, first + 2, first + 3, first + 4};
}

int cmd_ablate(const Common& c, const AblateArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = load_dataset(a.data);
    RunConfig cfg = load_config(c, manifest_path(a.data).parent_path() / "config.ini");
    cfg.validate();
    check_dims(cfg, d.manifest);
    const auto seeds = a.seeds.empty() ? default_seeds(c, cfg) : a.seeds;
    std::vector<Variant> variants;
    for (const auto& v : a.variants)
        variants.push_back(parse_variant(v));
    if (variants.empty())
        variants = all_variants();
    const A3MConfig model = config_for_manifest(d.manifest, cfg.model);
    const fs::path out = prepare_out(c);

    const auto result = run_ablation(d.samples, d.train, d.eval_pool(), model, cfg.train, seeds, variants,
                                     [&](Variant v, std::uint64_t seed, const A3MParams& p) {
                                         write_checkpoint(out / ("ckpt_" + std::string(variant_name(v)) + "_" +
                                                                 std::to_string(seed) + ".a3m"),
                                                          p);
                                         std::cout << variant_name(v) << " seed " << seed << " done ("
                                                   << seconds(t0) << ")\n";
                                     });
    write_text(out / "ablation.csv", result.to_csv());
    write_text(out / "config.ini", format_config(cfg));
    std::cout << result.to_csv() << "runtime: " << seconds(t0) << '\n';
    return 0;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
    std::string data;
    std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> betas{0.1, 0.3, 0.5, 0.7, 0.9};
    double tolerance = 0.05;
};

int cmd_sweep(const Common& c, const SweepArgs& a)
{
    const auto t0 = std::chrono::steady_clock::now();
    if (a.alphas.empty() || a.betas.empty())
        throw ConfigError("sweep: alpha and beta grids must be non-empty");
    const Dataset d = load_dataset(a.data);
    RunConfig cfg = load_config(c, manifest_path(a.data).parent_path() / "config.ini");
    if (c.seed)
        cfg.train.seed = *c.seed;
    cfg.validate();
    check_dims(cfg, d.manifest);
    const fs::path out = prepare_out(c);

    std::string csv = "alpha,beta,accuracy\n";
    double lo = 1.0, hi = 0.0;
    for (double alpha : a.alphas)
        for (double beta : a.betas) {
            RunConfig run = cfg;
            run.model.alpha = alpha;
            run.model.beta = beta;
            run.validate();
            const A3MConfig model = config_for_manifest(d.manifest, run.model);
            const TrainResult tr = train(model, d.samples, d.train, run.train);
            const double acc = evaluate_classification(tr.params, model, d.samples, d.eval_pool()).accuracy;
            write_checkpoint(out / ("ckpt_a" + format_double(alpha) + "_b" + format_double(beta) + ".a3m"),
                             tr.params);
            csv += format_double(alpha) + "," + format_double(beta) + "," + format_double(acc) + "\n";
            lo = std::min(lo, acc);
            hi = std::max(hi, acc);
            std::cout << "alpha " << format_double(alpha) << " beta " << format_double(beta) << " accuracy "
                      << format_double(acc) << " (" << seconds(t0) << ")\n";
        }
    write_text(out / "sweep.csv", csv);
    write_text(out / "config.ini", format_config(cfg));
    const double spread = hi - lo;
    char buf[160];
    std::snprintf(buf, sizeof buf, "spread: %.6f (max %.6f, min %.6f)\nflat: %s (soft, tolerance %.6f)\n", spread,
                  hi, lo, spread <= a.tolerance ? "yes" : "no", a.tolerance);
    write_text(out / "sweep_summary.txt", buf);
    std::cout << buf << "runtime: " << seconds(t0) << '\n';
    return 0;
}

// --- heatmap ---------------------------------------------------------------

struct HeatmapArgs {
    std::string checkpoint, data;
    std::optional<std::size_t> index;
    std::optional<std::string> variant;
};

int cmd_heatmap(const Common& c, const HeatmapArgs& a)
{
    const Dataset d = load_dataset(a.data);
    const fs::path sibling = fs::path(a.checkpoint).parent_path() / "config.ini";
    RunConfig cfg = load_config(c, sibling);
    if (a.variant)
        apply_setting(cfg, "model.variant", *a.variant);
    cfg.validate();
    if (!c.config_path.empty() || fs::exists(sibling))
        check_dims(cfg, d.manifest);
    if (cfg.model.variant == Variant::Baseline1)
        throw ConfigError("variant has no attention maps");
    const A3MConfig model = config_for_manifest(d.manifest, cfg.model);
    const A3MParams params = read_checkpoint(a.checkpoint, model);

    const auto pool = d.eval_pool();
    const std::size_t index = a.index ? *a.index : (pool.empty() ? 0 : pool.front());
    if (index >= d.samples.size())
        throw IndexError("--index " + std::to_string(index) + " out of range for " +
                         std::to_string(d.samples.size()) + " samples");
    const fs::path out = prepare_out(c);

    const AttentionState st = forward_full(d.samples[index].image, params, model);
    const auto [h, w] = model.feature_size();
    auto emit = [&](const std::string& name, const Tensor& mask) {
        const Vec m = mask.data();
        const RowMat grid = Eigen::Map<const RowMat>(m.data(), static_cast<Eigen::Index>(h),
                                                     static_cast<Eigen::Index>(w));
        write_text(out / ("attn_" + name + ".csv"), format_grid_csv(grid));
        const RowMat px = upsample_nearest(m, h, w, model.height, model.width);
        write_text(out / ("attn_" + name + ".pgm"), format_pgm(normalize_minmax(px)));
    };
    for (std::size_t k = 0; k < st.masks.size(); ++k)
        emit(d.manifest.attr_names.at(k), st.masks[k]);
    emit("region", st.region_mask);
    std::cout << "sample: " << index << " (" << d.manifest.rows[index].path << ")\ngrid: " << h << "x" << w
              << "\nmaps: " << st.masks.size() + 1 << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"a3m: attribute-attention experiments on synthetic data"};
    app.require_subcommand(1);

    Common common;
    TrainArgs train_args;
    EvalArgs eval_args;
    AblateArgs ablate_args;
    SweepArgs sweep_args;
    HeatmapArgs heatmap_args;

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset and manifest");
    add_common(gen, common);

    auto* trn = app.add_subcommand("train", "train one model");
    add_common(trn, common);
    trn->add_option("--data", train_args.data, "manifest file or dataset directory")->required();
    trn->add_option("--variant", train_args.variant, "a3m, baseline1, baseline2, att1, att2, noattrlabel");
    trn->add_option("--alpha", train_args.alpha, "weight of the category loss");
    trn->add_option("--beta", train_args.beta, "weight of the attribute loss");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev, common);
    ev->add_option("--checkpoint", eval_args.checkpoint)->required();
    ev->add_option("--data", eval_args.data, "manifest file or dataset directory")->required();
    ev->add_option("--mode", eval_args.mode, "classify, reid or retrieval");
    ev->add_option("--split", eval_args.split, "train, test or all");
    ev->add_option("--variant", eval_args.variant);

    auto* abl = app.add_subcommand("ablate", "train every variant for every seed");
    add_common(abl, common);
    abl->add_option("--data", ablate_args.data, "manifest file or dataset directory")->required();
    abl->add_option("--seeds", ablate_args.seeds, "seed list (default: 5 seeds from --seed)")->delimiter(',');
    abl->add_option("--variants", ablate_args.variants)->delimiter(',');

    auto* swp = app.add_subcommand("sweep", "alpha/beta grid at a fixed seed");
    add_common(swp, common);
    swp->add_option("--data", sweep_args.data, "manifest file or dataset directory")->required();
    swp->add_option("--alphas", sweep_args.alphas)->delimiter(',');
    swp->add_option("--betas", sweep_args.betas)->delimiter(',');
    swp->add_option("--tolerance", sweep_args.tolerance, "allowed max-min accuracy spread");

    auto* hm = app.add_subcommand("heatmap", "export attention maps for one sample");
    add_common(hm, common);
    hm->add_option("--checkpoint", heatmap_args.checkpoint)->required();
    hm->add_option("--data", heatmap_args.data, "manifest file or dataset directory")->required();
    hm->add_option("--index", heatmap_args.index, "manifest row (default: first evaluation row)");
    hm->add_option("--variant", heatmap_args.variant);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUser;
    }

    try {
        if (gen->parsed())
            return cmd_gen(common);
        if (trn->parsed())
            return cmd_train(common, train_args);
        if (ev->parsed())
            return cmd_eval(common, eval_args);
        if (abl->parsed())
            return cmd_ablate(common, ablate_args);
        if (swp->parsed())
            return cmd_sweep(common, sweep_args);
        if (hm->parsed())
            return cmd_heatmap(common, heatmap_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    }
    return kExitUser;
}
