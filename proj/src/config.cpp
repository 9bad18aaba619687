#include "a3m/config.hpp"

#include "a3m/errors.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace a3m {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected)
{
    throw ConfigError(std::string(key) + ": '" + std::string(value) + "' is not " + std::string(expected));
}

std::uint64_t to_u64(std::string_view key, std::string_view value)
{
    const std::string v = trim(value);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
        bad_value(key, value, "a non-negative integer");
    return out;
}

std::size_t to_size(std::string_view key, std::string_view value)
{
    return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(std::string_view key, std::string_view value)
{
    const std::string v = trim(value);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        bad_value(key, value, "a finite number");
    return out;
}

bool to_bool(std::string_view key, std::string_view value)
{
    const std::string v = lower(trim(value));
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    bad_value(key, value, "a boolean");
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::size_t> to_size_list(std::string_view key, std::string_view value)
{
    std::vector<std::size_t> out;
    for (const auto& item : split(value, ','))
        out.push_back(to_size(key, item));
    return out;
}

std::vector<ConvSpec> to_backbone(std::string_view key, std::string_view value)
{
    std::vector<ConvSpec> out;
    for (const auto& layer : split(value, ',')) {
        const auto f = split(layer, ':');
        if (f.size() != 4)
            bad_value(key, layer, "a layer of the form out:kernel:stride:padding");
        out.push_back(ConvSpec{to_size(key, f[0]), to_size(key, f[1]), to_size(key, f[2]), to_size(key, f[3])});
    }
    return out;
}

// "0:1:0:1,2:0:1:0"
std::vector<std::vector<std::size_t>> to_codebook(std::string_view key, std::string_view value)
{
    std::vector<std::vector<std::size_t>> out;
    for (const auto& tuple : split(value, ',')) {
        std::vector<std::size_t> t;
        for (const auto& v : split(tuple, ':'))
            t.push_back(to_size(key, v));
        out.push_back(std::move(t));
    }
    return out;
}

std::string fmt(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out += (i ? "," : "") + std::to_string(values[i]);
    return out;
}

std::string format_name(ImageFormat f) { return f == ImageFormat::Ppm ? "ppm" : "img"; }

} // namespace

std::string eval_mode_name(EvalMode mode)
{
    switch (mode) {
    case EvalMode::Classify:
        return "classify";
    case EvalMode::Reid:
        return "reid";
    case EvalMode::Retrieval:
        return "retrieval";
    }
    return "classify";
}

EvalMode parse_eval_mode(std::string_view name)
{
    const std::string n = lower(trim(name));
    if (n == "classify")
        return EvalMode::Classify;
    if (n == "reid")
        return EvalMode::Reid;
    if (n == "retrieval")
        return EvalMode::Retrieval;
    throw ConfigError("unknown mode '" + std::string(name) + "' (expected classify, reid or retrieval)");
}

void RunConfig::sync()
{
    if (data.codebook.empty()) {
        data.spec.categories = sample_codebook(data.spec.cardinalities, data.num_categories, data.spec.seed);
    } else {
        data.spec.categories = data.codebook;
        data.num_categories = data.codebook.size();
    }
    model.channels = 3;
    model.height = data.spec.height;
    model.width = data.spec.width;
    model.num_categories = data.num_categories;
    model.attr_cardinalities = data.spec.cardinalities;
}

void RunConfig::validate() const
{
    data.spec.validate();
    if (!(data.split_ratio > 0.0 && data.split_ratio < 1.0))
        throw ConfigError("data.split_ratio: must lie in (0, 1)");
    if (data.queries_per_id == 0)
        throw ConfigError("data.queries_per_id: must be positive");
    if (data.queries_per_id >= data.spec.samples_per_category)
        throw ConfigError("data.queries_per_id: must leave at least one gallery sample per identity");
    model.validate();
    train.validate();
    if (eval.recall_ks.empty() || std::find(eval.recall_ks.begin(), eval.recall_ks.end(), 0u) != eval.recall_ks.end())
        throw ConfigError("eval.recall_ks: need one or more positive ranks");
}

RunConfig default_run_config()
{
    RunConfig c;
    c.sync();
    return c;
}

void apply_setting(RunConfig& c, std::string_view raw_key, std::string_view value)
{
    const std::string key = lower(trim(raw_key));
    auto& s = c.data.spec;
    if (key == "data.cardinalities")
        s.cardinalities = to_size_list(key, value);
    else if (key == "data.categories")
        c.data.num_categories = to_size(key, value);
    else if (key == "data.codebook")
        c.data.codebook = to_codebook(key, value);
    else if (key == "data.height")
        s.height = to_size(key, value);
    else if (key == "data.width")
        s.width = to_size(key, value);
    else if (key == "data.noise")
        s.noise = to_double(key, value);
    else if (key == "data.contrast")
        s.contrast = to_double(key, value);
    else if (key == "data.patch_fraction")
        s.patch_fraction = to_double(key, value);
    else if (key == "data.max_shift")
        s.max_shift = to_size(key, value);
    else if (key == "data.samples_per_category")
        s.samples_per_category = to_size(key, value);
    else if (key == "data.seed")
        s.seed = to_u64(key, value);
    else if (key == "data.jitter")
        s.jitter = to_bool(key, value);
    else if (key == "data.split")
        c.data.split = parse_eval_mode(value);
    else if (key == "data.split_ratio")
        c.data.split_ratio = to_double(key, value);
    else if (key == "data.queries_per_id")
        c.data.queries_per_id = to_size(key, value);
    else if (key == "data.format") {
        const std::string f = lower(trim(value));
        if (f != "img" && f != "ppm")
            bad_value(key, value, "img or ppm");
        c.data.format = f == "ppm" ? ImageFormat::Ppm : ImageFormat::Binary;
    } else if (key == "model.d")
        c.model.d = to_size(key, value);
    else if (key == "model.alpha")
        c.model.alpha = to_double(key, value);
    else if (key == "model.beta")
        c.model.beta = to_double(key, value);
    else if (key == "model.variant") {
        try {
            c.model.variant = parse_variant(trim(value));
        } catch (const std::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
    } else if (key == "model.branch_relu")
        c.model.branch_relu = to_bool(key, value);
    else if (key == "model.backbone")
        c.model.backbone = to_backbone(key, value);
    else if (key == "train.epochs")
        c.train.epochs = to_size(key, value);
    else if (key == "train.batch_size")
        c.train.batch_size = to_size(key, value);
    else if (key == "train.lr")
        c.train.learning_rate = to_double(key, value);
    else if (key == "train.lr_drop_factor")
        c.train.lr_drop_factor = to_double(key, value);
    else if (key == "train.lr_drop_epoch")
        c.train.lr_drop_epoch = to_size(key, value);
    else if (key == "train.momentum")
        c.train.momentum = to_double(key, value);
    else if (key == "train.weight_decay")
        c.train.weight_decay = to_double(key, value);
    else if (key == "train.seed")
        c.train.seed = to_u64(key, value);
    else if (key == "train.random_flip")
        c.train.random_flip = to_bool(key, value);
    else if (key == "train.crop_pad")
        c.train.crop_pad = to_size(key, value);
    else if (key == "eval.mode")
        c.eval.mode = parse_eval_mode(value);
    else if (key == "eval.l2_normalize")
        c.eval.l2_normalize = to_bool(key, value);
    else if (key == "eval.recall_ks")
        c.eval.recall_ks = to_size_list(key, value);
    else
        throw ConfigError("unknown config key '" + std::string(raw_key) + "'");
}

void apply_override(RunConfig& config, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty())
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
    apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
    config.sync();
}

RunConfig parse_config(std::string_view text, std::string_view origin)
{
    RunConfig c;
    std::istringstream in{std::string(text)};
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    }
    for (const auto& item : items) {
        if (item.name == "--" || item.name == "++")
            continue; // section markers
        if (item.parents.size() != 1)
            throw ConfigError(std::string(origin) + ": key '" + item.fullname() +
                              "' must sit in one of [data], [model], [train], [eval]");
        std::string value;
        for (std::size_t i = 0; i < item.inputs.size(); ++i)
            value += (i ? "," : "") + item.inputs[i];
        try {
            apply_setting(c, item.fullname(), value);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(origin) + ": " + e.what());
        }
    }
    c.sync();
    return c;
}

RunConfig read_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string format_config(const RunConfig& c)
{
    const auto& s = c.data.spec;
    std::ostringstream os;
    os << "[data]\n"
       << "cardinalities = " << join(s.cardinalities) << '\n'
       << "categories = " << c.data.num_categories << '\n';
    if (!c.data.codebook.empty()) {
        os << "codebook = ";
        for (std::size_t i = 0; i < c.data.codebook.size(); ++i) {
            os << (i ? "," : "");
            for (std::size_t k = 0; k < c.data.codebook[i].size(); ++k)
                os << (k ? ":" : "") << c.data.codebook[i][k];
        }
        os << '\n';
    }
    os
       << "height = " << s.height << '\n'
       << "width = " << s.width << '\n'
       << "noise = " << fmt(s.noise) << '\n'
       << "contrast = " << fmt(s.contrast) << '\n'
       << "patch_fraction = " << fmt(s.patch_fraction) << '\n'
       << "max_shift = " << s.max_shift << '\n'
       << "samples_per_category = " << s.samples_per_category << '\n'
       << "seed = " << s.seed << '\n'
       << "jitter = " << (s.jitter ? "true" : "false") << '\n'
       << "split = " << eval_mode_name(c.data.split) << '\n'
       << "split_ratio = " << fmt(c.data.split_ratio) << '\n'
       << "queries_per_id = " << c.data.queries_per_id << '\n'
       << "format = " << format_name(c.data.format) << "\n\n";
    std::string backbone;
    for (std::size_t i = 0; i < c.model.backbone.size(); ++i) {
        const auto& l = c.model.backbone[i];
        backbone += (i ? "," : "") + std::to_string(l.out_channels) + ":" + std::to_string(l.kernel) + ":" +
                    std::to_string(l.stride) + ":" + std::to_string(l.padding);
    }
    os << "[model]\n"
       << "variant = " << variant_name(c.model.variant) << '\n'
       << "d = " << c.model.d << '\n'
       << "alpha = " << fmt(c.model.alpha) << '\n'
       << "beta = " << fmt(c.model.beta) << '\n'
       << "branch_relu = " << (c.model.branch_relu ? "true" : "false") << '\n'
       << "backbone = " << backbone << "\n\n";
    os << "[train]\n"
       << "epochs = " << c.train.epochs << '\n'
       << "batch_size = " << c.train.batch_size << '\n'
       << "lr = " << fmt(c.train.learning_rate) << '\n'
       << "lr_drop_factor = " << fmt(c.train.lr_drop_factor) << '\n'
       << "lr_drop_epoch = " << c.train.lr_drop_epoch << '\n'
       << "momentum = " << fmt(c.train.momentum) << '\n'
       << "weight_decay = " << fmt(c.train.weight_decay) << '\n'
       << "seed = " << c.train.seed << '\n'
       << "random_flip = " << (c.train.random_flip ? "true" : "false") << '\n'
       << "crop_pad = " << c.train.crop_pad << "\n\n";
    os << "[eval]\n"
       << "mode = " << eval_mode_name(c.eval.mode) << '\n'
       << "l2_normalize = " << (c.eval.l2_normalize ? "true" : "false") << '\n'
       << "recall_ks = " << join(c.eval.recall_ks) << '\n';
    return os.str();
}

} // namespace a3m
