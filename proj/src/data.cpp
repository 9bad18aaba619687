#include "a3m/data.hpp"

#include "a3m/errors.hpp"
#include "binary_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace a3m {

namespace {

constexpr std::array<std::array<double, 3>, 6> kPalette{{
    {1.0, 0.0, 0.0},
    {0.0, 1.0, 0.0},
    {0.0, 0.0, 1.0},
    {1.0, 1.0, 0.0},
    {1.0, 0.0, 1.0},
    {0.0, 1.0, 1.0},
}};

std::size_t ceil_sqrt(std::size_t n)
{
    std::size_t g = 1;
    while (g * g < n)
        ++g;
    return g;
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Pattern intensity in [0, 1] for channel `ch` at patch-local (u, v).
double pattern_value(PatternKind kind, std::size_t attribute, std::size_t value, std::size_t u, std::size_t v,
                     std::size_t pw, std::size_t ph, std::size_t ch)
{
    switch (kind) {
    case PatternKind::Color:
        return kPalette[(value + 3 * (attribute / 3)) % kPalette.size()][ch];
    case PatternKind::Stripes: {
        // Period 4: two lit lines, two dark.
        std::size_t t = 0;
        switch (value) {
        case 0:
            t = v;
            break;
        case 1:
            t = u;
            break;
        case 2:
            t = u + v;
            break;
        default:
            t = u + 4 * ph - v;
            break;
        }
        return t % 4 < 2 ? 1.0 : 0.0;
    }
    case PatternKind::Blobs: {
        // Blob slots: squares of half the patch side at the corners, filled in this order.
        const std::size_t bw = pw / 2, bh = ph / 2;
        const std::array<std::pair<std::size_t, std::size_t>, 4> slots{
            {{0, 0}, {pw - bw, ph - bh}, {pw - bw, 0}, {0, ph - bh}}};
        for (std::size_t b = 0; b <= value && b < slots.size(); ++b)
            if (u >= slots[b].first && u < slots[b].first + bw && v >= slots[b].second && v < slots[b].second + bh)
                return 1.0;
        return 0.0;
    }
    }
    return 0.0;
}

} // namespace

PatternKind pattern_kind(std::size_t attribute)
{
    switch (attribute % 3) {
    case 0:
        return PatternKind::Color;
    case 1:
        return PatternKind::Stripes;
    default:
        return PatternKind::Blobs;
    }
}

std::size_t max_values(PatternKind kind)
{
    switch (kind) {
    case PatternKind::Color:
        return kPalette.size();
    case PatternKind::Stripes:
    case PatternKind::Blobs:
        return 4;
    }
    return 0;
}

std::vector<std::string> attribute_names(std::size_t num_attributes)
{
    std::vector<std::string> names;
    for (std::size_t k = 0; k < num_attributes; ++k) {
        switch (pattern_kind(k)) {
        case PatternKind::Color:
            names.push_back("color" + std::to_string(k));
            break;
        case PatternKind::Stripes:
            names.push_back("stripes" + std::to_string(k));
            break;
        case PatternKind::Blobs:
            names.push_back("blobs" + std::to_string(k));
            break;
        }
    }
    return names;
}

Box attribute_region(std::size_t attribute, std::size_t num_attributes, std::size_t height, std::size_t width)
{
    const std::size_t cols = ceil_sqrt(num_attributes);
    const std::size_t rows = (num_attributes + cols - 1) / cols;
    const std::size_t cw = width / cols, ch = height / rows;
    return Box{(attribute % cols) * cw, (attribute / cols) * ch, cw, ch};
}

namespace {

std::pair<std::size_t, std::size_t> patch_size(const Box& region, double fraction)
{
    return {static_cast<std::size_t>(static_cast<double>(region.w) * fraction),
            static_cast<std::size_t>(static_cast<double>(region.h) * fraction)};
}

} // namespace

void SyntheticSpec::validate() const
{
    const std::size_t K = num_attributes();
    if (K == 0)
        throw ConfigError("data.cardinalities: need at least one attribute");
    for (std::size_t k = 0; k < K; ++k) {
        if (cardinalities[k] < 2)
            throw ConfigError("data.cardinalities: attribute " + std::to_string(k) + " needs at least 2 values");
        if (cardinalities[k] > max_values(pattern_kind(k)))
            throw ConfigError("data.cardinalities: attribute " + std::to_string(k) + " can render at most " +
                              std::to_string(max_values(pattern_kind(k))) + " values");
    }
    for (std::size_t k = 0; k < K; ++k) {
        auto [pw, ph] = patch_size(attribute_region(k, K, height, width), patch_fraction);
        if (pw < 4 || ph < 4)
            throw ConfigError("data.height/data.width: image too small for " + std::to_string(K) + " attributes");
    }
    if (categories.size() < 1)
        throw ConfigError("data.categories: codebook is empty");
    std::set<std::vector<std::size_t>> seen;
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const auto& tuple = categories[c];
        if (tuple.size() != K)
            throw ConfigError("data.categories: tuple " + std::to_string(c) + " has " + std::to_string(tuple.size()) +
                              " values, expected " + std::to_string(K));
        for (std::size_t k = 0; k < K; ++k)
            if (tuple[k] >= cardinalities[k])
                throw ConfigError("data.categories: tuple " + std::to_string(c) + " value " +
                                  std::to_string(tuple[k]) + " out of range for attribute " + std::to_string(k));
        if (!seen.insert(tuple).second)
            throw ConfigError("data.categories: duplicate codebook tuple at index " + std::to_string(c));
    }
    if (!(noise >= 0.0 && noise < 1.0))
        throw ConfigError("data.noise: must lie in [0, 1)");
    if (!(contrast > 0.0 && contrast <= 1.0))
        throw ConfigError("data.contrast: must lie in (0, 1]");
    if (!(patch_fraction > 0.0 && patch_fraction <= 1.0))
        throw ConfigError("data.patch_fraction: must lie in (0, 1]");
    if (samples_per_category == 0)
        throw ConfigError("data.samples_per_category: must be positive");
}

std::vector<std::vector<std::size_t>> full_codebook(const std::vector<std::size_t>& cardinalities)
{
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> tuple(cardinalities.size(), 0);
    if (cardinalities.empty())
        return out;
    while (true) {
        out.push_back(tuple);
        std::size_t k = cardinalities.size();
        while (k > 0) {
            --k;
            if (++tuple[k] < cardinalities[k])
                break;
            tuple[k] = 0;
            if (k == 0)
                return out;
        }
    }
}

std::vector<std::vector<std::size_t>> sample_codebook(const std::vector<std::size_t>& cardinalities,
                                                      std::size_t count, std::uint64_t seed)
{
    auto all = full_codebook(cardinalities);
    if (count < 2 || count > all.size())
        throw ConfigError("data.categories: need between 2 and " + std::to_string(all.size()) +
                          " categories, got " + std::to_string(count));
    Rng rng = Rng(seed).fork(0xc0deb00c);
    rng.shuffle(std::span<std::vector<std::size_t>>(all));
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

SyntheticSpec default_spec(std::uint64_t seed)
{
    SyntheticSpec spec;
    spec.seed = seed;
    spec.categories = sample_codebook(spec.cardinalities, 24, seed);
    return spec;
}

SyntheticSample render_sample(const SyntheticSpec& spec, std::size_t category, Rng& rng, bool background)
{
    const std::size_t K = spec.num_attributes();
    const std::size_t H = spec.height, W = spec.width;
    SyntheticSample s;
    s.category = category;
    s.attr_labels = spec.categories.at(category);
    s.image = Tensor::zeros({3, H, W});

    std::vector<double> brightness(K, 1.0);
    for (std::size_t k = 0; k < K; ++k) {
        const Box region = attribute_region(k, K, H, W);
        auto [pw, ph] = patch_size(region, spec.patch_fraction);
        const std::size_t spread_x = std::min(spec.max_shift, region.w - pw);
        const std::size_t spread_y = std::min(spec.max_shift, region.h - ph);
        std::size_t ox = (region.w - pw - spread_x) / 2, oy = (region.h - ph - spread_y) / 2;
        if (spec.jitter) {
            ox += rng.index(spread_x + 1);
            oy += rng.index(spread_y + 1);
            brightness[k] = rng.uniform(0.75, 1.0);
        }
        s.attr_boxes.push_back(Box{region.x + ox, region.y + oy, pw, ph});
    }

    Vec& px = s.image.data();
    if (background) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(px.size()); ++i)
            px[idx(i)] = 0.5 + spec.noise * rng.uniform(-1.0, 1.0);
    }
    for (std::size_t k = 0; k < K; ++k) {
        const Box& box = s.attr_boxes[k];
        const PatternKind kind = pattern_kind(k);
        for (std::size_t v = 0; v < box.h; ++v)
            for (std::size_t u = 0; u < box.w; ++u)
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    const double p = pattern_value(kind, k, s.attr_labels[k], u, v, box.w, box.h, ch);
                    const double evidence = 0.5 + spec.contrast * brightness[k] * (p - 0.5);
                    const auto i = idx((ch * H + box.y + v) * W + box.x + u);
                    // Noise already in px is kept on top of the pattern.
                    px[i] = background ? evidence + (px[i] - 0.5) : evidence;
                }
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(px.size()); ++i)
        px[idx(i)] = std::clamp(px[idx(i)], 0.0, 1.0);
    return s;
}

std::vector<SyntheticSample> generate(const SyntheticSpec& spec)
{
    spec.validate();
    std::vector<SyntheticSample> out;
    out.reserve(spec.categories.size() * spec.samples_per_category);
    const Rng root(spec.seed);
    for (std::size_t c = 0; c < spec.categories.size(); ++c) {
        Rng rng = root.fork(c + 1);
        for (std::size_t i = 0; i < spec.samples_per_category; ++i) {
            out.push_back(render_sample(spec, c, rng));
            out.back().id = out.size() - 1;
        }
    }
    return out;
}

std::vector<std::size_t> category_labels(const std::vector<SyntheticSample>& samples)
{
    std::vector<std::size_t> labels;
    labels.reserve(samples.size());
    for (const auto& s : samples)
        labels.push_back(s.category);
    return labels;
}

namespace {

std::map<std::size_t, std::vector<std::size_t>> group_by_label(const std::vector<std::size_t>& labels)
{
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i)
        groups[labels[i]].push_back(i);
    return groups;
}

} // namespace

ClassificationSplit split_classification(const std::vector<std::size_t>& labels, double ratio, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ConfigError("split ratio must lie in (0, 1)");
    ClassificationSplit split;
    Rng rng = Rng(seed).fork(0x5b117);
    for (auto& [label, members] : group_by_label(labels)) {
        if (members.size() < 2)
            throw ConfigError("category " + std::to_string(label) + " has fewer than 2 samples");
        rng.shuffle(std::span<std::size_t>(members));
        auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(members.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<long>(n_train));
        split.test.insert(split.test.end(), members.begin() + static_cast<long>(n_train), members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

RetrievalSplit split_retrieval(const std::vector<std::size_t>& labels)
{
    auto groups = group_by_label(labels);
    if (groups.size() < 2)
        throw ConfigError("retrieval split needs at least 2 categories");
    RetrievalSplit split;
    const std::size_t n_train = groups.size() / 2;
    std::size_t rank = 0;
    for (const auto& [label, members] : groups) {
        auto& classes = rank < n_train ? split.train_classes : split.test_classes;
        auto& rows = rank < n_train ? split.train : split.test;
        classes.push_back(label);
        rows.insert(rows.end(), members.begin(), members.end());
        ++rank;
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

ReidSplit split_reid(const std::vector<std::size_t>& labels, std::size_t queries_per_id)
{
    auto groups = group_by_label(labels);
    if (groups.size() < 2)
        throw ConfigError("re-id split needs at least 2 identities");
    for (const auto& [label, members] : groups)
        if (members.size() <= queries_per_id)
            throw ConfigError("identity " + std::to_string(label) + " has " + std::to_string(members.size()) +
                              " samples; needs more than " + std::to_string(queries_per_id));
    ReidSplit split;
    const std::size_t n_train = groups.size() / 2;
    std::size_t rank = 0;
    for (const auto& [label, members] : groups) {
        if (rank++ < n_train) {
            split.train_ids.push_back(label);
            split.train.insert(split.train.end(), members.begin(), members.end());
            continue;
        }
        split.test_ids.push_back(label);
        split.query.insert(split.query.end(), members.begin(), members.begin() + static_cast<long>(queries_per_id));
        split.gallery.insert(split.gallery.end(), members.begin() + static_cast<long>(queries_per_id),
                             members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.query.begin(), split.query.end());
    std::sort(split.gallery.begin(), split.gallery.end());
    return split;
}

std::string split_tag_name(SplitTag tag)
{
    switch (tag) {
    case SplitTag::Train:
        return "train";
    case SplitTag::Test:
        return "test";
    case SplitTag::Query:
        return "query";
    case SplitTag::Gallery:
        return "gallery";
    }
    return "train";
}

SplitTag parse_split_tag(const std::string& name)
{
    for (SplitTag t : {SplitTag::Train, SplitTag::Test, SplitTag::Query, SplitTag::Gallery})
        if (split_tag_name(t) == name)
            return t;
    throw ParseError("unknown split tag '" + name + "'");
}

// ---------------------------------------------------------------------------
// Manifest text format

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::size_t parse_uint(const std::string& s, const std::string& where)
{
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(where + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

std::string format_box(const std::optional<Box>& box)
{
    if (!box)
        return "";
    return std::to_string(box->x) + ":" + std::to_string(box->y) + ":" + std::to_string(box->w) + ":" +
           std::to_string(box->h);
}

std::optional<Box> parse_box(const std::string& s, const std::string& where)
{
    if (s.empty())
        return std::nullopt;
    auto parts = split_fields(s, ':');
    if (parts.size() != 4)
        throw ParseError(where + ": box must be x:y:w:h, got '" + s + "'");
    return Box{parse_uint(parts[0], where), parse_uint(parts[1], where), parse_uint(parts[2], where),
               parse_uint(parts[3], where)};
}

} // namespace

std::string format_manifest(const DatasetManifest& m)
{
    std::ostringstream os;
    const std::size_t K = m.num_attributes();
    os << "#A3M-MANIFEST v1,K=" << K << '\n';
    os << "#image," << m.channels << ',' << m.height << ',' << m.width << '\n';
    os << "#categories," << m.num_categories << '\n';
    for (std::size_t k = 0; k < K; ++k)
        os << "#attr," << m.attr_names.at(k) << ',' << m.cardinalities[k] << '\n';
    os << "path,split,category";
    for (const auto& name : m.attr_names)
        os << ',' << name;
    for (const auto& name : m.attr_names)
        os << ",box_" << name;
    os << '\n';
    for (const auto& row : m.rows) {
        if (row.path.find_first_of(",\n") != std::string::npos)
            throw ConfigError("manifest path may not contain ',' or newlines: " + row.path);
        os << row.path << ',' << split_tag_name(row.split) << ',' << row.category;
        for (auto a : row.attrs)
            os << ',' << a;
        for (const auto& b : row.boxes)
            os << ',' << format_box(b);
        os << '\n';
    }
    return os.str();
}

DatasetManifest parse_manifest(const std::string& text, const std::string& origin)
{
    std::vector<std::string> lines = split_fields(text, '\n');
    if (!lines.empty() && lines.back().empty())
        lines.pop_back();
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r')
            l.pop_back();
    auto where = [&origin](std::size_t line_no) { return origin + ":" + std::to_string(line_no); };

    DatasetManifest m;
    if (lines.empty() || lines[0].rfind("#A3M-MANIFEST v1,K=", 0) != 0)
        throw ParseError(where(1) + ": missing '#A3M-MANIFEST v1,K=<k>' header");
    const std::size_t K = parse_uint(lines[0].substr(std::string("#A3M-MANIFEST v1,K=").size()), where(1));

    std::size_t li = 1;
    bool have_image = false, have_categories = false;
    for (; li < lines.size() && !lines[li].empty() && lines[li][0] == '#'; ++li) {
        auto f = split_fields(lines[li], ',');
        if (f[0] == "#image" && f.size() == 4) {
            m.channels = parse_uint(f[1], where(li + 1));
            m.height = parse_uint(f[2], where(li + 1));
            m.width = parse_uint(f[3], where(li + 1));
            have_image = true;
        } else if (f[0] == "#categories" && f.size() == 2) {
            m.num_categories = parse_uint(f[1], where(li + 1));
            have_categories = true;
        } else if (f[0] == "#attr" && f.size() == 3) {
            m.attr_names.push_back(f[1]);
            m.cardinalities.push_back(parse_uint(f[2], where(li + 1)));
        } else {
            throw ParseError(where(li + 1) + ": unrecognized header line '" + lines[li] + "'");
        }
    }
    if (!have_image || !have_categories)
        throw ParseError(where(li) + ": header must declare #image and #categories");
    if (m.cardinalities.size() != K)
        throw ParseError(where(li) + ": header declares K=" + std::to_string(K) + " but lists " +
                         std::to_string(m.cardinalities.size()) + " attributes");

    if (li >= lines.size())
        throw ParseError(where(li + 1) + ": missing column header");
    const std::size_t n_fields = 3 + 2 * K;
    if (split_fields(lines[li], ',').size() != n_fields)
        throw ParseError(where(li + 1) + ": column header must have " + std::to_string(n_fields) + " fields");
    ++li;

    for (; li < lines.size(); ++li) {
        const std::string w = where(li + 1);
        auto f = split_fields(lines[li], ',');
        if (f.size() != n_fields)
            throw ParseError(w + ": expected " + std::to_string(n_fields) + " fields, got " +
                             std::to_string(f.size()));
        ManifestRow row;
        row.path = f[0];
        if (row.path.empty())
            throw ParseError(w + ": empty image path");
        try {
            row.split = parse_split_tag(f[1]);
        } catch (const ParseError& e) {
            throw ParseError(w + ": " + e.what());
        }
        row.category = parse_uint(f[2], w);
        if (row.category >= m.num_categories)
            throw ParseError(w + ": category " + std::to_string(row.category) + " >= " +
                             std::to_string(m.num_categories));
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t a = parse_uint(f[3 + k], w);
            if (a >= m.cardinalities[k])
                throw ParseError(w + ": attribute " + m.attr_names[k] + " label " + std::to_string(a) +
                                 " >= cardinality " + std::to_string(m.cardinalities[k]));
            row.attrs.push_back(a);
        }
        for (std::size_t k = 0; k < K; ++k) {
            auto box = parse_box(f[3 + K + k], w);
            if (box && (box->x + box->w > m.width || box->y + box->h > m.height))
                throw ParseError(w + ": box " + f[3 + K + k] + " leaves the image");
            row.boxes.push_back(box);
        }
        m.rows.push_back(std::move(row));
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest)
{
    detail::write_file(path, format_manifest(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& path)
{
    DatasetManifest m = parse_manifest(detail::read_file(path), path.string());
    const auto base = path.parent_path();
    for (const auto& row : m.rows)
        if (!std::filesystem::exists(base / row.path))
            throw IoError("manifest " + path.string() + " references missing file " + (base / row.path).string());
    return m;
}

// ---------------------------------------------------------------------------
// Images

void write_image(const std::filesystem::path& path, const Tensor& image, ImageFormat format)
{
    if (image.rank() != 3)
        throw DimensionError("write_image: expected [C x H x W], got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    std::string bytes;
    if (format == ImageFormat::Binary) {
        bytes = "IMG1";
        detail::put_u32_le(bytes, static_cast<std::uint32_t>(C));
        detail::put_u32_le(bytes, static_cast<std::uint32_t>(H));
        detail::put_u32_le(bytes, static_cast<std::uint32_t>(W));
        for (std::size_t i = 0; i < image.size(); ++i)
            detail::put_f64_le(bytes, image[i]);
    } else {
        if (C != 3)
            throw DimensionError("write_image: PPM needs 3 channels, got " + shape_str(image.shape()));
        bytes = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = std::clamp(image[(c * H + y) * W + x], 0.0, 1.0);
                    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
                }
    }
    detail::write_file(path, bytes);
}

Tensor read_image(const std::filesystem::path& path)
{
    const std::string bytes = detail::read_file(path);
    if (path.extension() == ".ppm") {
        std::istringstream is(bytes);
        std::string magic;
        std::size_t W = 0, H = 0, maxval = 0;
        is >> magic >> W >> H >> maxval;
        if (magic != "P6" || !is || maxval != 255 || W == 0 || H == 0)
            throw ParseError(path.string() + ": unsupported PPM header");
        is.get();
        const auto offset = static_cast<std::size_t>(is.tellg());
        if (bytes.size() < offset + 3 * W * H)
            throw ParseError(path.string() + ": truncated PPM payload");
        Tensor img({3, H, W});
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    img[(c * H + y) * W + x] =
                        static_cast<unsigned char>(bytes[offset + (y * W + x) * 3 + c]) / 255.0;
        return img;
    }
    if (bytes.size() < 16 || bytes.compare(0, 4, "IMG1") != 0)
        throw ParseError(path.string() + ": not an IMG1 image");
    const std::size_t C = detail::get_u32_le(bytes, 4), H = detail::get_u32_le(bytes, 8),
                      W = detail::get_u32_le(bytes, 12);
    if (C == 0 || H == 0 || W == 0 || bytes.size() != 16 + 8 * C * H * W)
        throw ParseError(path.string() + ": IMG1 payload does not match its dimensions");
    Tensor img({C, H, W});
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = detail::get_f64_le(bytes, 16 + 8 * i);
    return img;
}

DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                              const std::vector<SplitTag>& tags, const SyntheticSpec& spec,
                              std::size_t num_categories, ImageFormat format)
{
    if (tags.size() != samples.size())
        throw DimensionError("write_dataset: one split tag per sample required");
    DatasetManifest m;
    m.channels = 3;
    m.height = spec.height;
    m.width = spec.width;
    m.num_categories = num_categories;
    m.attr_names = attribute_names(spec.num_attributes());
    m.cardinalities = spec.cardinalities;
    const std::string ext = format == ImageFormat::Ppm ? ".ppm" : ".img";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu", i);
        ManifestRow row;
        row.path = std::string("images/") + name + ext;
        row.split = tags[i];
        row.category = samples[i].category;
        row.attrs = samples[i].attr_labels;
        for (const auto& b : samples[i].attr_boxes)
            row.boxes.emplace_back(b);
        write_image(dir / row.path, samples[i].image, format);
        m.rows.push_back(std::move(row));
    }
    write_manifest(dir / "manifest.csv", m);
    return m;
}

std::vector<SyntheticSample> load_samples(const DatasetManifest& manifest, const std::filesystem::path& manifest_path)
{
    std::vector<SyntheticSample> out;
    out.reserve(manifest.rows.size());
    const auto base = manifest_path.parent_path();
    const Shape expected{manifest.channels, manifest.height, manifest.width};
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
        const auto& row = manifest.rows[i];
        SyntheticSample s;
        s.image = read_image(base / row.path);
        if (s.image.shape() != expected)
            throw DimensionError((base / row.path).string() + ": image " + shape_str(s.image.shape()) +
                                 " does not match manifest " + shape_str(expected));
        s.category = row.category;
        s.attr_labels = row.attrs;
        for (const auto& b : row.boxes)
            s.attr_boxes.push_back(b.value_or(Box{}));
        s.id = i;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace a3m
