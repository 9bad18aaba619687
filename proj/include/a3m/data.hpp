#pragma once

#include "a3m/rng.hpp"
#include "a3m/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace a3m {

/// Axis-aligned pixel box [x, x+w) x [y, y+h).
struct Box {
    std::size_t x = 0, y = 0, w = 0, h = 0;

    std::size_t area() const { return w * h; }
    bool contains(double px, double py) const
    {
        return px >= static_cast<double>(x) && px < static_cast<double>(x + w) && py >= static_cast<double>(y) &&
               py < static_cast<double>(y + h);
    }
    bool operator==(const Box&) const = default;
};

/// Visual cue used to render an attribute's values.
enum class PatternKind { Color, Stripes, Blobs };
PatternKind pattern_kind(std::size_t attribute);
/// Largest cardinality a pattern kind can render distinctly.
std::size_t max_values(PatternKind kind);

struct SyntheticSpec {
    std::vector<std::size_t> cardinalities{3, 3, 2, 2};
    std::size_t height = 16;
    std::size_t width = 16;
    /// Category codebook: one attribute-value tuple per category.
    std::vector<std::vector<std::size_t>> categories;
    double noise = 0.05;
    /// Amplitude of the attribute patterns around mid-gray, in (0, 1].
    double contrast = 1.0;
    /// Side of each attribute patch relative to its region.
    double patch_fraction = 0.75;
    /// Largest jitter offset spread in pixels (clipped to the region slack).
    std::size_t max_shift = 2;
    std::size_t samples_per_category = 40;
    std::uint64_t seed = 0;
    /// Per-sample translation of each pattern inside its region and
    /// brightness scaling.
    bool jitter = true;

    std::size_t num_attributes() const { return cardinalities.size(); }
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Every attribute-value tuple in lexicographic order.
std::vector<std::vector<std::size_t>> full_codebook(const std::vector<std::size_t>& cardinalities);

/// `count` distinct tuples drawn with `seed`, sorted lexicographically.
std::vector<std::vector<std::size_t>> sample_codebook(const std::vector<std::size_t>& cardinalities,
                                                      std::size_t count, std::uint64_t seed);

/// The default toy benchmark: 4 attributes with cardinalities (3,3,2,2),
/// 24 of the 36 possible tuples drawn with `seed`, 16x16 images,
/// 40 samples per category, noise 0.05.
SyntheticSpec default_spec(std::uint64_t seed = 0);

/// Names used in manifests and heatmap file names, e.g. "color0".
std::vector<std::string> attribute_names(std::size_t num_attributes);

struct SyntheticSample {
    Tensor image; // [3 x H x W], values in [0, 1]
    std::size_t category = 0;
    std::vector<std::size_t> attr_labels;
    std::vector<Box> attr_boxes;
    std::size_t id = 0;
};

/// Region of the image reserved for attribute k (patterns are jittered
/// inside it).
Box attribute_region(std::size_t attribute, std::size_t num_attributes, std::size_t height, std::size_t width);

/// Deterministic in spec.seed; samples are ordered by category, then by
/// index within the category.
std::vector<SyntheticSample> generate(const SyntheticSpec& spec);

/// Renders one sample. With `background` false, every pixel outside the
/// attribute boxes is exactly zero and no noise is added.
SyntheticSample render_sample(const SyntheticSpec& spec, std::size_t category, Rng& rng, bool background = true);

std::vector<std::size_t> category_labels(const std::vector<SyntheticSample>& samples);

struct ClassificationSplit {
    std::vector<std::size_t> train, test;
};
/// Stratified per category: round(ratio * n) samples of each category go to
/// train (at least one on each side).
ClassificationSplit split_classification(const std::vector<std::size_t>& labels, double ratio, std::uint64_t seed);

struct RetrievalSplit {
    std::vector<std::size_t> train_classes, test_classes;
    std::vector<std::size_t> train, test;
};
/// The first half of the sorted distinct categories trains, the rest test.
RetrievalSplit split_retrieval(const std::vector<std::size_t>& labels);

struct ReidSplit {
    std::vector<std::size_t> train_ids, test_ids;
    std::vector<std::size_t> train, query, gallery;
};
/// Identities split as in split_retrieval; the first `queries_per_id`
/// samples of each test identity become queries, the rest gallery.
ReidSplit split_reid(const std::vector<std::size_t>& labels, std::size_t queries_per_id);

enum class SplitTag { Train, Test, Query, Gallery };
std::string split_tag_name(SplitTag tag);
SplitTag parse_split_tag(const std::string& name);

struct ManifestRow {
    std::string path; // relative to the manifest directory
    SplitTag split = SplitTag::Train;
    std::size_t category = 0;
    std::vector<std::size_t> attrs;
    std::vector<std::optional<Box>> boxes;

    bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
    std::size_t channels = 3, height = 16, width = 16;
    std::size_t num_categories = 0;
    std::vector<std::string> attr_names;
    std::vector<std::size_t> cardinalities;
    std::vector<ManifestRow> rows;

    std::size_t num_attributes() const { return cardinalities.size(); }
    bool operator==(const DatasetManifest&) const = default;
};

std::string format_manifest(const DatasetManifest& manifest);
/// Parses manifest text; `origin` prefixes error messages.
DatasetManifest parse_manifest(const std::string& text, const std::string& origin = "manifest");
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Parses and validates, including that every referenced image exists.
DatasetManifest read_manifest(const std::filesystem::path& path);

enum class ImageFormat { Binary, Ppm };

/// "IMG1", u32 C, H, W, then float64 values, all little-endian.
void write_image(const std::filesystem::path& path, const Tensor& image, ImageFormat format);
/// Format chosen from the extension: ".ppm" (8-bit P6) or anything else (IMG1).
Tensor read_image(const std::filesystem::path& path);

/// Writes images under `dir/images/` and `dir/manifest.csv`; returns the
/// manifest. `tags[i]` is the split of samples[i].
DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                              const std::vector<SplitTag>& tags, const SyntheticSpec& spec,
                              std::size_t num_categories, ImageFormat format = ImageFormat::Binary);

/// Loads every row's image; sample ids are row indices.
std::vector<SyntheticSample> load_samples(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

} // namespace a3m
