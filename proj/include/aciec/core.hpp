#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aciec/errors.hpp"

namespace aciec::core {

// An adjective-noun pair, e.g. "cute dog". Canonical text form is the two
// lowercase tokens joined by one space.
struct ANPLabel {
    std::string adjective;
    std::string noun;

    std::string text() const { return adjective + " " + noun; }
    auto operator<=>(const ANPLabel&) const = default;
};

ANPLabel parse_anp(const std::string& text);

// Two-level tree: noun -> the set of ANP labels sharing that noun.
struct LabelHierarchy {
    std::map<std::string, std::set<ANPLabel>> groups;

    std::set<ANPLabel> flatten() const;
    // Index of an ANP in the flattened (sorted) label list; the detector's
    // class index space.
    std::vector<ANPLabel> class_list() const;
};

LabelHierarchy build_hierarchy(const std::set<ANPLabel>& labels);

struct EmotionTaxonomy {
    std::string name;
    std::vector<std::string> classes;

    int index_of(const std::string& cls) const;  // -1 when absent

    static EmotionTaxonomy fi8();
    static EmotionTaxonomy emotion_roi6();
    static EmotionTaxonomy binary();
    static EmotionTaxonomy by_name(const std::string& name);
};

struct ImageRecord {
    std::string id;
    std::string path;                       // pixel source on disk, may be empty
    std::vector<double> features;           // precomputed frozen features, may be empty
    std::optional<ANPLabel> anp_label;
    std::optional<int> emotion_label;
    std::optional<std::string> embedded_text;
    std::optional<std::string> caption;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;

    bool operator==(const DatasetSplit&) const = default;
};

DatasetSplit split_dataset(const std::vector<ImageRecord>& records,
                           double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed);

// Raw interleaved 8-bit pixels, row-major.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> data;
};

// Decode from disk; throws DataError carrying the record id on failure.
Image load_pixels(const ImageRecord& record);

// Resize to 224x224; with augment, crop 10% of the long side from a random
// end first (no crop for square inputs).
Image preprocess_image(const Image& pixels, bool augment, std::mt19937_64& rng);
Image preprocess_image(const ImageRecord& record, bool augment, std::mt19937_64& rng);

// JSONL dataset I/O, one record per line.
std::vector<ImageRecord> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<ImageRecord>& records, const std::string& path);

DatasetSplit load_split(const std::string& path);
void save_split(const DatasetSplit& split, const std::string& path);

EmotionTaxonomy load_taxonomy(const std::string& path);

}  // namespace aciec::core
