#pragma once

#include "poselab/pose_metrics.hpp"
#include "poselab/rng.hpp"
#include "poselab/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace poselab {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split parse_split(const std::string& text);

enum class ShapeFamily { Polygon, Star, Ellipse, Disc };

struct ShapeParams {
    ShapeFamily family = ShapeFamily::Polygon;
    int vertices = 4;           // polygon corners / star points
    double eccentricity = 0.0;  // ellipse only
    double scale = 0.7;         // half-extent fraction of the image half-size
    double brightness = 1.0;
    double hue = 0.0;           // category hue, [0,1)
    double marker_phase = 0.0;  // degrees, small per-instance jitter
};

struct ObjectInstance {
    std::int64_t category = 0;
    std::int64_t instance = 0;  // index within the category
    ShapeParams params;
    bool degenerate = false;
};

// Deterministic rasterization: RGB in [0,1], shape (3, size, size). Degenerate
// instances render identically for every angle.
Tensor render_view(const ObjectInstance& inst, double angle_deg, int size);

struct DataConfig {
    std::int64_t categories = 4;
    std::int64_t instances_per_category = 8;
    std::int64_t views_per_instance = 64;
    int image_size = 36;  // stored size; training crops are smaller
    std::uint64_t seed = 0;
    std::vector<std::int64_t> degenerate_categories;
    bool sparse_views = false;  // 8 jittered views instead of an even circle
};

struct SampleRecord {
    std::int64_t sample_id = 0;
    std::int64_t category = 0;
    std::int64_t instance = 0;
    double angle_deg = 0.0;
    Split split = Split::Train;
    std::int64_t byte_offset = 0;
};

struct DatasetManifest {
    DataConfig config;
    std::string blob_file = "data.f32";
    std::vector<SampleRecord> records;
};

// Derives each instance's shape parameters from (config seed, category, instance).
ObjectInstance make_instance(const DataConfig& config, std::int64_t category,
                             std::int64_t instance);

// Per category: one held-out test instance and one validation instance, every view of
// each. Pure function of (config, seed).
void make_splits(DatasetManifest& manifest, std::uint64_t seed);

class Dataset {
  public:
    // Renders every view, assigns splits, writes manifest.txt + data.f32 under dir.
    static Dataset generate(const DataConfig& config, const std::string& dir);
    static Dataset load(const std::string& dir);

    const DatasetManifest& manifest() const { return manifest_; }

    std::vector<std::int64_t> split_indices(Split split) const;

    struct BatchOptions {
        int crop_size = 32;
        PoseBinning binning;
        bool train_mode = false;  // random crop origin; eval takes the center crop
    };

    struct Batch {
        Tensor images;  // (N, 3, crop, crop)
        std::vector<int> category;
        std::vector<int> pose_bin;
        std::vector<double> angle_deg;
        std::vector<std::int64_t> sample_ids;
    };

    // `rng` is consumed only in train mode (crop origins, one y/x pair per sample).
    Batch load_batch(const std::vector<std::int64_t>& indices, const BatchOptions& opts,
                     Rng* rng = nullptr) const;

    bool is_degenerate_category(std::int64_t category) const;

  private:
    DatasetManifest manifest_;
    std::vector<float> blob_;
};

}  // namespace poselab
