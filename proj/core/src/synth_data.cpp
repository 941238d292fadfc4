#include "poselab/synth_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace poselab {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + text + "' (expected train|val|test)");
}

namespace {

constexpr double kPi = std::numbers::pi;

double fract(double x) { return x - std::floor(x); }

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    const double hh = fract(h) * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

// Boundary radius (fraction of the instance scale) in the shape's own frame.
double boundary_radius(const ShapeParams& p, double rel) {
    switch (p.family) {
        case ShapeFamily::Polygon: {
            const double sector = 2.0 * kPi / p.vertices;
            double m = std::fmod(rel, sector);
            if (m < 0) m += sector;
            return std::cos(kPi / p.vertices) / std::cos(m - kPi / p.vertices);
        }
        case ShapeFamily::Star:
            return 0.62 + 0.38 * std::cos(p.vertices * rel);
        case ShapeFamily::Ellipse: {
            const double b = 1.0 - p.eccentricity;
            const double c = std::cos(rel), s = std::sin(rel);
            return b / std::sqrt(b * b * c * c + s * s);
        }
        case ShapeFamily::Disc:
            return 1.0;
    }
    return 1.0;
}

}  // namespace

Tensor render_view(const ObjectInstance& inst, double angle_deg, int size) {
    check(size >= 16, "render_view: size must be at least 16");
    const ShapeParams& p = inst.params;
    const double pose = angle_deg * kPi / 180.0;
    const double half = size / 2.0;
    const double edge = 1.5 / half;  // ~1.5 px soft boundary

    double shape_rgb[3];
    hsv_to_rgb(p.hue, 0.65, p.brightness, shape_rgb);
    const double bg = 0.12;

    const bool marker = !inst.degenerate;
    const double beta = pose + p.marker_phase * kPi / 180.0;
    const double mr = 0.55 * p.scale;
    const double mx = mr * std::cos(beta);
    const double my = mr * std::sin(beta);
    const double sigma = 0.12 * p.scale;

    Tensor img({3, size, size});
    for (int py = 0; py < size; ++py) {
        const double v = (py + 0.5 - half) / half;
        for (int px = 0; px < size; ++px) {
            const double u = (px + 0.5 - half) / half;
            const double r = std::hypot(u, v);
            double alpha;
            if (inst.degenerate) {
                alpha = std::clamp((p.scale - r) / edge + 0.5, 0.0, 1.0);
            } else {
                const double theta = std::atan2(v, u);
                const double rb = p.scale * boundary_radius(p, theta - pose);
                alpha = std::clamp((rb - r) / edge + 0.5, 0.0, 1.0);
            }
            double c[3];
            for (int ch = 0; ch < 3; ++ch) c[ch] = bg + alpha * (shape_rgb[ch] - bg);
            if (marker) {
                const double dx = u - mx, dy = v - my;
                const double spot = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                const double w = 0.9 * spot * alpha;
                for (int ch = 0; ch < 3; ++ch) c[ch] += w * (1.0 - c[ch]);
            }
            for (int ch = 0; ch < 3; ++ch) {
                img.data[static_cast<std::size_t>((ch * size + py) * size + px)] =
                    std::clamp(c[ch], 0.0, 1.0);
            }
        }
    }
    return img;
}

ObjectInstance make_instance(const DataConfig& config, std::int64_t category,
                             std::int64_t instance) {
    check(category >= 0 && category < config.categories, "make_instance: category out of range");
    check(instance >= 0 && instance < config.instances_per_category,
          "make_instance: instance out of range");
    ObjectInstance inst;
    inst.category = category;
    inst.instance = instance;
    inst.degenerate =
        std::find(config.degenerate_categories.begin(), config.degenerate_categories.end(),
                  category) != config.degenerate_categories.end();

    Rng rng(mix_seed(mix_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(category)),
                     0x77 + static_cast<std::uint64_t>(instance)));
    ShapeParams& p = inst.params;
    p.scale = rng.uniform(0.55, 0.8);
    p.brightness = rng.uniform(0.7, 1.0);
    p.marker_phase = rng.uniform(-15.0, 15.0);
    p.eccentricity = rng.uniform(0.35, 0.6);
    p.hue = fract(0.07 + 0.618034 * static_cast<double>(category) + rng.uniform(-0.02, 0.02));
    if (inst.degenerate) {
        p.family = ShapeFamily::Disc;
    } else {
        switch (category % 3) {
            case 0:
                p.family = ShapeFamily::Polygon;
                p.vertices = 3 + static_cast<int>(category % 4);
                break;
            case 1:
                p.family = ShapeFamily::Star;
                p.vertices = 5 + static_cast<int>(category % 3);
                break;
            default:
                p.family = ShapeFamily::Ellipse;
                break;
        }
    }
    return inst;
}

void make_splits(DatasetManifest& manifest, std::uint64_t seed) {
    const auto& cfg = manifest.config;
    check(cfg.instances_per_category >= 3,
          "make_splits: need at least 3 instances per category (train + val + test), got " +
              std::to_string(cfg.instances_per_category));
    std::vector<std::int64_t> test_of(cfg.categories), val_of(cfg.categories);
    for (std::int64_t c = 0; c < cfg.categories; ++c) {
        Rng rng(mix_seed(seed, 0xA11C0000ull + static_cast<std::uint64_t>(c)));
        const std::int64_t test =
            static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg.instances_per_category)));
        std::int64_t val = static_cast<std::int64_t>(
            rng.uniform_int(static_cast<std::uint64_t>(cfg.instances_per_category - 1)));
        if (val >= test) ++val;
        test_of[c] = test;
        val_of[c] = val;
    }
    for (auto& rec : manifest.records) {
        if (rec.instance == test_of[rec.category]) {
            rec.split = Split::Test;
        } else if (rec.instance == val_of[rec.category]) {
            rec.split = Split::Val;
        } else {
            rec.split = Split::Train;
        }
    }
}

namespace {

void write_f32(std::vector<unsigned char>& out, float v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<unsigned char>(bits & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

std::string manifest_path(const std::string& dir) { return dir + "/manifest.txt"; }

}  // namespace

Dataset Dataset::generate(const DataConfig& config, const std::string& dir) {
    check(config.categories >= 1, "generate: need at least one category");
    check(config.instances_per_category >= 3,
          "generate: need at least 3 instances per category (train + val + test), got " +
              std::to_string(config.instances_per_category));
    check(config.views_per_instance >= 1, "generate: need at least one view");
    check(config.image_size >= 16, "generate: image_size must be at least 16");
    for (std::int64_t d : config.degenerate_categories) {
        check(d >= 0 && d < config.categories,
              "generate: degenerate category " + std::to_string(d) + " out of range");
    }

    std::filesystem::create_directories(dir);

    Dataset ds;
    ds.manifest_.config = config;
    const std::int64_t per_sample =
        3ll * config.image_size * config.image_size;  // floats per image

    std::vector<unsigned char> blob_bytes;
    blob_bytes.reserve(static_cast<std::size_t>(per_sample) * 4 *
                       static_cast<std::size_t>(config.categories *
                                                config.instances_per_category *
                                                config.views_per_instance));

    std::int64_t sample_id = 0;
    for (std::int64_t c = 0; c < config.categories; ++c) {
        for (std::int64_t i = 0; i < config.instances_per_category; ++i) {
            const ObjectInstance inst = make_instance(config, c, i);
            Rng jitter_rng(mix_seed(mix_seed(config.seed, 0xBEEF0000ull + static_cast<std::uint64_t>(c)),
                                    static_cast<std::uint64_t>(i)));
            for (std::int64_t v = 0; v < config.views_per_instance; ++v) {
                double angle = 360.0 * static_cast<double>(v) /
                               static_cast<double>(config.views_per_instance);
                if (config.sparse_views) {
                    const double gap = 360.0 / static_cast<double>(config.views_per_instance);
                    angle = normalize_angle(angle + jitter_rng.uniform(-0.25, 0.25) * gap);
                }
                const Tensor img = render_view(inst, angle, config.image_size);
                SampleRecord rec;
                rec.sample_id = sample_id++;
                rec.category = c;
                rec.instance = i;
                rec.angle_deg = angle;
                rec.byte_offset = static_cast<std::int64_t>(blob_bytes.size());
                for (double value : img.data) write_f32(blob_bytes, static_cast<float>(value));
                ds.manifest_.records.push_back(rec);
            }
        }
    }
    make_splits(ds.manifest_, config.seed);

    {
        std::ofstream os(dir + "/" + ds.manifest_.blob_file, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("generate: cannot write blob under '" + dir + "'");
        os.write(reinterpret_cast<const char*>(blob_bytes.data()),
                 static_cast<std::streamsize>(blob_bytes.size()));
    }
    {
        std::ofstream os(manifest_path(dir), std::ios::trunc);
        if (!os) throw std::runtime_error("generate: cannot write manifest under '" + dir + "'");
        os << "poselab-manifest v1\n";
        os << "categories = " << config.categories << "\n";
        os << "instances_per_category = " << config.instances_per_category << "\n";
        os << "views_per_instance = " << config.views_per_instance << "\n";
        os << "image_size = " << config.image_size << "\n";
        os << "seed = " << config.seed << "\n";
        os << "sparse_views = " << (config.sparse_views ? 1 : 0) << "\n";
        os << "degenerate =";
        for (std::size_t i = 0; i < config.degenerate_categories.size(); ++i) {
            os << (i == 0 ? " " : ",") << config.degenerate_categories[i];
        }
        os << "\n";
        os << "blob = " << ds.manifest_.blob_file << "\n";
        os << "records = " << ds.manifest_.records.size() << "\n";
        os << "---\n";
        char line[160];
        for (const auto& rec : ds.manifest_.records) {
            std::snprintf(line, sizeof line, "%lld %lld %lld %.17g %s %lld\n",
                          static_cast<long long>(rec.sample_id),
                          static_cast<long long>(rec.category),
                          static_cast<long long>(rec.instance), rec.angle_deg,
                          split_name(rec.split).c_str(),
                          static_cast<long long>(rec.byte_offset));
            os << line;
        }
    }

    ds.blob_.resize(blob_bytes.size() / 4);
    for (std::size_t i = 0; i < ds.blob_.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(blob_bytes[i * 4 + b]) << (8 * b);
        }
        ds.blob_[i] = std::bit_cast<float>(bits);
    }
    return ds;
}

Dataset Dataset::load(const std::string& dir) {
    std::ifstream is(manifest_path(dir));
    if (!is) throw std::runtime_error("load: cannot open '" + manifest_path(dir) + "'");
    std::string line;
    if (!std::getline(is, line) || line != "poselab-manifest v1") {
        throw std::runtime_error("load: '" + manifest_path(dir) + "' is not a v1 manifest");
    }

    Dataset ds;
    auto& cfg = ds.manifest_.config;
    std::int64_t expected_records = -1;
    while (std::getline(is, line)) {
        if (line == "---") break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("load: malformed manifest header line '" + line + "'");
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "categories") cfg.categories = std::stoll(value);
        else if (key == "instances_per_category") cfg.instances_per_category = std::stoll(value);
        else if (key == "views_per_instance") cfg.views_per_instance = std::stoll(value);
        else if (key == "image_size") cfg.image_size = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "sparse_views") cfg.sparse_views = value == "1";
        else if (key == "degenerate") {
            cfg.degenerate_categories.clear();
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (!trim(tok).empty()) cfg.degenerate_categories.push_back(std::stoll(trim(tok)));
            }
        } else if (key == "blob") {
            ds.manifest_.blob_file = value;
        } else if (key == "records") {
            expected_records = std::stoll(value);
        } else {
            throw std::runtime_error("load: unknown manifest key '" + key + "'");
        }
    }

    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        SampleRecord rec;
        std::string split_text;
        if (!(ss >> rec.sample_id >> rec.category >> rec.instance >> rec.angle_deg >>
              split_text >> rec.byte_offset)) {
            throw std::runtime_error("load: malformed manifest record '" + line + "'");
        }
        rec.split = parse_split(split_text);
        ds.manifest_.records.push_back(rec);
    }
    if (expected_records >= 0 &&
        expected_records != static_cast<std::int64_t>(ds.manifest_.records.size())) {
        throw std::runtime_error("load: manifest announces " + std::to_string(expected_records) +
                                 " records but contains " +
                                 std::to_string(ds.manifest_.records.size()));
    }

    const std::string blob_path = dir + "/" + ds.manifest_.blob_file;
    std::ifstream bs(blob_path, std::ios::binary | std::ios::ate);
    if (!bs) throw std::runtime_error("load: cannot open '" + blob_path + "'");
    const std::streamsize bytes = bs.tellg();
    bs.seekg(0);
    if (bytes % 4 != 0) throw std::runtime_error("load: blob size is not a multiple of 4");
    std::vector<unsigned char> raw(static_cast<std::size_t>(bytes));
    bs.read(reinterpret_cast<char*>(raw.data()), bytes);
    if (bs.gcount() != bytes) throw std::runtime_error("load: blob read was truncated");
    ds.blob_.resize(raw.size() / 4);
    for (std::size_t i = 0; i < ds.blob_.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
        }
        ds.blob_[i] = std::bit_cast<float>(bits);
    }

    const std::int64_t per_sample = 3ll * cfg.image_size * cfg.image_size;
    if (static_cast<std::int64_t>(ds.blob_.size()) !=
        per_sample * static_cast<std::int64_t>(ds.manifest_.records.size())) {
        throw std::runtime_error("load: blob holds " + std::to_string(ds.blob_.size()) +
                                 " floats, expected " +
                                 std::to_string(per_sample * ds.manifest_.records.size()));
    }
    return ds;
}

std::vector<std::int64_t> Dataset::split_indices(Split split) const {
    std::vector<std::int64_t> out;
    for (const auto& rec : manifest_.records) {
        if (rec.split == split) out.push_back(rec.sample_id);
    }
    return out;
}

Dataset::Batch Dataset::load_batch(const std::vector<std::int64_t>& indices,
                                   const BatchOptions& opts, Rng* rng) const {
    const int stored = manifest_.config.image_size;
    check(opts.crop_size >= 1 && opts.crop_size <= stored,
          "load_batch: crop size " + std::to_string(opts.crop_size) +
              " does not fit stored size " + std::to_string(stored));
    check(!opts.train_mode || rng != nullptr, "load_batch: train mode needs an RNG");
    const int margin = stored - opts.crop_size;
    const std::int64_t n = static_cast<std::int64_t>(indices.size());
    check(n >= 1, "load_batch: empty index list");

    Batch batch;
    batch.images = Tensor({n, 3, opts.crop_size, opts.crop_size});
    const std::int64_t per_sample = 3ll * stored * stored;
    for (std::int64_t bi = 0; bi < n; ++bi) {
        const std::int64_t id = indices[static_cast<std::size_t>(bi)];
        check(id >= 0 && id < static_cast<std::int64_t>(manifest_.records.size()),
              "load_batch: sample index " + std::to_string(id) + " out of range");
        const SampleRecord& rec = manifest_.records[static_cast<std::size_t>(id)];
        int oy, ox;
        if (opts.train_mode) {
            oy = static_cast<int>(rng->uniform_int(static_cast<std::uint64_t>(margin + 1)));
            ox = static_cast<int>(rng->uniform_int(static_cast<std::uint64_t>(margin + 1)));
        } else {
            oy = ox = margin / 2;
        }
        const float* src = blob_.data() + rec.byte_offset / 4;
        check(rec.byte_offset % 4 == 0 &&
                  rec.byte_offset / 4 + per_sample <= static_cast<std::int64_t>(blob_.size()),
              "load_batch: blob offset out of range for sample " + std::to_string(id));
        for (int ch = 0; ch < 3; ++ch) {
            for (int y = 0; y < opts.crop_size; ++y) {
                const float* row = src + (static_cast<std::int64_t>(ch) * stored + oy + y) * stored + ox;
                for (int x = 0; x < opts.crop_size; ++x) {
                    batch.images.at4(bi, ch, y, x) = static_cast<double>(row[x]);
                }
            }
        }
        batch.category.push_back(static_cast<int>(rec.category));
        batch.pose_bin.push_back(static_cast<int>(bin_of(rec.angle_deg, opts.binning)));
        batch.angle_deg.push_back(rec.angle_deg);
        batch.sample_ids.push_back(rec.sample_id);
    }
    return batch;
}

bool Dataset::is_degenerate_category(std::int64_t category) const {
    const auto& list = manifest_.config.degenerate_categories;
    return std::find(list.begin(), list.end(), category) != list.end();
}

}  // namespace poselab
