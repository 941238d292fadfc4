#include "poselab/topology.hpp"

#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

using namespace poselab;

namespace {

const LabelSpace kRgbd{51, 16};
const LabelSpace kPascal{11, 16};

struct OracleLayer {
    std::string name;
    std::int64_t weights = 0;
    std::int64_t biases = 0;
};

// Independent re-derivation of the parameter counts: walks the TopologySpec
// with its own shape arithmetic, never calling infer_shapes or per_layer_counts.
std::vector<OracleLayer> hand_count(const TopologySpec& spec) {
    std::vector<OracleLayer> out;
    auto walk = [&](const std::vector<LayerSpec>& layers, std::vector<std::int64_t>& dims) {
        for (const auto& l : layers) {
            switch (l.op) {
                case LayerOp::Convolution: {
                    const std::int64_t ic = dims[0];
                    out.push_back({l.name, l.out_channels * (ic / l.groups) * l.kernel_h * l.kernel_w,
                                   l.out_channels});
                    dims = {l.out_channels, (dims[1] + 2 * l.pad - l.kernel_h) / l.stride + 1,
                            (dims[2] + 2 * l.pad - l.kernel_w) / l.stride + 1};
                    break;
                }
                case LayerOp::MaxPool:
                    dims = {dims[0], (dims[1] - l.pool_kernel) / l.pool_stride + 1,
                            (dims[2] - l.pool_kernel) / l.pool_stride + 1};
                    break;
                case LayerOp::FullyConnected:
                case LayerOp::SoftmaxOutput: {
                    std::int64_t in = 1;
                    for (auto d : dims) in *= d;
                    out.push_back({l.name, l.out_dim * in, l.out_dim});
                    dims = {l.out_dim};
                    break;
                }
                case LayerOp::ReLU:
                case LayerOp::LocalResponseNorm:
                case LayerOp::Dropout:
                    break;
            }
        }
    };
    std::vector<std::int64_t> dims{spec.in_channels, spec.profile.image_size,
                                   spec.profile.image_size};
    walk(spec.shared_prefix, dims);
    const auto at_branch = dims;
    for (const auto& b : spec.branches) {
        dims = at_branch;
        walk(b.layers, dims);
    }
    return out;
}

std::int64_t oracle_total(const std::vector<TopologySpec>& specs, bool biases = false) {
    std::int64_t total = 0;
    for (const auto& s : specs) {
        for (const auto& l : hand_count(s)) {
            total += l.weights;
            if (biases) total += l.biases;
        }
    }
    return total;
}

std::int64_t lib_total(ModelKind kind, LabelSpace labels, const ScaleProfile& p) {
    return count_parameters(build_topology(kind, labels, p));
}

}  // namespace

TEST_CASE("full-scale weight counts match the published sizes") {
    const ScaleProfile full = ScaleProfile::full_scale();

    const auto pm_rgbd = build_topology({ModelFamily::PM}, kRgbd, full);
    REQUIRE(pm_rgbd.size() == 2);
    CHECK(count_parameters(pm_rgbd[0]) == 57'067'552);  // category net
    CHECK(count_parameters(pm_rgbd[1]) == 56'924'192);  // pose net
    CHECK(count_parameters(pm_rgbd) == 113'991'744);

    CHECK(lib_total({ModelFamily::PM}, kPascal, full) == 113'827'904);
    CHECK(lib_total({ModelFamily::LBM}, kRgbd, full) == 57'133'088);
    CHECK(lib_total({ModelFamily::LBM}, kPascal, full) == 56'969'248);
    CHECK(lib_total({ModelFamily::CPM}, kRgbd, full) == 60'200'992);
    CHECK(lib_total({ModelFamily::CPM}, kPascal, full) == 57'579'552);
    CHECK(lib_total({ModelFamily::EBM}, kRgbd, full) == 111'659'040);
    CHECK(lib_total({ModelFamily::EBM}, kPascal, full) == 111'495'200);
}

TEST_CASE("full-scale trunk layers have the expected individual sizes") {
    const auto specs = build_topology({ModelFamily::Base}, kRgbd, ScaleProfile::full_scale());
    REQUIRE(specs.size() == 1);
    const auto counts = per_layer_counts(specs[0]);
    REQUIRE(counts.size() == 8);
    CHECK(counts[0].layer == "conv1");
    CHECK(counts[0].weights == 34'848);
    CHECK(counts[1].weights == 307'200);  // conv2, 2 groups
    CHECK(counts[2].weights == 884'736);
    CHECK(counts[3].weights == 663'552);
    CHECK(counts[4].weights == 442'368);
    CHECK(counts[5].layer == "fc6");
    CHECK(counts[5].weights == 37'748'736);  // 4096 * 256*6*6
    CHECK(counts[6].weights == 16'777'216);
    CHECK(counts[7].layer == "fc8-cat");
    CHECK(counts[7].weights == 51 * 4096);
}

TEST_CASE("library counts agree with an independent hand walk") {
    const std::vector<ModelKind> kinds{{ModelFamily::Base}, {ModelFamily::PM},
                                       {ModelFamily::CPM},  {ModelFamily::LBM},
                                       {ModelFamily::EBM},  {ModelFamily::EBM, 128}};
    const std::vector<ScaleProfile> profiles{ScaleProfile::full_scale(), ScaleProfile::desk(),
                                             ScaleProfile::desk(8, 16), ScaleProfile::desk(4, 32)};
    for (const auto& kind : kinds) {
        for (const auto& profile : profiles) {
            const auto specs = build_topology(kind, kRgbd, profile);
            CHECK(count_parameters(specs, false) == oracle_total(specs, false));
            CHECK(count_parameters(specs, true) == oracle_total(specs, true));
            for (const auto& spec : specs) {
                const auto lib = per_layer_counts(spec);
                const auto oracle = hand_count(spec);
                REQUIRE(lib.size() == oracle.size());
                for (std::size_t i = 0; i < lib.size(); ++i) {
                    CHECK(lib[i].layer == oracle[i].name);
                    CHECK(lib[i].weights == oracle[i].weights);
                    CHECK(lib[i].biases == oracle[i].biases);
                }
            }
        }
    }
}

TEST_CASE("desk trunk shapes follow the floor rule") {
    const auto specs = build_topology({ModelFamily::Base}, {4, 16}, ScaleProfile::desk());
    const auto shapes = infer_shapes(specs[0]);
    auto dims_of = [&](const std::string& name) -> std::vector<std::int64_t> {
        for (const auto& s : shapes) {
            if (s.name == name) return s.dims;
        }
        FAIL(("no layer named " + name));
        return {};
    };
    CHECK(dims_of("conv1") == std::vector<std::int64_t>{12, 32, 32});
    CHECK(dims_of("pool1") == std::vector<std::int64_t>{12, 15, 15});
    CHECK(dims_of("conv2") == std::vector<std::int64_t>{32, 15, 15});
    CHECK(dims_of("pool2") == std::vector<std::int64_t>{32, 7, 7});
    CHECK(dims_of("conv5") == std::vector<std::int64_t>{32, 7, 7});
    CHECK(dims_of("pool5") == std::vector<std::int64_t>{32, 3, 3});
    CHECK(dims_of("pool5")[0] * 3 * 3 == 288);
    CHECK(dims_of("fc6") == std::vector<std::int64_t>{256});
    CHECK(dims_of("fc8-cat") == std::vector<std::int64_t>{4});
}

TEST_CASE("a 16 pixel input still fits the desk trunk") {
    const auto specs = build_topology({ModelFamily::EBM}, {4, 16}, ScaleProfile::desk(8, 16));
    const auto shapes = infer_shapes(specs[0]);
    for (const auto& s : shapes) {
        if (s.name == "pool1") CHECK(s.dims == std::vector<std::int64_t>{12, 7, 7});
        if (s.name == "pool2") CHECK(s.dims == std::vector<std::int64_t>{32, 3, 3});
        if (s.name == "pool5") CHECK(s.dims == std::vector<std::int64_t>{32, 1, 1});
    }
    CHECK(ScaleProfile::desk(8, 16).image_size == 16);
    CHECK_THROWS_AS(ScaleProfile::desk(8, 15), std::exception);
    CHECK_THROWS_AS(ScaleProfile::desk(0, 32), std::exception);

    // a non-dividing divisor is caught when the trunk is built, not at construction
    const ScaleProfile odd = ScaleProfile::desk(5, 32);
    CHECK_THROWS_AS(build_topology({ModelFamily::Base}, {4, 16}, odd), std::exception);
}

TEST_CASE("model families build the advertised branch layout") {
    const ScaleProfile desk = ScaleProfile::desk();

    const auto base = build_topology({ModelFamily::Base}, kRgbd, desk);
    REQUIRE(base.size() == 1);
    CHECK(base[0].kind_name == "base");
    REQUIRE(base[0].branches.size() == 1);
    CHECK(base[0].branches[0].name == "category");

    const auto pm = build_topology({ModelFamily::PM}, kRgbd, desk);
    REQUIRE(pm.size() == 2);
    CHECK(pm[0].kind_name == "pm-category");
    CHECK(pm[1].kind_name == "pm-pose");
    CHECK(pm[0].branches[0].name == "category");
    CHECK(pm[1].branches[0].name == "pose");

    const auto cpm = build_topology({ModelFamily::CPM}, kRgbd, desk);
    REQUIRE(cpm.size() == 1);
    CHECK(cpm[0].branches[0].name == "joint");
    CHECK(cpm[0].branches[0].layers.back().out_dim == 51 * 16);

    const auto lbm = build_topology({ModelFamily::LBM}, kRgbd, desk);
    REQUIRE(lbm[0].branches.size() == 2);
    CHECK(lbm[0].branches[0].name == "category");  // category first, always
    CHECK(lbm[0].branches[1].name == "pose");
    CHECK(lbm[0].branches[0].layers.size() == 1);  // heads only, trunk is shared

    const auto ebm = build_topology({ModelFamily::EBM}, kRgbd, desk);
    REQUIRE(ebm[0].branches.size() == 2);
    CHECK(ebm[0].branches[0].name == "category");
    CHECK(ebm[0].branches[1].name == "pose");
    CHECK(ebm[0].branches[0].layers.size() == 7);  // fc6/relu/drop/fc7/relu/drop/head
    CHECK(ebm[0].shared_prefix.back().name == "pool5");
}

TEST_CASE("ebm branch width is configurable and bounded") {
    const ScaleProfile desk = ScaleProfile::desk();
    auto fc7_pose_width = [](const TopologySpec& spec) {
        for (const auto& l : spec.branches[1].layers) {
            if (l.name == "fc7-pose") return l.out_dim;
        }
        return std::int64_t{-1};
    };

    CHECK(fc7_pose_width(build_topology({ModelFamily::EBM}, kRgbd, desk)[0]) == 64);
    CHECK(fc7_pose_width(build_topology({ModelFamily::EBM, 128}, kRgbd, desk)[0]) == 128);

    const auto full = build_topology({ModelFamily::EBM, 512}, kRgbd, ScaleProfile::full_scale());
    CHECK(fc7_pose_width(full[0]) == 512);
    // the category branch keeps the full fc width regardless of the pose width
    for (const auto& l : full[0].branches[0].layers) {
        if (l.name == "fc7-cat") CHECK(l.out_dim == 4096);
    }
    CHECK_THROWS_AS(build_topology({ModelFamily::EBM, 8192}, kRgbd, ScaleProfile::full_scale()),
                    std::exception);
}

TEST_CASE("joint label encoding is a bijection") {
    std::vector<bool> seen(static_cast<std::size_t>(kRgbd.num_categories * kRgbd.num_pose_bins));
    for (std::int64_t c = 0; c < kRgbd.num_categories; ++c) {
        for (std::int64_t p = 0; p < kRgbd.num_pose_bins; ++p) {
            const std::int64_t j = cpm_encode(c, p, kRgbd);
            REQUIRE(j >= 0);
            REQUIRE(j < static_cast<std::int64_t>(seen.size()));
            CHECK(!seen[static_cast<std::size_t>(j)]);
            seen[static_cast<std::size_t>(j)] = true;
            std::int64_t c2 = -1, p2 = -1;
            cpm_decode(j, kRgbd, c2, p2);
            CHECK(c2 == c);
            CHECK(p2 == p);
        }
    }
    CHECK(cpm_encode(0, 0, kRgbd) == 0);
    CHECK(cpm_encode(1, 0, kRgbd) == 16);
    CHECK_THROWS_AS(cpm_encode(51, 0, kRgbd), std::exception);
    CHECK_THROWS_AS(cpm_encode(0, 16, kRgbd), std::exception);
    CHECK_THROWS_AS(cpm_encode(-1, 0, kRgbd), std::exception);
    std::int64_t c = 0, p = 0;
    CHECK_THROWS_AS(cpm_decode(51 * 16, kRgbd, c, p), std::exception);
    CHECK_THROWS_AS(cpm_decode(-1, kRgbd, c, p), std::exception);
}

TEST_CASE("family names round trip through the parser") {
    for (auto f : {ModelFamily::Base, ModelFamily::PM, ModelFamily::CPM, ModelFamily::LBM,
                   ModelFamily::EBM}) {
        CHECK(parse_family(family_name(f)) == f);
    }
    CHECK_THROWS_AS(parse_family("resnet"), std::invalid_argument);
}
