#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace zoomroi;
using namespace zoomroi::testing;

namespace {

bool same_params(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

Checkpoint round_trip(const Checkpoint& c) {
    return checkpoint_from_json(json::parse(to_json(c).dump()));
}

}  // namespace

TEST(Checkpoint, TabularRoundTrip) {
    TabularQ q;
    q.at(0, {1, 1, 0}) = {0.1, 0.2, 1.0 / 3.0, -4e-17};
    q.at(2, {3, 7, 5}) = {1e300, 0, 0, 0.5};
    const Checkpoint back = round_trip({q, FeatureConfig{}, json{{"seed", 3}}});
    EXPECT_EQ(std::get<TabularQ>(back.model), q);
    EXPECT_EQ(back.config.at("seed"), 3);
}

TEST(Checkpoint, NetworkRoundTrips) {
    Rng rng(4);
    MlpQ mq{MlpNet<4>(kFeatureLength, 8, rng)};
    LinearQ lq{LinearNet<4>(kFeatureLength)};
    for (double& p : lq.net().params()) p = rng.normal();
    LinearModel lm(kFeatureLength, 1e-4);
    for (double& p : lm.net.params()) p = rng.normal();
    MlpModel mm(MlpNet<1>(kFeatureLength, 16, rng));

    FeatureConfig fc;
    fc.normalization = {{0.5, 0.5, 0.5}, {0.25, 0.5, 0.75}};
    const Checkpoint a = round_trip({mq, fc, {}});
    EXPECT_EQ(model_kind(a.model), "mlp-q");
    EXPECT_TRUE(same_params(std::get<MlpQ>(a.model).net().params(), mq.net().params()));
    EXPECT_EQ(a.features.normalization.std[2], 0.75);

    EXPECT_TRUE(same_params(std::get<LinearQ>(round_trip({lq, {}, {}}).model).net().params(),
                            lq.net().params()));
    const auto lm_back = std::get<LinearModel>(round_trip({lm, {}, {}}).model);
    EXPECT_TRUE(same_params(lm_back.net.params(), lm.net.params()));
    EXPECT_EQ(lm_back.l2, 1e-4);
    EXPECT_TRUE(same_params(std::get<MlpModel>(round_trip({mm, {}, {}}).model).net.params(),
                            mm.net.params()));
}

TEST(Checkpoint, FileRoundTripIsByteStable) {
    const auto dir = scratch_dir("checkpoint");
    Rng rng(8);
    const Checkpoint c{MlpModel(MlpNet<1>(kFeatureLength, 4, rng)), {}, json{{"mode", "mlp"}}};
    save_checkpoint(dir / "a.json", c);
    save_checkpoint(dir / "b.json", load_checkpoint(dir / "a.json"));
    std::ifstream a(dir / "a.json"), b(dir / "b.json");
    const std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
    EXPECT_EQ(sa, sb);
}

TEST(Checkpoint, RejectsMismatches) {
    json j = to_json(Checkpoint{LinearModel(kFeatureLength), {}, {}});
    j["params"].erase(0);
    EXPECT_THROW(checkpoint_from_json(j), InvalidArgument);
    j = to_json(Checkpoint{LinearModel(kFeatureLength), {}, {}});
    j["kind"] = "forest";
    EXPECT_THROW(checkpoint_from_json(j), InvalidArgument);
    j["format"] = "other";
    EXPECT_THROW(checkpoint_from_json(j), InvalidArgument);
    j = to_json(Checkpoint{LinearModel(kFeatureLength), {}, {}});
    j["features"]["feature_layout_version"] = 2;
    EXPECT_THROW(checkpoint_from_json(j), InvalidArgument);
    EXPECT_THROW(load_checkpoint("/nonexistent/c.json"), IoError);
}

TEST(Reports, SelectionReportRoundTrip) {
    const Slide s = nw_cancer_slide_128();
    const SelectionReport r = beam_search(s, oracle_reward_binding(s.rewards), 2, 4);
    const SelectionReport back = selection_report_from_json(json::parse(to_json(r).dump()));
    EXPECT_EQ(back.method, r.method);
    EXPECT_EQ(back.tiles, r.tiles);
    EXPECT_EQ(back.mean_reward, r.mean_reward);
    EXPECT_EQ(back.regret, r.regret);
    EXPECT_EQ(back.histogram, r.histogram);
}

TEST(Reports, SynthSpecRoundTrip) {
    const SynthSpec spec = benchmark_suite(1)[4].spec;
    EXPECT_EQ(synth_spec_from_json(to_json(spec)), spec);
    EXPECT_THROW(synth_spec_from_json(json{{"width", 10}}), InvalidArgument);
}
