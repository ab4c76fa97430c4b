#include "mslam/pipeline.hpp"
#include "mslam/similarity.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace mslam;

namespace {

const SiameseModel& trained_model()
{
    static const SiameseModel m = train_model(PipelineConfig{});
    return m;
}

MetaNode meta(int id, TopoLabel label, double x0, double y0, double x1, double y1)
{
    MetaNode m;
    m.id = id;
    m.label = label;
    m.x_start = x0;
    m.y_start = y0;
    m.x_end = x1;
    m.y_end = y1;
    m.pg_start = 10 * id;
    m.pg_end = 10 * id + 9;
    return m;
}

NodeFeature feature(double x0, double y0, double x1, double y1)
{
    NodeFeature f;
    f.v << x0, y0, x1, y1;
    return f;
}

double proposal_accuracy(const std::vector<ProposalPair>& props, const ManhattanGraph& mg,
                         const std::vector<int>& regions)
{
    if (props.empty()) return 0.0;
    int tp = 0;
    for (const auto& p : props) tp += is_true_pair(p, mg, regions) ? 1 : 0;
    return static_cast<double>(tp) / static_cast<double>(props.size());
}

} // namespace

TEST(ContrastiveLoss, Examples)
{
    EXPECT_EQ(contrastive_loss(0.0, true, 1.0), 0.0);
    EXPECT_EQ(contrastive_loss(1.2, false, 1.0), 0.0);
    EXPECT_NEAR(contrastive_loss(0.4, false, 1.0), 0.18, 1e-15);
}

TEST(ContrastiveLoss, NonNegativeAndZeroOnlyWhenSatisfied)
{
    for (double d = 0.0; d <= 2.0; d += 0.05) {
        EXPECT_GE(contrastive_loss(d, true, 1.0), 0.0);
        EXPECT_GE(contrastive_loss(d, false, 1.0), 0.0);
        EXPECT_EQ(contrastive_loss(d, true, 1.0) == 0.0, d == 0.0);
        EXPECT_EQ(contrastive_loss(d, false, 1.0) == 0.0, d >= 1.0);
    }
}

TEST(Siamese, EmbeddingIsDeterministicAndSymmetric)
{
    const auto m = SiameseModel::initialized(3);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const NodeFeature a = feature(u(rng), u(rng), u(rng), u(rng));
        const NodeFeature b = feature(u(rng), u(rng), u(rng), u(rng));
        EXPECT_EQ(m.embed(a), m.embed(a));
        EXPECT_EQ(m.distance(a, a), 0.0);
        EXPECT_EQ(m.distance(a, b), m.distance(b, a));
    }
}

TEST(Siamese, GradientMatchesFiniteDifferences)
{
    auto m = SiameseModel::initialized(17);
    SynthesisSpec spec;
    const auto pairs = synthesize_training_pairs(spec, 24, 5);
    std::vector<double> grad;
    contrastive_objective(m, pairs, &grad);
    const auto theta = m.parameters();
    ASSERT_EQ(grad.size(), theta.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = 1e-6;
        auto tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        m.set_parameters(tp);
        const double fp = contrastive_objective(m, pairs);
        m.set_parameters(tm);
        const double fm = contrastive_objective(m, pairs);
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max(std::abs(fd) + std::abs(grad[i]), 1e-6);
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(Siamese, ZeroLearningRateKeepsWeights)
{
    const auto init = SiameseModel::initialized(2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0;
    const auto res = train(init, synthesize_training_pairs(SynthesisSpec{}, 64, 1), cfg);
    EXPECT_EQ(res.model.parameters(), init.parameters());
}

TEST(Siamese, DivergenceIsReported)
{
    auto pairs = synthesize_training_pairs(SynthesisSpec{}, 8, 1);
    pairs[0].a.v[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 1;
    EXPECT_THROW(train(SiameseModel::initialized(1), pairs, cfg), TrainingError);
    EXPECT_THROW(train(SiameseModel::initialized(1), {}, cfg), TrainingError);
}

TEST(Siamese, HeldOutAccuracyAfterTraining)
{
    // 2000 pairs, 200 epochs, five seeds
    double acc = 0.0, reversed_acc = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const auto pairs = synthesize_training_pairs(SynthesisSpec{}, 2000, mix_seed(s, 100));
        TrainConfig cfg;
        cfg.seed = s;
        const auto m = train(SiameseModel::initialized(s), pairs, cfg).model;
        const auto held = synthesize_training_pairs(SynthesisSpec{}, 1000, mix_seed(s, 200));
        acc += pair_accuracy(m, held, m.tau_high);
        std::vector<TrainingPair> swapped;
        for (const auto& p : held) {
            if (p.same && p.reversed) swapped.push_back(p);
        }
        reversed_acc += pair_accuracy(m, swapped, m.tau_high);
    }
    EXPECT_GE(acc / 5.0, 0.90);
    EXPECT_GE(reversed_acc / 5.0, 0.85);
}

TEST(Synthesis, BalancedPairs)
{
    const auto pairs = synthesize_training_pairs(SynthesisSpec{}, 10, 4);
    int same = 0;
    for (const auto& p : pairs) same += p.same ? 1 : 0;
    EXPECT_EQ(same, 5);
    EXPECT_THROW(synthesize_training_pairs(SynthesisSpec{}, 0, 4), std::invalid_argument);
}

TEST(Synthesis, PositivesAndHardNegatives)
{
    const NodeFeature a = feature(0, 0, 10, 0);
    EXPECT_EQ(swap_endpoints(a).v, Eigen::Vector4d(10, 0, 0, 0));
    // a positive traversed the other way round sits right next to the swapped copy
    EXPECT_LT((swap_endpoints(feature(10, 0.1, 0, -0.1)).v - a.v).norm(), 0.2);
    // a parallel neighbour three meters away is not close in either orientation
    const NodeFeature n = feature(0, 3, 10, 3);
    EXPECT_GE((n.v - a.v).norm(), 3.0);
    EXPECT_GE((swap_endpoints(n).v - a.v).norm(), 3.0);

    const SynthesisSpec spec;
    const auto pairs = synthesize_training_pairs(spec, 400, 8);
    for (const auto& p : pairs) {
        const Eigen::Vector4d b = p.reversed ? swap_endpoints(p.b).v : p.b.v;
        const double gap = (b - p.a.v).norm() * spec.extent;
        if (p.same) EXPECT_LT(gap, 0.02 * spec.length_max * 8.0);
        else EXPECT_GT(gap, 1.0);
    }
}

TEST(Siamese, CheckpointRoundTrip)
{
    auto m = SiameseModel::initialized(6);
    m.tau_high = 0.3;
    m.tau_low = 0.7;
    std::stringstream ss;
    m.save(ss);
    const auto back = SiameseModel::load(ss);
    EXPECT_EQ(back.parameters(), m.parameters());
    EXPECT_EQ(back.tau_high, 0.3);
    EXPECT_EQ(back.tau_low, 0.7);
    EXPECT_EQ(back.feature_scale, m.feature_scale);
    std::stringstream bad("siamese 4 8 8 8\n");
    EXPECT_THROW(SiameseModel::load(bad), std::runtime_error);
}

TEST(Propose, SingleMetaNodeGivesNothing)
{
    ManhattanGraph mg;
    mg.meta_nodes.push_back(meta(0, TopoLabel::Rackspace, 0, 0, 10, 0));
    EXPECT_TRUE(propose(trained_model(), mg).empty());
}

TEST(Propose, LabelsGateComparison)
{
    ManhattanGraph mg;
    mg.meta_nodes.push_back(meta(0, TopoLabel::Rackspace, 0, 0, 10, 0));
    mg.meta_nodes.push_back(meta(1, TopoLabel::Corridor, 0, 0, 10, 0));
    EXPECT_TRUE(propose(trained_model(), mg).empty());

    mg.meta_nodes.push_back(meta(2, TopoLabel::Rackspace, 10, 0, 0, 0));
    const auto props = propose(trained_model(), mg);
    ASSERT_EQ(props.size(), 1u);
    EXPECT_EQ(props[0].meta_i, 0);
    EXPECT_EQ(props[0].meta_j, 2);
    EXPECT_TRUE(props[0].reversed);
    EXPECT_EQ(props[0].band, ConfidenceBand::High);
}

TEST(Propose, ReversedRevisitOnDriftFreeInput)
{
    const auto L = generate_layout(LayoutParams{});
    const int aisle = L.aisle_segment(0, 0);
    const auto t = generate_trajectory(L, {aisle, L.corridor_segment(0, 1), aisle}, 0.25);
    const auto run = corrupt(L, t, NoiseModel::noiseless(), ScanParams{4, 1.0});
    const auto mg = build_manhattan(run.graph, group(run.graph.labels()));
    const int region = L.segments[static_cast<std::size_t>(aisle)].region;
    std::vector<int> visits;
    for (const auto& m : mg.meta_nodes) {
        if (majority_region(m, run.true_regions) == region) visits.push_back(m.id);
    }
    ASSERT_EQ(visits.size(), 2u);
    bool found = false;
    for (const auto& p : propose(trained_model(), mg)) {
        EXPECT_LT(p.meta_i, p.meta_j);
        EXPECT_EQ(mg.at(p.meta_i).label, mg.at(p.meta_j).label);
        if (p.meta_i == visits[0] && p.meta_j == visits[1]) {
            found = true;
            EXPECT_TRUE(p.reversed);
        }
    }
    EXPECT_TRUE(found);
}

TEST(Propose, DriftFreeGraphsGiveBetterProposals)
{
    const PipelineConfig cfg;
    double clean = 0.0, drifted = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        PipelineConfig c = cfg;
        c.scan = ScanParams{4, 1.0};
        const auto sc = simulate(c, s);
        PoseGraph exact = sc.run.graph;
        exact.set_poses(sc.truth_poses);
        const auto mg_clean = build_manhattan(exact, sc.topology);
        const auto mg_drift = build_manhattan(sc.run.graph, sc.topology);
        clean += proposal_accuracy(propose(trained_model(), mg_clean), mg_clean, sc.run.true_regions);
        drifted += proposal_accuracy(propose(trained_model(), mg_drift), mg_drift, sc.run.true_regions);
    }
    EXPECT_GE(clean, drifted);
}
