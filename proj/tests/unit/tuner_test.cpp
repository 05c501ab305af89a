#include <mots/config_file.hpp>
#include <mots/fixture.hpp>
#include <mots/tuner.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace mots;

namespace {

std::vector<TrainingSequence> training(std::vector<ScenarioSpec> specs) {
    std::vector<TrainingSequence> out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const Scenario s = generate(specs[i]);
        out.push_back({"seq" + std::to_string(i), s.gt, s.detections, s.flow_provider()});
    }
    return out;
}

// Every detection has confidence 0.51, so only gamma below that keeps any.
ScenarioSpec confident_at_051() {
    ScenarioSpec s = zero_noise_spec();
    s.noise.confidence_min = 0.51;
    s.noise.confidence_max = 0.51;
    return s;
}

ScenarioSpec noisy(std::uint64_t seed) {
    ScenarioSpec s = dense_traffic_spec(40, 80, 20, 6, seed);
    s.noise = {1, 0.1, 1.5, 0.2, 1.0, 0.1};
    return s;
}

SearchSpace small_space(std::uint64_t seed, int iterations) {
    SearchSpace s = SearchSpace::defaults(Mechanism::embedding);
    s.beta_min = 1;
    s.beta_max = 3;
    s.delta = {0.0, 8.0, 0.0};
    s.iterations = iterations;
    s.seed = seed;
    return s;
}

} // namespace

TEST(RandomSearch, SingleCandidateSpace) {
    const auto seqs = training({noisy(1)});
    SearchSpace s = SearchSpace::defaults(Mechanism::embedding);
    s.gamma = {0.3, 0.3, 0.0};
    s.beta_min = s.beta_max = 2;
    s.delta = {4.0, 4.0, 0.0};
    s.iterations = 5;
    const auto r = random_search(seqs, s, kCar);
    EXPECT_EQ(r.best, (TrackerConfig{kCar, 0.3, 2, {Mechanism::embedding, 4.0}}));
    for (const auto& e : r.trace) EXPECT_EQ(e.config, r.best);
    EXPECT_EQ(r.best_counts, evaluate_config(seqs, r.best));
}

TEST(RandomSearch, SameSeedSameTrace) {
    const auto seqs = training({noisy(2), noisy(3)});
    const auto a = random_search(seqs, small_space(77, 30), kCar);
    const auto b = random_search(seqs, small_space(77, 30), kCar);
    EXPECT_EQ(write_trace(a.trace), write_trace(b.trace));
    EXPECT_EQ(a.best, b.best);
    const auto c = random_search(seqs, small_space(78, 30), kCar);
    EXPECT_NE(write_trace(a.trace), write_trace(c.trace));
}

TEST(RandomSearch, BestScoreIsReproducible) {
    const auto seqs = training({noisy(4), noisy(5)});
    for (int cls : {kCar, kPedestrian}) {
        const auto r = random_search(seqs, small_space(5, 25), cls);
        const auto again = objective_value(evaluate_config(seqs, r.best), Objective::smotsa);
        ASSERT_TRUE(again);
        EXPECT_EQ(*again, r.best_score);
    }
}

TEST(RandomSearch, EarliestMaximumWins) {
    const auto seqs = training({noisy(6)});
    const auto r = random_search(seqs, small_space(9, 40), kCar);
    std::optional<double> running;
    std::size_t first_best = 0;
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        const auto& e = r.trace[i];
        if (e.score && (!running || *e.score > *running)) {
            running = e.score;
            first_best = i;
        }
    }
    EXPECT_EQ(*running, r.best_score);
    EXPECT_EQ(r.trace[first_best].config, r.best);
}

TEST(RandomSearch, GridOracleOnConfidenceFixture) {
    const auto seqs = training({confident_at_051()});
    SearchSpace s = SearchSpace::defaults(Mechanism::embedding);
    s.gamma = {0.0, 1.0, 0.25};
    s.beta_min = s.beta_max = 1;
    s.delta = {0.5, 2.5, 0.5};
    s.iterations = 300;
    s.seed = 12;

    double grid_best = -1e300;
    for (double g : s.gamma.grid()) {
        for (double d : s.delta.grid()) {
            const TrackerConfig c{kCar, g, 1, {Mechanism::embedding, d}};
            grid_best = std::max(grid_best, *objective_value(evaluate_config(seqs, c), Objective::smotsa));
        }
    }
    const auto r = random_search(seqs, s, kCar);
    EXPECT_LE(r.best.gamma, 0.5);
    EXPECT_EQ(r.best_score, grid_best);
    EXPECT_EQ(r.best_score, 1.0);
    for (const auto& e : r.trace) {
        if (e.config.gamma > 0.5) {
            EXPECT_EQ(*e.score, 0.0);
        }
    }
}

TEST(RandomSearch, OtherClassesDoNotMatter) {
    auto seqs = training({noisy(7)});
    const auto before = random_search(seqs, small_space(3, 20), kCar);
    for (auto& [frame, list] : seqs[0].detections) {
        for (auto& d : list) {
            if (d.class_id == kPedestrian) d.confidence = 1.0 - d.confidence;
        }
        std::stable_partition(list.begin(), list.end(), [](const Detection& d) { return d.class_id == kPedestrian; });
    }
    const auto after = random_search(seqs, small_space(3, 20), kCar);
    EXPECT_EQ(write_trace(before.trace), write_trace(after.trace));
    EXPECT_EQ(before.best, after.best);
}

TEST(RandomSearch, UndefinedObjectiveFails) {
    const auto seqs = training({zero_noise_spec()});
    SearchSpace s = small_space(1, 3);
    std::vector<TrainingSequence> no_gt = seqs;
    no_gt[0].gt = {};
    EXPECT_THROW(random_search(no_gt, s, kCar), ConstraintError);
}

TEST(SearchSpace, Validation) {
    SearchSpace s = SearchSpace::defaults(Mechanism::mask_iou);
    EXPECT_EQ(s.beta_max, 1);
    EXPECT_NO_THROW(s.validate());
    s.beta_max = 2;
    EXPECT_THROW(s.validate(), ConstraintError);
    SearchSpace e = SearchSpace::defaults(Mechanism::embedding);
    e.iterations = 0;
    EXPECT_THROW(e.validate(), ConstraintError);
    e.iterations = 1;
    e.gamma = {0.8, 0.2, 0.0};
    EXPECT_THROW(e.validate(), ConstraintError);
}

TEST(SearchSpace, SamplesStayInRange) {
    SearchSpace s = small_space(41, 1);
    for (int i = 0; i < 500; ++i) {
        const TrackerConfig c = s.sample(i, kPedestrian);
        ASSERT_GE(c.gamma, 0.0);
        ASSERT_LT(c.gamma, 1.0);
        ASSERT_GE(c.beta, 1);
        ASSERT_LE(c.beta, 3);
        ASSERT_GE(c.mechanism.threshold, 0.0);
        ASSERT_LT(c.mechanism.threshold, 8.0);
    }
}

TEST(Trace, HeaderNamesObjective) {
    const std::vector<TraceEntry> t{{0, {kCar, 0.5, 1, {Mechanism::embedding, 2.0}}, 0.75},
                                    {1, {kCar, 0.25, 2, {Mechanism::embedding, 1.5}}, std::nullopt}};
    EXPECT_EQ(write_trace(t), "iteration,gamma,beta,delta,smotsa\n0,0.5,1,2,0.75\n1,0.25,2,1.5,null\n");
    EXPECT_EQ(write_trace(t, Objective::motsa).substr(0, 30), "iteration,gamma,beta,delta,mot");
}

TEST(ConfigFile, ParsesTrackerConfigs) {
    const auto cfg = parse_tracker_configs("# tuned\ncar.mechanism = mask_iou\ncar.gamma = 0.7\ncar.delta = 0.3\n\n"
                                           "pedestrian.mechanism = embedding\npedestrian.gamma=0.4\npedestrian.beta=5\n"
                                           "pedestrian.delta = 2.5\n");
    ASSERT_EQ(cfg.size(), 2u);
    EXPECT_EQ(cfg[0], (TrackerConfig{kCar, 0.7, 1, {Mechanism::mask_iou, 0.3}}));
    EXPECT_EQ(cfg[1], (TrackerConfig{kPedestrian, 0.4, 5, {Mechanism::embedding, 2.5}}));
    EXPECT_EQ(parse_tracker_configs(write_tracker_configs(cfg)), cfg);
}

TEST(ConfigFile, RejectsBadTrackerConfigs) {
    EXPECT_THROW(parse_tracker_configs("car.speed = 3\n"), FormatError);
    EXPECT_THROW(parse_tracker_configs("truck.gamma = 3\n"), FormatError);
    EXPECT_THROW(parse_tracker_configs("car.mechanism = embedding\ncar.gamma = 0.5\n"), FormatError);
    EXPECT_THROW(parse_tracker_configs("car.mechanism = magic\ncar.gamma = 0.5\ncar.delta = 1\n"), FormatError);
    EXPECT_THROW(parse_tracker_configs("car.gamma = 0.5\ncar.gamma = 0.6\n"), FormatError);
    EXPECT_THROW(parse_tracker_configs("car.mechanism = embedding\ncar.gamma = x\ncar.delta = 1\n"), FormatError);
    EXPECT_THROW(parse_tracker_configs("car.mechanism = bbox_iou\ncar.gamma = 0.5\ncar.delta = 1\ncar.beta = 3\n"),
                 ConstraintError);
}

TEST(ConfigFile, ParsesSearchSpace) {
    const auto s = parse_search_space("mechanism = bbox_center\niterations = 50\nseed = 9\nobjective = motsa\n"
                                      "gamma_min = 0.2\ngamma_step = 0.1\n", 100.0);
    EXPECT_EQ(s.mechanism, Mechanism::bbox_center);
    EXPECT_EQ(s.iterations, 50);
    EXPECT_EQ(s.seed, 9u);
    EXPECT_EQ(s.objective, Objective::motsa);
    EXPECT_EQ(s.gamma.lo, 0.2);
    EXPECT_EQ(s.gamma.step, 0.1);
    EXPECT_EQ(s.delta.hi, 100.0);
    EXPECT_EQ(s.beta_max, 1);
    const auto again = parse_search_space(write_search_space(s));
    EXPECT_EQ(write_search_space(again), write_search_space(s));
    EXPECT_THROW(parse_search_space("mechanism = embedding\nspeed = 2\n"), FormatError);
    EXPECT_THROW(parse_search_space("iterations = 2\n"), FormatError);
    EXPECT_THROW(parse_search_space("mechanism = embedding\nobjective = mota\n"), FormatError);
}
