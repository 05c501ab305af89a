// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <mots/mots.hpp>

#include <oracle/dense.hpp>
#include <support/scenes.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mots;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail.str("");
            detail << what;
        }
    }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Verdict&)>& body) {
    Verdict v;
    try {
        body(v);
    } catch (const std::exception& e) {
        v.pass = false;
        v.detail.str("");
        v.detail << "exception: " << e.what();
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << " - " << v.detail.str() << std::endl;
}

bool same_counts(const MetricCounts& a, const MetricCounts& b) {
    return a.num_gt == b.num_gt && a.num_tp == b.num_tp && a.num_fp == b.num_fp && a.num_fn == b.num_fn &&
           a.num_ids == b.num_ids && std::fabs(a.soft_tp - b.soft_tp) <= 1e-12;
}

// Rows of '#' and '.', top to bottom.
Mask picture(const std::vector<std::string>& rows) {
    oracle::DenseMask d(int(rows.size()), int(rows.front().size()));
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) d.set(x, y, rows[std::size_t(y)][std::size_t(x)] == '#');
    }
    return oracle::to_mask(d);
}

support::SceneOptions scene_options(std::uint64_t i) {
    support::SceneOptions opt;
    opt.max_objects = 6;  // plus up to two spurious hypotheses stays within the oracle guard
    opt.ignore_regions = i % 2 == 0;
    return opt;
}

constexpr std::uint64_t kScenes = 1200;

void metrics_oracle() {
    criterion("metrics engine equals brute-force evaluation", [](Verdict& v) {
        const auto start = Clock::now();
        std::size_t comparisons = 0;
        for (std::uint64_t i = 0; i < kScenes && v.pass; ++i) {
            const auto s = support::random_scene(i, scene_options(i));
            for (auto mode : {IdSwitchMode::motchallenge, IdSwitchMode::kitti}) {
                EvalOptions o;
                o.id_switch_mode = mode;
                for (int cls : {kCar, kPedestrian}) {
                    const bool ok = same_counts(evaluate_sequence(s.gt, s.hyps, cls, o),
                                                oracle::brute_evaluate(s.gt, s.hyps, cls, o));
                    v.require(ok, "mismatch on scene " + std::to_string(i));
                    ++comparisons;
                }
            }
        }
        const double t = seconds_since(start);
        v.require(t < 60.0, "took " + std::to_string(t) + " s");
        if (v.pass) v.detail << kScenes << " scenes, " << comparisons << " comparisons, " << t << " s";
    });
}

void assignment_oracle() {
    criterion("assignment equals exhaustive enumeration", [](Verdict& v) {
        const auto start = Clock::now();
        std::mt19937_64 rng(2024);
        std::uniform_int_distribution<std::size_t> size(0, 7);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<int> small(0, 4);
        const int total = 12000;
        for (int i = 0; i < total && v.pass; ++i) {
            CostMatrix m(size(rng), size(rng));
            const double density = unit(rng);
            const bool integer = i % 2 == 0;  // integer costs produce many ties
            for (std::size_t r = 0; r < m.rows; ++r) {
                for (std::size_t c = 0; c < m.cols; ++c) {
                    m.at(r, c) = integer ? double(small(rng)) : unit(rng);
                    m.set_feasible(r, c, unit(rng) < density);
                }
            }
            const auto fast = solve_assignment(m);
            const auto slow = oracle::brute_assignment(m);
            v.require(fast.row_to_col == slow.row_to_col && fast.matched == slow.matched &&
                          fast.total_cost == slow.total_cost,
                      "mismatch on matrix " + std::to_string(i));
        }
        const double t = seconds_since(start);
        v.require(t < 30.0, "took " + std::to_string(t) + " s");
        if (v.pass) v.detail << total << " matrices, " << t << " s";
    });
}

void codec() {
    criterion("RLE round trip and RLE-native IoU", [](Verdict& v) {
        const auto start = Clock::now();
        std::mt19937_64 rng(77);
        std::uniform_int_distribution<int> side(1, 48);
        const int total = 10000;
        for (int i = 0; i < total && v.pass; ++i) {
            const int h = side(rng);
            const int w = side(rng);
            const Mask m = support::random_mask(rng, h, w);
            const std::string text = encode_rle(m);
            v.require(decode_rle(text, h, w) == m, "round trip failed on mask " + std::to_string(i));
            v.require(text == oracle::coco_to_string(oracle::coco_encode_counts(oracle::to_dense(m))),
                      "encoding differs from the reference on mask " + std::to_string(i));
            const Mask other = support::random_mask(rng, h, w);
            v.require(iou(m, other) == oracle::dense_iou(oracle::to_dense(m), oracle::to_dense(other)),
                      "IoU differs on pair " + std::to_string(i));
        }
        const double t = seconds_since(start);
        v.require(t < 30.0, "took " + std::to_string(t) + " s");
        if (v.pass) v.detail << total << " round trips, " << total << " IoU pairs, " << t << " s";
    });
}

void structural_claims() {
    criterion("structural identities on every evaluated scenario", [](Verdict& v) {
        std::size_t checked = 0;
        for (std::uint64_t i = 0; i < kScenes && v.pass; ++i) {
            const auto s = support::random_scene(i, scene_options(i));
            for (int cls : {kCar, kPedestrian}) {
                const auto detail = evaluate_sequence_detailed(s.gt, s.hyps, cls);
                const auto& c = detail.counts;
                const Metrics m = compute_metrics(c);
                const std::string where = "scene " + std::to_string(i);
                v.require(c.num_tp + c.num_fn == c.num_gt, where + ": TP + FN != GT");
                if (c.num_tp > 0) v.require(*m.motsp > 0.5 && *m.motsp <= 1.0, where + ": MOTSP outside (0.5, 1]");
                v.require(motsa_forms_agree(c), where + ": MOTSA forms disagree");
                if (m.motsa) v.require(*m.smotsa <= *m.motsa, where + ": sMOTSA > MOTSA");
                for (const auto& f : detail.frames) {
                    std::vector<int> hits(f.gt_ids.size(), 0);
                    for (const auto& p : f.matching.pairs) ++hits[p.gt];
                    for (int h : hits) v.require(h <= 1, where + ": ground truth matched twice");
                }
                ++checked;
            }
        }
        if (v.pass) v.detail << checked << " evaluations";
    });
}

void negativity() {
    criterion("sMOTSA below -1 is reachable", [](Verdict& v) {
        // One object found with IoU 4/5, four false positives elsewhere.
        SequenceGroundTruth gt;
        TrackSet hyps;
        gt.frames[0].objects.push_back({1, kCar, picture({"#####.....", "..........", "..........", ".........."})});
        hyps.frames[0].objects = {
            {1, kCar, picture({"####......", "..........", "..........", ".........."})},
            {2, kCar, picture({"..........", "##........", "..........", ".........."})},
            {3, kCar, picture({"..........", "....##....", "..........", ".........."})},
            {4, kCar, picture({"..........", "..........", "###.......", ".........."})},
            {5, kCar, picture({"..........", "..........", "..........", "........##"})},
        };
        const auto c = evaluate_sequence(gt, hyps, kCar);
        const double expected = (0.8 - 4.0 - 0.0) / 1.0;
        const double got = *compute_metrics(c).smotsa;
        v.require(got < -1.0, "sMOTSA not below -1");
        v.require(std::fabs(got - expected) <= 1e-12, "sMOTSA differs from hand value");
        v.detail << "sMOTSA = " << got << ", hand value " << expected;
    });
}

void gap_semantics() {
    criterion("identity switch across a tracking gap", [](Verdict& v) {
        // Ground truth present at frames 1, 2, 3; matched by A at 1 and B at 3.
        const Mask m = picture({"###", "###"});
        SequenceGroundTruth gt;
        TrackSet hyps;
        for (int f : {1, 2, 3}) gt.frames[f].objects.push_back({1, kCar, m});
        hyps.frames[1].objects.push_back({10, kCar, m});
        hyps.frames[3].objects.push_back({11, kCar, m});
        EvalOptions kitti;
        kitti.id_switch_mode = IdSwitchMode::kitti;
        const auto mot = evaluate_sequence(gt, hyps, kCar).num_ids;
        const auto kit = evaluate_sequence(gt, hyps, kCar, kitti).num_ids;
        v.require(mot == 1, "MOTChallenge mode gave " + std::to_string(mot));
        v.require(kit == 0, "KITTI mode gave " + std::to_string(kit));
        v.detail << "MOTChallenge IDS = " << mot << ", KITTI IDS = " << kit;
    });
}

LabeledEmbeddings random_batch(std::mt19937_64& rng, std::size_t max_n) {
    std::uniform_int_distribution<std::size_t> size(1, max_n);
    std::uniform_int_distribution<int> dim(1, 8);
    std::uniform_int_distribution<int> ids(1, 5);
    std::normal_distribution<double> n;
    LabeledEmbeddings b;
    const std::size_t count = size(rng);
    const int d = dim(rng);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> x(static_cast<std::size_t>(d));
        for (auto& e : x) e = 0.4 * n(rng);
        b.vectors.push_back(std::move(x));
        b.ids.push_back(ids(rng));
    }
    b.margin = 0.05 + 0.5 * std::uniform_real_distribution<double>()(rng);
    return b;
}

void losses() {
    criterion("losses equal enumeration, gradients equal finite differences", [](Verdict& v) {
        std::mt19937_64 rng(99);
        const int batches = 1000;
        for (int i = 0; i < batches && v.pass; ++i) {
            const auto b = random_batch(rng, 64);
            const auto slow = oracle::brute_losses(b);
            const std::string where = "batch " + std::to_string(i);
            if (slow.batch_hard) v.require(std::fabs(batch_hard_loss(b) - *slow.batch_hard) <= 1e-12, where + ": batch-hard");
            if (slow.batch_all) v.require(std::fabs(batch_all_loss(b) - *slow.batch_all) <= 1e-12, where + ": batch-all");
            v.require(std::fabs(contrastive_loss(b) - slow.contrastive) <= 1e-12, where + ": contrastive");
        }

        int smooth_points = 0;
        double worst = 0.0;
        for (int i = 0; smooth_points < 240 && i < 2000 && v.pass; ++i) {
            const auto b = random_batch(rng, 12);
            const auto kind = static_cast<LossKind>(i % 3);
            LossGradient g;
            try {
                g = loss_gradient(kind, b, 1e-4);
            } catch (const UndefinedLossError&) {
                continue;
            }
            if (!g.smooth) continue;
            ++smooth_points;
            auto probe = b;
            for (std::size_t p = 0; p < b.vectors.size(); ++p) {
                for (std::size_t k = 0; k < b.vectors[p].size(); ++k) {
                    const double x = b.vectors[p][k];
                    probe.vectors[p][k] = x + 1e-6;
                    const double up = loss_value(kind, probe);
                    probe.vectors[p][k] = x - 1e-6;
                    const double down = loss_value(kind, probe);
                    probe.vectors[p][k] = x;
                    const double fd = (up - down) / 2e-6;
                    const double err = std::fabs(fd - g.gradients[p][k]) / std::max(1.0, std::fabs(g.gradients[p][k]));
                    worst = std::max(worst, err);
                }
            }
        }
        v.require(worst <= 1e-5, "gradient error " + std::to_string(worst));
        v.require(smooth_points >= 200, "only " + std::to_string(smooth_points) + " smooth points");

        const LabeledEmbeddings same{{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, {1, 2, 1, 2}, 0.2};
        v.require(batch_hard_loss(same) == 0.2, "identical vectors do not give the margin");
        if (v.pass) {
            v.detail << batches << " batches, " << smooth_points << " gradient points, worst relative error " << worst;
        }
    });
}

void tracker_semantics() {
    criterion("tracker semantics on constructed fixtures", [](Verdict& v) {
        const Scenario zero = generate(zero_noise_spec());
        const std::vector<AssociationMechanism> mechanisms{
            {Mechanism::embedding, 1.0}, {Mechanism::mask_iou, 0.5}, {Mechanism::bbox_iou, 0.5}, {Mechanism::bbox_center, 10.0}};
        for (const auto& mech : mechanisms) {
            const std::vector<TrackerConfig> cfg{{kCar, 0.5, 1, mech}, {kPedestrian, 0.5, 1, mech}};
            const TrackSet out = run_tracker(zero.detections, cfg, zero.flow_provider());
            validate_annotations(out);
            v.require(write_results(out) == write_results(run_tracker(zero.detections, cfg, zero.flow_provider())),
                      "rerun differs");
            for (int cls : {kCar, kPedestrian}) {
                const auto c = evaluate_sequence(zero.gt, out, cls);
                const Metrics m = compute_metrics(c);
                v.require(m.smotsa == 1.0 && m.motsa == 1.0 && m.motsp == 1.0 && c.num_ids == 0,
                          std::string(mechanism_name(mech.kind)) + " is not perfect on the zero-noise fixture");
            }
        }

        const Scenario crossing = generate(crossing_spec());
        auto crossing_ids = [&](AssociationMechanism mech) {
            const std::vector<TrackerConfig> cfg{{kCar, 0.5, 1, mech}};
            const TrackSet out = run_tracker(crossing.detections, cfg, crossing.flow_provider());
            validate_annotations(out);
            return evaluate_sequence(crossing.gt, out, kCar).num_ids;
        };
        const auto embed = crossing_ids({Mechanism::embedding, 1.0});
        const auto center = crossing_ids({Mechanism::bbox_center, 10.0});
        v.require(embed == 0, "embedding switched identities on the crossing fixture");
        v.require(center >= 1, "center distance did not switch identities on the crossing fixture");

        ScenarioSpec noisy = dense_traffic_spec(80, 160, 60, 12, 5);
        noisy.noise = {2, 0.1, 0.8, 0.2, 1.0, 0.1};
        const Scenario n = generate(noisy);
        for (const auto& mech : mechanisms) {
            const std::vector<TrackerConfig> cfg{{kCar, 0.3, 1, mech}, {kPedestrian, 0.3, 1, mech}};
            const TrackSet a = run_tracker(n.detections, cfg, n.flow_provider());
            validate_annotations(a);
            v.require(write_results(a) == write_results(run_tracker(n.detections, cfg, n.flow_provider())),
                      "rerun differs on the noisy fixture");
        }
        if (v.pass) v.detail << "crossing IDS: embedding " << embed << ", bbox_center " << center;
    });
}

std::vector<TrainingSequence> training_set() {
    std::vector<TrainingSequence> out;
    for (std::uint64_t seed : {11u, 12u}) {
        ScenarioSpec spec = dense_traffic_spec(48, 96, 24, 6, seed);
        spec.noise = {1, 0.1, 1.0, 0.2, 1.0, 0.1};
        const Scenario s = generate(spec);
        out.push_back({"seq" + std::to_string(seed), s.gt, s.detections, s.flow_provider()});
    }
    return out;
}

void tuner() {
    criterion("tuner determinism, exact re-evaluation and grid oracle", [](Verdict& v) {
        const auto seqs = training_set();
        SearchSpace space = SearchSpace::defaults(Mechanism::embedding);
        space.beta_max = 4;
        space.delta = {0.0, 6.0, 0.0};
        space.iterations = 40;
        space.seed = 314;
        const auto a = random_search(seqs, space, kCar);
        const auto b = random_search(seqs, space, kCar);
        v.require(write_trace(a.trace) == write_trace(b.trace), "traces differ for the same seed");
        const auto again = objective_value(evaluate_config(seqs, a.best), Objective::smotsa);
        v.require(again && *again == a.best_score, "winner does not re-evaluate to its score");

        // Discretized space small enough that the search visits every point.
        SearchSpace grid = SearchSpace::defaults(Mechanism::embedding);
        grid.gamma = {0.0, 0.75, 0.25};
        grid.beta_min = 1;
        grid.beta_max = 2;
        grid.delta = {1.0, 4.0, 1.0};
        grid.iterations = 400;
        grid.seed = 7;
        double oracle_best = -1e300;
        for (double g : grid.gamma.grid()) {
            for (int beta = grid.beta_min; beta <= grid.beta_max; ++beta) {
                for (double d : grid.delta.grid()) {
                    const TrackerConfig c{kCar, g, beta, {Mechanism::embedding, d}};
                    oracle_best = std::max(oracle_best, *objective_value(evaluate_config(seqs, c), Objective::smotsa));
                }
            }
        }
        const auto r = random_search(seqs, grid, kCar);
        v.require(r.best_score == oracle_best, "search best " + std::to_string(r.best_score) + " vs grid best " +
                                                   std::to_string(oracle_best));
        if (v.pass) v.detail << "winner sMOTSA " << r.best_score << " equals grid optimum";
    });
}

void performance() {
    criterion("evaluation of 1000 frames at 1242x375 with 20 objects under 10 s", [](Verdict& v) {
        const ScenarioSpec spec = dense_traffic_spec(375, 1242, 1000, 20, 1);
        const Scenario s = generate(spec);
        // Hypotheses: ground truth shifted one pixel right, with relabeled ids
        // and a few objects missing.
        const FlowField shift = FlowField::uniform(spec.height, spec.width, 1.0f, 0.0f);
        TrackSet hyps;
        std::size_t objects = 0;
        for (const auto& [t, fa] : s.gt.frames) {
            for (const auto& o : fa.objects) {
                ++objects;
                if ((t + o.object_id) % 17 == 0) continue;
                const Mask moved = warp(o.mask, shift);
                if (moved.is_empty()) continue;
                const int id = t < 500 ? o.object_id : o.object_id + 100;
                hyps.frames[t].objects.push_back({id, o.class_id, moved});
            }
        }
        normalize(hyps);
        const auto start = Clock::now();
        MetricCounts total;
        for (int cls : {kCar, kPedestrian}) total += evaluate_sequence(s.gt, hyps, cls);
        const double t = seconds_since(start);
        v.require(t < 10.0, "took " + std::to_string(t) + " s");
        v.require(total.num_gt == objects, "ground-truth count mismatch");
        v.require(total.num_tp > objects / 2, "shifted hypotheses were not matched");
        v.detail << objects << " ground-truth masks (" << total.num_tp << " matched) evaluated in " << t << " s";
    });
}

} // namespace

int main() {
    metrics_oracle();
    assignment_oracle();
    codec();
    structural_claims();
    negativity();
    gap_semantics();
    losses();
    tracker_semantics();
    tuner();
    performance();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
