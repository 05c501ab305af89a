#pragma once

// Deterministic synthetic scenes: ground truth, noisy detections and exact
// optical flow for objects moving along piecewise-linear trajectories.
//
// Objects are drawn in the order they are listed and earlier objects are in front, so each
// mask is clipped by the masks of all earlier objects. Flow at frame t maps
// frame t-1 to t and carries each object's integer translation on its
// visible pixels at t-1, zero elsewhere.

#include <mots/errors.hpp>
#include <mots/io.hpp>
#include <mots/mask.hpp>
#include <mots/sequence.hpp>
#include <mots/tracker.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mots {

enum class Shape { box, ellipse };

/// Top-left corner of the object's box at a frame.
struct Waypoint {
    int frame = 0;
    double x = 0.0;
    double y = 0.0;
};

struct ObjectSpec {
    int class_id = kCar;
    Shape shape = Shape::box;
    int width = 1;
    int height = 1;
    std::vector<Waypoint> trajectory;  // strictly increasing frames; visible from first to last
};

struct NoiseSpec {
    int mask_jitter = 0;               // each box edge moves by up to this many pixels
    double drop_probability = 0.0;
    double embedding_noise = 0.0;      // standard deviation per component
    double confidence_min = 1.0;
    double confidence_max = 1.0;
    double id_swap_probability = 0.0;  // per frame, swaps the embeddings of two same-class detections
};

struct ScenarioSpec {
    int height = 0;
    int width = 0;
    int frames = 0;
    std::vector<ObjectSpec> objects;
    NoiseSpec noise;
    int embedding_dim = 8;
    std::uint64_t seed = 0;
};

namespace detail {

inline double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

// Box-Muller on the generator's raw output, identical on every platform.
inline double standard_normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - unit_uniform(rng);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline Mask rasterize(Shape shape, const Box& box, int height, int width) {
    return shape == Shape::box ? rasterize_box_fill(box, height, width) : rasterize_box_ellipse(box, height, width);
}

// Object identity vector: a scaled axis per object plus a per-layer offset so
// that objects sharing an axis stay apart.
inline std::vector<double> base_embedding(std::size_t object, int dim) {
    std::vector<double> e(std::size_t(dim), 3.0 * double(object / std::size_t(dim)));
    e[object % std::size_t(dim)] += 10.0;
    return e;
}

} // namespace detail

/// Rounded box of an object at a frame, or nullopt outside its trajectory.
inline std::optional<Box> object_box(const ObjectSpec& o, int frame) {
    if (o.trajectory.empty() || frame < o.trajectory.front().frame || frame > o.trajectory.back().frame) {
        return std::nullopt;
    }
    std::size_t k = 0;
    while (k + 1 < o.trajectory.size() && o.trajectory[k + 1].frame <= frame) ++k;
    double x = o.trajectory[k].x;
    double y = o.trajectory[k].y;
    if (k + 1 < o.trajectory.size()) {
        const auto& a = o.trajectory[k];
        const auto& b = o.trajectory[k + 1];
        const double s = double(frame - a.frame) / double(b.frame - a.frame);
        x = a.x + s * (b.x - a.x);
        y = a.y + s * (b.y - a.y);
    }
    const int x0 = int(std::llround(x));
    const int y0 = int(std::llround(y));
    return Box{x0, y0, x0 + o.width - 1, y0 + o.height - 1};
}

inline void validate(const ScenarioSpec& spec) {
    if (spec.height <= 0 || spec.width <= 0) throw ConstraintError("scenario image size must be positive");
    if (spec.frames <= 0) throw ConstraintError("scenario needs at least one frame");
    if (spec.embedding_dim < 1) throw ConstraintError("embedding dimension must be positive");
    const auto& n = spec.noise;
    auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!probability(n.drop_probability) || !probability(n.id_swap_probability)) {
        throw ConstraintError("probabilities must lie in [0, 1]");
    }
    if (!(n.confidence_min >= 0.0 && n.confidence_min <= n.confidence_max && n.confidence_max <= 1.0)) {
        throw ConstraintError("confidence range must satisfy 0 <= min <= max <= 1");
    }
    if (n.mask_jitter < 0 || !(n.embedding_noise >= 0.0) || !std::isfinite(n.embedding_noise)) {
        throw ConstraintError("noise magnitudes must be non-negative");
    }
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        const auto& o = spec.objects[i];
        const std::string who = "object " + std::to_string(i + 1);
        if (o.class_id != kCar && o.class_id != kPedestrian) throw ConstraintError(who + ": class must be car or pedestrian");
        if (o.width < 1 || o.height < 1) throw ConstraintError(who + ": size must be positive");
        if (o.trajectory.empty()) throw ConstraintError(who + ": empty trajectory");
        for (std::size_t k = 0; k < o.trajectory.size(); ++k) {
            const auto& w = o.trajectory[k];
            if (!std::isfinite(w.x) || !std::isfinite(w.y)) throw ConstraintError(who + ": non-finite waypoint");
            if (k > 0 && w.frame <= o.trajectory[k - 1].frame) {
                throw ConstraintError(who + ": waypoint frames must increase");
            }
        }
        if (o.trajectory.front().frame < 0 || o.trajectory.back().frame >= spec.frames) {
            throw ConstraintError(who + ": trajectory leaves the frame range");
        }
        for (int t = o.trajectory.front().frame; t <= o.trajectory.back().frame; ++t) {
            const Box b = *object_box(o, t);
            if (b.x_min < 0 || b.y_min < 0 || b.x_max >= spec.width || b.y_max >= spec.height) {
                throw ConstraintError(who + ": leaves the image at frame " + std::to_string(t));
            }
        }
    }
}

class Scenario;
inline Scenario generate(const ScenarioSpec& spec);

class Scenario {
public:
    SequenceGroundTruth gt;
    DetectionSequence detections;

    const ScenarioSpec& spec() const { return *spec_; }

    /// Flow for the transition frame - 1 -> frame; nullopt outside [1, frames).
    std::optional<FlowField> flow(int frame) const { return flow_for(*spec_, gt, frame); }

    /// Provider sharing this scenario's data; stays valid after the scenario is gone.
    FlowProvider flow_provider() const {
        auto spec = spec_;
        auto truth = std::make_shared<const SequenceGroundTruth>(gt);
        return [spec, truth](int frame) { return flow_for(*spec, *truth, frame); };
    }

    /// Writes gt/<name>.txt, detections/<name>.txt and flow/<name>/<frame>.flo under `root`.
    void write(const std::filesystem::path& root, const std::string& name) const {
        namespace fs = std::filesystem;
        fs::create_directories(root / "gt");
        fs::create_directories(root / "detections");
        fs::create_directories(root / "flow" / name);
        {
            std::ofstream out(root / "gt" / (name + ".txt"), std::ios::binary);
            write_results(out, gt);
        }
        {
            std::ofstream out(root / "detections" / (name + ".txt"), std::ios::binary);
            write_detections(out, detections);
        }
        for (int t = 1; t < spec_->frames; ++t) {
            std::ofstream out(root / "flow" / name / flow_file_name(t), std::ios::binary);
            write_flow(out, *flow(t));
        }
    }

private:
    friend Scenario generate(const ScenarioSpec& spec);

    static std::optional<FlowField> flow_for(const ScenarioSpec& spec, const SequenceGroundTruth& gt, int frame) {
        if (frame < 1 || frame >= spec.frames) return std::nullopt;
        FlowField f(spec.height, spec.width);
        const auto prev = gt.frames.find(frame - 1);
        if (prev == gt.frames.end()) return f;
        const auto h = PixelCount(spec.height);
        for (const auto& obj : prev->second.objects) {
            const auto& o = spec.objects[std::size_t(obj.object_id - 1)];
            const auto a = object_box(o, frame - 1);
            const auto b = object_box(o, frame);
            if (!a || !b) continue;
            const auto du = float(b->x_min - a->x_min);
            const auto dv = float(b->y_min - a->y_min);
            PixelCount pos = 0;
            bool value = false;
            for (auto run : obj.mask.runs()) {
                if (value) {
                    for (PixelCount p = pos; p < pos + run; ++p) {
                        const std::size_t idx = std::size_t(p % h) * std::size_t(spec.width) + std::size_t(p / h);
                        f.u[idx] = du;
                        f.v[idx] = dv;
                    }
                }
                pos += run;
                value = !value;
            }
        }
        return f;
    }

    std::shared_ptr<const ScenarioSpec> spec_;
};

inline Scenario generate(const ScenarioSpec& spec) {
    validate(spec);
    Scenario s;
    s.spec_ = std::make_shared<const ScenarioSpec>(spec);
    std::mt19937_64 rng(spec.seed);
    const auto& noise = spec.noise;
    const int H = spec.height;
    const int W = spec.width;

    for (int t = 0; t < spec.frames; ++t) {
        std::optional<Mask> front;  // union of the full shapes drawn so far
        std::vector<Detection> frame_dets;
        for (std::size_t i = 0; i < spec.objects.size(); ++i) {
            const auto& o = spec.objects[i];
            const auto box = object_box(o, t);
            if (!box) continue;
            const Mask shape = detail::rasterize(o.shape, *box, H, W);
            const Mask visible = front ? subtract(shape, *front) : shape;

            if (!visible.is_empty()) {
                s.gt.frames[t].objects.push_back({int(i) + 1, o.class_id, visible});

                // Noise draws happen in a fixed order per visible object.
                const bool dropped = detail::unit_uniform(rng) < noise.drop_probability;
                std::optional<Mask> det_mask;
                if (noise.mask_jitter == 0) {
                    det_mask = visible;
                } else {
                    auto jitter = [&] {
                        return int(rng() % std::uint64_t(2 * noise.mask_jitter + 1)) - noise.mask_jitter;
                    };
                    Box jb{box->x_min + jitter(), box->y_min + jitter(), box->x_max + jitter(), box->y_max + jitter()};
                    jb.x_min = std::max(jb.x_min, 0);
                    jb.y_min = std::max(jb.y_min, 0);
                    jb.x_max = std::min(jb.x_max, W - 1);
                    jb.y_max = std::min(jb.y_max, H - 1);
                    if (jb.x_min <= jb.x_max && jb.y_min <= jb.y_max) {
                        const Mask jm = detail::rasterize(o.shape, jb, H, W);
                        const Mask clipped = front ? subtract(jm, *front) : jm;
                        if (!clipped.is_empty()) det_mask = clipped;
                    }
                }
                const double confidence =
                    noise.confidence_min + detail::unit_uniform(rng) * (noise.confidence_max - noise.confidence_min);
                std::vector<double> embedding = detail::base_embedding(i, spec.embedding_dim);
                if (noise.embedding_noise > 0.0) {
                    for (auto& e : embedding) e += noise.embedding_noise * detail::standard_normal(rng);
                }
                if (!dropped && det_mask) frame_dets.push_back({o.class_id, confidence, std::move(*det_mask), std::move(embedding)});
            }
            front = front ? unite(*front, shape) : shape;
        }
        if (noise.id_swap_probability > 0.0 && detail::unit_uniform(rng) < noise.id_swap_probability &&
            frame_dets.size() >= 2) {
            const std::size_t a = std::size_t(rng() % frame_dets.size());
            std::vector<std::size_t> partners;
            for (std::size_t j = 0; j < frame_dets.size(); ++j) {
                if (j != a && frame_dets[j].class_id == frame_dets[a].class_id) partners.push_back(j);
            }
            if (!partners.empty()) {
                const std::size_t b = partners[std::size_t(rng() % partners.size())];
                std::swap(frame_dets[a].embedding, frame_dets[b].embedding);
            }
        }
        if (!frame_dets.empty()) s.detections[t] = std::move(frame_dets);
    }
    normalize(s.gt);
    validate_annotations(s.gt);
    return s;
}

// ---------------------------------------------------------------------------
// Ready-made scenarios

/// Three objects in separate horizontal lanes, no noise.
inline ScenarioSpec zero_noise_spec() {
    ScenarioSpec s;
    s.height = 60;
    s.width = 100;
    s.frames = 10;
    s.objects = {
        {kCar, Shape::box, 12, 8, {{0, 5, 4}, {9, 32, 6}}},
        {kCar, Shape::ellipse, 14, 10, {{0, 80, 22}, {9, 53, 22}}},
        {kPedestrian, Shape::ellipse, 6, 12, {{1, 40, 42}, {9, 56, 44}}},
    };
    return s;
}

/// A small car overtakes a large one on the same row. At frame 6 the box
/// centers are one pixel apart, which makes center distance pick the wrong
/// pairing while embeddings stay unambiguous.
inline ScenarioSpec crossing_spec() {
    ScenarioSpec s;
    s.height = 30;
    s.width = 80;
    s.frames = 12;
    s.objects = {
        {kCar, Shape::box, 6, 6, {{0, 10, 12}, {11, 54, 12}}},
        {kCar, Shape::box, 10, 10, {{0, 43, 10}, {11, 21, 10}}},
    };
    return s;
}

/// Frame of the crossing in crossing_spec().
inline constexpr int kCrossingFrame = 6;

/// Many objects wandering between random waypoints; used for timing.
inline ScenarioSpec dense_traffic_spec(int height, int width, int frames, int objects, std::uint64_t seed) {
    ScenarioSpec s;
    s.height = height;
    s.width = width;
    s.frames = frames;
    s.seed = seed;
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](int lo, int hi) { return lo + int(rng() % std::uint64_t(hi - lo + 1)); };
    for (int k = 0; k < objects; ++k) {
        ObjectSpec o;
        o.class_id = k % 3 == 2 ? kPedestrian : kCar;
        o.shape = k % 2 == 0 ? Shape::box : Shape::ellipse;
        o.width = uniform_int(std::max(1, width / 30), std::max(1, width / 8));
        o.height = uniform_int(std::max(1, height / 20), std::max(1, height / 4));
        for (int t = 0;; t += 50) {
            const int f = std::min(t, frames - 1);
            o.trajectory.push_back({f, double(uniform_int(0, width - o.width)), double(uniform_int(0, height - o.height))});
            if (f == frames - 1) break;
        }
        s.objects.push_back(std::move(o));
    }
    return s;
}

} // namespace mots
