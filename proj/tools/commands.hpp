#pragma once

// Subcommands of the `mots` tool. Each command takes parsed arguments, writes
// human-readable output to `out`, diagnostics to `err`, and returns the exit
// status: 0 success, 1 internal error, 2 format error, 3 constraint violation.

#include <mots/mots.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mots::cli {

namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kInternal = 1, kFormat = 2, kConstraint = 3 };

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kFormat;
    } catch (const ConstraintError& e) {
        err << "constraint violation: " << e.what() << '\n';
        return kConstraint;
    } catch (const UndefinedLossError& e) {
        err << "constraint violation: " << e.what() << '\n';
        return kConstraint;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternal;
    }
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Writes to a temporary sibling and renames it into place.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

/// Re-raises parse errors with the file name in front.
template <class Fn>
auto with_file(const fs::path& path, Fn&& fn) {
    try {
        return fn();
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const ConstraintError& e) {
        throw ConstraintError(path.string() + ": " + e.what());
    }
}

inline SequenceAnnotations load_annotations(const fs::path& path) {
    return with_file(path, [&] { return parse_annotations(read_file(path)); });
}

inline DetectionSequence load_detections(const fs::path& path) {
    return with_file(path, [&] { return parse_detections(read_file(path)); });
}

/// `.txt` files of a directory keyed by stem.
inline std::map<std::string, fs::path> list_sequences(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") out[entry.path().stem().string()] = entry.path();
    }
    return out;
}

/// Lines `gt_stem results_stem`.
inline std::map<std::string, std::string> load_pairs(const fs::path& path) {
    std::map<std::string, std::string> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string a, b, extra;
        if (!(fields >> a)) continue;
        if (!(fields >> b) || (fields >> extra)) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected two names");
        }
        out[a] = b;
    }
    return out;
}

inline std::vector<int> parse_classes(const std::string& text) {
    std::vector<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        std::optional<int> id = class_from_name(item);
        if (!id && (item == "1" || item == "2")) id = std::stoi(item);
        if (!id || *id == kIgnoreRegion) throw FormatError("unknown class '" + item + "'");
        if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    }
    if (out.empty()) throw FormatError("no classes selected");
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
    std::vector<fs::path> paths;  // files or directories of .txt files
    bool detections = false;
};

inline int cmd_validate(const ValidateArgs& args, std::ostream& out, std::ostream& err) {
    std::vector<fs::path> files;
    for (const auto& p : args.paths) {
        if (fs::is_directory(p)) {
            for (const auto& [stem, f] : list_sequences(p)) files.push_back(f);
        } else {
            files.push_back(p);
        }
    }
    std::set<int> codes;
    for (const auto& f : files) {
        const int code = guarded(err, [&] {
            if (args.detections) {
                load_detections(f);
            } else {
                load_annotations(f);
            }
            out << "ok " << f.string() << '\n';
            return int(kOk);
        });
        codes.insert(code);
    }
    for (int code : {kFormat, kConstraint, kInternal}) {
        if (codes.count(code)) return code;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    fs::path gt_dir;
    fs::path results_dir;
    std::vector<int> classes{kCar, kPedestrian};
    EvalOptions options;
    std::optional<fs::path> pairs;
    std::optional<fs::path> output;
};

inline std::string format_metric(const std::optional<double>& v) {
    if (!v) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << *v;
    return s.str();
}

inline std::string summary_table(const MetricReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "class" << std::right << std::setw(9) << "sMOTSA" << std::setw(9) << "MOTSA"
        << std::setw(9) << "MOTSP" << std::setw(8) << "GT" << std::setw(8) << "TP" << std::setw(8) << "FP"
        << std::setw(8) << "FN" << std::setw(8) << "IDS" << '\n';
    auto row = [&](const std::string& name, const MetricCounts& c) {
        const Metrics m = compute_metrics(c);
        out << std::left << std::setw(12) << name << std::right << std::setw(9) << format_metric(m.smotsa)
            << std::setw(9) << format_metric(m.motsa) << std::setw(9) << format_metric(m.motsp) << std::setw(8)
            << c.num_gt << std::setw(8) << c.num_tp << std::setw(8) << c.num_fp << std::setw(8) << c.num_fn
            << std::setw(8) << c.num_ids << '\n';
    };
    for (const auto& [cls, counts] : report.by_class()) row(class_name(cls), counts);
    row("all", report.overall());
    return out.str();
}

/// Evaluates every ground-truth sequence against its results file. A
/// sequence without a results file counts as an empty tracker output; a
/// results file without ground truth is an error.
inline MetricReport evaluate_directories(const EvalArgs& args) {
    if (!(args.options.ignore_threshold > 0.0 && args.options.ignore_threshold <= 1.0)) {
        throw ConstraintError("ignore threshold must lie in (0, 1]");
    }
    const auto gt_files = list_sequences(args.gt_dir);
    const auto result_files = list_sequences(args.results_dir);
    std::map<std::string, std::string> pairing;
    if (args.pairs) {
        pairing = load_pairs(*args.pairs);
    } else {
        for (const auto& [stem, path] : gt_files) pairing[stem] = stem;
    }
    std::set<std::string> used_results;
    for (const auto& [gt_stem, res_stem] : pairing) {
        if (!gt_files.count(gt_stem)) throw FormatError("no ground truth for sequence '" + gt_stem + "'");
        used_results.insert(res_stem);
    }
    for (const auto& [stem, path] : result_files) {
        if (!used_results.count(stem)) throw FormatError("results file " + path.string() + " has no ground-truth counterpart");
    }

    MetricReport report;
    for (const auto& [gt_stem, res_stem] : pairing) {
        const SequenceGroundTruth gt = load_annotations(gt_files.at(gt_stem));
        TrackSet hyps;
        if (const auto it = result_files.find(res_stem); it != result_files.end()) hyps = load_annotations(it->second);
        auto& per_class = report.sequences[gt_stem];
        for (int cls : args.classes) {
            per_class[cls] = with_file(gt_files.at(gt_stem), [&] { return evaluate_sequence(gt, hyps, cls, args.options); });
        }
    }
    return report;
}

inline int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const MetricReport report = evaluate_directories(args);
        if (args.output) write_file_atomic(*args.output, write_report(report));
        out << summary_table(report);
        return int(kOk);
    });
}

// ---------------------------------------------------------------------------
// track

struct TrackArgs {
    fs::path detections_dir;
    std::optional<fs::path> flow_dir;  // holds one sub-directory per sequence
    fs::path config;
    fs::path output_dir;
};

inline int cmd_track(const TrackArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto configs = with_file(args.config, [&] { return parse_tracker_configs(read_file(args.config)); });
        if (configs.empty()) throw FormatError(args.config.string() + ": no tracker configuration");
        for (const auto& [stem, path] : list_sequences(args.detections_dir)) {
            const DetectionSequence dets = load_detections(path);
            const FlowProvider flow = args.flow_dir ? FlowProvider(flow_from_directory(*args.flow_dir / stem)) : no_flow();
            const TrackSet tracks = with_file(path, [&] { return run_tracker(dets, configs, flow); });
            write_file_atomic(args.output_dir / (stem + ".txt"), write_results(tracks));
            out << "tracked " << stem << '\n';
        }
        return int(kOk);
    });
}

// ---------------------------------------------------------------------------
// tune

struct TuneArgs {
    fs::path gt_dir;
    fs::path detections_dir;
    std::optional<fs::path> flow_dir;
    fs::path space;
    std::optional<std::uint64_t> seed;
    std::vector<int> classes{kCar, kPedestrian};
    EvalOptions options;
    fs::path output;                   // winning tracker configuration
    std::optional<fs::path> trace_dir; // one trace_<class>.csv per class
};

inline std::vector<TrainingSequence> load_training(const TuneArgs& args) {
    std::vector<TrainingSequence> out;
    const auto det_files = list_sequences(args.detections_dir);
    for (const auto& [stem, path] : list_sequences(args.gt_dir)) {
        const auto det = det_files.find(stem);
        if (det == det_files.end()) throw FormatError("no detections for training sequence '" + stem + "'");
        TrainingSequence seq;
        seq.name = stem;
        seq.gt = load_annotations(path);
        seq.detections = load_detections(det->second);
        if (args.flow_dir) seq.flow = flow_from_directory(*args.flow_dir / stem);
        out.push_back(std::move(seq));
    }
    for (const auto& [stem, path] : det_files) {
        if (!list_sequences(args.gt_dir).count(stem)) {
            throw FormatError("detections " + path.string() + " have no ground-truth counterpart");
        }
    }
    if (out.empty()) throw FormatError("no training sequences in " + args.gt_dir.string());
    return out;
}

inline double image_diagonal(const std::vector<TrainingSequence>& seqs) {
    for (const auto& s : seqs) {
        for (const auto& [frame, fa] : s.gt.frames) {
            for (const auto* list : {&fa.objects, &fa.ignore_regions}) {
                if (!list->empty()) return std::hypot(double(list->front().mask.width()), double(list->front().mask.height()));
            }
        }
    }
    return 0.0;
}

inline int cmd_tune(const TuneArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto training = load_training(args);
        const std::string space_text = read_file(args.space);
        SearchSpace space = with_file(args.space, [&] { return parse_search_space(space_text, image_diagonal(training)); });
        if (args.seed) space.seed = *args.seed;
        std::vector<TrackerConfig> winners;
        for (int cls : args.classes) {
            const TuneResult r = random_search(training, space, cls, args.options);
            winners.push_back(r.best);
            if (args.trace_dir) {
                write_file_atomic(*args.trace_dir / ("trace_" + class_name(cls) + ".csv"),
                                  write_trace(r.trace, space.objective));
            }
            out << class_name(cls) << ": " << objective_name(space.objective) << ' '
                << detail::format_double(r.best_score) << " gamma " << detail::format_double(r.best.gamma) << " beta "
                << r.best.beta << " delta " << detail::format_double(r.best.mechanism.threshold) << '\n';
        }
        write_file_atomic(args.output, write_tracker_configs(winners));
        return int(kOk);
    });
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string scenario = "zero_noise";  // zero_noise, crossing or dense
    std::string name;                     // sequence name, defaults to the scenario
    fs::path output_dir;
    std::uint64_t seed = 0;
    NoiseSpec noise;
};

inline ScenarioSpec scenario_spec(const std::string& name, std::uint64_t seed) {
    if (name == "zero_noise") return zero_noise_spec();
    if (name == "crossing") return crossing_spec();
    if (name == "dense") return dense_traffic_spec(375, 1242, 200, 20, seed);
    throw FormatError("unknown scenario '" + name + "'");
}

inline int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        ScenarioSpec spec = scenario_spec(args.scenario, args.seed);
        spec.seed = args.seed;
        spec.noise = args.noise;
        const Scenario s = generate(spec);
        const std::string name = args.name.empty() ? args.scenario : args.name;
        s.write(args.output_dir, name);
        out << "wrote " << name << " (" << spec.frames << " frames, " << spec.objects.size() << " objects) to "
            << args.output_dir.string() << '\n';
        return int(kOk);
    });
}

// ---------------------------------------------------------------------------
// Argument parsing

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-object tracking and segmentation toolkit"};
    app.require_subcommand(1);

    ValidateArgs validate;
    auto* v = app.add_subcommand("validate", "Check annotation, result or detection files");
    v->add_option("paths", validate.paths, "Files or directories")->required();
    v->add_flag("--detections", validate.detections, "Files are detection files");

    EvalArgs eval;
    std::string eval_classes = "car,pedestrian";
    std::string id_mode = "motchallenge";
    std::string eval_output;
    std::string eval_pairs;
    auto* e = app.add_subcommand("eval", "Evaluate tracker results against ground truth");
    e->add_option("--gt", eval.gt_dir, "Ground-truth directory")->required();
    e->add_option("--results", eval.results_dir, "Results directory")->required();
    e->add_option("--classes", eval_classes, "Comma-separated classes");
    e->add_option("--ignore-threshold", eval.options.ignore_threshold, "Ignore-region coverage threshold");
    e->add_option("--id-switch", id_mode, "motchallenge or kitti")->check(CLI::IsMember({"motchallenge", "kitti"}));
    e->add_option("--pairs", eval_pairs, "File of `gt_name results_name` lines");
    e->add_option("--output", eval_output, "Report file (JSON)");

    TrackArgs track;
    std::string track_flow;
    auto* t = app.add_subcommand("track", "Link detections into tracks");
    t->add_option("--detections", track.detections_dir, "Detections directory")->required();
    t->add_option("--flow", track_flow, "Flow directory with one sub-directory per sequence");
    t->add_option("--config", track.config, "Tracker configuration file")->required();
    t->add_option("--output", track.output_dir, "Results directory")->required();

    TuneArgs tune;
    std::string tune_classes = "car,pedestrian";
    std::string tune_flow;
    std::string tune_trace;
    std::string tune_id_mode = "motchallenge";
    std::uint64_t tune_seed = 0;
    auto* u = app.add_subcommand("tune", "Random search over tracker thresholds");
    u->add_option("--gt", tune.gt_dir, "Training ground-truth directory")->required();
    u->add_option("--detections", tune.detections_dir, "Training detections directory")->required();
    u->add_option("--flow", tune_flow, "Flow directory with one sub-directory per sequence");
    u->add_option("--space", tune.space, "Search space file")->required();
    auto* seed_opt = u->add_option("--seed", tune_seed, "Random seed (overrides the space file)");
    u->add_option("--classes", tune_classes, "Comma-separated classes");
    u->add_option("--ignore-threshold", tune.options.ignore_threshold, "Ignore-region coverage threshold");
    u->add_option("--id-switch", tune_id_mode, "motchallenge or kitti")->check(CLI::IsMember({"motchallenge", "kitti"}));
    u->add_option("--output", tune.output, "Winning configuration file")->required();
    u->add_option("--trace-dir", tune_trace, "Directory for per-class trace files");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic scenario");
    g->add_option("--scenario", gen.scenario, "zero_noise, crossing or dense")
        ->check(CLI::IsMember({"zero_noise", "crossing", "dense"}));
    g->add_option("--name", gen.name, "Sequence name");
    g->add_option("--output", gen.output_dir, "Output directory")->required();
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--jitter", gen.noise.mask_jitter, "Box edge jitter in pixels");
    g->add_option("--drop", gen.noise.drop_probability, "Detection drop probability");
    g->add_option("--embedding-noise", gen.noise.embedding_noise, "Embedding noise standard deviation");
    g->add_option("--confidence-min", gen.noise.confidence_min, "Lowest detection confidence");
    g->add_option("--confidence-max", gen.noise.confidence_max, "Highest detection confidence");
    g->add_option("--swap", gen.noise.id_swap_probability, "Per-frame embedding swap probability");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kOk : kFormat;
    }

    auto mode = [](const std::string& m) { return m == "kitti" ? IdSwitchMode::kitti : IdSwitchMode::motchallenge; };
    if (*v) return cmd_validate(validate, out, err);
    if (*e) {
        return guarded(err, [&] {
            eval.classes = parse_classes(eval_classes);
            eval.options.id_switch_mode = mode(id_mode);
            if (!eval_pairs.empty()) eval.pairs = eval_pairs;
            if (!eval_output.empty()) eval.output = eval_output;
            return cmd_eval(eval, out, err);
        });
    }
    if (*t) {
        if (!track_flow.empty()) track.flow_dir = track_flow;
        return cmd_track(track, out, err);
    }
    if (*u) {
        return guarded(err, [&] {
            tune.classes = parse_classes(tune_classes);
            tune.options.id_switch_mode = mode(tune_id_mode);
            if (!tune_flow.empty()) tune.flow_dir = tune_flow;
            if (!tune_trace.empty()) tune.trace_dir = tune_trace;
            if (seed_opt->count() > 0) tune.seed = tune_seed;
            return cmd_tune(tune, out, err);
        });
    }
    return cmd_generate(gen, out, err);
}

} // namespace mots::cli
