#pragma once

// Text and binary file formats.
//
//   annotations / results   frame object_id class_id height width rle
//   detections              frame class_id confidence height width rle e_1 ... e_E
//   optical flow (.flo)     float32 magic 202021.25, int32 width, int32 height,
//                           then height*width interleaved (u, v) float32, row-major,
//                           little-endian
//   metric report           JSON document

#include <mots/errors.hpp>
#include <mots/mask.hpp>
#include <mots/metrics.hpp>
#include <mots/sequence.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace mots {

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

[[noreturn]] inline void fail_line(std::size_t line_no, const std::string& message) {
    throw FormatError("line " + std::to_string(line_no) + ": " + message);
}

template <class T>
T parse_number(std::string_view field, std::size_t line_no, const char* name) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) fail_line(line_no, std::string("invalid ") + name + " '" + std::string(field) + "'");
    return value;
}

inline Mask parse_mask(std::string_view rle, int height, int width, std::size_t line_no) {
    if (height <= 0 || width <= 0) fail_line(line_no, "image dimensions must be positive");
    try {
        return decode_rle(rle, height, width);
    } catch (const FormatError& e) {
        fail_line(line_no, e.what());
    }
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Annotations and tracker results

inline SequenceAnnotations parse_annotations(std::istream& in) {
    SequenceAnnotations seq;
    std::map<std::pair<int, int>, std::size_t> seen;  // (frame, object_id) -> line
    std::map<int, std::pair<int, int>> frame_dims;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = detail::split_fields(line);
        if (f.empty()) continue;
        if (f.size() != 6) detail::fail_line(line_no, "expected 6 fields, got " + std::to_string(f.size()));
        const int frame = detail::parse_number<int>(f[0], line_no, "frame");
        const int object_id = detail::parse_number<int>(f[1], line_no, "object id");
        const int class_id = detail::parse_number<int>(f[2], line_no, "class id");
        const int height = detail::parse_number<int>(f[3], line_no, "height");
        const int width = detail::parse_number<int>(f[4], line_no, "width");
        if (frame < 0) detail::fail_line(line_no, "frame must be non-negative");
        if (object_id <= 0) detail::fail_line(line_no, "object id must be positive");
        if (!is_known_class(class_id)) detail::fail_line(line_no, "unknown class id " + std::to_string(class_id));
        Mask mask = detail::parse_mask(f[5], height, width, line_no);

        auto [dims, inserted] = frame_dims.try_emplace(frame, height, width);
        if (!inserted && dims->second != std::pair{height, width}) {
            throw DimensionError("line " + std::to_string(line_no) + ": frame " + std::to_string(frame) + " uses " +
                                 std::to_string(dims->second.first) + "x" + std::to_string(dims->second.second) +
                                 ", got " + std::to_string(height) + "x" + std::to_string(width));
        }
        auto& fa = seq.frames[frame];
        if (class_id == kIgnoreRegion) {
            fa.ignore_regions.push_back({object_id, class_id, std::move(mask)});
            continue;
        }
        if (mask.is_empty()) {
            throw ConstraintError("line " + std::to_string(line_no) + ": object " + std::to_string(object_id) +
                                  " in frame " + std::to_string(frame) + " has an empty mask");
        }
        auto [prev, fresh] = seen.try_emplace({frame, object_id}, line_no);
        if (!fresh) {
            throw ConstraintError("line " + std::to_string(line_no) + ": duplicate object " + std::to_string(object_id) +
                                  " in frame " + std::to_string(frame) + " (first on line " +
                                  std::to_string(prev->second) + ")");
        }
        fa.objects.push_back({object_id, class_id, std::move(mask)});
    }
    normalize(seq);
    validate_annotations(seq);
    return seq;
}

inline SequenceAnnotations parse_annotations(const std::string& text) {
    std::istringstream in(text);
    return parse_annotations(in);
}

/// One line per record, ascending (frame, object_id). Refuses overlapping masks.
inline void write_results(std::ostream& out, const TrackSet& tracks) {
    validate_annotations(tracks);
    for (const auto& [frame, fa] : tracks.frames) {
        std::vector<const ObjectMask*> records;
        for (const auto& o : fa.objects) records.push_back(&o);
        for (const auto& o : fa.ignore_regions) records.push_back(&o);
        std::stable_sort(records.begin(), records.end(),
                         [](const ObjectMask* a, const ObjectMask* b) { return a->object_id < b->object_id; });
        for (const auto* o : records) {
            out << frame << ' ' << o->object_id << ' ' << o->class_id << ' ' << o->mask.height() << ' '
                << o->mask.width() << ' ' << encode_rle(o->mask) << '\n';
        }
    }
}

inline std::string write_results(const TrackSet& tracks) {
    std::ostringstream out;
    write_results(out, tracks);
    return out.str();
}

// ---------------------------------------------------------------------------
// Detections

inline DetectionSequence parse_detections(std::istream& in) {
    DetectionSequence dets;
    std::optional<std::size_t> embedding_dim;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = detail::split_fields(line);
        if (f.empty()) continue;
        if (f.size() < 6) detail::fail_line(line_no, "expected at least 6 fields, got " + std::to_string(f.size()));
        const int frame = detail::parse_number<int>(f[0], line_no, "frame");
        const int class_id = detail::parse_number<int>(f[1], line_no, "class id");
        const double confidence = detail::parse_number<double>(f[2], line_no, "confidence");
        const int height = detail::parse_number<int>(f[3], line_no, "height");
        const int width = detail::parse_number<int>(f[4], line_no, "width");
        if (frame < 0) detail::fail_line(line_no, "frame must be non-negative");
        if (class_id != kCar && class_id != kPedestrian) {
            detail::fail_line(line_no, "unknown detection class id " + std::to_string(class_id));
        }
        if (!std::isfinite(confidence) || confidence < 0.0 || confidence > 1.0) {
            detail::fail_line(line_no, "confidence outside [0, 1]");
        }
        Detection d{class_id, confidence, detail::parse_mask(f[5], height, width, line_no), {}};
        if (d.mask.is_empty()) {
            throw ConstraintError("line " + std::to_string(line_no) + ": detection has an empty mask");
        }
        const std::size_t dim = f.size() - 6;
        if (!embedding_dim) embedding_dim = dim;
        if (dim != *embedding_dim) {
            detail::fail_line(line_no, "embedding has " + std::to_string(dim) + " values, expected " +
                                           std::to_string(*embedding_dim));
        }
        d.embedding.reserve(dim);
        for (std::size_t i = 6; i < f.size(); ++i) {
            const double e = detail::parse_number<double>(f[i], line_no, "embedding value");
            if (!std::isfinite(e)) detail::fail_line(line_no, "non-finite embedding value");
            d.embedding.push_back(e);
        }
        dets[frame].push_back(std::move(d));
    }
    return dets;
}

inline DetectionSequence parse_detections(const std::string& text) {
    std::istringstream in(text);
    return parse_detections(in);
}

inline void write_detections(std::ostream& out, const DetectionSequence& dets) {
    for (const auto& [frame, list] : dets) {
        for (const auto& d : list) {
            out << frame << ' ' << d.class_id << ' ' << detail::format_double(d.confidence) << ' ' << d.mask.height()
                << ' ' << d.mask.width() << ' ' << encode_rle(d.mask);
            for (double e : d.embedding) out << ' ' << detail::format_double(e);
            out << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Optical flow

inline constexpr float kFlowMagic = 202021.25f;

namespace detail {

template <class T>
T from_little_endian(const char* bytes) {
    std::array<char, sizeof(T)> buf{};
    std::memcpy(buf.data(), bytes, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    return std::bit_cast<T>(buf);
}

template <class T>
void put_little_endian(std::ostream& out, T value) {
    auto buf = std::bit_cast<std::array<char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    out.write(buf.data(), buf.size());
}

} // namespace detail

inline FlowField read_flow(std::istream& in) {
    std::array<char, 12> header{};
    in.read(header.data(), header.size());
    if (in.gcount() != std::streamsize(header.size())) throw FormatError("flo: truncated header");
    const auto magic = detail::from_little_endian<float>(header.data());
    if (std::bit_cast<std::uint32_t>(magic) != std::bit_cast<std::uint32_t>(kFlowMagic)) {
        throw FormatError("flo: wrong magic number");
    }
    const auto width = detail::from_little_endian<std::int32_t>(header.data() + 4);
    const auto height = detail::from_little_endian<std::int32_t>(header.data() + 8);
    constexpr std::int32_t kMaxSide = 1 << 20;
    if (width <= 0 || height <= 0 || width > kMaxSide || height > kMaxSide) {
        throw FormatError("flo: invalid dimensions " + std::to_string(width) + "x" + std::to_string(height));
    }
    const std::size_t n = std::size_t(width) * std::size_t(height);
    std::vector<char> payload(n * 8);
    in.read(payload.data(), std::streamsize(payload.size()));
    if (in.gcount() != std::streamsize(payload.size())) throw FormatError("flo: truncated payload");
    FlowField flow(height, width);
    for (std::size_t i = 0; i < n; ++i) {
        flow.u[i] = detail::from_little_endian<float>(payload.data() + 8 * i);
        flow.v[i] = detail::from_little_endian<float>(payload.data() + 8 * i + 4);
        if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
            throw FormatError("flo: non-finite value at pixel " + std::to_string(i));
        }
    }
    return flow;
}

inline void write_flow(std::ostream& out, const FlowField& flow) {
    detail::put_little_endian(out, kFlowMagic);
    detail::put_little_endian(out, std::int32_t(flow.width));
    detail::put_little_endian(out, std::int32_t(flow.height));
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        detail::put_little_endian(out, flow.u[i]);
        detail::put_little_endian(out, flow.v[i]);
    }
}

/// Name of the flow file for the transition from frame t-1 to frame t.
inline std::string flow_file_name(int frame) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << frame << ".flo";
    return name.str();
}

inline FlowField load_flow_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open flow file " + path.string());
    try {
        return read_flow(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Flow lookup over a directory holding one `<frame>.flo` file per transition.
/// Missing files yield nullopt.
inline std::function<std::optional<FlowField>(int)> flow_from_directory(std::filesystem::path dir) {
    return [dir = std::move(dir)](int frame) -> std::optional<FlowField> {
        const auto path = dir / flow_file_name(frame);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return load_flow_file(path);
    };
}

// ---------------------------------------------------------------------------
// Metric report

inline nlohmann::json counts_to_json(const MetricCounts& c) {
    const Metrics m = compute_metrics(c);
    auto value = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {
        {"num_gt", c.num_gt},   {"num_tp", c.num_tp},   {"num_fp", c.num_fp},
        {"num_fn", c.num_fn},   {"num_ids", c.num_ids}, {"num_ignored", c.num_ignored},
        {"soft_tp", c.soft_tp}, {"motsa", value(m.motsa)}, {"motsp", value(m.motsp)},
        {"smotsa", value(m.smotsa)},
    };
}

inline nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json doc;
    doc["sequences"] = nlohmann::json::object();
    for (const auto& [name, classes] : report.sequences) {
        auto& seq = doc["sequences"][name];
        seq = nlohmann::json::object();
        for (const auto& [cls, counts] : classes) seq[class_name(cls)] = counts_to_json(counts);
    }
    auto& agg = doc["aggregate"];
    agg = nlohmann::json::object();
    for (const auto& [cls, counts] : report.by_class()) agg[class_name(cls)] = counts_to_json(counts);
    agg["all"] = counts_to_json(report.overall());
    return doc;
}

inline std::string write_report(const MetricReport& report) { return report_to_json(report).dump(2) + "\n"; }

} // namespace mots
