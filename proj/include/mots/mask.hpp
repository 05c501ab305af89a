#pragma once

// Run-length encoded binary masks.
//
// A mask stores alternating background/foreground run lengths over the
// pixels in column-major order (pixel (x, y) has linear index x * height + y),
// starting with a background run that may be zero. This is the layout used by
// the widely deployed compressed-RLE interchange, so encode_rle/decode_rle are
// bit-compatible with it.

#include <mots/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mots {

using PixelCount = std::uint64_t;

/// Inclusive pixel bounds.
struct Box {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int width() const { return x_max - x_min + 1; }
    int height() const { return y_max - y_min + 1; }
    PixelCount area() const { return PixelCount(width()) * PixelCount(height()); }

    friend bool operator==(const Box&, const Box&) = default;
};

namespace detail {

// Appends (length, value) segments and keeps the run list canonical:
// background first, no interior zero runs, no trailing zero run.
class RunBuilder {
public:
    void push(PixelCount length, bool value) {
        if (length == 0) return;
        if (runs_.empty()) {
            if (value) runs_.push_back(0);
            runs_.push_back(length);
        } else if (value == last_) {
            runs_.back() += length;
        } else {
            runs_.push_back(length);
        }
        last_ = value;
    }

    std::vector<PixelCount> take() { return std::move(runs_); }

private:
    std::vector<PixelCount> runs_;
    bool last_ = false;
};

class RunCursor {
public:
    explicit RunCursor(const std::vector<PixelCount>& runs) : runs_(runs) {
        if (!runs_.empty()) left_ = runs_[0];
        skip_empty();
    }

    bool done() const { return left_ == 0; }
    PixelCount left() const { return left_; }
    bool value() const { return value_; }

    void advance(PixelCount n) {
        left_ -= n;
        skip_empty();
    }

private:
    void skip_empty() {
        while (left_ == 0 && index_ + 1 < runs_.size()) {
            ++index_;
            left_ = runs_[index_];
            value_ = !value_;
        }
    }

    const std::vector<PixelCount>& runs_;
    std::size_t index_ = 0;
    PixelCount left_ = 0;
    bool value_ = false;
};

} // namespace detail

class Mask {
public:
    Mask() = default;

    /// Builds a mask from run lengths; input runs are canonicalized.
    Mask(int height, int width, const std::vector<PixelCount>& runs) : height_(height), width_(width) {
        if (height < 0 || width < 0) throw ConstraintError("mask dimensions must be non-negative");
        PixelCount total = 0;
        detail::RunBuilder builder;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (__builtin_add_overflow(total, runs[i], &total)) throw ConstraintError("run length overflow");
            builder.push(runs[i], i % 2 == 1);
        }
        if (total != pixel_count()) {
            throw ConstraintError("run lengths sum to " + std::to_string(total) + ", expected " +
                                  std::to_string(pixel_count()));
        }
        runs_ = builder.take();
        for (std::size_t i = 1; i < runs_.size(); i += 2) area_ += runs_[i];
    }

    static Mask zeros(int height, int width) { return Mask(height, width, {PixelCount(height) * PixelCount(width)}); }
    static Mask ones(int height, int width) { return Mask(height, width, {0, PixelCount(height) * PixelCount(width)}); }

    /// Column-major dense bitmap, one byte per pixel (non-zero means set).
    static Mask from_dense(int height, int width, std::span<const std::uint8_t> pixels) {
        if (pixels.size() != PixelCount(height) * PixelCount(width)) throw DimensionError("dense buffer size mismatch");
        detail::RunBuilder builder;
        for (auto p : pixels) builder.push(1, p != 0);
        return Mask(height, width, builder.take());
    }

    std::vector<std::uint8_t> to_dense() const {
        std::vector<std::uint8_t> out;
        out.reserve(pixel_count());
        bool value = false;
        for (auto r : runs_) {
            out.insert(out.end(), r, value ? 1 : 0);
            value = !value;
        }
        return out;
    }

    int height() const { return height_; }
    int width() const { return width_; }
    PixelCount pixel_count() const { return PixelCount(height_) * PixelCount(width_); }
    const std::vector<PixelCount>& runs() const { return runs_; }
    PixelCount area() const { return area_; }
    bool is_empty() const { return area_ == 0; }

    /// Linear index of the first set pixel, or pixel_count() when empty.
    PixelCount first_set() const { return runs_.size() > 1 ? runs_[0] : pixel_count(); }
    /// One past the linear index of the last set pixel, or 0 when empty.
    PixelCount end_set() const {
        if (runs_.size() < 2) return 0;
        return runs_.size() % 2 == 0 ? pixel_count() : pixel_count() - runs_.back();
    }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<PixelCount> runs_;
    PixelCount area_ = 0;
};

/// Appends foreground spans in ascending order; gaps become background.
class MaskBuilder {
public:
    MaskBuilder(int height, int width) : height_(height), width_(width) {}

    void add_span(PixelCount begin, PixelCount end) {
        if (begin < pos_ || end < begin || end > PixelCount(height_) * PixelCount(width_)) {
            throw ConstraintError("mask spans must be ascending and in bounds");
        }
        builder_.push(begin - pos_, false);
        builder_.push(end - begin, true);
        pos_ = end;
    }

    Mask finish() {
        builder_.push(PixelCount(height_) * PixelCount(width_) - pos_, false);
        return Mask(height_, width_, builder_.take());
    }

private:
    int height_;
    int width_;
    PixelCount pos_ = 0;
    detail::RunBuilder builder_;
};

/// Dense optical flow, row-major like the .flo layout.
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<float> u;
    std::vector<float> v;

    FlowField() = default;
    FlowField(int h, int w) : height(h), width(w), u(std::size_t(h) * std::size_t(w)), v(u.size()) {}

    static FlowField uniform(int h, int w, float du, float dv) {
        FlowField f(h, w);
        std::fill(f.u.begin(), f.u.end(), du);
        std::fill(f.v.begin(), f.v.end(), dv);
        return f;
    }

    float u_at(int x, int y) const { return u[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    float v_at(int x, int y) const { return v[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }

    friend bool operator==(const FlowField&, const FlowField&) = default;
};

inline void require_same_dims(const Mask& a, const Mask& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw DimensionError("mask dimensions differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                             " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
}

// ---------------------------------------------------------------------------
// Compressed RLE string codec

inline std::string encode_rle(const Mask& mask) {
    const auto& counts = mask.runs();
    std::string out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        auto x = static_cast<std::int64_t>(counts[i]);
        if (i > 2) x -= static_cast<std::int64_t>(counts[i - 2]);
        bool more = true;
        while (more) {
            std::int64_t c = x & 0x1f;
            x >>= 5;
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more) c |= 0x20;
            out.push_back(static_cast<char>(c + 48));
        }
    }
    return out;
}

inline Mask decode_rle(std::string_view encoded, int height, int width) {
    std::vector<PixelCount> counts;
    PixelCount total = 0;
    std::size_t p = 0;
    while (p < encoded.size()) {
        const std::size_t start = p;
        std::uint64_t bits = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= encoded.size()) {
                throw FormatError("rle: value starting at byte " + std::to_string(start) + " is truncated");
            }
            const auto ch = static_cast<unsigned char>(encoded[p]);
            if (ch < 48 || ch > 111) {
                throw FormatError("rle: invalid character at byte " + std::to_string(p));
            }
            if (5 * k >= 64) throw FormatError("rle: count overflow at byte " + std::to_string(p));
            const std::uint64_t c = ch - 48;
            bits |= (c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10) && 5 * k < 64) bits |= ~std::uint64_t{0} << (5 * k);
        }
        auto x = static_cast<std::int64_t>(bits);
        if (counts.size() > 2) {
            if (__builtin_add_overflow(x, static_cast<std::int64_t>(counts[counts.size() - 2]), &x)) {
                throw FormatError("rle: count overflow at byte " + std::to_string(start));
            }
        }
        if (x < 0) throw FormatError("rle: negative count at byte " + std::to_string(start));
        if (__builtin_add_overflow(total, PixelCount(x), &total)) {
            throw FormatError("rle: count overflow at byte " + std::to_string(start));
        }
        counts.push_back(PixelCount(x));
    }
    if (height < 0 || width < 0 || total != PixelCount(height) * PixelCount(width)) {
        throw FormatError("rle: counts sum to " + std::to_string(total) + " but image has " +
                          std::to_string(PixelCount(std::max(height, 0)) * PixelCount(std::max(width, 0))) +
                          " pixels (byte " + std::to_string(encoded.size()) + ")");
    }
    return Mask(height, width, counts);
}

// ---------------------------------------------------------------------------
// Set operations on run lists

/// Calls fn(length, in_a, in_b) for each maximal segment of the merged runs.
template <class Fn>
void for_each_segment(const Mask& a, const Mask& b, Fn&& fn) {
    require_same_dims(a, b);
    detail::RunCursor ca(a.runs());
    detail::RunCursor cb(b.runs());
    while (!ca.done() && !cb.done()) {
        const PixelCount n = std::min(ca.left(), cb.left());
        fn(n, ca.value(), cb.value());
        ca.advance(n);
        cb.advance(n);
    }
}

template <class Op>
Mask combine(const Mask& a, const Mask& b, Op op) {
    detail::RunBuilder builder;
    for_each_segment(a, b, [&](PixelCount n, bool va, bool vb) { builder.push(n, op(va, vb)); });
    return Mask(a.height(), a.width(), builder.take());
}

inline PixelCount intersection_count(const Mask& a, const Mask& b) {
    require_same_dims(a, b);
    if (a.first_set() >= b.end_set() || b.first_set() >= a.end_set()) return 0;
    PixelCount n = 0;
    for_each_segment(a, b, [&](PixelCount len, bool va, bool vb) {
        if (va && vb) n += len;
    });
    return n;
}

/// Intersection and union pixel counts of two masks.
struct Overlap {
    PixelCount intersection = 0;
    PixelCount union_ = 0;

    double iou() const { return union_ == 0 ? 0.0 : double(intersection) / double(union_); }
    /// IoU > 0.5, decided on integer counts.
    bool exceeds_half() const { return 2 * intersection > union_; }
};

inline Overlap overlap(const Mask& a, const Mask& b) {
    const PixelCount i = intersection_count(a, b);
    return {i, a.area() + b.area() - i};
}

/// IoU of two masks; 0 when both are empty.
inline double iou(const Mask& a, const Mask& b) { return overlap(a, b).iou(); }

inline Mask subtract(const Mask& a, const Mask& b) {
    if (intersection_count(a, b) == 0) return a;
    return combine(a, b, [](bool x, bool y) { return x && !y; });
}

inline Mask unite(const Mask& a, const Mask& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
}

inline Mask intersect(const Mask& a, const Mask& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
}

/// Index pairs (i < j) of masks sharing at least one pixel.
inline std::vector<std::pair<std::size_t, std::size_t>> check_frame_nonoverlap(std::span<const Mask> masks) {
    std::vector<std::pair<std::size_t, std::size_t>> violations;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        for (std::size_t j = i + 1; j < masks.size(); ++j) {
            if (intersection_count(masks[i], masks[j]) > 0) violations.emplace_back(i, j);
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Geometry

/// Forward warp: every set pixel moves to its rounded flow target; targets
/// outside the image are dropped. Halves round away from zero.
inline Mask warp(const Mask& mask, const FlowField& flow) {
    if (flow.height != mask.height() || flow.width != mask.width()) {
        throw DimensionError("flow field and mask dimensions differ");
    }
    if (flow.u.size() != mask.pixel_count() || flow.v.size() != mask.pixel_count()) {
        throw DimensionError("flow field buffers do not match its dimensions");
    }
    const auto h = static_cast<PixelCount>(mask.height());
    const auto w = static_cast<std::int64_t>(mask.width());
    std::vector<PixelCount> targets;
    targets.reserve(mask.area());
    PixelCount pos = 0;
    bool value = false;
    for (auto run : mask.runs()) {
        if (value) {
            auto x = static_cast<std::int64_t>(pos / h);
            auto y = static_cast<std::int64_t>(pos % h);
            for (PixelCount k = 0; k < run; ++k) {
                const auto tx = std::llround(double(x) + double(flow.u_at(int(x), int(y))));
                const auto ty = std::llround(double(y) + double(flow.v_at(int(x), int(y))));
                if (tx >= 0 && tx < w && ty >= 0 && ty < static_cast<std::int64_t>(h)) {
                    targets.push_back(PixelCount(tx) * h + PixelCount(ty));
                }
                if (++y == static_cast<std::int64_t>(h)) {
                    y = 0;
                    ++x;
                }
            }
        }
        pos += run;
        value = !value;
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    MaskBuilder builder(mask.height(), mask.width());
    for (std::size_t i = 0; i < targets.size();) {
        std::size_t j = i + 1;
        while (j < targets.size() && targets[j] == targets[j - 1] + 1) ++j;
        builder.add_span(targets[i], targets[j - 1] + 1);
        i = j;
    }
    return builder.finish();
}

/// Tight bounds of the set pixels.
inline Box bbox_of(const Mask& mask) {
    if (mask.is_empty()) throw ConstraintError("bounding box of an empty mask");
    const auto h = static_cast<PixelCount>(mask.height());
    Box box{int(mask.first_set() / h), mask.height(), int((mask.end_set() - 1) / h), -1};
    PixelCount pos = 0;
    bool value = false;
    for (auto run : mask.runs()) {
        if (value) {
            const PixelCount last = pos + run - 1;
            if (pos / h != last / h) {
                box.y_min = 0;
                box.y_max = mask.height() - 1;
                break;
            }
            box.y_min = std::min(box.y_min, int(pos % h));
            box.y_max = std::max(box.y_max, int(last % h));
        }
        pos += run;
        value = !value;
    }
    return box;
}

inline void require_box_in_image(const Box& box, int height, int width) {
    if (box.x_min > box.x_max || box.y_min > box.y_max || box.x_min < 0 || box.y_min < 0 || box.x_max >= width ||
        box.y_max >= height) {
        throw ConstraintError("box (" + std::to_string(box.x_min) + "," + std::to_string(box.y_min) + "," +
                              std::to_string(box.x_max) + "," + std::to_string(box.y_max) + ") outside " +
                              std::to_string(height) + "x" + std::to_string(width) + " image");
    }
}

inline Mask rasterize_box_fill(const Box& box, int height, int width) {
    require_box_in_image(box, height, width);
    const auto h = static_cast<PixelCount>(height);
    MaskBuilder builder(height, width);
    for (int x = box.x_min; x <= box.x_max; ++x) {
        builder.add_span(PixelCount(x) * h + PixelCount(box.y_min), PixelCount(x) * h + PixelCount(box.y_max) + 1);
    }
    return builder.finish();
}

/// Axis-aligned ellipse inscribed in the box; a pixel is set iff its center
/// lies inside or on the ellipse. Evaluated in exact integer arithmetic on
/// doubled coordinates.
inline Mask rasterize_box_ellipse(const Box& box, int height, int width) {
    require_box_in_image(box, height, width);
    __extension__ typedef __int128 Wide;
    const Wide a2 = box.width();   // twice the horizontal semi-axis
    const Wide b2 = box.height();  // twice the vertical semi-axis
    const Wide limit = a2 * a2 * b2 * b2;
    const auto h = static_cast<PixelCount>(height);
    MaskBuilder builder(height, width);
    for (int x = box.x_min; x <= box.x_max; ++x) {
        const Wide dx = Wide(2) * x - box.x_min - box.x_max;
        int lo = -1;
        int hi = -1;
        for (int y = box.y_min; y <= box.y_max; ++y) {
            const Wide dy = Wide(2) * y - box.y_min - box.y_max;
            if (dx * dx * b2 * b2 + dy * dy * a2 * a2 <= limit) {
                if (lo < 0) lo = y;
                hi = y;
            }
        }
        if (lo >= 0) builder.add_span(PixelCount(x) * h + PixelCount(lo), PixelCount(x) * h + PixelCount(hi) + 1);
    }
    return builder.finish();
}

} // namespace mots
