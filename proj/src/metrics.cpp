#include "wsseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wsseg {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

/// 1-D squared-distance lower envelope (Felzenszwalb-Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& out,
            std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        for (;;) {
            if (f[v[k]] == kInf) {
                // no finite parabola yet; replace
                if (k == 0) { v[0] = q; z[0] = -kInf; z[1] = kInf; s = kInf; break; }
                --k;
                continue;
            }
            s = ((f[q] + q * double(q)) - (f[v[k]] + v[k] * double(v[k]))) / (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        if (s == kInf) continue;
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double d = q - double(v[k]);
        out[q] = (f[v[k]] == kInf) ? kInf : d * d + f[v[k]];
    }
}

double percentile_interp(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double rank = q / 100.0 * (static_cast<double>(values.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

struct Overlap {
    std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap_counts(const MaskGrid& a, const MaskGrid& b) {
    require_same_shape(a, b, "metrics");
    Overlap o;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        o.a += a.cells[i];
        o.b += b.cells[i];
        o.both += a.cells[i] & b.cells[i];
    }
    return o;
}

}  // namespace

double iou(const MaskGrid& a, const MaskGrid& b) {
    const Overlap o = overlap_counts(a, b);
    const std::size_t uni = o.a + o.b - o.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.both) / static_cast<double>(uni);
}

double dsc(const MaskGrid& a, const MaskGrid& b) {
    const Overlap o = overlap_counts(a, b);
    if (o.a + o.b == 0) return 1.0;
    return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

std::optional<double> prediction_precision(const MaskGrid& prediction, const MaskGrid& gt) {
    const Overlap o = overlap_counts(prediction, gt);
    if (o.a == 0) return std::nullopt;
    return static_cast<double>(o.both) / static_cast<double>(o.a);
}

MaskGrid boundary_mask(const MaskGrid& mask) {
    MaskGrid out(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            const bool edge = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1;
            const bool exposed = edge || !mask.at(y - 1, x) || !mask.at(y + 1, x) ||
                                 !mask.at(y, x - 1) || !mask.at(y, x + 1);
            if (exposed) out.at(y, x) = 1;
        }
    }
    return out;
}

RealGrid squared_distance_transform(const MaskGrid& source) {
    const int h = source.height, w = source.width;
    RealGrid d(h, w);
    // Pass 1: columns.
    {
        std::vector<double> f(h), out(h), z(h + 1);
        std::vector<int> v(h);
        for (int x = 0; x < w; ++x) {
            for (int y = 0; y < h; ++y) f[y] = source.at(y, x) ? 0.0 : kInf;
            edt_1d(f, out, v, z);
            for (int y = 0; y < h; ++y) d.at(y, x) = out[y];
        }
    }
    // Pass 2: rows.
    {
        std::vector<double> f(w), out(w), z(w + 1);
        std::vector<int> v(w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) f[x] = d.at(y, x);
            edt_1d(f, out, v, z);
            for (int x = 0; x < w; ++x) d.at(y, x) = out[x];
        }
    }
    return d;
}

double hd95(const MaskGrid& a, const MaskGrid& b, double percentile) {
    require_same_shape(a, b, "hd95");
    const bool a_empty = a.empty_mask();
    const bool b_empty = b.empty_mask();
    if (a_empty && b_empty) return 0.0;
    if (a_empty || b_empty)
        return std::hypot(static_cast<double>(a.height), static_cast<double>(a.width));

    const MaskGrid ba = boundary_mask(a);
    const MaskGrid bb = boundary_mask(b);
    const RealGrid dist_to_a = squared_distance_transform(ba);
    const RealGrid dist_to_b = squared_distance_transform(bb);

    std::vector<double> d_ab, d_ba;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (ba.at(y, x)) d_ab.push_back(std::sqrt(dist_to_b.at(y, x)));
            if (bb.at(y, x)) d_ba.push_back(std::sqrt(dist_to_a.at(y, x)));
        }
    }
    return std::max(percentile_interp(std::move(d_ab), percentile),
                    percentile_interp(std::move(d_ba), percentile));
}

MaskGrid binarize(const RealGrid& prediction, double threshold) {
    MaskGrid out(prediction.height, prediction.width);
    for (std::size_t i = 0; i < prediction.values.size(); ++i)
        out.cells[i] = prediction.values[i] >= threshold ? 1 : 0;
    return out;
}

MetricsSummary summarize(const std::vector<double>& values) {
    MetricsSummary s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

MetricsReport corpus_report(const std::vector<RealGrid>& predictions,
                            const std::vector<MaskGrid>& gts, double threshold) {
    if (predictions.size() != gts.size())
        throw std::invalid_argument("corpus_report: prediction/gt count mismatch");
    if (predictions.empty()) throw std::invalid_argument("corpus_report: empty corpus");
    MetricsReport r;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const MaskGrid pred = binarize(predictions[i], threshold);
        r.iou.push_back(iou(pred, gts[i]));
        r.dsc.push_back(dsc(pred, gts[i]));
        r.precision.push_back(prediction_precision(pred, gts[i]).value_or(0.0));
        r.hd95.push_back(hd95(pred, gts[i]));
    }
    r.iou_summary = summarize(r.iou);
    r.dsc_summary = summarize(r.dsc);
    r.precision_summary = summarize(r.precision);
    r.hd95_summary = summarize(r.hd95);
    return r;
}

}  // namespace wsseg
