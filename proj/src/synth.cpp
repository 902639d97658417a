#include "wsseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "wsseg/metrics.hpp"

namespace wsseg {

void validate_config(const SynthConfig& cfg) {
    if (cfg.size < 32) throw std::invalid_argument("synth: size must be >= 32");
    if (cfg.size % 4 != 0) throw std::invalid_argument("synth: size must be divisible by 4");
    if (cfg.min_nodules < 1 || cfg.max_nodules < cfg.min_nodules)
        throw std::invalid_argument("synth: bad nodule count range");
    if (cfg.contrast <= 0.0) throw std::invalid_argument("synth: contrast must be positive");
    if (cfg.oracle_precision <= 0.0 || cfg.oracle_precision > 1.0 || cfg.oracle_recall <= 0.0 ||
        cfg.oracle_recall > 1.0)
        throw std::invalid_argument("synth: oracle targets must lie in (0,1]");
    if (cfg.harmonic_amplitude < 0.0 || cfg.harmonic_amplitude >= 0.5)
        throw std::invalid_argument("synth: harmonic amplitude must lie in [0, 0.5)");
    if (cfg.annotation_jitter < 0) throw std::invalid_argument("synth: negative jitter");
}

namespace {

constexpr int kHarmonics = 3;  // radial harmonics h = 2, 3, 4

struct NoduleShape {
    double cx = 0, cy = 0;
    double rx = 1, ry = 1;
    double theta = 0;
    double amp[kHarmonics] = {0, 0, 0};
    double phase[kHarmonics] = {0, 0, 0};
};

bool inside_shape(const NoduleShape& s, double px, double py) {
    const double dx = px - s.cx, dy = py - s.cy;
    const double ct = std::cos(s.theta), st = std::sin(s.theta);
    const double u = ct * dx + st * dy;
    const double v = -st * dx + ct * dy;
    const double rad = std::hypot(u, v);
    if (rad == 0.0) return true;
    const double phi = std::atan2(v, u);
    const double ec = s.ry * std::cos(phi), es = s.rx * std::sin(phi);
    const double base = s.rx * s.ry / std::sqrt(ec * ec + es * es);
    double wobble = 1.0;
    for (int i = 0; i < kHarmonics; ++i)
        wobble += s.amp[i] * std::cos((i + 2) * phi + s.phase[i]);
    return rad <= base * wobble;
}

NoduleShape sample_shape(const SynthConfig& cfg, Rng& rng) {
    NoduleShape s;
    const double n = cfg.size;
    s.rx = rng.uniform(0.13, 0.21) * n;
    s.ry = rng.uniform(0.13, 0.21) * n;
    s.theta = rng.uniform(0.0, 3.14159265358979323846);
    if (cfg.shape == SynthConfig::Shape::kBlob && cfg.harmonic_amplitude > 0.0) {
        double weights[kHarmonics];
        double total = 0.0;
        for (int i = 0; i < kHarmonics; ++i) {
            weights[i] = rng.uniform(0.2, 1.0);
            total += weights[i];
        }
        const double budget = cfg.harmonic_amplitude * rng.uniform(0.75, 1.0);
        for (int i = 0; i < kHarmonics; ++i) {
            s.amp[i] = budget * weights[i] / total;
            s.phase[i] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        }
    }
    // Keep the whole perturbed outline away from the border so annotations,
    // jitter, and prompt dilation all stay in bounds.
    double reach = std::max(s.rx, s.ry) * (1.0 + cfg.harmonic_amplitude);
    double margin = reach + cfg.annotation_jitter + 5.0;
    const double limit = (n - 1.0) / 2.0 - 1.0;
    if (margin > limit) {
        const double shrink = (limit - cfg.annotation_jitter - 5.0) / reach;
        s.rx *= shrink;
        s.ry *= shrink;
        margin = limit;
    }
    s.cx = rng.uniform(margin, n - 1.0 - margin);
    s.cy = rng.uniform(margin, n - 1.0 - margin);
    return s;
}

struct ExtremePixels {
    Point left, right, top, bottom;
};

// Connected-component extreme pixels, 4-connectivity, components keyed by
// their first pixel in row-major order.
std::vector<ExtremePixels> component_extremes(const MaskGrid& gt) {
    std::vector<int> label(gt.cells.size(), -1);
    std::vector<ExtremePixels> out;
    std::vector<int> stack;
    for (int y0 = 0; y0 < gt.height; ++y0) {
        for (int x0 = 0; x0 < gt.width; ++x0) {
            const int start = y0 * gt.width + x0;
            if (!gt.cells[start] || label[start] >= 0) continue;
            const int comp = static_cast<int>(out.size());
            ExtremePixels e;
            e.left = e.right = e.top = e.bottom = Point{x0, y0};
            label[start] = comp;
            stack.assign(1, start);
            while (!stack.empty()) {
                const int idx = stack.back();
                stack.pop_back();
                const int y = idx / gt.width, x = idx % gt.width;
                if (x < e.left.x || (x == e.left.x && y < e.left.y)) e.left = {x, y};
                if (x > e.right.x || (x == e.right.x && y < e.right.y)) e.right = {x, y};
                if (y < e.top.y || (y == e.top.y && x < e.top.x)) e.top = {x, y};
                if (y > e.bottom.y || (y == e.bottom.y && x < e.bottom.x)) e.bottom = {x, y};
                const int ny[4] = {y - 1, y + 1, y, y};
                const int nx[4] = {x, x, x - 1, x + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || ny[k] >= gt.height || nx[k] < 0 || nx[k] >= gt.width) continue;
                    const int nidx = ny[k] * gt.width + nx[k];
                    if (gt.cells[nidx] && label[nidx] < 0) {
                        label[nidx] = comp;
                        stack.push_back(nidx);
                    }
                }
            }
            out.push_back(e);
        }
    }
    return out;
}

Point jitter_point(Point p, int jitter, int h, int w, Rng& rng) {
    if (jitter > 0) {
        p.x += rng.uniform_int(-jitter, jitter);
        p.y += rng.uniform_int(-jitter, jitter);
    }
    p.x = std::clamp(p.x, 0, w - 1);
    p.y = std::clamp(p.y, 0, h - 1);
    return p;
}

}  // namespace

PointAnnotation extreme_points(const MaskGrid& gt, int jitter, Rng& rng) {
    if (jitter < 0) throw std::invalid_argument("extreme_points: negative jitter");
    PointAnnotation ann;
    for (const ExtremePixels& e : component_extremes(gt)) {
        NodulePoints np;
        np.left = jitter_point(e.left, jitter, gt.height, gt.width, rng);
        np.right = jitter_point(e.right, jitter, gt.height, gt.width, rng);
        np.top = jitter_point(e.top, jitter, gt.height, gt.width, rng);
        np.bottom = jitter_point(e.bottom, jitter, gt.height, gt.width, rng);
        if (np.left.x > np.right.x) np.left.x = np.right.x;
        if (np.top.y > np.bottom.y) np.top.y = np.bottom.y;
        ann.nodules.push_back(np);
    }
    return ann;
}

MaskGrid simulate_prompt_mask(const MaskGrid& gt, const SynthConfig& cfg, Rng& rng) {
    validate_config(cfg);
    MaskGrid prompt = gt;
    const std::size_t total = gt.count();
    if (total == 0) return prompt;

    const auto keep = static_cast<std::size_t>(
        std::llround(cfg.oracle_recall * static_cast<double>(total)));
    const std::size_t remove = total - keep;
    const auto add = static_cast<std::size_t>(
        std::llround(static_cast<double>(keep) * (1.0 - cfg.oracle_precision) /
                     cfg.oracle_precision));

    struct Ranked {
        double score;
        int index;
        bool operator<(const Ranked& o) const {
            return score < o.score || (score == o.score && index < o.index);
        }
    };

    if (remove > 0) {
        const RealGrid depth2 = squared_distance_transform(complement_mask(gt));
        std::vector<Ranked> inside;
        inside.reserve(total);
        for (int i = 0; i < static_cast<int>(gt.cells.size()); ++i) {
            if (!gt.cells[i]) continue;
            const double noise = cfg.boundary_noise * rng.uniform();
            inside.push_back({std::sqrt(depth2.values[i]) + noise, i});
        }
        std::nth_element(inside.begin(), inside.begin() + remove - 1, inside.end());
        std::sort(inside.begin(), inside.begin() + remove);
        for (std::size_t k = 0; k < remove; ++k) prompt.cells[inside[k].index] = 0;
    }
    if (add > 0) {
        const RealGrid dist2 = squared_distance_transform(gt);
        std::vector<Ranked> outside;
        outside.reserve(gt.cells.size() - total);
        for (int i = 0; i < static_cast<int>(gt.cells.size()); ++i) {
            if (gt.cells[i]) continue;
            const double noise = cfg.boundary_noise * rng.uniform();
            outside.push_back({std::sqrt(dist2.values[i]) + noise, i});
        }
        const std::size_t take = std::min(add, outside.size());
        std::nth_element(outside.begin(), outside.begin() + take - 1, outside.end());
        std::sort(outside.begin(), outside.begin() + take);
        for (std::size_t k = 0; k < take; ++k) prompt.cells[outside[k].index] = 1;
    }
    return prompt;
}

RealGrid gaussian_blur(const RealGrid& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int radius = static_cast<int>(std::ceil(2.5 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));

    RealGrid tmp(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                if (xx < 0 || xx >= image.width) continue;
                acc += kernel[i + radius] * image.at(y, xx);
                wsum += kernel[i + radius];
            }
            tmp.at(y, x) = acc / wsum;
        }
    }
    RealGrid out(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                if (yy < 0 || yy >= image.height) continue;
                acc += kernel[i + radius] * tmp.at(yy, x);
                wsum += kernel[i + radius];
            }
            out.at(y, x) = acc / wsum;
        }
    }
    return out;
}

Sample gen_sample(const SynthConfig& cfg, int index) {
    validate_config(cfg);
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(index)));

    Sample s;
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "img_%05d", index);
        s.id = buf;
    }

    const int n = cfg.size;
    const int count = rng.uniform_int(cfg.min_nodules, cfg.max_nodules);
    std::vector<NoduleShape> shapes;
    shapes.reserve(count);
    for (int i = 0; i < count; ++i) shapes.push_back(sample_shape(cfg, rng));

    s.gt = MaskGrid(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (const NoduleShape& sh : shapes)
                if (inside_shape(sh, x, y)) {
                    s.gt.at(y, x) = 1;
                    break;
                }

    RealGrid img(n, n);
    for (int i = 0; i < n * n; ++i)
        img.values[i] = s.gt.cells[i] ? cfg.background_mean - cfg.contrast : cfg.background_mean;
    img = gaussian_blur(img, cfg.blur_sigma);

    if (cfg.speckle_strength > 0.0) {
        for (auto& v : img.values) {
            const double g1 = rng.normal(), g2 = rng.normal();
            const double speckle = 1.0 + cfg.speckle_strength * (0.5 * (g1 * g1 + g2 * g2) - 1.0);
            v *= speckle;
        }
    }
    for (auto& v : img.values) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    s.image = std::move(img);

    s.annotation = extreme_points(s.gt, cfg.annotation_jitter, rng);
    s.annotation.image_id = s.id;
    s.prompt_mask = simulate_prompt_mask(s.gt, cfg, rng);
    s.has_prompt = true;
    return s;
}

}  // namespace wsseg
