#include "wsseg/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wsseg {

namespace {

ConvParams make_conv(int in_ch, int out_ch, int k, int stride) {
    ConvParams c;
    c.in_channels = in_ch;
    c.out_channels = out_ch;
    c.ksize = k;
    c.stride = stride;
    c.weight.assign(static_cast<std::size_t>(out_ch) * in_ch * k * k, 0.0);
    c.bias.assign(out_ch, 0.0);
    return c;
}

AffineParams make_affine(int channels, double gamma) {
    AffineParams a;
    a.gamma.assign(channels, gamma);
    a.shift.assign(channels, 0.0);
    return a;
}

NetParams make_arch(double gamma) {
    NetParams p;
    p.e0 = make_conv(1, 8, 3, 1);
    p.d0 = make_conv(8, 16, 3, 2);
    p.d1 = make_conv(16, 32, 3, 2);
    p.b = make_conv(32, 32, 3, 1);
    p.u1 = make_conv(32, kFeatureChannels, 3, 1);
    p.head = make_conv(kFeatureChannels, 1, 1, 1);
    p.n_e0 = make_affine(8, gamma);
    p.n_d0 = make_affine(16, gamma);
    p.n_d1 = make_affine(32, gamma);
    p.n_b = make_affine(32, gamma);
    p.n_u1 = make_affine(kFeatureChannels, gamma);
    return p;
}

inline int div_ceil(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
inline int div_floor(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

FeatureMap conv_forward(const FeatureMap& in, const ConvParams& cp) {
    if (in.channels != cp.in_channels) throw std::invalid_argument("conv: channel mismatch");
    const int k = cp.ksize, s = cp.stride, pad = k / 2;
    const int oh = (in.height + 2 * pad - k) / s + 1;
    const int ow = (in.width + 2 * pad - k) / s + 1;
    FeatureMap out(cp.out_channels, oh, ow);
    for (int oc = 0; oc < cp.out_channels; ++oc) {
        double* obase = &out.values[static_cast<std::size_t>(oc) * oh * ow];
        for (int i = 0; i < oh * ow; ++i) obase[i] = cp.bias[oc];
    }
    for (int oc = 0; oc < cp.out_channels; ++oc) {
        for (int ic = 0; ic < cp.in_channels; ++ic) {
            const double* wbase =
                &cp.weight[static_cast<std::size_t>(oc * cp.in_channels + ic) * k * k];
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double w = wbase[ky * k + kx];
                    const int ox_lo = std::max(0, div_ceil(pad - kx, s));
                    const int ox_hi = std::min(ow - 1, div_floor(in.width - 1 + pad - kx, s));
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= in.height) continue;
                        const double* irow =
                            &in.values[(static_cast<std::size_t>(ic) * in.height + iy) * in.width];
                        double* orow = &out.values[(static_cast<std::size_t>(oc) * oh + oy) * ow];
                        for (int ox = ox_lo; ox <= ox_hi; ++ox)
                            orow[ox] += w * irow[ox * s + kx - pad];
                    }
                }
            }
        }
    }
    return out;
}

void conv_backward(const FeatureMap& in, const ConvParams& cp, const FeatureMap& grad_out,
                   ConvParams& grad_cp, FeatureMap* grad_in) {
    const int k = cp.ksize, s = cp.stride, pad = k / 2;
    const int oh = grad_out.height, ow = grad_out.width;
    for (int oc = 0; oc < cp.out_channels; ++oc) {
        const double* gbase = &grad_out.values[static_cast<std::size_t>(oc) * oh * ow];
        double acc = 0.0;
        for (int i = 0; i < oh * ow; ++i) acc += gbase[i];
        grad_cp.bias[oc] += acc;
    }
    for (int oc = 0; oc < cp.out_channels; ++oc) {
        for (int ic = 0; ic < cp.in_channels; ++ic) {
            const std::size_t woff = static_cast<std::size_t>(oc * cp.in_channels + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double w = cp.weight[woff + ky * k + kx];
                    const int ox_lo = std::max(0, div_ceil(pad - kx, s));
                    const int ox_hi = std::min(ow - 1, div_floor(in.width - 1 + pad - kx, s));
                    double wacc = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= in.height) continue;
                        const double* irow =
                            &in.values[(static_cast<std::size_t>(ic) * in.height + iy) * in.width];
                        const double* grow =
                            &grad_out.values[(static_cast<std::size_t>(oc) * oh + oy) * ow];
                        if (grad_in) {
                            double* girow =
                                &grad_in->values[(static_cast<std::size_t>(ic) * in.height + iy) *
                                                 in.width];
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                const int ix = ox * s + kx - pad;
                                wacc += grow[ox] * irow[ix];
                                girow[ix] += w * grow[ox];
                            }
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                wacc += grow[ox] * irow[ox * s + kx - pad];
                        }
                    }
                    grad_cp.weight[woff + ky * k + kx] += wacc;
                }
            }
        }
    }
}

FeatureMap affine_relu_forward(const FeatureMap& in, const AffineParams& ap, FeatureMap& pre_relu) {
    pre_relu = FeatureMap(in.channels, in.height, in.width);
    FeatureMap out(in.channels, in.height, in.width);
    const int plane = in.height * in.width;
    for (int c = 0; c < in.channels; ++c) {
        const double g = ap.gamma[c], b = ap.shift[c];
        const double* src = &in.values[static_cast<std::size_t>(c) * plane];
        double* z = &pre_relu.values[static_cast<std::size_t>(c) * plane];
        double* a = &out.values[static_cast<std::size_t>(c) * plane];
        for (int i = 0; i < plane; ++i) {
            z[i] = g * src[i] + b;
            a[i] = z[i] > 0.0 ? z[i] : 0.0;
        }
    }
    return out;
}

// Backward through relu(affine(x)); returns grad wrt the affine input.
FeatureMap affine_relu_backward(const FeatureMap& conv_out, const FeatureMap& pre_relu,
                                const AffineParams& ap, const FeatureMap& grad_act,
                                AffineParams& grad_ap) {
    FeatureMap grad_in(conv_out.channels, conv_out.height, conv_out.width);
    const int plane = conv_out.height * conv_out.width;
    for (int c = 0; c < conv_out.channels; ++c) {
        const double g = ap.gamma[c];
        const double* x = &conv_out.values[static_cast<std::size_t>(c) * plane];
        const double* z = &pre_relu.values[static_cast<std::size_t>(c) * plane];
        const double* ga = &grad_act.values[static_cast<std::size_t>(c) * plane];
        double* gi = &grad_in.values[static_cast<std::size_t>(c) * plane];
        double acc_g = 0.0, acc_b = 0.0;
        for (int i = 0; i < plane; ++i) {
            const double gz = z[i] > 0.0 ? ga[i] : 0.0;
            acc_g += gz * x[i];
            acc_b += gz;
            gi[i] = g * gz;
        }
        grad_ap.gamma[c] += acc_g;
        grad_ap.shift[c] += acc_b;
    }
    return grad_in;
}

FeatureMap upsample2(const FeatureMap& in) {
    FeatureMap out(in.channels, in.height * 2, in.width * 2);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
    return out;
}

FeatureMap upsample2_backward(const FeatureMap& grad_out) {
    FeatureMap grad_in(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
    for (int c = 0; c < grad_out.channels; ++c)
        for (int y = 0; y < grad_out.height; ++y)
            for (int x = 0; x < grad_out.width; ++x)
                grad_in.at(c, y / 2, x / 2) += grad_out.at(c, y, x);
    return grad_in;
}

FeatureMap to_feature(const RealGrid& g) {
    FeatureMap f(1, g.height, g.width);
    f.values = g.values;
    return f;
}

inline double stable_sigmoid(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void init_conv(ConvParams& c, Rng& rng) {
    const double fan_in = static_cast<double>(c.in_channels) * c.ksize * c.ksize;
    const double scale = std::sqrt(2.0 / fan_in);
    for (auto& w : c.weight) w = rng.normal() * scale;
    for (auto& b : c.bias) b = 0.0;
}

}  // namespace

NetParams init_params(std::uint64_t seed) {
    NetParams p = make_arch(1.0);
    Rng rng(Rng::mix(seed, 0x6e65742d696e6974ULL));
    init_conv(p.e0, rng);
    init_conv(p.d0, rng);
    init_conv(p.d1, rng);
    init_conv(p.b, rng);
    init_conv(p.u1, rng);
    init_conv(p.head, rng);
    return p;
}

NetParams zero_like(const NetParams&) { return make_arch(0.0); }

std::vector<std::pair<std::string, std::vector<double>*>> named_tensors(NetParams& p) {
    return {
        {"e0.weight", &p.e0.weight},     {"e0.bias", &p.e0.bias},
        {"n_e0.gamma", &p.n_e0.gamma},   {"n_e0.shift", &p.n_e0.shift},
        {"d0.weight", &p.d0.weight},     {"d0.bias", &p.d0.bias},
        {"n_d0.gamma", &p.n_d0.gamma},   {"n_d0.shift", &p.n_d0.shift},
        {"d1.weight", &p.d1.weight},     {"d1.bias", &p.d1.bias},
        {"n_d1.gamma", &p.n_d1.gamma},   {"n_d1.shift", &p.n_d1.shift},
        {"b.weight", &p.b.weight},       {"b.bias", &p.b.bias},
        {"n_b.gamma", &p.n_b.gamma},     {"n_b.shift", &p.n_b.shift},
        {"u1.weight", &p.u1.weight},     {"u1.bias", &p.u1.bias},
        {"n_u1.gamma", &p.n_u1.gamma},   {"n_u1.shift", &p.n_u1.shift},
        {"head.weight", &p.head.weight}, {"head.bias", &p.head.bias},
    };
}

std::vector<std::pair<std::string, const std::vector<double>*>> named_tensors(const NetParams& p) {
    auto mut = named_tensors(const_cast<NetParams&>(p));
    std::vector<std::pair<std::string, const std::vector<double>*>> out;
    out.reserve(mut.size());
    for (auto& [name, vec] : mut) out.emplace_back(name, vec);
    return out;
}

std::size_t param_count(const NetParams& p) {
    std::size_t n = 0;
    for (const auto& [name, vec] : named_tensors(p)) n += vec->size();
    return n;
}

std::size_t expected_param_count() {
    auto conv = [](int ic, int oc, int k) { return static_cast<std::size_t>(oc) * ic * k * k + oc; };
    auto norm = [](int c) { return static_cast<std::size_t>(2) * c; };
    return conv(1, 8, 3) + norm(8) + conv(8, 16, 3) + norm(16) + conv(16, 32, 3) + norm(32) +
           conv(32, 32, 3) + norm(32) + conv(32, 16, 3) + norm(16) + conv(16, 1, 1);
}

ForwardResult forward(const RealGrid& image, const NetParams& p) {
    if (image.height % 4 != 0 || image.width % 4 != 0 || image.height < 8 || image.width < 8)
        throw std::invalid_argument("forward: image dimensions must be >= 8 and divisible by 4");

    ForwardResult r;
    ForwardCache& c = r.cache;
    c.image = image;

    const FeatureMap x = to_feature(image);
    c.c_e0 = conv_forward(x, p.e0);
    c.a_e0 = affine_relu_forward(c.c_e0, p.n_e0, c.z_e0);
    c.c_d0 = conv_forward(c.a_e0, p.d0);
    c.a_d0 = affine_relu_forward(c.c_d0, p.n_d0, c.z_d0);
    c.c_d1 = conv_forward(c.a_d0, p.d1);
    c.a_d1 = affine_relu_forward(c.c_d1, p.n_d1, c.z_d1);
    c.c_b = conv_forward(c.a_d1, p.b);
    c.a_b = affine_relu_forward(c.c_b, p.n_b, c.z_b);
    c.up_b = upsample2(c.a_b);
    c.c_u1 = conv_forward(c.up_b, p.u1);
    c.a_u1 = affine_relu_forward(c.c_u1, p.n_u1, c.z_u1);
    c.up_u1 = upsample2(c.a_u1);

    const FeatureMap logit_map = conv_forward(c.up_u1, p.head);
    c.logits = RealGrid(logit_map.height, logit_map.width);
    c.logits.values = logit_map.values;
    c.prediction = RealGrid(c.logits.height, c.logits.width);
    for (std::size_t i = 0; i < c.logits.values.size(); ++i) {
        double m = stable_sigmoid(c.logits.values[i]);
        if (m < 1e-12) m = 1e-12;
        if (m > 1.0 - 1e-12) m = 1.0 - 1e-12;
        c.prediction.values[i] = m;
    }

    r.features = c.a_u1;
    r.prediction = c.prediction;
    return r;
}

NetParams backward(const ForwardCache& cache, const NetParams& p, const RealGrid& grad_prediction,
                   const FeatureMap& grad_features) {
    NetParams g = make_arch(0.0);

    FeatureMap grad_logits(1, cache.logits.height, cache.logits.width);
    for (std::size_t i = 0; i < grad_logits.values.size(); ++i) {
        const double m = cache.prediction.values[i];
        grad_logits.values[i] = grad_prediction.values[i] * m * (1.0 - m);
    }

    FeatureMap grad_up_u1(cache.up_u1.channels, cache.up_u1.height, cache.up_u1.width);
    conv_backward(cache.up_u1, p.head, grad_logits, g.head, &grad_up_u1);

    FeatureMap grad_a_u1 = upsample2_backward(grad_up_u1);
    if (!grad_features.values.empty()) {
        if (grad_features.channels != grad_a_u1.channels ||
            grad_features.height != grad_a_u1.height || grad_features.width != grad_a_u1.width)
            throw std::invalid_argument("backward: grad_features shape mismatch");
        for (std::size_t i = 0; i < grad_a_u1.values.size(); ++i)
            grad_a_u1.values[i] += grad_features.values[i];
    }

    FeatureMap grad_c_u1 = affine_relu_backward(cache.c_u1, cache.z_u1, p.n_u1, grad_a_u1, g.n_u1);
    FeatureMap grad_up_b(cache.up_b.channels, cache.up_b.height, cache.up_b.width);
    conv_backward(cache.up_b, p.u1, grad_c_u1, g.u1, &grad_up_b);

    FeatureMap grad_a_b = upsample2_backward(grad_up_b);
    FeatureMap grad_c_b = affine_relu_backward(cache.c_b, cache.z_b, p.n_b, grad_a_b, g.n_b);
    FeatureMap grad_a_d1(cache.a_d1.channels, cache.a_d1.height, cache.a_d1.width);
    conv_backward(cache.a_d1, p.b, grad_c_b, g.b, &grad_a_d1);

    FeatureMap grad_c_d1 = affine_relu_backward(cache.c_d1, cache.z_d1, p.n_d1, grad_a_d1, g.n_d1);
    FeatureMap grad_a_d0(cache.a_d0.channels, cache.a_d0.height, cache.a_d0.width);
    conv_backward(cache.a_d0, p.d1, grad_c_d1, g.d1, &grad_a_d0);

    FeatureMap grad_c_d0 = affine_relu_backward(cache.c_d0, cache.z_d0, p.n_d0, grad_a_d0, g.n_d0);
    FeatureMap grad_a_e0(cache.a_e0.channels, cache.a_e0.height, cache.a_e0.width);
    conv_backward(cache.a_e0, p.d0, grad_c_d0, g.d0, &grad_a_e0);

    FeatureMap grad_c_e0 = affine_relu_backward(cache.c_e0, cache.z_e0, p.n_e0, grad_a_e0, g.n_e0);
    const FeatureMap x = to_feature(cache.image);
    conv_backward(x, p.e0, grad_c_e0, g.e0, nullptr);

    return g;
}

AdamState init_adam(const NetParams& p, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.assign(param_count(p), 0.0);
    s.v.assign(param_count(p), 0.0);
    return s;
}

void adam_step(NetParams& p, const NetParams& grads, AdamState& s) {
    auto pt = named_tensors(p);
    auto gt = named_tensors(grads);
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    std::size_t off = 0;
    for (std::size_t t = 0; t < pt.size(); ++t) {
        std::vector<double>& param = *pt[t].second;
        const std::vector<double>& grad = *gt[t].second;
        if (param.size() != grad.size()) throw std::invalid_argument("adam_step: shape mismatch");
        for (std::size_t i = 0; i < param.size(); ++i, ++off) {
            const double gv = grad[i];
            s.m[off] = s.beta1 * s.m[off] + (1.0 - s.beta1) * gv;
            s.v[off] = s.beta2 * s.v[off] + (1.0 - s.beta2) * gv * gv;
            const double mhat = s.m[off] / bc1;
            const double vhat = s.v[off] / bc2;
            param[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
    if (off != s.m.size()) throw std::invalid_argument("adam_step: state size mismatch");
}

namespace {

constexpr char kCheckpointMagic[8] = {'W', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void put_bytes(std::ofstream& f, const void* data, std::size_t n) {
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void put_u64(std::ofstream& f, std::uint64_t v) { put_bytes(f, &v, 8); }
void put_f64(std::ofstream& f, double v) { put_bytes(f, &v, 8); }

void get_bytes(std::ifstream& f, void* data, std::size_t n) {
    f.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
}

std::uint64_t get_u64(std::ifstream& f) {
    std::uint64_t v;
    get_bytes(f, &v, 8);
    return v;
}

double get_f64(std::ifstream& f) {
    double v;
    get_bytes(f, &v, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NetParams& p, const AdamState& s,
                     const std::array<std::uint64_t, 4>& rng_state) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    put_bytes(f, kCheckpointMagic, 8);
    auto tensors = named_tensors(p);
    put_u64(f, tensors.size());
    for (const auto& [name, vec] : tensors) {
        put_u64(f, name.size());
        put_bytes(f, name.data(), name.size());
        put_u64(f, vec->size());
        put_bytes(f, vec->data(), vec->size() * 8);
    }
    put_f64(f, s.lr);
    put_f64(f, s.beta1);
    put_f64(f, s.beta2);
    put_f64(f, s.eps);
    put_u64(f, static_cast<std::uint64_t>(s.step));
    put_u64(f, s.m.size());
    put_bytes(f, s.m.data(), s.m.size() * 8);
    put_u64(f, s.v.size());
    put_bytes(f, s.v.data(), s.v.size() * 8);
    for (const auto v : rng_state) put_u64(f, v);
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, NetParams& p, AdamState& s,
                     std::array<std::uint64_t, 4>& rng_state) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    get_bytes(f, magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    p = make_arch(1.0);
    auto tensors = named_tensors(p);
    const std::uint64_t count = get_u64(f);
    if (count != tensors.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (auto& [name, vec] : tensors) {
        const std::uint64_t name_len = get_u64(f);
        std::string got(name_len, '\0');
        get_bytes(f, got.data(), name_len);
        if (got != name) throw std::runtime_error("checkpoint: unexpected tensor " + got);
        const std::uint64_t n = get_u64(f);
        if (n != vec->size()) throw std::runtime_error("checkpoint: size mismatch for " + got);
        get_bytes(f, vec->data(), n * 8);
    }
    s.lr = get_f64(f);
    s.beta1 = get_f64(f);
    s.beta2 = get_f64(f);
    s.eps = get_f64(f);
    s.step = static_cast<std::int64_t>(get_u64(f));
    s.m.resize(get_u64(f));
    get_bytes(f, s.m.data(), s.m.size() * 8);
    s.v.resize(get_u64(f));
    get_bytes(f, s.v.data(), s.v.size() * 8);
    for (auto& v : rng_state) v = get_u64(f);
}

}  // namespace wsseg
