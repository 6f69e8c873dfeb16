/**
 * @file toy_adapt.cpp
 * @brief Toy adversarial domain adaptation trainer
 */

#include "falce/toy_adapt.hpp"
#include "falce/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <string>

namespace falce::daod {

namespace {

constexpr std::uint64_t kInitStream = 0x9E3779B97F4A7C15ULL;

std::vector<DomainSample> feature_samples(const ToyAdaptState& s, std::span<const Point2> pts) {
    std::vector<DomainSample> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        const auto f = s.features(p);
        out.push_back({{f.x, f.y}, {}});
    }
    return out;
}

std::vector<Point2> points_of(std::span<const LabeledPoint> pts) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(p.p);
    return out;
}

/// Softmax class probabilities for a feature vector.
std::vector<double> softmax_head(const ToyAdaptState& s, Point2 f) {
    const auto c = static_cast<std::size_t>(s.num_classes);
    std::vector<double> z(c);
    for (std::size_t k = 0; k < c; ++k) z[k] = s.head_weights[2 * k] * f.x + s.head_weights[2 * k + 1] * f.y + s.head_bias[k];
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) sum += (v = std::exp(v - mx));
    for (auto& v : z) v /= sum;
    return z;
}

bool all_finite(const ToyAdaptState& s) {
    const auto fin = [](double v) { return std::isfinite(v); };
    return std::all_of(s.feature_weights.begin(), s.feature_weights.end(), fin) &&
           std::all_of(s.feature_bias.begin(), s.feature_bias.end(), fin) &&
           std::all_of(s.head_weights.begin(), s.head_weights.end(), fin) &&
           std::all_of(s.head_bias.begin(), s.head_bias.end(), fin) &&
           std::all_of(s.discriminator.weights.begin(), s.discriminator.weights.end(), fin) &&
           fin(s.discriminator.bias);
}

}  // namespace

ToyDomains make_gaussian_domains(const GaussianDomainSpec& spec, std::uint64_t seed) {
    if (spec.train_per_domain < 1 || spec.heldout_per_domain < 0) {
        throw InvalidArgument("domain sizes must be positive");
    }
    if (!(spec.sigma >= 0.0)) throw InvalidArgument("sigma must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spec.sigma);
    const auto draw = [&](int n, Point2 shift) {
        std::vector<LabeledPoint> pts;
        pts.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int label = i % 2;
            const double cx = label == 0 ? -spec.class_offset : spec.class_offset;
            const double x = cx + noise(rng) + shift.x;
            const double y = noise(rng) + shift.y;
            pts.push_back({{x, y}, label});
        }
        return pts;
    };
    ToyDomains d;
    d.source_train = draw(spec.train_per_domain, {});
    d.target_train = points_of(draw(spec.train_per_domain, spec.target_shift));
    d.source_heldout = draw(spec.heldout_per_domain, {});
    d.target_heldout = points_of(draw(spec.heldout_per_domain, spec.target_shift));
    return d;
}

void ToyAdaptConfig::validate() const {
    if (steps < 0) throw InvalidArgument("steps must be >= 0");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be a positive finite number");
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw InvalidArgument("lambda1 must be >= 0");
    if (instances_per_image < 1) throw InvalidArgument("instances_per_image must be >= 1");
}

Point2 ToyAdaptState::features(Point2 x) const {
    const auto& w = feature_weights;
    return {w[0] * x.x + w[1] * x.y + feature_bias[0], w[2] * x.x + w[3] * x.y + feature_bias[1]};
}

int ToyAdaptState::predict(Point2 x) const {
    const auto p = softmax_head(*this, features(x));
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double ToyAdaptState::source_prob(Point2 x) const {
    const auto f = features(x);
    return discriminator.prob({{f.x, f.y}, {}});
}

double discriminator_accuracy(const ToyAdaptState& state, std::span<const LabeledPoint> source,
                              std::span<const Point2> target) {
    const std::size_t n = source.size() + target.size();
    if (n == 0) return 0.0;
    std::size_t hit = 0;
    for (const auto& p : source) hit += state.source_prob(p.p) > 0.5 ? 1 : 0;
    for (const auto& p : target) hit += state.source_prob(p) <= 0.5 ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(n);
}

double class_accuracy(const ToyAdaptState& state, std::span<const LabeledPoint> source) {
    if (source.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& p : source) hit += state.predict(p.p) == p.label ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(source.size());
}

ToyAdaptState toy_adapt(std::span<const LabeledPoint> source, std::span<const Point2> target,
                        const ToyAdaptConfig& cfg, const ToyEvalSet& eval) {
    cfg.validate();
    if (source.empty() || target.empty()) throw InvalidArgument("both domains must be non-empty");
    std::set<int> classes;
    for (const auto& p : source) {
        if (p.label < 0) throw InvalidArgument("class labels must be >= 0");
        classes.insert(p.label);
    }
    if (classes.size() < 2) throw InvalidArgument("source must contain at least two classes");

    ToyAdaptState s;
    s.num_classes = *classes.rbegin() + 1;
    const auto nc = static_cast<std::size_t>(s.num_classes);
    {
        std::mt19937_64 rng(cfg.seed ^ kInitStream);
        std::normal_distribution<double> g(0.0, 0.1);
        s.feature_weights = {1.0 + g(rng), g(rng), g(rng), 1.0 + g(rng)};
        s.head_weights.resize(2 * nc);
        for (auto& w : s.head_weights) w = g(rng);
        s.head_bias.assign(nc, 0.0);
        s.discriminator.weights = {g(rng), g(rng)};
    }

    const auto src_pts = points_of(source);
    const double ns = static_cast<double>(source.size());
    const double dis_scale = static_cast<double>(cfg.instances_per_image) /
                             static_cast<double>(source.size() + target.size());

    for (int step = 1; step <= cfg.steps; ++step) {
        // Generator update: (W, b, head) descend L_det - lambda1 * L_dis.
        auto fs = feature_samples(s, src_pts);
        auto ft = feature_samples(s, target);
        const double l_dis = dis_scale * eagr_disc_loss(fs, ft, s.discriminator);
        const auto gd = eagr_disc_loss_grad(fs, ft, s.discriminator);

        double l_det = 0.0;
        std::array<double, 4> g_w{};
        std::array<double, 2> g_b{};
        std::vector<double> g_hw(2 * nc, 0.0);
        std::vector<double> g_hb(nc, 0.0);
        const auto add_feature_grad = [&](Point2 x, double gx, double gy) {
            g_w[0] += gx * x.x;
            g_w[1] += gx * x.y;
            g_w[2] += gy * x.x;
            g_w[3] += gy * x.y;
            g_b[0] += gx;
            g_b[1] += gy;
        };
        for (std::size_t i = 0; i < source.size(); ++i) {
            const Point2 f{fs[i].feature[0], fs[i].feature[1]};
            const auto p = softmax_head(s, f);
            const auto y = static_cast<std::size_t>(source[i].label);
            l_det -= std::log(std::max(p[y], 1e-300)) / ns;
            double gfx = 0.0;
            double gfy = 0.0;
            for (std::size_t k = 0; k < nc; ++k) {
                const double dz = (p[k] - (k == y ? 1.0 : 0.0)) / ns;
                g_hw[2 * k] += dz * f.x;
                g_hw[2 * k + 1] += dz * f.y;
                g_hb[k] += dz;
                gfx += dz * s.head_weights[2 * k];
                gfy += dz * s.head_weights[2 * k + 1];
            }
            gfx -= cfg.lambda1 * dis_scale * gd.source_inputs[i][0];
            gfy -= cfg.lambda1 * dis_scale * gd.source_inputs[i][1];
            add_feature_grad(src_pts[i], gfx, gfy);
        }
        for (std::size_t i = 0; i < target.size(); ++i) {
            add_feature_grad(target[i], -cfg.lambda1 * dis_scale * gd.target_inputs[i][0],
                             -cfg.lambda1 * dis_scale * gd.target_inputs[i][1]);
        }
        if (!std::isfinite(l_det) || !std::isfinite(l_dis)) {
            throw NumericalError("toy_adapt: non-finite loss at step " + std::to_string(step));
        }
        for (std::size_t k = 0; k < 4; ++k) s.feature_weights[k] -= cfg.lr * g_w[k];
        for (std::size_t k = 0; k < 2; ++k) s.feature_bias[k] -= cfg.lr * g_b[k];
        for (std::size_t k = 0; k < g_hw.size(); ++k) s.head_weights[k] -= cfg.lr * g_hw[k];
        for (std::size_t k = 0; k < nc; ++k) s.head_bias[k] -= cfg.lr * g_hb[k];

        // Discriminator update on the refreshed features: descend L_dis.
        fs = feature_samples(s, src_pts);
        ft = feature_samples(s, target);
        const auto gu = eagr_disc_loss_grad(fs, ft, s.discriminator);
        for (std::size_t k = 0; k < s.discriminator.weights.size(); ++k) {
            s.discriminator.weights[k] -= cfg.lr * dis_scale * gu.weights[k];
        }
        s.discriminator.bias -= cfg.lr * dis_scale * gu.bias;

        if (!all_finite(s)) throw NumericalError("toy_adapt: non-finite parameters at step " + std::to_string(step));
        s.steps = step;
        const double dis_terms[] = {l_dis};
        s.history.push_back({step, l_det, l_dis, total_loss(l_det, dis_terms, 0.0, 0.0, cfg.lambda1, 0.0),
                             discriminator_accuracy(s, eval.source, eval.target), class_accuracy(s, eval.source)});
    }
    return s;
}

ToyAdaptState run_toy_demo(const GaussianDomainSpec& spec, const ToyAdaptConfig& cfg) {
    const auto d = make_gaussian_domains(spec, cfg.seed);
    return toy_adapt(d.source_train, d.target_train, cfg, {d.source_heldout, d.target_heldout});
}

void write_history_csv(const std::vector<ToyStepRecord>& history, std::ostream& out) {
    out << "step,l_det,l_dis,l_total,disc_acc,class_acc\n";
    out << std::setprecision(10);
    for (const auto& r : history) {
        out << r.step << ',' << r.l_det << ',' << r.l_dis << ',' << r.l_total << ',' << r.disc_acc << ','
            << r.class_acc << '\n';
    }
}

void write_history_csv(const std::vector<ToyStepRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    write_history_csv(history, out);
    if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace falce::daod
