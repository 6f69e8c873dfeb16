/**
 * @file daod.cpp
 * @brief Domain-adaptive detection losses and their gradients
 */

#include "falce/daod.hpp"
#include "falce/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace falce::daod {

double clamp_prob(double p) noexcept {
    return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

double sigmoid(double s) noexcept {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

namespace {

/// Derivative of the clamp: zero where the clamp is active.
bool inside_clamp(double p) noexcept {
    return p >= kProbEpsilon && p <= 1.0 - kProbEpsilon;
}

/// d/dp of -[D log p + (1 - D) log(1 - p)] at the clamped probability.
double bce_grad(double p, int label) noexcept {
    if (!inside_clamp(p)) return 0.0;
    return label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

double bce(double p, int label) noexcept {
    const double q = clamp_prob(p);
    return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double sign(double v) noexcept {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

double mean_activation(const DomainImage& img) {
    double s = 0.0;
    for (double a : img.activations) s += clamp_prob(a);
    return s / static_cast<double>(img.activations.size());
}

DomainBatchGradient zeros_like(const DomainBatch& batch) {
    DomainBatchGradient g;
    for (const auto& img : batch.images) {
        g.activations.emplace_back(img.activations.size(), 0.0);
        g.instance_probs.emplace_back(img.instance_probs.size(), 0.0);
    }
    return g;
}

void check_probability(double p, const char* what, std::size_t image) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument(std::string(what) + " of image " + std::to_string(image) + " outside [0, 1]");
    }
}

}  // namespace

double iou(const BBox& a, const BBox& b) noexcept {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Proposal> pim_filter(std::span<const Proposal> candidates, std::span<const Proposal> accepted,
                                 double tau) {
    std::vector<Proposal> out;
    for (const auto& c : candidates) {
        if (!(c.objectness > tau)) continue;
        const bool clash = std::any_of(accepted.begin(), accepted.end(), [&](const Proposal& a) {
            return a == c || iou(a.box, c.box) > 0.0;
        });
        if (!clash) out.push_back(c);
    }
    return out;
}

void DomainBatch::validate() const {
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        if (img.domain_label != 0 && img.domain_label != 1) {
            throw InvalidArgument("domain label of image " + std::to_string(i) + " must be 0 or 1");
        }
        if (img.activations.empty()) {
            throw InvalidArgument("image " + std::to_string(i) + " has an empty activation map");
        }
        for (double a : img.activations) check_probability(a, "activation", i);
        for (double p : img.instance_probs) check_probability(p, "instance probability", i);
    }
}

double image_domain_loss(const DomainBatch& batch) {
    batch.validate();
    double loss = 0.0;
    for (const auto& img : batch.images) {
        double s = 0.0;
        for (double a : img.activations) s += bce(a, img.domain_label);
        loss += s / static_cast<double>(img.activations.size());
    }
    return loss;
}

double instance_domain_loss(const DomainBatch& batch) {
    batch.validate();
    double loss = 0.0;
    for (const auto& img : batch.images) {
        for (double p : img.instance_probs) loss += bce(p, img.domain_label);
    }
    return loss;
}

double consistency_loss(const DomainBatch& batch) {
    batch.validate();
    double loss = 0.0;
    for (const auto& img : batch.images) {
        const double m = mean_activation(img);
        for (double p : img.instance_probs) loss += std::abs(m - clamp_prob(p));
    }
    return loss;
}

DomainBatchGradient image_domain_loss_grad(const DomainBatch& batch) {
    batch.validate();
    auto g = zeros_like(batch);
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
        const auto& img = batch.images[i];
        const double k = static_cast<double>(img.activations.size());
        for (std::size_t j = 0; j < img.activations.size(); ++j) {
            g.activations[i][j] = bce_grad(img.activations[j], img.domain_label) / k;
        }
    }
    return g;
}

DomainBatchGradient instance_domain_loss_grad(const DomainBatch& batch) {
    batch.validate();
    auto g = zeros_like(batch);
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
        const auto& img = batch.images[i];
        for (std::size_t j = 0; j < img.instance_probs.size(); ++j) {
            g.instance_probs[i][j] = bce_grad(img.instance_probs[j], img.domain_label);
        }
    }
    return g;
}

DomainBatchGradient consistency_loss_grad(const DomainBatch& batch) {
    batch.validate();
    auto g = zeros_like(batch);
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
        const auto& img = batch.images[i];
        const double m = mean_activation(img);
        double dm = 0.0;
        for (std::size_t j = 0; j < img.instance_probs.size(); ++j) {
            const double p = img.instance_probs[j];
            const double s = sign(m - clamp_prob(p));
            dm += s;
            g.instance_probs[i][j] = inside_clamp(p) ? -s : 0.0;
        }
        const double k = static_cast<double>(img.activations.size());
        for (std::size_t j = 0; j < img.activations.size(); ++j) {
            g.activations[i][j] = inside_clamp(img.activations[j]) ? dm / k : 0.0;
        }
    }
    return g;
}

RelationMatrix::RelationMatrix(int size, std::vector<double> entries) : size_(size), entries_(std::move(entries)) {
    if (size < 1) throw InvalidArgument("relation matrix needs at least one class");
    if (entries_.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size)) {
        throw DimensionMismatch("relation matrix of size " + std::to_string(size) + " needs " +
                                std::to_string(size * size) + " entries");
    }
    for (int r = 0; r < size; ++r) {
        double s = 0.0;
        for (int c = 0; c < size; ++c) {
            const double v = at(r, c);
            if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("relation matrix entries must be finite and >= 0");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw InvalidArgument("relation matrix row " + std::to_string(r) + " does not sum to 1");
        }
    }
}

RelationMatrix RelationMatrix::uniform(int size) {
    if (size < 1) throw InvalidArgument("relation matrix needs at least one class");
    return RelationMatrix(size, std::vector<double>(static_cast<std::size_t>(size) * size, 1.0 / size));
}

RelationMatrix build_relation_matrix(std::span<const ClassFeature> features, int num_classes) {
    if (num_classes < 1) throw InvalidArgument("num_classes must be >= 1");
    if (features.empty()) throw InvalidArgument("relation matrix needs at least one feature");
    const std::size_t dim = features.front().feature.size();
    if (dim == 0) throw InvalidArgument("features must be non-empty vectors");

    const auto n = static_cast<std::size_t>(num_classes);
    std::vector<std::vector<double>> proto(n, std::vector<double>(dim, 0.0));
    std::vector<int> count(n, 0);
    for (const auto& f : features) {
        if (f.label < 0 || f.label >= num_classes) {
            throw InvalidArgument("class label " + std::to_string(f.label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        if (f.feature.size() != dim) throw DimensionMismatch("features have inconsistent dimensions");
        auto& p = proto[static_cast<std::size_t>(f.label)];
        for (std::size_t d = 0; d < dim; ++d) p[d] += f.feature[d];
        ++count[static_cast<std::size_t>(f.label)];
    }
    std::vector<double> norm(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        if (count[c] == 0) continue;
        for (auto& v : proto[c]) v /= count[c];
        double s = 0.0;
        for (double v : proto[c]) s += v * v;
        norm[c] = std::sqrt(s);
    }

    std::vector<double> entries(n * n, 1.0 / num_classes);
    std::vector<double> cosine(n);
    for (std::size_t r = 0; r < n; ++r) {
        if (count[r] == 0) continue;
        for (std::size_t c = 0; c < n; ++c) {
            if (count[c] == 0 || norm[r] == 0.0 || norm[c] == 0.0) {
                cosine[c] = 0.0;
                continue;
            }
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += proto[r][d] * proto[c][d];
            cosine[c] = dot / (norm[r] * norm[c]);
        }
        const double mx = *std::max_element(cosine.begin(), cosine.end());
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) z += std::exp(cosine[c] - mx);
        for (std::size_t c = 0; c < n; ++c) entries[r * n + c] = std::exp(cosine[c] - mx) / z;
    }
    return RelationMatrix(num_classes, std::move(entries));
}

RelationMatrix update_grm(const RelationMatrix& grm, const RelationMatrix& lrm, double momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
    if (grm.size() != lrm.size()) throw DimensionMismatch("relation matrices differ in size");
    const int n = grm.size();
    std::vector<double> e(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) {
            const double v = momentum * grm.at(r, c) + (1.0 - momentum) * lrm.at(r, c);
            e[static_cast<std::size_t>(r) * n + c] = v;
            s += v;
        }
        for (int c = 0; c < n; ++c) e[static_cast<std::size_t>(r) * n + c] /= s;
    }
    return RelationMatrix(n, std::move(e));
}

double mgrm_loss(const RelationMatrix& lrm, const RelationMatrix& grm, const std::set<int>& present) {
    if (lrm.size() != grm.size()) throw DimensionMismatch("relation matrices differ in size");
    if (present.empty()) throw InvalidArgument("relation loss needs at least one present class");
    double loss = 0.0;
    for (int r : present) {
        if (r < 0 || r >= lrm.size()) throw InvalidArgument("present class " + std::to_string(r) + " out of range");
        for (int c = 0; c < lrm.size(); ++c) loss += std::abs(lrm.at(r, c) - grm.at(r, c));
    }
    return loss / static_cast<double>(present.size());
}

double LinearDiscriminator::score(const DomainSample& s) const {
    if (s.dim() != weights.size()) {
        throw DimensionMismatch("discriminator expects " + std::to_string(weights.size()) + " inputs, got " +
                                std::to_string(s.dim()));
    }
    const std::size_t nf = s.feature.size();
    double z = bias;
    for (std::size_t d = 0; d < nf; ++d) z += weights[d] * s.feature[d];
    for (std::size_t d = 0; d < s.logits.size(); ++d) z += weights[nf + d] * s.logits[d];
    return z;
}

double eagr_disc_loss(std::span<const DomainSample> src, std::span<const DomainSample> tgt,
                      const LinearDiscriminator& dis) {
    if (src.empty() || tgt.empty()) throw InvalidArgument("discriminator loss needs source and target samples");
    double loss = 0.0;
    for (const auto& s : src) loss += bce(dis.prob(s), 1);
    for (const auto& s : tgt) loss += bce(dis.prob(s), 0);
    return loss;
}

DiscriminatorGradient eagr_disc_loss_grad(std::span<const DomainSample> src, std::span<const DomainSample> tgt,
                                          const LinearDiscriminator& dis) {
    if (src.empty() || tgt.empty()) throw InvalidArgument("discriminator loss needs source and target samples");
    DiscriminatorGradient g;
    g.weights.assign(dis.weights.size(), 0.0);
    const auto accumulate = [&](const DomainSample& s, int label, std::vector<std::vector<double>>& inputs) {
        const double p = dis.prob(s);
        // Chain through sigmoid: dp/dz = p (1 - p).
        const double dz = bce_grad(p, label) * p * (1.0 - p);
        const std::size_t nf = s.feature.size();
        std::vector<double> dx(s.dim());
        for (std::size_t d = 0; d < dx.size(); ++d) {
            const double x = d < nf ? s.feature[d] : s.logits[d - nf];
            g.weights[d] += dz * x;
            dx[d] = dz * dis.weights[d];
        }
        g.bias += dz;
        inputs.push_back(std::move(dx));
    };
    for (const auto& s : src) accumulate(s, 1, g.source_inputs);
    for (const auto& s : tgt) accumulate(s, 0, g.target_inputs);
    return g;
}

double total_loss(double l_det, std::span<const double> dis_losses, double l_mgrm, double l_eagr, double lambda1,
                  double lambda2) {
    double dis = 0.0;
    for (double d : dis_losses) dis += d;
    return l_det + lambda1 * dis + lambda2 * l_mgrm + l_eagr;
}

}  // namespace falce::daod
