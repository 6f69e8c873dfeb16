/**
 * @file toy_adapt.hpp
 * @brief Adversarial min-max trainer on synthetic 2-D domains
 *
 * Feature map f(x) = W x + b (2 -> 2), softmax class head on f, logistic
 * domain discriminator on f. Each step the feature map and head descend
 * L_det - lambda1 * L_dis, then the discriminator descends L_dis on the
 * updated features. Plain full-batch gradient descent.
 */
#pragma once

#include "falce/daod.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

namespace falce::daod {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct LabeledPoint {
    Point2 p;
    int label = 0;
};

/// Two-class Gaussian source with means (-offset, 0) and (+offset, 0); the target
/// is the same mixture translated by target_shift. Labels alternate 0, 1, 0, ...
struct GaussianDomainSpec {
    double class_offset = 1.0;
    double sigma = 0.3;
    Point2 target_shift{2.0, 2.0};
    int train_per_domain = 200;
    int heldout_per_domain = 200;
};

struct ToyDomains {
    std::vector<LabeledPoint> source_train;
    std::vector<Point2> target_train;
    std::vector<LabeledPoint> source_heldout;
    std::vector<Point2> target_heldout;
};

ToyDomains make_gaussian_domains(const GaussianDomainSpec& spec, std::uint64_t seed);

struct ToyAdaptConfig {
    int steps = 2000;
    double lr = 0.05;
    double lambda1 = kDefaultLambda1;
    std::uint64_t seed = 7;
    /// L_dis is the per-sample discriminator loss summed over this many instances
    /// per image and averaged over images.
    int instances_per_image = 10;

    void validate() const;
};

/// One history row. Losses are taken before the step's updates, accuracies after.
struct ToyStepRecord {
    int step = 0;
    double l_det = 0.0;
    double l_dis = 0.0;
    double l_total = 0.0;
    double disc_acc = 0.0;
    double class_acc = 0.0;
};

struct ToyAdaptState {
    std::array<double, 4> feature_weights{};  // row-major 2x2
    std::array<double, 2> feature_bias{};
    std::vector<double> head_weights;  // num_classes x 2
    std::vector<double> head_bias;
    LinearDiscriminator discriminator;
    int num_classes = 0;
    int steps = 0;
    std::vector<ToyStepRecord> history;

    Point2 features(Point2 x) const;
    int predict(Point2 x) const;
    /// Discriminator P(source) for a raw input point.
    double source_prob(Point2 x) const;
};

/// Points evaluated after every step for the accuracy columns; may be empty.
struct ToyEvalSet {
    std::span<const LabeledPoint> source;
    std::span<const Point2> target;
};

/// Throws InvalidArgument for empty domains or fewer than two source classes and
/// NumericalError (naming the step) when a loss becomes non-finite.
ToyAdaptState toy_adapt(std::span<const LabeledPoint> source, std::span<const Point2> target,
                        const ToyAdaptConfig& cfg, const ToyEvalSet& eval = {});

/// Fraction of source points scored > 0.5 plus target points scored <= 0.5.
double discriminator_accuracy(const ToyAdaptState& state, std::span<const LabeledPoint> source,
                              std::span<const Point2> target);

double class_accuracy(const ToyAdaptState& state, std::span<const LabeledPoint> source);

/// Generates domains from `spec` with cfg.seed and trains on them, evaluating on the held-out split.
ToyAdaptState run_toy_demo(const GaussianDomainSpec& spec, const ToyAdaptConfig& cfg);

void write_history_csv(const std::vector<ToyStepRecord>& history, std::ostream& out);
void write_history_csv(const std::vector<ToyStepRecord>& history, const std::filesystem::path& path);

}  // namespace falce::daod
